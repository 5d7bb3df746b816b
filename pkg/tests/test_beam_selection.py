import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from visbeam.beam_selection import (
    BeamRanking,
    rank_beams,
    reduce_search_space,
    reduce_search_space_exact,
    topn_accuracy,
)
from visbeam.regions import PixelRegion
from visbeam.geometry import BeamLayout, CameraModel
from visbeam.channel import ArrayConfig, BeamCodebook
from visbeam.scene import shape_mask

_LAYOUT = BeamLayout(BeamCodebook.uniform(16, (-45.0, 45.0), ArrayConfig()), CameraModel(160, 90, (110.0, -300.0)))


def test_candidates_are_the_touched_footprints(small_layout):
    mask = PixelRegion.from_box(160, 90, (40, 30, 70, 60))
    cand = reduce_search_space(mask, small_layout)
    assert cand.indices == reduce_search_space_exact(mask, small_layout).indices
    touched = set(np.unique(small_layout.labels[mask.to_dense()]))
    assert set(cand.indices) == touched - {-1}
    assert len(cand) == len(touched - {-1})


def test_ranking_orders_by_overlap(small_layout):
    mask = shape_mask((40, 30, 90, 60), "ellipse", 1.0, 160, 90)
    overlaps = small_layout.overlaps(mask)
    cand = reduce_search_space(mask, small_layout, overlaps)
    r = rank_beams(mask, cand, small_layout, 5, overlaps)
    assert len(r.beams) == min(5, len(cand))
    assert all(q in cand for q in r.beams)
    assert r.scores == sorted(r.scores, reverse=True)
    assert r.beams[0] == int(np.argmax(overlaps))


def test_empty_candidates_fall_back_to_distance(small_layout):
    mask = PixelRegion.from_box(160, 90, (75, 40, 80, 45))
    empty = reduce_search_space(PixelRegion.empty(160, 90), small_layout)
    r = rank_beams(mask, empty, small_layout, 3)
    assert len(r.beams) == 3
    with pytest.raises(ValueError):
        rank_beams(PixelRegion.empty(160, 90), empty, small_layout, 3)
    with pytest.raises(ValueError):
        rank_beams(mask, empty, small_layout, 0)


@settings(max_examples=60)
@given(st.integers(0, 140), st.integers(0, 70), st.integers(3, 60), st.integers(3, 40))
def test_topn_non_decreasing(x, y, w, h):
    small_layout = _LAYOUT
    mask = shape_mask((x, y, x + w, y + h), "ellipse", 1.0, 160, 90)
    if not mask:
        return
    cand = reduce_search_space(mask, small_layout)
    r = rank_beams(mask, cand, small_layout, 5)
    gt = [int(q) for q in range(small_layout.size)]
    accs = [topn_accuracy([r] * len(gt), gt, n) for n in (1, 2, 3, 4, 5)]
    assert accs == sorted(accs)


def test_topn_accuracy_basics():
    r = BeamRanking([3, 1, 2], [5, 4, 3])
    assert topn_accuracy([r, r], [3, 2], 1) == 0.5
    assert topn_accuracy([r, r], [3, 2], 3) == 1.0
    assert topn_accuracy([], [], 1) is None
    assert topn_accuracy([None], [3], 5) == 0.0

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from visbeam.regions import PixelRegion, region_overlap

masks = arrays(np.bool_, st.tuples(st.integers(1, 12), st.integers(1, 12)))


@given(masks)
def test_dense_round_trip(dense):
    r = PixelRegion.from_dense(dense)
    assert np.array_equal(r.to_dense(), dense)
    assert r.area == dense.sum()


@given(st.data())
def test_set_operations_match_dense(data):
    h = data.draw(st.integers(1, 10))
    w = data.draw(st.integers(1, 10))
    a = data.draw(arrays(np.bool_, (h, w)))
    b = data.draw(arrays(np.bool_, (h, w)))
    ra, rb = PixelRegion.from_dense(a), PixelRegion.from_dense(b)
    assert ra.intersection_count(rb) == (a & b).sum()
    assert region_overlap(ra, rb) == (a & b).sum()
    assert np.array_equal(ra.intersection(rb).to_dense(), a & b)
    assert np.array_equal(ra.union(rb).to_dense(), a | b)


def test_overlapping_runs_are_merged():
    r = PixelRegion(10, 2, [0, 0, 0, 1], [0, 2, 3, 5], [3, 4, 6, 6])
    assert list(r.starts) == [0, 5]
    assert list(r.stops) == [6, 6]
    assert r.area == 7


def test_from_box_uses_pixel_centers_half_open():
    r = PixelRegion.from_box(10, 10, (0.5, 0.0, 2.5, 1.0))
    # centers 0.5 and 1.5 lie in [0.5, 2.5); 2.5 does not
    assert sorted(zip(*r.pixels())) == [(0, 0), (0, 1)]
    assert PixelRegion.from_box(10, 10, (-5, -5, 20, 20)).area == 100
    assert not PixelRegion.from_box(10, 10, (3.0, 3.0, 3.4, 9.0))


def test_centroid_and_bounds():
    dense = np.zeros((6, 8), dtype=bool)
    dense[1:3, 2:6] = True
    r = PixelRegion.from_dense(dense)
    assert r.centroid() == pytest.approx((4.0, 2.0))
    assert r.bounds() == (2, 1, 6, 3)
    assert PixelRegion.empty(4, 4).bounds() is None


@settings(max_examples=50)
@given(masks, st.data())
def test_contains_matches_dense(dense, data):
    r = PixelRegion.from_dense(dense)
    h, w = dense.shape
    rows = np.array(data.draw(st.lists(st.integers(0, h - 1), min_size=1, max_size=20)))
    cols = np.array(data.draw(st.lists(st.integers(0, w - 1), min_size=len(rows), max_size=len(rows))))
    assert np.array_equal(r.contains(rows, cols), dense[rows, cols])


def test_grid_mismatch_raises():
    with pytest.raises(ValueError):
        PixelRegion.empty(4, 4).intersection_count(PixelRegion.empty(5, 4))

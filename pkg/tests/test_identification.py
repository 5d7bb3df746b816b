import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from visbeam.channel import PowerProfile
from visbeam.identification import (
    VoteState,
    build_power_raster,
    identification_accuracy,
    identify_tx_frame,
    identify_tx_vote,
    iou,
    score_object,
)
from visbeam.regions import PixelRegion
from visbeam.scene import DepthMap, Detection, FrameObservation


def _frame(layout, power, boxes):
    cam = layout.camera
    dets = [Detection(i, b, PixelRegion.from_box(cam.width, cam.height, b)) for i, b in boxes.items()]
    return FrameObservation(0, dets, DepthMap(cam.width, cam.height, [], 0.05), PowerProfile(power))


def test_raster_normalizes_by_peak(small_layout):
    power = np.arange(small_layout.size, dtype=float)
    r = build_power_raster(PowerProfile(power), small_layout)
    vals = r.values
    assert vals.max() == 1.0
    assert np.allclose(vals[small_layout.labels == 5], 5 / (small_layout.size - 1))
    zero = build_power_raster(PowerProfile(np.zeros(small_layout.size)), small_layout)
    assert not zero.values.any()
    with pytest.raises(ValueError):
        build_power_raster(PowerProfile(np.ones(3)), small_layout)


def test_brightest_object_wins(small_layout):
    power = np.zeros(small_layout.size)
    q = 12
    power[q] = 1.0
    lit = small_layout.region(q)
    x1, y1, x2, y2 = lit.bounds()
    frame = _frame(small_layout, power, {1: (0, 0, 10, 10), 2: ((x1 + x2) / 2 - 2, 40, (x1 + x2) / 2 + 2, 50)})
    assert identify_tx_frame(frame, small_layout) == 2


def test_ties_go_to_smaller_box_then_lower_id(small_layout):
    zero = np.zeros(small_layout.size)
    frame = _frame(small_layout, zero, {3: (0, 0, 20, 20), 7: (50, 50, 60, 60), 5: (100, 50, 110, 60)})
    assert identify_tx_frame(frame, small_layout) == 5
    assert identify_tx_frame(_frame(small_layout, zero, {}), small_layout) is None


def test_score_of_empty_mask_raises(small_layout):
    r = build_power_raster(PowerProfile(np.ones(small_layout.size)), small_layout)
    with pytest.raises(ValueError):
        score_object(PixelRegion.empty(160, 90), r)


def test_vote_majority_and_ties():
    assert identify_tx_vote([1, 2, 2]) == 2
    assert identify_tx_vote([3, 1, None]) == 1
    assert identify_tx_vote([None, None]) is None
    assert identify_tx_vote([1, 1, 2, 2, 2], m_frames=3) == 2
    v = VoteState(3)
    for x in (4, 4, 9, 9):
        v.push(x)
    assert v.full and v.result() == 9
    v.clear()
    assert not v.full


def test_iou_examples():
    assert iou((0, 0, 2, 2), (1, 1, 3, 3)) == pytest.approx(1 / 7)
    assert iou((0, 0, 1, 1), (2, 2, 3, 3)) == 0.0
    assert iou((0, 0, 1, 1), (0, 0, 1, 1)) == 1.0
    assert iou((0, 0, 0, 1), (0, 0, 1, 1)) == 0.0


boxes = st.tuples(st.floats(0, 50), st.floats(0, 50), st.floats(1, 50), st.floats(1, 50)).map(
    lambda t: (t[0], t[1], t[0] + t[2], t[1] + t[3])
)


@given(boxes, boxes)
def test_iou_symmetric_and_bounded(a, b):
    assert iou(a, b) == pytest.approx(iou(b, a))
    assert 0.0 <= iou(a, b) <= 1.0 + 1e-12


def test_accuracy_counts_misses():
    gt = [(0, 0, 10, 10)] * 4
    preds = [(0, 0, 10, 10), (0, 0, 10, 9), None, (20, 20, 30, 30)]
    assert identification_accuracy(preds, gt) == 0.5
    assert identification_accuracy([], []) is None

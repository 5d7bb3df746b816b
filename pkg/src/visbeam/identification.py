"""Transmitter identification from the power profile painted onto the image.

Every footprint pixel carries its beam's measured power, normalized by the
frame maximum. Each detected object is scored by the mean intensity under
its mask; the best-scoring object is the transmitter. Several frames can be
combined by majority vote.
"""

from __future__ import annotations

from collections import Counter, deque

import numpy as np

from .channel import PowerProfile
from .geometry import BeamLayout
from .regions import PixelRegion
from .scene import FrameObservation, bbox_area

DEFAULT_IOU_THRESHOLD = 0.5
VOTE_WINDOWS = (1, 3, 5)


class PowerRaster:
    """Normalized per-pixel power of one frame.

    Stored as per-beam intensities plus the layout's label map; ``values``
    expands to the dense height x width grid on demand.
    """

    def __init__(self, beam_intensity: np.ndarray, layout: BeamLayout):
        self.beam_intensity = np.asarray(beam_intensity, dtype=float)
        self.layout = layout
        # index -1 (outside every footprint) reads the trailing zero
        self._lookup = np.append(self.beam_intensity, 0.0)

    @property
    def width(self) -> int:
        return self.layout.camera.width

    @property
    def height(self) -> int:
        return self.layout.camera.height

    @property
    def values(self) -> np.ndarray:
        return self._lookup[self.layout.labels]

    def sample(self, rows, cols) -> np.ndarray:
        return self._lookup[self.layout.labels[rows, cols]]


def build_power_raster(profile: PowerProfile, layout: BeamLayout) -> PowerRaster:
    power = profile.per_beam_power
    if len(power) != layout.size:
        raise ValueError(f"profile has {len(power)} beams, layout has {layout.size} footprints")
    top = power.max() if len(power) else 0.0
    intensity = power / top if top > 0 else np.zeros_like(power)
    return PowerRaster(intensity, layout)


def score_object(mask: PixelRegion, raster: PowerRaster) -> float:
    """Mean raster intensity over the mask's pixels."""
    if not mask:
        raise ValueError("cannot score an empty mask")
    rows, cols = mask.pixels()
    return float(raster.sample(rows, cols).mean())


def identify_tx_frame(frame: FrameObservation, layout: BeamLayout, raster: PowerRaster | None = None):
    """Object id of the most likely transmitter, or None when nothing was detected.

    Ties go to the smaller box, then to the lower id.
    """
    if not frame.detections:
        return None
    if raster is None:
        raster = build_power_raster(frame.power_profile, layout)
    best = min(
        frame.detections,
        key=lambda d: (-score_object(d.mask, raster), bbox_area(d.bbox), d.object_id),
    )
    return best.object_id


def identify_tx_vote(votes, m_frames: int | None = None):
    """Most frequent id among the last ``m_frames`` votes (None entries are misses).

    Ties go to the lower id; returns None when every vote is a miss.
    """
    votes = list(votes)
    if m_frames is not None:
        votes = votes[-m_frames:]
    tally = Counter(v for v in votes if v is not None)
    if not tally:
        return None
    return min(tally, key=lambda k: (-tally[k], k))


class VoteState:
    """Sliding window over the last ``m_frames`` per-frame identifications."""

    def __init__(self, m_frames: int = 3):
        if m_frames < 1:
            raise ValueError("m_frames must be >= 1")
        self.m_frames = m_frames
        self.window = deque(maxlen=m_frames)

    def push(self, object_id) -> None:
        self.window.append(object_id)

    def result(self):
        return identify_tx_vote(self.window)

    @property
    def full(self) -> bool:
        return len(self.window) == self.m_frames

    def clear(self) -> None:
        self.window.clear()


def iou(a, b) -> float:
    """Intersection over union of two ``(x1, y1, x2, y2)`` boxes; 0 for degenerate boxes."""
    ax1, ay1, ax2, ay2 = a
    bx1, by1, bx2, by2 = b
    area_a = max(0.0, ax2 - ax1) * max(0.0, ay2 - ay1)
    area_b = max(0.0, bx2 - bx1) * max(0.0, by2 - by1)
    if area_a <= 0 or area_b <= 0:
        return 0.0
    iw = max(0.0, min(ax2, bx2) - max(ax1, bx1))
    ih = max(0.0, min(ay2, by2) - max(ay1, by1))
    inter = iw * ih
    return inter / (area_a + area_b - inter)


def identification_accuracy(predictions, ground_truth, z: float = DEFAULT_IOU_THRESHOLD):
    """Fraction of samples whose predicted box reaches IoU >= z with the truth.

    A None prediction is a miss. Returns None for an empty input.
    """
    predictions = list(predictions)
    ground_truth = list(ground_truth)
    if len(predictions) != len(ground_truth):
        raise ValueError("predictions and ground truth must be aligned")
    if not predictions:
        return None
    hits = sum(1 for p, g in zip(predictions, ground_truth) if p is not None and iou(p, g) >= z)
    return hits / len(predictions)

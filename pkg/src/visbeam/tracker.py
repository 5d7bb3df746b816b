"""IoU tracker with linear box extrapolation and frame-gap re-association.

Each track keeps its last F boxes, one per frame index. Motion is the mean
of consecutive box differences over that history, applied to all four
corners independently. The per-frame association step behaves like a plain
SORT-style tracker: it advances every track one step per processed frame,
whatever the frame index jump. When frames go missing, fast objects then
fail to match and come back under new ids; the bridging step extrapolates
the old tracks over the real gap and hands those ids back.
"""

from __future__ import annotations

import copy
import math
from collections import deque
from dataclasses import dataclass, field

import numpy as np

from .identification import iou
from .regions import PixelRegion

DEFAULT_HISTORY = 3
DEFAULT_TAU_MATCH = 0.3
DEFAULT_MAX_AGE = 10


class InsufficientHistory(ValueError):
    pass


class FrameOrderError(ValueError):
    pass


@dataclass
class Track:
    track_id: int
    history: deque
    mask: PixelRegion | None = None
    role: str = "object"
    misses: int = 0  # processed frames since the last match

    @classmethod
    def start(cls, track_id: int, frame: int, bbox, mask=None, history_len: int = DEFAULT_HISTORY) -> Track:
        h = deque(maxlen=history_len)
        h.append((int(frame), np.asarray(bbox, dtype=float)))
        return cls(track_id, h, mask)

    @property
    def last_seen_frame(self) -> int:
        return self.history[-1][0]

    @property
    def bbox(self) -> np.ndarray:
        return self.history[-1][1]

    def observe(self, frame: int, bbox, mask=None) -> None:
        """Append an observation, filling skipped frame indices by linear interpolation."""
        bbox = np.asarray(bbox, dtype=float)
        last_f, last_b = self.history[-1]
        if frame <= last_f:
            raise FrameOrderError(f"track {self.track_id}: frame {frame} not after {last_f}")
        gap = frame - last_f
        first_fill = max(last_f + 1, frame - self.history.maxlen)
        for g in range(first_fill, frame):
            self.history.append((g, last_b + (bbox - last_b) * ((g - last_f) / gap)))
        self.history.append((int(frame), bbox))
        if mask is not None:
            self.mask = mask
        self.misses = 0


def avg_displacement(track: Track) -> np.ndarray:
    """Mean per-frame change of (x1, y1, x2, y2) over the stored history."""
    if len(track.history) < 2:
        raise InsufficientHistory(f"track {track.track_id} has {len(track.history)} box(es), need 2")
    boxes = np.stack([b for _, b in track.history])
    return np.diff(boxes, axis=0).mean(axis=0)


def extrapolate(track: Track, s: int) -> np.ndarray:
    """Box predicted ``s`` frames after the latest observation."""
    if s < 1:
        raise ValueError(f"frames-ahead must be >= 1, got {s}")
    return track.bbox + s * avg_displacement(track)


def predict_box(track: Track, s: int) -> np.ndarray:
    """Like ``extrapolate`` but a single-box track is assumed static."""
    if len(track.history) < 2 or s <= 0:
        return track.bbox.copy()
    return extrapolate(track, s)


def warp_mask(mask: PixelRegion, from_bbox, to_bbox) -> PixelRegion:
    """Refit a mask from one box into another by axis scaling and translation.

    Each target pixel center is mapped back into the source box and kept when
    it lands on a source mask pixel.
    """
    fx1, fy1, fx2, fy2 = (float(v) for v in from_bbox)
    tx1, ty1, tx2, ty2 = (float(v) for v in to_bbox)
    if fx2 <= fx1 or fy2 <= fy1:
        raise ValueError(f"degenerate source box {from_bbox}")
    W, H = mask.width, mask.height
    if not mask or tx2 <= tx1 or ty2 <= ty1:
        return PixelRegion(W, H)
    sx = (fx2 - fx1) / (tx2 - tx1)
    sy = (fy2 - fy1) / (ty2 - ty1)
    # Candidate target pixels: the image of the mask's pixel extent.
    mx1, my1, mx2, my2 = mask.bounds()
    cx1 = tx1 + (mx1 - fx1) / sx
    cx2 = tx1 + (mx2 - fx1) / sx
    cy1 = ty1 + (my1 - fy1) / sy
    cy2 = ty1 + (my2 - fy1) / sy
    c0, c1 = max(0, math.floor(cx1) - 1), min(W, math.ceil(cx2) + 1)
    r0, r1 = max(0, math.floor(cy1) - 1), min(H, math.ceil(cy2) + 1)
    if c1 <= c0 or r1 <= r0:
        return PixelRegion(W, H)
    cols = np.arange(c0, c1)
    rows = np.arange(r0, r1)
    src_c = np.floor(fx1 + (cols + 0.5 - tx1) * sx).astype(np.int64)
    src_r = np.floor(fy1 + (rows + 0.5 - ty1) * sy).astype(np.int64)
    rr, cc = np.meshgrid(rows, cols, indexing="ij")
    sr, sc = np.meshgrid(src_r, src_c, indexing="ij")
    valid = (sr >= 0) & (sr < H) & (sc >= 0) & (sc < W)
    hit = np.zeros(rr.shape, dtype=bool)
    hit[valid] = mask.contains(sr[valid], sc[valid])
    dense_rows, dense_cols = rr[hit], cc[hit]
    return PixelRegion(W, H, dense_rows, dense_cols, dense_cols + 1)


def greedy_match(score: np.ndarray, threshold: float) -> list[tuple[int, int]]:
    """Repeatedly take the highest-scoring (row, col) pair at or above ``threshold``,
    one-to-one. Equal scores resolve in row-major order."""
    pairs = []
    if score.size == 0:
        return pairs
    s = score.astype(float).copy()
    while True:
        k = int(np.argmax(s))
        i, j = divmod(k, s.shape[1])
        if not s[i, j] >= threshold:
            break
        pairs.append((i, j))
        s[i, :] = -np.inf
        s[:, j] = -np.inf
    return pairs


@dataclass
class TrackerState:
    tau_match: float = DEFAULT_TAU_MATCH
    history_len: int = DEFAULT_HISTORY
    max_age: int = DEFAULT_MAX_AGE
    # bridge when the frame index jumps by at least this much ...
    gap_min_jump: int = 2
    # ... and fewer than this fraction of the previous frame's ids were seen again
    gap_reobserved_ratio: float = 1.0
    persistent_tracks: dict = field(default_factory=dict)
    candidate_tracks: dict = field(default_factory=dict)
    next_id: int = 1
    last_frame: int | None = None
    last_matched_ids: frozenset = frozenset()
    last_bridge: dict = field(default_factory=dict)

    def __post_init__(self):
        if not 0 < self.tau_match < 1:
            raise ValueError("tau_match must be in (0, 1)")
        if self.history_len < 2:
            raise ValueError("history length F must be >= 2 for extrapolation")

    def new_track(self, frame, bbox, mask) -> Track:
        t = Track.start(self.next_id, frame, bbox, mask, self.history_len)
        self.next_id += 1
        return t

    def merge_into(self, old: Track, candidate: Track) -> Track:
        """Continue ``old`` with the candidate's latest observation under the old id."""
        merged = copy.deepcopy(old)
        merged.history = deque(merged.history, maxlen=self.history_len)
        for f, b in candidate.history:
            if f > merged.last_seen_frame:
                merged.observe(f, b)
        merged.mask = candidate.mask
        merged.misses = 0
        return merged

    def adopt(self, candidate_id: int, old: Track) -> None:
        """Give the live track ``candidate_id`` the identity (and history) of ``old``."""
        if candidate_id == old.track_id:
            return
        cand = self.persistent_tracks.pop(candidate_id)
        self.persistent_tracks[old.track_id] = self.merge_into(old, cand)


def update_tracks(state: TrackerState, detections, frame: int) -> dict:
    """Associate one frame's detections; returns ``{detection index: track id}``."""
    if state.last_frame is not None and frame <= state.last_frame:
        raise FrameOrderError(f"frame {frame} is not after {state.last_frame}")
    jump = 1 if state.last_frame is None else frame - state.last_frame
    tracks = list(state.persistent_tracks.values())
    boxes = [np.asarray(d.bbox, dtype=float) for d in detections]
    score = np.array(
        [[iou(predict_box(t, t.misses + 1), b) for b in boxes] for t in tracks]
    ).reshape(len(tracks), len(boxes))
    assignments = {}
    matched_ids = set()
    for i, j in greedy_match(score, state.tau_match):
        t = tracks[i]
        t.observe(frame, boxes[j], detections[j].mask)
        assignments[j] = t.track_id
        matched_ids.add(t.track_id)

    unmatched = [j for j in range(len(detections)) if j not in assignments]
    prev = state.last_matched_ids
    reobserved = len(prev & matched_ids) / len(prev) if prev else 1.0
    gap = jump >= state.gap_min_jump and bool(prev) and reobserved < state.gap_reobserved_ratio
    state.last_bridge = {}
    new_tracks = {}
    for j in unmatched:
        t = state.new_track(frame, boxes[j], detections[j].mask)
        new_tracks[t.track_id] = t
        assignments[j] = t.track_id
    if gap and new_tracks:
        state.candidate_tracks = new_tracks
        mapping = bridge_gap(state, frame)
        for j, tid in list(assignments.items()):
            if tid in mapping:
                assignments[j] = mapping[tid]
                matched_ids.add(mapping[tid])
    else:
        state.persistent_tracks.update(new_tracks)

    for t in list(state.persistent_tracks.values()):
        if t.track_id in matched_ids or t.last_seen_frame == frame:
            continue
        t.misses += 1
        if t.misses > state.max_age:
            del state.persistent_tracks[t.track_id]
    state.last_frame = frame
    state.last_matched_ids = frozenset(assignments.values())
    return assignments


def bridge_gap(state: TrackerState, frame: int) -> dict:
    """Re-associate candidate tracks (new ids after a gap) with old persistent tracks.

    Old tracks are extrapolated over the real frame gap and paired greedily by
    IoU, one-to-one, above ``tau_match``. Paired candidates are folded into the
    old track; the rest join the persistent set under their new ids. Returns
    ``{new id: old id}``.
    """
    olds = [t for t in state.persistent_tracks.values() if t.last_seen_frame < frame]
    cands = list(state.candidate_tracks.values())
    score = np.array(
        [[iou(predict_box(o, frame - o.last_seen_frame), c.bbox) for c in cands] for o in olds]
    ).reshape(len(olds), len(cands))
    mapping = {}
    for i, j in greedy_match(score, state.tau_match):
        old, cand = olds[i], cands[j]
        state.persistent_tracks[old.track_id] = state.merge_into(old, cand)
        mapping[cand.track_id] = old.track_id
    for c in cands:
        if c.track_id not in mapping:
            state.persistent_tracks[c.track_id] = c
    state.candidate_tracks = {}
    state.last_bridge = mapping
    return mapping

"""Proactive line-of-sight blockage prediction and post-blockage recovery.

Blockage is forecast by extrapolating the TX box and every distractor s
frames ahead, warping each distractor's current mask into its predicted
box, and counting shared pixels with the predicted TX box. A distractor
that would overlap is only reported when it is also nearer to the camera
than the TX, judged by Gaussian-centre-weighted proximity over each
object's current mask.

Proximity follows the inverse-depth convention: larger means nearer, so a
blocker satisfies ``D_distractor > D_tx``.
"""

from __future__ import annotations

import copy
import logging
import math
from dataclasses import dataclass, field
from enum import Enum

import numpy as np

from .geometry import BeamLayout, CameraModel
from .identification import VoteState, identify_tx_frame, identify_tx_vote, iou
from .regions import PixelRegion
from .scene import DepthMap, FrameObservation, clip_bbox
from .tracker import Track, TrackerState, extrapolate, predict_box, warp_mask

logger = logging.getLogger(__name__)

DEFAULT_SIGMA_SCALE = 0.25
DEFAULT_CLEARANCE_DB = 10.0
RECOVERY_M_FRAMES = 3


# -- overlap and depth ------------------------------------------------------


@dataclass
class OverlapReport:
    overlaps: dict  # distractor id -> shared pixel count

    @property
    def flagged(self) -> list:
        return sorted(k for k, v in self.overlaps.items() if v > 0)


def detect_overlap(tx_bbox, distractor_masks: dict, cam: CameraModel) -> OverlapReport:
    """Pixels shared between the TX box (clipped to the image) and each distractor mask."""
    box = PixelRegion.from_box(cam.width, cam.height, clip_bbox(tuple(tx_bbox), cam))
    return OverlapReport({k: box.intersection_count(m) for k, m in distractor_masks.items()})


def default_sigma(mask: PixelRegion, scale: float = DEFAULT_SIGMA_SCALE) -> float:
    x1, y1, x2, y2 = mask.bounds()
    return scale * math.hypot(x2 - x1, y2 - y1)


def gaussian_weights(mask: PixelRegion, sigma_w: float):
    """Weights ``exp(-d^2 / 2 sigma^2)`` over the mask pixels (row-major order),
    ``d`` being the distance of a pixel center to the mask centroid.

    Returns ``(weights, (cx, cy))``.
    """
    if not sigma_w > 0:
        raise ValueError(f"sigma_w must be > 0, got {sigma_w}")
    if not mask:
        raise ValueError("gaussian weights of an empty mask")
    cx, cy = mask.centroid()
    rows, cols = mask.pixels()
    d2 = (cols + 0.5 - cx) ** 2 + (rows + 0.5 - cy) ** 2
    return np.exp(-d2 / (2.0 * sigma_w**2)), (cx, cy)


def weighted_depth(depth_values, weights) -> float:
    depth_values = np.asarray(depth_values, dtype=float)
    weights = np.asarray(weights, dtype=float)
    if depth_values.size == 0:
        raise ValueError("weighted depth of an empty mask")
    total = weights.sum()
    if not total > 0:
        raise ValueError("weights sum to zero")
    return float((weights * depth_values).sum() / total)


@dataclass
class DepthStats:
    centroid: tuple
    sigma_w: float
    weighted_depth: float


def depth_stats(mask: PixelRegion, depth_map: DepthMap, sigma_w: float | None = None,
                sigma_scale: float = DEFAULT_SIGMA_SCALE) -> DepthStats:
    if not mask:
        raise ValueError("depth of an empty mask")
    if sigma_w is None:
        sigma_w = default_sigma(mask, sigma_scale)
    w, c = gaussian_weights(mask, sigma_w)
    rows, cols = mask.pixels()
    return DepthStats(c, sigma_w, weighted_depth(depth_map.sample(rows, cols), w))


# -- prediction -------------------------------------------------------------


@dataclass(frozen=True)
class BlockagePrediction:
    horizon: int
    distractor_id: int
    overlap: int
    tx_depth: float
    distractor_depth: float


@dataclass
class PredictionResult:
    hits: list
    abstained: bool = False


def _boxes_touch(a, b, margin: float = 2.0) -> bool:
    return not (a[2] + margin < b[0] or b[2] + margin < a[0] or a[3] + margin < b[1] or b[3] + margin < a[1])


def predict_blockage(
    tx_track: Track,
    distractors,
    depth_map: DepthMap,
    frame: int,
    max_horizon: int,
    cam: CameraModel,
    sigma_scale: float = DEFAULT_SIGMA_SCALE,
) -> PredictionResult:
    """Predicted (horizon, distractor) blockages for horizons 1..max_horizon.

    Only tracks observed at ``frame`` take part, since depth is read from the
    current frame. A TX without two boxes of history abstains.
    """
    if tx_track.last_seen_frame != frame or tx_track.mask is None or len(tx_track.history) < 2:
        return PredictionResult([], abstained=True)
    live = [d for d in distractors if d.last_seen_frame == frame and d.mask is not None and d.mask]
    depth_cache = {}

    def depth_of(track: Track) -> float:
        if track.track_id not in depth_cache:
            depth_cache[track.track_id] = depth_stats(track.mask, depth_map, sigma_scale=sigma_scale).weighted_depth
        return depth_cache[track.track_id]

    hits = []
    for s in range(1, max_horizon + 1):
        tx_box = clip_bbox(tuple(extrapolate(tx_track, s)), cam)
        masks = {}
        for d in live:
            box_d = predict_box(d, s)
            if not _boxes_touch(tx_box, clip_bbox(tuple(box_d), cam)):
                continue
            masks[d.track_id] = warp_mask(d.mask, d.bbox, box_d)
        report = detect_overlap(tx_box, masks, cam)
        for did in report.flagged:
            d = next(t for t in live if t.track_id == did)
            d_dist, d_tx = depth_of(d), depth_of(tx_track)
            if d_dist > d_tx:
                hits.append(BlockagePrediction(s, did, report.overlaps[did], d_tx, d_dist))
    return PredictionResult(hits)


# -- recovery ---------------------------------------------------------------


def recovery_stage1(last_tx_track: Track, detections, tau_match: float, frame: int, exclude=()):
    """Provisional TX: the detection best overlapping the TX box extrapolated
    from before the occlusion, if its IoU reaches ``tau_match``."""
    gap = frame - last_tx_track.last_seen_frame
    expected = predict_box(last_tx_track, gap)
    best = None
    for d in sorted(detections, key=lambda d: d.object_id):
        if d.object_id in exclude:
            continue
        v = iou(expected, d.bbox)
        if v >= tau_match and (best is None or v > best[0]):
            best = (v, d.object_id)
    return None if best is None else best[1]


def recovery_stage2(votes, provisional, m_frames: int = RECOVERY_M_FRAMES):
    """Settle the TX after re-identification over ``m_frames`` votes.

    Returns ``(tx id, kept)``: ``kept`` is True when the vote confirms the
    provisional object. ``(None, False)`` when the vote saw nothing.
    """
    winner = identify_tx_vote(votes, m_frames)
    if winner is None:
        return None, False
    return winner, winner == provisional


# -- link state machine -----------------------------------------------------


class LinkPhase(Enum):
    IDENTIFYING = "identifying"
    TRACKING = "tracking"
    BLOCKAGE_PREDICTED = "blockage_predicted"
    BLOCKED = "blocked"
    RECOVERY_PROVISIONAL = "recovery_provisional"
    RECOVERY_VERIFYING = "recovery_verifying"


P = LinkPhase
LEGAL_TRANSITIONS = frozenset(
    {
        (P.IDENTIFYING, P.TRACKING),
        (P.TRACKING, P.BLOCKAGE_PREDICTED),
        (P.BLOCKAGE_PREDICTED, P.BLOCKED),
        (P.BLOCKAGE_PREDICTED, P.TRACKING),
        (P.BLOCKED, P.RECOVERY_PROVISIONAL),
        (P.RECOVERY_PROVISIONAL, P.RECOVERY_VERIFYING),
        (P.RECOVERY_VERIFYING, P.TRACKING),
        # TX lost without a predicted blocker over it: start over.
        (P.TRACKING, P.IDENTIFYING),
        (P.BLOCKAGE_PREDICTED, P.IDENTIFYING),
    }
)


@dataclass
class RecoveryOutcome:
    blocked_frame: int
    provisional_frame: int
    provisional_id: int | None
    confirmed_frame: int
    tx_track_id: int
    kept: bool


@dataclass
class StepResult:
    frame: int
    phase: LinkPhase
    tx_track_id: int | None
    prediction: PredictionResult | None = None
    relabel: dict = field(default_factory=dict)


@dataclass
class LinkState:
    phase: LinkPhase = LinkPhase.IDENTIFYING
    tx_track_id: int | None = None
    horizon: int | None = None
    deadline: int | None = None
    flagged: frozenset = frozenset()


class LinkStateMachine:
    """Drives identification, tracking, prediction, blockage and recovery frame by frame.

    Detections handed to ``step`` must already carry tracker ids in ``object_id``.
    """

    def __init__(
        self,
        layout: BeamLayout,
        tracker: TrackerState,
        max_horizon: int = 1,
        m_frames: int = 3,
        recovery_m_frames: int = RECOVERY_M_FRAMES,
        sigma_scale: float = DEFAULT_SIGMA_SCALE,
        clearance_db: float = DEFAULT_CLEARANCE_DB,
    ):
        if not 1 <= max_horizon:
            raise ValueError("max_horizon must be >= 1")
        self.layout = layout
        self.tracker = tracker
        self.max_horizon = max_horizon
        self.sigma_scale = sigma_scale
        self.clearance_ratio = 10.0 ** (-clearance_db / 10.0)
        self.state = LinkState()
        self.votes = VoteState(m_frames)
        self.recovery_votes = VoteState(recovery_m_frames)
        self.transitions = []  # (frame, from, to)
        self.recoveries = []
        self._last_tx_track = None
        self._ref_peak = 0.0
        self._blocked_frame = None
        self._provisional = None

    @property
    def phase(self) -> LinkPhase:
        return self.state.phase

    def _go(self, frame: int, to: LinkPhase) -> None:
        src = self.state.phase
        if (src, to) not in LEGAL_TRANSITIONS:
            raise AssertionError(f"illegal link transition {src.name} -> {to.name}")
        self.transitions.append((frame, src, to))
        self.state.phase = to

    def step(self, obs: FrameObservation) -> StepResult:
        f = obs.frame_index
        result = StepResult(f, self.phase, self.state.tx_track_id)
        P = LinkPhase

        if self.phase is P.IDENTIFYING:
            if obs.detections:
                self.votes.push(identify_tx_frame(obs, self.layout))
            if self.votes.full:
                winner = self.votes.result()
                self.votes.clear()
                if winner is not None:
                    self.state.tx_track_id = winner
                    self._go(f, P.TRACKING)

        if self.phase in (P.TRACKING, P.BLOCKAGE_PREDICTED):
            self._track(obs, result)
        elif self.phase is P.BLOCKED:
            self._blocked(obs, result)
        elif self.phase in (P.RECOVERY_PROVISIONAL, P.RECOVERY_VERIFYING):
            self._verify(obs)

        result.phase = self.phase
        result.tx_track_id = self.state.tx_track_id
        return result

    def _track(self, obs: FrameObservation, result: StepResult) -> None:
        P = LinkPhase
        f = obs.frame_index
        tx_id = self.state.tx_track_id
        tx_det = obs.detection(tx_id)
        if tx_det is None:
            if self.phase is P.BLOCKAGE_PREDICTED and self._occluded_by_flagged(obs):
                self._blocked_frame = f
                self._go(f, P.BLOCKED)
            else:
                logger.debug("frame %d: TX track %s lost without a predicted blocker", f, tx_id)
                self.state.tx_track_id = None
                self._go(f, P.IDENTIFYING)
            return
        tx_track = self.tracker.persistent_tracks[tx_id]
        tx_track.role = "tx"
        self._last_tx_track = copy.deepcopy(tx_track)
        peak = float(obs.power_profile.per_beam_power.max())
        # The reference tracks line-of-sight power; a drop past the margin
        # while a blocker is predicted is the blockage itself.
        if self.phase is P.TRACKING or peak >= self._ref_peak * self.clearance_ratio:
            self._ref_peak = peak
        others = [t for tid, t in self.tracker.persistent_tracks.items() if tid != tx_id]
        pred = predict_blockage(
            tx_track, others, obs.depth_map, f, self.max_horizon, self.layout.camera, self.sigma_scale
        )
        result.prediction = pred
        if pred.hits:
            if self.phase is P.TRACKING:
                self._go(f, P.BLOCKAGE_PREDICTED)
            self.state.horizon = min(h.horizon for h in pred.hits)
            self.state.deadline = f + self.max_horizon
            self.state.flagged = frozenset(h.distractor_id for h in pred.hits)
        elif self.phase is P.BLOCKAGE_PREDICTED and f > self.state.deadline:
            self.state.horizon = None
            self.state.flagged = frozenset()
            self._go(f, P.TRACKING)

    def _occluded_by_flagged(self, obs: FrameObservation) -> bool:
        if self._last_tx_track is None:
            return False
        f = obs.frame_index
        gap = f - self._last_tx_track.last_seen_frame
        cam = self.layout.camera
        box = PixelRegion.from_box(cam.width, cam.height, clip_bbox(tuple(predict_box(self._last_tx_track, gap)), cam))
        for did in sorted(self.state.flagged):
            det = obs.detection(did)
            if det is not None:
                mask = det.mask
            else:
                t = self.tracker.persistent_tracks.get(did)
                if t is None or t.mask is None:
                    continue
                s = f - t.last_seen_frame
                mask = warp_mask(t.mask, t.bbox, predict_box(t, s))
            if box.intersection_count(mask) > 0:
                return True
        return False

    def _cleared(self, obs: FrameObservation) -> bool:
        peak = float(obs.power_profile.per_beam_power.max())
        if self._ref_peak <= 0:
            return peak > 0
        return peak >= self._ref_peak * self.clearance_ratio

    def _blocked(self, obs: FrameObservation, result: StepResult) -> None:
        f = obs.frame_index
        if not self._cleared(obs):
            return
        old = self._last_tx_track
        provisional = recovery_stage1(old, obs.detections, self.tracker.tau_match, f, exclude=self.state.flagged)
        if provisional is not None:
            if provisional != old.track_id:
                self.tracker.adopt(provisional, old)
                result.relabel = {provisional: old.track_id}
                for d in obs.detections:
                    if d.object_id == provisional:
                        d.object_id = old.track_id
                provisional = old.track_id
        self._provisional = (f, provisional)
        self.state.tx_track_id = provisional
        self.state.flagged = frozenset()
        self.recovery_votes.clear()
        self._go(f, LinkPhase.RECOVERY_PROVISIONAL)
        self._verify(obs)

    def _verify(self, obs: FrameObservation) -> None:
        P = LinkPhase
        f = obs.frame_index
        if self._cleared(obs) and obs.detections:
            self.recovery_votes.push(identify_tx_frame(obs, self.layout))
        if self.phase is P.RECOVERY_PROVISIONAL and self._provisional[0] != f:
            self._go(f, P.RECOVERY_VERIFYING)
        if self.phase is P.RECOVERY_VERIFYING and self.recovery_votes.full:
            tx, kept = recovery_stage2(self.recovery_votes.window, self._provisional[1], self.recovery_votes.m_frames)
            if tx is None:
                return
            self.recoveries.append(
                RecoveryOutcome(
                    blocked_frame=self._blocked_frame,
                    provisional_frame=self._provisional[0],
                    provisional_id=self._provisional[1],
                    confirmed_frame=f,
                    tx_track_id=tx,
                    kept=kept,
                )
            )
            self.state.tx_track_id = tx
            self.recovery_votes.clear()
            self._go(f, P.TRACKING)


# -- events and metrics -----------------------------------------------------


class Outcome(str, Enum):
    TP = "TP"
    FP = "FP"
    TN = "TN"
    FN = "FN"


@dataclass
class BlockageEvent:
    frame: int
    horizon: int
    predicted: bool
    truth: bool
    distractor_id: int | None
    classification: Outcome
    frames: tuple = ()

    def __post_init__(self):
        expected = {
            (True, True): Outcome.TP,
            (True, False): Outcome.FP,
            (False, False): Outcome.TN,
            (False, True): Outcome.FN,
        }[(bool(self.predicted), bool(self.truth))]
        if self.classification != expected:
            raise ValueError(f"classification {self.classification} inconsistent with flags")


def blockage_events(frame_indices, gt_flags, predictions: dict, horizon: int, gt_blockers=None) -> list:
    """Partition frames into scored events so that each frame is counted once.

    * Each ground-truth blockage episode (run of blocked frames) together with
      the up-to-``horizon`` unblocked frames right before its onset forms one
      positive event: TP if any of those lead-in frames carried a prediction.
    * Outside positive events, each run of consecutive frames with predictions
      is one FP event (an approach that never materialized counts once).
    * Every other frame is a TN event.

    ``predictions`` maps frame index -> list of predicted distractor ids
    (already restricted to horizons <= ``horizon``).
    """
    frames = list(frame_indices)
    flags = [int(v) for v in gt_flags]
    blockers = list(gt_blockers) if gt_blockers is not None else [None] * len(frames)
    if not (len(frames) == len(flags) == len(blockers)):
        raise ValueError("frames, flags and blockers must be aligned")
    n = len(frames)
    claimed = [False] * n
    events = []

    i = 0
    while i < n:
        if not flags[i]:
            i += 1
            continue
        j = i
        while j + 1 < n and flags[j + 1]:
            j += 1
        onset = frames[i]
        lead = []
        k = i - 1
        while k >= 0 and not claimed[k] and not flags[k] and frames[k] >= onset - horizon:
            lead.append(k)
            k -= 1
        lead.reverse()
        hit = next((k for k in lead if predictions.get(frames[k])), None)
        members = lead + list(range(i, j + 1))
        for k in members:
            claimed[k] = True
        did = predictions[frames[hit]][0] if hit is not None else blockers[i]
        events.append(
            BlockageEvent(
                frame=onset,
                horizon=horizon,
                predicted=hit is not None,
                truth=True,
                distractor_id=did,
                classification=Outcome.TP if hit is not None else Outcome.FN,
                frames=tuple(frames[k] for k in members),
            )
        )
        i = j + 1

    i = 0
    while i < n:
        if claimed[i]:
            i += 1
            continue
        if predictions.get(frames[i]):
            j = i
            while j + 1 < n and not claimed[j + 1] and predictions.get(frames[j + 1]):
                j += 1
            events.append(
                BlockageEvent(frames[i], horizon, True, False, predictions[frames[i]][0], Outcome.FP,
                              tuple(frames[i : j + 1]))
            )
            i = j + 1
        else:
            events.append(BlockageEvent(frames[i], horizon, False, False, None, Outcome.TN, (frames[i],)))
            i += 1
    events.sort(key=lambda e: e.frame)
    return events


def _ratio(num, den):
    return None if den == 0 else num / den


def blockage_metrics(events) -> dict:
    """Accuracy, precision, recall, FPR, FNR and the confusion matrix
    (rows = truth [negative, positive], columns = prediction [negative, positive]).

    Undefined ratios are None. The normalized matrix divides each row by its
    ground-truth count; an empty row is None.
    """
    events = list(events)
    if not events:
        raise ValueError("no events to score")
    c = {o: sum(1 for e in events if e.classification == o) for o in Outcome}
    tp, fp, tn, fn = c[Outcome.TP], c[Outcome.FP], c[Outcome.TN], c[Outcome.FN]
    raw = [[tn, fp], [fn, tp]]
    normalized = [None if sum(row) == 0 else [v / sum(row) for v in row] for row in raw]
    return {
        "accuracy": _ratio(tp + tn, len(events)),
        "precision": _ratio(tp, tp + fp),
        "recall": _ratio(tp, tp + fn),
        "fpr": _ratio(fp, fp + tn),
        "fnr": _ratio(fn, fn + tp),
        "tp": tp,
        "fp": fp,
        "tn": tn,
        "fn": fn,
        "confusion": raw,
        "confusion_normalized": normalized,
    }

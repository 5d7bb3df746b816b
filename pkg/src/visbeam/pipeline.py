"""One scenario through the whole chain: identify, track, rank beams, predict blockage, recover.

Detections from the generator carry ground-truth object ids. The pipeline
hands the tracker and link state machine copies relabeled with track ids,
and keeps a per-frame track -> object map so results can be scored against
ground truth.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np

from .beam_selection import rank_beams, reduce_search_space, topn_accuracy
from .channel import PowerProfile
from .blockage import LinkPhase, LinkStateMachine, blockage_events, blockage_metrics
from .identification import VoteState, build_power_raster, identification_accuracy, identify_tx_frame
from .scene import Detection, FrameObservation, Scenario, generate_frames
from .tracker import TrackerState, update_tracks

logger = logging.getLogger(__name__)


@dataclass
class PipelineParams:
    m_frames: tuple = (1, 3, 5)
    topn: tuple = (1, 3, 5)
    s_max: int = 3
    iou_threshold: float = 0.5
    tau_match: float = 0.3
    history_len: int = 3
    max_age: int = 10
    link_m_frames: int = 3
    sigma_scale: float = 0.25
    clearance_db: float = 10.0
    # identification sees all-zero power profiles (radio input removed)
    zero_power: bool = False


@dataclass
class LinkRun:
    """Per-frame trace of one pass with a fixed prediction window."""

    horizon: int
    frames: list = field(default_factory=list)  # emitted frame indices
    phases: list = field(default_factory=list)
    predictions: dict = field(default_factory=dict)  # frame -> [distractor track ids]
    track_objects: list = field(default_factory=list)  # per frame {track id: object id}
    tx_tracks: list = field(default_factory=list)  # per frame TX track id (after the step)
    rankings: dict = field(default_factory=dict)  # frame -> (candidate beams, ranked beams)
    transitions: list = field(default_factory=list)
    recoveries: list = field(default_factory=list)


def run_link(scenario: Scenario, frames, horizon: int, params: PipelineParams, rank: bool = False) -> LinkRun:
    layout = scenario.layout()
    tracker = TrackerState(tau_match=params.tau_match, history_len=params.history_len, max_age=params.max_age)
    link = LinkStateMachine(
        layout,
        tracker,
        max_horizon=horizon,
        m_frames=params.link_m_frames,
        sigma_scale=params.sigma_scale,
        clearance_db=params.clearance_db,
    )
    max_n = max(params.topn)
    run = LinkRun(horizon)
    for obs in frames:
        f = obs.frame_index
        dets = [Detection(d.object_id, d.bbox, d.mask, d.confidence) for d in obs.detections]
        assign = update_tracks(tracker, dets, f)
        objects = {}
        for j, tid in assign.items():
            objects[tid] = dets[j].object_id
            dets[j].object_id = tid
        tracked = FrameObservation(f, dets, obs.depth_map, obs.power_profile)
        step = link.step(tracked)
        for new, old in step.relabel.items():
            objects[old] = objects.pop(new)
        run.frames.append(f)
        run.phases.append(step.phase)
        run.track_objects.append(objects)
        run.tx_tracks.append(step.tx_track_id)
        if step.prediction is not None and step.prediction.hits:
            ids = []
            for h in step.prediction.hits:
                if h.distractor_id not in ids:
                    ids.append(h.distractor_id)
            run.predictions[f] = ids
        if rank and step.phase in (LinkPhase.TRACKING, LinkPhase.BLOCKAGE_PREDICTED):
            det = tracked.detection(step.tx_track_id)
            if det is not None:
                overlaps = layout.overlaps(det.mask)
                cand = reduce_search_space(det.mask, layout, overlaps)
                ranking = rank_beams(det.mask, cand, layout, max_n, overlaps)
                run.rankings[f] = (cand, ranking)
    run.transitions = list(link.transitions)
    run.recoveries = list(link.recoveries)
    return run


def identification_scores(scenario: Scenario, frames, truth, params: PipelineParams) -> dict:
    """Vote accuracy per window size over frames where the TX is visible, detected and unblocked."""
    layout = scenario.layout()
    by_frame = truth.by_frame()
    eligible = []
    for obs in frames:
        t = by_frame[obs.frame_index]
        if t.tx_detected and t.blockage_flag == 0 and t.tx_bbox is not None:
            profile = obs.power_profile
            if params.zero_power:
                profile = PowerProfile(np.zeros_like(profile.per_beam_power), profile.frame_index)
            raster = build_power_raster(profile, layout)
            eligible.append((obs, t, identify_tx_frame(obs, layout, raster)))
    out = {}
    for m in params.m_frames:
        votes = VoteState(m)
        preds, gts = [], []
        for obs, t, vote in eligible:
            votes.push(vote)
            winner = votes.result()
            det = None if winner is None else obs.detection(winner)
            preds.append(None if det is None else det.bbox)
            gts.append(t.tx_bbox)
        out[m] = {"accuracy": identification_accuracy(preds, gts, params.iou_threshold), "samples": len(gts)}
    return out


def beam_scores(run: LinkRun, truth, params: PipelineParams) -> dict:
    by_frame = truth.by_frame()
    rankings, gts, contained = [], [], 0
    for f, (cand, ranking) in sorted(run.rankings.items()):
        t = by_frame[f]
        if t.blockage_flag or t.optimal_beam is None:
            continue
        rankings.append(ranking)
        gts.append(t.optimal_beam)
        contained += t.optimal_beam in cand
    return {
        "samples": len(gts),
        "candidate_containment": contained / len(gts) if gts else None,
        "topn": {n: topn_accuracy(rankings, gts, n) for n in params.topn},
    }


def blockage_scores(run: LinkRun, truth) -> dict:
    by_frame = truth.by_frame()
    flags = [by_frame[f].blockage_flag for f in run.frames]
    blockers = [by_frame[f].blocking_object_id for f in run.frames]
    events = blockage_events(run.frames, flags, run.predictions, run.horizon, blockers)
    metrics = blockage_metrics(events)
    metrics["episodes"] = metrics["tp"] + metrics["fn"]
    return metrics


def recovery_scores(run: LinkRun, truth) -> list:
    """Per recovery: whether the confirmed TX track follows the true TX object."""
    tx_obj = truth.frames[0].tx_object_id
    index = {f: i for i, f in enumerate(run.frames)}
    out = []
    for r in run.recoveries:
        objects = run.track_objects[index[r.confirmed_frame]]
        out.append(
            {
                "blocked_frame": r.blocked_frame,
                "confirmed_frame": r.confirmed_frame,
                "provisional_object": run.track_objects[index[r.provisional_frame]].get(r.provisional_id),
                "confirmed_object": objects.get(r.tx_track_id),
                "kept": r.kept,
                "correct": objects.get(r.tx_track_id) == tx_obj,
            }
        )
    return out


def run_scenario(scenario: Scenario, seed: int | None, params: PipelineParams) -> dict:
    """Full evaluation of one scenario; returns plain data ready for a report."""
    frames, truth = generate_frames(scenario, seed)
    result = {
        "name": scenario.name,
        "frames": len(frames),
        "identification": identification_scores(scenario, frames, truth, params),
        "blockage": {},
        "recovery": {},
        "transitions": {},
    }
    for s in range(1, params.s_max + 1):
        run = run_link(scenario, frames, s, params, rank=s == 1)
        if s == 1:
            result["beam_selection"] = beam_scores(run, truth, params)
        result["blockage"][s] = blockage_scores(run, truth)
        result["recovery"][s] = recovery_scores(run, truth)
        result["transitions"][s] = [[f, a.value, b.value] for f, a, b in run.transitions]
        logger.debug("%s S=%d: %s", scenario.name, s, result["blockage"][s])
    return result

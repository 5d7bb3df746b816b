"""Synthetic frame sequences with ground truth.

A scenario scripts a handful of objects (exactly one carries the
transmitter) along piecewise-linear bounding-box trajectories. For each
frame the generator renders object masks, a z-buffered proximity-depth map
(larger value = nearer the camera), the beamformed power profile seen by
the base station, and detections as an ideal detector would report them:
objects that are mostly hidden behind nearer ones are not detected, and
boxes may carry seeded corner jitter.

Ground truth always comes from the true trajectories, never from the
jittered detections.
"""

from __future__ import annotations

import copy
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
import yaml

from .channel import (
    ArrayConfig,
    BeamCodebook,
    ChannelState,
    PowerProfile,
    codebook_from_dict,
    ebs_oracle,
    load_codebook,
    synth_power_profile,
)
from .geometry import BeamLayout, CameraModel
from .regions import PixelRegion

TX_ROLE = "tx_carrier"
DISTRACTOR_ROLE = "distractor"
MASK_SHAPES = ("rectangle", "ellipse")

_POWER_STREAM = 0
_JITTER_STREAM = 1


class ScenarioError(ValueError):
    pass


# -- objects ----------------------------------------------------------------


def _interp_table(table, frame: int) -> np.ndarray:
    frames = [t[0] for t in table]
    values = np.array([t[1] for t in table], dtype=float)
    if frame <= frames[0]:
        return values[0]
    if frame >= frames[-1]:
        return values[-1]
    k = int(np.searchsorted(frames, frame, side="right")) - 1
    f0, f1 = frames[k], frames[k + 1]
    w = (frame - f0) / (f1 - f0)
    return values[k] + w * (values[k + 1] - values[k])


@dataclass
class SceneObject:
    object_id: int
    role: str
    # (frame, (x1, y1, x2, y2)); the object exists from the first to the last stamp
    waypoints: list
    mask_shape: str = "ellipse"
    mask_fill: float = 1.0
    # (frame, proximity) pairs, linearly interpolated and held flat outside
    proximity: list = field(default_factory=lambda: [(0, 1.0)])

    def __post_init__(self):
        self.waypoints = [(int(f), tuple(float(v) for v in b)) for f, b in self.waypoints]
        self.proximity = [(int(f), float(p)) for f, p in self.proximity]
        if self.role not in (TX_ROLE, DISTRACTOR_ROLE):
            raise ScenarioError(f"object {self.object_id}: unknown role {self.role!r}")
        if self.mask_shape not in MASK_SHAPES:
            raise ScenarioError(f"object {self.object_id}: unknown mask shape {self.mask_shape!r}")
        if not 0 < self.mask_fill <= 1:
            raise ScenarioError(f"object {self.object_id}: mask fill must be in (0, 1]")
        if not self.waypoints:
            raise ScenarioError(f"object {self.object_id}: needs at least one waypoint")
        stamps = [f for f, _ in self.waypoints]
        if any(b <= a for a, b in zip(stamps, stamps[1:])):
            raise ScenarioError(f"object {self.object_id}: waypoint frames must increase")
        for f, (x1, y1, x2, y2) in self.waypoints:
            if not (x1 < x2 and y1 < y2):
                raise ScenarioError(f"object {self.object_id}: degenerate box at frame {f}")
        if not self.proximity or any(p <= 0 for _, p in self.proximity):
            raise ScenarioError(f"object {self.object_id}: proximity must be > 0")
        p_stamps = [f for f, _ in self.proximity]
        if any(b <= a for a, b in zip(p_stamps, p_stamps[1:])):
            raise ScenarioError(f"object {self.object_id}: proximity frames must increase")

    @property
    def first_frame(self) -> int:
        return self.waypoints[0][0]

    @property
    def last_frame(self) -> int:
        return self.waypoints[-1][0]

    def active(self, frame: int) -> bool:
        return self.first_frame <= frame <= self.last_frame

    def bbox_at(self, frame: int) -> tuple[float, float, float, float] | None:
        if not self.active(frame):
            return None
        return tuple(float(v) for v in _interp_table(self.waypoints, frame))

    def proximity_at(self, frame: int) -> float:
        return float(_interp_table(self.proximity, frame))


def shape_mask(bbox, shape: str, fill: float, width: int, height: int) -> PixelRegion:
    """Rasterize a rectangle or ellipse inscribed in ``bbox`` (scaled by ``fill``) at pixel centers."""
    x1, y1, x2, y2 = (float(v) for v in bbox)
    cx, cy = (x1 + x2) / 2.0, (y1 + y2) / 2.0
    hw, hh = fill * (x2 - x1) / 2.0, fill * (y2 - y1) / 2.0
    if shape == "rectangle":
        return PixelRegion.from_box(width, height, (cx - hw, cy - hh, cx + hw, cy + hh))
    r0 = max(0, int(np.ceil(cy - hh - 0.5)))
    r1 = min(height, int(np.ceil(cy + hh - 0.5)))
    if r1 <= r0:
        return PixelRegion(width, height)
    rows = np.arange(r0, r1)
    t = ((rows + 0.5) - cy) / hh
    half = hw * np.sqrt(np.clip(1.0 - t * t, 0.0, None))
    return PixelRegion.from_row_bounds(width, height, rows, cx - half, cx + half)


def clip_bbox(bbox, cam: CameraModel):
    x1, y1, x2, y2 = bbox
    return (
        min(max(x1, 0.0), cam.width),
        min(max(y1, 0.0), cam.height),
        min(max(x2, 0.0), cam.width),
        min(max(y2, 0.0), cam.height),
    )


def bbox_area(bbox) -> float:
    x1, y1, x2, y2 = bbox
    return max(0.0, x2 - x1) * max(0.0, y2 - y1)


# -- scenario ---------------------------------------------------------------


@dataclass
class ChannelParams:
    los_gain: complex = 1.0
    nlos_gain: complex = 0.1
    nlos_azimuth: float = -30.0
    tx_snr: float = 1.0
    noise_variance: float = 1.0


@dataclass
class Scenario:
    name: str
    frame_count: int
    camera: CameraModel
    codebook: BeamCodebook
    array: ArrayConfig
    objects: list
    channel: ChannelParams = field(default_factory=ChannelParams)
    drop_schedule: frozenset = frozenset()
    detection_noise: float = 0.0  # bbox corner jitter sigma, pixels
    power_noise_db: float | None = None
    occlusion_visibility: float = 0.5  # min visible mask fraction for a detection
    background_proximity: float = 0.05
    rng_seed: int = 0
    # config-level provenance of the codebook, echoed when saving
    codebook_source: dict = field(default_factory=dict)

    def __post_init__(self):
        self.drop_schedule = frozenset(int(f) for f in self.drop_schedule)
        if self.frame_count < 1:
            raise ScenarioError("frame_count must be >= 1")
        tx = [o for o in self.objects if o.role == TX_ROLE]
        if len(tx) != 1:
            raise ScenarioError(f"scenario {self.name!r} needs exactly one tx_carrier, found {len(tx)}")
        ids = [o.object_id for o in self.objects]
        if len(set(ids)) != len(ids):
            raise ScenarioError(f"scenario {self.name!r}: duplicate object ids")
        bad = [f for f in self.drop_schedule if not 0 <= f < self.frame_count]
        if bad:
            raise ScenarioError(f"scenario {self.name!r}: dropped frames outside [0, {self.frame_count}): {sorted(bad)}")
        if self.detection_noise < 0:
            raise ScenarioError("detection_noise must be >= 0")
        if not 0 <= self.occlusion_visibility <= 1:
            raise ScenarioError("occlusion_visibility must be in [0, 1]")

    @property
    def tx_object(self) -> SceneObject:
        return next(o for o in self.objects if o.role == TX_ROLE)

    def layout(self) -> BeamLayout:
        return BeamLayout(self.codebook, self.camera)


def _complex(value) -> complex:
    if isinstance(value, (list, tuple)):
        re, im = value
        return complex(float(re), float(im))
    return complex(value)


def _complex_out(value: complex):
    value = complex(value)
    return float(value.real) if value.imag == 0 else [float(value.real), float(value.imag)]


_SCENARIO_KEYS = {
    "name", "frames", "camera", "array", "codebook", "channel", "objects", "drop_schedule",
    "detection_noise", "power_noise_db", "occlusion_visibility", "background_proximity", "seed",
}


def scenario_from_dict(data: dict, base_dir: Path | None = None) -> Scenario:
    unknown = set(data) - _SCENARIO_KEYS
    if unknown:
        raise ScenarioError(f"unknown scenario keys: {sorted(unknown)}")
    cam_d = dict(data.get("camera", {}))
    vp = cam_d.get("vanishing_point")
    cam = CameraModel(
        width=int(cam_d.get("width", 1280)),
        height=int(cam_d.get("height", 720)),
        vanishing_point=None if vp is None else (float(vp[0]), float(vp[1])),
        perspective_correction=bool(cam_d.get("perspective_correction", True)),
    )
    arr_d = data.get("array", {})
    array = ArrayConfig(
        num_elements=int(arr_d.get("num_elements", 16)),
        element_spacing=float(arr_d.get("element_spacing", 0.5)),
        num_subcarriers=int(arr_d.get("num_subcarriers", 1)),
    )
    cb_d = dict(data.get("codebook", {"uniform": 64, "steering_range": [-45, 45]}))
    if "path" in cb_d:
        path = Path(cb_d["path"])
        if base_dir is not None and not path.is_absolute():
            path = base_dir / path
        codebook = load_codebook(path, array)
    else:
        codebook = codebook_from_dict(cb_d, array)
    ch_d = data.get("channel", {})
    channel = ChannelParams(
        los_gain=_complex(ch_d.get("los_gain", 1.0)),
        nlos_gain=_complex(ch_d.get("nlos_gain", 0.1)),
        nlos_azimuth=float(ch_d.get("nlos_azimuth", -30.0)),
        tx_snr=float(ch_d.get("tx_snr", 1.0)),
        noise_variance=float(ch_d.get("noise_variance", 1.0)),
    )
    objects = []
    for od in data.get("objects", []):
        mask = od.get("mask", {})
        prox = od.get("proximity", 1.0)
        if not isinstance(prox, list):
            prox = [[0, prox]]
        objects.append(
            SceneObject(
                object_id=int(od["id"]),
                role=od["role"],
                waypoints=[(w[0], w[1:5]) for w in od["waypoints"]],
                mask_shape=mask.get("shape", "ellipse"),
                mask_fill=float(mask.get("fill", 1.0)),
                proximity=[(p[0], p[1]) for p in prox],
            )
        )
    pn = data.get("power_noise_db")
    return Scenario(
        name=str(data["name"]),
        frame_count=int(data["frames"]),
        camera=cam,
        codebook=codebook,
        array=array,
        objects=objects,
        channel=channel,
        drop_schedule=frozenset(data.get("drop_schedule", [])),
        detection_noise=float(data.get("detection_noise", 0.0)),
        power_noise_db=None if pn is None else float(pn),
        occlusion_visibility=float(data.get("occlusion_visibility", 0.5)),
        background_proximity=float(data.get("background_proximity", 0.05)),
        rng_seed=int(data.get("seed", 0)),
        codebook_source=cb_d,
    )


def scenario_to_dict(sc: Scenario) -> dict:
    cam = sc.camera
    cb = sc.codebook_source or {
        "steering_range": list(sc.codebook.steering_range),
        "beams": [{"angle": float(a)} for a in sc.codebook.steering_angles],
    }
    return {
        "name": sc.name,
        "frames": sc.frame_count,
        "camera": {
            "width": cam.width,
            "height": cam.height,
            "vanishing_point": None if cam.vanishing_point is None else list(cam.vanishing_point),
            "perspective_correction": cam.perspective_correction,
        },
        "array": {
            "num_elements": sc.array.num_elements,
            "element_spacing": sc.array.element_spacing,
            "num_subcarriers": sc.array.num_subcarriers,
        },
        "codebook": copy.deepcopy(cb),
        "channel": {
            "los_gain": _complex_out(sc.channel.los_gain),
            "nlos_gain": _complex_out(sc.channel.nlos_gain),
            "nlos_azimuth": sc.channel.nlos_azimuth,
            "tx_snr": sc.channel.tx_snr,
            "noise_variance": sc.channel.noise_variance,
        },
        "drop_schedule": sorted(sc.drop_schedule),
        "detection_noise": sc.detection_noise,
        "power_noise_db": sc.power_noise_db,
        "occlusion_visibility": sc.occlusion_visibility,
        "background_proximity": sc.background_proximity,
        "seed": sc.rng_seed,
        "objects": [
            {
                "id": o.object_id,
                "role": o.role,
                "mask": {"shape": o.mask_shape, "fill": o.mask_fill},
                "waypoints": [[f, *b] for f, b in o.waypoints],
                "proximity": [[f, p] for f, p in o.proximity],
            }
            for o in sc.objects
        ],
    }


def load_scenario(path) -> Scenario:
    path = Path(path)
    data = yaml.safe_load(path.read_text())
    if not isinstance(data, dict):
        raise ScenarioError(f"{path}: expected a mapping at top level")
    return scenario_from_dict(data, base_dir=path.parent)


def save_scenario(sc: Scenario, path) -> None:
    Path(path).write_text(yaml.safe_dump(scenario_to_dict(sc), sort_keys=False))


# -- per-frame records --------------------------------------------------------


class DepthMap:
    """Proximity image rendered with a z-buffer: each pixel shows the nearest object covering it."""

    def __init__(self, width: int, height: int, layers, background: float):
        self.width = width
        self.height = height
        self.layers = list(layers)  # (PixelRegion, proximity)
        self.background = float(background)

    def sample(self, rows, cols) -> np.ndarray:
        rows = np.asarray(rows)
        out = np.full(rows.shape, self.background, dtype=float)
        for region, prox in self.layers:
            inside = region.contains(rows, cols)
            out[inside] = np.maximum(out[inside], prox)
        return out

    def to_dense(self) -> np.ndarray:
        out = np.full((self.height, self.width), self.background, dtype=float)
        for region, prox in self.layers:
            dense = region.to_dense()
            out[dense] = np.maximum(out[dense], prox)
        return out


@dataclass
class Detection:
    object_id: int
    bbox: tuple
    mask: PixelRegion
    confidence: float = 1.0


@dataclass
class FrameObservation:
    frame_index: int
    detections: list
    depth_map: DepthMap
    power_profile: PowerProfile

    def detection(self, object_id: int) -> Detection | None:
        return next((d for d in self.detections if d.object_id == object_id), None)


@dataclass
class FrameTruth:
    frame_index: int
    tx_object_id: int
    tx_bbox: tuple | None  # clipped to the image; None when the TX is out of view
    optimal_beam: int | None
    blockage_flag: int
    blocking_object_id: int | None
    channel_state: ChannelState | None
    tx_detected: bool


@dataclass
class GroundTruth:
    frames: list

    def __iter__(self):
        return iter(self.frames)

    def __len__(self) -> int:
        return len(self.frames)

    def by_frame(self) -> dict:
        return {t.frame_index: t for t in self.frames}


@dataclass
class ObjectSnapshot:
    object_id: int
    role: str
    bbox: tuple
    mask: PixelRegion
    proximity: float


def tx_azimuth_from_bbox(bbox, cam: CameraModel, steering_range, perspective: bool = False) -> float:
    """Azimuth of the box's center column through the inverse pixel/beam map.

    With ``perspective`` the box center is first carried along its vanishing
    line up to the top image row, where the linear column/angle map holds.
    """
    x1, y1, x2, y2 = bbox
    x = (x1 + x2) / 2.0
    if perspective:
        x = cam.top_row_x(x, (y1 + y2) / 2.0)
    lo, hi = steering_range
    return lo + x / cam.width * (hi - lo)


def label_blockage(tx: ObjectSnapshot, others, cam: CameraModel) -> tuple[int, int | None]:
    """Blocked when a nearer distractor's mask shares a pixel with the TX box;
    the blocker reported is the one with the largest shared area (lowest id on ties)."""
    tx_box = PixelRegion.from_box(cam.width, cam.height, clip_bbox(tx.bbox, cam))
    best = None
    for o in sorted(others, key=lambda o: o.object_id):
        if o.object_id == tx.object_id or o.proximity <= tx.proximity:
            continue
        n = tx_box.intersection_count(o.mask)
        if n > 0 and (best is None or n > best[0]):
            best = (n, o.object_id)
    return (0, None) if best is None else (1, best[1])


def _truncated_normal(rng, sigma: float, size: int) -> np.ndarray:
    out = rng.normal(0.0, sigma, size)
    bad = np.abs(out) > 3 * sigma
    while bad.any():
        out[bad] = rng.normal(0.0, sigma, int(bad.sum()))
        bad = np.abs(out) > 3 * sigma
    return out


def _frame_rng(seed: int, frame: int, stream: int) -> np.random.Generator:
    return np.random.default_rng([int(seed) & 0xFFFFFFFFFFFFFFFF, frame, stream])


def generate_frames(scenario: Scenario, seed: int | None = None):
    """Render every non-dropped frame; returns ``(observations, GroundTruth)``."""
    seed = scenario.rng_seed if seed is None else seed
    cam = scenario.camera
    W, H = cam.width, cam.height
    tx_obj = scenario.tx_object
    frames, truths = [], []
    tx_ever_visible = False

    for f in range(scenario.frame_count):
        snaps = []
        for obj in scenario.objects:
            bbox = obj.bbox_at(f)
            if bbox is None:
                continue
            mask = shape_mask(bbox, obj.mask_shape, obj.mask_fill, W, H)
            if not mask:
                continue
            snaps.append(ObjectSnapshot(obj.object_id, obj.role, bbox, mask, obj.proximity_at(f)))
        tx = next((s for s in snaps if s.role == TX_ROLE), None)
        tx_ever_visible |= tx is not None
        if f in scenario.drop_schedule:
            continue

        if tx is not None:
            flag, blocker = label_blockage(tx, snaps, cam)
            az = tx_azimuth_from_bbox(tx.bbox, cam, scenario.codebook.steering_range, perspective=True)
            lo, hi = scenario.codebook.steering_range
            ch = scenario.channel
            state = ChannelState(
                tx_azimuth=min(max(az, lo), hi),
                los_gain=ch.los_gain,
                nlos_gain=ch.nlos_gain,
                nlos_azimuth=ch.nlos_azimuth,
                beta_los=1 - flag,
                beta_nlos=flag,
                noise_variance=ch.noise_variance,
                tx_snr=ch.tx_snr,
            )
            profile = synth_power_profile(
                state,
                scenario.codebook,
                scenario.array,
                max_db=scenario.power_noise_db,
                seed=_frame_rng(seed, f, _POWER_STREAM),
                frame_index=f,
            )
            optimal = ebs_oracle(state, scenario.codebook, scenario.array)
        else:
            flag, blocker, state, optimal = 0, None, None, None
            profile = PowerProfile(np.zeros(scenario.codebook.size), f)

        # Detections: objects mostly hidden behind nearer ones are missed.
        jitter_rng = _frame_rng(seed, f, _JITTER_STREAM)
        detections = []
        detected_ids = set()
        for s in sorted(snaps, key=lambda s: s.object_id):
            nearer = [o.mask for o in snaps if o.proximity > s.proximity]
            hidden = s.mask.intersection_count(nearer[0].union(*nearer[1:])) if nearer else 0
            visible = 1.0 - hidden / s.mask.area
            # Draw jitter for every object so detection noise stays aligned across visibility changes.
            noise = (
                _truncated_normal(jitter_rng, scenario.detection_noise, 4)
                if scenario.detection_noise > 0
                else np.zeros(4)
            )
            if visible < scenario.occlusion_visibility:
                continue
            x1, y1, x2, y2 = np.asarray(s.bbox) + noise
            if x2 - x1 < 1:
                x1, x2 = (x1 + x2 - 1) / 2, (x1 + x2 + 1) / 2
            if y2 - y1 < 1:
                y1, y2 = (y1 + y2 - 1) / 2, (y1 + y2 + 1) / 2
            jbox = (float(x1), float(y1), float(x2), float(y2))
            obj = next(o for o in scenario.objects if o.object_id == s.object_id)
            mask = shape_mask(jbox, obj.mask_shape, obj.mask_fill, W, H)
            if not mask:
                continue
            detections.append(Detection(s.object_id, clip_bbox(jbox, cam), mask))
            detected_ids.add(s.object_id)

        depth = DepthMap(W, H, [(s.mask, s.proximity) for s in snaps], scenario.background_proximity)
        frames.append(FrameObservation(f, detections, depth, profile))
        truths.append(
            FrameTruth(
                frame_index=f,
                tx_object_id=tx_obj.object_id,
                tx_bbox=None if tx is None else clip_bbox(tx.bbox, cam),
                optimal_beam=optimal,
                blockage_flag=flag,
                blocking_object_id=blocker,
                channel_state=state,
                tx_detected=tx_obj.object_id in detected_ids,
            )
        )

    if not tx_ever_visible:
        raise ScenarioError(f"scenario {scenario.name!r}: the TX is never inside the image")
    return frames, GroundTruth(truths)

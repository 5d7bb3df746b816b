"""Canonical scenario suites bundled with the package.

All trajectories use integer pixel velocities so that warped masks
reproduce the rendered ones exactly. Velocity changes are kept well away
from blockage onsets.
"""

from __future__ import annotations

import numpy as np

from .channel import ArrayConfig, BeamCodebook
from .geometry import CameraModel
from .scene import DISTRACTOR_ROLE, TX_ROLE, Scenario, SceneObject

WIDTH, HEIGHT = 1280, 720
VANISHING_POINT = (900.0, -1800.0)
STEERING_RANGE = (-45.0, 45.0)
NUM_BEAMS = 64

TX_PROXIMITY = 1.0
FRONT_PROXIMITY = 2.0
BEHIND_PROXIMITY = 0.5

# Crossing geometry shared by the blockage and recovery suites.
TX_BOX = (0.0, 400.0, 120.0, 480.0)
BLOCKER_W, BLOCKER_TOP, BLOCKER_BOTTOM = 90.0, 330.0, 560.0
LEAD_FRAMES = 14


def camera() -> CameraModel:
    return CameraModel(WIDTH, HEIGHT, vanishing_point=VANISHING_POINT)


def _scenario(name, frames, objects, **kw) -> Scenario:
    array = ArrayConfig()
    return Scenario(
        name=name,
        frame_count=frames,
        camera=camera(),
        codebook=BeamCodebook.uniform(NUM_BEAMS, STEERING_RANGE, array),
        array=array,
        objects=objects,
        codebook_source={"uniform": NUM_BEAMS, "steering_range": list(STEERING_RANGE)},
        **kw,
    )


def _box_at(x1, y1, w, h):
    return (float(x1), float(y1), float(x1 + w), float(y1 + h))


def _moving(obj_id, role, start, end, box, velocity, shape="rectangle", proximity=1.0) -> SceneObject:
    """Constant-velocity object alive on frames ``start..end``."""
    dx, dy = velocity
    n = end - start
    moved = (box[0] + dx * n, box[1] + dy * n, box[2] + dx * n, box[3] + dy * n)
    return SceneObject(obj_id, role, [(start, box), (end, moved)], shape, 1.0, [(0, proximity)])


def _tx(x0, velocity, frames, y_box=TX_BOX, obj_id=1) -> SceneObject:
    box = (float(x0), y_box[1], float(x0 + y_box[2] - y_box[0]), y_box[3])
    return _moving(obj_id, TX_ROLE, 0, frames - 1, box, (velocity, 0), "ellipse", TX_PROXIMITY)


def _crosser(obj_id, tx: SceneObject, onset: int, speed: int, from_left: bool, proximity=FRONT_PROXIMITY,
             lead=LEAD_FRAMES, tail=12):
    """A blocker whose leading edge first shares a pixel with the TX box at ``onset``.

    Speeds and positions are integers, so the first shared pixel column is
    exact: the leading edge sits one pixel past the TX box edge at ``onset``.
    """
    tx1, _, tx2, _ = tx.bbox_at(onset)
    if from_left:
        x_at_onset = tx1 + 1 - BLOCKER_W
        v = speed
    else:
        x_at_onset = tx2 - 1
        v = -speed
    start = onset - lead
    x_start = x_at_onset - v * lead
    tx_w = tx2 - tx1
    travel = int(np.ceil((tx_w + BLOCKER_W) / speed)) + tail
    box = _box_at(x_start, BLOCKER_TOP, BLOCKER_W, BLOCKER_BOTTOM - BLOCKER_TOP)
    return _moving(obj_id, DISTRACTOR_ROLE, start, onset + travel, box, (v, 0), "rectangle", proximity)


def _near_miss(obj_id, tx: SceneObject, turn: int, speed: int, closest_gap: int, from_left: bool, lead=LEAD_FRAMES):
    """A blocker that closes to ``closest_gap`` pixels of the TX box at ``turn`` and backs off."""
    tx1, _, tx2, _ = tx.bbox_at(turn)
    if from_left:
        x_turn = tx1 - closest_gap - BLOCKER_W
        v = speed
    else:
        x_turn = tx2 + closest_gap
        v = -speed
    h = BLOCKER_BOTTOM - BLOCKER_TOP
    start = turn - lead
    away = _box_at(x_turn - v * lead, BLOCKER_TOP, BLOCKER_W, h)
    wps = [(start, away), (turn, _box_at(x_turn, BLOCKER_TOP, BLOCKER_W, h)), (turn + lead, away)]
    return SceneObject(obj_id, DISTRACTOR_ROLE, wps, "rectangle", 1.0, [(0, FRONT_PROXIMITY)])


# -- beam selection -----------------------------------------------------------


def beam_suite() -> list[Scenario]:
    """One vehicle sweeping the whole image at varying depth, plus a bystander."""
    tx = SceneObject(
        1,
        TX_ROLE,
        [
            (0, _box_at(60, 430, 170, 100)),
            (170, _box_at(1050, 300, 150, 90)),
            (340, _box_at(600, 580, 200, 120)),
            (509, _box_at(80, 380, 160, 100)),
        ],
        "ellipse",
        1.0,
        [(0, TX_PROXIMITY)],
    )
    bystander = SceneObject(2, DISTRACTOR_ROLE, [(0, _box_at(40, 40, 90, 60)), (509, _box_at(1140, 40, 90, 60))],
                            "ellipse", 1.0, [(0, 0.6)])
    return [_scenario("beam_sweep", 510, [tx, bystander])]


# -- identification -------------------------------------------------------------


def _three_objects(frames: int):
    tx = SceneObject(1, TX_ROLE, [(0, _box_at(520, 380, 180, 110)), (frames - 1, _box_at(600, 420, 180, 110))],
                     "ellipse", 1.0, [(0, TX_PROXIMITY)])
    left = SceneObject(2, DISTRACTOR_ROLE, [(0, _box_at(60, 300, 120, 80)), (frames - 1, _box_at(150, 360, 120, 80))],
                       "ellipse", 1.0, [(0, 0.9)])
    right = SceneObject(3, DISTRACTOR_ROLE, [(0, _box_at(1100, 500, 120, 80)), (frames - 1, _box_at(1020, 440, 120, 80))],
                        "ellipse", 1.0, [(0, 0.9)])
    return [tx, left, right]


def identification_suite() -> list[Scenario]:
    return [
        _scenario("id_three_clean", 200, _three_objects(200)),
        _scenario("id_three_noisy", 500, _three_objects(500), power_noise_db=3.0),
    ]


# -- blockage -------------------------------------------------------------------


def _episode_plan(tx, plan, first_id=2):
    """Turn ``[(kind, frame, speed, from_left, extra)]`` into distractor objects."""
    objs = []
    for k, (kind, frame, speed, from_left, extra) in enumerate(plan):
        oid = first_id + k
        if kind == "front":
            objs.append(_crosser(oid, tx, frame, speed, from_left))
        elif kind == "behind":
            objs.append(_crosser(oid, tx, frame, speed, from_left, proximity=BEHIND_PROXIMITY))
        elif kind == "near":
            objs.append(_near_miss(oid, tx, frame, speed, extra, from_left))
        else:
            raise ValueError(kind)
    return objs


def blockage_suite() -> list[Scenario]:
    """Crossing blockers in front of and behind a slowly moving TX, with a few near misses."""
    out = []
    tx = _tx(560, 0, 330)
    plan = [
        ("front", 30, 8, True, None),
        ("front", 75, 10, False, None),
        ("front", 120, 6, True, None),
        ("front", 175, 12, False, None),
        ("front", 215, 8, False, None),
        ("front", 260, 9, True, None),
        ("front", 300, 10, True, None),
    ]
    out.append(_scenario("cross_front_static_tx", 330, [tx, *_episode_plan(tx, plan)]))

    tx = _tx(420, 1, 380)
    plan = [
        ("front", 30, 8, True, None),
        ("near", 70, 8, False, 14),
        ("front", 100, 10, False, None),
        ("behind", 140, 8, True, None),
        ("front", 180, 7, True, None),
        ("near", 220, 8, True, 4),
        ("front", 255, 11, False, None),
        ("behind", 295, 9, False, None),
        ("front", 340, 8, True, None),
    ]
    out.append(_scenario("cross_mixed_right_tx", 380, [tx, *_episode_plan(tx, plan)]))

    tx = _tx(760, -1, 380)
    plan = [
        ("front", 30, 9, False, None),
        ("front", 75, 8, True, None),
        ("near", 110, 8, True, 14),
        ("front", 140, 12, True, None),
        ("behind", 180, 10, True, None),
        ("front", 215, 6, False, None),
        ("front", 265, 10, True, None),
        ("near", 300, 9, False, 14),
        ("front", 340, 8, False, None),
    ]
    out.append(_scenario("cross_mixed_left_tx", 380, [tx, *_episode_plan(tx, plan)]))

    tx = _tx(600, 0, 200)
    plan = [
        ("front", 30, 8, True, None),
        ("front", 70, 10, False, None),
        ("front", 110, 9, True, None),
        ("front", 150, 8, False, None),
    ]
    out.append(_scenario("cross_front_short", 200, [tx, *_episode_plan(tx, plan)]))

    tx = _tx(300, 2, 300)
    plan = [
        ("front", 30, 10, True, None),
        ("front", 75, 8, False, None),
        ("front", 120, 12, True, None),
        ("near", 160, 10, False, 20),
        ("front", 195, 9, False, None),
        ("front", 240, 7, True, None),
        ("front", 280, 8, False, None),
    ]
    out.append(_scenario("cross_front_moving_tx", 300, [tx, *_episode_plan(tx, plan)]))
    return out


def behind_suite() -> list[Scenario]:
    tx = _tx(560, 0, 220)
    plan = [
        ("behind", 30, 8, True, None),
        ("behind", 75, 10, False, None),
        ("behind", 120, 6, True, None),
        ("behind", 170, 12, False, None),
    ]
    return [_scenario("cross_behind_only", 220, [tx, *_episode_plan(tx, plan)])]


# -- recovery -------------------------------------------------------------------


def _decoy_scenario(name: str, speed: int, truck_w: int, decoy_y: float) -> Scenario:
    """The TX drives behind a parked truck, waits, and leaves the way it came.

    A farther decoy follows the path the TX would have taken, so the box
    extrapolated from before the occlusion lands on the decoy once the TX
    is back in the clear.
    """
    tx_w, tx_h = TX_BOX[2] - TX_BOX[0], TX_BOX[3] - TX_BOX[1]
    dw, dh = 0.8 * tx_w, 0.8 * tx_h
    truck_x = 560
    x0 = truck_x - tx_w - 20 * speed
    # TX turns back once fully behind the truck
    turn = int(np.ceil((truck_x - x0) / speed)) + 1
    x_turn = x0 + speed * turn
    # frames from turning back until the TX box is clear of the truck on the left
    back = int(np.ceil((x_turn - (truck_x - tx_w - 2)) / speed))
    # the extrapolated path, counted from about where the TX vanishes, must be
    # mostly past the truck's right edge by then
    vanish = (truck_x - tx_w / 2 - x0) / speed
    need = (truck_x + truck_w - 0.3 * dw - x0) / speed - vanish
    pause = max(0, int(np.ceil(need - (turn - vanish) - back))) + 2
    leave = turn + pause
    end = leave + back + 20
    tx = SceneObject(
        1,
        TX_ROLE,
        [
            (0, _box_at(x0, TX_BOX[1], tx_w, tx_h)),
            (turn, _box_at(x_turn, TX_BOX[1], tx_w, tx_h)),
            (leave, _box_at(x_turn, TX_BOX[1], tx_w, tx_h)),
            (end, _box_at(x_turn - speed * (end - leave), TX_BOX[1], tx_w, tx_h)),
        ],
        "ellipse",
        1.0,
        [(0, TX_PROXIMITY)],
    )
    truck_box = _box_at(truck_x, BLOCKER_TOP, truck_w, BLOCKER_BOTTOM - BLOCKER_TOP)
    truck = _moving(2, DISTRACTOR_ROLE, 0, end, truck_box, (0, 0), "rectangle", FRONT_PROXIMITY)
    # decoy: the constant-velocity continuation, appearing while hidden behind the truck
    appear = turn
    last = min(end, int((WIDTH - dw - x0) / speed))
    decoy_box = _box_at(x0 + speed * appear, decoy_y, dw, dh)
    decoy = _moving(3, DISTRACTOR_ROLE, appear, last, decoy_box, (speed, 0), "ellipse", 0.8)
    return _scenario(name, end + 1, [tx, truck, decoy])


def recovery_suite() -> list[Scenario]:
    """Fifteen ordinary occlusions followed by five decoy occlusions."""
    out = []
    variants = [
        (0, 8, True), (0, 10, False), (0, 6, True), (1, 8, False), (-1, 9, True),
        (2, 12, False), (0, 7, False), (1, 10, True), (-2, 8, False), (0, 11, True),
        (1, 6, False), (-1, 12, True), (2, 9, True), (0, 9, False), (-1, 7, False),
    ]
    for k, (u, speed, from_left) in enumerate(variants):
        tx = _tx(580, u, 100)
        blocker = _crosser(2, tx, 40, speed, from_left)
        out.append(_scenario(f"recover_cross_{k:02d}", 100, [tx, blocker]))
    decoys = [(8, 240, 400.0), (10, 300, 410.0), (6, 200, 404.0), (9, 260, 396.0), (12, 320, 408.0)]
    for k, (speed, truck_w, y) in enumerate(decoys):
        out.append(_decoy_scenario(f"recover_decoy_{k:02d}", speed, truck_w, y))
    return out


SUITE_BUILDERS = {
    "beam": beam_suite,
    "identification": identification_suite,
    "blockage": blockage_suite,
    "behind": behind_suite,
    "recovery": recovery_suite,
}


def all_suites() -> dict:
    return {name: build() for name, build in SUITE_BUILDERS.items()}

"""Inspection trajectory around a located turbine, and its CSV form.

One pass runs at a fixed height: front center, lateral sweep out past the
blade tip, a half-circle around the tip to the back side, and a lateral sweep
back to the center behind the rotor. Three passes are flown: hub height, then
``+height_offset`` (in reverse, camera tilted down) and ``-height_offset``
(camera tilted up), joined by vertical transits on the same side of the rotor.
"""

from __future__ import annotations

import csv
import json
import math
from dataclasses import asdict, dataclass
from enum import Enum
from typing import List, Optional, Sequence, Tuple

import numpy as np

from .geometry import Pose4, TurbineParams, points_to_disc_distance, wrap_angle


class Action(str, Enum):
    TRANSIT = "transit"
    HOLD = "hold_for_trigger"


class Phase(str, Enum):
    FRONT_CENTER = "front_center"
    FRONT_TO_TIP = "front_to_tip"
    TIP_TURN = "tip_turn"
    BACK_TO_CENTER = "back_to_center"
    OFFSET_HIGH = "offset_pass_high"
    OFFSET_LOW = "offset_pass_low"


@dataclass(frozen=True)
class TrajectoryParams:
    standoff_m: float = 10.0
    tip_margin_m: float = 2.0
    height_offset_m: float = 10.0
    gimbal_tilt_deg: float = 45.0
    lateral_step_m: float = 2.0
    arc_step_deg: float = 10.0
    # hold points as fractions of the rotor radius along each sweep
    hold_span_fractions: Tuple[float, ...] = (0.2, 0.5, 0.9)

    def __post_init__(self):
        if not (self.lateral_step_m > 0 and self.arc_step_deg > 0):
            raise ValueError("lateral_step_m and arc_step_deg must be > 0")
        if self.tip_margin_m < 0 or self.height_offset_m < 0:
            raise ValueError("tip_margin_m and height_offset_m must be >= 0")
        if not 0 <= self.gimbal_tilt_deg < 90:
            raise ValueError("gimbal_tilt_deg must be in [0, 90)")
        object.__setattr__(self, "hold_span_fractions", tuple(float(f) for f in self.hold_span_fractions))
        if any(not 0 < f <= 1 for f in self.hold_span_fractions):
            raise ValueError("hold_span_fractions must lie in (0, 1]")


@dataclass(frozen=True)
class Waypoint:
    position: Tuple[float, float, float]
    heading_yaw: float
    gimbal_pitch_deg: float  # positive tilts the camera down
    action: Action
    phase: Phase

    @property
    def xyz(self) -> np.ndarray:
        return np.array(self.position)

    def beam_direction(self) -> np.ndarray:
        """Unit vector along the camera / rangefinder axis."""
        p = math.radians(self.gimbal_pitch_deg)
        return np.array(
            [math.cos(p) * math.cos(self.heading_yaw), math.cos(p) * math.sin(self.heading_yaw), -math.sin(p)]
        )


@dataclass(frozen=True, eq=False)
class Trajectory:
    waypoints: Tuple[Waypoint, ...]
    pose: Optional[Pose4] = None
    params: Optional[TrajectoryParams] = None
    turbine: Optional[TurbineParams] = None

    def __len__(self) -> int:
        return len(self.waypoints)

    def positions(self) -> np.ndarray:
        return np.array([w.position for w in self.waypoints]).reshape(-1, 3)

    def holds(self) -> List[Tuple[int, Waypoint]]:
        return [(i, w) for i, w in enumerate(self.waypoints) if w.action is Action.HOLD]

    def step_bound(self) -> float:
        """Largest gap allowed between consecutive waypoints."""
        p, tb = self.params, self.turbine
        a = p.standoff_m + 0.5 * tb.rotor_width_m
        chord = 2 * a * math.sin(math.radians(min(p.arc_step_deg, 180.0)) / 2)
        return max(p.lateral_step_m, chord)


def sweep_offsets(length: float, step: float, extra: Sequence[float] = ()) -> np.ndarray:
    """0..length at spacing <= step, with ``extra`` offsets merged in."""
    n = max(1, int(math.ceil(length / step - 1e-9)))
    ys = np.linspace(0.0, length, n + 1)
    ys = np.unique(np.concatenate([ys, [e for e in extra if 0 <= e <= length]]))
    return ys


def _between(a: np.ndarray, b: np.ndarray, step: float) -> List[np.ndarray]:
    """Points strictly between a and b at spacing <= step."""
    dist = float(np.linalg.norm(b - a))
    n = int(math.ceil(dist / step - 1e-9))
    return [a + (b - a) * k / n for k in range(1, n)]


def generate_trajectory(
    turbine: TurbineParams, pose: Pose4 = Pose4(), params: TrajectoryParams = TrajectoryParams()
) -> Trajectory:
    """Five-step inspection pattern around ``turbine`` placed in the world by ``pose``.

    Sweep lines run ``standoff_m + rotor_width_m / 2`` from the rotor mid-plane,
    so every waypoint is at least ``standoff_m`` from the swept disc.
    """
    if not params.standoff_m > 0.5 * turbine.rotor_width_m:
        raise ValueError("unsafe standoff")
    world = turbine.posed(pose)
    hub, n, e = world.hub, world.normal, world.lateral
    up = np.array([0.0, 0.0, 1.0])
    R = world.rotor_radius_m
    a = params.standoff_m + 0.5 * world.rotor_width_m
    reach = R + params.tip_margin_m
    hold_ys = [f * R for f in params.hold_span_fractions]
    ys = sweep_offsets(reach, params.lateral_step_m, hold_ys)
    face_front = wrap_angle(world.rotor_normal_yaw + math.pi)  # looking back at the rotor
    face_back = world.rotor_normal_yaw

    n_arc = max(2, int(math.ceil(180.0 / params.arc_step_deg - 1e-9)))
    arc_phi = np.linspace(0.0, math.pi, n_arc + 1)[1:-1]
    tip = hub + reach * e

    def one_pass(dz: float, pitch: float, label: Optional[Phase]):
        pts = []
        for y in ys:
            is_hold = any(abs(y - h) < 1e-9 for h in hold_ys)
            ph = Phase.FRONT_CENTER if y == 0 else Phase.FRONT_TO_TIP
            pts.append((hub + a * n + y * e + dz * up, face_front, pitch, is_hold, label or ph))
        for phi in arc_phi:
            off = a * (math.cos(phi) * n + math.sin(phi) * e)
            heading = math.atan2(-off[1], -off[0])  # toward the tip point
            pts.append((tip + off + dz * up, heading, pitch, False, label or Phase.TIP_TURN))
        for y in ys[::-1]:
            is_hold = any(abs(y - h) < 1e-9 for h in hold_ys)
            pts.append((hub - a * n + y * e + dz * up, face_back, pitch, is_hold, label or Phase.BACK_TO_CENTER))
        return pts

    h = params.height_offset_m
    tilt = params.gimbal_tilt_deg
    passes = [
        one_pass(0.0, 0.0, None),
        one_pass(h, tilt, Phase.OFFSET_HIGH)[::-1],
        one_pass(-h, -tilt, Phase.OFFSET_LOW),
    ]

    wps: List[Waypoint] = []
    for k, pts in enumerate(passes):
        if k and wps:
            prev = wps[-1]
            start = pts[0]
            for q in _between(prev.xyz, start[0], params.lateral_step_m):
                wps.append(Waypoint(tuple(q.tolist()), prev.heading_yaw, start[2], Action.TRANSIT, start[4]))
        for pos, heading, pitch, hold, phase in pts:
            wps.append(
                Waypoint(
                    tuple(float(v) for v in pos),
                    float(heading),
                    float(pitch),
                    Action.HOLD if hold else Action.TRANSIT,
                    phase,
                )
            )
    return Trajectory(tuple(wps), pose, params, turbine)


def min_disc_clearance(traj: Trajectory, turbine_world: TurbineParams) -> float:
    return float(points_to_disc_distance(traj.positions(), turbine_world).min())


# -- CSV ------------------------------------------------------------------------

CSV_HEADER = ["index", "x", "y", "z", "heading_yaw_rad", "gimbal_pitch_deg", "action", "phase"]


def _f6(v: float) -> str:
    s = f"{v:.6f}"
    return "0.000000" if s == "-0.000000" else s


def format_trajectory_csv(traj: Trajectory) -> str:
    lines = [",".join(CSV_HEADER)]
    for i, w in enumerate(traj.waypoints):
        x, y, z = w.position
        lines.append(
            ",".join(
                [str(i), _f6(x), _f6(y), _f6(z), _f6(w.heading_yaw), _f6(w.gimbal_pitch_deg), w.action.value, w.phase.value]
            )
        )
    return "\n".join(lines) + "\n"


def export_trajectory_csv(traj: Trajectory, path) -> None:
    with open(path, "w", newline="") as fh:
        fh.write(format_trajectory_csv(traj))


def read_trajectory_csv(path) -> Trajectory:
    wps = []
    with open(path, newline="") as fh:
        reader = csv.DictReader(fh)
        if reader.fieldnames != CSV_HEADER:
            raise ValueError(f"unexpected trajectory CSV header: {reader.fieldnames}")
        for row in reader:
            wps.append(
                Waypoint(
                    (float(row["x"]), float(row["y"]), float(row["z"])),
                    float(row["heading_yaw_rad"]),
                    float(row["gimbal_pitch_deg"]),
                    Action(row["action"]),
                    Phase(row["phase"]),
                )
            )
    return Trajectory(tuple(wps))


def trajectory_params_json(traj: Trajectory) -> dict:
    """Resolved inputs, written next to the CSV."""
    doc = {"params": asdict(traj.params) if traj.params else None}
    doc["pose"] = traj.pose.as_dict() if traj.pose else None
    if traj.turbine is not None:
        t = asdict(traj.turbine)
        t["hub_position"] = list(t["hub_position"])
        doc["turbine"] = t
    doc["params"]["hold_span_fractions"] = list(doc["params"]["hold_span_fractions"]) if doc["params"] else None
    return doc


def write_trajectory_json(traj: Trajectory, path) -> None:
    with open(path, "w") as fh:
        json.dump(trajectory_params_json(traj), fh, indent=2, sort_keys=True)
        fh.write("\n")

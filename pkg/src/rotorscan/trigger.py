"""Rangefinder-gated camera trigger at hold points, with an analytic crossing oracle."""

from __future__ import annotations

import csv
import json
import math
from dataclasses import dataclass, replace
from typing import List, NamedTuple, Tuple

import numpy as np

from .geometry import wrap_angle
from .scansim import BLADE, SceneSpec, _ray_plane, cast_rays
from .trajectory import Trajectory


@dataclass(frozen=True)
class TriggerConfig:
    gate_range_m: float = 12.0
    debounce_s: float = 0.3
    rangefinder_rate_hz: float = 100.0
    range_noise_sigma_m: float = 0.05

    def __post_init__(self):
        if not self.gate_range_m > 0:
            raise ValueError("gate_range_m must be > 0")
        if self.debounce_s < 0:
            raise ValueError("debounce_s must be >= 0")
        if not self.rangefinder_rate_hz > 0:
            raise ValueError("rangefinder_rate_hz must be > 0")
        if self.range_noise_sigma_m < 0:
            raise ValueError("range_noise_sigma_m must be >= 0")


class Crossing(NamedTuple):
    time: float  # beam centered on the blade (clipped to the window when parked)
    blade_index: int
    start: float  # blade edge enters the beam
    end: float


class TriggerEvent(NamedTuple):
    timestamp_s: float
    measured_range_m: float
    blade_index: int  # ground truth, -1 if not a blade


def _disc_hit(scene: SceneSpec, origin, direction):
    """(range, rho, phi) of the ray's hit on the rotor plane, or None."""
    tb = scene.turbine
    if tb is None:
        return None
    o = np.asarray(origin, dtype=float)
    d = np.asarray(direction, dtype=float)
    d = d / np.linalg.norm(d)
    tp = float(_ray_plane(o[None], d[None], tb.hub, tb.normal)[0])
    if not math.isfinite(tp):
        return None
    p = o + tp * d - tb.hub
    a, b = float(p @ tb.lateral), float(p[2])
    rho = math.hypot(a, b)
    if rho > tb.rotor_radius_m:
        return None
    return tp, rho, math.atan2(b, a)


def angular_half_width(scene: SceneSpec, rho: float) -> float:
    """Half the angle a flat blade of the scene's chord subtends at radius ``rho``."""
    x = 0.5 * scene.blade_chord_m / rho if rho > 0 else math.inf
    return math.asin(x) if x < 1 else 0.5 * math.pi


def blade_crossing_times(scene: SceneSpec, ray_origin, ray_dir, horizon_s: float, t_start: float = 0.0) -> List[Crossing]:
    """Closed-form blade passages through the beam within ``[t_start, t_start + horizon_s]``.

    Blade ``i`` is centered on the hit point when its angle equals the hit
    point's polar angle modulo 2 pi. Intervals are clipped to the window.
    """
    hit = _disc_hit(scene, ray_origin, ray_dir)
    if hit is None:
        return []
    _, rho, phi = hit
    half = angular_half_width(scene, rho)
    t0, t1 = float(t_start), float(t_start) + float(horizon_s)
    w = scene.rotor_speed_rad_s
    out = []
    for i, th in enumerate(scene.blade_angles(0.0).tolist()):
        if w == 0:
            if abs(wrap_angle(phi - th)) <= half:
                out.append(Crossing(t0, i, t0, t1))
            continue
        period = 2 * math.pi / w
        base = wrap_angle(phi - th) / w  # one solution of th + w t = phi (mod 2 pi)
        dt = half / w
        k = math.floor((t0 - dt - base) / period)
        while True:
            tc = base + k * period
            if tc - dt > t1:
                break
            if tc + dt >= t0:
                out.append(Crossing(tc, i, max(t0, tc - dt), min(t1, tc + dt)))
            k += 1
    out.sort()
    return out


def sample_times(horizon_s: float, rate_hz: float, t_start: float = 0.0) -> np.ndarray:
    n = int(math.floor(horizon_s * rate_hz + 1e-9))
    return t_start + np.arange(n + 1) / rate_hz


def true_ranges(scene: SceneSpec, origin, direction, times: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
    """Noise-free range and hit label along a fixed ray at each time."""
    d = np.asarray(direction, dtype=float)
    d = d / np.linalg.norm(d)
    o = np.asarray(origin, dtype=float)
    r0, l0 = cast_rays(scene, o, d[None], 0.0, blades=False)
    rng = np.full(times.shape, r0[0])
    lab = np.full(times.shape, l0[0], dtype=np.int64)
    tb = scene.turbine
    if tb is None:
        return rng, lab
    tp = float(_ray_plane(o[None], d[None], tb.hub, tb.normal)[0])
    if not (math.isfinite(tp) and tp < r0[0]):
        return rng, lab
    p = o + tp * d - tb.hub
    a, b = float(p @ tb.lateral), float(p[2])
    half = 0.5 * scene.blade_chord_m
    # same coverage test as the scan ray caster, vectorized over time
    for i in reversed(range(scene.blade_count)):
        th = scene.initial_blade_phase_rad + scene.rotor_speed_rad_s * times + 2 * math.pi * i / scene.blade_count
        c, s = np.cos(th), np.sin(th)
        along = a * c + b * s
        perp = -a * s + b * c
        inside = (along >= 0) & (along <= tb.rotor_radius_m) & (np.abs(perp) <= half)
        rng = np.where(inside, tp, rng)
        lab = np.where(inside, BLADE + i, lab)
    return rng, lab


def simulate_trigger(
    scene: SceneSpec,
    ray_origin,
    ray_dir,
    cfg: TriggerConfig = TriggerConfig(),
    horizon_s: float = 10.0,
    seed=0,
    t_start: float = 0.0,
) -> List[TriggerEvent]:
    """Sample the rangefinder and fire on rising edges through the gate.

    A sample fires when its noisy range is below the gate, the previous sample
    was not, and at least ``debounce_s`` has passed since the last event.
    """
    times = sample_times(horizon_s, cfg.rangefinder_rate_hz, t_start)
    rng_true, lab = true_ranges(scene, ray_origin, ray_dir, times)
    meas = rng_true.copy()
    if cfg.range_noise_sigma_m > 0:
        meas = meas + np.random.default_rng(seed).normal(0.0, cfg.range_noise_sigma_m, meas.size)
    below = meas < cfg.gate_range_m
    rising = np.flatnonzero(below[1:] & ~below[:-1]) + 1
    events: List[TriggerEvent] = []
    last = -math.inf
    for k in rising:
        t = float(times[k])
        if t - last >= cfg.debounce_s:
            blade = int(lab[k] - BLADE) if lab[k] >= BLADE else -1
            events.append(TriggerEvent(t, float(meas[k]), blade))
            last = t
    return events


@dataclass(frozen=True)
class HoldReport:
    waypoint_index: int
    phase: str
    gate_range_m: float
    events: Tuple[TriggerEvent, ...]

    def blade_counts(self, blade_count: int) -> List[int]:
        counts = [0] * blade_count
        for e in self.events:
            if 0 <= e.blade_index < blade_count:
                counts[e.blade_index] += 1
        return counts


@dataclass(frozen=True)
class InspectionReport:
    holds: Tuple[HoldReport, ...]
    blade_count: int
    dwell_s: float

    @property
    def total_events(self) -> int:
        return sum(len(h.events) for h in self.holds)

    def all_blades_everywhere(self) -> bool:
        return bool(self.holds) and all(min(h.blade_counts(self.blade_count)) > 0 for h in self.holds)

    def coverage_json(self) -> dict:
        return {
            "dwell_s": self.dwell_s,
            "blade_count": self.blade_count,
            "total_events": self.total_events,
            "all_blades_at_every_hold": self.all_blades_everywhere(),
            "holds": [
                {
                    "waypoint_index": h.waypoint_index,
                    "phase": h.phase,
                    "gate_range_m": h.gate_range_m,
                    "events": len(h.events),
                    "events_per_blade": h.blade_counts(self.blade_count),
                }
                for h in self.holds
            ],
        }


def run_inspection(
    trajectory: Trajectory,
    scene: SceneSpec,
    cfg: TriggerConfig = TriggerConfig(),
    dwell_s_per_hold: float = 12.0,
    seed: int = 0,
) -> InspectionReport:
    """Hold at each hold waypoint in turn for ``dwell_s_per_hold`` on a shared mission clock.

    The gate is stretched by 1 / cos(pitch) at tilted holds so it covers the
    same horizontal reach as a level beam.
    """
    reports = []
    for k, (wi, wp) in enumerate(trajectory.holds()):
        pitch = math.radians(wp.gimbal_pitch_deg)
        gated = replace(cfg, gate_range_m=cfg.gate_range_m / math.cos(pitch))
        events = simulate_trigger(
            scene, wp.xyz, wp.beam_direction(), gated, dwell_s_per_hold, seed=[int(seed), wi],
            t_start=k * dwell_s_per_hold,
        )
        reports.append(HoldReport(wi, wp.phase.value, gated.gate_range_m, tuple(events)))
    return InspectionReport(tuple(reports), scene.blade_count, float(dwell_s_per_hold))


def write_events_csv(report: InspectionReport, path) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["waypoint_index", "timestamp_s", "measured_range_m"])
        for h in report.holds:
            for e in h.events:
                w.writerow([h.waypoint_index, f"{e.timestamp_s:.6f}", f"{e.measured_range_m:.6f}"])


def write_coverage_json(report: InspectionReport, path) -> None:
    with open(path, "w") as fh:
        json.dump(report.coverage_json(), fh, indent=2, sort_keys=True)
        fh.write("\n")

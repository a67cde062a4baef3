"""Synthetic spinning-LiDAR scans of a turbine scene seen from a climbing UAV.

The scene holds a horizontal ground plane, the turbine pillar (lateral cylinder
surface), flat rotating blade panels in the rotor plane, and spherical clutter.
Blade ``i`` points along angle ``theta0 + omega * t + 2 pi i / blade_count``
measured in the rotor plane from the lateral axis toward +z.
"""

from __future__ import annotations

import csv
import math
import os
from dataclasses import dataclass
from functools import lru_cache
from typing import List, Optional, Tuple

import numpy as np

from .geometry import Pose4, PointCloud, TurbineParams, read_ply, write_ply, yaw_matrix

# hit labels
NO_HIT = -1
GROUND = 0
PILLAR = 1
CLUTTER = 2
BLADE = 3  # blade i is labelled BLADE + i

_EPS = 1e-9


@dataclass(frozen=True)
class Sphere:
    center: Tuple[float, float, float]
    radius: float

    def __post_init__(self):
        if not self.radius > 0:
            raise ValueError("sphere radius must be > 0")
        object.__setattr__(self, "center", tuple(float(c) for c in self.center))


@dataclass(frozen=True)
class SceneSpec:
    turbine: Optional[TurbineParams] = None
    blade_count: int = 3
    blade_chord_m: float = 2.0
    rotor_speed_rad_s: float = 0.0
    initial_blade_phase_rad: float = 0.0
    clutter: Tuple[Sphere, ...] = ()
    ground_z: Optional[float] = 0.0

    def __post_init__(self):
        if self.blade_count < 1:
            raise ValueError("blade_count must be >= 1")
        if self.rotor_speed_rad_s < 0:
            raise ValueError("rotor_speed_rad_s must be >= 0")
        if not self.blade_chord_m > 0:
            raise ValueError("blade_chord_m must be > 0")
        object.__setattr__(self, "clutter", tuple(self.clutter))

    def blade_angles(self, t: float) -> np.ndarray:
        i = np.arange(self.blade_count)
        return (
            self.initial_blade_phase_rad
            + self.rotor_speed_rad_s * t
            + 2.0 * math.pi * i / self.blade_count
        )


@dataclass(frozen=True)
class SensorSpec:
    channels: int = 32
    vertical_fov_deg: Tuple[float, float] = (-22.5, 22.5)
    azimuth_step_deg: float = 0.35
    max_range_m: float = 100.0
    range_noise_sigma_m: float = 0.02
    scan_rate_hz: float = 5.0

    def __post_init__(self):
        if self.channels < 1:
            raise ValueError("channels must be >= 1")
        if not self.max_range_m > 0:
            raise ValueError("max_range_m must be > 0")
        if self.range_noise_sigma_m < 0:
            raise ValueError("range_noise_sigma_m must be >= 0")
        if not (self.azimuth_step_deg > 0 and self.scan_rate_hz > 0):
            raise ValueError("azimuth_step_deg and scan_rate_hz must be > 0")
        object.__setattr__(self, "vertical_fov_deg", tuple(float(v) for v in self.vertical_fov_deg))

    def ray_directions(self) -> np.ndarray:
        """Unit ray directions in the sensor frame, channel-major."""
        return _ray_directions(
            self.channels, self.vertical_fov_deg, self.azimuth_step_deg
        ).copy()


@lru_cache(maxsize=8)
def _ray_directions(channels, fov, az_step) -> np.ndarray:
    elev = np.radians(np.linspace(fov[0], fov[1], channels))
    az = np.radians(np.arange(0.0, 360.0 - 1e-9, az_step))
    el, a = np.meshgrid(elev, az, indexing="ij")
    d = np.stack([np.cos(el) * np.cos(a), np.cos(el) * np.sin(a), np.sin(el)], axis=-1)
    return d.reshape(-1, 3)


@dataclass(frozen=True, eq=False)
class ScanFrame:
    cloud: PointCloud
    sensor_pose: Pose4
    timestamp_s: float
    labels: Optional[np.ndarray] = None  # ground-truth hit labels, not exported


def _ray_plane(o, d, point, normal):
    denom = d @ normal
    with np.errstate(divide="ignore", invalid="ignore"):
        t = ((point - o) @ normal) / denom
    t = np.where(np.abs(denom) > 1e-12, t, np.inf)
    return np.where(t > _EPS, t, np.inf)


def _ray_sphere(o, d, center, radius):
    oc = o - center
    b = np.sum(oc * d, axis=-1)
    c = np.sum(oc * oc, axis=-1) - radius * radius
    disc = b * b - c
    sq = np.sqrt(np.maximum(disc, 0.0))
    t0, t1 = -b - sq, -b + sq
    t = np.where(t0 > _EPS, t0, np.where(t1 > _EPS, t1, np.inf))
    return np.where(disc >= 0, t, np.inf)


def _ray_pillar(o, d, turbine: TurbineParams):
    base = turbine.base
    ox = o[..., 0] - base[0]
    oy = o[..., 1] - base[1]
    dx, dy = d[..., 0], d[..., 1]
    a = dx * dx + dy * dy
    b = ox * dx + oy * dy
    c = ox * ox + oy * oy - turbine.pillar_radius_m ** 2
    disc = b * b - a * c
    ok = (disc >= 0) & (a > 1e-15)
    sq = np.sqrt(np.maximum(disc, 0.0))
    with np.errstate(divide="ignore", invalid="ignore"):
        roots = [(-b - sq) / a, (-b + sq) / a]
    best = np.full(np.shape(a), np.inf)
    oz = o[..., 2]
    for t in roots:
        z = oz + t * d[..., 2]
        valid = ok & (t > _EPS) & (z >= base[2]) & (z <= base[2] + turbine.pillar_height_m)
        best = np.where(valid & (t < best), t, best)
    return best


def blade_hit(scene: SceneSpec, rel_a, rel_b, t: float) -> np.ndarray:
    """Index of the lowest blade covering in-plane offset (a, b) from the hub, else -1."""
    R = scene.turbine.rotor_radius_m
    half = 0.5 * scene.blade_chord_m
    out = np.full(np.shape(rel_a), -1, dtype=np.int64)
    for i, th in reversed(list(enumerate(scene.blade_angles(t)))):
        c, s = math.cos(th), math.sin(th)
        along = rel_a * c + rel_b * s
        perp = -rel_a * s + rel_b * c
        inside = (along >= 0) & (along <= R) & (np.abs(perp) <= half)
        out = np.where(inside, i, out)
    return out


def cast_rays(scene: SceneSpec, origins, dirs, t: float, blades: bool = True):
    """Nearest hit range and label for each world-frame ray (unit ``dirs``)."""
    d = np.atleast_2d(np.asarray(dirs, dtype=float))
    o = np.broadcast_to(np.asarray(origins, dtype=float), d.shape)
    n = d.shape[0]
    rng = np.full(n, np.inf)
    lab = np.full(n, NO_HIT, dtype=np.int64)

    def take(tc, label):
        better = tc < rng
        rng[better] = tc[better]
        if np.ndim(label):
            lab[better] = label[better]
        else:
            lab[better] = label

    if scene.ground_z is not None:
        take(_ray_plane(o, d, np.array([0.0, 0.0, scene.ground_z]), np.array([0.0, 0.0, 1.0])), GROUND)
    for sph in scene.clutter:
        take(_ray_sphere(o, d, np.array(sph.center), sph.radius), CLUTTER)
    tb = scene.turbine
    if tb is not None:
        take(_ray_pillar(o, d, tb), PILLAR)
        tp = _ray_plane(o, d, tb.hub, tb.normal)
        hit = np.isfinite(tp)
        if blades and np.any(hit):
            p = o[hit] + tp[hit, None] * d[hit] - tb.hub
            idx = blade_hit(scene, p @ tb.lateral, p[:, 2], t)
            tc = np.full(n, np.inf)
            bl = np.full(n, NO_HIT, dtype=np.int64)
            sel = np.flatnonzero(hit)[idx >= 0]
            tc[sel] = tp[sel]
            bl[sel] = BLADE + idx[idx >= 0]
            take(tc, bl)
    return rng, lab


def simulate_scan(
    scene: SceneSpec,
    sensor: SensorSpec,
    sensor_pose: Pose4,
    t: float,
    seed=0,
) -> ScanFrame:
    """One full sensor revolution, frozen at time ``t``. Points are in the sensor frame."""
    local = _ray_directions(sensor.channels, sensor.vertical_fov_deg, sensor.azimuth_step_deg)
    world = local @ yaw_matrix(sensor_pose.yaw).T
    rng_t, lab = cast_rays(scene, sensor_pose.translation, world, t)
    keep = rng_t <= sensor.max_range_m
    r = rng_t[keep]
    if sensor.range_noise_sigma_m > 0 and r.size:
        gen = np.random.default_rng(seed)
        r = r + gen.normal(0.0, sensor.range_noise_sigma_m, r.size)
    pts = local[keep] * r[:, None]
    return ScanFrame(PointCloud(pts, "sensor"), sensor_pose, float(t), lab[keep])


def climb_poses(start_pose: Pose4, climb_rate_m_s: float, duration_s: float, scan_rate_hz: float):
    """(timestamp, pose) pairs; a scan is published at the end of each revolution."""
    if not duration_s > 0:
        raise ValueError("duration_s must be > 0")
    n = int(round(duration_s * scan_rate_hz))
    out = []
    for k in range(n):
        t = (k + 1) / scan_rate_hz
        out.append((t, Pose4(start_pose.tx, start_pose.ty, start_pose.tz + climb_rate_m_s * t, start_pose.yaw)))
    return out


def iter_climb(scene, sensor, start_pose, climb_rate_m_s, duration_s, seed=0):
    """Lazily yield frames; frame k uses its own RNG stream ``(seed, k)``."""
    for k, (t, pose) in enumerate(climb_poses(start_pose, climb_rate_m_s, duration_s, sensor.scan_rate_hz)):
        yield simulate_scan(scene, sensor, pose, t, seed=[int(seed), k])


def simulate_climb(scene, sensor, start_pose, climb_rate_m_s, duration_s, seed=0) -> List[ScanFrame]:
    return list(iter_climb(scene, sensor, start_pose, climb_rate_m_s, duration_s, seed))


# -- stream export -------------------------------------------------------------

INDEX_NAME = "index.csv"


def frame_filename(k: int) -> str:
    return f"frame_{k:05d}.ply"


def write_frames(frames, out_dir) -> int:
    """Write one PLY per frame plus ``index.csv``. Returns the frame count."""
    os.makedirs(out_dir, exist_ok=True)
    n = 0
    with open(os.path.join(out_dir, INDEX_NAME), "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["frame", "timestamp_s", "tx", "ty", "tz", "yaw"])
        for k, fr in enumerate(frames):
            write_ply(fr.cloud, os.path.join(out_dir, frame_filename(k)))
            p = fr.sensor_pose
            w.writerow([k, repr(fr.timestamp_s), repr(p.tx), repr(p.ty), repr(p.tz), repr(p.yaw)])
            n += 1
    return n


def read_frames(frames_dir):
    """Yield ScanFrames from a directory written by :func:`write_frames`."""
    with open(os.path.join(frames_dir, INDEX_NAME), newline="") as fh:
        rows = list(csv.DictReader(fh))
    for row in rows:
        k = int(row["frame"])
        cloud = read_ply(os.path.join(frames_dir, frame_filename(k)))
        pose = Pose4(float(row["tx"]), float(row["ty"]), float(row["tz"]), float(row["yaw"]))
        yield ScanFrame(cloud, pose, float(row["timestamp_s"]))

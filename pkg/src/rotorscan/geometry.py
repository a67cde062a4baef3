"""Shared geometric types: point clouds, 4-DOF poses, turbine parameters.

Conventions: z-up, right-handed, yaw is a counterclockwise rotation about +z
measured from +x. All distances are in meters.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Optional, Tuple

import numpy as np
from scipy.spatial import cKDTree


def wrap_angle(a: float) -> float:
    """Wrap an angle to (-pi, pi]."""
    w = math.pi - (math.pi - a) % (2.0 * math.pi)
    # float % can round up to exactly 2*pi for tiny negative operands
    return math.pi if w <= -math.pi else w


def yaw_matrix(yaw: float) -> np.ndarray:
    c, s = math.cos(yaw), math.sin(yaw)
    return np.array([[c, -s, 0.0], [s, c, 0.0], [0.0, 0.0, 1.0]])


def _as_points(points) -> np.ndarray:
    arr = np.asarray(points, dtype=np.float64)
    if arr.size == 0:
        return np.zeros((0, 3))
    if arr.ndim == 1 and arr.shape[0] == 3:
        arr = arr[None, :]
    if arr.ndim != 2 or arr.shape[1] != 3:
        raise ValueError(f"points must have shape (N, 3), got {arr.shape}")
    return arr


@dataclass(frozen=True, eq=False)
class PointCloud:
    """An (N, 3) array of finite points plus a frame label."""

    points: np.ndarray
    frame_id: str = "world"

    def __post_init__(self):
        arr = np.array(_as_points(self.points), dtype=np.float64, copy=True)
        if not np.all(np.isfinite(arr)):
            raise ValueError("point cloud contains non-finite coordinates")
        arr.setflags(write=False)
        object.__setattr__(self, "points", arr)

    def __len__(self) -> int:
        return self.points.shape[0]

    @classmethod
    def empty(cls, frame_id: str = "world") -> "PointCloud":
        return cls(np.zeros((0, 3)), frame_id)

    def subset(self, indices) -> "PointCloud":
        return PointCloud(self.points[np.asarray(indices, dtype=np.intp)], self.frame_id)

    def centroid(self) -> np.ndarray:
        return self.points.mean(axis=0)


@dataclass(frozen=True)
class Pose4:
    """Translation plus yaw; roll and pitch are identically zero."""

    tx: float = 0.0
    ty: float = 0.0
    tz: float = 0.0
    yaw: float = 0.0

    def __post_init__(self):
        vals = (self.tx, self.ty, self.tz, self.yaw)
        if not all(math.isfinite(v) for v in vals):
            raise ValueError("pose components must be finite")
        for name in ("tx", "ty", "tz"):
            object.__setattr__(self, name, float(getattr(self, name)))
        object.__setattr__(self, "yaw", wrap_angle(float(self.yaw)))

    @property
    def translation(self) -> np.ndarray:
        return np.array([self.tx, self.ty, self.tz])

    def matrix(self) -> np.ndarray:
        """Homogeneous 4x4 matrix."""
        m = np.eye(4)
        m[:3, :3] = yaw_matrix(self.yaw)
        m[:3, 3] = self.translation
        return m

    def apply(self, points: np.ndarray) -> np.ndarray:
        pts = _as_points(points)
        return pts @ yaw_matrix(self.yaw).T + self.translation

    def compose(self, other: "Pose4") -> "Pose4":
        """self after other: x -> self(other(x))."""
        t = yaw_matrix(self.yaw) @ other.translation + self.translation
        return Pose4(t[0], t[1], t[2], self.yaw + other.yaw)

    def inverse(self) -> "Pose4":
        t = -(yaw_matrix(-self.yaw) @ self.translation)
        return Pose4(t[0], t[1], t[2], -self.yaw)

    def as_dict(self) -> dict:
        return {"tx": self.tx, "ty": self.ty, "tz": self.tz, "yaw": self.yaw}


@dataclass(frozen=True)
class TurbineParams:
    """Pillar + swept rotor disc.

    ``hub_position`` is the center of the rotor disc. The pillar axis sits
    ``rotor_overhang_m`` behind the hub (opposite the rotor normal) and runs
    from ``hub_z - pillar_height_m`` up to the hub height. When no hub is
    given the pillar base is placed at the origin.
    """

    pillar_height_m: float
    rotor_radius_m: float
    rotor_width_m: float = 1.0
    hub_position: Optional[Tuple[float, float, float]] = None
    rotor_normal_yaw: float = 0.0
    pillar_radius_m: float = 1.5
    rotor_overhang_m: float = 3.0

    def __post_init__(self):
        for name in ("pillar_height_m", "rotor_radius_m", "rotor_width_m", "pillar_radius_m"):
            v = getattr(self, name)
            if not (isinstance(v, (int, float)) and math.isfinite(v) and v > 0):
                raise ValueError(f"invalid turbine parameters: {name} must be > 0, got {v!r}")
        if not (math.isfinite(self.rotor_overhang_m) and self.rotor_overhang_m >= 0):
            raise ValueError(
                f"invalid turbine parameters: rotor_overhang_m must be >= 0, got {self.rotor_overhang_m!r}"
            )
        if not math.isfinite(self.rotor_normal_yaw):
            raise ValueError("invalid turbine parameters: rotor_normal_yaw must be finite")
        object.__setattr__(self, "rotor_normal_yaw", wrap_angle(float(self.rotor_normal_yaw)))
        if self.hub_position is None:
            n = self.normal
            hub = (
                self.rotor_overhang_m * n[0],
                self.rotor_overhang_m * n[1],
                float(self.pillar_height_m),
            )
        else:
            hub = tuple(float(v) for v in self.hub_position)
            if len(hub) != 3 or not all(math.isfinite(v) for v in hub):
                raise ValueError("invalid turbine parameters: hub_position must be 3 finite values")
        object.__setattr__(self, "hub_position", hub)

    @property
    def hub(self) -> np.ndarray:
        return np.array(self.hub_position)

    @property
    def normal(self) -> np.ndarray:
        """Horizontal unit normal of the rotor plane (points to the front)."""
        return np.array([math.cos(self.rotor_normal_yaw), math.sin(self.rotor_normal_yaw), 0.0])

    @property
    def lateral(self) -> np.ndarray:
        """Horizontal in-plane axis, normal rotated +90 degrees."""
        return np.array([-math.sin(self.rotor_normal_yaw), math.cos(self.rotor_normal_yaw), 0.0])

    @property
    def base(self) -> np.ndarray:
        """Center of the pillar foot."""
        b = self.hub - self.rotor_overhang_m * self.normal
        b[2] -= self.pillar_height_m
        return b

    def posed(self, pose: Pose4) -> "TurbineParams":
        """The same turbine moved rigidly by ``pose``."""
        hub = pose.apply(self.hub)[0]
        return TurbineParams(
            self.pillar_height_m,
            self.rotor_radius_m,
            self.rotor_width_m,
            tuple(hub.tolist()),
            self.rotor_normal_yaw + pose.yaw,
            self.pillar_radius_m,
            self.rotor_overhang_m,
        )


def transform(cloud: PointCloud, pose: Pose4) -> PointCloud:
    """Rotate every point about +z by the pose yaw, then translate."""
    return PointCloud(pose.apply(cloud.points), cloud.frame_id)


def point_to_disc_distance(p, params: TurbineParams) -> float:
    """Euclidean distance from ``p`` to the closed swept-rotor slab.

    The slab is a solid cylinder of radius R and thickness w centered at the hub
    with its axis along the rotor normal. Points inside return 0.
    """
    return float(points_to_disc_distance(np.asarray(p, dtype=float).reshape(1, 3), params)[0])


def points_to_disc_distance(points: np.ndarray, params: TurbineParams) -> np.ndarray:
    rel = _as_points(points) - params.hub
    axial = rel @ params.normal
    radial_vec = rel - axial[:, None] * params.normal
    radial = np.linalg.norm(radial_vec, axis=1)
    da = np.maximum(np.abs(axial) - 0.5 * params.rotor_width_m, 0.0)
    dr = np.maximum(radial - params.rotor_radius_m, 0.0)
    return np.hypot(da, dr)


class NearestIndex:
    """Nearest-neighbor lookup over a fixed target cloud.

    Ties between equidistant target points resolve to the lowest index.
    """

    def __init__(self, target):
        pts = target.points if isinstance(target, PointCloud) else _as_points(target)
        if len(pts) == 0:
            raise ValueError("empty target cloud")
        self.points = pts
        self.tree = cKDTree(pts)

    def query(self, queries) -> Tuple[np.ndarray, np.ndarray]:
        """Return (indices, distances) for each query point, tie-exact."""
        q = _as_points(queries)
        dist, idx = self.tree.query(q, k=1)
        idx = np.asarray(idx, dtype=np.intp)
        out_d = np.empty(len(q))
        for i, (p, d0) in enumerate(zip(q, dist)):
            cand = self.tree.query_ball_point(p, r=d0 * (1.0 + 1e-9) + 1e-12)
            if not cand:
                cand = [int(idx[i])]
            cand = np.sort(np.asarray(cand, dtype=np.intp))
            exact = np.sqrt(((self.points[cand] - p) ** 2).sum(axis=1))
            j = int(np.argmin(exact))  # argmin returns the first minimum
            idx[i] = cand[j]
            out_d[i] = exact[j]
        return idx, out_d

    def query_fast(self, queries) -> Tuple[np.ndarray, np.ndarray]:
        """Bulk query without tie normalization (distances are still exact minima)."""
        dist, idx = self.tree.query(_as_points(queries), k=1)
        return np.asarray(idx, dtype=np.intp), dist


def nearest_neighbor(query, target: PointCloud) -> Tuple[int, float]:
    if len(target) == 0:
        raise ValueError("empty target cloud")
    idx, dist = NearestIndex(target).query(np.asarray(query, dtype=float).reshape(1, 3))
    return int(idx[0]), float(dist[0])


# -- PLY ---------------------------------------------------------------------

def _ply_header(n: int, frame_id: str) -> str:
    return (
        "ply\n"
        "format ascii 1.0\n"
        f"comment frame_id {frame_id}\n"
        f"element vertex {n}\n"
        "property double x\n"
        "property double y\n"
        "property double z\n"
        "end_header\n"
    )


def format_ply(cloud: PointCloud) -> str:
    rows = [f"{x!r} {y!r} {z!r}\n" for x, y, z in cloud.points.tolist()]
    return _ply_header(len(cloud), cloud.frame_id) + "".join(rows)


def write_ply(cloud: PointCloud, path) -> None:
    with open(path, "w", encoding="ascii", newline="\n") as fh:
        fh.write(format_ply(cloud))


def read_ply(path) -> PointCloud:
    with open(path, "r", encoding="ascii") as fh:
        text = fh.read()
    return parse_ply(text)


def parse_ply(text: str) -> PointCloud:
    lines = text.split("\n")
    if not lines or lines[0].strip() != "ply":
        raise ValueError("not a PLY file")
    n = None
    frame_id = "world"
    props = []
    in_vertex = False
    i = 1
    while i < len(lines):
        tok = lines[i].split()
        i += 1
        if not tok:
            continue
        if tok[0] == "format" and tok[1] != "ascii":
            raise ValueError(f"unsupported PLY format {tok[1]!r}")
        elif tok[0] == "comment" and len(tok) >= 3 and tok[1] == "frame_id":
            frame_id = tok[2]
        elif tok[0] == "element":
            in_vertex = tok[1] == "vertex"
            if in_vertex:
                n = int(tok[2])
        elif tok[0] == "property" and in_vertex:
            props.append(tok[-1])
        elif tok[0] == "end_header":
            break
    if n is None:
        raise ValueError("PLY file has no vertex element")
    try:
        cols = [props.index(c) for c in ("x", "y", "z")]
    except ValueError:
        raise ValueError("PLY vertex element lacks x/y/z properties") from None
    body = [ln.split() for ln in lines[i : i + n]]
    if len(body) != n or any(len(r) < len(props) for r in body):
        raise ValueError("truncated PLY vertex data")
    pts = np.array([[float(r[c]) for c in cols] for r in body]).reshape(n, 3)
    return PointCloud(pts, frame_id)

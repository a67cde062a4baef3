"""Registration, voxel downsampling, ground-plane rejection and Euclidean clustering."""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import NamedTuple, Optional, Tuple

import numpy as np
from scipy.sparse import coo_matrix
from scipy.sparse.csgraph import connected_components
from scipy.spatial import cKDTree

from .geometry import PointCloud, transform


@dataclass(frozen=True)
class VoxelSpec:
    voxel_size_m: float = 0.5

    def __post_init__(self):
        if not (math.isfinite(self.voxel_size_m) and self.voxel_size_m > 0):
            raise ValueError(f"voxel_size_m must be > 0, got {self.voxel_size_m!r}")


@dataclass(frozen=True)
class PlaneModel:
    """Plane n . p = d with unit normal n (nz >= 0)."""

    nx: float
    ny: float
    nz: float
    d: float
    inlier_threshold_m: float

    @property
    def normal(self) -> np.ndarray:
        return np.array([self.nx, self.ny, self.nz])

    def distances(self, points: np.ndarray) -> np.ndarray:
        return np.abs(points @ self.normal - self.d)

    def tilt_deg(self) -> float:
        return math.degrees(math.acos(min(1.0, abs(self.nz))))


class GroundRejection(NamedTuple):
    cloud: PointCloud
    plane: Optional[PlaneModel]  # None when no admissible ground plane exists
    inliers: np.ndarray  # boolean mask over the input cloud

    @property
    def found(self) -> bool:
        return self.plane is not None


@dataclass(frozen=True, eq=False)
class ClusterSet:
    clusters: Tuple[np.ndarray, ...]
    linkage_radius_m: float
    min_cluster_size: int

    def __len__(self) -> int:
        return len(self.clusters)

    def __iter__(self):
        return iter(self.clusters)

    def __getitem__(self, i) -> np.ndarray:
        return self.clusters[i]


def register_frame(global_cloud: PointCloud, frame) -> PointCloud:
    """Move a scan into the world frame by its sensor pose and append it."""
    moved = transform(frame.cloud, frame.sensor_pose)
    if len(global_cloud) == 0:
        return PointCloud(moved.points, global_cloud.frame_id)
    return PointCloud(np.vstack([global_cloud.points, moved.points]), global_cloud.frame_id)


# -- voxel grid ---------------------------------------------------------------

_BITS = 21
_OFFSET = 1 << (_BITS - 1)
_MASK = (1 << _BITS) - 1


def _cell_keys(points: np.ndarray, size: float) -> np.ndarray:
    cells = np.floor(points / size).astype(np.int64)
    if cells.size and (cells.min() < -_OFFSET or cells.max() >= _OFFSET):
        raise ValueError("point cloud extent exceeds the voxel key range")
    c = cells + _OFFSET
    return (c[:, 0] << (2 * _BITS)) | (c[:, 1] << _BITS) | c[:, 2]


def _key_cells(keys: np.ndarray) -> np.ndarray:
    return np.column_stack(
        [(keys >> (2 * _BITS)) & _MASK, (keys >> _BITS) & _MASK, keys & _MASK]
    ) - _OFFSET


class VoxelGrid:
    """Running per-cell sums and counts; ``centroids()`` matches a batch voxelize.

    Cells are half-open ``[k s, (k+1) s)`` anchored at the world origin and are
    emitted in lexicographic (x, y, z) cell order.
    """

    def __init__(self, spec: VoxelSpec):
        self.spec = spec
        self.keys = np.zeros(0, dtype=np.int64)
        self.sums = np.zeros((0, 3))
        self.counts = np.zeros(0, dtype=np.int64)

    def __len__(self) -> int:
        return self.keys.size

    def add(self, points) -> "VoxelGrid":
        pts = points.points if isinstance(points, PointCloud) else np.asarray(points, dtype=float)
        if len(pts) == 0:
            return self
        keys = np.concatenate([self.keys, _cell_keys(pts, self.spec.voxel_size_m)])
        uniq, inv = np.unique(keys, return_inverse=True)
        sums = np.empty((uniq.size, 3))
        for j in range(3):
            w = np.concatenate([self.sums[:, j], pts[:, j]])
            sums[:, j] = np.bincount(inv, weights=w, minlength=uniq.size)
        counts = np.bincount(inv, weights=np.concatenate([self.counts, np.ones(len(pts))]), minlength=uniq.size)
        self.keys, self.sums, self.counts = uniq, sums, counts.astype(np.int64)
        return self

    def centroids(self) -> np.ndarray:
        return self.sums / self.counts[:, None]

    def cells(self) -> np.ndarray:
        return _key_cells(self.keys)

    def cloud(self, frame_id: str = "world") -> PointCloud:
        return PointCloud(self.centroids(), frame_id)


def voxelize(cloud: PointCloud, spec: VoxelSpec) -> PointCloud:
    """One centroid per occupied grid cell."""
    if len(cloud) == 0:
        return PointCloud.empty(cloud.frame_id)
    return VoxelGrid(spec).add(cloud).cloud(cloud.frame_id)


# -- ground plane ---------------------------------------------------------------

def _plane_from_triplets(a, b, c):
    n = np.cross(b - a, c - a)
    norm = np.linalg.norm(n, axis=1)
    ok = norm > 1e-12
    n = n / np.where(ok, norm, 1.0)[:, None]
    n = np.where(n[:, 2:3] < 0, -n, n)
    d = np.sum(n * a, axis=1)
    return n, d, ok


def reject_ground(
    cloud: PointCloud,
    threshold_m: float = 0.3,
    max_tilt_deg: float = 15.0,
    iterations: int = 500,
    seed=0,
    score_sample: int = 20000,
) -> GroundRejection:
    """RANSAC for the near-horizontal plane with the most points within ``threshold_m``.

    Hypotheses are ranked by inlier count over at most ``score_sample`` points.
    The winning hypothesis is refit by least squares on its inliers and kept if
    the refit is admissible and does not lose inliers.
    """
    pts = cloud.points
    n_pts = len(pts)
    if n_pts < 3:
        raise ValueError("insufficient points")
    rng = np.random.default_rng(seed)
    trip = np.array([rng.choice(n_pts, 3, replace=False) for _ in range(iterations)])
    normals, offsets, ok = _plane_from_triplets(pts[trip[:, 0]], pts[trip[:, 1]], pts[trip[:, 2]])
    cos_tilt = math.cos(math.radians(max_tilt_deg))
    ok &= normals[:, 2] >= cos_tilt
    cand = np.flatnonzero(ok)
    if cand.size == 0:
        return GroundRejection(cloud, None, np.zeros(n_pts, dtype=bool))

    # hypotheses are ranked on a fixed subsample; final inliers use every point
    probe = pts if n_pts <= score_sample else pts[np.sort(rng.choice(n_pts, score_sample, replace=False))]
    counts = np.zeros(cand.size, dtype=np.int64)
    chunk = max(1, int(4_000_000 // len(probe)))
    for s in range(0, cand.size, chunk):
        sel = cand[s : s + chunk]
        dist = np.abs(probe @ normals[sel].T - offsets[sel])
        counts[s : s + chunk] = np.count_nonzero(dist <= threshold_m, axis=0)
    best = cand[int(np.argmax(counts))]  # first maximum wins ties
    n, d = normals[best], offsets[best]
    inl = np.abs(pts @ n - d) <= threshold_m

    sub = pts[inl]
    if len(sub) >= 3:
        mu = sub.mean(axis=0)
        _, _, vt = np.linalg.svd(sub - mu, full_matrices=False)
        n2 = vt[-1] if vt[-1][2] >= 0 else -vt[-1]
        if n2[2] >= cos_tilt:
            d2 = float(n2 @ mu)
            inl2 = np.abs(pts @ n2 - d2) <= threshold_m
            if inl2.sum() >= inl.sum():
                n, d, inl = n2, d2, inl2

    plane = PlaneModel(float(n[0]), float(n[1]), float(n[2]), float(d), float(threshold_m))
    return GroundRejection(PointCloud(pts[~inl], cloud.frame_id), plane, inl)


# -- clustering -------------------------------------------------------------------

def cluster(cloud: PointCloud, linkage_radius_m: float = 2.0, min_cluster_size: int = 30) -> ClusterSet:
    """Connected components of the graph linking points at most ``linkage_radius_m`` apart.

    Components smaller than ``min_cluster_size`` are dropped. Clusters are sorted
    by size (descending), ties by smallest member index; members ascending.
    """
    if not linkage_radius_m > 0:
        raise ValueError("linkage_radius_m must be > 0")
    n = len(cloud)
    if n == 0:
        return ClusterSet((), linkage_radius_m, min_cluster_size)
    pairs = cKDTree(cloud.points).query_pairs(linkage_radius_m, output_type="ndarray")
    graph = coo_matrix((np.ones(len(pairs), dtype=np.int8), (pairs[:, 0], pairs[:, 1])), shape=(n, n))
    _, labels = connected_components(graph, directed=False)
    order = np.argsort(labels, kind="stable")
    bounds = np.flatnonzero(np.diff(labels[order])) + 1
    groups = [g for g in np.split(order, bounds) if len(g) >= min_cluster_size]
    groups.sort(key=lambda g: (-len(g), int(g[0])))
    return ClusterSet(tuple(np.sort(g) for g in groups), linkage_radius_m, min_cluster_size)

import math
from collections import defaultdict

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from rotorscan.geometry import PointCloud, Pose4, TurbineParams
from rotorscan.model import SamplingSpec, generate_turbine_model
from rotorscan.preprocess import VoxelGrid, VoxelSpec, cluster, register_frame, reject_ground, voxelize
from rotorscan.scansim import ScanFrame


def brute_voxels(pts, size):
    cells = defaultdict(list)
    for p in pts.tolist():
        cells[tuple(math.floor(c / size) for c in p)].append(p)
    out = []
    for key in sorted(cells):
        s = [0.0, 0.0, 0.0]
        for p in cells[key]:
            s = [s[0] + p[0], s[1] + p[1], s[2] + p[2]]
        n = len(cells[key])
        out.append([s[0] / n, s[1] / n, s[2] / n])
    return np.array(out).reshape(-1, 3)


def union_find_components(pts, radius):
    parent = list(range(len(pts)))

    def find(i):
        while parent[i] != i:
            parent[i] = parent[parent[i]]
            i = parent[i]
        return i

    for i in range(len(pts)):
        d = np.sqrt(((pts[i + 1 :] - pts[i]) ** 2).sum(axis=1))
        for j in np.flatnonzero(d <= radius) + i + 1:
            parent[find(int(j))] = find(i)
    groups = defaultdict(list)
    for i in range(len(pts)):
        groups[find(i)].append(i)
    return groups.values()


class TestRegister:
    def test_empty_global(self, rng):
        fr = ScanFrame(PointCloud(rng.normal(size=(7, 3)), "sensor"), Pose4(1, 2, 3, 0.2), 0.1)
        assert len(register_frame(PointCloud.empty(), fr)) == 7

    def test_identity_appends_verbatim(self, rng):
        g = PointCloud(rng.normal(size=(5, 3)))
        pts = rng.normal(size=(4, 3))
        out = register_frame(g, ScanFrame(PointCloud(pts, "sensor"), Pose4(), 0.0))
        np.testing.assert_array_equal(out.points, np.vstack([g.points, pts]))
        assert out.frame_id == "world"

    def test_hand_transform(self):
        fr = ScanFrame(PointCloud(np.array([[1.0, 0.0, 0.0], [0.0, 2.0, 1.0]]), "sensor"), Pose4(tx=1.0, yaw=math.pi), 0.0)
        out = register_frame(PointCloud.empty(), fr)
        np.testing.assert_allclose(out.points, [[0.0, 0.0, 0.0], [1.0, -2.0, 1.0]], atol=1e-12)


class TestVoxelize:
    def test_empty(self):
        assert len(voxelize(PointCloud.empty(), VoxelSpec())) == 0

    def test_single_cell(self, rng):
        pts = rng.uniform(0.01, 0.49, size=(8, 3))
        out = voxelize(PointCloud(pts), VoxelSpec(0.5))
        np.testing.assert_allclose(out.points, [pts.mean(axis=0)], atol=1e-15)

    def test_brute_force_exact(self, rng):
        pts = rng.uniform(-20, 20, size=(10_000, 3))
        out = voxelize(PointCloud(pts), VoxelSpec(0.5))
        np.testing.assert_array_equal(out.points, brute_voxels(pts, 0.5))

    def test_half_open_boundaries(self):
        pts = np.array([[0.0, 0.0, 0.0], [0.5, 0.0, 0.0], [-0.5, 0.0, 0.0], [0.49999, 0.0, 0.0]])
        grid = VoxelGrid(VoxelSpec(0.5)).add(pts)
        np.testing.assert_array_equal(grid.cells(), [[-1, 0, 0], [0, 0, 0], [1, 0, 0]])
        np.testing.assert_array_equal(grid.counts, [1, 2, 1])

    def test_incremental_equals_batch(self, rng):
        chunks = [rng.normal(scale=5, size=(n, 3)) for n in (300, 1, 700, 50)]
        grid = VoxelGrid(VoxelSpec(0.7))
        for c in chunks:
            grid.add(c)
        np.testing.assert_array_equal(grid.centroids(), brute_voxels(np.vstack(chunks), 0.7))

    @settings(max_examples=30, deadline=None)
    @given(st.integers(0, 2**32 - 1), st.floats(0.1, 3.0))
    def test_reapply_keeps_cells(self, seed, size):
        pts = np.random.default_rng(seed).normal(scale=10, size=(400, 3))
        once = voxelize(PointCloud(pts), VoxelSpec(size))
        twice = voxelize(once, VoxelSpec(size))
        assert len(twice) == len(once)
        a = VoxelGrid(VoxelSpec(size)).add(once).cells()
        b = VoxelGrid(VoxelSpec(size)).add(pts).cells()
        np.testing.assert_array_equal(a, b)

    def test_invalid_size(self):
        with pytest.raises(ValueError):
            VoxelSpec(0.0)


class TestGround:
    def test_separable(self, rng):
        ground = np.column_stack([rng.uniform(-50, 50, (1000, 2)), np.zeros(1000)])
        top = np.column_stack([rng.uniform(-5, 5, (100, 2)), np.full(100, 45.0)])
        res = reject_ground(PointCloud(np.vstack([ground, top])), seed=0)
        assert res.found
        np.testing.assert_allclose(res.plane.normal, [0, 0, 1], atol=1e-9)
        assert res.plane.d == pytest.approx(0.0, abs=1e-9)
        np.testing.assert_array_equal(res.cloud.points, top)
        assert np.linalg.norm(res.plane.normal) == pytest.approx(1.0, abs=1e-9)

    def test_vertical_wall(self, rng):
        wall = np.column_stack([np.zeros(500), rng.uniform(-10, 10, (500, 2))])
        res = reject_ground(PointCloud(wall), max_tilt_deg=15.0)
        assert not res.found
        np.testing.assert_array_equal(res.cloud.points, wall)

    def test_insufficient(self):
        with pytest.raises(ValueError, match="insufficient points"):
            reject_ground(PointCloud(np.zeros((2, 3))))

    def test_grid_search_oracle(self, rng):
        g = np.column_stack([rng.uniform(-30, 30, (3000, 2)), rng.normal(0, 0.02, 3000)])
        clutter = rng.uniform([-30, -30, 0.5], [30, 30, 20], size=(800, 3))
        pts = np.vstack([g, clutter])
        res = reject_ground(PointCloud(pts), threshold_m=0.3, seed=2)
        best = 0
        for nx in np.linspace(-0.01, 0.01, 11):
            for ny in np.linspace(-0.01, 0.01, 11):
                n = np.array([nx, ny, 1.0])
                n /= np.linalg.norm(n)
                proj = pts @ n
                for d in np.arange(-0.1, 0.1001, 0.01):
                    best = max(best, int(np.count_nonzero(np.abs(proj - d) <= 0.3)))
        assert res.inliers.sum() >= 0.99 * best

    def test_removed_within_threshold(self, rng):
        pts = np.vstack([
            np.column_stack([rng.uniform(-20, 20, (800, 2)), rng.normal(0.0, 0.1, 800)]),
            rng.uniform(-20, 20, size=(300, 3)),
        ])
        res = reject_ground(PointCloud(pts), threshold_m=0.25, seed=1)
        assert res.plane.distances(pts[res.inliers]).max() <= 0.25
        assert len(res.cloud) == len(pts) - res.inliers.sum()
        assert res.plane.tilt_deg() <= 15.0

    def test_seeded(self, rng):
        pts = np.column_stack([rng.uniform(-5, 5, (300, 2)), rng.normal(0, 0.1, 300)])
        a = reject_ground(PointCloud(pts), seed=5)
        b = reject_ground(PointCloud(pts), seed=5)
        assert a.plane == b.plane


class TestCluster:
    def test_two_blobs(self, rng):
        a = rng.normal(scale=0.5, size=(100, 3))
        b = rng.normal(scale=0.5, size=(100, 3)) + [50, 0, 0]
        cs = cluster(PointCloud(np.vstack([a, b])), 2.0, 30)
        assert [len(c) for c in cs] == [100, 100]
        np.testing.assert_array_equal(cs[0], np.arange(100))

    def test_chain(self):
        line = np.column_stack([np.arange(60.0), np.zeros(60), np.zeros(60)])
        cs = cluster(PointCloud(line), 2.0, 30)
        assert len(cs) == 1 and len(cs[0]) == 60

    def test_union_find_oracle(self, rng):
        pts = rng.uniform(0, 30, size=(500, 3))
        cs = cluster(PointCloud(pts), 2.5, 1)
        expected = sorted((sorted(g) for g in union_find_components(pts, 2.5)), key=lambda g: (-len(g), g[0]))
        assert [c.tolist() for c in cs] == expected

    def test_min_size_and_order(self, rng):
        blobs = [rng.normal(scale=0.3, size=(n, 3)) + [40 * k, 0, 0] for k, n in enumerate((20, 80, 80, 40))]
        cs = cluster(PointCloud(np.vstack(blobs)), 2.0, 30)
        assert [len(c) for c in cs] == [80, 80, 40]
        assert cs[0][0] == 20 and cs[1][0] == 100

    def test_empty(self):
        assert len(cluster(PointCloud.empty(), 2.0, 30)) == 0

    def test_bad_radius(self):
        with pytest.raises(ValueError):
            cluster(PointCloud.empty(), 0.0, 30)

    @settings(max_examples=25, deadline=None)
    @given(st.integers(0, 2**32 - 1), st.floats(0.5, 4.0), st.integers(1, 10))
    def test_partition(self, seed, radius, min_size):
        pts = np.random.default_rng(seed).uniform(0, 20, size=(200, 3))
        cs = cluster(PointCloud(pts), radius, min_size)
        allidx = np.concatenate(cs.clusters) if len(cs) else np.zeros(0, int)
        assert len(np.unique(allidx)) == len(allidx)
        assert all(len(c) >= min_size for c in cs)
        assert all(len(a) >= len(b) for a, b in zip(cs.clusters, cs.clusters[1:]))


def test_pipeline_monotone_sizes(rng):
    # registered >= voxelized >= after ground rejection
    tb = TurbineParams(45.0, 30.0).posed(Pose4(20, 0, 0, 0.5))
    turbine = generate_turbine_model(tb, SamplingSpec(1.0, 0)).points
    ground = np.column_stack([rng.uniform(-40, 60, (5000, 2)), np.zeros(5000)])
    reg = PointCloud(np.vstack([ground, turbine]))
    vox = voxelize(reg, VoxelSpec())
    rest = reject_ground(vox).cloud
    assert len(reg) >= len(vox) >= len(rest)

import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy.spatial.distance import pdist

from rotorscan.geometry import (
    NearestIndex,
    PointCloud,
    Pose4,
    TurbineParams,
    format_ply,
    nearest_neighbor,
    parse_ply,
    point_to_disc_distance,
    points_to_disc_distance,
    read_ply,
    transform,
    wrap_angle,
    write_ply,
)

from conftest import brute_nn, rot_z

angles = st.floats(-20.0, 20.0, allow_nan=False)
coords = st.floats(-100.0, 100.0, allow_nan=False)
poses = st.builds(Pose4, coords, coords, coords, angles)


class TestPrimitives:
    def test_wrap_range(self):
        assert wrap_angle(math.pi) == pytest.approx(math.pi)
        assert wrap_angle(-math.pi) == pytest.approx(math.pi)
        assert wrap_angle(3 * math.pi / 2) == pytest.approx(-math.pi / 2)

    @given(angles)
    def test_wrap_half_open(self, a):
        w = wrap_angle(a)
        assert -math.pi < w <= math.pi
        assert math.isclose(math.cos(w), math.cos(a), abs_tol=1e-9)
        assert math.isclose(math.sin(w), math.sin(a), abs_tol=1e-9)

    def test_cloud_rejects_nonfinite(self):
        with pytest.raises(ValueError):
            PointCloud(np.array([[0.0, np.nan, 1.0]]))
        with pytest.raises(ValueError):
            PointCloud(np.array([[0.0, np.inf, 1.0]]))

    def test_cloud_empty_and_readonly(self):
        assert len(PointCloud.empty()) == 0
        c = PointCloud(np.zeros((2, 3)))
        with pytest.raises(ValueError):
            c.points[0, 0] = 1.0

    def test_pose_rejects_nonfinite(self):
        with pytest.raises(ValueError):
            Pose4(0, 0, float("nan"), 0)


class TestTransform:
    def test_identity(self, rng):
        c = PointCloud(rng.normal(size=(50, 3)))
        np.testing.assert_array_equal(transform(c, Pose4()).points, c.points)

    def test_quarter_turn(self):
        out = transform(PointCloud(np.array([[1.0, 0.0, 0.0]])), Pose4(yaw=math.pi / 2))
        np.testing.assert_allclose(out.points, [[0.0, 1.0, 0.0]], atol=1e-9)

    def test_empty(self):
        assert len(transform(PointCloud.empty(), Pose4(1, 2, 3, 0.4))) == 0

    def test_matches_hand_matrix(self, rng):
        pts = rng.normal(size=(20, 3))
        p = Pose4(1.0, -2.0, 0.5, 0.7)
        expected = pts @ rot_z(0.7).T + np.array([1.0, -2.0, 0.5])
        np.testing.assert_allclose(p.apply(pts), expected, atol=1e-12)
        np.testing.assert_allclose(p.matrix()[:3, :3], rot_z(0.7), atol=1e-15)

    @settings(max_examples=50, deadline=None)
    @given(poses, st.integers(0, 2**32 - 1))
    def test_isometry(self, pose, seed):
        pts = np.random.default_rng(seed).uniform(-50, 50, size=(100, 3))
        moved = transform(PointCloud(pts), pose).points
        np.testing.assert_allclose(pdist(moved), pdist(pts), atol=1e-9)

    @settings(max_examples=50, deadline=None)
    @given(poses, st.integers(0, 2**32 - 1))
    def test_inverse_roundtrip(self, pose, seed):
        pts = np.random.default_rng(seed).uniform(-50, 50, size=(30, 3))
        back = transform(transform(PointCloud(pts), pose), pose.inverse()).points
        np.testing.assert_allclose(back, pts, atol=1e-9)

    @given(poses, poses)
    def test_compose(self, a, b):
        ab = a.compose(b)
        assert ab.yaw == pytest.approx(wrap_angle(a.yaw + b.yaw), abs=1e-12)
        assert -math.pi < ab.yaw <= math.pi
        pts = np.array([[1.0, 2.0, 3.0], [-4.0, 0.5, 2.0]])
        np.testing.assert_allclose(ab.apply(pts), a.apply(b.apply(pts)), atol=1e-9)


class TestTurbineParams:
    def test_defaults(self, canon):
        np.testing.assert_allclose(canon.base, [0.0, 0.0, 0.0])
        np.testing.assert_allclose(canon.hub, [3.0, 0.0, 45.0])
        np.testing.assert_allclose(canon.normal, [1.0, 0.0, 0.0])
        np.testing.assert_allclose(canon.lateral, [0.0, 1.0, 0.0])

    @pytest.mark.parametrize("field", ["pillar_height_m", "rotor_radius_m", "rotor_width_m"])
    def test_invalid_names_field(self, field):
        kw = {"pillar_height_m": 45.0, "rotor_radius_m": 30.0, field: -1.0}
        with pytest.raises(ValueError, match=f"invalid turbine parameters: {field}"):
            TurbineParams(**kw)

    def test_posed_moves_base_and_hub(self, canon):
        p = Pose4(10.0, -5.0, 0.0, 1.0)
        w = canon.posed(p)
        np.testing.assert_allclose(w.base, [10.0, -5.0, 0.0], atol=1e-12)
        np.testing.assert_allclose(w.hub, p.apply(canon.hub)[0], atol=1e-12)
        assert w.rotor_normal_yaw == pytest.approx(1.0)
        assert w.hub[2] - w.base[2] == pytest.approx(45.0)


class TestDiscDistance:
    def test_center(self, canon):
        assert point_to_disc_distance(canon.hub, canon) == 0.0

    def test_on_axis(self, canon):
        # distance from a point on the axis to the slab face
        R, w = canon.rotor_radius_m, canon.rotor_width_m
        p = canon.hub + (R + 5) * canon.normal
        assert point_to_disc_distance(p, canon) == pytest.approx(R + 5 - w / 2, abs=1e-12)
        p = canon.hub + 5 * canon.normal
        assert point_to_disc_distance(p, canon) == pytest.approx(5 - w / 2, abs=1e-12)

    def test_beyond_rim(self, canon):
        p = canon.hub + 34.0 * canon.lateral + 3.5 * canon.normal
        assert point_to_disc_distance(p, canon) == pytest.approx(5.0, abs=1e-12)

    def test_dense_surface_oracle(self):
        tb = TurbineParams(20.0, 5.0, 1.0, hub_position=(1.0, 2.0, 20.0), rotor_normal_yaw=0.6)
        R, w = tb.rotor_radius_m, tb.rotor_width_m
        h = 0.04
        # dense samples on faces and rim of the slab
        a = np.arange(-R, R + h / 2, h)
        u, v = np.meshgrid(a, a)
        keep = u**2 + v**2 <= R * R
        u, v = u[keep], v[keep]
        phi = np.linspace(0, 2 * np.pi, int(2 * np.pi * R / h), endpoint=False)
        ax = np.linspace(-w / 2, w / 2, int(w / h) + 1)
        pu, pa = np.meshgrid(phi, ax)
        local = np.vstack(
            [
                np.column_stack([np.full(u.size, w / 2), u, v]),
                np.column_stack([np.full(u.size, -w / 2), u, v]),
                np.column_stack([pa.ravel(), R * np.cos(pu.ravel()), R * np.sin(pu.ravel())]),
            ]
        )
        basis = np.column_stack([tb.normal, tb.lateral, [0.0, 0.0, 1.0]])
        surf = tb.hub + local @ basis.T
        from scipy.spatial import cKDTree

        tree = cKDTree(surf)
        q = tb.hub + np.random.default_rng(7).uniform(-12, 12, size=(1000, 3))
        d = points_to_disc_distance(q, tb)
        outside = d > 0
        ref, _ = tree.query(q[outside])
        np.testing.assert_allclose(d[outside], ref, atol=0.05)


class TestNearest:
    def test_exact_point(self, rng):
        pts = rng.normal(size=(40, 3))
        assert nearest_neighbor(pts[17], PointCloud(pts)) == (17, 0.0)

    def test_single_point(self, rng):
        t = PointCloud(np.array([[5.0, 5.0, 5.0]]))
        for q in rng.normal(size=(5, 3)):
            assert nearest_neighbor(q, t)[0] == 0

    def test_empty_target(self):
        with pytest.raises(ValueError, match="empty target cloud"):
            nearest_neighbor([0, 0, 0], PointCloud.empty())

    def test_brute_force_500(self, rng):
        pts = rng.uniform(-10, 10, size=(500, 3))
        q = rng.uniform(-12, 12, size=(200, 3))
        idx, dist = NearestIndex(pts).query(q)
        for k in range(len(q)):
            i, d = brute_nn(q[k], pts)
            assert idx[k] == i
            assert abs(dist[k] - d) <= 1e-12

    def test_ties_lowest_index(self):
        # lattice with many equidistant candidates, duplicated points
        g = np.array([[x, y, 0.0] for x in range(4) for y in range(4)], dtype=float)
        pts = np.vstack([g[::-1], g])
        q = np.array([[0.5, 0.5, 0.0], [1.5, 2.5, 0.0], [2.0, 2.0, 0.0]])
        idx, dist = NearestIndex(pts).query(q)
        for k in range(len(q)):
            d = np.sqrt(((pts - q[k]) ** 2).sum(axis=1))
            assert idx[k] == int(np.flatnonzero(d == d.min())[0])
            assert dist[k] == d.min()


THREE_POINT_PLY = (
    "ply\n"
    "format ascii 1.0\n"
    "comment frame_id world\n"
    "element vertex 3\n"
    "property double x\n"
    "property double y\n"
    "property double z\n"
    "end_header\n"
    "0.0 0.0 0.0\n"
    "1.5 -2.25 3.0\n"
    "0.1 1e-20 -45.0\n"
)


class TestPly:
    def test_three_point_fixture(self):
        c = PointCloud(np.array([[0.0, 0.0, 0.0], [1.5, -2.25, 3.0], [0.1, 1e-20, -45.0]]))
        assert format_ply(c) == THREE_POINT_PLY

    def test_empty(self, tmp_path):
        write_ply(PointCloud.empty(), tmp_path / "e.ply")
        assert "element vertex 0\n" in (tmp_path / "e.ply").read_text()
        assert len(read_ply(tmp_path / "e.ply")) == 0

    def test_roundtrip_bitwise(self, tmp_path, rng):
        c = PointCloud(rng.normal(scale=1e3, size=(100, 3)), "sensor")
        write_ply(c, tmp_path / "c.ply")
        back = read_ply(tmp_path / "c.ply")
        np.testing.assert_array_equal(back.points, c.points)
        assert back.frame_id == "sensor"

    def test_rejects_garbage(self):
        with pytest.raises(ValueError):
            parse_ply("not a ply\n")

import numpy as np
import pytest

from fastgrasp import geometry as geo
from fastgrasp.errors import EmptyCloud, InvalidAxis, InvalidRotation


def random_rotation(rng):
    # QR of a random Gaussian matrix, sign-fixed to det +1
    q, r = np.linalg.qr(rng.normal(size=(3, 3)))
    q *= np.sign(np.diag(r))
    if np.linalg.det(q) < 0:
        q[:, 0] *= -1
    return q


class TestEuler:
    def test_round_trip_away_from_gimbal_lock(self):
        rng = np.random.default_rng(7)
        for _ in range(200):
            roll, yaw = rng.uniform(-np.pi, np.pi, size=2)
            pitch = rng.uniform(-(np.pi / 2 - 0.01), np.pi / 2 - 0.01)
            r = geo.euler_to_matrix(roll, pitch, yaw)
            back = geo.euler_to_matrix(*geo.matrix_to_euler(r))
            assert np.max(np.abs(r - back)) < 1e-9

    def test_rotation_matrix_invariants(self):
        rng = np.random.default_rng(3)
        for _ in range(100):
            r = geo.euler_to_matrix(*rng.uniform(-np.pi, np.pi, size=3))
            assert np.max(np.abs(r.T @ r - np.eye(3))) < 1e-9
            assert abs(np.linalg.det(r) - 1.0) < 1e-9

    def test_single_axis_matches_primitives(self):
        a = 0.37
        assert np.allclose(geo.euler_to_matrix(a, 0, 0), geo.rot_x(a))
        assert np.allclose(geo.euler_to_matrix(0, a, 0), geo.rot_y(a))
        assert np.allclose(geo.euler_to_matrix(0, 0, a), geo.rot_z(a))


class TestProjectInterval:
    def test_unit_cube_x_axis(self):
        corners = np.array([[x, y, z] for x in (0, 1) for y in (0, 1) for z in (0, 1)],
                           dtype=float)
        iv = geo.project_interval(corners, np.array([1.0, 0.0, 0.0]))
        assert iv.lo == 0.0 and iv.hi == 1.0

    def test_single_point_degenerate(self):
        p = np.array([[0.3, -0.2, 0.9]])
        axis = geo.unit(np.array([1.0, 2.0, -0.5]))
        iv = geo.project_interval(p, axis)
        assert iv.length == 0.0
        assert iv.lo == pytest.approx(float(p[0] @ axis))

    def test_matches_bruteforce_scan(self):
        rng = np.random.default_rng(11)
        pts = rng.normal(size=(1000, 3))
        pts /= np.maximum(1.0, np.linalg.norm(pts, axis=1, keepdims=True))
        axis = geo.unit(rng.normal(size=3))
        iv = geo.project_interval(pts, axis)
        # exhaustive per-point scan oracle
        dots = sorted(p[0] * axis[0] + p[1] * axis[1] + p[2] * axis[2] for p in pts)
        assert iv.lo == dots[0] and iv.hi == dots[-1]

    def test_permutation_invariance(self):
        rng = np.random.default_rng(5)
        pts = rng.normal(size=(64, 3))
        axis = geo.unit(rng.normal(size=3))
        base = geo.project_interval(pts, axis)
        for _ in range(20):
            shuffled = pts[rng.permutation(len(pts))]
            iv = geo.project_interval(shuffled, axis)
            assert iv.lo == base.lo and iv.hi == base.hi

    def test_rigid_motion_preserves_length(self):
        rng = np.random.default_rng(13)
        pts = rng.normal(size=(50, 3))
        axis = geo.unit(rng.normal(size=3))
        base_len = geo.project_interval(pts, axis).length
        for _ in range(25):
            t = geo.RigidTransform(random_rotation(rng), rng.normal(size=3))
            moved = t.apply(pts)
            iv = geo.project_interval(moved, geo.unit(t.rotation @ axis))
            assert abs(iv.length - base_len) < 1e-9

    def test_errors(self):
        with pytest.raises(EmptyCloud):
            geo.project_interval(np.zeros((0, 3)), np.array([1.0, 0, 0]))
        with pytest.raises(InvalidAxis):
            geo.project_interval(np.zeros((1, 3)), np.array([1.0, 1.0, 0]))


class TestIntervalOverlap:
    def test_identity(self):
        iv = geo.Interval(0.0, 1.0)
        assert geo.interval_overlap(iv, iv) == 1.0

    def test_disjoint(self):
        assert geo.interval_overlap(geo.Interval(0, 0.3), geo.Interval(0.5, 1.0)) == 0.0

    def test_partial_by_hand(self):
        got = geo.interval_overlap(geo.Interval(0.04, 0.12), geo.Interval(0.02, 0.10))
        assert got == pytest.approx(0.06, abs=1e-15)

    def test_symmetric_and_bounded(self):
        rng = np.random.default_rng(2)
        for _ in range(100):
            a = geo.Interval.spanning(*rng.normal(size=2))
            b = geo.Interval.spanning(*rng.normal(size=2))
            ab = geo.interval_overlap(a, b)
            assert ab == geo.interval_overlap(b, a)
            assert ab <= min(a.length, b.length) + 1e-15


class TestRotationAngle:
    def test_identical_rotations(self):
        t = geo.RigidTransform.from_euler(np.zeros(3), 0.1, 0.2, 0.3)
        assert geo.rotation_angle_between(t, t) == pytest.approx(0.0, abs=1e-7)

    def test_quarter_turn_about_z(self):
        a = geo.RigidTransform.identity()
        b = geo.RigidTransform(geo.rot_z(np.pi / 2), np.zeros(3))
        assert geo.rotation_angle_between(a, b) == pytest.approx(np.pi / 2, abs=1e-12)

    def test_matches_axis_angle_oracle(self):
        rng = np.random.default_rng(17)
        for _ in range(50):
            ra, rb = random_rotation(rng), random_rotation(rng)
            rel = ra.T @ rb
            # axis-angle oracle: angle from the skew part's norm
            w = np.array([rel[2, 1] - rel[1, 2], rel[0, 2] - rel[2, 0],
                          rel[1, 0] - rel[0, 1]]) / 2.0
            expected = np.arctan2(np.linalg.norm(w), (np.trace(rel) - 1.0) / 2.0)
            got = geo.rotation_angle_between(geo.RigidTransform(ra, np.zeros(3)),
                                             geo.RigidTransform(rb, np.zeros(3)))
            assert got == pytest.approx(expected, abs=1e-9)

    def test_rejects_non_orthonormal(self):
        bad = geo.RigidTransform(np.eye(3) * 1.1, np.zeros(3))
        with pytest.raises(InvalidRotation):
            geo.rotation_angle_between(bad, geo.RigidTransform.identity())


class TestRigidTransform:
    def test_compose_inverse(self):
        rng = np.random.default_rng(23)
        t1 = geo.RigidTransform(random_rotation(rng), rng.normal(size=3))
        t2 = geo.RigidTransform(random_rotation(rng), rng.normal(size=3))
        p = rng.normal(size=3)
        assert np.allclose(t1.compose(t2).apply(p), t1.apply(t2.apply(p)))
        assert np.allclose(t1.inverse().apply(t1.apply(p)), p, atol=1e-12)


class TestCloudIO:
    def test_text_round_trip(self, tmp_path):
        rng = np.random.default_rng(31)
        pts = rng.normal(size=(37, 3))
        path = tmp_path / "cloud.xyz"
        geo.save_cloud(path, pts)
        assert np.array_equal(geo.load_cloud(path), pts)

    def test_binary_round_trip_little_endian(self, tmp_path):
        rng = np.random.default_rng(37)
        pts = rng.normal(size=(21, 3))
        path = tmp_path / "cloud.pcb"
        geo.save_cloud(path, pts)
        raw = path.read_bytes()
        assert raw[:4] == b"PCB1"
        assert int.from_bytes(raw[4:12], "little") == 21
        assert np.array_equal(geo.load_cloud(path), pts)

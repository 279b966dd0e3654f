import numpy as np
import pytest

from fastgrasp import graspselect as gs
from fastgrasp.errors import DegenerateAxis, NoFeasibleGrasp, ZeroExtent
from fastgrasp.geometry import RigidTransform, euler_to_matrix
from fastgrasp.grasp import GraspPose
from fastgrasp.kinematics import HandKeypoints


def keypoints(fingertips, thumb, palm, normal):
    return HandKeypoints(np.asarray(fingertips, float), np.asarray(thumb, float),
                         np.asarray(palm, float), np.asarray(normal, float))


def line_cloud(axis, lo, hi, n=50):
    """Cloud whose projection onto `axis` is exactly [lo, hi]."""
    axis = np.asarray(axis, float)
    ts = np.linspace(lo, hi, n)
    return ts[:, None] * axis[None, :]


class TestGwc:
    def test_full_coverage(self):
        kp = keypoints([[0, 0, 1], [0.5, 0, 1], [1, 0, 1]], [1, 0, 0],
                       [0, 0, 0.5], [1, 0, 0])
        # axis from index tip (0,0,1) to thumb (1,0,0); cloud spanning exactly that
        cloud = np.vstack([kp.fingertips[0], kp.thumb_tip])
        assert gs.gwc(kp, cloud, 0) == pytest.approx(1.0)

    def test_disjoint_is_zero(self):
        kp = keypoints([[0, 0, 0]] * 3, [0.1, 0, 0], [0, 0, 0], [0, 0, 1])
        cloud = line_cloud([1, 0, 0], 0.5, 0.9)
        assert gs.gwc(kp, cloud, 0) == 0.0

    def test_hand_computed_partial_overlap(self):
        # tips project to [0.02, 0.10], object to [0.04, 0.12] -> 0.06/0.08
        kp = keypoints([[0.02, 0, 0]] * 3, [0.10, 0, 0], [0, 0, 0], [1, 0, 0])
        cloud = line_cloud([1, 0, 0], 0.04, 0.12)
        assert gs.gwc(kp, cloud, 0) == pytest.approx(0.75, abs=1e-12)

    def test_cross_check_dense_sampling(self):
        rng = np.random.default_rng(0)
        kp = keypoints([[0.02, 0, 0]] * 3, [0.10, 0, 0], [0, 0, 0], [1, 0, 0])
        # 10^4 points filling a box whose x-extent is [0.04, 0.12]
        cloud = rng.uniform([0.04, -0.02, -0.02], [0.12, 0.02, 0.02], size=(10000, 3))
        cloud[0, 0], cloud[1, 0] = 0.04, 0.12  # pin the extremes
        assert gs.gwc(kp, cloud, 0) == pytest.approx(0.75, abs=1e-12)

    def test_degenerate_axis(self):
        kp = keypoints([[1, 2, 3]] * 3, [1, 2, 3], [0, 0, 0], [1, 0, 0])
        with pytest.raises(DegenerateAxis):
            gs.gwc(kp, np.eye(3), 0)

    def test_zero_extent(self):
        kp = keypoints([[0, 0, 0]] * 3, [1, 0, 0], [0, 0, 0], [1, 0, 0])
        cloud = np.tile([[0.5, 1.0, 2.0]], (5, 1))
        with pytest.raises(ZeroExtent):
            gs.gwc(kp, cloud, 0)


class TestGdc:
    def test_object_inside_depth_interval(self):
        kp = keypoints([[0.08, 0, 0.05]] * 3, [0.08, 0, -0.05], [0, 0, 0], [1, 0, 0])
        cloud = line_cloud([1, 0, 0], 0.02, 0.06)
        assert gs.gdc(kp, cloud, 0) == pytest.approx(1.0)

    def test_object_beyond_fingertips(self):
        kp = keypoints([[0.05, 0, 0]] * 3, [0.05, 0, 0], [0, 0, 0], [1, 0, 0])
        cloud = line_cloud([1, 0, 0], 0.2, 0.3)
        assert gs.gdc(kp, cloud, 0) == 0.0

    def test_hand_computed_partial(self):
        # depth interval [0, 0.08], object depths [0.05, 0.15] -> 0.03/0.10
        kp = keypoints([[0.08, 0, 0]] * 3, [0.08, 0, 0], [0, 0, 0], [1, 0, 0])
        cloud = line_cloud([1, 0, 0], 0.05, 0.15)
        assert gs.gdc(kp, cloud, 0) == pytest.approx(0.3, abs=1e-12)
        assert gs.gdc(kp, cloud, "thumb") == pytest.approx(0.3, abs=1e-12)


class TestQuality:
    def test_zero_thumb_depth_kills_quality(self):
        # thumb exactly at palm depth, object in front: GDC_thumb = 0
        kp = keypoints([[0.06, 0, 0.02], [0.06, 0, 0.0], [0.06, 0, -0.02]],
                       [0.0, 0, -0.06], [0, 0, 0], [1, 0, 0])
        cloud = line_cloud([1, 0, 0], 0.02, 0.05)
        score = gs.quality(kp, cloud)
        assert score.gdc_thumb == 0.0
        assert score.quality == 0.0

    def test_upper_bound_three(self):
        rng = np.random.default_rng(1)
        for _ in range(200):
            kp = keypoints(rng.normal(size=(3, 3)), rng.normal(size=3),
                           rng.normal(size=3),
                           rng.normal(size=3) / np.linalg.norm(n := rng.normal(size=3)) * 0 + n / np.linalg.norm(n))
            cloud = rng.normal(size=(30, 3)) * 0.05
            score = gs.quality(kp, cloud)
            assert 0.0 <= score.quality <= 3.0 + 1e-12
            assert np.all(score.gwc >= 0) and np.all(score.gwc <= 1 + 1e-12)
            assert np.all(score.gdc >= 0) and np.all(score.gdc <= 1 + 1e-12)

    def test_direct_substitution(self):
        # GWC = (0.75, 0.5, 0.25), GDC = (1, 1, 1), thumb = 0.5 -> 0.75
        gwc = np.array([0.75, 0.5, 0.25])
        gdc = np.ones(3)
        thumb = 0.5
        assert float(np.sum(gwc * gdc) * thumb) == pytest.approx(0.75)


def brute_force_coverage(kp, cloud):
    """Re-derivation of gwc/gdc by projecting every point and scanning."""
    out_gwc, out_gdc = np.zeros(3), np.zeros(3)
    for k in range(3):
        w = kp.thumb_tip - kp.fingertips[k]
        w = w / np.linalg.norm(w)
        proj = [p[0] * w[0] + p[1] * w[1] + p[2] * w[2] for p in cloud]
        lo, hi = min(proj), max(proj)
        a = sorted([float(w @ kp.fingertips[k]), float(w @ kp.thumb_tip)])
        inter = max(0.0, min(a[1], hi) - max(a[0], lo))
        out_gwc[k] = inter / (hi - lo)
        n = kp.palm_normal
        projn = [p[0] * n[0] + p[1] * n[1] + p[2] * n[2] for p in cloud]
        lo_n, hi_n = min(projn), max(projn)
        d = sorted([float(n @ kp.palm_center), float(n @ kp.fingertips[k])])
        out_gdc[k] = max(0.0, min(d[1], hi_n) - max(d[0], lo_n)) / (hi_n - lo_n)
    n = kp.palm_normal
    projn = [p[0] * n[0] + p[1] * n[1] + p[2] * n[2] for p in cloud]
    lo_n, hi_n = min(projn), max(projn)
    d = sorted([float(n @ kp.palm_center), float(n @ kp.thumb_tip)])
    thumb = max(0.0, min(d[1], hi_n) - max(d[0], lo_n)) / (hi_n - lo_n)
    return out_gwc, out_gdc, thumb


def random_keypoints(rng):
    n = rng.normal(size=3)
    n /= np.linalg.norm(n)
    return keypoints(rng.normal(size=(3, 3)) * 0.08, rng.normal(size=3) * 0.08,
                     rng.normal(size=3) * 0.03, n)


class TestBruteForceAgreement:
    def test_hundred_random_instances(self):
        rng = np.random.default_rng(99)
        for _ in range(100):
            kp = random_keypoints(rng)
            cloud = rng.normal(size=(rng.integers(10, 200), 3)) * 0.06
            score = gs.quality(kp, cloud)
            bw, bd, bt = brute_force_coverage(kp, cloud)
            assert np.max(np.abs(score.gwc - bw)) < 1e-9
            assert np.max(np.abs(score.gdc - bd)) < 1e-9
            assert abs(score.gdc_thumb - bt) < 1e-9

    def test_rigid_motion_equivariance(self):
        rng = np.random.default_rng(101)
        for _ in range(100):
            kp = random_keypoints(rng)
            cloud = rng.normal(size=(40, 3)) * 0.05
            base = gs.quality(kp, cloud)
            t = RigidTransform(euler_to_matrix(*rng.uniform(-np.pi, np.pi, 3)),
                               rng.normal(size=3))
            kp2 = HandKeypoints(t.apply(kp.fingertips), t.apply(kp.thumb_tip),
                                t.apply(kp.palm_center), t.rotate(kp.palm_normal))
            moved = gs.quality(kp2, t.apply(cloud))
            assert abs(moved.quality - base.quality) < 1e-9
            assert np.max(np.abs(moved.gwc - base.gwc)) < 1e-9
            assert np.max(np.abs(moved.gdc - base.gdc)) < 1e-9


def grasp_at(pos, rot=(0.0, 0.0, 0.0), qpos=None):
    return GraspPose(np.asarray(pos, float), np.asarray(rot, float),
                     np.zeros(16) if qpos is None else qpos)


class TestFilters:
    def test_executability_head_on_kept(self):
        center = np.array([2.0, 0.0, 0.7])
        g = grasp_at([1.8, 0.0, 0.7])  # approaches along +x
        kept = gs.filter_executability([g], np.array([1.0, 0, 0]), center)
        assert kept == [g]

    def test_executability_rear_grasp_removed(self):
        center = np.array([2.0, 0.0, 0.7])
        g = grasp_at([2.2, 0.0, 0.7], rot=(0, 0, np.pi))  # approach from far side
        kept = gs.filter_executability([g], np.array([1.0, 0, 0]), center)
        assert kept == []

    def test_executability_boundary_inclusive(self):
        center = np.array([2.0, 0.0, 0.7])
        g = grasp_at([2.0, -0.3, 0.7])  # approach exactly perpendicular (90 deg)
        kept = gs.filter_executability([g], np.array([1.0, 0, 0]), center)
        assert kept == [g]

    def test_executability_rotation_mode(self):
        center = np.array([2.0, 0.0, 0.7])
        facing = grasp_at([1.8, 0, 0.7], rot=(0, 0, 0.2))
        flipped = grasp_at([1.8, 0, 0.7], rot=(0, 0, np.pi))
        kept = gs.filter_executability([facing, flipped], np.array([1.0, 0, 0]),
                                       center, mode="rotation")
        assert kept == [facing]

    def test_collision_boundary(self):
        cloud = line_cloud([0, 0, 1], 0.60, 0.70)
        kp_fn = gs.default_keypoints_fn()
        high = grasp_at([0, 0, 0.95])        # whole hand above the object top
        low = grasp_at([0, 0, 0.0])          # thumb keypoints far below z_min
        kept = gs.filter_collision([high, low], cloud, kp_fn)
        assert kept == [high]

    def test_collision_exact_boundary_kept(self):
        kp_fn = gs.default_keypoints_fn()
        g = grasp_at([0, 0, 0.8])
        z_lowest = kp_fn(g).all_points()[:, 2].min()
        cloud = line_cloud([0, 0, 1], z_lowest, z_lowest + 0.1)
        assert gs.filter_collision([g], cloud, kp_fn) == [g]


class TestSelectGuidance:
    def test_single_survivor(self):
        rng = np.random.default_rng(0)
        # tall cloud so the downward thumb stays above the object's lowest point
        cloud = np.array([[2.0, 0.0, 0.7]]) + rng.normal(size=(50, 3)) * [0.02, 0.02, 0.12]
        center = cloud.mean(axis=0)
        g = grasp_at(center - [0.08, 0, 0], qpos=np.full(16, 0.6))
        res = gs.select_guidance([g], cloud, np.array([1.0, 0, 0]), center)
        assert res.guidance is g

    def test_all_filtered_out(self):
        center = np.array([2.0, 0.0, 0.7])
        cloud = center + np.random.default_rng(1).normal(size=(30, 3)) * 0.02
        rear = grasp_at(center + [0.3, 0, 0])
        with pytest.raises(NoFeasibleGrasp):
            gs.select_guidance([rear], cloud, np.array([1.0, 0, 0]), center)

    def test_deterministic_tie_break_by_distance_then_index(self):
        center = np.array([0.0, 0.0, 0.0])
        rng = np.random.default_rng(3)
        cloud = rng.normal(size=(40, 3)) * [0.03, 0.03, 0.15]
        near = grasp_at([-0.05, 0, 0], qpos=np.full(16, 0.5))
        far = grasp_at([-0.15, 0, 0], qpos=np.full(16, 0.5))

        res = gs.select_guidance([far, near, far], cloud, np.array([1.0, 0, 0]), center)
        # identical scores for the two `far` copies: the earlier index wins;
        # `near` beats both only if strictly better or equal-and-closer
        assert res.guidance in (near, far)
        res2 = gs.select_guidance([far, near, far], cloud, np.array([1.0, 0, 0]), center)
        assert res2.guidance is res.guidance

import numpy as np
import pytest

from fastgrasp import reward as rw
from fastgrasp import simenv as se
from fastgrasp.geometry import RigidTransform
from fastgrasp.grasp import GraspPose
from fastgrasp.objects import ObjectModel
from fastgrasp.synthesis import CachedGraspBank, SynthesisConfig


@pytest.fixture()
def env_state():
    obj = ObjectModel("sphere_40mm", "sphere", (0.04,))
    bank = CachedGraspBank([obj], SynthesisConfig(quota=10), seed=3,
                           candidates_per_reset=10)
    env = se.Env(se.EnvConfig(objects=[obj]), bank, np.random.default_rng(1))
    return env, env.reset()


def place_ee(state, offset_from_guidance, rot=None):
    """Puts the wrist at guidance + offset without touching the joints."""
    g = state.guidance.wrist_transform()
    state.ee_pose = RigidTransform(g.rotation if rot is None else rot,
                                   g.translation + np.asarray(offset_from_guidance))
    return state


def pin_guidance_at_origin(state):
    """Zero guidance position so ee offsets give exactly representable distances."""
    state.guidance = GraspPose(np.zeros(3), state.guidance.rot.copy(),
                               state.guidance.qpos.copy())
    return state


def compute(state, action=None, weights=None, **kw):
    action = action or se.Action(np.zeros(2), np.zeros(5), np.zeros(16))
    weights = weights or rw.RewardWeights()
    return rw.compute_reward(state, action, state.guidance, weights, **kw)


class TestGates:
    def test_rest_open_hand_far(self, env_state):
        _, state = env_state
        state.qpos_hand = np.zeros(16)
        state.v_forward = state.v_yaw = 0.0
        state.contact_flags = np.zeros(9, dtype=np.int64)
        b = compute(state)
        assert b.move == 0.0
        assert b.hand == pytest.approx(1.0)     # 1/(1+0), open-hand branch
        assert b.reach == 0.0
        assert b.tactile == 0.0

    def test_height_gate_boundary(self, env_state):
        _, state = env_state
        pin_guidance_at_origin(state)
        # 0.4 m: gate "> 0.5" false -> 0; 0.6 m: active
        state.ee_pose = RigidTransform(np.eye(3), np.array([0.0, -0.4, 0.0]))
        assert compute(state).height == 0.0
        state.ee_pose = RigidTransform(np.eye(3), np.array([0.0, -0.6, 0.1]))
        expected = -abs(state.ee_pose.translation[2] - state.object_pose.translation[2])
        assert compute(state).height == pytest.approx(expected)
        state.ee_pose = RigidTransform(np.eye(3), np.array([0.0, -0.5, 0.0]))
        assert compute(state).height == 0.0  # exactly at the gate: inactive

    def test_pre_grasp_gate_boundary(self, env_state):
        _, state = env_state
        pin_guidance_at_origin(state)
        rot = state.guidance.wrist_transform().rotation
        state.ee_pose = RigidTransform(rot, np.array([0.100000001, 0.0, 0.0]))
        assert compute(state).pre_grasp == 0.0
        state.ee_pose = RigidTransform(rot, np.array([0.1, 0.0, 0.0]))  # exactly 0.1
        b = compute(state)
        assert b.pre_grasp == pytest.approx(-0.1)  # zero rot error, alpha_pos=1
        state.ee_pose = RigidTransform(rot, np.array([0.05, 0.0, 0.0]))
        assert compute(state).pre_grasp == pytest.approx(-0.05)

    def test_pre_grasp_rotation_term(self, env_state):
        _, state = env_state
        from fastgrasp.geometry import rot_z
        g = state.guidance.wrist_transform()
        place_ee(state, [0.0, 0.0, 0.0], rot=g.rotation @ rot_z(0.3))
        b = compute(state, weights=rw.RewardWeights(alpha_rot=2.0))
        assert b.pre_grasp == pytest.approx(-2.0 * 0.3, abs=1e-9)

    def test_hand_gate_switches_exactly_at_200mm(self, env_state):
        _, state = env_state
        pin_guidance_at_origin(state)
        q = np.full(16, 0.3)
        state.qpos_hand = q
        far = 1.0 / (1.0 + 2.0 * np.linalg.norm(q))
        near = 5.0 / (1.0 + 2.0 * np.linalg.norm(q - state.guidance.qpos))
        state.ee_pose = RigidTransform(np.eye(3), np.array([0.2000001, 0.0, 0.0]))
        assert compute(state).hand == pytest.approx(far)
        state.ee_pose = RigidTransform(np.eye(3), np.array([0.2, 0.0, 0.0]))
        assert compute(state).hand == pytest.approx(near)  # boundary: near branch

    def test_hand_near_branch_max_at_guidance_config(self, env_state):
        _, state = env_state
        place_ee(state, [0.0, 0.0, 0.0])
        state.qpos_hand = state.guidance.qpos.copy()
        assert compute(state).hand == pytest.approx(5.0)

    def test_reach_gate_and_speed_clamp(self, env_state):
        _, state = env_state
        pin_guidance_at_origin(state)
        state.ee_speed = 1.0
        state.ee_pose = RigidTransform(np.eye(3), np.array([0.2500001, 0.0, 0.0]))
        assert compute(state).reach == 0.0
        state.ee_pose = RigidTransform(np.eye(3), np.array([0.25, 0.0, 0.0]))
        assert compute(state).reach == pytest.approx(np.e)
        state.ee_speed = 10.0  # clamped to 3 before exponentiation
        assert compute(state).reach == pytest.approx(np.exp(3.0))

    def test_tactile_gated_on_palm(self, env_state):
        _, state = env_state
        flags = np.zeros(9, dtype=np.int64)
        flags[[0, 2, 4]] = 1
        state.contact_flags = flags
        assert compute(state).tactile == 0.0  # palm flag off
        flags[8] = 1
        state.contact_flags = flags
        assert compute(state).tactile == pytest.approx(3.0)
        state.contact_flags = np.zeros(9, dtype=np.int64)


class TestTerms:
    def test_stable_is_twice_hold_time(self, env_state):
        _, state = env_state
        state.hold_time = 0.5
        assert compute(state).stable == pytest.approx(1.0)
        state.hold_time = 0.0

    def test_action_penalty_squared_norm(self, env_state):
        _, state = env_state
        a = se.Action(np.array([0.5, -0.5]), np.full(5, 0.2), np.zeros(16))
        b = compute(state, action=a)
        assert b.action_penalty == pytest.approx(-(0.25 + 0.25 + 5 * 0.04))
        assert b.action_penalty <= 0.0
        z = compute(state)
        assert z.action_penalty == 0.0

    def test_action_penalty_delta_mode(self, env_state):
        _, state = env_state
        a = se.Action(np.array([1.0, 0.0]), np.zeros(5), np.zeros(16))
        prev = se.Action(np.array([0.4, 0.0]), np.zeros(5), np.zeros(16))
        b = compute(state, action=a, action_mode="delta", prev_action=prev)
        assert b.action_penalty == pytest.approx(-0.36)

    def test_move_uses_absolute_values(self, env_state):
        _, state = env_state
        state.v_forward, state.v_yaw = -0.7, -0.3
        assert compute(state).move == pytest.approx(1.0)
        state.v_forward = state.v_yaw = 0.0

    def test_radius_is_ee_to_arm_base_distance(self, env_state):
        _, state = env_state
        expected = np.linalg.norm(state.ee_pose.translation - state.arm_base_position())
        assert compute(state).radius == pytest.approx(expected)

    def test_ori_zero_when_stationary_negative_when_misdirected(self, env_state):
        _, state = env_state
        state.v_forward = 0.0
        assert compute(state).ori == 0.0
        # staging point is ahead of the origin (guidance ~2 m out, arm radius
        # ~1 m): heading pi drives nearly straight away, heading 0 nearly at it
        state.v_forward = 1.0
        state.base_pose = np.array([0.0, 0.0, np.pi])
        away = compute(state).ori
        state.base_pose = np.zeros(3)
        toward = compute(state).ori
        assert away < -2.5
        assert -0.5 < toward <= 0.0
        assert toward > away

    def test_total_is_weighted_sum_exactly(self, env_state):
        _, state = env_state
        state.hold_time = 0.25
        w = rw.RewardWeights(radius=0.3, move=2.0, ori=1.5, height=0.7, pre_grasp=3.0,
                             hand=0.2, reach=0.9, stable=4.0, tactile=1.1,
                             action_penalty=0.01)
        a = se.Action(np.array([0.2, 0.1]), np.full(5, -0.1), np.full(16, 0.05))
        b = rw.compute_reward(state, a, state.guidance, w)
        total = sum(getattr(w, k) * v for k, v in b.terms().items())
        assert b.total == total
        state.hold_time = 0.0

"""The ten-term shaping reward with distance gates, returning a full breakdown.

Gate thresholds (0.5 / 0.1 / 0.2 / 0.25 m on end-effector-to-guidance
distance, plus the palm-contact gate on the tactile term) are part of the
reward definition and fixed here; only the per-term weights and the two
pre-grasp factors are configuration.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .geometry import rotation_angle_between
from .grasp import GraspPose
from .contact import touch_summary
from .kinematics import heading_vector

HEIGHT_GATE = 0.5      # R_height active strictly beyond this distance
PRE_GRASP_GATE = 0.1   # R_pre_grasp active at or below
HAND_GATE = 0.2        # R_hand switches open->align branch at or below
REACH_GATE = 0.25      # R_reach active at or below
EE_SPEED_CLAMP = 3.0   # m/s bound before exponentiation in R_reach

INITIAL_HEADING = np.array([1.0, 0.0, 0.0])  # robots reset facing +x


@dataclass
class RewardWeights:
    radius: float = 1.0
    move: float = 1.0
    ori: float = 1.0
    height: float = 1.0
    pre_grasp: float = 1.0
    hand: float = 1.0
    reach: float = 1.0
    stable: float = 1.0
    tactile: float = 1.0
    action_penalty: float = 1.0
    alpha_rot: float = 1.0
    alpha_pos: float = 1.0

    def __post_init__(self):
        if self.alpha_rot <= 0 or self.alpha_pos <= 0:
            raise ValueError("alpha_rot and alpha_pos must be positive")


TERM_NAMES = ("radius", "move", "ori", "height", "pre_grasp", "hand", "reach",
              "stable", "tactile", "action_penalty")


@dataclass
class RewardBreakdown:
    radius: float
    move: float
    ori: float
    height: float
    pre_grasp: float
    hand: float
    reach: float
    stable: float
    tactile: float
    action_penalty: float
    total: float

    def terms(self) -> dict:
        return {name: getattr(self, name) for name in TERM_NAMES}


def compute_reward(state, action, guidance: GraspPose, weights: RewardWeights,
                   rot_metric: str = "geodesic", action_mode: str = "magnitude",
                   prev_action=None) -> RewardBreakdown:
    """Evaluate every term for one post-step state and the action that led to it.

    `rot_metric` picks the pre-grasp rotation distance: "geodesic" (angle
    between wrist rotations, gimbal-robust) or "euler" (plain norm of the
    Euler difference). `action_mode` "delta" penalizes the change from
    `prev_action` instead of the action magnitude.
    """
    ee = state.ee_pose
    pos_ee = ee.translation
    pos_g = guidance.pos
    dist = float(np.linalg.norm(pos_g - pos_ee))
    obj_center = state.object_pose.translation

    # (i) arm extension
    r_arm = float(np.linalg.norm(pos_ee - state.arm_base_position()))
    radius = r_arm

    # (ii) base speed
    move = abs(state.v_forward) + abs(state.v_yaw)

    # (iii) base direction toward the staging point offset back from the
    # guidance by the current arm radius along the initial heading
    target_point = pos_g - r_arm * INITIAL_HEADING
    to_target = target_point[:2] - state.base_pose[:2]
    vel = state.v_forward * heading_vector(state.base_pose[2])[:2]
    if np.linalg.norm(to_target) < 1e-9 or np.linalg.norm(vel) < 1e-9:
        ori = 0.0  # stationary base (or at the staging point): no direction defined
    else:
        cosang = float(to_target @ vel / (np.linalg.norm(to_target) * np.linalg.norm(vel)))
        ori = -float(np.arccos(np.clip(cosang, -1.0, 1.0)))

    # (iv) height alignment, active only while far
    height = -abs(pos_ee[2] - obj_center[2]) if dist > HEIGHT_GATE else 0.0

    # (v) pre-grasp pose alignment, active only when close
    if dist <= PRE_GRASP_GATE:
        if rot_metric == "geodesic":
            rot_err = rotation_angle_between(ee, guidance.wrist_transform())
        elif rot_metric == "euler":
            rot_err = float(np.linalg.norm(ee.euler() - guidance.rot))
        else:
            raise ValueError(f"unknown rot_metric '{rot_metric}'")
        pre_grasp = float(-weights.alpha_rot * rot_err
                          - weights.alpha_pos * np.linalg.norm(pos_ee - pos_g))
    else:
        pre_grasp = 0.0

    # (vi) hand opens when far, tracks the guidance configuration when close
    if dist > HAND_GATE:
        hand = 1.0 / (1.0 + 2.0 * float(np.linalg.norm(state.qpos_hand)))
    else:
        hand = 5.0 / (1.0 + 2.0 * float(np.linalg.norm(state.qpos_hand - guidance.qpos)))

    # (vii) rapid completion: reward end-effector speed near the target
    reach = float(np.exp(min(state.ee_speed, EE_SPEED_CLAMP))) if dist <= REACH_GATE else 0.0

    # (viii) stable grasping: twice the hold duration
    stable = 2.0 * state.hold_time

    # (ix) tactile: finger contact count gated on palm contact
    f_touch, c_palm = touch_summary(state.contact_flags)
    tactile = float(f_touch) if c_palm else 0.0

    # (x) control penalty, squared L2 kernel
    a = action.to_vector()
    if action_mode == "delta":
        ref = np.zeros_like(a) if prev_action is None else prev_action.to_vector()
        action_penalty = -float(np.sum((a - ref) ** 2))
    elif action_mode == "magnitude":
        action_penalty = -float(np.sum(a ** 2))
    else:
        raise ValueError(f"unknown action_mode '{action_mode}'")

    terms = dict(radius=radius, move=move, ori=ori, height=height,
                 pre_grasp=pre_grasp, hand=hand, reach=reach, stable=stable,
                 tactile=tactile, action_penalty=action_penalty)
    total = sum(getattr(weights, k) * v for k, v in terms.items())
    return RewardBreakdown(total=total, **terms)

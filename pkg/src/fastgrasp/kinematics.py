"""Whole-body kinematics: unicycle base, 6-joint arm (one auto-leveled), 16-joint hand.

Arm chain (meters, radians), all rotations right-handed:

    base -> Trans(mount) -> Rz(q1) -> Trans(0,0,rise)
         -> Ry(q2) Trans(a2,0,0) -> Ry(q3) Trans(a3,0,0)
         -> Ry(q4*) Trans(a4,0,0) -> Ry(q5) Trans(a5,0,0)
         -> Rx(q6) Trans(a6,0,0) = flange

q4* is not commanded: it is held at -(q2+q3) so the wrist link stays
horizontal regardless of shoulder/elbow pitch. The five controllable joints
are (q1, q2, q3, q5, q6). At the all-zero pose the flange sits at
(1.04, 0, 0.50) with identity orientation (x = approach, z = up).

Hand: palm plate offset along flange +x; palm frame has x = palm normal
(toward the object), z = finger extension, y = lateral. Three fingers
(index/middle/ring) extend along +z and curl toward +x; the thumb extends
along -z and also curls toward +x, opposing them. Per finger the joints are
[abduction about local x, three curl joints about local y], 16 total.
Contact pads: middle-of-second-segment and fingertip per finger (8), plus
the palm center (9 binary pads total).
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .geometry import RigidTransform, rot_x, rot_y, rot_z

FINGER_NAMES = ("index", "middle", "ring", "thumb")


@dataclass
class ArmGeometry:
    mount_offset: np.ndarray = field(default_factory=lambda: np.array([0.10, 0.0, 0.40]))
    shoulder_rise: float = 0.10
    link_lengths: np.ndarray = field(
        default_factory=lambda: np.array([0.40, 0.35, 0.08, 0.06, 0.05]))
    joint_limits: np.ndarray = field(default_factory=lambda: np.array(
        [[-2.9, 2.9], [-1.9, 1.9], [-2.4, 2.4], [-1.9, 1.9], [-2.9, 2.9]]))

    @property
    def reach(self) -> float:
        return float(np.sum(self.link_lengths))


@dataclass
class HandGeometry:
    palm_offset: float = 0.04
    finger_base_y: np.ndarray = field(default_factory=lambda: np.array([-0.032, 0.0, 0.032]))
    finger_base_x: float = 0.012
    finger_base_z: float = 0.048
    segment_lengths: np.ndarray = field(default_factory=lambda: np.array([0.050, 0.032, 0.028]))
    joint_limits: np.ndarray = field(default_factory=lambda: np.array([[-0.3, 1.8]] * 16))
    pad_radius: float = 0.005

    def base_frames(self) -> tuple[np.ndarray, np.ndarray]:
        """(4,3) positions and (4,3,3) orientations of finger roots, palm frame."""
        pos = np.array([
            [self.finger_base_x, self.finger_base_y[0], self.finger_base_z],
            [self.finger_base_x, self.finger_base_y[1], self.finger_base_z],
            [self.finger_base_x, self.finger_base_y[2], self.finger_base_z],
            [self.finger_base_x, 0.0, -self.finger_base_z],
        ])
        rot = np.broadcast_to(np.eye(3), (4, 3, 3)).copy()
        rot[3] = rot_x(np.pi)  # thumb extends along -z, curls toward +x
        return pos, rot


@dataclass
class HandKeypoints:
    """Fingertips, thumb tip, palm center and unit palm normal, world frame."""

    fingertips: np.ndarray   # (3, 3) index / middle / ring
    thumb_tip: np.ndarray    # (3,)
    palm_center: np.ndarray  # (3,)
    palm_normal: np.ndarray  # (3,), unit

    def all_points(self) -> np.ndarray:
        return np.vstack([self.fingertips, self.thumb_tip, self.palm_center])


# ---------------------------------------------------------------------------
# Arm
# ---------------------------------------------------------------------------


def base_transform(base_pose: np.ndarray) -> RigidTransform:
    """(x, y, heading) -> world transform of the base frame."""
    x, y, heading = base_pose
    return RigidTransform(rot_z(heading), np.array([x, y, 0.0]))


def fixed_wrist_pitch(qpos_arm: np.ndarray) -> float:
    """Value of the auto-leveled fourth joint for given shoulder/elbow pitch."""
    return -(qpos_arm[1] + qpos_arm[2])


def arm_fk(qpos_arm: np.ndarray, base_pose: np.ndarray,
           geo: ArmGeometry | None = None) -> RigidTransform:
    """World pose of the flange for 5 commanded joints (q1, q2, q3, q5, q6)."""
    return arm_chain(qpos_arm, base_pose, geo)[-1]


def arm_chain(qpos_arm: np.ndarray, base_pose: np.ndarray,
              geo: ArmGeometry | None = None) -> list[RigidTransform]:
    """Transforms after each link: [shoulder, elbow, wrist1, wrist2, flange]."""
    geo = geo or ArmGeometry()
    q1, q2, q3, q5, q6 = qpos_arm
    q4 = -(q2 + q3)
    a2, a3, a4, a5, a6 = geo.link_lengths
    t = base_transform(base_pose)
    t = t.compose(RigidTransform(np.eye(3), geo.mount_offset))
    t = t.compose(RigidTransform(rot_z(q1), np.zeros(3)))
    t = t.compose(RigidTransform(np.eye(3), np.array([0.0, 0.0, geo.shoulder_rise])))
    out = [t]  # shoulder
    for rot, length in ((rot_y(q2), a2), (rot_y(q3), a3), (rot_y(q4), a4),
                        (rot_y(q5), a5), (rot_x(q6), a6)):
        t = t.compose(RigidTransform(rot, np.zeros(3)))
        t = t.compose(RigidTransform(np.eye(3), np.array([length, 0.0, 0.0])))
        out.append(t)
    return out


def arm_collision_points(qpos_arm: np.ndarray, base_pose: np.ndarray,
                         geo: ArmGeometry | None = None) -> np.ndarray:
    """World positions of shoulder and each link end, for table collision tests."""
    return np.array([t.translation for t in arm_chain(qpos_arm, base_pose, geo)])


ARM_HOME = np.zeros(5)


# ---------------------------------------------------------------------------
# Hand
# ---------------------------------------------------------------------------


def _roty_batch(theta: np.ndarray) -> np.ndarray:
    c, s = np.cos(theta), np.sin(theta)
    r = np.zeros((theta.size, 3, 3))
    r[:, 0, 0] = c
    r[:, 0, 2] = s
    r[:, 1, 1] = 1.0
    r[:, 2, 0] = -s
    r[:, 2, 2] = c
    return r


def _rotx_batch(theta: np.ndarray) -> np.ndarray:
    c, s = np.cos(theta), np.sin(theta)
    r = np.zeros((theta.size, 3, 3))
    r[:, 0, 0] = 1.0
    r[:, 1, 1] = c
    r[:, 1, 2] = -s
    r[:, 2, 1] = s
    r[:, 2, 2] = c
    return r


def hand_fk_full(qpos_hand: np.ndarray, wrist_pose: RigidTransform,
                 geo: HandGeometry | None = None):
    """Keypoints plus the 9 contact-pad centers (8 finger pads + palm).

    Pad order: [index_mid, index_tip, middle_mid, middle_tip, ring_mid,
    ring_tip, thumb_mid, thumb_tip, palm].
    """
    geo = geo or HandGeometry()
    q = np.asarray(qpos_hand, dtype=np.float64).reshape(4, 4)
    base_pos, base_rot = geo.base_frames()
    l1, l2, l3 = geo.segment_lengths

    rot = np.einsum("fij,fjk->fik", base_rot, _rotx_batch(q[:, 0]))
    rot = np.einsum("fij,fjk->fik", rot, _roty_batch(q[:, 1]))
    knuckle2 = base_pos + l1 * rot[:, :, 2]
    rot = np.einsum("fij,fjk->fik", rot, _roty_batch(q[:, 2]))
    mid_pad = knuckle2 + (l2 / 2.0) * rot[:, :, 2]
    knuckle3 = knuckle2 + l2 * rot[:, :, 2]
    rot = np.einsum("fij,fjk->fik", rot, _roty_batch(q[:, 3]))
    tips = knuckle3 + l3 * rot[:, :, 2]

    palm = RigidTransform(np.eye(3), np.array([geo.palm_offset, 0.0, 0.0]))
    to_world = wrist_pose.compose(palm)
    tips_w = to_world.apply(tips)
    mids_w = to_world.apply(mid_pad)
    palm_center = to_world.apply(np.zeros(3))
    palm_normal = to_world.rotation[:, 0]

    keypoints = HandKeypoints(
        fingertips=tips_w[:3],
        thumb_tip=tips_w[3],
        palm_center=palm_center,
        palm_normal=palm_normal,
    )
    pads = np.empty((9, 3))
    pads[0:8:2] = mids_w
    pads[1:8:2] = tips_w
    pads[8] = palm_center
    return keypoints, pads


def hand_fk(qpos_hand: np.ndarray, wrist_pose: RigidTransform,
            geo: HandGeometry | None = None) -> HandKeypoints:
    """Fingertips, thumb tip, palm center and normal for a hand configuration."""
    return hand_fk_full(qpos_hand, wrist_pose, geo)[0]


HAND_OPEN = np.zeros(16)


# ---------------------------------------------------------------------------
# Mobile base
# ---------------------------------------------------------------------------


def integrate_unicycle(pose: np.ndarray, v_f: float, v_y: float, dt: float) -> np.ndarray:
    """Exact arc integration of a nonholonomic unicycle."""
    x, y, heading = pose
    if abs(v_y) < 1e-12:
        return np.array([x + v_f * np.cos(heading) * dt,
                         y + v_f * np.sin(heading) * dt,
                         heading])
    new_heading = heading + v_y * dt
    radius = v_f / v_y
    return np.array([x + radius * (np.sin(new_heading) - np.sin(heading)),
                     y - radius * (np.cos(new_heading) - np.cos(heading)),
                     new_heading])


def heading_vector(heading: float) -> np.ndarray:
    return np.array([np.cos(heading), np.sin(heading), 0.0])


# ---------------------------------------------------------------------------
# Numeric inverse kinematics (used by the scripted controller and tests)
# ---------------------------------------------------------------------------


def arm_ik(target: RigidTransform, base_pose: np.ndarray, q0: np.ndarray,
           geo: ArmGeometry | None = None, iters: int = 120,
           pos_tol: float = 1e-4, rot_weight: float = 0.3):
    """Damped least-squares IK for the 5 commanded joints.

    Returns (q, pos_err, rot_err). The 5-DOF arm cannot reach arbitrary 6D
    poses; callers should check the residuals.
    """
    geo = geo or ArmGeometry()
    q = np.array(q0, dtype=np.float64)
    lims = geo.joint_limits

    def pose_error(qv):
        t = arm_fk(qv, base_pose, geo)
        dp = target.translation - t.translation
        r_err = target.rotation @ t.rotation.T
        # rotation vector of the error rotation
        angle = np.arccos(min(1.0, max(-1.0, (np.trace(r_err) - 1.0) / 2.0)))
        if angle < 1e-12:
            dr = np.zeros(3)
        else:
            axis = np.array([r_err[2, 1] - r_err[1, 2],
                             r_err[0, 2] - r_err[2, 0],
                             r_err[1, 0] - r_err[0, 1]])
            n = np.linalg.norm(axis)
            dr = angle * axis / n if n > 1e-12 else np.zeros(3)
        return np.concatenate([dp, rot_weight * dr])

    h = 1e-6
    for _ in range(iters):
        err = pose_error(q)
        if np.linalg.norm(err[:3]) < pos_tol and np.linalg.norm(err[3:]) < rot_weight * 1e-3:
            break
        jac = np.empty((6, 5))
        for j in range(5):
            dq = q.copy()
            dq[j] += h
            jac[:, j] = (pose_error(dq) - err) / (-h)
        # jac = d(fk)/dq, so solve jac @ dq = err
        jtj = jac.T @ jac + 1e-6 * np.eye(5)
        step = np.linalg.solve(jtj, jac.T @ err)
        step = np.clip(step, -0.3, 0.3)
        q = np.clip(q + step, lims[:, 0], lims[:, 1])

    final = pose_error(q)
    return q, float(np.linalg.norm(final[:3])), float(np.linalg.norm(final[3:]) / rot_weight)

"""Simplified whole-body simulator: unicycle base, rate-limited arm and hand,
an object on a table, binary tactile pads, and a kinematic attachment model.

Physics runs at 60 Hz with one policy action applied per control step of 4
substeps (15 Hz). Base velocities slew toward their commands under the
acceleration limit; arm and hand joints move toward position targets under
their rate caps. The object is static until the attachment condition holds
(palm contact plus two finger contacts with an opposing thumb/finger pair),
after which it moves rigidly with the hand. Slip is charged once per
attachment event, proportional to how much the end-effector speed exceeds a
safe threshold; exceeding half the object width drops the object.

Episodes terminate on unintended collision (hand/arm/base vs table), object
drop, a completed 2 s hold, or the step horizon.
"""
from __future__ import annotations

from dataclasses import dataclass, field, replace
from typing import Callable

import numpy as np

from .contact import pad_contact_flags, touch_summary, has_opposing_pair
from .errors import NoFeasibleGrasp, NumericalError, ResetFailed
from .geometry import RigidTransform, rot_z
from .grasp import GraspPose
from .graspselect import select_guidance
from .kinematics import (ArmGeometry, HandGeometry, arm_chain, base_transform,
                         hand_fk_full, heading_vector, integrate_unicycle)
from .objects import ObjectModel, cull_backfacing

SUBSTEP_HZ = 60
SUBSTEPS_PER_CONTROL = 4
SUBSTEP_DT = 1.0 / SUBSTEP_HZ
CONTROL_DT = SUBSTEPS_PER_CONTROL * SUBSTEP_DT  # 15 Hz
OBS_DIM = 58
ACTION_DIM = 23


@dataclass
class RobotModel:
    """Limits and geometry of the mobile base + arm + hand assembly."""

    v_forward_max: float = 1.3          # m/s
    v_yaw_max: float = 1.0              # rad/s
    accel_time: float = 0.7             # s from standstill to v_forward_max
    base_radius: float = 0.25           # m, footprint circle
    arm: ArmGeometry = field(default_factory=ArmGeometry)
    hand: HandGeometry = field(default_factory=HandGeometry)
    arm_rate: float = np.radians(100.0)  # rad/s per joint
    hand_rate: float = np.radians(90.0)
    arm_home: np.ndarray = field(default_factory=lambda: np.zeros(5))
    hand_home: np.ndarray = field(default_factory=lambda: np.zeros(16))
    contact_radius: float = 0.005
    # fixed nominal wrist-to-camera transform (camera looks along flange +x)
    camera_offset: np.ndarray = field(default_factory=lambda: np.array([0.0, 0.0, 0.05]))

    @property
    def accel_forward(self) -> float:
        return self.v_forward_max / self.accel_time

    @property
    def accel_yaw(self) -> float:
        return self.v_yaw_max / self.accel_time


@dataclass
class DomainRandomization:
    """Multiplicative ranges (fractions) and noise sigmas; zeros = identity."""

    enabled: bool = False
    link_length_frac: float = 0.02
    rate_limit_frac: float = 0.10
    contact_radius_frac: float = 0.20
    obs_pos_sigma: float = 0.005        # m
    obs_joint_sigma: float = np.radians(0.5)
    action_sigma_frac: float = 0.01     # fraction of each command range


@dataclass
class NoiseModel:
    obs_pos_sigma: float = 0.0
    obs_joint_sigma: float = 0.0
    action_sigma_frac: float = 0.0


def randomize_domain(model: RobotModel, dr: DomainRandomization,
                     rng: np.random.Generator) -> tuple[RobotModel, NoiseModel]:
    """Per-episode perturbed copy of the robot model plus noise sigmas."""
    def scale(frac):
        return 1.0 + rng.uniform(-frac, frac)

    arm = ArmGeometry(
        mount_offset=model.arm.mount_offset.copy(),
        shoulder_rise=model.arm.shoulder_rise,
        link_lengths=model.arm.link_lengths * np.array(
            [scale(dr.link_length_frac) for _ in model.arm.link_lengths]),
        joint_limits=model.arm.joint_limits.copy(),
    )
    hand = HandGeometry(
        palm_offset=model.hand.palm_offset,
        finger_base_y=model.hand.finger_base_y.copy(),
        finger_base_x=model.hand.finger_base_x,
        finger_base_z=model.hand.finger_base_z,
        segment_lengths=model.hand.segment_lengths * np.array(
            [scale(dr.link_length_frac) for _ in model.hand.segment_lengths]),
        joint_limits=model.hand.joint_limits.copy(),
        pad_radius=model.hand.pad_radius,
    )
    perturbed = replace(
        model, arm=arm, hand=hand,
        arm_rate=model.arm_rate * scale(dr.rate_limit_frac),
        hand_rate=model.hand_rate * scale(dr.rate_limit_frac),
        contact_radius=model.contact_radius * scale(dr.contact_radius_frac),
    )
    noise = NoiseModel(dr.obs_pos_sigma, dr.obs_joint_sigma, dr.action_sigma_frac)
    return perturbed, noise


@dataclass
class EnvConfig:
    robot: RobotModel = field(default_factory=RobotModel)
    objects: list = field(default_factory=list)
    table_height_range: tuple = (0.6, 0.9)
    table_x_range: tuple = (2.1, 2.5)       # table center along initial heading
    table_y_range: tuple = (-0.3, 0.3)
    table_half_extents: tuple = (0.35, 0.5)
    table_thickness: float = 0.05
    object_offset_range: tuple = (0.08, 0.12)  # max |dx|, |dy| from table center
    object_yaw_range: tuple = (-np.pi, np.pi)
    horizon_steps: int = 150                 # control steps per episode
    hold_success_time: float = 2.0           # s
    slip_coeff: float = 0.05                 # s
    slip_safe_speed: float = 0.3             # m/s
    # transient finger sweeps graze the table top when wrapping small objects
    # that sit on it; allow ~1 cm penetration before it counts as a collision
    collision_tolerance: float = 0.01
    cloud_points: int = 256
    partial_cloud: bool = False
    selection_mode: str = "approach"
    selection_cone_half_angle: float = np.pi / 2
    selection_collision_margin: float = 0.0
    guidance_frame: str = "base"             # how g appears in observations
    randomization: DomainRandomization = field(default_factory=DomainRandomization)
    reset_retries: int = 10


@dataclass
class Action:
    """23-dim command: base velocities + arm and hand position targets."""

    v_base: np.ndarray     # (2,) forward m/s, yaw rad/s
    qpos_arm: np.ndarray   # (5,)
    qpos_hand: np.ndarray  # (16,)

    @classmethod
    def from_vector(cls, vec: np.ndarray) -> "Action":
        vec = np.asarray(vec, dtype=np.float64).reshape(ACTION_DIM)
        return cls(vec[0:2], vec[2:7], vec[7:23])

    def to_vector(self) -> np.ndarray:
        return np.concatenate([self.v_base, self.qpos_arm, self.qpos_hand])


@dataclass
class StepEvents:
    collision: bool = False
    object_dropped: bool = False
    grasp_attached: bool = False
    timeout: bool = False
    hold_complete: bool = False

    @property
    def terminal(self) -> bool:
        return self.collision or self.object_dropped or self.timeout or self.hold_complete


@dataclass
class SimState:
    base_pose: np.ndarray          # (3,) x, y, heading
    v_forward: float
    v_yaw: float
    qpos_arm: np.ndarray           # (5,)
    qpos_hand: np.ndarray          # (16,)
    obj: ObjectModel
    object_pose: RigidTransform
    table_height: float
    table_center: np.ndarray       # (2,)
    guidance: GraspPose            # world frame
    cloud: np.ndarray              # world-frame perception cloud from reset
    model: RobotModel              # per-episode (possibly randomized) model
    noise: NoiseModel
    attached: bool = False
    attach_transform: RigidTransform | None = None
    slip: float = 0.0              # m, accumulated at attachment events
    hold_time: float = 0.0         # s the object has been held
    had_contact: bool = False      # any finger/palm contact this episode
    clock_substeps: int = 0
    contact_flags: np.ndarray = field(default_factory=lambda: np.zeros(9, dtype=np.int64))
    ee_pose: RigidTransform = field(default_factory=RigidTransform.identity)
    ee_speed: float = 0.0
    pads: np.ndarray = field(default_factory=lambda: np.zeros((9, 3)))
    arm_points: np.ndarray = field(default_factory=lambda: np.zeros((6, 3)))
    terminated: bool = False
    term_reason: str = ""

    @property
    def control_steps(self) -> int:
        return self.clock_substeps // SUBSTEPS_PER_CONTROL

    @property
    def time(self) -> float:
        return self.clock_substeps * SUBSTEP_DT

    def object_sdf(self) -> Callable[[np.ndarray], np.ndarray]:
        inv = self.object_pose.inverse()
        return lambda pts: self.obj.signed_distance(inv.apply(np.atleast_2d(pts)))

    def arm_base_position(self) -> np.ndarray:
        return base_transform(self.base_pose).apply(self.model.arm.mount_offset)

    def palm_center(self) -> np.ndarray:
        offset = np.array([self.model.hand.palm_offset, 0.0, 0.0])
        return self.ee_pose.apply(offset)


GuidanceProvider = Callable[[np.ndarray, ObjectModel, RigidTransform, np.random.Generator],
                            list]


class Env:
    """One simulation instance; owns its RNG stream, state passes explicitly."""

    def __init__(self, config: EnvConfig, guidance_provider: GuidanceProvider,
                 rng: np.random.Generator):
        if not config.objects:
            raise ValueError("EnvConfig.objects must not be empty")
        self.config = config
        self.provider = guidance_provider
        self.rng = rng

    # -- reset ---------------------------------------------------------------
    def reset(self) -> SimState:
        cfg = self.config
        last_error: Exception | None = None
        for _ in range(cfg.reset_retries):
            obj = cfg.objects[int(self.rng.integers(len(cfg.objects)))]
            table_h = float(self.rng.uniform(*cfg.table_height_range))
            table_c = np.array([self.rng.uniform(*cfg.table_x_range),
                                self.rng.uniform(*cfg.table_y_range)])
            dx, dy = cfg.object_offset_range
            offset = np.array([self.rng.uniform(-dx, dx), self.rng.uniform(-dy, dy)])
            yaw = float(self.rng.uniform(*cfg.object_yaw_range))
            pos = np.array([table_c[0] + offset[0], table_c[1] + offset[1],
                            table_h + obj.half_height])
            pose = RigidTransform(rot_z(yaw), pos)

            if cfg.randomization.enabled:
                model, noise = randomize_domain(cfg.robot, cfg.randomization, self.rng)
            else:
                model, noise = cfg.robot, NoiseModel()

            cloud_local = obj.sample_surface(cfg.cloud_points, self.rng)
            cloud = pose.apply(cloud_local)
            if cfg.partial_cloud:
                camera = self._camera_position(model)
                cloud = cull_backfacing(cloud, camera)

            try:
                candidates = self.provider(cloud, obj, pose, self.rng)
                result = select_guidance(
                    candidates, cloud, heading_vector(0.0), pos,
                    keypoints_fn=lambda g: hand_fk_full(g.qpos, g.wrist_transform(),
                                                        model.hand)[0],
                    mode=cfg.selection_mode,
                    cone_half_angle=cfg.selection_cone_half_angle,
                    collision_margin=cfg.selection_collision_margin)
            except NoFeasibleGrasp as exc:
                last_error = exc
                continue

            state = SimState(
                base_pose=np.zeros(3), v_forward=0.0, v_yaw=0.0,
                qpos_arm=model.arm_home.copy(), qpos_hand=model.hand_home.copy(),
                obj=obj, object_pose=pose, table_height=table_h, table_center=table_c,
                guidance=result.guidance, cloud=cloud, model=model, noise=noise)
            self._refresh_kinematics(state, state.qpos_arm)
            state.contact_flags = self._contacts(state)
            return state
        raise ResetFailed(f"no feasible guidance after {cfg.reset_retries} retries: {last_error}")

    def _camera_position(self, model: RobotModel) -> np.ndarray:
        chain = arm_chain(model.arm_home, np.zeros(3), model.arm)
        return chain[-1].apply(model.camera_offset)

    # -- stepping ------------------------------------------------------------
    def step(self, state: SimState, action: Action) -> tuple[SimState, StepEvents]:
        if state.terminated:
            raise RuntimeError("step() called on a terminated episode; reset first")
        cfg = self.config
        model = state.model
        act = action.to_vector()
        if not np.all(np.isfinite(act)):
            raise NumericalError("action contains non-finite values")

        if state.noise.action_sigma_frac > 0.0:
            ranges = np.concatenate([
                [2 * model.v_forward_max, 2 * model.v_yaw_max],
                model.arm.joint_limits[:, 1] - model.arm.joint_limits[:, 0],
                model.hand.joint_limits[:, 1] - model.hand.joint_limits[:, 0]])
            act = act + self.rng.normal(size=ACTION_DIM) * (
                state.noise.action_sigma_frac * ranges)

        v_f_cmd = float(np.clip(act[0], -model.v_forward_max, model.v_forward_max))
        v_y_cmd = float(np.clip(act[1], -model.v_yaw_max, model.v_yaw_max))
        arm_target = np.clip(act[2:7], model.arm.joint_limits[:, 0],
                             model.arm.joint_limits[:, 1])
        hand_target = np.clip(act[7:23], model.hand.joint_limits[:, 0],
                              model.hand.joint_limits[:, 1])

        prev_ee = state.ee_pose.translation.copy()
        dv_f = model.accel_forward * SUBSTEP_DT
        dv_y = model.accel_yaw * SUBSTEP_DT
        d_arm = model.arm_rate * SUBSTEP_DT
        d_hand = model.hand_rate * SUBSTEP_DT
        for _ in range(SUBSTEPS_PER_CONTROL):
            state.v_forward += np.clip(v_f_cmd - state.v_forward, -dv_f, dv_f)
            state.v_yaw += np.clip(v_y_cmd - state.v_yaw, -dv_y, dv_y)
            state.base_pose = integrate_unicycle(state.base_pose, state.v_forward,
                                                 state.v_yaw, SUBSTEP_DT)
            state.qpos_arm += np.clip(arm_target - state.qpos_arm, -d_arm, d_arm)
            state.qpos_hand += np.clip(hand_target - state.qpos_hand, -d_hand, d_hand)
            state.clock_substeps += 1

        self._refresh_kinematics(state, state.qpos_arm)
        state.ee_speed = float(np.linalg.norm(state.ee_pose.translation - prev_ee) / CONTROL_DT)

        events = StepEvents()
        if state.attached:
            state.object_pose = state.ee_pose.compose(state.attach_transform)
        state.contact_flags = self._contacts(state)
        f_touch, c_palm = touch_summary(state.contact_flags)
        if f_touch > 0 or c_palm:
            state.had_contact = True

        if state.attached:
            if f_touch < 2:
                state.attached = False
                state.attach_transform = None
                events.object_dropped = True
        else:
            if c_palm and f_touch >= 2 and has_opposing_pair(
                    state.pads, state.contact_flags, state.object_pose.translation,
                    state.object_sdf()):
                state.slip += cfg.slip_coeff * max(0.0, state.ee_speed - cfg.slip_safe_speed)
                if state.slip > state.obj.max_width / 2.0:
                    events.object_dropped = True
                else:
                    state.attached = True
                    state.attach_transform = state.ee_pose.inverse().compose(state.object_pose)
                    events.grasp_attached = True

        if state.attached:
            state.hold_time += CONTROL_DT
            if state.hold_time >= cfg.hold_success_time:
                events.hold_complete = True

        if self._table_collision(state):
            events.collision = True
        if state.control_steps >= cfg.horizon_steps and not events.terminal:
            events.timeout = True

        if events.terminal:
            state.terminated = True
            state.term_reason = ("collision" if events.collision else
                                 "dropped" if events.object_dropped else
                                 "hold_complete" if events.hold_complete else "timeout")
        return state, events

    def _refresh_kinematics(self, state: SimState, qpos_arm: np.ndarray) -> None:
        chain = arm_chain(qpos_arm, state.base_pose, state.model.arm)
        state.ee_pose = chain[-1]
        state.arm_points = np.array([t.translation for t in chain])

    def _contacts(self, state: SimState) -> np.ndarray:
        _, pads = hand_fk_full(state.qpos_hand, state.ee_pose, state.model.hand)
        state.pads = pads
        return pad_contact_flags(pads, state.object_sdf(), state.model.contact_radius)

    def _table_collision(self, state: SimState) -> bool:
        cfg = self.config
        hx, hy = cfg.table_half_extents
        cx, cy = state.table_center
        top = state.table_height
        bottom = top - cfg.table_thickness
        tol = cfg.collision_tolerance

        # base footprint circle vs table slab footprint (base is below the top)
        bx, by = state.base_pose[0], state.base_pose[1]
        dx = max(abs(bx - cx) - hx, 0.0)
        dy = max(abs(by - cy) - hy, 0.0)
        if np.hypot(dx, dy) < state.model.base_radius - tol:
            return True

        # arm links and hand pads penetrating the slab volume
        points = np.vstack([state.arm_points, state.pads])
        inside_xy = ((np.abs(points[:, 0] - cx) <= hx + tol)
                     & (np.abs(points[:, 1] - cy) <= hy + tol))
        below_top = points[:, 2] < top - tol
        above_bottom = points[:, 2] > bottom - tol
        return bool(np.any(inside_xy & below_top & above_bottom))

    # -- observations ----------------------------------------------------------
    def observe(self, state: SimState) -> np.ndarray:
        """58-dim observation; see layout in the module docstring of ppo."""
        noise = state.noise
        rng = self.rng
        qpos_arm = state.qpos_arm.copy()
        qpos_hand = state.qpos_hand.copy()
        if noise.obs_joint_sigma > 0.0:
            qpos_arm += rng.normal(size=5) * noise.obs_joint_sigma
            qpos_hand += rng.normal(size=16) * noise.obs_joint_sigma

        camera = state.ee_pose.compose(
            RigidTransform(np.eye(3), state.model.camera_offset))
        pos_obj = camera.inverse().apply(state.object_pose.translation)
        dis_obj = float(np.linalg.norm(state.object_pose.translation - state.palm_center()))
        if noise.obs_pos_sigma > 0.0:
            pos_obj = pos_obj + rng.normal(size=3) * noise.obs_pos_sigma
            dis_obj = abs(dis_obj + float(rng.normal()) * noise.obs_pos_sigma)

        if self.config.guidance_frame == "base":
            g = state.guidance.transformed(base_transform(state.base_pose).inverse())
        else:
            g = state.guidance
        obs = np.concatenate([
            qpos_arm, qpos_hand,
            [state.v_forward, state.v_yaw],
            pos_obj, [dis_obj],
            state.contact_flags.astype(np.float64),
            g.to_vector(),
        ])
        if obs.shape != (OBS_DIM,):
            raise NumericalError(f"observation has shape {obs.shape}")
        return obs


def make_envs(config: EnvConfig, provider: GuidanceProvider, seed: int,
              n_envs: int) -> list[Env]:
    """Independent env instances with split RNG streams (parallel workers)."""
    from .nets import rng_for
    return [Env(config, provider, rng_for(seed, "env", str(i))) for i in range(n_envs)]

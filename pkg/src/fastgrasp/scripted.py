"""Hard-coded drive-stage-grasp controller used to validate the simulator.

The controller reads privileged simulator state (world poses), so it is a
plumbing check for the environment, attachment model, and metrics, not a
baseline policy: drive the base to a staging point behind the guidance
along its approach azimuth, align, solve arm IK for the guidance wrist
pose (aimed slightly deeper so the palm seats against the object), close
the hand to the guidance joints, and hold.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .geometry import RigidTransform, rotation_angle_between
from .kinematics import arm_ik
from .ppo import ObjectEvalRow, EvalMetrics, summarize_trials
from .simenv import Action, Env, SimState

DRIVE, ALIGN, ARM, CLOSE, HOLD = range(5)

# raised elbow-up transit pose: wrist ~1.1 m high so the whole hand clears
# the tallest table while the base drives over/near its footprint
CARRY_ARM = np.array([0.0, -1.2, 0.45, 0.0, 0.0])


def _wrap(a: float) -> float:
    return (a + np.pi) % (2.0 * np.pi) - np.pi


@dataclass
class ScriptedGraspController:
    env_config: object = None         # EnvConfig, for table clearance planning
    shoulder_standoff: float = 0.55   # desired horizontal shoulder-to-wrist distance
    depth_bias: float = 0.006         # aim past the guidance so the palm seats
    squeeze_extra: float = 0.25       # fallback curl if attachment is late
    lift_after: float = 0.4           # s of hold before lifting

    def __post_init__(self):
        self._phase = DRIVE
        self._plan = None
        self._ik = None
        self._retries = 0
        self._close_steps = 0
        self._hold_steps = 0

    def _table_clearance(self, point_xy: np.ndarray, state: SimState) -> float:
        if self.env_config is None:
            return np.inf
        hx, hy = self.env_config.table_half_extents
        ex = max(abs(point_xy[0] - state.table_center[0]) - hx, 0.0)
        ey = max(abs(point_xy[1] - state.table_center[1]) - hy, 0.0)
        return float(np.hypot(ex, ey))

    def _make_plan(self, state: SimState):
        g = state.guidance
        wrist = g.wrist_transform()
        normal = wrist.rotation[:, 0]
        u_h = normal[:2].copy()
        if np.linalg.norm(u_h) < 1e-6:
            u_h = np.array([1.0, 0.0])
        u_h /= np.linalg.norm(u_h)
        mount_x = state.model.arm.mount_offset[0]
        standoff = self.shoulder_standoff + mount_x
        # push the staging point back until the base footprint clears the table
        clearance = state.model.base_radius + 0.05
        while (standoff < 1.0
               and self._table_clearance(g.pos[:2] - u_h * standoff, state) < clearance):
            standoff += 0.05
        base_target = g.pos[:2] - u_h * standoff
        heading_target = float(np.arctan2(u_h[1], u_h[0]))
        aim = RigidTransform(wrist.rotation, g.pos + normal * self.depth_bias)
        return {"base_target": base_target, "heading_target": heading_target,
                "aim": aim, "normal": normal}

    def act(self, obs: np.ndarray, state: SimState) -> Action:
        if self._plan is None:
            self._plan = self._make_plan(state)
        plan = self._plan
        model = state.model
        arm_target = CARRY_ARM.copy()
        hand_target = np.zeros(16)
        v = np.zeros(2)

        if self._phase == DRIVE:
            err = plan["base_target"] - state.base_pose[:2]
            dist = float(np.linalg.norm(err))
            if dist > 0.03:
                bearing = np.arctan2(err[1], err[0])
                e_h = _wrap(bearing - state.base_pose[2])
                v[1] = np.clip(3.0 * e_h, -model.v_yaw_max, model.v_yaw_max)
                if abs(e_h) < np.pi / 2:
                    feasible = np.sqrt(2.0 * model.accel_forward * max(0.0, dist - 0.02))
                    v[0] = np.clip(feasible, 0.0, model.v_forward_max) * np.cos(e_h)
            else:
                self._phase = ALIGN
        if self._phase == ALIGN:
            e_h = _wrap(plan["heading_target"] - state.base_pose[2])
            if abs(e_h) > 0.03 or abs(state.v_forward) > 0.02:
                v[1] = np.clip(3.0 * e_h, -model.v_yaw_max, model.v_yaw_max)
            else:
                self._phase = ARM
        if self._phase == ARM:
            # pre-shape while descending: the open thumb would otherwise
            # hang below the wrist and clip the table edge
            hand_target = state.guidance.qpos.copy()
            if self._ik is None:
                q, pos_err, _rot_err = arm_ik(plan["aim"], state.base_pose,
                                              state.qpos_arm, model.arm)
                if pos_err > 0.01 and self._retries < 3:
                    # out of comfortable reach: stage closer and re-drive
                    self._retries += 1
                    plan["base_target"] = plan["base_target"] + 0.08 * (
                        state.guidance.pos[:2] - plan["base_target"]) / np.linalg.norm(
                            state.guidance.pos[:2] - plan["base_target"])
                    self._phase = DRIVE
                    return Action(v, arm_target, hand_target)
                self._ik = q
            arm_target = self._ik.copy()
            pos_err = float(np.linalg.norm(state.ee_pose.translation
                                           - plan["aim"].translation))
            rot_err = rotation_angle_between(state.ee_pose, plan["aim"])
            if pos_err < 0.015 and rot_err < 0.15:
                self._phase = CLOSE
        if self._phase == CLOSE:
            arm_target = self._ik.copy()
            hand_target = state.guidance.qpos.copy()
            self._close_steps += 1
            if self._close_steps > 22:  # ~1.5 s: squeeze curls a bit deeper
                hand_target = hand_target.copy()
                for f in range(4):
                    hand_target[4 * f + 1:4 * f + 4] += self.squeeze_extra
                hand_target = np.clip(hand_target, model.hand.joint_limits[:, 0],
                                      model.hand.joint_limits[:, 1])
            if state.attached:
                self._phase = HOLD
                self._hold_arm = arm_target.copy()
                self._hold_hand = np.clip(hand_target, model.hand.joint_limits[:, 0],
                                          model.hand.joint_limits[:, 1])
        if self._phase == HOLD:
            self._hold_steps += 1
            arm_target = self._hold_arm.copy()
            hand_target = self._hold_hand
            if self._hold_steps * 4 / 60.0 > self.lift_after:
                arm_target[1] = arm_target[1] - 0.12  # small lift off the table
        return Action(v, arm_target, hand_target)


def evaluate_scripted(env: Env, n_trials: int, **controller_kwargs) -> EvalMetrics:
    """Run scripted-controller trials and report the standard eval metrics."""
    table: dict[str, ObjectEvalRow] = {}
    for _ in range(n_trials):
        controller = ScriptedGraspController(env_config=env.config, **controller_kwargs)
        state = env.reset()
        for _ in range(env.config.horizon_steps + 1):
            action = controller.act(env.observe(state), state)
            state, events = env.step(state, action)
            if events.terminal:
                break
        row = table.setdefault(
            state.obj.object_id,
            ObjectEvalRow(state.obj.object_id, state.obj.difficulty, 0, 0, []))
        row.trials += 1
        if state.term_reason == "hold_complete":
            row.successes += 1
        if state.had_contact:
            row.hod_cm.append(state.slip * 100.0)
    return summarize_trials(sorted(table.values(), key=lambda r: r.object_id))

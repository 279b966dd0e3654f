"""The 22-dim grasp representation shared by the generator, selector, and policy."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .geometry import RigidTransform, euler_to_matrix

GRASP_DIM = 22  # wrist position (3) + wrist Euler rotation (3) + hand joints (16)


@dataclass
class GraspPose:
    """Wrist position (m), wrist extrinsic-XYZ Euler rotation (rad), hand joints (rad)."""

    pos: np.ndarray
    rot: np.ndarray
    qpos: np.ndarray

    def __post_init__(self):
        self.pos = np.asarray(self.pos, dtype=np.float64).reshape(3)
        self.rot = np.asarray(self.rot, dtype=np.float64).reshape(3)
        self.qpos = np.asarray(self.qpos, dtype=np.float64).reshape(16)

    def to_vector(self) -> np.ndarray:
        return np.concatenate([self.pos, self.rot, self.qpos])

    @classmethod
    def from_vector(cls, vec: np.ndarray) -> "GraspPose":
        vec = np.asarray(vec, dtype=np.float64).reshape(GRASP_DIM)
        return cls(vec[0:3], vec[3:6], vec[6:22])

    def wrist_transform(self) -> RigidTransform:
        return RigidTransform(euler_to_matrix(*self.rot), self.pos)

    def clamped(self, joint_limits: np.ndarray) -> "GraspPose":
        """Copy with hand joints clamped into their limit ranges."""
        lims = np.asarray(joint_limits, dtype=np.float64)
        return GraspPose(self.pos.copy(), self.rot.copy(),
                         np.clip(self.qpos, lims[:, 0], lims[:, 1]))

    def is_valid(self, joint_limits: np.ndarray) -> bool:
        lims = np.asarray(joint_limits, dtype=np.float64)
        v = self.to_vector()
        return bool(np.all(np.isfinite(v))
                    and np.all(self.qpos >= lims[:, 0])
                    and np.all(self.qpos <= lims[:, 1]))

    def transformed(self, t: RigidTransform) -> "GraspPose":
        """Grasp expressed after a rigid motion of its frame."""
        wrist = t.compose(self.wrist_transform())
        return GraspPose(wrist.translation, wrist.euler(), self.qpos.copy())

"""3D rigid-body geometry and the 1D interval algebra behind the coverage metrics.

Conventions used throughout the package:
  * lengths in meters, angles in radians, everything float64;
  * Euler angles are extrinsic XYZ (roll about x, then pitch about y, then
    yaw about z, all about fixed world axes), i.e. R = Rz(yaw) Ry(pitch) Rx(roll);
  * point clouds are (N, 3) float64 arrays.

All functions here are pure and safe to call concurrently.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import EmptyCloud, InvalidAxis, InvalidRotation, ShapeError

ROT_TOL = 1e-9


def _as_points(cloud) -> np.ndarray:
    pts = np.asarray(cloud, dtype=np.float64)
    if pts.ndim != 2 or pts.shape[1] != 3:
        raise ShapeError(f"point cloud must be (N, 3), got {pts.shape}")
    return pts


def unit(v) -> np.ndarray:
    v = np.asarray(v, dtype=np.float64)
    n = np.linalg.norm(v)
    if n == 0.0:
        raise InvalidAxis("zero vector cannot be normalized")
    return v / n


def rot_x(angle: float) -> np.ndarray:
    c, s = np.cos(angle), np.sin(angle)
    return np.array([[1.0, 0.0, 0.0], [0.0, c, -s], [0.0, s, c]])


def rot_y(angle: float) -> np.ndarray:
    c, s = np.cos(angle), np.sin(angle)
    return np.array([[c, 0.0, s], [0.0, 1.0, 0.0], [-s, 0.0, c]])


def rot_z(angle: float) -> np.ndarray:
    c, s = np.cos(angle), np.sin(angle)
    return np.array([[c, -s, 0.0], [s, c, 0.0], [0.0, 0.0, 1.0]])


def euler_to_matrix(roll: float, pitch: float, yaw: float) -> np.ndarray:
    """Extrinsic XYZ Euler angles to a rotation matrix: Rz(yaw) Ry(pitch) Rx(roll)."""
    return rot_z(yaw) @ rot_y(pitch) @ rot_x(roll)


def matrix_to_euler(rotation: np.ndarray) -> np.ndarray:
    """Inverse of :func:`euler_to_matrix`; returns (roll, pitch, yaw).

    Well-defined away from gimbal lock (|pitch| < pi/2); at the singularity the
    roll/yaw split is chosen with roll = 0.
    """
    check_rotation(rotation)
    r = rotation
    sp = -r[2, 0]
    sp = min(1.0, max(-1.0, float(sp)))
    pitch = np.arcsin(sp)
    if abs(sp) < 1.0 - 1e-12:
        roll = np.arctan2(r[2, 1], r[2, 2])
        yaw = np.arctan2(r[1, 0], r[0, 0])
    else:
        roll = 0.0
        yaw = np.arctan2(-r[0, 1], r[1, 1]) * np.sign(sp)
    return np.array([roll, pitch, yaw])


def check_rotation(rotation: np.ndarray, tol: float = ROT_TOL) -> None:
    """Raise InvalidRotation unless the matrix is orthonormal with det +1."""
    r = np.asarray(rotation, dtype=np.float64)
    if r.shape != (3, 3):
        raise InvalidRotation(f"rotation must be 3x3, got {r.shape}")
    err = np.max(np.abs(r.T @ r - np.eye(3)))
    det = np.linalg.det(r)
    if err > tol or abs(det - 1.0) > tol:
        raise InvalidRotation(f"not a rotation: |R^T R - I|={err:.3g}, det={det:.6f}")


@dataclass
class RigidTransform:
    """Rigid motion: x -> rotation @ x + translation."""

    rotation: np.ndarray = field(default_factory=lambda: np.eye(3))
    translation: np.ndarray = field(default_factory=lambda: np.zeros(3))

    def __post_init__(self):
        self.rotation = np.asarray(self.rotation, dtype=np.float64)
        self.translation = np.asarray(self.translation, dtype=np.float64)

    @classmethod
    def identity(cls) -> "RigidTransform":
        return cls()

    @classmethod
    def from_euler(cls, translation, roll: float, pitch: float, yaw: float) -> "RigidTransform":
        return cls(euler_to_matrix(roll, pitch, yaw), np.asarray(translation, dtype=np.float64))

    def apply(self, points: np.ndarray) -> np.ndarray:
        pts = np.asarray(points, dtype=np.float64)
        if pts.ndim == 1:
            return self.rotation @ pts + self.translation
        return pts @ self.rotation.T + self.translation

    def rotate(self, vectors: np.ndarray) -> np.ndarray:
        vec = np.asarray(vectors, dtype=np.float64)
        if vec.ndim == 1:
            return self.rotation @ vec
        return vec @ self.rotation.T

    def compose(self, other: "RigidTransform") -> "RigidTransform":
        """self o other: applies `other` first, then `self`."""
        return RigidTransform(self.rotation @ other.rotation,
                              self.rotation @ other.translation + self.translation)

    def inverse(self) -> "RigidTransform":
        rt = self.rotation.T
        return RigidTransform(rt, -rt @ self.translation)

    def euler(self) -> np.ndarray:
        return matrix_to_euler(self.rotation)


@dataclass(frozen=True)
class Interval:
    """Closed 1D interval [lo, hi] of scalar projections (meters)."""

    lo: float
    hi: float

    def __post_init__(self):
        if self.hi < self.lo:
            raise ShapeError(f"interval hi < lo: [{self.lo}, {self.hi}]")

    @property
    def length(self) -> float:
        return self.hi - self.lo

    @classmethod
    def spanning(cls, a: float, b: float) -> "Interval":
        """Interval covering both endpoints regardless of their order."""
        return cls(min(a, b), max(a, b))


def project_interval(cloud, axis) -> Interval:
    """Span of the cloud's scalar projections onto a unit axis.

    Returns [min_i(axis . p_i), max_i(axis . p_i)].
    """
    pts = _as_points(cloud)
    if pts.shape[0] == 0:
        raise EmptyCloud("cannot project an empty cloud")
    ax = np.asarray(axis, dtype=np.float64)
    if ax.shape != (3,):
        raise InvalidAxis(f"axis must be length-3, got shape {ax.shape}")
    if abs(np.linalg.norm(ax) - 1.0) > 1e-9:
        raise InvalidAxis(f"axis must be unit length, |axis|={np.linalg.norm(ax):.12f}")
    # elementwise sum (not BLAS dot) so per-point scan oracles match bit-exactly
    dots = pts[:, 0] * ax[0] + pts[:, 1] * ax[1] + pts[:, 2] * ax[2]
    return Interval(float(dots.min()), float(dots.max()))


def interval_overlap(a: Interval, b: Interval) -> float:
    """Length of the intersection of two intervals; 0 when disjoint."""
    return max(0.0, min(a.hi, b.hi) - max(a.lo, b.lo))


def rotation_angle_between(a: RigidTransform, b: RigidTransform) -> float:
    """Geodesic angle between two rotations, in [0, pi]."""
    check_rotation(a.rotation)
    check_rotation(b.rotation)
    tr = float(np.trace(a.rotation.T @ b.rotation))
    c = (tr - 1.0) / 2.0
    return float(np.arccos(min(1.0, max(-1.0, c))))


# ---------------------------------------------------------------------------
# Point cloud persistence.
#
# Text format (default): first line is the point count N, then N lines of
# "x y z" in %.17g (round-trips float64 exactly). Binary format (".pcb"
# suffix): 4-byte magic b"PCB1", uint64 little-endian count, then N*3
# float64 little-endian values in row-major order.
# ---------------------------------------------------------------------------

_PCB_MAGIC = b"PCB1"


def save_cloud(path, cloud) -> None:
    pts = _as_points(cloud)
    path = Path(path)
    if path.suffix == ".pcb":
        with open(path, "wb") as f:
            f.write(_PCB_MAGIC)
            f.write(np.uint64(pts.shape[0]).astype("<u8").tobytes())
            f.write(pts.astype("<f8").tobytes())
    else:
        with open(path, "w") as f:
            f.write(f"{pts.shape[0]}\n")
            for p in pts:
                f.write(f"{p[0]:.17g} {p[1]:.17g} {p[2]:.17g}\n")


def load_cloud(path) -> np.ndarray:
    path = Path(path)
    if path.suffix == ".pcb":
        raw = path.read_bytes()
        if raw[:4] != _PCB_MAGIC:
            raise ShapeError(f"{path}: bad magic for binary cloud file")
        n = int(np.frombuffer(raw[4:12], dtype="<u8")[0])
        pts = np.frombuffer(raw[12:], dtype="<f8")
        if pts.size != 3 * n:
            raise ShapeError(f"{path}: expected {3 * n} floats, found {pts.size}")
        return pts.reshape(n, 3).astype(np.float64)
    with open(path) as f:
        n = int(f.readline())
        pts = np.loadtxt(f, dtype=np.float64, ndmin=2)
    if pts.shape != (n, 3):
        raise ShapeError(f"{path}: header says {n} points, found {pts.shape}")
    return pts

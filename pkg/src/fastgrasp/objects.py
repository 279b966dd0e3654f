"""Primitive object models: signed distance, surface sampling, difficulty labels.

Objects are boxes, cylinders, or spheres in a canonical local frame (centroid
at the origin, cylinder axis along +z, box axis-aligned). World placement is
an external RigidTransform. Perception uses surface-sampled point clouds;
contact uses the exact signed distance of the same primitive.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import UnsupportedObject

KINDS = ("box", "cylinder", "sphere")


@dataclass(frozen=True)
class ObjectModel:
    object_id: str
    kind: str
    dims: tuple

    def __post_init__(self):
        if self.kind not in KINDS:
            raise UnsupportedObject(f"unsupported primitive '{self.kind}'")
        n_expected = {"box": 3, "cylinder": 2, "sphere": 1}[self.kind]
        if len(self.dims) != n_expected:
            raise UnsupportedObject(
                f"{self.kind} needs {n_expected} dims, got {len(self.dims)}")

    @property
    def extents(self) -> np.ndarray:
        """Axis-aligned bounding extents (full widths) in the local frame."""
        if self.kind == "box":
            return np.array(self.dims, dtype=np.float64)
        if self.kind == "cylinder":
            r, h = self.dims
            return np.array([2 * r, 2 * r, h])
        (r,) = self.dims
        return np.array([2 * r, 2 * r, 2 * r])

    @property
    def max_width(self) -> float:
        """Largest point-to-point distance across the object."""
        if self.kind == "box":
            return float(np.linalg.norm(self.dims))
        if self.kind == "cylinder":
            r, h = self.dims
            return float(np.hypot(2 * r, h))
        return 2.0 * self.dims[0]

    @property
    def half_height(self) -> float:
        return float(self.extents[2]) / 2.0

    def signed_distance(self, points: np.ndarray) -> np.ndarray:
        """Signed distance to the surface in the local frame; negative inside."""
        p = np.atleast_2d(np.asarray(points, dtype=np.float64))
        if self.kind == "sphere":
            sd = np.linalg.norm(p, axis=1) - self.dims[0]
        elif self.kind == "box":
            half = np.asarray(self.dims) / 2.0
            q = np.abs(p) - half
            outside = np.linalg.norm(np.maximum(q, 0.0), axis=1)
            inside = np.minimum(q.max(axis=1), 0.0)
            sd = outside + inside
        else:
            r, h = self.dims
            dr = np.linalg.norm(p[:, :2], axis=1) - r
            dz = np.abs(p[:, 2]) - h / 2.0
            d = np.stack([dr, dz], axis=1)
            sd = np.minimum(d.max(axis=1), 0.0) + np.linalg.norm(np.maximum(d, 0.0), axis=1)
        return sd if np.asarray(points).ndim == 2 else sd

    def sample_surface(self, n: int, rng: np.random.Generator) -> np.ndarray:
        """n points approximately uniform on the surface, local frame."""
        if self.kind == "sphere":
            (r,) = self.dims
            v = rng.normal(size=(n, 3))
            v /= np.linalg.norm(v, axis=1, keepdims=True)
            return r * v
        if self.kind == "box":
            sx, sy, sz = self.dims
            areas = np.array([sy * sz, sy * sz, sx * sz, sx * sz, sx * sy, sx * sy])
            faces = rng.choice(6, size=n, p=areas / areas.sum())
            uv = rng.uniform(-0.5, 0.5, size=(n, 2))
            pts = np.empty((n, 3))
            half = np.array([sx, sy, sz]) / 2.0
            for i, f in enumerate(faces):
                axis = f // 2
                sign = 1.0 if f % 2 == 0 else -1.0
                others = [a for a in range(3) if a != axis]
                p = np.empty(3)
                p[axis] = sign * half[axis]
                p[others[0]] = uv[i, 0] * self.extents[others[0]]
                p[others[1]] = uv[i, 1] * self.extents[others[1]]
                pts[i] = p
            return pts
        r, h = self.dims
        lateral = 2 * np.pi * r * h
        caps = 2 * np.pi * r * r
        pts = np.empty((n, 3))
        on_side = rng.uniform(size=n) < lateral / (lateral + caps)
        theta = rng.uniform(0, 2 * np.pi, size=n)
        for i in range(n):
            if on_side[i]:
                pts[i] = [r * np.cos(theta[i]), r * np.sin(theta[i]),
                          rng.uniform(-h / 2, h / 2)]
            else:
                rad = r * np.sqrt(rng.uniform())
                z = h / 2 if rng.uniform() < 0.5 else -h / 2
                pts[i] = [rad * np.cos(theta[i]), rad * np.sin(theta[i]), z]
        return pts

    def support_extent(self, direction: np.ndarray) -> float:
        """Full width of the object along a unit direction (local frame)."""
        u = np.asarray(direction, dtype=np.float64)
        if self.kind == "sphere":
            return 2.0 * self.dims[0]
        if self.kind == "box":
            return float(np.abs(u) @ np.asarray(self.dims))
        r, h = self.dims
        return 2.0 * (r * float(np.hypot(u[0], u[1])) + (h / 2.0) * abs(u[2]))

    @property
    def difficulty(self) -> str:
        """Stand-in easy/hard split: thin or elongated primitives are hard."""
        ext = self.extents
        aspect = ext.max() / ext.min()
        return "easy" if ext.min() >= 0.03 and aspect <= 3.0 else "hard"


def cull_backfacing(cloud: np.ndarray, camera_pos: np.ndarray) -> np.ndarray:
    """Keep points whose outward radial direction faces the camera.

    Crude partial-view model: a point survives when the ray from the cloud
    centroid through it has a positive component toward the camera.
    """
    pts = np.asarray(cloud, dtype=np.float64)
    centroid = pts.mean(axis=0)
    outward = pts - centroid
    toward_cam = np.asarray(camera_pos, dtype=np.float64) - pts
    keep = np.einsum("ij,ij->i", outward, toward_cam) > 0.0
    if not keep.any():
        return pts
    return pts[keep]


def toy_object_set() -> list[ObjectModel]:
    """Bundled five-object desk set spanning both difficulty labels."""
    return [
        ObjectModel("sphere_40mm", "sphere", (0.04,)),
        ObjectModel("box_6x6x12", "box", (0.06, 0.06, 0.12)),
        ObjectModel("cylinder_30x120", "cylinder", (0.03, 0.12)),
        ObjectModel("box_3x3x18", "box", (0.03, 0.03, 0.18)),
        ObjectModel("plate_2x8x8", "box", (0.02, 0.08, 0.08)),
    ]

"""Procedural desk-scale grasp dataset: sampled wrist poses closed to contact.

Stands in for a large-scale validated grasp corpus. For each primitive
object (canonical frame: centroid at origin), wrist poses are sampled on an
approach hemisphere, the palm is placed just off the surface along the
approach ray, fingers aim their curl planes at the object and close until
the fingertip pad touches, and the result is labeled valid when the closure
test holds: palm contact, thumb contact, at least two finger-pad contacts,
and a thumb/finger pair on opposing sides of the object.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
import yaml

from .contact import pad_contact_flags, has_opposing_pair, touch_summary, THUMB_PADS
from .errors import ShapeError, UnsupportedObject
from .geometry import RigidTransform, euler_to_matrix, load_cloud, save_cloud
from .grasp import GRASP_DIM, GraspPose
from .kinematics import HandGeometry, hand_fk_full
from .objects import KINDS, ObjectModel


@dataclass
class SynthesisConfig:
    quota: int = 100
    cloud_points: int = 256
    attempts_per_valid: int = 50
    elevation_range: tuple = (0.10, 1.00)   # rad above horizontal approach
    roll_range: tuple = (-np.pi, np.pi)
    palm_clearance: float = 0.002
    include_invalid: bool = False
    curl_profile: tuple = (1.5, 1.4, 1.2)   # per curl joint at full closure
    tip_target_fraction: float = 0.5        # target tip distance, in pad radii
    # objects rest on a surface at their bottom plane: reject grasps whose
    # rate-limited closing sweep would dip pads below it (None disables)
    resting_clearance: float | None = 0.008
    sweep_samples: int = 24


@dataclass
class GraspDatasetEntry:
    object_id: str
    grasp: GraspPose
    valid: bool


@dataclass
class GraspDataset:
    objects: list
    clouds: dict
    entries: list = field(default_factory=list)

    def object_by_id(self, object_id: str) -> ObjectModel:
        for o in self.objects:
            if o.object_id == object_id:
                return o
        raise KeyError(object_id)

    def valid_count(self, object_id: str | None = None) -> int:
        return sum(1 for e in self.entries
                   if e.valid and (object_id is None or e.object_id == object_id))


def _aim_abduction(center_palm: np.ndarray, geo: HandGeometry) -> np.ndarray:
    """Per-finger abduction that tilts each curl plane toward the object center."""
    base_pos, base_rot = geo.base_frames()
    j0 = np.zeros(4)
    lo, hi = geo.joint_limits[0]
    for f in range(4):
        c = base_rot[f].T @ (center_palm - base_pos[f])
        if abs(c[1]) < 1e-12 and abs(c[2]) < 1e-12:
            continue
        a = np.arctan2(-c[1], c[2])
        if a > np.pi / 2:
            a -= np.pi
        elif a < -np.pi / 2:
            a += np.pi
        j0[f] = np.clip(a, max(lo, -np.pi / 2), min(hi, np.pi / 2))
    return j0


def close_hand_to_contact(wrist: RigidTransform, center: np.ndarray, sdf,
                          geo: HandGeometry, cfg: SynthesisConfig) -> np.ndarray:
    """Curl each finger until its tip pad sits within the contact shell.

    Returns the 16-dim joint vector. Fingers that cannot reach the surface
    stay at full curl (natural power-grasp posture).
    """
    palm_world = wrist.compose(RigidTransform(np.eye(3), np.array([geo.palm_offset, 0, 0])))
    center_palm = palm_world.inverse().apply(center)
    qpos = np.zeros(16)
    qpos[0::4] = _aim_abduction(center_palm, geo)
    profile = np.asarray(cfg.curl_profile)
    target = cfg.tip_target_fraction * geo.pad_radius

    def tip_sd(f: int, t: float, q: np.ndarray) -> float:
        trial = q.copy()
        trial[4 * f + 1:4 * f + 4] = profile * t
        _, pads = hand_fk_full(trial, wrist, geo)
        return float(sdf(pads[2 * f + 1:2 * f + 2])[0])

    # The tip sweeps a long arc, so its distance to the surface is not
    # monotone in the curl; scan forward for the FIRST touch, then refine.
    n_scan = 64
    for f in range(4):
        ts = np.linspace(0.0, 1.0, n_scan + 1)
        t_star = 1.0  # unreachable: full curl
        prev = tip_sd(f, 0.0, qpos)
        if prev <= target:
            t_star = 0.0
        else:
            for i in range(1, n_scan + 1):
                cur = tip_sd(f, ts[i], qpos)
                if cur <= target:
                    lo_t, hi_t = ts[i - 1], ts[i]
                    for _ in range(30):
                        mid = 0.5 * (lo_t + hi_t)
                        if tip_sd(f, mid, qpos) > target:
                            lo_t = mid
                        else:
                            hi_t = mid
                    t_star = hi_t
                    break
                prev = cur
        qpos[4 * f + 1:4 * f + 4] = profile * t_star
    return qpos


def closing_sweep_min_z(qpos_target: np.ndarray, wrist: RigidTransform,
                        geo: HandGeometry, n_samples: int = 24) -> float:
    """Lowest pad z reached while the hand rate-limits from open to target.

    All hand joints share one speed cap, so the trajectory is
    q_j(t) = clip(target_j, -rate t, rate t); scanning t covers the sweep.
    """
    q_max = float(np.max(np.abs(qpos_target)))
    lowest = np.inf
    for t in np.linspace(0.0, 1.0, n_samples):
        q = np.clip(qpos_target, -q_max * t, q_max * t)
        _, pads = hand_fk_full(q, wrist, geo)
        lowest = min(lowest, float(pads[:, 2].min()))
    return lowest


def _surface_offset_along(sdf, center: np.ndarray, direction: np.ndarray,
                          max_dist: float) -> float:
    """Distance from the center to the surface along `direction` (bisection)."""
    lo, hi = 0.0, max_dist
    for _ in range(48):
        mid = 0.5 * (lo + hi)
        if sdf((center + mid * direction)[None, :])[0] < 0.0:
            lo = mid
        else:
            hi = mid
    return hi


def synthesize_object_grasps(obj: ObjectModel, cfg: SynthesisConfig,
                             rng: np.random.Generator,
                             geo: HandGeometry | None = None) -> list[GraspDatasetEntry]:
    """Sample grasps for one object in its canonical frame."""
    if obj.kind not in KINDS:
        raise UnsupportedObject(obj.kind)
    geo = geo or HandGeometry()
    sdf = obj.signed_distance
    center = np.zeros(3)
    entries: list[GraspDatasetEntry] = []
    valid_count = 0
    max_attempts = cfg.quota * cfg.attempts_per_valid
    for _ in range(max_attempts):
        if valid_count >= cfg.quota:
            break
        azimuth = rng.uniform(-np.pi, np.pi)
        elevation = rng.uniform(*cfg.elevation_range)
        roll = rng.uniform(*cfg.roll_range)
        rot = np.array([roll, elevation, azimuth])
        normal = euler_to_matrix(*rot)[:, 0]  # palm normal, tilted down toward center

        surf = _surface_offset_along(sdf, center, -normal, obj.max_width)
        palm_pos = center - normal * (surf + cfg.palm_clearance)
        wrist_pos = palm_pos - normal * geo.palm_offset
        wrist = RigidTransform(euler_to_matrix(*rot), wrist_pos)

        qpos = close_hand_to_contact(wrist, center, sdf, geo, cfg)
        grasp = GraspPose(wrist_pos, rot, qpos).clamped(geo.joint_limits)

        _, pads = hand_fk_full(grasp.qpos, wrist, geo)
        flags = pad_contact_flags(pads, sdf, geo.pad_radius)
        f_touch, c_palm = touch_summary(flags)
        thumb_contact = any(flags[i] for i in THUMB_PADS)
        opposing = has_opposing_pair(pads, flags, center, sdf)
        valid = bool(c_palm and thumb_contact and f_touch >= 2 and opposing)
        if valid and cfg.resting_clearance is not None:
            floor = -obj.half_height - cfg.resting_clearance
            valid = closing_sweep_min_z(grasp.qpos, wrist, geo,
                                        cfg.sweep_samples) >= floor
        if valid:
            valid_count += 1
            entries.append(GraspDatasetEntry(obj.object_id, grasp, True))
        elif cfg.include_invalid:
            entries.append(GraspDatasetEntry(obj.object_id, grasp, False))
    return entries


def synthesize_grasp_dataset(objects: list, cfg: SynthesisConfig,
                             rng: np.random.Generator,
                             geo: HandGeometry | None = None) -> GraspDataset:
    """Clouds plus labeled grasps for every object; quota valid grasps each."""
    clouds = {}
    entries = []
    for obj in objects:
        obj_rng = np.random.default_rng(rng.integers(0, 2 ** 63))
        clouds[obj.object_id] = obj.sample_surface(cfg.cloud_points, obj_rng)
        entries.extend(synthesize_object_grasps(obj, cfg, obj_rng, geo))
    return GraspDataset(objects=list(objects), clouds=clouds, entries=entries)


class CachedGraspBank:
    """Guidance provider backed by pre-synthesized canonical-frame grasps.

    Synthesis is too slow to run inside every environment reset, so a bank
    of valid grasps per object is built once; a reset then just samples a
    subset and rigidly transforms it to the object's world pose.
    """

    def __init__(self, objects: list, cfg: SynthesisConfig, seed: int,
                 candidates_per_reset: int = 150,
                 geo: HandGeometry | None = None):
        from .nets import rng_for
        self.candidates_per_reset = candidates_per_reset
        self.bank: dict[str, list[GraspPose]] = {}
        for obj in objects:
            entries = synthesize_object_grasps(
                obj, cfg, rng_for(seed, "grasp-bank", obj.object_id), geo)
            self.bank[obj.object_id] = [e.grasp for e in entries if e.valid]

    @classmethod
    def from_dataset(cls, dataset: GraspDataset, candidates_per_reset: int = 150):
        self = cls.__new__(cls)
        self.candidates_per_reset = candidates_per_reset
        self.bank = {}
        for obj in dataset.objects:
            self.bank[obj.object_id] = [
                e.grasp for e in dataset.entries if e.valid and e.object_id == obj.object_id]
        return self

    def __call__(self, cloud, obj, pose, rng) -> list[GraspPose]:
        grasps = self.bank.get(obj.object_id, [])
        if not grasps:
            return []
        n = min(self.candidates_per_reset, len(grasps))
        idx = rng.choice(len(grasps), size=n, replace=False)
        return [grasps[i].transformed(pose) for i in idx]


# ---------------------------------------------------------------------------
# Persistence: a directory with index.yaml + per-object cloud and grasp table
# ---------------------------------------------------------------------------


def save_dataset(directory, dataset: GraspDataset) -> None:
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    index = {"objects": []}
    for obj in dataset.objects:
        cloud_file = f"{obj.object_id}.xyz"
        table_file = f"{obj.object_id}.tsv"
        index["objects"].append({
            "id": obj.object_id,
            "kind": obj.kind,
            "dims": [float(d) for d in obj.dims],
            "difficulty": obj.difficulty,
            "cloud": cloud_file,
            "grasps": table_file,
        })
        save_cloud(directory / cloud_file, dataset.clouds[obj.object_id])
        rows = [e for e in dataset.entries if e.object_id == obj.object_id]
        with open(directory / table_file, "w") as f:
            f.write("# px py pz roll pitch yaw q0..q15 valid\n")
            for e in rows:
                vec = "\t".join(f"{v:.17g}" for v in e.grasp.to_vector())
                f.write(f"{vec}\t{int(e.valid)}\n")
    with open(directory / "index.yaml", "w") as f:
        yaml.safe_dump(index, f, sort_keys=True)


def load_dataset(directory) -> GraspDataset:
    directory = Path(directory)
    with open(directory / "index.yaml") as f:
        index = yaml.safe_load(f)
    objects, clouds, entries = [], {}, []
    for rec in index["objects"]:
        obj = ObjectModel(rec["id"], rec["kind"], tuple(rec["dims"]))
        objects.append(obj)
        clouds[obj.object_id] = load_cloud(directory / rec["cloud"])
        with open(directory / rec["grasps"]) as f:
            for line in f:
                if line.startswith("#") or not line.strip():
                    continue
                vals = line.split()
                if len(vals) != GRASP_DIM + 1:
                    raise ShapeError(f"bad grasp row in {rec['grasps']}")
                vec = np.array([float(v) for v in vals[:GRASP_DIM]])
                entries.append(GraspDatasetEntry(
                    obj.object_id, GraspPose.from_vector(vec), bool(int(vals[-1]))))
    return GraspDataset(objects=objects, clouds=clouds, entries=entries)

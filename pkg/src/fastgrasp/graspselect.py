"""Guidance selection: executability + collision filters, width/depth coverage, quality.

Coverage works purely on 1D interval algebra over point-cloud projections, so
it needs no surface normals and tolerates partial or noisy clouds. All
computations here expect the cloud and the hand keypoints in one common
frame (the pipeline uses the world frame).
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np

from .errors import DegenerateAxis, NoFeasibleGrasp, QualityUndefined, ZeroExtent
from .geometry import (Interval, RigidTransform, interval_overlap, project_interval,
                       rotation_angle_between, rot_z, unit)
from .grasp import GraspPose
from .kinematics import HandGeometry, HandKeypoints, hand_fk

FINGERS = ("index", "middle", "ring")
_EPS = 1e-12


def default_keypoints_fn(hand_geo: HandGeometry | None = None) -> Callable[[GraspPose], HandKeypoints]:
    geo = hand_geo or HandGeometry()
    return lambda g: hand_fk(g.qpos, g.wrist_transform(), geo)


def filter_executability(candidates: Sequence[GraspPose], robot_heading: np.ndarray,
                         object_center: np.ndarray, mode: str = "approach",
                         cone_half_angle: float = np.pi / 2) -> list[GraspPose]:
    """Keep forward grasps; drop those needing the wrist to swing past the bound.

    `robot_heading` is the unit horizontal vector from the robot toward the
    target region, i.e. the negation of the normal pointing from the target
    to the robot. Two tests are available:

      * "approach" (default): angle between the wrist-to-object direction
        and the heading must be <= cone_half_angle (inclusive).
      * "rotation": geodesic angle between the candidate wrist rotation and
        the nominal forward-grasp orientation (palm normal along the
        heading, hand upright) must be <= cone_half_angle.
    """
    heading = unit(np.asarray(robot_heading, dtype=np.float64))
    center = np.asarray(object_center, dtype=np.float64)
    cos_bound = np.cos(cone_half_angle)
    kept = []
    if mode == "rotation":
        azimuth = np.arctan2(heading[1], heading[0])
        nominal = RigidTransform(rot_z(azimuth), np.zeros(3))
    for g in candidates:
        if mode == "approach":
            approach = center - g.pos
            n = np.linalg.norm(approach)
            if n < 1e-9:
                continue  # wrist inside the object center; not executable
            ok = float(approach @ heading) / n >= cos_bound - _EPS
        elif mode == "rotation":
            angle = rotation_angle_between(g.wrist_transform(), nominal)
            ok = angle <= cone_half_angle + _EPS
        else:
            raise ValueError(f"unknown executability mode '{mode}'")
        if ok:
            kept.append(g)
    return kept


def filter_collision(candidates: Sequence[GraspPose], cloud: np.ndarray,
                     keypoints_fn: Callable[[GraspPose], HandKeypoints],
                     margin: float = 0.0) -> list[GraspPose]:
    """Drop grasps with any hand keypoint strictly below the object's lowest point."""
    z_min = float(np.asarray(cloud)[:, 2].min())
    kept = []
    for g in candidates:
        points = keypoints_fn(g).all_points()
        if np.all(points[:, 2] >= z_min - margin):
            kept.append(g)
    return kept


def gwc(keypoints: HandKeypoints, cloud: np.ndarray, k: int) -> float:
    """Width coverage for finger k (0=index, 1=middle, 2=ring), in [0, 1].

    Projects both fingertip and thumb tip onto their connecting axis and
    normalizes the overlap with the object's projected span.
    """
    f_k = keypoints.fingertips[k]
    f_thumb = keypoints.thumb_tip
    axis = f_thumb - f_k
    if np.linalg.norm(axis) < 1e-6:
        raise DegenerateAxis(f"finger {k} coincides with thumb tip")
    w = axis / np.linalg.norm(axis)
    tips = Interval.spanning(float(w @ f_k), float(w @ f_thumb))
    obj = project_interval(cloud, w)
    if obj.length <= 0.0:
        raise ZeroExtent("object projects to a point along the grasp axis")
    return interval_overlap(tips, obj) / obj.length


def gdc(keypoints: HandKeypoints, cloud: np.ndarray, k: int | str) -> float:
    """Depth coverage along the palm normal for finger k or "thumb", in [0, 1]."""
    if k == "thumb" or k == 3:
        tip = keypoints.thumb_tip
    else:
        tip = keypoints.fingertips[k]
    n = keypoints.palm_normal
    depth = Interval.spanning(float(n @ keypoints.palm_center), float(n @ tip))
    obj = project_interval(cloud, n)
    if obj.length <= 0.0:
        raise ZeroExtent("object projects to a point along the palm normal")
    return interval_overlap(depth, obj) / obj.length


@dataclass
class QualityScore:
    gwc: np.ndarray        # (3,) per finger
    gdc: np.ndarray        # (3,) per finger
    gdc_thumb: float
    quality: float


def quality(keypoints: HandKeypoints, cloud: np.ndarray) -> QualityScore:
    """Envelopment quality: (sum_k GWC_k * GDC_k) * GDC_thumb, in [0, 3].

    A degenerate finger axis contributes 0 instead of aborting; if every
    finger and the thumb are degenerate the score is undefined.
    """
    gwc_vals = np.zeros(3)
    gdc_vals = np.zeros(3)
    degenerate = 0
    for k in range(3):
        try:
            gwc_vals[k] = gwc(keypoints, cloud, k)
            gdc_vals[k] = gdc(keypoints, cloud, k)
        except (DegenerateAxis, ZeroExtent):
            gwc_vals[k] = 0.0
            gdc_vals[k] = 0.0
            degenerate += 1
    try:
        thumb = gdc(keypoints, cloud, "thumb")
    except ZeroExtent:
        thumb = 0.0
        degenerate += 1
    if degenerate == 4:
        raise QualityUndefined("all finger axes and the thumb depth are degenerate")
    q = float(np.sum(gwc_vals * gdc_vals) * thumb)
    return QualityScore(gwc_vals, gdc_vals, float(thumb), q)


@dataclass
class SelectionResult:
    guidance: GraspPose
    index: int            # index into the filtered candidate list
    score: QualityScore
    table: list           # (original_index, QualityScore | None) for survivors


def select_guidance(candidates: Sequence[GraspPose], cloud: np.ndarray,
                    robot_heading: np.ndarray, object_center: np.ndarray,
                    keypoints_fn: Callable[[GraspPose], HandKeypoints] | None = None,
                    mode: str = "approach", cone_half_angle: float = np.pi / 2,
                    collision_margin: float = 0.0) -> SelectionResult:
    """Filter, score, and pick the highest-quality guidance grasp.

    Ties break on smaller wrist-to-object-center distance, then lower
    candidate index, so selection is deterministic.
    """
    if len(candidates) == 0:
        raise NoFeasibleGrasp("no candidates supplied")
    keypoints_fn = keypoints_fn or default_keypoints_fn()
    center = np.asarray(object_center, dtype=np.float64)

    kept = filter_executability(candidates, robot_heading, center, mode, cone_half_angle)
    kept = filter_collision(kept, cloud, keypoints_fn, collision_margin)
    if not kept:
        raise NoFeasibleGrasp("all candidates removed by executability/collision filters")

    best = None  # (quality, -distance criteria handled explicitly)
    table = []
    for i, g in enumerate(kept):
        try:
            score = quality(keypoints_fn(g), cloud)
        except QualityUndefined:
            table.append((i, None))
            continue
        table.append((i, score))
        dist = float(np.linalg.norm(g.pos - center))
        if best is None:
            best = (i, g, score, dist)
            continue
        _, _, best_score, best_dist = best
        if (score.quality > best_score.quality
                or (score.quality == best_score.quality and dist < best_dist)):
            best = (i, g, score, dist)
    if best is None:
        raise NoFeasibleGrasp("no candidate produced a defined quality score")
    idx, g, score, _ = best
    return SelectionResult(guidance=g, index=idx, score=score, table=table)

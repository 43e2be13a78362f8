"""Bounding-box fitting, size-heuristic validation and class assignment.

A cluster becomes a box whose footprint is the minimum-area rotated
rectangle of its XY projection (rotating calipers over the 2D convex hull)
and whose height spans the cluster's z extent.  Degenerate projections
(single point, collinear) floor the collapsed dimensions at 1 cm.

Validation and classification follow simple shape rules: a box must clear a
minimum base length and height, and its base length must differ from its
height by a margin; a box longer than it is tall is a vehicle, taller than
it is long a pedestrian.  The margin makes the classifier total: the
equality case never reaches it.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable

import numpy as np

from .clustering import Cluster
from .core import (
    DataError,
    Frame,
    InternalError,
    LabelClass,
    LabelSource,
    ObjectLabel,
    TeacherConfig,
    normalize_yaw_half,
)

DEGENERATE_FLOOR = 0.01


@dataclass(frozen=True)
class FittedBox:
    """Oriented box around one cluster; ``length >= width`` always holds."""

    center_x: float
    center_y: float
    center_z: float
    length: float
    width: float
    height: float
    yaw: float
    point_count: int

    @property
    def base_length(self) -> float:
        """The longer horizontal extent, the quantity the heuristics compare."""
        return self.length


@dataclass(frozen=True)
class RejectedBox:
    frame_index: int
    base_length: float
    height: float
    reason: str

    def format_line(self) -> str:
        return f"{self.frame_index} {self.base_length:.6f} {self.height:.6f} {self.reason}"


def convex_hull_2d(points: np.ndarray) -> np.ndarray:
    """Convex hull of (n, 2) points, counter-clockwise, no collinear vertices.

    Andrew's monotone chain.  Returns 1 point for a degenerate single-point
    set and 2 points for collinear input.
    """
    pts = np.unique(points, axis=0)
    if len(pts) <= 2:
        return pts

    def cross(o, a, b):
        return (a[0] - o[0]) * (b[1] - o[1]) - (a[1] - o[1]) * (b[0] - o[0])

    lower: list[np.ndarray] = []
    for p in pts:
        while len(lower) >= 2 and cross(lower[-2], lower[-1], p) <= 0:
            lower.pop()
        lower.append(p)
    upper: list[np.ndarray] = []
    for p in pts[::-1]:
        while len(upper) >= 2 and cross(upper[-2], upper[-1], p) <= 0:
            upper.pop()
        upper.append(p)
    hull = lower[:-1] + upper[:-1]
    if len(hull) < 2:  # all points identical after dedupe
        return pts[:1]
    return np.array(hull)


def min_area_rect(points: np.ndarray) -> tuple[np.ndarray, float, float, float]:
    """Minimum-area enclosing rectangle of 2D points.

    Returns (center, long_side, short_side, yaw) with yaw the long-axis
    angle in [-pi/2, pi/2).  Uses the edge-alignment property of the optimal
    rectangle: one side is collinear with a hull edge.
    """
    hull = convex_hull_2d(points)
    if len(hull) == 1:
        return hull[0], 0.0, 0.0, 0.0
    if len(hull) == 2:
        d = hull[1] - hull[0]
        yaw = normalize_yaw_half(math.atan2(d[1], d[0]))
        return (hull[0] + hull[1]) / 2.0, float(np.hypot(d[0], d[1])), 0.0, yaw

    best = None
    x, y = hull[:, 0], hull[:, 1]
    for a, b in zip(hull, np.roll(hull, -1, axis=0)):
        theta = math.atan2(b[1] - a[1], b[0] - a[0])
        c, s = math.cos(theta), math.sin(theta)
        u = x * c + y * s
        v = -x * s + y * c
        du = u.max() - u.min()
        dv = v.max() - v.min()
        area = du * dv
        if best is None:
            take = True
        else:
            # exact area ties are geometric facts (every edge-aligned
            # rectangle of an acute triangle has area 2x the triangle), so
            # break them by the rotation-invariant longer side
            tie_band = 1e-9 * max(area, best[0])
            if area < best[0] - tie_band:
                take = True
            elif abs(area - best[0]) <= tie_band:
                take = max(du, dv) > max(best[1], best[2])
            else:
                take = False
        if take:
            uc = (u.max() + u.min()) / 2.0
            vc = (v.max() + v.min()) / 2.0
            best = (area, du, dv, theta, uc, vc)

    _, du, dv, theta, uc, vc = best
    c, s = math.cos(theta), math.sin(theta)
    center = np.array([uc * c - vc * s, uc * s + vc * c])
    if du >= dv:
        return center, float(du), float(dv), normalize_yaw_half(theta)
    return center, float(dv), float(du), normalize_yaw_half(theta + math.pi / 2.0)


def fit_bbox(cluster: Cluster, frame: Frame) -> FittedBox:
    """Fit the minimal oriented box around a cluster's points.

    Height spans [min z, max z]; collapsed dimensions are floored at
    DEGENERATE_FLOOR so every fitted box has positive volume.  Flooring only
    grows the box around its center, so containment of the cluster (within
    1e-6) is preserved.
    """
    if len(cluster.point_indices) == 0:
        raise DataError("cannot fit a box to an empty cluster")
    pts = frame.xyz[cluster.point_indices]
    z_min = float(pts[:, 2].min())
    z_max = float(pts[:, 2].max())
    center, long_side, short_side, yaw = min_area_rect(pts[:, :2])
    return FittedBox(
        center_x=float(center[0]),
        center_y=float(center[1]),
        center_z=(z_min + z_max) / 2.0,
        length=max(long_side, DEGENERATE_FLOOR),
        width=max(short_side, DEGENERATE_FLOOR),
        height=max(z_max - z_min, DEGENERATE_FLOOR),
        yaw=yaw,
        point_count=len(cluster.point_indices),
    )


def validate_bbox(box: FittedBox, cfg: TeacherConfig) -> tuple[bool, str]:
    """Apply the three size gates; returns (valid, failed_predicate).

    Valid iff base_length >= l_min, height >= h_min and
    |base_length - height| >= beta_min.  The last gate drops shape-ambiguous
    boxes instead of guessing their class.
    """
    if box.base_length < cfg.l_min:
        return False, "base_length<l_min"
    if box.height < cfg.h_min:
        return False, "height<h_min"
    if abs(box.base_length - box.height) < cfg.beta_min:
        return False, "|base_length-height|<beta_min"
    return True, ""


def classify(box: FittedBox) -> LabelClass:
    """Vehicle if longer than tall, pedestrian if taller than long."""
    if box.base_length > box.height:
        return LabelClass.VEHICLE
    if box.base_length < box.height:
        return LabelClass.PEDESTRIAN
    raise InternalError("base_length == height should have been rejected by validation")


def annotate_frame(
    frame: Frame,
    clusters: list[Cluster],
    cfg: TeacherConfig,
    reject_sink: Callable[[RejectedBox], None] | None = None,
) -> list[ObjectLabel]:
    """Fit, validate and classify every cluster of a frame.

    Output order follows cluster order (ascending cluster index).  Invalid
    boxes are skipped; when ``reject_sink`` is given each reject is reported
    to it for the rejects log.
    """
    labels = []
    for cluster in clusters:
        box = fit_bbox(cluster, frame)
        ok, reason = validate_bbox(box, cfg)
        if not ok:
            if reject_sink is not None:
                reject_sink(RejectedBox(frame.timestamp_index, box.base_length, box.height, reason))
            continue
        labels.append(
            ObjectLabel(
                box.center_x, box.center_y, box.center_z,
                box.length, box.width, box.height,
                box.yaw, classify(box), 1.0, LabelSource.TEACHER,
            )
        )
    return labels

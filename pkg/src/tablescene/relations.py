"""Geometric rules for pairwise relations and coarse quantization.

Conventions shared by every rule:

* ``dx = x_subject - x_object`` and ``dy = y_subject - y_object`` on footprint
  centers, so "left of" is ``dx < 0`` and "in front of" is ``dy < 0``;
* the distance gate is the centroid XY distance, at most
  ``0.4 * max(region width, region depth)``;
* footprints are the AABB of each rotated box; overlap ratios are normalized
  by the *subject's* footprint area (horizontal) and height (vertical).
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass
from typing import Sequence

from .layout import ObjectInstance, RegionRect

DISTANCE_FRACTION = 0.4
ABOVE_BELOW_OVERLAP = 0.5
CONTAINMENT_HORIZONTAL = 0.9
CONTAINMENT_VERTICAL = 0.5
DEFAULT_Z_EPSILON = 1.0
SPACING_TOLERANCE = 0.10
SPACING_BAND_FRACTION = 0.10


class HorizontalRelation(enum.Enum):
    LEFT_OF = "left of"
    RIGHT_OF = "right of"
    IN_FRONT_OF = "in front of"
    BEHIND = "behind"


class VerticalRelation(enum.Enum):
    ABOVE = "above"
    BELOW = "below"
    IN = "in"


class FacingBin(enum.Enum):
    FRONT = "front"
    FRONT_RIGHT = "front_right"
    RIGHT = "right"
    BACK_RIGHT = "back_right"
    BACK = "back"
    BACK_LEFT = "back_left"
    LEFT = "left"
    FRONT_LEFT = "front_left"


class GridCell(enum.Enum):
    CENTER = "center"
    FRONT = "front"
    BACK = "back"
    LEFT_CENTER = "left-center"
    RIGHT_CENTER = "right-center"
    LEFT_FRONT = "left-front"
    RIGHT_FRONT = "right-front"
    LEFT_BACK = "left-back"
    RIGHT_BACK = "right-back"


class Axis(enum.Enum):
    X = "X"
    Y = "Y"


class OutOfRegionError(ValueError):
    pass


@dataclass(frozen=True)
class SpacingGroup:
    member_ids: tuple[str, ...]
    axis: Axis
    mean_gap: float


def horizontal_relation(
    subject: ObjectInstance, obj: ObjectInstance, region: RegionRect
) -> HorizontalRelation | None:
    dx = subject.position.x - obj.position.x
    dy = subject.position.y - obj.position.y
    threshold = DISTANCE_FRACTION * max(region.width, region.depth)
    if math.hypot(dx, dy) > threshold:
        return None
    if abs(dx) > abs(dy):
        return HorizontalRelation.LEFT_OF if dx < 0 else HorizontalRelation.RIGHT_OF
    if abs(dy) > abs(dx):
        return HorizontalRelation.IN_FRONT_OF if dy < 0 else HorizontalRelation.BEHIND
    return None


def horizontal_overlap(subject: ObjectInstance, obj: ObjectInstance) -> float:
    """Footprint AABB intersection area over the subject's footprint AABB area."""
    sx0, sy0, sx1, sy1 = subject.footprint_aabb()
    ox0, oy0, ox1, oy1 = obj.footprint_aabb()
    ix = min(sx1, ox1) - max(sx0, ox0)
    iy = min(sy1, oy1) - max(sy0, oy0)
    if ix <= 0 or iy <= 0:
        return 0.0
    area = (sx1 - sx0) * (sy1 - sy0)
    return ix * iy / area


def vertical_overlap(subject: ObjectInstance, obj: ObjectInstance) -> float:
    """Length of the shared z-interval over the subject's height."""
    inter = min(subject.z_max, obj.z_max) - max(subject.z_min, obj.z_min)
    if inter <= 0:
        return 0.0
    return inter / subject.size.h


def vertical_relation(
    subject: ObjectInstance, obj: ObjectInstance, z_epsilon: float = DEFAULT_Z_EPSILON
) -> VerticalRelation | None:
    """Above/Below per the z-range rules; never returns ``IN`` (see :func:`containment`)."""
    if z_epsilon < 0:
        raise ValueError("z_epsilon must be non-negative")
    if horizontal_overlap(subject, obj) < ABOVE_BELOW_OVERLAP:
        return None
    if subject.z_min > obj.z_max - z_epsilon:
        return VerticalRelation.ABOVE
    if subject.z_max < obj.z_min + z_epsilon:
        return VerticalRelation.BELOW
    return None


def containment(subject: ObjectInstance, obj: ObjectInstance) -> bool:
    """True when ``subject`` is "in" ``obj``."""
    return (
        horizontal_overlap(subject, obj) >= CONTAINMENT_HORIZONTAL
        and vertical_overlap(subject, obj) >= CONTAINMENT_VERTICAL
    )


_EIGHTH = math.pi / 8
# (lower bound inclusive, upper bound exclusive, bin); back wraps and is handled separately
_FACING_TABLE: tuple[tuple[float, float, FacingBin], ...] = (
    (-7 * math.pi / 8, -5 * math.pi / 8, FacingBin.BACK_LEFT),
    (-5 * math.pi / 8, -3 * math.pi / 8, FacingBin.LEFT),
    (-3 * math.pi / 8, -1 * math.pi / 8, FacingBin.FRONT_LEFT),
    (-1 * math.pi / 8, 1 * math.pi / 8, FacingBin.FRONT),
    (1 * math.pi / 8, 3 * math.pi / 8, FacingBin.FRONT_RIGHT),
    (3 * math.pi / 8, 5 * math.pi / 8, FacingBin.RIGHT),
    (5 * math.pi / 8, 7 * math.pi / 8, FacingBin.BACK_RIGHT),
)


def face_direction(theta: float) -> FacingBin:
    for lo, hi, facing in _FACING_TABLE:
        if lo <= theta < hi:
            return facing
    return FacingBin.BACK


_GRID_NAMES = {
    (0, 0): GridCell.LEFT_FRONT,
    (1, 0): GridCell.FRONT,
    (2, 0): GridCell.RIGHT_FRONT,
    (0, 1): GridCell.LEFT_CENTER,
    (1, 1): GridCell.CENTER,
    (2, 1): GridCell.RIGHT_CENTER,
    (0, 2): GridCell.LEFT_BACK,
    (1, 2): GridCell.BACK,
    (2, 2): GridCell.RIGHT_BACK,
}


def _third(value: float, lo: float, hi: float) -> int:
    span = hi - lo
    if value < lo + span / 3:
        return 0
    if value < lo + 2 * span / 3:
        return 1
    return 2


def grid_position(obj: ObjectInstance, region: RegionRect) -> GridCell:
    x, y = obj.position.x, obj.position.y
    if not region.contains(x, y):
        raise OutOfRegionError(f"{obj.id} center ({x}, {y}) lies outside the region")
    col = _third(x, region.x_min, region.x_max)
    row = _third(y, region.y_min, region.y_max)
    return _GRID_NAMES[(col, row)]


def gaps_are_uniform(coords: Sequence[float], tol: float = SPACING_TOLERANCE) -> bool:
    """Consecutive gaps of sorted ``coords`` all within ``tol * mean_gap`` of the mean."""
    gaps = [b - a for a, b in zip(coords, coords[1:])]
    if not gaps:
        return False
    mean = sum(gaps) / len(gaps)
    if mean <= 0:
        return False
    return max(abs(g - mean) for g in gaps) <= tol * mean


def equally_spaced_groups(
    objects: Sequence[ObjectInstance],
    region: RegionRect,
    tol: float = SPACING_TOLERANCE,
) -> list[SpacingGroup]:
    """Rows of three or more objects with near-uniform spacing along x or y.

    A row lives inside a band: a maximal set of objects whose cross-axis
    centers span at most 10% of the region's cross-axis extent. Within a band
    the objects are ordered along the axis and every contiguous run whose gaps
    pass :func:`gaps_are_uniform` is a candidate; candidates contained in a
    larger candidate on the same axis are dropped.
    """
    if not 0 < tol < 1:
        raise ValueError("tol must lie in (0, 1)")
    groups: list[SpacingGroup] = []
    for axis in (Axis.X, Axis.Y):
        groups.extend(_groups_along(objects, region, axis, tol))
    return sorted(groups, key=lambda g: (g.axis.value, g.member_ids))


def _coords(obj: ObjectInstance, axis: Axis) -> tuple[float, float]:
    """(along-axis, cross-axis) center coordinates."""
    if axis is Axis.X:
        return obj.position.x, obj.position.y
    return obj.position.y, obj.position.x


def _groups_along(
    objects: Sequence[ObjectInstance], region: RegionRect, axis: Axis, tol: float
) -> list[SpacingGroup]:
    band_width = SPACING_BAND_FRACTION * (region.depth if axis is Axis.X else region.width)
    by_cross = sorted(objects, key=lambda o: (_coords(o, axis)[1], o.id))

    windows: list[frozenset[str]] = []
    for i, anchor in enumerate(by_cross):
        start = _coords(anchor, axis)[1]
        members = frozenset(
            o.id for o in by_cross[i:] if _coords(o, axis)[1] - start <= band_width
        )
        windows.append(members)
    bands = {w for w in windows if len(w) >= 3 and not any(w < other for other in windows)}

    lookup = {o.id: o for o in objects}
    candidates: dict[tuple[str, ...], float] = {}
    for band in bands:
        row = sorted((lookup[i] for i in band), key=lambda o: (_coords(o, axis)[0], o.id))
        along = [_coords(o, axis)[0] for o in row]
        n = len(row)
        for start in range(n - 2):
            for stop in range(start + 3, n + 1):
                seg = along[start:stop]
                if gaps_are_uniform(seg, tol):
                    ids = tuple(o.id for o in row[start:stop])
                    candidates[ids] = (seg[-1] - seg[0]) / (len(seg) - 1)

    sets = {ids: frozenset(ids) for ids in candidates}
    return [
        SpacingGroup(ids, axis, gap)
        for ids, gap in candidates.items()
        if not any(sets[ids] < other for other in sets.values())
    ]

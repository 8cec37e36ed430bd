"""Oriented-box intersection and the per-layout collision rate.

Each object is approximated by its z-rotated box. Two boxes collide when
their z-intervals overlap and the rotated footprints overlap on every
separating axis (the four edge normals), each by more than ``margin``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from itertools import combinations

from .layout import ObjectInstance, SceneLayout
from .relations import containment


@dataclass(frozen=True)
class OrientedBox:
    cx: float
    cy: float
    half_w: float
    half_d: float
    theta: float
    z_min: float
    z_max: float

    def __post_init__(self) -> None:
        if self.half_w <= 0 or self.half_d <= 0:
            raise ValueError("half extents must be positive")
        if not self.z_min < self.z_max:
            raise ValueError("z_min must be below z_max")

    @classmethod
    def from_object(cls, obj: ObjectInstance) -> OrientedBox:
        return cls(
            obj.position.x,
            obj.position.y,
            obj.size.w / 2,
            obj.size.d / 2,
            obj.rotation,
            obj.z_min,
            obj.z_max,
        )

    def axes(self) -> tuple[tuple[float, float], tuple[float, float]]:
        c, s = math.cos(self.theta), math.sin(self.theta)
        return (c, s), (-s, c)

    def corners(self) -> list[tuple[float, float]]:
        (ux, uy), (vx, vy) = self.axes()
        out = []
        for sw, sd in ((1, 1), (-1, 1), (-1, -1), (1, -1)):
            out.append(
                (
                    self.cx + sw * self.half_w * ux + sd * self.half_d * vx,
                    self.cy + sw * self.half_w * uy + sd * self.half_d * vy,
                )
            )
        return out

    def project(self, axis: tuple[float, float]) -> tuple[float, float]:
        ax, ay = axis
        (ux, uy), (vx, vy) = self.axes()
        center = self.cx * ax + self.cy * ay
        reach = self.half_w * abs(ux * ax + uy * ay) + self.half_d * abs(vx * ax + vy * ay)
        return center - reach, center + reach


def penetration_depth(a: OrientedBox, b: OrientedBox) -> float:
    """Smallest overlap over z and the four footprint axes.

    Positive values are penetration depths, negative values a separation
    found along some axis (a lower bound on the true gap).
    """
    depth = min(a.z_max, b.z_max) - max(a.z_min, b.z_min)
    for axis in (*a.axes(), *b.axes()):
        a0, a1 = a.project(axis)
        b0, b1 = b.project(axis)
        depth = min(depth, min(a1, b1) - max(a0, b0))
    return depth


def obb_intersects(a: OrientedBox, b: OrientedBox, margin: float = 0.0) -> bool:
    return penetration_depth(a, b) > margin


@dataclass(frozen=True)
class CollisionReport:
    colliding_pairs: tuple[tuple[str, str], ...]
    n_total: int

    @property
    def rate(self) -> float:
        return len(self.colliding_pairs) / self.n_total if self.n_total else 0.0

    def to_dict(self) -> dict:
        return {
            "colliding_pairs": [list(p) for p in self.colliding_pairs],
            "n_total": self.n_total,
            "rate": self.rate,
        }


def collision_pairs(layout: SceneLayout, margin: float = 0.0) -> CollisionReport:
    """Test every unordered pair; containment pairs count in neither numerator nor denominator."""
    objects = sorted(layout.objects, key=lambda o: o.id)
    boxes = {o.id: OrientedBox.from_object(o) for o in objects}
    hits = []
    total = 0
    for a, b in combinations(objects, 2):
        if containment(a, b) or containment(b, a):
            continue
        total += 1
        if obb_intersects(boxes[a.id], boxes[b.id], margin):
            hits.append((a.id, b.id))
    return CollisionReport(tuple(hits), total)

"""Random collision-free layouts for corpora, demos and statistical tests."""

from __future__ import annotations

import math

import numpy as np

from .collision import OrientedBox, obb_intersects
from .layout import BoxSize, ObjectInstance, Position, RegionRect, SceneLayout

_TYPES = ("Cup", "Plate", "Book", "Lamp", "Bowl", "Pen", "Laptop", "Vase", "Tray", "Phone")


def random_layout(
    rng: np.random.Generator,
    n_objects: int = 8,
    region: RegionRect = RegionRect(0.0, 0.0, 120.0, 80.0),
    size_range: tuple[float, float] = (5.0, 25.0),
    clearance: float = 0.0,
    max_tries: int = 200,
) -> SceneLayout:
    """Rejection-sample ``n_objects`` floor-standing boxes that do not intersect.

    Objects that cannot be placed after ``max_tries`` attempts are dropped, so
    crowded requests may return fewer objects (never zero).
    """
    placed: list[ObjectInstance] = []
    counts: dict[str, int] = {}
    for _ in range(n_objects):
        for _ in range(max_tries):
            w, d = rng.uniform(*size_range, size=2)
            h = rng.uniform(2.0, 30.0)
            theta = rng.uniform(-math.pi, math.pi)
            x = rng.uniform(region.x_min, region.x_max)
            y = rng.uniform(region.y_min, region.y_max)
            kind = _TYPES[int(rng.integers(len(_TYPES)))]
            candidate = ObjectInstance(
                f"{kind}-{counts.get(kind, 0)}",
                kind.lower(),
                Position(float(x), float(y), 0.0),
                BoxSize(float(w), float(d), float(h)),
                float(theta),
            )
            box = OrientedBox.from_object(candidate)
            if all(not obb_intersects(box, OrientedBox.from_object(p), -clearance) for p in placed):
                placed.append(candidate)
                counts[kind] = counts.get(kind, 0) + 1
                break
    if not placed:
        raise RuntimeError("could not place any object")
    return SceneLayout(region, tuple(placed))

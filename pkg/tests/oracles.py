"""Independent reference implementations used as test oracles."""

import math

import numpy as np

from tablescene.layout import BoxSize, ObjectInstance, Position, RegionRect, SceneLayout


def _aabb(o):
    c, s = abs(math.cos(o.rotation)), abs(math.sin(o.rotation))
    hx = 0.5 * (o.size.w * c + o.size.d * s)
    hy = 0.5 * (o.size.w * s + o.size.d * c)
    return o.position.x - hx, o.position.y - hy, o.position.x + hx, o.position.y + hy


def _h_overlap(s, o):
    a, b = _aabb(s), _aabb(o)
    ix = max(0.0, min(a[2], b[2]) - max(a[0], b[0]))
    iy = max(0.0, min(a[3], b[3]) - max(a[1], b[1]))
    return ix * iy / ((a[2] - a[0]) * (a[3] - a[1]))


def rule_table_edges(layout, eps=1.0):
    """Every (subject, relation, object) triple, each rule evaluated literally."""
    region = layout.placement_region
    thr = 0.4 * max(region.x_max - region.x_min, region.y_max - region.y_min)
    out = set()
    for s in layout.objects:
        for o in layout.objects:
            if s is o:
                continue
            dx = s.position.x - o.position.x
            dy = s.position.y - o.position.y
            d = math.sqrt(dx * dx + dy * dy)
            rules = {
                "left of": abs(dx) > abs(dy) and dx < 0 and d <= thr,
                "right of": abs(dx) > abs(dy) and dx > 0 and d <= thr,
                "in front of": abs(dy) > abs(dx) and dy < 0 and d <= thr,
                "behind": abs(dy) > abs(dx) and dy > 0 and d <= thr,
            }
            ho = _h_overlap(s, o)
            s0, s1 = s.position.z, s.position.z + s.size.h
            o0, o1 = o.position.z, o.position.z + o.size.h
            rules["above"] = s0 > o1 - eps and ho >= 0.5
            rules["below"] = s1 < o0 + eps and ho >= 0.5
            rules["in"] = ho >= 0.9 and max(0.0, min(s1, o1) - max(s0, o0)) / s.size.h >= 0.5
            out.update((s.id, r, o.id) for r, ok in rules.items() if ok)
    return out


def random_small_layout(rng, n, region=RegionRect(0.0, 0.0, 100.0, 80.0)):
    """Random objects that frequently overlap, stack and nest, so every rule fires."""
    objects = []
    for i in range(n):
        if objects and rng.random() < 0.3:
            base = objects[int(rng.integers(len(objects)))]
            # stack on or sink into an earlier object
            x = base.position.x + rng.normal(0, 2)
            y = base.position.y + rng.normal(0, 2)
            z = base.position.z + base.size.h * rng.choice([0.2, 1.0])
            w, d, h = rng.uniform(2, 10, 3)
        else:
            x, y = rng.uniform(region.x_min, region.x_max), rng.uniform(region.y_min, region.y_max)
            z = 0.0
            w, d, h = rng.uniform(2, 30, 3)
        x = float(np.clip(x, region.x_min, region.x_max))
        y = float(np.clip(y, region.y_min, region.y_max))
        rot = float(rng.choice([0.0, rng.uniform(-math.pi, math.pi)]))
        objects.append(
            ObjectInstance(f"O{i}", f"object {i}", Position(x, y, float(z)), BoxSize(float(w), float(d), float(h)), rot)
        )
    return SceneLayout(region, tuple(objects))


def _inside(box, pts):
    dx = pts[:, 0] - box.cx
    dy = pts[:, 1] - box.cy
    c, s = math.cos(box.theta), math.sin(box.theta)
    u = dx * c + dy * s
    v = -dx * s + dy * c
    return (
        (np.abs(u) <= box.half_w)
        & (np.abs(v) <= box.half_d)
        & (pts[:, 2] >= box.z_min)
        & (pts[:, 2] <= box.z_max)
    )


def _aabb3(box):
    xs, ys = zip(*box.corners())
    return np.array([min(xs), min(ys), box.z_min]), np.array([max(xs), max(ys), box.z_max])


def monte_carlo_intersects(a, b, rng, n=50_000):
    """Sample the overlap of the two 3D bounding boxes and look for a point inside both."""
    lo_a, hi_a = _aabb3(a)
    lo_b, hi_b = _aabb3(b)
    lo, hi = np.maximum(lo_a, lo_b), np.minimum(hi_a, hi_b)
    if np.any(hi <= lo):
        return False
    pts = rng.uniform(lo, hi, size=(n, 3))
    return bool(np.any(_inside(a, pts) & _inside(b, pts)))


def random_box_pair(rng):
    from tablescene.collision import OrientedBox

    def box(cx, cy):
        w, d, h = rng.uniform(2, 20, 3)
        z = rng.uniform(0, 10)
        return OrientedBox(cx, cy, w / 2, d / 2, rng.uniform(-math.pi, math.pi), z, z + h)

    return box(0.0, 0.0), box(*rng.uniform(-20, 20, 2))

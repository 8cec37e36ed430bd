"""Layout data model, canonical record format and structural validation.

Frame conventions used everywhere in the package:

* units are centimeters;
* the origin sits at the placement region's min corner, +x points right,
  +y points toward the back of the table and +z points up, so "in front of"
  means a smaller y;
* ``position.z`` is the bottom of the object's box, not its center;
* rotations are about +z, normalized to the half-open interval [-pi, pi).
"""

from __future__ import annotations

import enum
import json
import math
from dataclasses import dataclass, field
from typing import Any, Iterable

TWO_PI = 2.0 * math.pi


class FormatErrorKind(enum.Enum):
    MALFORMED_SYNTAX = "malformed_syntax"
    MISSING_FIELD = "missing_field"
    NON_FINITE_NUMBER = "non_finite_number"
    EMPTY_OBJECT_LIST = "empty_object_list"


class FormatError(ValueError):
    """Raised when a layout record cannot be turned into a SceneLayout."""

    def __init__(self, kind: FormatErrorKind, detail: str = "", field_name: str | None = None):
        self.kind = kind
        self.field_name = field_name
        self.detail = detail
        msg = kind.value
        if field_name:
            msg += f" ({field_name})"
        if detail:
            msg += f": {detail}"
        super().__init__(msg)


def normalize_angle(theta: float) -> float:
    """Wrap ``theta`` into [-pi, pi).

    >>> normalize_angle(math.pi)
    -3.141592653589793
    """
    theta = float(theta)
    if not math.isfinite(theta):
        raise ValueError(f"angle must be finite, got {theta!r}")
    if -math.pi <= theta < math.pi:
        return theta
    wrapped = math.fmod(theta + math.pi, TWO_PI)
    if wrapped < 0.0:
        wrapped += TWO_PI
    wrapped -= math.pi
    # fmod/add can round up onto the excluded endpoint
    if wrapped >= math.pi:
        wrapped -= TWO_PI
    if wrapped < -math.pi:
        wrapped = -math.pi
    return wrapped


@dataclass(frozen=True)
class Position:
    x: float
    y: float
    z: float = 0.0

    def __post_init__(self) -> None:
        _check_finite(("x", "y", "z"), (self.x, self.y, self.z))


@dataclass(frozen=True)
class BoxSize:
    """Box extents: ``w`` along x, ``d`` along y, ``h`` along z."""

    w: float
    d: float
    h: float

    def __post_init__(self) -> None:
        _check_finite(("w", "d", "h"), (self.w, self.d, self.h))

    def as_tuple(self) -> tuple[float, float, float]:
        return (self.w, self.d, self.h)

    def is_positive(self) -> bool:
        return self.w > 0 and self.d > 0 and self.h > 0

    def scaled(self, factor: float) -> BoxSize:
        return BoxSize(self.w * factor, self.d * factor, self.h * factor)


@dataclass(frozen=True)
class RegionRect:
    x_min: float
    y_min: float
    x_max: float
    y_max: float

    def __post_init__(self) -> None:
        _check_finite(
            ("x_min", "y_min", "x_max", "y_max"),
            (self.x_min, self.y_min, self.x_max, self.y_max),
        )
        if not (self.x_min < self.x_max and self.y_min < self.y_max):
            raise ValueError(f"degenerate region {self.as_list()}")

    @property
    def width(self) -> float:
        return self.x_max - self.x_min

    @property
    def depth(self) -> float:
        return self.y_max - self.y_min

    def contains(self, x: float, y: float) -> bool:
        return self.x_min <= x <= self.x_max and self.y_min <= y <= self.y_max

    def as_list(self) -> list[float]:
        return [float(self.x_min), float(self.y_min), float(self.x_max), float(self.y_max)]


@dataclass(frozen=True)
class ObjectInstance:
    """One placed object.

    ``position`` holds the footprint center in x/y and the box bottom in z.
    ``rotation`` is normalized on construction.
    """

    id: str
    description: str
    position: Position
    size: BoxSize
    rotation: float = 0.0

    def __post_init__(self) -> None:
        object.__setattr__(self, "rotation", normalize_angle(self.rotation))

    @property
    def z_min(self) -> float:
        return self.position.z

    @property
    def z_max(self) -> float:
        return self.position.z + self.size.h

    def footprint_aabb(self) -> tuple[float, float, float, float]:
        """Axis-aligned bounds ``(x0, y0, x1, y1)`` of the rotated footprint."""
        c, s = abs(math.cos(self.rotation)), abs(math.sin(self.rotation))
        hx = 0.5 * (c * self.size.w + s * self.size.d)
        hy = 0.5 * (s * self.size.w + c * self.size.d)
        x, y = self.position.x, self.position.y
        return (x - hx, y - hy, x + hx, y + hy)


@dataclass(frozen=True)
class SceneLayout:
    placement_region: RegionRect
    objects: tuple[ObjectInstance, ...]
    no_placement_zones: tuple[RegionRect, ...] = ()

    def __post_init__(self) -> None:
        object.__setattr__(self, "objects", tuple(self.objects))
        object.__setattr__(self, "no_placement_zones", tuple(self.no_placement_zones))
        ids = [o.id for o in self.objects]
        if len(set(ids)) != len(ids):
            raise ValueError("object ids must be unique within a layout")

    def ids(self) -> list[str]:
        return [o.id for o in self.objects]

    def get(self, object_id: str) -> ObjectInstance:
        for obj in self.objects:
            if obj.id == object_id:
                return obj
        raise KeyError(object_id)

    def replace_objects(self, objects: Iterable[ObjectInstance]) -> SceneLayout:
        return SceneLayout(self.placement_region, tuple(objects), self.no_placement_zones)

    def canonical(self) -> SceneLayout:
        """Same layout with objects sorted by id."""
        return self.replace_objects(sorted(self.objects, key=lambda o: o.id))


ACTION_ARITY: dict[str, tuple[int, ...]] = {
    "Pick": (1,),
    "PlaceOn": (1,),
    "PlaceAt": (1,),
    # the inference prompt spells Push(obj, dir, dist), the data prompt Push(obj)
    "Push": (1, 3),
    "RevoluteJointOpen": (1,),
    "RevoluteJointClose": (1,),
    "PrismaticJointOpen": (1,),
    "PrismaticJointClose": (1,),
    "Press": (1,),
}


@dataclass(frozen=True)
class PrimitiveAction:
    verb: str
    arguments: tuple[str, ...]

    def __post_init__(self) -> None:
        object.__setattr__(self, "arguments", tuple(self.arguments))
        if self.verb not in ACTION_ARITY:
            raise ValueError(f"unknown action verb {self.verb!r}")
        if len(self.arguments) not in ACTION_ARITY[self.verb]:
            raise ValueError(
                f"{self.verb} takes {ACTION_ARITY[self.verb]} arguments, got {len(self.arguments)}"
            )

    @classmethod
    def parse(cls, text: str) -> PrimitiveAction:
        text = text.strip()
        open_idx = text.find("(")
        if open_idx <= 0 or not text.endswith(")"):
            raise ValueError(f"not an action call: {text!r}")
        verb = text[:open_idx].strip()
        inner = text[open_idx + 1 : -1]
        args = tuple(a.strip() for a in _split_top_level(inner)) if inner.strip() else ()
        if any(not a for a in args):
            raise ValueError(f"empty argument in {text!r}")
        return cls(verb, args)

    def __str__(self) -> str:
        return f"{self.verb}({', '.join(self.arguments)})"


def _split_top_level(text: str) -> list[str]:
    """Split on commas not nested in brackets, so ``PlaceAt([1, 2])`` stays one operand."""
    parts, depth, start = [], 0, 0
    for i, ch in enumerate(text):
        if ch in "([{":
            depth += 1
        elif ch in ")]}":
            depth -= 1
        elif ch == "," and depth == 0:
            parts.append(text[start:i])
            start = i + 1
    parts.append(text[start:])
    return parts


@dataclass(frozen=True)
class TaskInfo:
    environment: str
    task: str
    goals: tuple[str, ...] = ()
    action_sequence: tuple[PrimitiveAction, ...] = ()
    objects_cluster: tuple[str, ...] = ()

    def __post_init__(self) -> None:
        for name in ("goals", "action_sequence", "objects_cluster"):
            object.__setattr__(self, name, tuple(getattr(self, name)))
        if not self.task.strip():
            raise ValueError("task must be nonempty")
        if len(set(self.objects_cluster)) != len(self.objects_cluster):
            raise ValueError("objects_cluster entries must be unique")

    def to_dict(self) -> dict[str, Any]:
        """Keys follow the task-info JSON used by the prompts."""
        return {
            "Environment": self.environment,
            "Task": self.task,
            "Goal": list(self.goals),
            "Action Sequence": [str(a) for a in self.action_sequence],
            "Objects cluster": list(self.objects_cluster),
        }

    @classmethod
    def from_dict(cls, data: dict[str, Any]) -> TaskInfo:
        """Strict inverse of :meth:`to_dict`; raises KeyError/ValueError/TypeError."""
        goals = data["Goal"]
        actions = data["Action Sequence"]
        cluster = data["Objects cluster"]
        for name, value in (("Goal", goals), ("Action Sequence", actions), ("Objects cluster", cluster)):
            if not isinstance(value, list) or not all(isinstance(v, str) for v in value):
                raise TypeError(f"{name} must be a list of strings")
        if not isinstance(data["Environment"], str) or not isinstance(data["Task"], str):
            raise TypeError("Environment and Task must be strings")
        return cls(
            environment=data["Environment"],
            task=data["Task"],
            goals=tuple(goals),
            action_sequence=tuple(PrimitiveAction.parse(a) for a in actions),
            objects_cluster=tuple(cluster),
        )


# --------------------------------------------------------------------------
# record format


def layout_to_dict(layout: SceneLayout) -> dict[str, Any]:
    """Canonical dict form; objects sorted by id, keys in fixed order."""
    return {
        "placement_region": layout.placement_region.as_list(),
        "no_placement_zones": [z.as_list() for z in layout.no_placement_zones],
        "objects": [_object_to_dict(o) for o in sorted(layout.objects, key=lambda o: o.id)],
    }


def _object_to_dict(obj: ObjectInstance) -> dict[str, Any]:
    return {
        "id": obj.id,
        "description": obj.description,
        "position": {"x": float(obj.position.x), "y": float(obj.position.y), "z": float(obj.position.z)},
        "size": {"w": float(obj.size.w), "d": float(obj.size.d), "h": float(obj.size.h)},
        "rotation": float(obj.rotation),
    }


def serialize_layout(layout: SceneLayout) -> str:
    """Single-line canonical JSON; equal layouts give identical bytes."""
    return json.dumps(layout_to_dict(layout), ensure_ascii=False, allow_nan=False)


def parse_layout(text: str) -> SceneLayout:
    """Parse a layout record, raising :class:`FormatError` on any defect."""
    try:
        data = json.loads(text, parse_constant=_reject_constant)
    except _NonFinite as exc:
        raise FormatError(FormatErrorKind.NON_FINITE_NUMBER, str(exc)) from None
    except (json.JSONDecodeError, TypeError) as exc:
        raise FormatError(FormatErrorKind.MALFORMED_SYNTAX, str(exc)) from None
    return layout_from_dict(data)


def layout_from_dict(data: Any) -> SceneLayout:
    if not isinstance(data, dict):
        raise FormatError(FormatErrorKind.MALFORMED_SYNTAX, "layout record must be an object")
    region = _region(_require(data, "placement_region"), "placement_region")
    zones_raw = _require(data, "no_placement_zones")
    if not isinstance(zones_raw, list):
        raise FormatError(FormatErrorKind.MALFORMED_SYNTAX, "no_placement_zones must be a list")
    zones = tuple(_region(z, "no_placement_zones") for z in zones_raw)
    objects_raw = _require(data, "objects")
    if not isinstance(objects_raw, list):
        raise FormatError(FormatErrorKind.MALFORMED_SYNTAX, "objects must be a list")
    if not objects_raw:
        raise FormatError(FormatErrorKind.EMPTY_OBJECT_LIST)
    objects = tuple(_object(o) for o in objects_raw)
    ids = [o.id for o in objects]
    if len(set(ids)) != len(ids):
        raise FormatError(FormatErrorKind.MALFORMED_SYNTAX, "duplicate object ids")
    return SceneLayout(region, objects, zones)


class _NonFinite(ValueError):
    pass


def _reject_constant(name: str) -> float:
    raise _NonFinite(name)


def _require(data: dict[str, Any], key: str, where: str = "") -> Any:
    if key not in data:
        raise FormatError(FormatErrorKind.MISSING_FIELD, field_name=f"{where}{key}")
    return data[key]


def _number(value: Any, name: str) -> float:
    if isinstance(value, bool) or not isinstance(value, (int, float)):
        raise FormatError(FormatErrorKind.MALFORMED_SYNTAX, f"{name} must be a number")
    value = float(value)
    if not math.isfinite(value):
        raise FormatError(FormatErrorKind.NON_FINITE_NUMBER, name)
    return value


def _region(raw: Any, name: str) -> RegionRect:
    if not isinstance(raw, list) or len(raw) != 4:
        raise FormatError(FormatErrorKind.MALFORMED_SYNTAX, f"{name} must be [x_min, y_min, x_max, y_max]")
    vals = [_number(v, name) for v in raw]
    try:
        return RegionRect(*vals)
    except ValueError as exc:
        raise FormatError(FormatErrorKind.MALFORMED_SYNTAX, str(exc)) from None


def _object(raw: Any) -> ObjectInstance:
    if not isinstance(raw, dict):
        raise FormatError(FormatErrorKind.MALFORMED_SYNTAX, "object entry must be an object")
    oid = _require(raw, "id", "objects[].")
    desc = _require(raw, "description", "objects[].")
    if not isinstance(oid, str) or not oid.strip():
        raise FormatError(FormatErrorKind.MALFORMED_SYNTAX, "object id must be a nonempty string")
    if not isinstance(desc, str) or not desc.strip():
        raise FormatError(FormatErrorKind.MALFORMED_SYNTAX, f"{oid}: description must be a nonempty string")
    pos = _require(raw, "position", "objects[].")
    size = _require(raw, "size", "objects[].")
    rot = _number(_require(raw, "rotation", "objects[]."), f"{oid}.rotation")
    if not isinstance(pos, dict) or not isinstance(size, dict):
        raise FormatError(FormatErrorKind.MALFORMED_SYNTAX, f"{oid}: position/size must be objects")
    p = [_number(_require(pos, k, "objects[].position."), f"{oid}.position.{k}") for k in ("x", "y", "z")]
    s = [_number(_require(size, k, "objects[].size."), f"{oid}.size.{k}") for k in ("w", "d", "h")]
    return ObjectInstance(oid, desc, Position(*p), BoxSize(*s), rot)


def _check_finite(names: tuple[str, ...], values: tuple[float, ...]) -> None:
    for name, value in zip(names, values):
        if not math.isfinite(value):
            raise ValueError(f"{name} must be finite, got {value!r}")


# --------------------------------------------------------------------------
# validation


class ViolationKind(enum.Enum):
    OUT_OF_REGION = "out_of_region"
    NO_PLACEMENT_ZONE = "no_placement_zone"
    NON_POSITIVE_SIZE = "non_positive_size"


@dataclass(frozen=True)
class Violation:
    kind: ViolationKind
    object_id: str


@dataclass(frozen=True)
class ValidationReport:
    violations: tuple[Violation, ...] = field(default_factory=tuple)

    def __bool__(self) -> bool:
        return bool(self.violations)

    def __len__(self) -> int:
        return len(self.violations)

    @property
    def ok(self) -> bool:
        return not self.violations


class LayoutValidationError(ValueError):
    def __init__(self, report: ValidationReport):
        self.report = report
        parts = ", ".join(f"{v.kind.value}({v.object_id})" for v in report.violations)
        super().__init__(f"invalid layout: {parts}")


def validate_layout(layout: SceneLayout) -> ValidationReport:
    """Per-object placement checks. An empty report means the layout is valid."""
    found: list[Violation] = []
    for obj in sorted(layout.objects, key=lambda o: o.id):
        x, y = obj.position.x, obj.position.y
        if not layout.placement_region.contains(x, y):
            found.append(Violation(ViolationKind.OUT_OF_REGION, obj.id))
        if any(_strictly_inside(zone, x, y) for zone in layout.no_placement_zones):
            found.append(Violation(ViolationKind.NO_PLACEMENT_ZONE, obj.id))
        if not obj.size.is_positive():
            found.append(Violation(ViolationKind.NON_POSITIVE_SIZE, obj.id))
    return ValidationReport(tuple(found))


def _strictly_inside(zone: RegionRect, x: float, y: float) -> bool:
    return zone.x_min < x < zone.x_max and zone.y_min < y < zone.y_max


def require_valid(layout: SceneLayout) -> None:
    report = validate_layout(layout)
    if report:
        raise LayoutValidationError(report)

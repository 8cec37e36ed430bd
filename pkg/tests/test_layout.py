import json
import math

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from tablescene.layout import (
    BoxSize,
    FormatError,
    FormatErrorKind,
    ObjectInstance,
    Position,
    PrimitiveAction,
    RegionRect,
    SceneLayout,
    TaskInfo,
    ViolationKind,
    normalize_angle,
    parse_layout,
    serialize_layout,
    validate_layout,
)

from conftest import make_layout, make_obj

MINIMAL = {
    "placement_region": [0, 0, 100, 80],
    "no_placement_zones": [],
    "objects": [
        {
            "id": "Cup-0",
            "description": "white ceramic cup",
            "position": {"x": 10, "y": 20, "z": 0},
            "size": {"w": 8, "d": 8, "h": 10},
            "rotation": 0.0,
        }
    ],
}


def test_normalize_angle_examples():
    assert normalize_angle(0.0) == 0.0
    assert normalize_angle(3 * math.pi / 2) == pytest.approx(-math.pi / 2, abs=1e-15)
    assert normalize_angle(math.pi) == -math.pi
    assert normalize_angle(-math.pi) == -math.pi


def test_normalize_angle_rejects_non_finite():
    with pytest.raises(ValueError):
        normalize_angle(float("nan"))
    with pytest.raises(ValueError):
        normalize_angle(float("inf"))


@given(st.floats(min_value=-1e4, max_value=1e4, allow_nan=False))
def test_normalize_angle_range_idempotent_periodic(theta):
    n = normalize_angle(theta)
    assert -math.pi <= n < math.pi
    assert normalize_angle(n) == n
    # congruent mod 2*pi
    k = round((theta - n) / (2 * math.pi))
    assert theta - n == pytest.approx(2 * math.pi * k, abs=1e-9 * max(1.0, abs(theta)))
    assert normalize_angle(theta + 2 * math.pi) == pytest.approx(n, abs=1e-9) or abs(
        abs(normalize_angle(theta + 2 * math.pi) - n) - 2 * math.pi
    ) < 1e-9


def test_parse_minimal_record():
    layout = parse_layout(json.dumps(MINIMAL))
    assert len(layout.objects) == 1
    obj = layout.objects[0]
    assert obj.id == "Cup-0"
    assert obj.position == Position(10.0, 20.0, 0.0)
    assert obj.size == BoxSize(8.0, 8.0, 10.0)
    assert layout.placement_region == RegionRect(0, 0, 100, 80)


def _with_object_field_removed(name):
    data = json.loads(json.dumps(MINIMAL))
    del data["objects"][0][name]
    return json.dumps(data)


@pytest.mark.parametrize("name", ["id", "description", "position", "size", "rotation"])
def test_missing_object_field(name):
    with pytest.raises(FormatError) as info:
        parse_layout(_with_object_field_removed(name))
    assert info.value.kind is FormatErrorKind.MISSING_FIELD
    assert name in info.value.field_name


@pytest.mark.parametrize("name", ["placement_region", "no_placement_zones", "objects"])
def test_missing_top_level_field(name):
    data = dict(MINIMAL)
    del data[name]
    with pytest.raises(FormatError) as info:
        parse_layout(json.dumps(data))
    assert info.value.kind is FormatErrorKind.MISSING_FIELD


def test_missing_position_component():
    data = json.loads(json.dumps(MINIMAL))
    del data["objects"][0]["position"]["z"]
    with pytest.raises(FormatError) as info:
        parse_layout(json.dumps(data))
    assert info.value.kind is FormatErrorKind.MISSING_FIELD


def test_empty_object_list():
    data = dict(MINIMAL, objects=[])
    with pytest.raises(FormatError) as info:
        parse_layout(json.dumps(data))
    assert info.value.kind is FormatErrorKind.EMPTY_OBJECT_LIST


@pytest.mark.parametrize("token", ["NaN", "Infinity", "-Infinity"])
def test_non_finite_numbers(token):
    text = json.dumps(MINIMAL).replace('"x": 10', f'"x": {token}')
    with pytest.raises(FormatError) as info:
        parse_layout(text)
    assert info.value.kind is FormatErrorKind.NON_FINITE_NUMBER


def test_overflowing_literal_is_non_finite():
    text = json.dumps(MINIMAL).replace('"x": 10', '"x": 1e999')
    with pytest.raises(FormatError) as info:
        parse_layout(text)
    assert info.value.kind is FormatErrorKind.NON_FINITE_NUMBER


@pytest.mark.parametrize(
    "text",
    [
        "",
        "{",
        "not json at all",
        "[1, 2, 3]",
        json.dumps(dict(MINIMAL, placement_region=[0, 0, 100])),
        json.dumps(dict(MINIMAL, placement_region=[10, 0, 0, 100])),
        json.dumps(MINIMAL).replace('"x": 10', '"x": "ten"'),
        json.dumps(MINIMAL).replace('"x": 10', '"x": true'),
        json.dumps(dict(MINIMAL, objects=[MINIMAL["objects"][0]] * 2)),
    ],
)
def test_malformed_syntax(text):
    with pytest.raises(FormatError) as info:
        parse_layout(text)
    assert info.value.kind is FormatErrorKind.MALFORMED_SYNTAX


def test_serialize_emits_normalized_rotation():
    layout = make_layout(make_obj("A", 10, 10, rot=3 * math.pi / 2))
    data = json.loads(serialize_layout(layout))
    assert data["objects"][0]["rotation"] == pytest.approx(-math.pi / 2, abs=1e-15)


def test_serialize_key_order_is_fixed():
    text = serialize_layout(parse_layout(json.dumps(MINIMAL)))
    assert text.index('"placement_region"') < text.index('"no_placement_zones"') < text.index('"objects"')
    obj_part = text[text.index('"id"') :]
    keys = ['"id"', '"description"', '"position"', '"size"', '"rotation"']
    assert [obj_part.index(k) for k in keys] == sorted(obj_part.index(k) for k in keys)
    assert "\n" not in text


def test_permutations_serialize_identically():
    a, b, c = make_obj("B", 10, 10), make_obj("A", 50, 50), make_obj("C", 80, 20)
    assert serialize_layout(make_layout(a, b, c)) == serialize_layout(make_layout(c, a, b))


def test_golden_bytes():
    layout = make_layout(make_obj("Lamp-0", 45.5, 80, h=40, rot=0.5, desc="desk lamp"), region=(0, 0, 90, 90))
    assert serialize_layout(layout) == (
        '{"placement_region": [0.0, 0.0, 90.0, 90.0], "no_placement_zones": [], '
        '"objects": [{"id": "Lamp-0", "description": "desk lamp", '
        '"position": {"x": 45.5, "y": 80.0, "z": 0.0}, "size": {"w": 10.0, "d": 10.0, "h": 40.0}, '
        '"rotation": 0.5}]}'
    )


finite = st.floats(min_value=-500, max_value=500, allow_nan=False, allow_infinity=False)
positive = st.floats(min_value=0.01, max_value=200, allow_nan=False, allow_infinity=False)


@st.composite
def layouts(draw):
    n = draw(st.integers(min_value=1, max_value=8))
    ids = draw(st.lists(st.text("abcdefgh-0123456789", min_size=1, max_size=6), min_size=n, max_size=n, unique=True))
    objects = [
        ObjectInstance(
            i,
            draw(st.text(min_size=1, max_size=12).filter(str.strip)),
            Position(draw(finite), draw(finite), draw(finite)),
            BoxSize(draw(positive), draw(positive), draw(positive)),
            draw(st.floats(min_value=-10, max_value=10, allow_nan=False)),
        )
        for i in ids
    ]
    zones = [RegionRect(0, 0, 5, 5)] if draw(st.booleans()) else []
    return SceneLayout(RegionRect(-10, -20, 300, 200), tuple(objects), tuple(zones))


@settings(max_examples=200)
@given(layouts())
def test_round_trip(layout):
    back = parse_layout(serialize_layout(layout))
    assert back == layout.canonical()
    assert serialize_layout(back) == serialize_layout(layout)


def test_validate_clean_layout():
    assert validate_layout(make_layout(make_obj("A", 10, 10), make_obj("B", 50, 50))).ok


def test_validate_no_placement_zone():
    layout = make_layout(make_obj("Soap", 50, 50), zones=[(40, 40, 60, 60)])
    report = validate_layout(layout)
    assert [(v.kind, v.object_id) for v in report.violations] == [(ViolationKind.NO_PLACEMENT_ZONE, "Soap")]


def test_validate_out_of_region_boundary():
    assert validate_layout(make_layout(make_obj("A", 100, 50))).ok
    report = validate_layout(make_layout(make_obj("A", 101, 50)))
    assert [(v.kind, v.object_id) for v in report.violations] == [(ViolationKind.OUT_OF_REGION, "A")]


def test_validate_non_positive_size():
    report = validate_layout(make_layout(make_obj("A", 10, 10, h=0.0)))
    assert [v.kind for v in report.violations] == [ViolationKind.NON_POSITIVE_SIZE]


def test_layout_rejects_duplicate_ids():
    with pytest.raises(ValueError):
        make_layout(make_obj("A", 1, 1), make_obj("A", 2, 2))


def test_primitive_action_parsing():
    assert PrimitiveAction.parse("Pick(Dinner Plate)") == PrimitiveAction("Pick", ("Dinner Plate",))
    assert PrimitiveAction.parse("Push(Drawer, left, 10cm)").arguments == ("Drawer", "left", "10cm")
    assert PrimitiveAction.parse("PlaceAt([10, 20])").arguments == ("[10, 20]",)
    assert str(PrimitiveAction.parse("Press( Button )")) == "Press(Button)"
    with pytest.raises(ValueError):
        PrimitiveAction.parse("Teleport(Cup)")
    with pytest.raises(ValueError):
        PrimitiveAction.parse("Pick(Cup, Plate)")
    with pytest.raises(ValueError):
        PrimitiveAction.parse("Pick")


def test_task_info_round_trip_and_invariants():
    info = TaskInfo(
        "office desk",
        "Tidy the desk",
        ("stack books",),
        (PrimitiveAction("Pick", ("Book",)),),
        ("Book", "Shelf"),
    )
    assert TaskInfo.from_dict(info.to_dict()) == info
    with pytest.raises(ValueError):
        TaskInfo("e", " ")
    with pytest.raises(ValueError):
        TaskInfo("e", "t", objects_cluster=("Book", "Book"))

"""Scene-graph assembly, triple serialization and graph diffs."""

from __future__ import annotations

import re
from dataclasses import dataclass
from typing import Iterable

from .layout import SceneLayout, require_valid
from .relations import (
    DEFAULT_Z_EPSILON,
    Axis,
    FacingBin,
    GridCell,
    SpacingGroup,
    containment,
    equally_spaced_groups,
    face_direction,
    grid_position,
    horizontal_relation,
    vertical_relation,
)

RELATIONS = ("left of", "right of", "in front of", "behind", "above", "below", "in")
IS_AT = "is at"
FACE_TO = "face to"
SPACED_ALONG = "are equally spaced along"


@dataclass(frozen=True)
class GraphNode:
    object_id: str
    grid_cell: GridCell
    facing: FacingBin


@dataclass(frozen=True, order=True)
class RelationEdge:
    subject_id: str
    relation: str
    object_id: str

    def __post_init__(self) -> None:
        if self.relation not in RELATIONS:
            raise ValueError(f"unknown relation {self.relation!r}")
        if self.subject_id == self.object_id:
            raise ValueError("self-relation")

    def as_triple(self) -> tuple[str, str, str]:
        return (self.subject_id, self.relation, self.object_id)


@dataclass(frozen=True)
class SceneGraph:
    nodes: tuple[GraphNode, ...] = ()
    edges: tuple[RelationEdge, ...] = ()
    spacing_groups: tuple[SpacingGroup, ...] = ()

    def __post_init__(self) -> None:
        object.__setattr__(self, "nodes", tuple(sorted(self.nodes, key=lambda n: n.object_id)))
        object.__setattr__(self, "edges", tuple(sorted(set(self.edges))))
        object.__setattr__(
            self,
            "spacing_groups",
            tuple(sorted(self.spacing_groups, key=lambda g: (g.axis.value, g.member_ids))),
        )

    def with_edges(self, edges: Iterable[RelationEdge]) -> SceneGraph:
        return SceneGraph(self.nodes, tuple(edges), self.spacing_groups)


def pair_relations(a, b, region, z_epsilon: float = DEFAULT_Z_EPSILON) -> list[str]:
    """Every relation that holds for the ordered pair (a, b)."""
    found = []
    horiz = horizontal_relation(a, b, region)
    if horiz is not None:
        found.append(horiz.value)
    vert = vertical_relation(a, b, z_epsilon)
    if vert is not None:
        found.append(vert.value)
    if containment(a, b):
        found.append("in")
    return found


def build_scene_graph(layout: SceneLayout, z_epsilon: float = DEFAULT_Z_EPSILON) -> SceneGraph:
    """Extract nodes, directed relation edges and spacing groups from a valid layout."""
    require_valid(layout)
    region = layout.placement_region
    nodes = [
        GraphNode(o.id, grid_position(o, region), face_direction(o.rotation)) for o in layout.objects
    ]
    edges = []
    for a in layout.objects:
        for b in layout.objects:
            if a.id == b.id:
                continue
            edges.extend(RelationEdge(a.id, rel, b.id) for rel in pair_relations(a, b, region, z_epsilon))
    groups = equally_spaced_groups(layout.objects, region)
    return SceneGraph(tuple(nodes), tuple(edges), tuple(groups))


def serialize_graph(graph: SceneGraph) -> str:
    """Nodes first, then edges, then spacing groups; one parenthesized triple per line."""
    lines = []
    for node in graph.nodes:
        lines.append(f"({node.object_id}, {IS_AT}, {node.grid_cell.value})")
        lines.append(f"({node.object_id}, {FACE_TO}, {node.facing.value})")
    for edge in graph.edges:
        lines.append(f"({edge.subject_id}, {edge.relation}, {edge.object_id})")
    for group in graph.spacing_groups:
        lines.append(f"({', '.join(group.member_ids)}, {SPACED_ALONG}, {group.axis.value})")
    return "\n".join(lines)


_PREDICATES = "|".join(re.escape(p) for p in sorted((*RELATIONS, IS_AT, FACE_TO), key=len, reverse=True))
_TRIPLE_RE = re.compile(rf"^\((.+?), ({_PREDICATES}), (.+)\)$")
_GROUP_RE = re.compile(rf"^\((.+), {re.escape(SPACED_ALONG)}, (X|Y)\)$")


class GraphParseError(ValueError):
    pass


def parse_triples(text: str) -> list[tuple[str, ...]]:
    """Read graph text back into raw tuples.

    Pairwise lines give ``(subject, predicate, object)``; spacing lines give
    ``(id1, ..., idN, "are equally spaced along", axis)``. Ids containing
    ``", "`` cannot be recovered unambiguously.
    """
    out: list[tuple[str, ...]] = []
    for lineno, line in enumerate(text.splitlines(), 1):
        line = line.strip()
        if not line:
            continue
        group = _GROUP_RE.match(line)
        if group:
            members = tuple(group.group(1).split(", "))
            out.append((*members, SPACED_ALONG, group.group(2)))
            continue
        triple = _TRIPLE_RE.match(line)
        if not triple:
            raise GraphParseError(f"line {lineno}: not a relation triple: {line!r}")
        out.append(triple.groups())
    return out


def check_triples(layout: SceneLayout, triples: Iterable[tuple[str, ...]], z_epsilon: float = DEFAULT_Z_EPSILON) -> tuple[int, int]:
    """Count how many triples re-hold on ``layout``. Returns ``(holding, total)``.

    Triples naming unknown ids count as not holding.
    """
    objects = {o.id: o for o in layout.objects}
    region = layout.placement_region
    holding = total = 0
    group_sets: set[tuple[tuple[str, ...], str]] | None = None
    for t in triples:
        total += 1
        if len(t) > 3 and t[-2] == SPACED_ALONG:
            if group_sets is None:
                group_sets = {
                    (g.member_ids, g.axis.value) for g in equally_spaced_groups(layout.objects, region)
                }
            holding += (tuple(t[:-2]), t[-1]) in group_sets
            continue
        subj, pred, obj = t
        if subj not in objects:
            continue
        s = objects[subj]
        if pred == IS_AT:
            holding += region.contains(s.position.x, s.position.y) and grid_position(s, region).value == obj
        elif pred == FACE_TO:
            holding += face_direction(s.rotation).value == obj
        elif obj in objects and obj != subj:
            holding += pred in pair_relations(s, objects[obj], region, z_epsilon)
    return holding, total


@dataclass(frozen=True)
class GraphDiff:
    added_edges: tuple[RelationEdge, ...] = ()
    removed_edges: tuple[RelationEdge, ...] = ()
    # (object_id, attribute, value in a, value in b); None marks an absent node
    changed_nodes: tuple[tuple[str, str, str | None, str | None], ...] = ()
    added_groups: tuple[SpacingGroup, ...] = ()
    removed_groups: tuple[SpacingGroup, ...] = ()

    def is_empty(self) -> bool:
        return not (
            self.added_edges or self.removed_edges or self.changed_nodes or self.added_groups or self.removed_groups
        )

    def __bool__(self) -> bool:
        return not self.is_empty()


def graph_diff(a: SceneGraph, b: SceneGraph) -> GraphDiff:
    edges_a, edges_b = set(a.edges), set(b.edges)
    nodes_a = {n.object_id: n for n in a.nodes}
    nodes_b = {n.object_id: n for n in b.nodes}
    changed = []
    for oid in sorted(nodes_a.keys() | nodes_b.keys()):
        na, nb = nodes_a.get(oid), nodes_b.get(oid)
        for attr in ("grid_cell", "facing"):
            va = getattr(na, attr).value if na else None
            vb = getattr(nb, attr).value if nb else None
            if va != vb:
                changed.append((oid, attr, va, vb))
    groups_a = {(g.member_ids, g.axis): g for g in a.spacing_groups}
    groups_b = {(g.member_ids, g.axis): g for g in b.spacing_groups}
    return GraphDiff(
        added_edges=tuple(sorted(edges_b - edges_a)),
        removed_edges=tuple(sorted(edges_a - edges_b)),
        changed_nodes=tuple(changed),
        added_groups=tuple(groups_b[k] for k in sorted(groups_b.keys() - groups_a.keys(), key=_gkey)),
        removed_groups=tuple(groups_a[k] for k in sorted(groups_a.keys() - groups_b.keys(), key=_gkey)),
    )


def _gkey(k: tuple[tuple[str, ...], Axis]) -> tuple[str, tuple[str, ...]]:
    return (k[1].value, k[0])

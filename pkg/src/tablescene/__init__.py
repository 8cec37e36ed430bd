"""Deterministic machinery for task-oriented tabletop scene layouts.

Layouts, rule-based scene graphs, coarse quantization, preference-pair
construction, oriented-box collision checks and asset retrieval scoring.
"""

from .collision import CollisionReport, OrientedBox, collision_pairs, obb_intersects
from .corruption import (
    CorruptionConfig,
    CorruptionTag,
    DpoPair,
    DpoRecord,
    build_dpo_dataset,
    corrupt_relations,
    dpo_objective,
    perturb_geometry,
    remove_task_objects,
)
from .errors import ProviderUnavailable
from .graph import GraphNode, RelationEdge, SceneGraph, build_scene_graph, graph_diff, serialize_graph
from .layout import (
    BoxSize,
    FormatError,
    FormatErrorKind,
    ObjectInstance,
    Position,
    PrimitiveAction,
    RegionRect,
    SceneLayout,
    TaskInfo,
    normalize_angle,
    parse_layout,
    serialize_layout,
    validate_layout,
)
from .records import build_reasoning_record, success_rate, task_info_from_instruction
from .relations import (
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
from .retrieval import AssetEntry, RetrievalTarget, isometric_scale, retrieve_top_k, score, size_similarity

__version__ = "0.1.0"

__all__ = [
    "AssetEntry",
    "BoxSize",
    "CollisionReport",
    "CorruptionConfig",
    "CorruptionTag",
    "DpoPair",
    "DpoRecord",
    "FacingBin",
    "FormatError",
    "FormatErrorKind",
    "GraphNode",
    "GridCell",
    "ObjectInstance",
    "OrientedBox",
    "Position",
    "PrimitiveAction",
    "ProviderUnavailable",
    "RegionRect",
    "RelationEdge",
    "RetrievalTarget",
    "SceneGraph",
    "SceneLayout",
    "SpacingGroup",
    "TaskInfo",
    "build_dpo_dataset",
    "build_reasoning_record",
    "build_scene_graph",
    "collision_pairs",
    "containment",
    "corrupt_relations",
    "dpo_objective",
    "equally_spaced_groups",
    "face_direction",
    "graph_diff",
    "grid_position",
    "horizontal_relation",
    "isometric_scale",
    "normalize_angle",
    "obb_intersects",
    "parse_layout",
    "perturb_geometry",
    "remove_task_objects",
    "retrieve_top_k",
    "score",
    "serialize_graph",
    "serialize_layout",
    "size_similarity",
    "success_rate",
    "task_info_from_instruction",
    "validate_layout",
    "vertical_relation",
]

"""Preference-pair construction by corrupting known-good layouts.

Three corruption families produce the rejected side of each pair:

* geometric perturbation of a random subset of objects (collisions),
* relation corruption of the scene graph (edges removed or flipped),
* removal of task-relevant objects.

Every operation is a pure function of ``(input, seed, cfg)``. Per-record
seeds are spawned from the dataset seed with :class:`numpy.random.SeedSequence`
keyed by record index, so parallel and serial builds produce the same bytes.
"""

from __future__ import annotations

import enum
import json
import logging
import math
from dataclasses import dataclass, field
from typing import Iterable, Sequence

import numpy as np

from .graph import RelationEdge, SceneGraph, build_scene_graph, serialize_graph
from .layout import (
    LayoutValidationError,
    ObjectInstance,
    Position,
    SceneLayout,
    normalize_angle,
    serialize_layout,
    validate_layout,
)

logger = logging.getLogger(__name__)

FLIP_MAP = {
    "left of": "right of",
    "right of": "left of",
    "in front of": "behind",
    "behind": "in front of",
    "above": "below",
    "below": "above",
    "in": "left of",
}


class CorruptionError(ValueError):
    pass


class EmptyGraphError(CorruptionError):
    pass


class NoTaskObjectsError(CorruptionError):
    pass


class CorruptionTag(enum.Enum):
    GEOMETRIC_COLLISION = "geometric_collision"
    RELATION_MISALIGNMENT = "relation_misalignment"
    OBJECT_REMOVAL = "object_removal"


class PerturbationKind(enum.Enum):
    POSITION = "position"
    ROTATION = "rotation"
    SIZE = "size"


@dataclass(frozen=True)
class CorruptionConfig:
    select_prob: float = 0.3
    pos_prob: float = 0.8
    rot_prob: float = 0.1
    size_prob: float = 0.1
    max_pos_frac: float = 0.20
    rot_delta_max: float = math.pi / 2
    size_scale_range: tuple[float, float] = (0.7, 1.3)
    relation_flip_vs_remove: float = 0.5
    removal_count_range: tuple[int, ...] = (1, 2)

    def __post_init__(self) -> None:
        probs = (self.select_prob, self.pos_prob, self.rot_prob, self.size_prob, self.relation_flip_vs_remove)
        if any(not 0.0 <= p <= 1.0 for p in probs):
            raise ValueError("probabilities must lie in [0, 1]")
        if not math.isclose(self.pos_prob + self.rot_prob + self.size_prob, 1.0, abs_tol=1e-9):
            raise ValueError("pos_prob + rot_prob + size_prob must equal 1")
        if not 0.0 < self.max_pos_frac <= 1.0:
            raise ValueError("max_pos_frac must lie in (0, 1]")
        lo, hi = self.size_scale_range
        if not 0 < lo <= hi:
            raise ValueError("size_scale_range must be positive and ordered")
        if self.select_prob == 0.0:
            raise ValueError("select_prob must be positive")
        if not self.removal_count_range or min(self.removal_count_range) < 1:
            raise ValueError("removal_count_range must hold positive counts")


@dataclass(frozen=True)
class Perturbation:
    object_id: str
    kind: PerturbationKind


def _rng(seed: int | np.random.Generator) -> np.random.Generator:
    if isinstance(seed, np.random.Generator):
        return seed
    return np.random.default_rng(seed)


def _select(rng: np.random.Generator, n: int, prob: float) -> np.ndarray:
    """Bernoulli mask with at least one selection (redrawn until nonempty)."""
    while True:
        mask = rng.random(n) < prob
        if mask.any():
            return mask


def perturb_geometry_detailed(
    layout: SceneLayout, seed: int | np.random.Generator, cfg: CorruptionConfig = CorruptionConfig()
) -> tuple[SceneLayout, list[Perturbation]]:
    """Like :func:`perturb_geometry`, also returning which change hit which object."""
    rng = _rng(seed)
    region = layout.placement_region
    objects = sorted(layout.objects, key=lambda o: o.id)
    mask = _select(rng, len(objects), cfg.select_prob)
    kinds = list(PerturbationKind)
    probs = [cfg.pos_prob, cfg.rot_prob, cfg.size_prob]
    out: list[ObjectInstance] = []
    log: list[Perturbation] = []
    for obj, chosen in zip(objects, mask):
        if not chosen:
            out.append(obj)
            continue
        kind = kinds[int(rng.choice(3, p=probs))]
        log.append(Perturbation(obj.id, kind))
        if kind is PerturbationKind.POSITION:
            dx, dy = rng.uniform(-1.0, 1.0, size=2) * cfg.max_pos_frac * np.array([region.width, region.depth])
            x = min(max(obj.position.x + float(dx), region.x_min), region.x_max)
            y = min(max(obj.position.y + float(dy), region.y_min), region.y_max)
            out.append(_replace(obj, position=Position(x, y, obj.position.z)))
        elif kind is PerturbationKind.ROTATION:
            delta = float(rng.uniform(-cfg.rot_delta_max, cfg.rot_delta_max))
            out.append(_replace(obj, rotation=normalize_angle(obj.rotation + delta)))
        else:
            scale = float(rng.uniform(*cfg.size_scale_range))
            out.append(_replace(obj, size=obj.size.scaled(scale)))
    return layout.replace_objects(out), log


def perturb_geometry(
    layout: SceneLayout, seed: int | np.random.Generator, cfg: CorruptionConfig = CorruptionConfig()
) -> SceneLayout:
    """Move, turn or rescale a random subset of objects, keeping centers in the region."""
    return perturb_geometry_detailed(layout, seed, cfg)[0]


def _replace(obj: ObjectInstance, **changes) -> ObjectInstance:
    fields = {
        "id": obj.id,
        "description": obj.description,
        "position": obj.position,
        "size": obj.size,
        "rotation": obj.rotation,
    }
    fields.update(changes)
    return ObjectInstance(**fields)


def corrupt_relations(
    graph: SceneGraph, seed: int | np.random.Generator, cfg: CorruptionConfig = CorruptionConfig()
) -> SceneGraph:
    """Remove or flip a random nonempty subset of edges."""
    if not graph.edges:
        raise EmptyGraphError("graph has no edges to corrupt")
    rng = _rng(seed)
    while True:
        mask = _select(rng, len(graph.edges), cfg.select_prob)
        kept: list[RelationEdge] = []
        for edge, chosen in zip(graph.edges, mask):
            if not chosen:
                kept.append(edge)
            elif rng.random() < cfg.relation_flip_vs_remove:
                kept.append(RelationEdge(edge.subject_id, FLIP_MAP[edge.relation], edge.object_id))
        corrupted = graph.with_edges(kept)
        # flips can cancel out on hand-built graphs holding both directions of a pair
        if corrupted.edges != graph.edges:
            return corrupted


def remove_task_objects(
    layout: SceneLayout,
    task_relevant_ids: Sequence[str],
    seed: int | np.random.Generator,
    cfg: CorruptionConfig = CorruptionConfig(),
) -> SceneLayout:
    if not task_relevant_ids:
        raise NoTaskObjectsError("no task-relevant objects to remove")
    present = set(layout.ids())
    missing = [i for i in task_relevant_ids if i not in present]
    if missing:
        raise CorruptionError(f"task objects not in layout: {missing}")
    rng = _rng(seed)
    candidates = sorted(set(task_relevant_ids))
    k = int(rng.choice(sorted(cfg.removal_count_range)))
    k = min(k, len(candidates))
    drop = set(rng.choice(candidates, size=k, replace=False).tolist())
    return layout.replace_objects(o for o in layout.objects if o.id not in drop)


def dpo_objective(
    logp_chosen_policy: float,
    logp_rejected_policy: float,
    logp_chosen_ref: float,
    logp_rejected_ref: float,
    beta: float = 0.1,
) -> float:
    """Per-pair DPO log-likelihood ``log sigmoid(beta * (chosen margin - rejected margin))``."""
    values = (logp_chosen_policy, logp_rejected_policy, logp_chosen_ref, logp_rejected_ref, beta)
    if not all(math.isfinite(v) for v in values):
        raise ValueError("inputs must be finite")
    if beta <= 0:
        raise ValueError("beta must be positive")
    z = beta * ((logp_chosen_policy - logp_chosen_ref) - (logp_rejected_policy - logp_rejected_ref))
    # log sigmoid(z) = -log(1 + exp(-z)), evaluated without overflow
    return -float(np.logaddexp(0.0, -z))


# --------------------------------------------------------------------------
# dataset construction

GRAPH_HEADER = "Scene Graph:"
LAYOUT_HEADER = "Layout:"


def render_completion(reasoning: str, graph_text: str, layout_text: str) -> str:
    """Reasoning trace, then the scene graph, then the layout record."""
    parts = []
    if reasoning.strip():
        parts.append(reasoning.rstrip())
    parts.append(f"{GRAPH_HEADER}\n{graph_text}")
    parts.append(f"{LAYOUT_HEADER}\n{layout_text}")
    return "\n\n".join(parts)


def extract_layout_text(completion: str) -> str:
    """Layout record from a completion; the whole text if no layout header is present."""
    marker = f"{LAYOUT_HEADER}\n"
    idx = completion.rfind(marker)
    if idx < 0:
        return completion.strip()
    return completion[idx + len(marker) :].strip()


@dataclass(frozen=True)
class DpoRecord:
    prompt: str
    reasoning: str
    layout: SceneLayout
    task_relevant_ids: tuple[str, ...] = ()


@dataclass(frozen=True)
class DpoPair:
    prompt: str
    chosen: str
    rejected: str
    tag: CorruptionTag
    seed: int

    def to_dict(self) -> dict:
        return {
            "prompt": self.prompt,
            "chosen": self.chosen,
            "rejected": self.rejected,
            "tag": self.tag.value,
            "seed": self.seed,
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), ensure_ascii=False)


@dataclass
class DpoDataset:
    pairs: list[DpoPair] = field(default_factory=list)
    # (record index, reason) for records left out
    skipped: list[tuple[int, str]] = field(default_factory=list)

    def __len__(self) -> int:
        return len(self.pairs)

    def __iter__(self):
        return iter(self.pairs)

    def tag_histogram(self) -> dict[str, int]:
        counts = {t.value: 0 for t in CorruptionTag}
        for pair in self.pairs:
            counts[pair.tag.value] += 1
        return counts

    def to_jsonl(self) -> str:
        return "".join(p.to_json() + "\n" for p in self.pairs)


PAIRS_PER_RECORD = 2


def pair_seeds(global_seed: int, index: int) -> list[int]:
    """64-bit seeds for the pairs of record ``index``."""
    ss = np.random.SeedSequence(entropy=global_seed, spawn_key=(index,))
    return [int(s) for s in ss.generate_state(PAIRS_PER_RECORD, dtype=np.uint64)]


def build_record_pairs(
    record: DpoRecord, index: int, seed: int, cfg: CorruptionConfig = CorruptionConfig()
) -> list[DpoPair]:
    """The two pairs for one record; raises LayoutValidationError on a bad layout."""
    layout = record.layout
    graph = build_scene_graph(layout)
    graph_text = serialize_graph(graph)
    layout_text = serialize_layout(layout)
    chosen = render_completion(record.reasoning, graph_text, layout_text)

    applicable = [CorruptionTag.GEOMETRIC_COLLISION]
    if graph.edges:
        applicable.append(CorruptionTag.RELATION_MISALIGNMENT)
    if record.task_relevant_ids:
        applicable.append(CorruptionTag.OBJECT_REMOVAL)

    pairs = []
    for sub_seed in pair_seeds(seed, index):
        rng = np.random.default_rng(sub_seed)
        tag = applicable[int(rng.integers(len(applicable)))]
        rejected = _rejected_completion(record, graph, graph_text, layout_text, tag, rng, cfg)
        pairs.append(DpoPair(record.prompt, chosen, rejected, tag, sub_seed))
    return pairs


def _rejected_completion(record, graph, graph_text, layout_text, tag, rng, cfg) -> str:
    if tag is CorruptionTag.RELATION_MISALIGNMENT:
        bad_graph = corrupt_relations(graph, rng, cfg)
        return render_completion(record.reasoning, serialize_graph(bad_graph), layout_text)
    if tag is CorruptionTag.OBJECT_REMOVAL:
        reduced = remove_task_objects(record.layout, record.task_relevant_ids, rng, cfg)
        reduced_graph = build_scene_graph(reduced) if reduced.objects else SceneGraph()
        return render_completion(record.reasoning, serialize_graph(reduced_graph), serialize_layout(reduced))
    # a perturbation can land back on identical bytes only in degenerate cases; retry
    for _ in range(16):
        bad = perturb_geometry(record.layout, rng, cfg)
        bad_text = serialize_layout(bad)
        if bad_text != layout_text:
            return render_completion(record.reasoning, graph_text, bad_text)
    raise CorruptionError("geometric perturbation left the layout unchanged")


def build_dpo_dataset(
    records: Iterable[DpoRecord],
    seed: int,
    cfg: CorruptionConfig = CorruptionConfig(),
    workers: int = 1,
) -> DpoDataset:
    """Two pairs per record with independently drawn corruption strategies.

    Records whose layouts fail validation are skipped and listed in
    ``DpoDataset.skipped``.
    """
    records = list(records)
    dataset = DpoDataset()
    if workers > 1:
        from concurrent.futures import ProcessPoolExecutor

        with ProcessPoolExecutor(max_workers=workers) as pool:
            results = list(
                pool.map(_safe_pairs, records, range(len(records)), [seed] * len(records), [cfg] * len(records), chunksize=64)
            )
    else:
        results = [_safe_pairs(r, i, seed, cfg) for i, r in enumerate(records)]
    for index, result in enumerate(results):
        if isinstance(result, str):
            logger.warning("skipping record %d: %s", index, result)
            dataset.skipped.append((index, result))
        else:
            dataset.pairs.extend(result)
    return dataset


def _safe_pairs(record: DpoRecord, index: int, seed: int, cfg: CorruptionConfig) -> list[DpoPair] | str:
    report = validate_layout(record.layout)
    if report:
        return str(LayoutValidationError(report))
    try:
        return build_record_pairs(record, index, seed, cfg)
    except CorruptionError as exc:
        return str(exc)


def sft_line(prompt: str, completion: str) -> str:
    return json.dumps({"prompt": prompt, "completion": completion}, ensure_ascii=False)

"""Reasoning-chain training records, LLM provider bindings and the success-rate metric."""

from __future__ import annotations

import json
import logging
import os
import random
import re
import time
from collections import Counter
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from importlib import resources
from string import Template
from typing import Any, Iterable, Mapping, Protocol, Sequence

import httpx

from .corruption import extract_layout_text, render_completion
from .errors import ProviderUnavailable
from .graph import build_scene_graph, serialize_graph
from .layout import FormatError, FormatErrorKind, SceneLayout, TaskInfo, layout_to_dict, parse_layout, serialize_layout

logger = logging.getLogger(__name__)

CORE_HEADER = "Core Task Objects:"
ENVIRONMENT_HEADER = "Environment Objects:"


class ResponseParseError(ValueError):
    pass


class UnknownTaskObject(KeyError):
    pass


class EmptyInput(ValueError):
    pass


def load_template(name: str) -> Template:
    text = resources.files("tablescene").joinpath("prompts", f"{name}.txt").read_text(encoding="utf-8")
    return Template(text)


_INSTANCE_SUFFIX = re.compile(r"[-_ ]\d+$")


def object_type(object_id: str) -> str:
    """Instance id to object type: ``"Dinner Plates-0"`` -> ``"Dinner Plates"``."""
    return _INSTANCE_SUFFIX.sub("", object_id)


@dataclass(frozen=True)
class ReasoningRecord:
    task_info: TaskInfo
    core_objects: tuple[tuple[str, int], ...]
    environment_objects: tuple[tuple[str, int], ...]
    core_ids: tuple[str, ...]
    environment_ids: tuple[str, ...]
    relations: tuple[tuple[str, str, str], ...]
    graph_text: str
    layout_text: str
    # free text from the multimodal model, kept verbatim
    preamble: str = ""
    placement_reasoning: str = ""

    def reasoning_text(self) -> str:
        lines = []
        if self.preamble.strip():
            lines += [self.preamble.strip(), ""]
        lines.append(CORE_HEADER)
        lines += [f"- {t}: {n}" for t, n in self.core_objects]
        lines += ["", ENVIRONMENT_HEADER]
        lines += [f"- {t}: {n}" for t, n in self.environment_objects]
        if self.placement_reasoning.strip():
            lines += ["", self.placement_reasoning.strip()]
        return "\n".join(lines)

    def completion(self) -> str:
        return render_completion(self.reasoning_text(), self.graph_text, self.layout_text)


def _count_types(ids: Iterable[str]) -> tuple[tuple[str, int], ...]:
    return tuple(sorted(Counter(object_type(i) for i in ids).items()))


def build_reasoning_record(
    layout: SceneLayout,
    task_info: TaskInfo,
    task_relevant_ids: Sequence[str],
    *,
    preamble: str = "",
    placement_reasoning: str = "",
) -> ReasoningRecord:
    """Assemble the deterministic half of a reasoning-chain record.

    Layout objects sharing a type with any task-relevant id go to the core
    list, everything else to the environment list.
    """
    ids = set(layout.ids())
    for oid in task_relevant_ids:
        if oid not in ids:
            raise UnknownTaskObject(oid)
    core_types = {object_type(i) for i in task_relevant_ids}
    ordered = sorted(ids)
    core_ids = tuple(i for i in ordered if object_type(i) in core_types)
    env_ids = tuple(i for i in ordered if object_type(i) not in core_types)
    graph = build_scene_graph(layout)
    return ReasoningRecord(
        task_info=task_info,
        core_objects=_count_types(core_ids),
        environment_objects=_count_types(env_ids),
        core_ids=core_ids,
        environment_ids=env_ids,
        relations=tuple(e.as_triple() for e in graph.edges),
        graph_text=serialize_graph(graph),
        layout_text=serialize_layout(layout),
        preamble=preamble,
        placement_reasoning=placement_reasoning,
    )


def build_prompt(task_info: TaskInfo, layout: SceneLayout) -> str:
    """Instruction followed by the input fields the generator conditions on."""
    region = layout_to_dict(layout)
    inputs = {
        **task_info.to_dict(),
        "placement_region": region["placement_region"],
        "no_placement_zones": region["no_placement_zones"],
    }
    return (
        "Generate a tabletop scene layout for the task below.\n\n"
        f"Task: {task_info.task}\n\n"
        f"Input:\n{json.dumps(inputs, ensure_ascii=False, indent=2)}"
    )


# --------------------------------------------------------------------------
# LLM providers


@dataclass(frozen=True)
class LlmProviderConfig:
    kind: str = "stub"
    endpoint: str = ""
    model: str = "gpt-4o"
    timeout: float = 60.0
    retries: int = 3
    backoff: float = 1.0
    max_in_flight: int = 4
    templates: Mapping[str, str] = field(default_factory=dict)

    def __post_init__(self) -> None:
        if self.timeout <= 0:
            raise ValueError("timeout must be positive")
        if self.retries < 0:
            raise ValueError("retries must be non-negative")

    def template(self, name: str) -> Template:
        if name in self.templates:
            return Template(self.templates[name])
        return load_template(name)

    @classmethod
    def from_env(cls, base: LlmProviderConfig | None = None, env: Mapping[str, str] | None = None) -> LlmProviderConfig:
        """Overlay ``TABLESCENE_LLM_*`` environment variables on ``base``."""
        env = os.environ if env is None else env
        base = base or cls()
        return cls(
            kind=env.get("TABLESCENE_LLM_PROVIDER", base.kind),
            endpoint=env.get("TABLESCENE_LLM_ENDPOINT", base.endpoint),
            model=env.get("TABLESCENE_LLM_MODEL", base.model),
            timeout=float(env.get("TABLESCENE_LLM_TIMEOUT", base.timeout)),
            retries=int(env.get("TABLESCENE_LLM_RETRIES", base.retries)),
            backoff=base.backoff,
            max_in_flight=int(env.get("TABLESCENE_LLM_MAX_IN_FLIGHT", base.max_in_flight)),
            templates=base.templates,
        )


class LlmProvider(Protocol):
    config: LlmProviderConfig

    def complete(self, prompt: str) -> str: ...


_TASK_LINE = re.compile(r'^Task: "(.*)"\s*$', re.MULTILINE)


class StubLlmProvider:
    """Offline provider answering from canned responses keyed by instruction."""

    def __init__(self, fixtures: Mapping[str, Any], config: LlmProviderConfig | None = None):
        self.fixtures = dict(fixtures)
        self.config = config or LlmProviderConfig(kind="stub")
        self.prompts: list[str] = []

    def complete(self, prompt: str) -> str:
        self.prompts.append(prompt)
        matches = _TASK_LINE.findall(prompt)
        key = matches[-1] if matches else prompt
        if key not in self.fixtures:
            raise ProviderUnavailable(f"stub has no fixture for {key!r}")
        value = self.fixtures[key]
        return value if isinstance(value, str) else json.dumps(value, ensure_ascii=False)


class HttpLlmProvider:
    """POSTs ``{"model", "prompt"}`` and reads ``{"text"}``, retrying with jittered backoff."""

    def __init__(self, config: LlmProviderConfig, client: httpx.Client | None = None, sleep=time.sleep):
        if not config.endpoint:
            raise ProviderUnavailable("no LLM endpoint configured")
        self.config = config
        self._client = client
        self._sleep = sleep

    def complete(self, prompt: str) -> str:
        cfg = self.config
        last: Exception | None = None
        for attempt in range(cfg.retries + 1):
            try:
                post = self._client.post if self._client is not None else httpx.post
                resp = post(cfg.endpoint, json={"model": cfg.model, "prompt": prompt}, timeout=cfg.timeout)
                resp.raise_for_status()
                return str(resp.json()["text"])
            except (httpx.HTTPError, KeyError, TypeError, ValueError) as exc:
                last = exc
                if attempt < cfg.retries:
                    self._sleep(cfg.backoff * 2**attempt * random.uniform(0.5, 1.5))
        raise ProviderUnavailable(f"LLM provider failed after {cfg.retries + 1} attempts: {last}")


def make_llm_provider(config: LlmProviderConfig, fixtures: Mapping[str, Any] | None = None) -> LlmProvider:
    if config.kind == "stub":
        return StubLlmProvider(fixtures or {}, config)
    if config.kind == "http":
        return HttpLlmProvider(config)
    raise ProviderUnavailable(f"unknown provider kind {config.kind!r}")


_FENCE = re.compile(r"^```(?:json)?\s*|\s*```$")


def parse_task_info_response(text: str) -> TaskInfo:
    body = _FENCE.sub("", text.strip())
    try:
        data = json.loads(body)
    except json.JSONDecodeError as exc:
        raise ResponseParseError(f"response is not JSON: {exc}") from exc
    if not isinstance(data, dict):
        raise ResponseParseError("response must be a JSON object")
    try:
        return TaskInfo.from_dict(data)
    except KeyError as exc:
        raise ResponseParseError(f"missing field {exc.args[0]!r}") from exc
    except (TypeError, ValueError) as exc:
        raise ResponseParseError(str(exc)) from exc


def task_info_from_instruction(instruction: str, provider: LlmProvider) -> TaskInfo:
    prompt = provider.config.template("task_info").substitute(instruction=instruction)
    return parse_task_info_response(provider.complete(prompt))


def task_infos_from_instructions(instructions: Sequence[str], provider: LlmProvider) -> list[TaskInfo]:
    """Batch version; at most ``max_in_flight`` requests run at once, results keep input order."""
    with ThreadPoolExecutor(max_workers=max(1, provider.config.max_in_flight)) as pool:
        return list(pool.map(lambda i: task_info_from_instruction(i, provider), instructions))


def reasoning_prompt(task_info: TaskInfo, graph_text: str, config: LlmProviderConfig | None = None) -> str:
    config = config or LlmProviderConfig()
    return config.template("reasoning_context").substitute(
        task_goal_object=json.dumps(task_info.to_dict(), ensure_ascii=False, indent=4),
        scene_graph=graph_text,
    )


# --------------------------------------------------------------------------
# success rate


@dataclass(frozen=True)
class SuccessReport:
    n_total: int
    n_success: int
    failures: dict[str, int]

    @property
    def rate(self) -> float:
        return self.n_success / self.n_total

    def to_dict(self) -> dict[str, Any]:
        return {"n_total": self.n_total, "n_success": self.n_success, "rate": self.rate, "failures": self.failures}


def success_report(outputs: Sequence[str]) -> SuccessReport:
    """Counts outputs whose layout part parses, with failures broken down by error class."""
    if not outputs:
        raise EmptyInput("no outputs to score")
    failures = {k.value: 0 for k in FormatErrorKind}
    ok = 0
    for text in outputs:
        try:
            parse_layout(extract_layout_text(text))
        except FormatError as exc:
            failures[exc.kind.value] += 1
        else:
            ok += 1
    return SuccessReport(len(outputs), ok, failures)


def success_rate(outputs: Sequence[str]) -> float:
    return success_report(outputs).rate

"""Command-line batch workflows over line-delimited record files.

Exit codes: 0 success, 2 input error, 3 provider error. Data goes to the
output file (or stdout), diagnostics to stderr. Output files are written to a
temporary sibling and renamed into place, so a failed run leaves no partial file.

Option values resolve as: command-line flag, then ``TABLESCENE_<OPTION>``
environment variable, then the ``--config`` JSON file, then built-in default.
"""

from __future__ import annotations

import argparse
import dataclasses
import json
import logging
import os
import sys
import tempfile
from concurrent.futures import ProcessPoolExecutor
from pathlib import Path
from typing import Any, Callable, Iterable, Sequence

from . import __version__
from .collision import collision_pairs
from .corruption import (
    GRAPH_HEADER,
    LAYOUT_HEADER,
    CorruptionConfig,
    DpoRecord,
    build_dpo_dataset,
    extract_layout_text,
    sft_line,
)
from .errors import ProviderUnavailable
from .graph import GraphParseError, build_scene_graph, check_triples, parse_triples, serialize_graph
from .layout import (
    BoxSize,
    FormatError,
    LayoutValidationError,
    TaskInfo,
    layout_from_dict,
    parse_layout,
    validate_layout,
)
from .records import (
    LlmProviderConfig,
    ResponseParseError,
    UnknownTaskObject,
    build_prompt,
    build_reasoning_record,
    make_llm_provider,
    success_report,
    task_info_from_instruction,
)
from .relations import DEFAULT_Z_EPSILON
from .retrieval import (
    DEFAULT_ALPHA,
    DEFAULT_BETA,
    CatalogFormatError,
    EmptyCatalogError,
    HttpSimilarityProvider,
    JaccardProvider,
    RetrievalTarget,
    SentenceTransformerProvider,
    load_catalog,
    retrieve_top_k,
)

logger = logging.getLogger("tablescene")

EXIT_OK = 0
EXIT_INPUT = 2
EXIT_PROVIDER = 3

ENV_PREFIX = "TABLESCENE_"

# option -> (type, built-in default)
OPTION_DEFAULTS: dict[str, tuple[Callable[[str], Any], Any]] = {
    "seed": (int, 0),
    "alpha": (float, DEFAULT_ALPHA),
    "beta": (float, DEFAULT_BETA),
    "top_k": (int, 5),
    "z_epsilon": (float, DEFAULT_Z_EPSILON),
    "margin": (float, 0.0),
    "provider": (str, "stub"),
    "endpoint": (str, ""),
    "jobs": (int, 1),
}


class InputError(Exception):
    pass


# --------------------------------------------------------------------------
# file helpers


def read_lines(path: str) -> list[str]:
    try:
        if path == "-":
            return sys.stdin.read().splitlines()
        return Path(path).read_text(encoding="utf-8").splitlines()
    except OSError as exc:
        raise InputError(f"cannot read {path}: {exc}") from exc


def write_atomic(path: str | None, text: str) -> None:
    if path is None or path == "-":
        sys.stdout.write(text)
        sys.stdout.flush()
        return
    target = Path(path)
    target.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=target.parent, prefix=f".{target.name}.", suffix=".tmp")
    try:
        with os.fdopen(fd, "w", encoding="utf-8", newline="\n") as fh:
            fh.write(text)
        os.replace(tmp, target)
    except BaseException:
        Path(tmp).unlink(missing_ok=True)
        raise


def _json_lines(lines: Sequence[str], what: str) -> list[tuple[int, Any]]:
    """Parse nonblank lines as JSON; returns ``(line number, value)`` pairs."""
    out = []
    errors = []
    for lineno, line in enumerate(lines, 1):
        if not line.strip():
            continue
        try:
            out.append((lineno, json.loads(line)))
        except json.JSONDecodeError as exc:
            errors.append(f"line {lineno}: malformed {what}: {exc}")
    if errors:
        raise InputError("\n".join(errors))
    return out


def _pool_map(fn, items: list, jobs: int) -> list:
    if jobs <= 1 or len(items) < 2:
        return [fn(i) for i in items]
    with ProcessPoolExecutor(max_workers=jobs) as pool:
        return list(pool.map(fn, items, chunksize=max(1, len(items) // (jobs * 4))))


# --------------------------------------------------------------------------
# extract-graph


def _extract_one(item: tuple[int, str, float]) -> tuple[int, str | None, str | None]:
    lineno, line, z_eps = item
    try:
        layout = parse_layout(line)
        return lineno, serialize_graph(build_scene_graph(layout, z_eps)), None
    except (FormatError, LayoutValidationError) as exc:
        return lineno, None, str(exc)


def cmd_extract_graph(args: argparse.Namespace) -> int:
    lines = read_lines(args.input)
    items = [(n, line, args.z_epsilon) for n, line in enumerate(lines, 1) if line.strip()]
    if not items:
        raise InputError("no layouts in input")
    results = _pool_map(_extract_one, items, args.jobs)
    failures = [f"line {n}: {err}" for n, _, err in results if err]
    if failures:
        raise InputError("\n".join(failures))
    out = "".join(json.dumps({"line": n, "graph": g}, ensure_ascii=False) + "\n" for n, g, _ in results)
    write_atomic(args.output, out)
    logger.info("extracted %d graphs", len(results))
    return EXIT_OK


# --------------------------------------------------------------------------
# build-dpo / build-sft


def _layout_field(record: dict, lineno: int):
    if "layout" not in record:
        raise InputError(f"line {lineno}: missing 'layout'")
    raw = record["layout"]
    try:
        return parse_layout(raw) if isinstance(raw, str) else layout_from_dict(raw)
    except FormatError as exc:
        raise InputError(f"line {lineno}: {exc}") from exc


def _corruption_config(args: argparse.Namespace) -> CorruptionConfig:
    overrides = {}
    for name in ("select_prob", "pos_prob", "rot_prob", "size_prob", "max_pos_frac", "relation_flip_vs_remove"):
        value = getattr(args, name, None)
        if value is not None:
            overrides[name] = value
    try:
        return CorruptionConfig(**overrides)
    except ValueError as exc:
        raise InputError(f"bad corruption config: {exc}") from exc


def cmd_build_dpo(args: argparse.Namespace) -> int:
    cfg = _corruption_config(args)
    records = []
    for lineno, rec in _json_lines(read_lines(args.input), "record"):
        if not isinstance(rec, dict):
            raise InputError(f"line {lineno}: record must be an object")
        ids = rec.get("task_relevant_ids", [])
        records.append(
            DpoRecord(
                prompt=str(rec.get("prompt", "")),
                reasoning=str(rec.get("reasoning", "")),
                layout=_layout_field(rec, lineno),
                task_relevant_ids=tuple(ids),
            )
        )
    if not records:
        raise InputError("no records in input")
    dataset = build_dpo_dataset(records, args.seed, cfg, workers=args.jobs)
    for index, reason in dataset.skipped:
        logger.warning("record %d skipped: %s", index + 1, reason)
    write_atomic(args.output, dataset.to_jsonl())
    hist = dataset.tag_histogram()
    print(
        f"{len(dataset)} pairs from {len(records) - len(dataset.skipped)} records; tags: "
        + ", ".join(f"{k}={v}" for k, v in hist.items()),
        file=sys.stderr,
    )
    return EXIT_OK


def cmd_build_sft(args: argparse.Namespace) -> int:
    out = []
    for lineno, rec in _json_lines(read_lines(args.input), "record"):
        if not isinstance(rec, dict) or "task_info" not in rec:
            raise InputError(f"line {lineno}: record needs 'layout' and 'task_info'")
        layout = _layout_field(rec, lineno)
        try:
            task_info = TaskInfo.from_dict(rec["task_info"])
            record = build_reasoning_record(
                layout,
                task_info,
                rec.get("task_relevant_ids", []),
                preamble=rec.get("preamble", ""),
                placement_reasoning=rec.get("placement_reasoning", ""),
            )
        except (KeyError, TypeError, ValueError, UnknownTaskObject) as exc:
            raise InputError(f"line {lineno}: {exc}") from exc
        out.append(sft_line(build_prompt(task_info, layout), record.completion()) + "\n")
    if not out:
        raise InputError("no records in input")
    write_atomic(args.output, "".join(out))
    return EXIT_OK


# --------------------------------------------------------------------------
# eval


def _eval_item(value: Any) -> tuple[str, str | None]:
    """(output text, scene graph text or None) from one eval input line."""
    if isinstance(value, str):
        return value, _graph_section(value)
    if isinstance(value, dict):
        if "output" in value:
            text = str(value["output"])
            return text, value.get("scene_graph") or _graph_section(text)
        if "layout" in value:
            raw = value["layout"]
            return (raw if isinstance(raw, str) else json.dumps(raw)), value.get("scene_graph")
        return json.dumps(value), None
    return json.dumps(value), None


def _graph_section(text: str) -> str | None:
    start = text.find(f"{GRAPH_HEADER}\n")
    if start < 0:
        return None
    start += len(GRAPH_HEADER) + 1
    end = text.find(f"\n\n{LAYOUT_HEADER}", start)
    return text[start:] if end < 0 else text[start:end]


def _eval_one(item: tuple[int, str, str | None, float, float]) -> dict:
    lineno, text, graph_text, margin, z_eps = item
    row: dict[str, Any] = {"line": lineno, "success": False, "error": None, "collision": None, "relations": None}
    try:
        layout = parse_layout(extract_layout_text(text))
    except FormatError as exc:
        row["error"] = exc.kind.value
        return row
    row["success"] = True
    row["n_objects"] = len(layout.objects)
    row["violations"] = [f"{v.kind.value}({v.object_id})" for v in validate_layout(layout).violations]
    if all(o.size.is_positive() for o in layout.objects):
        row["collision"] = collision_pairs(layout, margin).to_dict()
    if graph_text:
        try:
            holding, total = check_triples(layout, parse_triples(graph_text), z_eps)
            row["relations"] = {"holding": holding, "total": total}
        except GraphParseError as exc:
            row["relations"] = {"error": str(exc)}
    return row


def evaluate_outputs(items: list[tuple[int, str, str | None]], margin: float, z_eps: float, jobs: int = 1) -> dict:
    rows = _pool_map(_eval_one, [(n, t, g, margin, z_eps) for n, t, g in items], jobs)
    report = success_report([t for _, t, _ in items])
    rates = [r["collision"]["rate"] for r in rows if r["collision"]]
    colliding = sum(len(r["collision"]["colliding_pairs"]) for r in rows if r["collision"])
    candidates = sum(r["collision"]["n_total"] for r in rows if r["collision"])
    rel = [r["relations"] for r in rows if r["relations"] and "holding" in r["relations"]]
    return {
        "aggregate": {
            "n_outputs": report.n_total,
            "success_rate": report.rate,
            "failures": report.failures,
            "collision_rate_mean": sum(rates) / len(rates) if rates else 0.0,
            "collision_rate_pooled": colliding / candidates if candidates else 0.0,
            "relations_holding": sum(r["holding"] for r in rel),
            "relations_total": sum(r["total"] for r in rel),
        },
        "per_layout": rows,
    }


def _eval_table(result: dict) -> str:
    lines = [f"{'line':>5}  {'ok':<3} {'objects':>7} {'collision':>9} {'relations':>11}  error"]
    for r in result["per_layout"]:
        coll = f"{r['collision']['rate']:.3f}" if r["collision"] else "-"
        rel = r["relations"]
        rel_s = f"{rel['holding']}/{rel['total']}" if rel and "holding" in rel else "-"
        lines.append(
            f"{r['line']:>5}  {'yes' if r['success'] else 'no':<3} {r.get('n_objects', '-')!s:>7} "
            f"{coll:>9} {rel_s:>11}  {r['error'] or ''}"
        )
    agg = result["aggregate"]
    lines.append("")
    lines.append(f"success rate          {agg['success_rate']:.4f} ({agg['n_outputs']} outputs)")
    lines.append(f"collision rate (mean) {agg['collision_rate_mean']:.4f}")
    lines.append(f"collision rate (pool) {agg['collision_rate_pooled']:.4f}")
    lines.append(f"relations holding     {agg['relations_holding']}/{agg['relations_total']}")
    return "\n".join(lines) + "\n"


def cmd_eval(args: argparse.Namespace) -> int:
    lines = read_lines(args.input)
    items = []
    for lineno, line in enumerate(lines, 1):
        if not line.strip():
            continue
        try:
            value = json.loads(line)
        except json.JSONDecodeError:
            value = line
        text, graph = _eval_item(value)
        items.append((lineno, text, graph))
    if not items:
        raise InputError("no outputs to evaluate")
    result = evaluate_outputs(items, args.margin, args.z_epsilon, args.jobs)
    if args.format == "table":
        write_atomic(args.output, _eval_table(result))
    else:
        write_atomic(args.output, json.dumps(result, ensure_ascii=False, indent=2) + "\n")
    return EXIT_OK


# --------------------------------------------------------------------------
# retrieve


def _similarity_provider(args: argparse.Namespace):
    if args.provider == "stub":
        return JaccardProvider()
    if args.provider == "http":
        if not args.endpoint:
            raise ProviderUnavailable("--endpoint is required with --provider http")
        return HttpSimilarityProvider(args.endpoint)
    if args.provider == "sbert":
        return SentenceTransformerProvider()
    raise InputError(f"unknown provider {args.provider!r}")


def cmd_retrieve(args: argparse.Namespace) -> int:
    try:
        catalog = load_catalog(read_lines(args.catalog))
    except CatalogFormatError as exc:
        raise InputError(f"{args.catalog}: {exc}") from exc
    provider = _similarity_provider(args)
    out = []
    for lineno, raw in _json_lines(read_lines(args.targets), "target"):
        try:
            dims = raw["dims"]
            target = RetrievalTarget(str(raw["description"]), BoxSize(float(dims["w"]), float(dims["d"]), float(dims["h"])))
        except (KeyError, TypeError, ValueError) as exc:
            raise InputError(f"{args.targets} line {lineno}: bad target: {exc}") from exc
        try:
            results = retrieve_top_k(
                catalog,
                target,
                args.top_k,
                on_table=True if args.on_table_only else None,
                category=args.category,
                alpha=args.alpha,
                beta=args.beta,
                provider=provider,
            )
        except EmptyCatalogError as exc:
            raise InputError(str(exc)) from exc
        out.append(
            json.dumps(
                {"target": raw.get("id", lineno), "results": [r.to_dict() for r in results]},
                ensure_ascii=False,
            )
            + "\n"
        )
    write_atomic(args.output, "".join(out))
    return EXIT_OK


# --------------------------------------------------------------------------
# task-info


def cmd_task_info(args: argparse.Namespace) -> int:
    fixtures = {}
    if args.fixtures:
        try:
            fixtures = json.loads(Path(args.fixtures).read_text(encoding="utf-8"))
        except (OSError, json.JSONDecodeError) as exc:
            raise InputError(f"cannot load fixtures: {exc}") from exc
    config = LlmProviderConfig.from_env()
    config = dataclasses.replace(config, kind=args.provider, endpoint=args.endpoint or config.endpoint)
    provider = make_llm_provider(config, fixtures)
    out = []
    for instruction in args.instruction:
        try:
            info = task_info_from_instruction(instruction, provider)
        except ResponseParseError as exc:
            raise ProviderUnavailable(f"unusable response for {instruction!r}: {exc}") from exc
        out.append(json.dumps(info.to_dict(), ensure_ascii=False) + "\n")
    write_atomic(args.output, "".join(out))
    return EXIT_OK


# --------------------------------------------------------------------------
# parser


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="tablescene", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=__version__)
    parser.add_argument("--config", help="JSON file with option defaults")
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p: argparse.ArgumentParser) -> None:
        p.add_argument("-o", "--output", help="output file (default: stdout)")
        p.add_argument("--jobs", type=int, help="worker processes (default 1)")

    p = sub.add_parser("extract-graph", help="scene graph text for every layout")
    p.add_argument("input")
    p.add_argument("--z-epsilon", type=float)
    common(p)
    p.set_defaults(func=cmd_extract_graph)

    p = sub.add_parser("build-dpo", help="preference pairs by corrupting layouts")
    p.add_argument("input")
    p.add_argument("--seed", type=int)
    for flag in ("select-prob", "pos-prob", "rot-prob", "size-prob", "max-pos-frac", "relation-flip-vs-remove"):
        p.add_argument(f"--{flag}", type=float)
    common(p)
    p.set_defaults(func=cmd_build_dpo)

    p = sub.add_parser("build-sft", help="reasoning-chain training records")
    p.add_argument("input")
    common(p)
    p.set_defaults(func=cmd_build_sft)

    p = sub.add_parser("eval", help="success rate, collision rate and relation consistency")
    p.add_argument("input")
    p.add_argument("--margin", type=float)
    p.add_argument("--z-epsilon", type=float)
    p.add_argument("--format", choices=("json", "table"), default="json")
    common(p)
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("retrieve", help="top-k catalog assets per target")
    p.add_argument("catalog")
    p.add_argument("targets")
    p.add_argument("--top-k", type=int)
    p.add_argument("--alpha", type=float)
    p.add_argument("--beta", type=float)
    p.add_argument("--on-table-only", action="store_true")
    p.add_argument("--category")
    p.add_argument("--provider", choices=("stub", "http", "sbert"))
    p.add_argument("--endpoint")
    common(p)
    p.set_defaults(func=cmd_retrieve)

    p = sub.add_parser("task-info", help="expand instructions into task info via the LLM provider")
    p.add_argument("instruction", nargs="+")
    p.add_argument("--provider", choices=("stub", "http"))
    p.add_argument("--endpoint")
    p.add_argument("--fixtures", help="JSON map instruction -> canned response (stub provider)")
    common(p)
    p.set_defaults(func=cmd_task_info)
    return parser


def _resolve_options(args: argparse.Namespace, env: dict[str, str]) -> None:
    config: dict[str, Any] = {}
    if args.config:
        try:
            config = json.loads(Path(args.config).read_text(encoding="utf-8"))
        except (OSError, json.JSONDecodeError) as exc:
            raise InputError(f"cannot read config {args.config}: {exc}") from exc
    for name, (kind, default) in OPTION_DEFAULTS.items():
        if getattr(args, name, "absent") is not None:
            continue
        env_value = env.get(ENV_PREFIX + name.upper())
        try:
            if env_value is not None:
                value = kind(env_value)
            elif name in config:
                value = kind(config[name])
            else:
                value = default
        except ValueError as exc:
            raise InputError(f"bad value for {name}: {exc}") from exc
        setattr(args, name, value)


def main(argv: Iterable[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(None if argv is None else list(argv))
    logging.basicConfig(
        level=logging.INFO if args.verbose else logging.WARNING,
        format="%(levelname)s %(name)s: %(message)s",
        stream=sys.stderr,
    )
    try:
        _resolve_options(args, dict(os.environ))
        return args.func(args)
    except InputError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INPUT
    except ProviderUnavailable as exc:
        print(f"provider error: {exc}", file=sys.stderr)
        return EXIT_PROVIDER


if __name__ == "__main__":
    sys.exit(main())

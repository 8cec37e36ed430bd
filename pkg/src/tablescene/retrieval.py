"""Asset catalog, retrieval scoring and isometric scaling.

The retrieval score of an asset for a target is ``alpha * T + beta * S`` where
``T`` is a text similarity supplied by a provider and ``S`` the cosine of the
two size vectors. Providers:

* :class:`JaccardProvider`: lowercase token-set Jaccard, deterministic and offline;
* :class:`HttpSimilarityProvider`: POSTs ``{"text_a", "text_b"}`` and reads
  ``{"similarity"}`` back;
* :class:`SentenceTransformerProvider`: local sentence-embedding cosine.

:func:`provider_from_env` picks one from ``TABLESCENE_SIMILARITY_PROVIDER``
(``jaccard``/``http``/``sbert``) and ``TABLESCENE_SIMILARITY_ENDPOINT``.
"""

from __future__ import annotations

import json
import math
import os
import re
from dataclasses import dataclass, field
from typing import Any, Iterable, Protocol, Sequence

import httpx

from .errors import ProviderUnavailable
from .layout import BoxSize

DEFAULT_ALPHA = 0.9
DEFAULT_BETA = 0.1


class EmptyCatalogError(ValueError):
    pass


class CatalogFormatError(ValueError):
    pass


class TextSimilarityProvider(Protocol):
    def similarity(self, text_a: str, text_b: str) -> float: ...


_TOKEN = re.compile(r"\w+")


class JaccardProvider:
    """Token-set Jaccard index; safe for concurrent use."""

    def similarity(self, text_a: str, text_b: str) -> float:
        a = set(_TOKEN.findall(text_a.lower()))
        b = set(_TOKEN.findall(text_b.lower()))
        if not a and not b:
            return 1.0 if text_a == text_b else 0.0
        return len(a & b) / len(a | b)


class HttpSimilarityProvider:
    def __init__(self, endpoint: str, timeout: float = 10.0, client: httpx.Client | None = None):
        self.endpoint = endpoint
        self.timeout = timeout
        self._client = client

    def similarity(self, text_a: str, text_b: str) -> float:
        payload = {"text_a": text_a, "text_b": text_b}
        try:
            if self._client is not None:
                resp = self._client.post(self.endpoint, json=payload, timeout=self.timeout)
            else:
                resp = httpx.post(self.endpoint, json=payload, timeout=self.timeout)
            resp.raise_for_status()
            value = float(resp.json()["similarity"])
        except (httpx.HTTPError, KeyError, TypeError, ValueError) as exc:
            raise ProviderUnavailable(f"similarity service failed: {exc}") from exc
        if not math.isfinite(value):
            raise ProviderUnavailable("similarity service returned a non-finite value")
        return value


class SentenceTransformerProvider:
    """Cosine of sentence embeddings; the model loads lazily on first use."""

    def __init__(self, model_name: str = "all-mpnet-base-v2"):
        self.model_name = model_name
        self._model = None
        self._cache: dict[str, Any] = {}

    def _embed(self, text: str):
        if self._model is None:
            try:
                from sentence_transformers import SentenceTransformer

                self._model = SentenceTransformer(self.model_name)
            except Exception as exc:  # import errors, download failures
                raise ProviderUnavailable(f"cannot load {self.model_name}: {exc}") from exc
        if text not in self._cache:
            self._cache[text] = self._model.encode(text, normalize_embeddings=True)
        return self._cache[text]

    def similarity(self, text_a: str, text_b: str) -> float:
        return float(sum(x * y for x, y in zip(self._embed(text_a), self._embed(text_b))))


def provider_from_env(env: dict[str, str] | None = None) -> TextSimilarityProvider:
    env = os.environ if env is None else env
    kind = env.get("TABLESCENE_SIMILARITY_PROVIDER", "jaccard").lower()
    if kind == "jaccard":
        return JaccardProvider()
    if kind == "http":
        endpoint = env.get("TABLESCENE_SIMILARITY_ENDPOINT")
        if not endpoint:
            raise ProviderUnavailable("TABLESCENE_SIMILARITY_ENDPOINT is not set")
        return HttpSimilarityProvider(endpoint)
    if kind == "sbert":
        return SentenceTransformerProvider(env.get("TABLESCENE_SBERT_MODEL", "all-mpnet-base-v2"))
    raise ProviderUnavailable(f"unknown similarity provider {kind!r}")


def _clamp01(value: float) -> float:
    return min(1.0, max(0.0, value))


def text_similarity(text: str, text_target: str, provider: TextSimilarityProvider | None = None) -> float:
    provider = provider or JaccardProvider()
    return _clamp01(provider.similarity(text, text_target))


def size_similarity(dims: BoxSize, dims_target: BoxSize) -> float:
    a, b = dims.as_tuple(), dims_target.as_tuple()
    dot = sum(x * y for x, y in zip(a, b))
    return dot / (math.sqrt(sum(x * x for x in a)) * math.sqrt(sum(y * y for y in b)))


@dataclass(frozen=True)
class AssetEntry:
    asset_id: str
    category: str
    description: str
    dims: BoxSize
    on_table: bool = True
    mass: float = 0.0
    front_view: int = 0
    is_container: bool = False
    material: str = ""
    extra: dict[str, Any] = field(default_factory=dict, compare=False, hash=False)

    _KNOWN = (
        "asset_id",
        "category",
        "description",
        "dims",
        "on_table",
        "mass",
        "front_view",
        "is_container",
        "material",
    )

    @classmethod
    def from_dict(cls, data: dict[str, Any]) -> AssetEntry:
        try:
            dims = data["dims"]
            entry = cls(
                asset_id=str(data["asset_id"]),
                category=str(data["category"]),
                description=str(data["description"]),
                dims=BoxSize(float(dims["w"]), float(dims["d"]), float(dims["h"])),
                on_table=bool(data.get("on_table", True)),
                mass=float(data.get("mass", 0.0)),
                front_view=int(data.get("front_view", 0)),
                is_container=bool(data.get("is_container", False)),
                material=str(data.get("material", "")),
                extra={k: v for k, v in data.items() if k not in cls._KNOWN},
            )
        except (KeyError, TypeError, ValueError) as exc:
            raise CatalogFormatError(f"bad catalog entry: {exc}") from exc
        if not entry.dims.is_positive():
            raise CatalogFormatError(f"{entry.asset_id}: dims must be positive")
        return entry

    def to_dict(self) -> dict[str, Any]:
        out = {
            "asset_id": self.asset_id,
            "category": self.category,
            "description": self.description,
            "dims": {"w": self.dims.w, "d": self.dims.d, "h": self.dims.h},
            "on_table": self.on_table,
            "mass": self.mass,
            "front_view": self.front_view,
            "is_container": self.is_container,
            "material": self.material,
        }
        out.update(self.extra)
        return out


def load_catalog(lines: Iterable[str]) -> list[AssetEntry]:
    """Read a line-delimited catalog; blank lines are ignored, ids must be unique."""
    catalog = []
    seen = set()
    for lineno, line in enumerate(lines, 1):
        if not line.strip():
            continue
        try:
            entry = AssetEntry.from_dict(json.loads(line))
        except json.JSONDecodeError as exc:
            raise CatalogFormatError(f"line {lineno}: {exc}") from exc
        except CatalogFormatError as exc:
            raise CatalogFormatError(f"line {lineno}: {exc}") from exc
        if entry.asset_id in seen:
            raise CatalogFormatError(f"line {lineno}: duplicate asset_id {entry.asset_id!r}")
        seen.add(entry.asset_id)
        catalog.append(entry)
    return catalog


def dump_catalog(catalog: Iterable[AssetEntry]) -> str:
    return "".join(json.dumps(a.to_dict(), ensure_ascii=False) + "\n" for a in catalog)


@dataclass(frozen=True)
class RetrievalTarget:
    description: str
    dims: BoxSize

    def __post_init__(self) -> None:
        if not self.dims.is_positive():
            raise ValueError("target dims must be positive")


@dataclass(frozen=True)
class ScoredAsset:
    asset_id: str
    text_sim: float
    size_sim: float
    score: float

    def to_dict(self) -> dict[str, Any]:
        return {"asset_id": self.asset_id, "text_sim": self.text_sim, "size_sim": self.size_sim, "score": self.score}


def score(
    asset: AssetEntry,
    target: RetrievalTarget,
    alpha: float = DEFAULT_ALPHA,
    beta: float = DEFAULT_BETA,
    provider: TextSimilarityProvider | None = None,
) -> ScoredAsset:
    if alpha < 0 or beta < 0:
        raise ValueError("alpha and beta must be non-negative")
    t = text_similarity(asset.description, target.description, provider)
    s = size_similarity(asset.dims, target.dims)
    return ScoredAsset(asset.asset_id, t, s, alpha * t + beta * s)


def retrieve_top_k(
    catalog: Sequence[AssetEntry],
    target: RetrievalTarget,
    k: int = 1,
    *,
    on_table: bool | None = None,
    category: str | None = None,
    alpha: float = DEFAULT_ALPHA,
    beta: float = DEFAULT_BETA,
    provider: TextSimilarityProvider | None = None,
) -> list[ScoredAsset]:
    """Best ``k`` assets by score, ties broken by ascending asset id."""
    if k < 1:
        raise ValueError("k must be at least 1")
    pool = [
        a
        for a in catalog
        if (on_table is None or a.on_table == on_table) and (category is None or a.category == category)
    ]
    if not pool:
        raise EmptyCatalogError("no assets left after filtering")
    provider = provider or JaccardProvider()
    scored = [score(a, target, alpha, beta, provider) for a in pool]
    scored.sort(key=lambda s: (-s.score, s.asset_id))
    return scored[:k]


_AXES = ("w", "d", "h")


def isometric_scale(asset_dims: BoxSize, target_dims: BoxSize) -> tuple[float, BoxSize]:
    """Uniform scale matching the asset's shortest axis to the target on that axis.

    Ties for the shortest axis resolve in the order w, d, h.
    """
    if not asset_dims.is_positive() or not target_dims.is_positive():
        raise ValueError("dimensions must be positive")
    dims = asset_dims.as_tuple()
    axis = min(range(3), key=lambda i: (dims[i], i))
    s = target_dims.as_tuple()[axis] / dims[axis]
    return s, asset_dims.scaled(s)

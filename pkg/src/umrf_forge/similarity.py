"""Prompt-to-corpus embedding similarity and its correlation with scores."""
from __future__ import annotations

import hashlib
import json
import math
import re
import threading
from dataclasses import dataclass
from pathlib import Path
from typing import Protocol, Sequence

import httpx

from umrf_forge.provider import ProviderConfig, ProviderConfigError, ProviderError

HASH_DIM = 384
_TOKEN_RE = re.compile(r"\w+")


class EmptyTextError(ValueError):
    pass


class UndefinedCorrelationError(ValueError):
    pass


@dataclass(frozen=True)
class EmbeddingVector:
    values: tuple[float, ...]
    provider_id: str = ""

    def __post_init__(self) -> None:
        object.__setattr__(self, "values", tuple(float(v) for v in self.values))
        if not self.values:
            raise ValueError("embedding must have positive dimension")
        if not all(math.isfinite(v) for v in self.values):
            raise ValueError("embedding values must be finite")

    @property
    def dim(self) -> int:
        return len(self.values)

    def norm(self) -> float:
        return math.sqrt(math.fsum(v * v for v in self.values))


@dataclass(frozen=True)
class SimilarityRecord:
    prompt_index: int
    max_similarity: float
    mean_similarity: float
    score: float


class Embedder(Protocol):
    provider_id: str

    def embed(self, text: str) -> EmbeddingVector: ...


def hash_bucket(token: str, dim: int = HASH_DIM) -> int:
    digest = hashlib.blake2b(token.encode("utf-8"), digest_size=8).digest()
    return int.from_bytes(digest, "big") % dim


def hash_tokens(text: str) -> list[str]:
    return [t.lower() for t in _TOKEN_RE.findall(text)]


class HashingEmbedder:
    """Offline bag-of-words embedder.

    Lower-cased ``\\w+`` tokens are counted into ``dim`` buckets chosen by an
    8-byte BLAKE2b hash, then the count vector is scaled to unit length.
    """

    def __init__(self, dim: int = HASH_DIM):
        self.dim = dim
        self.provider_id = f"hashing-bow-{dim}"

    def embed(self, text: str) -> EmbeddingVector:
        tokens = hash_tokens(text)
        if not tokens:
            raise EmptyTextError("text has no tokens to embed")
        counts = [0.0] * self.dim
        for t in tokens:
            counts[hash_bucket(t, self.dim)] += 1.0
        norm = math.sqrt(math.fsum(c * c for c in counts))
        return EmbeddingVector(tuple(c / norm for c in counts), self.provider_id)


class HttpEmbedder:
    """Remote embeddings endpoint (``POST {base_url}/embeddings``).

    Shares :class:`ProviderConfig` with the completion client; results are
    memoized on disk under ``cache_dir`` when given.
    """

    def __init__(self, cfg: ProviderConfig, model_id: str, cache_dir: str | Path | None = None,
                 client: httpx.Client | None = None):
        if not cfg.credential:
            raise ProviderConfigError("no API credential for embeddings")
        self.cfg = cfg
        self.model_id = model_id
        self.provider_id = f"http:{model_id}"
        self.cache_dir = Path(cache_dir) if cache_dir else None
        self._client = client or httpx.Client(timeout=cfg.timeout)
        self._lock = threading.Lock()

    def embed(self, text: str) -> EmbeddingVector:
        if not text.strip():
            raise EmptyTextError("text has no tokens to embed")
        key = hashlib.sha256(json.dumps([self.model_id, text]).encode()).hexdigest()
        path = self.cache_dir / f"emb-{key}.json" if self.cache_dir else None
        if path is not None and path.exists():
            return EmbeddingVector(tuple(json.loads(path.read_text())), self.provider_id)
        resp = self._client.post(
            self.cfg.base_url.rstrip("/") + "/embeddings",
            json={"model": self.model_id, "input": text},
            headers={"Authorization": f"Bearer {self.cfg.credential}"},
        )
        if resp.status_code != 200:
            raise ProviderError(f"embedding request failed: HTTP {resp.status_code}: {resp.text[:200]}")
        values = resp.json()["data"][0]["embedding"]
        if path is not None:
            with self._lock:
                self.cache_dir.mkdir(parents=True, exist_ok=True)
                path.write_text(json.dumps(values))
        return EmbeddingVector(tuple(values), self.provider_id)


def embed(text: str, provider: Embedder | None = None) -> EmbeddingVector:
    return (provider or HashingEmbedder()).embed(text)


def cosine(u: EmbeddingVector, v: EmbeddingVector) -> float:
    if u.dim != v.dim:
        raise ValueError(f"dimension mismatch: {u.dim} vs {v.dim}")
    nu, nv = u.norm(), v.norm()
    if nu == 0 or nv == 0:
        raise ValueError("cosine is undefined for a zero vector")
    c = math.fsum(a * b for a, b in zip(u.values, v.values)) / (nu * nv)
    return max(-1.0, min(1.0, c))


def pearson(xs: Sequence[float], ys: Sequence[float]) -> float:
    """Sample Pearson correlation coefficient."""
    if len(xs) != len(ys):
        raise ValueError("series lengths differ")
    if len(xs) < 3:
        raise ValueError("need at least 3 paired observations")
    n = len(xs)
    mx, my = math.fsum(xs) / n, math.fsum(ys) / n
    dx = [x - mx for x in xs]
    dy = [y - my for y in ys]
    sxx = math.fsum(d * d for d in dx)
    syy = math.fsum(d * d for d in dy)
    if sxx == 0 or syy == 0:
        raise UndefinedCorrelationError("correlation undefined for a constant series")
    r = math.fsum(a * b for a, b in zip(dx, dy)) / math.sqrt(sxx * syy)
    return max(-1.0, min(1.0, r))


def similarity_report(
    prompts: Sequence[tuple[str, float]],
    corpus: Sequence[str],
    provider: Embedder | None = None,
) -> list[SimilarityRecord]:
    if not corpus:
        raise ValueError("corpus must be non-empty")
    provider = provider or HashingEmbedder()
    corpus_vecs = [provider.embed(doc) for doc in corpus]
    out = []
    for i, (text, score) in enumerate(prompts):
        v = provider.embed(text)
        sims = [cosine(v, c) for c in corpus_vecs]
        mean = math.fsum(sims) / len(sims)
        out.append(SimilarityRecord(i, max(sims), min(mean, max(sims)), score))
    return out


def correlation_summary(records: Sequence[SimilarityRecord]) -> dict:
    scores = [r.score for r in records]
    summary: dict = {"n_prompts": len(records)}
    for name in ("max", "mean"):
        sims = [getattr(r, f"{name}_similarity") for r in records]
        try:
            summary[f"pearson_r_{name}"] = pearson(sims, scores)
        except ValueError as exc:
            summary[f"pearson_r_{name}"] = None
            summary[f"pearson_note_{name}"] = str(exc)
    return summary


def load_corpus(path: str | Path) -> list[str]:
    return [line.strip() for line in Path(path).read_text(encoding="utf-8").splitlines() if line.strip()]

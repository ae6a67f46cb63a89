"""EDA-style word perturbations and the prompt fragility sweep.

Words are whitespace-separated, except that pose markers such as
``[x=1; y=2; yaw=3]`` count as a single word and are never edited internally.

For magnitude m > 0 the synonym, insertion and swap operations touch
``n = max(1, round(m * word_count))`` words (halves round up); deletion drops
each word independently with probability m and always keeps at least one.
Magnitude 0 leaves the text unchanged for every operation.
"""
from __future__ import annotations

import hashlib
import itertools
import json
import math
import random
import re
import warnings
from dataclasses import dataclass
from functools import lru_cache
from pathlib import Path
from typing import Sequence

from umrf_forge import data_path
from umrf_forge.grammar import MARKER_PATTERN
from umrf_forge.prompt import PromptSpec, render_examples
from umrf_forge.provider import CompletionProvider
from umrf_forge.search import ValidationItem, evaluate_prompt

KINDS = ("synonym_replacement", "random_insertion", "random_swap", "random_deletion")
DEFAULT_MAGNITUDES = (0.05, 0.1, 0.2, 0.4)
COMPOSITIONAL_MAGNITUDE_CAP = 0.1
SWEEP_COLUMNS = ("kind", "magnitude", "trial", "policy_digest", "avg_bleu")

_WORD_RE = re.compile(rf"{MARKER_PATTERN}|\S+")
_MARKER_RE = re.compile(MARKER_PATTERN)
_EDGE_PUNCT = ".,!?;:\"'()"


class AugmentationConfigError(ValueError):
    pass


class MagnitudeCapWarning(UserWarning):
    pass


@dataclass(frozen=True)
class AugmentationOp:
    kind: str
    magnitude: float

    def __post_init__(self) -> None:
        if self.kind not in KINDS:
            raise ValueError(f"unknown augmentation kind {self.kind!r}")
        if not 0.0 <= self.magnitude <= 1.0:
            raise ValueError("magnitude must be within [0, 1]")


@dataclass(frozen=True)
class AugmentationPolicy:
    ops: tuple[AugmentationOp, ...]
    seed: int = 0

    def __post_init__(self) -> None:
        object.__setattr__(self, "ops", tuple(self.ops))
        if not self.ops:
            raise ValueError("policy needs at least one op")
        if len(self.ops) > 1 and any(op.magnitude >= COMPOSITIONAL_MAGNITUDE_CAP for op in self.ops):
            warnings.warn(
                f"compositional policy with magnitude >= {COMPOSITIONAL_MAGNITUDE_CAP}",
                MagnitudeCapWarning,
                stacklevel=3,
            )

    @property
    def kind(self) -> str:
        return "+".join(op.kind for op in self.ops)

    @property
    def magnitude(self) -> str:
        return "+".join(repr(op.magnitude) for op in self.ops)

    def digest(self) -> str:
        payload = json.dumps([[op.kind, op.magnitude] for op in self.ops] + [self.seed])
        return hashlib.sha256(payload.encode()).hexdigest()[:16]


@dataclass(frozen=True)
class FragilityRecord:
    policy: AugmentationPolicy
    trial: int
    perturbed_prompt_digest: str
    average_bleu: float


# --------------------------------------------------------------------------
# lexicon and stopwords


class Lexicon:
    """Word or phrase -> synonyms, looked up case-insensitively."""

    def __init__(self, entries: dict[str, Sequence[str]] | None = None):
        self.entries: dict[tuple[str, ...], tuple[str, ...]] = {}
        for key, syns in (entries or {}).items():
            syns = tuple(s.strip() for s in syns if s.strip())
            if syns:
                self.entries[tuple(key.lower().split())] = syns
        self.max_len = max((len(k) for k in self.entries), default=0)

    def __len__(self) -> int:
        return len(self.entries)

    def synonyms(self, phrase: Sequence[str]) -> tuple[str, ...]:
        return self.entries.get(tuple(w.lower() for w in phrase), ())

    @classmethod
    def load(cls, path: str | Path) -> "Lexicon":
        entries = {}
        for line in Path(path).read_text(encoding="utf-8").splitlines():
            if not line.strip() or line.startswith("#"):
                continue
            word, _, syns = line.partition("\t")
            entries[word.strip()] = syns.split(",")
        return cls(entries)


@lru_cache(maxsize=None)
def default_lexicon() -> Lexicon:
    return Lexicon.load(data_path("lexicon.tsv"))


@lru_cache(maxsize=None)
def default_stopwords() -> frozenset[str]:
    return frozenset(data_path("stopwords.txt").read_text(encoding="utf-8").split())


# --------------------------------------------------------------------------
# single operations


def split_words(text: str) -> list[str]:
    return [m.group(0) for m in _WORD_RE.finditer(text)]


def _is_marker(word: str) -> bool:
    return _MARKER_RE.fullmatch(word) is not None


def _core(word: str) -> str:
    return word.strip(_EDGE_PUNCT).lower()


def _count(magnitude: float, n_words: int) -> int:
    if magnitude == 0:
        return 0
    return max(1, int(math.floor(magnitude * n_words + 0.5)))


def _phrase_spans(words: list[str], lexicon: Lexicon, stopwords: frozenset[str]) -> list[tuple[int, int]]:
    """Non-overlapping (start, end) spans with lexicon entries, longest first."""
    spans = []
    i = 0
    while i < len(words):
        found = None
        for n in range(min(lexicon.max_len, len(words) - i), 0, -1):
            chunk = words[i : i + n]
            if any(_is_marker(w) for w in chunk):
                continue
            cores = [_core(w) for w in chunk]
            if n == 1 and cores[0] in stopwords:
                continue
            if lexicon.synonyms(cores):
                found = (i, i + n)
                break
        if found:
            spans.append(found)
            i = found[1]
        else:
            i += 1
    return spans


def synonym_replacement(words, n, rng, lexicon, stopwords):
    spans = _phrase_spans(words, lexicon, stopwords)
    chosen = sorted(rng.sample(spans, min(n, len(spans))), reverse=True)
    out = list(words)
    for start, end in chosen:
        syn = rng.choice(lexicon.synonyms([_core(w) for w in words[start:end]]))
        last = words[end - 1]
        trail = last[len(last.rstrip(_EDGE_PUNCT)):]
        out[start:end] = (syn + trail).split()
    return out


def random_insertion(words, n, rng, lexicon, stopwords):
    out = list(words)
    for _ in range(n):
        plain = [w for w in out if not _is_marker(w) and _core(w)]
        pool = [w for w in plain if _core(w) not in stopwords] or plain
        if not pool:
            break
        with_syn = [w for w in pool if lexicon.synonyms([_core(w)])]
        if with_syn:
            new = rng.choice(lexicon.synonyms([_core(rng.choice(with_syn))]))
        else:
            new = _core(rng.choice(pool))
        pos = rng.randint(0, len(out))
        out[pos:pos] = new.split()
    return out


def random_swap(words, n, rng):
    out = list(words)
    if len(out) < 2:
        return out
    for _ in range(n):
        i, j = rng.sample(range(len(out)), 2)
        out[i], out[j] = out[j], out[i]
    return out


def random_deletion(words, p, rng):
    if len(words) <= 1 or p == 0:
        return list(words)
    out = [w for w in words if rng.random() >= p]
    if not out:
        out = [rng.choice(words)]
    return out


def apply_op(
    text: str,
    op: AugmentationOp,
    rng: random.Random,
    lexicon: Lexicon | None = None,
    stopwords: frozenset[str] | None = None,
) -> str:
    lexicon = default_lexicon() if lexicon is None else lexicon
    stopwords = default_stopwords() if stopwords is None else stopwords
    if op.kind == "synonym_replacement" and len(lexicon) == 0:
        raise AugmentationConfigError("synonym_replacement needs a non-empty lexicon")
    if op.magnitude == 0:
        return text
    words = split_words(text)
    if not words:
        return text
    n = _count(op.magnitude, len(words))
    if op.kind == "synonym_replacement":
        out = synonym_replacement(words, n, rng, lexicon, stopwords)
    elif op.kind == "random_insertion":
        out = random_insertion(words, n, rng, lexicon, stopwords)
    elif op.kind == "random_swap":
        out = random_swap(words, n, rng)
    else:
        out = random_deletion(words, op.magnitude, rng)
    return " ".join(out)


def apply_ops(text: str, ops: Sequence[AugmentationOp], rng: random.Random, **kw) -> str:
    for op in ops:
        text = apply_op(text, op, rng, **kw)
    return text


def apply_policy(text: str, policy: AugmentationPolicy, **kw) -> str:
    return apply_ops(text, policy.ops, random.Random(policy.seed), **kw)


# --------------------------------------------------------------------------
# fragility sweep


class PolicyTransform:
    """Block transform that perturbs each example block once, then replays it.

    The first prompt build draws from the generator in block order; later
    builds (one per validation item) reuse those results, so every item sees
    the same perturbed examples.
    """

    def __init__(self, policy: AugmentationPolicy, **kw):
        self.policy = policy
        self.rng = random.Random(policy.seed)
        self.kw = kw
        self.memo: dict[tuple[int, str], str] = {}

    def __call__(self, text: str, slot: tuple[int, str]) -> str:
        if slot not in self.memo:
            self.memo[slot] = apply_ops(text, self.policy.ops, self.rng, **self.kw)
        return self.memo[slot]


def default_grid(magnitudes: Sequence[float] = DEFAULT_MAGNITUDES, kinds: Sequence[str] = KINDS) -> list[AugmentationOp]:
    return [AugmentationOp(k, m) for k in kinds for m in magnitudes]


def compositional_grid(ops_grid: Sequence[AugmentationOp], length: int = 2) -> list[tuple[AugmentationOp, ...]]:
    """Ordered combinations of distinct kinds sharing one magnitude."""
    by_mag: dict[float, list[AugmentationOp]] = {}
    for op in ops_grid:
        by_mag.setdefault(op.magnitude, []).append(op)
    return [combo for ops in by_mag.values() for combo in itertools.permutations(ops, length)]


def fragility_sweep(
    base: PromptSpec,
    ops_grid: Sequence[AugmentationOp] | None,
    trials: int,
    items: Sequence[ValidationItem],
    provider: CompletionProvider,
    base_seed: int = 0,
    policy_length: int = 1,
    lexicon: Lexicon | None = None,
    **request_kw,
) -> list[FragilityRecord]:
    """Score ``base`` under each perturbation of its example text blocks.

    Queries and graph blocks are never touched.  Trial t uses seed
    ``base_seed + t``.  With ``policy_length > 1`` each policy chains that
    many distinct kinds at a shared magnitude.
    """
    if trials < 1:
        raise ValueError("trials must be >= 1")
    grid = default_grid() if ops_grid is None else list(ops_grid)
    combos = [(op,) for op in grid] if policy_length == 1 else compositional_grid(grid, policy_length)
    kw = {"lexicon": lexicon} if lexicon is not None else {}
    out = []
    for ops in combos:
        for t in range(trials):
            policy = AugmentationPolicy(ops, base_seed + t)
            transform = PolicyTransform(policy, **kw)
            _, avg = evaluate_prompt(base, items, provider, transform=transform, **request_kw)
            digest = hashlib.sha256(render_examples(base, transform).encode("utf-8")).hexdigest()[:16]
            out.append(FragilityRecord(policy, t, digest, avg))
    return out


def sweep_csv_rows(records: Sequence[FragilityRecord]) -> list[list[str]]:
    return [
        [r.policy.kind, r.policy.magnitude, str(r.trial), r.policy.digest(), repr(r.average_bleu)]
        for r in records
    ]

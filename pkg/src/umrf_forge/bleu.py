"""Sentence-level BLEU against a single reference.

Conventions (the usual BLEU definition leaves these open):

* tokens come from :func:`tokenize`, which keeps JSON punctuation as tokens;
* orders n larger than the candidate length have no n-grams and are left out
  of the geometric mean, so a short exact match still scores 1;
* without smoothing a zero n-gram precision makes the score 0; with smoothing
  the zero match count is replaced by ``SMOOTHING_EPSILON``.
"""
from __future__ import annotations

import math
import re
from collections import Counter
from dataclasses import dataclass
from typing import Iterable, Sequence

SMOOTHING_EPSILON = 1e-9

_PUNCT_RE = re.compile(r'([{}\[\]:,"=;])')


@dataclass(frozen=True)
class TokenSequence(Sequence[str]):
    tokens: tuple[str, ...]

    def __post_init__(self) -> None:
        object.__setattr__(self, "tokens", tuple(self.tokens))
        if any(t == "" for t in self.tokens):
            raise ValueError("token sequences cannot contain empty tokens")

    def __getitem__(self, i):
        return self.tokens[i]

    def __len__(self) -> int:
        return len(self.tokens)


def tokenize(text: str) -> TokenSequence:
    out = []
    for chunk in text.split():
        out.extend(t for t in _PUNCT_RE.split(chunk) if t)
    return TokenSequence(tuple(out))


def _ngrams(tokens: Sequence[str], n: int) -> Counter:
    return Counter(tuple(tokens[i : i + n]) for i in range(len(tokens) - n + 1))


def sentence_bleu(
    candidate: Sequence[str],
    reference: Sequence[str],
    max_n: int = 4,
    smoothing: bool = False,
) -> float:
    if max_n < 1:
        raise ValueError("max_n must be at least 1")
    if len(reference) == 0:
        raise ValueError("reference must be non-empty")
    c, r = len(candidate), len(reference)
    if c == 0:
        return 0.0

    log_sum = 0.0
    orders = min(max_n, c)
    for n in range(1, orders + 1):
        cand = _ngrams(candidate, n)
        ref = _ngrams(reference, n)
        matches = sum(min(k, ref[g]) for g, k in cand.items())
        total = c - n + 1
        if matches == 0:
            if not smoothing:
                return 0.0
            matches = SMOOTHING_EPSILON
        log_sum += math.log(matches / total)
    bp = 1.0 if c >= r else math.exp(1.0 - r / c)
    return bp * math.exp(log_sum / orders)


def average_bleu(
    pairs: Iterable[tuple[str, str]], max_n: int = 4, smoothing: bool = False
) -> float:
    """Arithmetic mean of sentence BLEU over (candidate, reference) texts."""
    scores = [
        sentence_bleu(tokenize(cand), tokenize(ref), max_n=max_n, smoothing=smoothing)
        for cand, ref in pairs
    ]
    if not scores:
        raise ValueError("average_bleu needs at least one pair")
    return math.fsum(scores) / len(scores)

"""Exhaustive search over ordered k-example prompts, scored by BLEU.

Each prompt structure (an ordered tuple of pool entries) is evaluated on every
validation item; the candidate graph text is compared with the canonical
serialization of the reference graph.  Completions go through the provider,
so wrapping it in :class:`~umrf_forge.provider.CachingProvider` makes an
interrupted search resumable at no extra cost.
"""
from __future__ import annotations

import csv
import io
import itertools
import json
import logging
import math
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Sequence

from umrf_forge.bleu import sentence_bleu, tokenize
from umrf_forge.grammar import MultimodalCommand, parse_command, render_command
from umrf_forge.prompt import (
    BlockTransform,
    OrderingFlag,
    PoolEntry,
    PromptSpec,
    build_prompt,
    extract_candidate,
)
from umrf_forge.provider import DEFAULT_MAX_TOKENS, DEFAULT_MODEL, CompletionProvider, CompletionRequest
from umrf_forge.umrf import UmrfError, UmrfGraph, graph_from_dict, graph_to_dict, parse_graph, serialize_graph, validate_graph

logger = logging.getLogger(__name__)

RECORD_COLUMNS = (
    "prompt_index",
    "prompt_structure",
    "item_index",
    "bleu",
    "parse_ok",
    "error",
    "completion",
)


@dataclass(frozen=True)
class ValidationItem:
    command: MultimodalCommand
    reference_graph: UmrfGraph

    def __post_init__(self) -> None:
        violations = validate_graph(self.reference_graph)
        if violations:
            raise ValueError(f"reference graph invalid: {violations[0]}")

    @property
    def reference_text(self) -> str:
        return serialize_graph(self.reference_graph)


@dataclass(frozen=True)
class EvalRecord:
    prompt_index: int
    prompt_structure: tuple[tuple[int, OrderingFlag], ...]
    item_index: int
    bleu: float
    completion: str
    parse_ok: bool
    error: str | None = None

    @property
    def structure_label(self) -> str:
        return "+".join(f"{i}{OrderingFlag(f).value}" for i, f in self.prompt_structure)


@dataclass(frozen=True)
class SearchReport:
    records: tuple[EvalRecord, ...]
    averages: tuple[float, ...]
    structures: tuple[str, ...]
    total_prompts: int
    elapsed: float = field(default=0.0, compare=False)

    @property
    def ranking(self) -> list[int]:
        """Prompt indices by average BLEU, best first; ties keep index order."""
        return sorted(range(self.total_prompts), key=lambda i: (-self.averages[i], i))

    def top(self, n: int = 10) -> list[tuple[int, str, float]]:
        return [(i, self.structures[i], self.averages[i]) for i in self.ranking[:n]]


def load_validation(path: str | Path) -> list[ValidationItem]:
    items = []
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, 1):
            if not line.strip():
                continue
            try:
                d = json.loads(line)
                items.append(ValidationItem(parse_command(d["command"]), graph_from_dict(d["umrf_graph"])))
            except Exception as exc:
                raise ValueError(f"{path}:{lineno}: {exc}") from exc
    return items


def write_validation(items: Sequence[ValidationItem], path: str | Path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for it in items:
            d = {"command": render_command(it.command), "umrf_graph": graph_to_dict(it.reference_graph)}
            fh.write(json.dumps(d, ensure_ascii=False) + "\n")


def echo_fixture(items: Sequence[ValidationItem]) -> dict[str, str]:
    """Mock fixture answering every validation query with its reference graph."""
    return {render_command(it.command): it.reference_text for it in items}


def enumerate_prompts(pool: Sequence[PoolEntry], k: int, include_cot: bool = True) -> list[PromptSpec]:
    """All ordered k-permutations of the pool, lexicographic in pool index."""
    if not 1 <= k <= len(pool):
        raise ValueError(f"k must be between 1 and {len(pool)}, got {k}")
    return [
        PromptSpec(tuple(pool[i] for i in perm), None, include_cot)
        for perm in itertools.permutations(range(len(pool)), k)
    ]


def _parses(candidate: str) -> bool:
    start = candidate.find("{")
    if start < 0:
        return False
    try:
        parse_graph(candidate[start:], strict=False)
    except UmrfError:
        return False
    return True


def evaluate_item(
    spec: PromptSpec,
    item: ValidationItem,
    provider: CompletionProvider,
    prompt_index: int = 0,
    item_index: int = 0,
    transform: BlockTransform | None = None,
    model_id: str = DEFAULT_MODEL,
    max_tokens: int = DEFAULT_MAX_TOKENS,
) -> EvalRecord:
    structure = spec.structure
    try:
        prompt = build_prompt(replace(spec, query=item.command), transform=transform)
        result = provider.complete(CompletionRequest(prompt.text, max_tokens=max_tokens, model_id=model_id))
    except Exception as exc:  # one bad item must not sink a long search
        logger.warning("prompt %d item %d failed: %s", prompt_index, item_index, exc)
        return EvalRecord(prompt_index, structure, item_index, 0.0, "", False, f"{type(exc).__name__}: {exc}")
    candidate = extract_candidate(result.text)
    reference = tokenize(item.reference_text)
    score = sentence_bleu(tokenize(candidate), reference)
    error = "; ".join(result.warnings) or None
    return EvalRecord(prompt_index, structure, item_index, score, candidate, _parses(candidate), error)


def evaluate_prompt(
    spec: PromptSpec,
    items: Sequence[ValidationItem],
    provider: CompletionProvider,
    prompt_index: int = 0,
    transform: BlockTransform | None = None,
    **request_kw,
) -> tuple[list[EvalRecord], float]:
    if not items:
        raise ValueError("evaluate_prompt needs at least one validation item")
    records = [
        evaluate_item(spec, it, provider, prompt_index, j, transform, **request_kw)
        for j, it in enumerate(items)
    ]
    return records, math.fsum(r.bleu for r in records) / len(records)


def exhaustive_search(
    pool: Sequence[PoolEntry],
    k: int,
    items: Sequence[ValidationItem],
    provider: CompletionProvider,
    include_cot: bool = True,
    max_workers: int = 1,
    **request_kw,
) -> SearchReport:
    if not items:
        raise ValueError("exhaustive_search needs at least one validation item")
    start = time.monotonic()
    specs = enumerate_prompts(pool, k, include_cot)
    jobs = [(p, j) for p in range(len(specs)) for j in range(len(items))]

    def run(job: tuple[int, int]) -> EvalRecord:
        p, j = job
        return evaluate_item(specs[p], items[j], provider, p, j, **request_kw)

    if max_workers > 1:
        with ThreadPoolExecutor(max_workers=max_workers) as pool_exec:
            records = list(pool_exec.map(run, jobs))
    else:
        records = [run(job) for job in jobs]
    records.sort(key=lambda r: (r.prompt_index, r.item_index))

    n = len(items)
    averages = tuple(
        math.fsum(r.bleu for r in records[p * n : (p + 1) * n]) / n for p in range(len(specs))
    )
    elapsed = time.monotonic() - start
    logger.info("evaluated %d prompts x %d items in %.1fs", len(specs), n, elapsed)
    return SearchReport(tuple(records), averages, tuple(s.label() for s in specs), len(specs), elapsed)


# --------------------------------------------------------------------------
# report files


def records_csv(report: SearchReport) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(RECORD_COLUMNS)
    for r in report.records:
        w.writerow(
            [r.prompt_index, r.structure_label, r.item_index, repr(r.bleu), int(r.parse_ok), r.error or "", r.completion]
        )
    return buf.getvalue()


def summary_dict(report: SearchReport, k: int, n_items: int, top_n: int = 10) -> dict:
    return {
        "total_prompts": report.total_prompts,
        "k": k,
        "n_items": n_items,
        "n_records": len(report.records),
        "parse_ok_rate": sum(r.parse_ok for r in report.records) / max(1, len(report.records)),
        "top": [
            {"rank": rank + 1, "prompt_index": i, "structure": s, "average_bleu": avg}
            for rank, (i, s, avg) in enumerate(report.top(top_n))
        ],
        "prompts": [
            {"prompt_index": i, "structure": s, "average_bleu": a}
            for i, (s, a) in enumerate(zip(report.structures, report.averages))
        ],
    }


def write_report(report: SearchReport, out_dir: str | Path, k: int, n_items: int, top_n: int = 10) -> dict[str, Path]:
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    paths = {"records": out / "records.csv", "summary": out / "summary.json"}
    paths["records"].write_text(records_csv(report), encoding="utf-8")
    paths["summary"].write_text(
        json.dumps(summary_dict(report, k, n_items, top_n), indent=2) + "\n", encoding="utf-8"
    )
    return paths

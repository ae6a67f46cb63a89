"""Few-shot prompt assembly.

A prompt is the rendered examples in order, then the operator's query line and
the ``UMRF:`` cue after which the model is expected to write the graph::

    [x=-6.74; y=-4.67; yaw=3.086] the right side of the wooden desk
    Walk over to the right side of the wooden desk.
    <rationale>
    { ...canonical UMRF... }

    robot go inspect the workshop [x=74.2; y=-223.6; yaw=2.72]
    UMRF:
"""
from __future__ import annotations

import enum
import json
import math
from dataclasses import dataclass
from pathlib import Path
from typing import Callable, Iterable, Sequence

from umrf_forge.grammar import MultimodalCommand, parse_command, render_command
from umrf_forge.umrf import UmrfGraph, graph_from_dict, graph_to_dict, serialize_graph, validate_graph

CUE = "UMRF:"
CHARS_PER_TOKEN = 4
# text-davinci-003 context window minus the 1024 tokens reserved for the answer.
DEFAULT_PROMPT_BUDGET = 4097 - 1024

# transform(text, (example position, block name)) -> text; block names are
# "visual", "language" and "rationale".  Graph blocks are never passed in.
BlockTransform = Callable[[str, tuple[int, str]], str]


class OrderingFlag(str, enum.Enum):
    VISUAL_FIRST = "V"
    LANGUAGE_FIRST = "L"


class PromptBudgetError(ValueError):
    def __init__(self, estimate: int, budget: int, drop: list[int]):
        super().__init__(
            f"prompt needs ~{estimate} tokens, budget is {budget}; "
            f"drop trailing examples at positions {drop}"
        )
        self.estimate = estimate
        self.budget = budget
        self.drop = drop


@dataclass(frozen=True)
class FewShotExample:
    example_id: int
    nl_command: str
    umrf_output: UmrfGraph
    visual_cue: MultimodalCommand | None = None
    cot_rationale: str | None = None

    def __post_init__(self) -> None:
        if not self.nl_command.strip():
            raise ValueError("nl_command must be non-empty")
        violations = validate_graph(self.umrf_output)
        if violations:
            raise ValueError(f"example {self.example_id} graph invalid: {violations[0]}")

    def to_dict(self) -> dict:
        return {
            "example_id": self.example_id,
            "visual_cue": render_command(self.visual_cue) if self.visual_cue else None,
            "nl_command": self.nl_command,
            "cot_rationale": self.cot_rationale,
            "umrf_graph": graph_to_dict(self.umrf_output),
        }

    @classmethod
    def from_dict(cls, d: dict) -> "FewShotExample":
        return cls(
            example_id=int(d["example_id"]),
            nl_command=d["nl_command"],
            umrf_output=graph_from_dict(d["umrf_graph"]),
            visual_cue=parse_command(d["visual_cue"]) if d.get("visual_cue") else None,
            cot_rationale=d.get("cot_rationale"),
        )


PoolEntry = tuple[FewShotExample, OrderingFlag]


@dataclass(frozen=True)
class PromptSpec:
    examples: tuple[PoolEntry, ...]
    query: MultimodalCommand | None = None
    include_cot: bool = True

    def __post_init__(self) -> None:
        object.__setattr__(self, "examples", tuple(self.examples))
        if not self.examples:
            raise ValueError("a prompt needs at least one example")
        keys = [(ex.example_id, OrderingFlag(flag)) for ex, flag in self.examples]
        if len(set(keys)) != len(keys):
            raise ValueError("duplicate (example_id, flag) pair in prompt")

    @property
    def structure(self) -> tuple[tuple[int, OrderingFlag], ...]:
        return tuple((ex.example_id, OrderingFlag(flag)) for ex, flag in self.examples)

    def label(self) -> str:
        """Compact structure label such as ``5L+4V``."""
        return "+".join(f"{i}{flag.value}" for i, flag in self.structure)


@dataclass(frozen=True)
class BuiltPrompt:
    text: str
    token_estimate: int
    n_examples: int

    def __str__(self) -> str:
        return self.text


def estimate_tokens(text: str) -> int:
    """Rough token count (characters / 4); real tokenizers vary."""
    return math.ceil(len(text) / CHARS_PER_TOKEN)


def render_example(
    ex: FewShotExample,
    flag: OrderingFlag,
    include_cot: bool = True,
    transform: BlockTransform | None = None,
    position: int = 0,
) -> str:
    visual = render_command(ex.visual_cue) if ex.visual_cue is not None else None
    blocks: list[tuple[str, str | None]] = [("visual", visual), ("language", ex.nl_command)]
    if OrderingFlag(flag) is OrderingFlag.LANGUAGE_FIRST:
        blocks.reverse()
    if include_cot and ex.cot_rationale:
        blocks.append(("rationale", ex.cot_rationale))
    lines = []
    for name, text in blocks:
        if text is None:
            continue
        if transform is not None:
            text = transform(text, (position, name))
        lines.append(text)
    lines.append(serialize_graph(ex.umrf_output))
    return "\n".join(lines) + "\n\n"


def render_examples(spec: PromptSpec, transform: BlockTransform | None = None) -> str:
    return "".join(
        render_example(ex, flag, spec.include_cot, transform, position=i)
        for i, (ex, flag) in enumerate(spec.examples)
    )


def render_query(query: MultimodalCommand) -> str:
    return f"{render_command(query)}\n{CUE}\n"


def build_prompt(
    spec: PromptSpec,
    transform: BlockTransform | None = None,
    budget: int | None = DEFAULT_PROMPT_BUDGET,
) -> BuiltPrompt:
    if spec.query is None:
        raise ValueError("PromptSpec has no query")
    pieces = [
        render_example(ex, flag, spec.include_cot, transform, position=i)
        for i, (ex, flag) in enumerate(spec.examples)
    ]
    tail = render_query(spec.query)
    text = "".join(pieces) + tail
    estimate = estimate_tokens(text)
    if budget is not None and estimate > budget:
        used = estimate_tokens(tail)
        keep = 0
        for piece in pieces:
            if used + estimate_tokens(piece) > budget:
                break
            used += estimate_tokens(piece)
            keep += 1
        raise PromptBudgetError(estimate, budget, list(range(keep, len(pieces))))
    return BuiltPrompt(text, estimate, len(pieces))


def extract_candidate(completion: str, stop: Sequence[str] | None = None) -> str:
    """Text the model wrote after the cue, up to the first blank line."""
    text = completion
    marker = "\n" + CUE
    if text.startswith(CUE):
        text = text[len(CUE):]
    elif marker in text:
        text = text.rsplit(marker, 1)[1]
    for s in stop or ():
        if s and s in text:
            text = text.split(s, 1)[0]
    text = text.lstrip("\r\n")
    lines = []
    for line in text.split("\n"):
        if not line.strip():
            break
        lines.append(line)
    return "\n".join(lines).strip()


# --------------------------------------------------------------------------
# example library files (JSON lines)


def load_examples(path: str | Path) -> list[FewShotExample]:
    out = []
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, 1):
            if not line.strip():
                continue
            try:
                out.append(FewShotExample.from_dict(json.loads(line)))
            except Exception as exc:
                raise ValueError(f"{path}:{lineno}: {exc}") from exc
    return out


def write_examples(examples: Iterable[FewShotExample], path: str | Path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for ex in examples:
            fh.write(json.dumps(ex.to_dict(), ensure_ascii=False) + "\n")


def load_pool(path: str | Path, flags: Sequence[OrderingFlag] = tuple(OrderingFlag)) -> list[PoolEntry]:
    """Search pool from an example library.

    A record may pin its own ``"flag"`` ("V" or "L"); records without one
    enter the pool once per flag in ``flags``.
    """
    pool: list[PoolEntry] = []
    with open(path, encoding="utf-8") as fh:
        for line in fh:
            if not line.strip():
                continue
            d = json.loads(line)
            ex = FewShotExample.from_dict(d)
            if d.get("flag"):
                pool.append((ex, OrderingFlag(d["flag"])))
            else:
                pool.extend((ex, OrderingFlag(f)) for f in flags)
    return pool

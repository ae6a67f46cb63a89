"""Fused operator commands: natural language with embedded pose markers.

The AR interface appends marker coordinates to the voice transcript, e.g.
``Move to the main hall [x=14; y=3.2; yaw=1.26]``.  Marker grammar (EBNF, see
docs/marker_grammar.md)::

    marker = "[" , "x=" , real , ";" , [ " " ] , "y=" , real , ";" , [ " " ] ,
             "yaw=" , real , "]" ;
    real   = [ "+" | "-" ] , digit , { digit } , [ "." , digit , { digit } ] ;

A ``[`` that opens like a marker (``[x=``, ``[y=`` or ``[yaw=``, optional
spaces around the ``=``) but does not complete the grammar is a hard error.
Yaw is carried as given; no unit conversion or wrapping is applied.
"""
from __future__ import annotations

import math
import re
from dataclasses import dataclass, field
from typing import Union

from umrf_forge.umrf import format_number

REAL = r"[+-]?\d+(?:\.\d+)?"
MARKER_PATTERN = rf"\[x=({REAL});[ ]?y=({REAL});[ ]?yaw=({REAL})\]"
MARKER_RE = re.compile(MARKER_PATTERN)
_NEAR_MARKER_RE = re.compile(r"\[\s*(?:x|y|yaw)\s*=")


class CommandParseError(ValueError):
    def __init__(self, message: str, offset: int):
        super().__init__(f"{message} at offset {offset}")
        self.offset = offset


@dataclass(frozen=True)
class Marker:
    x: float
    y: float
    yaw: float

    def __post_init__(self) -> None:
        for name in ("x", "y", "yaw"):
            v = float(getattr(self, name))
            if not math.isfinite(v):
                raise ValueError(f"marker {name} must be finite, got {v!r}")
            object.__setattr__(self, name, v)

    def render(self) -> str:
        f = lambda v: format_number(v, positional=True)  # noqa: E731
        return f"[x={f(self.x)}; y={f(self.y)}; yaw={f(self.yaw)}]"


@dataclass(frozen=True)
class Text:
    span: str


@dataclass(frozen=True)
class MarkerRef:
    marker: Marker
    referent: str = ""


Segment = Union[Text, MarkerRef]


def _norm(s: str) -> str:
    return " ".join(s.split())


@dataclass(frozen=True)
class MultimodalCommand:
    segments: tuple[Segment, ...]
    raw: str = field(default="", compare=False)

    def __post_init__(self) -> None:
        object.__setattr__(self, "segments", tuple(self.segments))
        has_text = any(
            (s.span if isinstance(s, Text) else s.referent).strip() for s in self.segments
        )
        if not has_text:
            raise ValueError("command needs at least some non-marker text")
        if not self.raw:
            object.__setattr__(self, "raw", render_command(self))

    @property
    def markers(self) -> list[Marker]:
        return [s.marker for s in self.segments if isinstance(s, MarkerRef)]

    @property
    def text(self) -> str:
        """The language part alone, markers removed."""
        parts = [s.span if isinstance(s, Text) else s.referent for s in self.segments]
        return _norm(" ".join(parts))

    def __str__(self) -> str:
        return render_command(self)


def parse_command(text: str) -> MultimodalCommand:
    segments: list[Segment] = []
    pos = 0
    pending: Marker | None = None

    def flush(chunk: str) -> None:
        nonlocal pending
        chunk = _norm(chunk)
        if pending is not None:
            segments.append(MarkerRef(pending, chunk))
            pending = None
        elif chunk:
            segments.append(Text(chunk))

    for near in _NEAR_MARKER_RE.finditer(text):
        start = near.start()
        if start < pos:
            continue
        m = MARKER_RE.match(text, start)
        if m is None:
            raise CommandParseError("malformed marker", start)
        flush(text[pos:start])
        pending = Marker(float(m.group(1)), float(m.group(2)), float(m.group(3)))
        pos = m.end()
    flush(text[pos:])
    try:
        return MultimodalCommand(tuple(segments), raw=text)
    except ValueError:
        raise CommandParseError("command has no language text", 0) from None


def render_command(cmd: MultimodalCommand) -> str:
    parts = []
    for s in cmd.segments:
        if isinstance(s, Text):
            parts.append(s.span)
        else:
            parts.append(s.marker.render())
            if s.referent:
                parts.append(s.referent)
    return " ".join(p for p in parts if p)

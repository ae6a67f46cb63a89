"""UMRF task graphs: parsing, validation, canonical serialization, ordering.

A UMRF document is a JSON object::

    {
      "graph_name": "...",
      "umrf_actions": [
        {
          "name": "navigation",
          "id": 0,
          "effect": "synchronous",
          "input_parameters": {"x": {"pvf_type": "number", "pvf_value": 14}},
          "output_parameters": {},
          "parents": [],
          "children": [{"name": "scan", "id": 0}]
        }
      ]
    }

The canonical serialization emits keys in exactly that order, indents by two
spaces and renders numbers with the fewest digits that round-trip.  The frozen
JSON Schema lives in ``data/umrf.schema.json``.
"""
from __future__ import annotations

import heapq
import json
import math
from dataclasses import dataclass, field
from decimal import Decimal
from typing import Any, Iterable

SCHEMA_VERSION = "1.0.0"

VALUE_TYPES = ("number", "string", "bool", "number-list")
DEFAULT_EFFECT = "synchronous"

GRAPH_KEYS = ("graph_name", "umrf_actions")
NODE_KEYS = (
    "name",
    "id",
    "effect",
    "input_parameters",
    "output_parameters",
    "parents",
    "children",
)
PARAM_KEYS = ("pvf_type", "pvf_value")
REF_KEYS = ("name", "id")

# Closed set of violation codes reported by validate_graph.
VIOLATION_CODES = frozenset(
    {
        "empty_graph",
        "duplicate_node",
        "duplicate_link",
        "self_link",
        "dangling_link",
        "inconsistent_link",
        "no_entry_node",
        "unreachable_node",
    }
)


class UmrfError(Exception):
    """Base class for UMRF document errors."""


class UmrfSyntaxError(UmrfError):
    def __init__(self, message: str, offset: int):
        super().__init__(f"{message} (byte offset {offset})")
        self.offset = offset


class UmrfSchemaError(UmrfError):
    def __init__(self, path: str, message: str):
        super().__init__(f"{path}: {message}")
        self.path = path


class InvalidGraphError(UmrfError):
    """Raised when asked to serialize a graph that fails validation."""

    def __init__(self, violations: list[Violation]):
        lines = "; ".join(str(v) for v in violations)
        super().__init__(f"graph has {len(violations)} violation(s): {lines}")
        self.violations = violations


@dataclass(frozen=True, order=True)
class NodeRef:
    name: str
    id: int

    def __str__(self) -> str:
        return f"{self.name}_{self.id}"


def _is_number(value: Any) -> bool:
    return isinstance(value, (int, float)) and not isinstance(value, bool)


@dataclass(frozen=True)
class Parameter:
    value_type: str
    value: Any

    def __post_init__(self) -> None:
        if self.value_type not in VALUE_TYPES:
            raise ValueError(f"unknown value_type {self.value_type!r}")
        v = self.value
        if self.value_type == "number":
            if not _is_number(v) or not math.isfinite(v):
                raise ValueError(f"number parameter needs a finite real, got {v!r}")
            object.__setattr__(self, "value", float(v))
        elif self.value_type == "string":
            if not isinstance(v, str):
                raise ValueError(f"string parameter needs text, got {v!r}")
        elif self.value_type == "bool":
            if not isinstance(v, bool):
                raise ValueError(f"bool parameter needs a boolean, got {v!r}")
        else:
            if not isinstance(v, (list, tuple)) or not all(
                _is_number(x) and math.isfinite(x) for x in v
            ):
                raise ValueError(f"number-list parameter needs finite reals, got {v!r}")
            object.__setattr__(self, "value", tuple(float(x) for x in v))


@dataclass(frozen=True)
class UmrfNode:
    ref: NodeRef
    effect: str = DEFAULT_EFFECT
    input_parameters: dict[str, Parameter] = field(default_factory=dict)
    output_parameters: dict[str, Parameter] = field(default_factory=dict)
    parents: tuple[NodeRef, ...] = ()
    children: tuple[NodeRef, ...] = ()
    extra: dict[str, Any] = field(default_factory=dict)

    def __post_init__(self) -> None:
        object.__setattr__(self, "parents", tuple(self.parents))
        object.__setattr__(self, "children", tuple(self.children))

    @property
    def name(self) -> str:
        return self.ref.name


@dataclass(frozen=True)
class UmrfGraph:
    graph_name: str
    nodes: tuple[UmrfNode, ...]
    extra: dict[str, Any] = field(default_factory=dict)

    def __post_init__(self) -> None:
        object.__setattr__(self, "nodes", tuple(self.nodes))

    def node(self, ref: NodeRef) -> UmrfNode:
        for n in self.nodes:
            if n.ref == ref:
                return n
        raise KeyError(ref)

    @property
    def refs(self) -> list[NodeRef]:
        return [n.ref for n in self.nodes]

    def edges(self) -> set[tuple[NodeRef, NodeRef]]:
        """(parent, child) pairs declared from either side of the link."""
        out = set()
        for n in self.nodes:
            out.update((n.ref, c) for c in n.children)
            out.update((p, n.ref) for p in n.parents)
        return out


@dataclass(frozen=True)
class Violation:
    code: str
    node: NodeRef | None
    message: str

    def __post_init__(self) -> None:
        if self.code not in VIOLATION_CODES:
            raise ValueError(f"unknown violation code {self.code!r}")

    def __str__(self) -> str:
        where = f" [{self.node}]" if self.node is not None else ""
        return f"{self.code}{where}: {self.message}"


@dataclass(frozen=True)
class CycleReport:
    """Returned by topological_order when the graph contains cycles."""

    nodes: frozenset[NodeRef]


# --------------------------------------------------------------------------
# parsing


def _fail(path: str, message: str):
    raise UmrfSchemaError(path, message)


def _check_keys(obj: dict, allowed: tuple[str, ...], path: str, strict: bool) -> dict:
    unknown = [k for k in obj if k not in allowed]
    if unknown and strict:
        _fail(f"{path}.{unknown[0]}" if path else unknown[0], "unknown field")
    return {k: obj[k] for k in unknown}


def _parse_ref(obj: Any, path: str) -> NodeRef:
    if not isinstance(obj, dict):
        _fail(path, "node reference must be an object")
    for k in obj:
        if k not in REF_KEYS:
            _fail(f"{path}.{k}", "unknown field")
    name, rid = obj.get("name"), obj.get("id")
    if not isinstance(name, str) or not name:
        _fail(f"{path}.name", "must be non-empty text")
    if not isinstance(rid, int) or isinstance(rid, bool) or rid < 0:
        _fail(f"{path}.id", "must be a non-negative integer")
    return NodeRef(name, rid)


def _parse_params(obj: Any, path: str) -> dict[str, Parameter]:
    if not isinstance(obj, dict):
        _fail(path, "must be an object")
    params = {}
    for pname, pobj in obj.items():
        ppath = f"{path}.{pname}"
        if not isinstance(pobj, dict):
            _fail(ppath, "parameter must be an object")
        for k in pobj:
            if k not in PARAM_KEYS:
                _fail(f"{ppath}.{k}", "unknown field")
        if "pvf_type" not in pobj:
            _fail(f"{ppath}.pvf_type", "missing")
        if "pvf_value" not in pobj:
            _fail(f"{ppath}.pvf_value", "missing")
        if pobj["pvf_type"] not in VALUE_TYPES:
            _fail(f"{ppath}.pvf_type", f"must be one of {', '.join(VALUE_TYPES)}")
        try:
            params[pname] = Parameter(pobj["pvf_type"], pobj["pvf_value"])
        except (ValueError, OverflowError) as exc:
            _fail(f"{ppath}.pvf_value", str(exc))
    return params


def _parse_node(obj: Any, path: str, strict: bool) -> UmrfNode:
    if not isinstance(obj, dict):
        _fail(path, "action must be an object")
    extra = _check_keys(obj, NODE_KEYS, path, strict)
    ref = _parse_ref({k: obj.get(k) for k in REF_KEYS}, path)
    effect = obj.get("effect", DEFAULT_EFFECT)
    if not isinstance(effect, str):
        _fail(f"{path}.effect", "must be text")
    links = {}
    for key in ("parents", "children"):
        seq = obj.get(key, [])
        if not isinstance(seq, list):
            _fail(f"{path}.{key}", "must be a list")
        links[key] = tuple(_parse_ref(r, f"{path}.{key}[{i}]") for i, r in enumerate(seq))
    return UmrfNode(
        ref=ref,
        effect=effect,
        input_parameters=_parse_params(obj.get("input_parameters", {}), f"{path}.input_parameters"),
        output_parameters=_parse_params(obj.get("output_parameters", {}), f"{path}.output_parameters"),
        parents=links["parents"],
        children=links["children"],
        extra=extra,
    )


def graph_from_dict(doc: Any, strict: bool = True) -> UmrfGraph:
    if not isinstance(doc, dict):
        _fail("$", "document must be an object")
    extra = _check_keys(doc, GRAPH_KEYS, "", strict)
    name = doc.get("graph_name")
    if not isinstance(name, str):
        _fail("graph_name", "missing or not text")
    actions = doc.get("umrf_actions")
    if not isinstance(actions, list):
        _fail("umrf_actions", "missing or not a list")
    if not actions:
        _fail("umrf_actions", "must contain at least one action")
    nodes = [_parse_node(a, f"umrf_actions[{i}]", strict) for i, a in enumerate(actions)]
    return UmrfGraph(name, nodes, extra)


def parse_graph(json_text: str, strict: bool = True) -> UmrfGraph:
    """Parse a UMRF JSON document.

    Strict mode rejects unknown fields; lenient mode keeps them on the
    ``extra`` mappings so they survive serialization.  Link consistency is
    not checked here, see :func:`validate_graph`.
    """
    try:
        doc = json.loads(json_text)
    except json.JSONDecodeError as exc:
        offset = len(json_text[: exc.pos].encode("utf-8"))
        raise UmrfSyntaxError(exc.msg, offset) from None
    return graph_from_dict(doc, strict=strict)


# --------------------------------------------------------------------------
# validation


def validate_graph(graph: UmrfGraph) -> list[Violation]:
    out: list[Violation] = []
    if not graph.nodes:
        return [Violation("empty_graph", None, "graph has no actions")]

    by_ref: dict[NodeRef, UmrfNode] = {}
    for n in graph.nodes:
        if n.ref in by_ref:
            out.append(Violation("duplicate_node", n.ref, f"{n.ref} declared more than once"))
        else:
            by_ref[n.ref] = n

    for n in graph.nodes:
        for key in ("parents", "children"):
            seen = set()
            for r in getattr(n, key):
                if r == n.ref:
                    out.append(Violation("self_link", n.ref, f"{n.ref} lists itself in {key}"))
                elif r in seen:
                    out.append(Violation("duplicate_link", n.ref, f"{r} repeated in {key}"))
                elif r not in by_ref:
                    out.append(Violation("dangling_link", n.ref, f"{key} entry {r} does not exist"))
                seen.add(r)

    for n in by_ref.values():
        for c in dict.fromkeys(n.children):
            if c in by_ref and c != n.ref and n.ref not in by_ref[c].parents:
                out.append(
                    Violation("inconsistent_link", n.ref, f"{n.ref} lists child {c} but {c} omits parent {n.ref}")
                )
        for p in dict.fromkeys(n.parents):
            if p in by_ref and p != n.ref and n.ref not in by_ref[p].children:
                out.append(
                    Violation("inconsistent_link", n.ref, f"{n.ref} lists parent {p} but {p} omits child {n.ref}")
                )

    entries = [r for r, n in by_ref.items() if not n.parents]
    if not entries:
        out.append(Violation("no_entry_node", None, "every action has a parent; no start point"))
        return out

    succ: dict[NodeRef, set[NodeRef]] = {r: set() for r in by_ref}
    for p, c in graph.edges():
        if p in succ and c in succ:
            succ[p].add(c)
    seen = set(entries)
    stack = list(entries)
    while stack:
        for c in succ[stack.pop()]:
            if c not in seen:
                seen.add(c)
                stack.append(c)
    for r in by_ref:
        if r not in seen:
            out.append(Violation("unreachable_node", r, f"{r} cannot be reached from any entry action"))
    return out


# --------------------------------------------------------------------------
# ordering


def _successors(graph: UmrfGraph) -> dict[NodeRef, set[NodeRef]]:
    succ: dict[NodeRef, set[NodeRef]] = {r: set() for r in graph.refs}
    for p, c in graph.edges():
        if p in succ and c in succ and p != c:
            succ[p].add(c)
    return succ


def cyclic_nodes(graph: UmrfGraph) -> frozenset[NodeRef]:
    """Nodes that can reach themselves."""
    succ = _successors(graph)
    on_cycle = set()
    for start in succ:
        stack, seen = list(succ[start]), set()
        while stack:
            r = stack.pop()
            if r == start:
                on_cycle.add(start)
                break
            if r not in seen:
                seen.add(r)
                stack.extend(succ[r])
    return frozenset(on_cycle)


def topological_order(graph: UmrfGraph) -> list[UmrfNode] | CycleReport:
    """Parents before children, ties broken by (name, id).

    Returns a :class:`CycleReport` listing the nodes on cycles instead when the
    graph is cyclic.
    """
    succ = _successors(graph)
    indeg = {r: 0 for r in succ}
    for cs in succ.values():
        for c in cs:
            indeg[c] += 1
    heap = [r for r, d in indeg.items() if d == 0]
    heapq.heapify(heap)
    order = []
    while heap:
        r = heapq.heappop(heap)
        order.append(r)
        for c in succ[r]:
            indeg[c] -= 1
            if indeg[c] == 0:
                heapq.heappush(heap, c)
    if len(order) < len(succ):
        return CycleReport(cyclic_nodes(graph))
    by_ref = {n.ref: n for n in graph.nodes}
    return [by_ref[r] for r in order]


# --------------------------------------------------------------------------
# canonical serialization


def format_number(x: float, positional: bool = False) -> str:
    """Shortest text that reads back as ``x``; integral values drop ``.0``.

    JSON output switches to exponent notation outside [1e-6, 1e16); with
    ``positional=True`` the digits are always written out in full.
    """
    if x == 0:
        return "0"
    if not math.isfinite(x):
        raise ValueError(f"cannot render non-finite number {x!r}")
    text = repr(float(x))
    if not positional and not (1e-6 <= abs(x) < 1e16):
        return text
    text = format(Decimal(text), "f")
    if "." in text:
        text = text.rstrip("0").rstrip(".")
    return text


def _param_to_dict(p: Parameter) -> dict:
    value = list(p.value) if p.value_type == "number-list" else p.value
    return {"pvf_type": p.value_type, "pvf_value": value}


def _ref_to_dict(r: NodeRef) -> dict:
    return {"name": r.name, "id": r.id}


def node_to_dict(n: UmrfNode) -> dict:
    d = {
        "name": n.ref.name,
        "id": n.ref.id,
        "effect": n.effect,
        "input_parameters": {k: _param_to_dict(v) for k, v in n.input_parameters.items()},
        "output_parameters": {k: _param_to_dict(v) for k, v in n.output_parameters.items()},
        "parents": [_ref_to_dict(r) for r in n.parents],
        "children": [_ref_to_dict(r) for r in n.children],
    }
    for k in sorted(n.extra):
        d[k] = n.extra[k]
    return d


def graph_to_dict(graph: UmrfGraph) -> dict:
    d = {"graph_name": graph.graph_name, "umrf_actions": [node_to_dict(n) for n in graph.nodes]}
    for k in sorted(graph.extra):
        d[k] = graph.extra[k]
    return d


def _emit(obj: Any, level: int, out: list[str]) -> None:
    pad = "  " * (level + 1)
    if isinstance(obj, dict):
        if not obj:
            out.append("{}")
            return
        out.append("{\n")
        for i, (k, v) in enumerate(obj.items()):
            out.append(pad + json.dumps(k, ensure_ascii=False) + ": ")
            _emit(v, level + 1, out)
            out.append(",\n" if i < len(obj) - 1 else "\n")
        out.append("  " * level + "}")
    elif isinstance(obj, (list, tuple)):
        if not obj:
            out.append("[]")
            return
        out.append("[\n")
        for i, v in enumerate(obj):
            out.append(pad)
            _emit(v, level + 1, out)
            out.append(",\n" if i < len(obj) - 1 else "\n")
        out.append("  " * level + "]")
    elif isinstance(obj, bool) or obj is None:
        out.append(json.dumps(obj))
    elif isinstance(obj, int):
        out.append(str(obj))
    elif isinstance(obj, float):
        out.append(format_number(obj))
    else:
        out.append(json.dumps(obj, ensure_ascii=False))


def canonical_json(obj: Any) -> str:
    out: list[str] = []
    _emit(obj, 0, out)
    return "".join(out)


def serialize_graph(graph: UmrfGraph) -> str:
    """Canonical JSON text for a valid graph.

    Raises :class:`InvalidGraphError` (carrying the violations) when the
    graph does not validate.
    """
    violations = validate_graph(graph)
    if violations:
        raise InvalidGraphError(violations)
    return canonical_json(graph_to_dict(graph))


# --------------------------------------------------------------------------
# construction helpers


def make_graph(graph_name: str, actions: Iterable[dict], edges: Iterable[tuple[NodeRef, NodeRef]] = ()) -> UmrfGraph:
    """Build a graph from ``{"name", "id", "inputs"}`` dicts plus an edge list.

    ``inputs`` maps parameter names to raw values; the value type is inferred.
    Parent and child links are filled in from ``edges`` so they are consistent
    by construction.
    """
    edges = list(edges)
    nodes = []
    for a in actions:
        ref = NodeRef(a["name"], a.get("id", 0))
        nodes.append(
            UmrfNode(
                ref=ref,
                effect=a.get("effect", DEFAULT_EFFECT),
                input_parameters={k: infer_parameter(v) for k, v in a.get("inputs", {}).items()},
                output_parameters={k: infer_parameter(v) for k, v in a.get("outputs", {}).items()},
                parents=tuple(p for p, c in edges if c == ref),
                children=tuple(c for p, c in edges if p == ref),
            )
        )
    return UmrfGraph(graph_name, nodes)


def infer_parameter(value: Any) -> Parameter:
    if isinstance(value, Parameter):
        return value
    if isinstance(value, bool):
        return Parameter("bool", value)
    if isinstance(value, str):
        return Parameter("string", value)
    if isinstance(value, (list, tuple)):
        return Parameter("number-list", value)
    return Parameter("number", value)

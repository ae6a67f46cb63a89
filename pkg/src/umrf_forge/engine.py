"""Simulated action engine: ground UMRF nodes to actions and run them.

Behaviours available to registry entries:

``set_pose``     pose <- (x, y, yaw) from the node's inputs
``count_scan``   scans_taken += 1
``set_posture``  arm_posture <- inputs["posture"] (default ``"ready"``)
``noop``         state unchanged

Acyclic graphs run in tie-broken topological order, one simulated second per
action.  Cyclic graphs run by activation: entry actions start, and each
finished action activates its children, until nothing is pending or
``max_steps`` actions have run.
"""
from __future__ import annotations

import json
from collections import deque
from dataclasses import dataclass, field, replace
from importlib import resources
from pathlib import Path
from typing import Iterator, Sequence

from umrf_forge.umrf import (
    CycleReport,
    NodeRef,
    UmrfGraph,
    UmrfNode,
    VALUE_TYPES,
    topological_order,
    validate_graph,
)

BEHAVIORS = ("set_pose", "count_scan", "set_posture", "noop")
GROUNDING_CODES = frozenset({"unknown_action", "missing_parameter", "parameter_type_mismatch"})
DEFAULT_MAX_STEPS = 1000


@dataclass(frozen=True)
class ActionSpec:
    name: str
    required_inputs: dict[str, str] = field(default_factory=dict)
    optional_inputs: dict[str, str] = field(default_factory=dict)
    behavior: str = "noop"

    def __post_init__(self) -> None:
        if self.behavior not in BEHAVIORS:
            raise ValueError(f"unknown behavior {self.behavior!r}")
        for t in list(self.required_inputs.values()) + list(self.optional_inputs.values()):
            if t not in VALUE_TYPES:
                raise ValueError(f"unknown value type {t!r}")


@dataclass(frozen=True)
class GroundingViolation:
    code: str
    node: NodeRef
    message: str

    def __str__(self) -> str:
        return f"{self.code} [{self.node}]: {self.message}"


@dataclass(frozen=True)
class WorldState:
    pose: tuple[float, float, float] = (0.0, 0.0, 0.0)
    scans_taken: int = 0
    arm_posture: str = "stowed"

    def to_dict(self) -> dict:
        x, y, yaw = self.pose
        return {"x": x, "y": y, "yaw": yaw, "scans_taken": self.scans_taken, "arm_posture": self.arm_posture}


@dataclass(frozen=True)
class TraceEvent:
    node: NodeRef
    action: str
    start: float
    end: float
    state_after: WorldState
    status: str = "ok"

    def to_dict(self) -> dict:
        return {
            "node": {"name": self.node.name, "id": self.node.id},
            "action": self.action,
            "start": self.start,
            "end": self.end,
            "status": self.status,
            "state_after": self.state_after.to_dict(),
        }


@dataclass(frozen=True)
class Trace:
    events: tuple[TraceEvent, ...]
    truncated: bool = False
    max_steps: int = DEFAULT_MAX_STEPS

    def __iter__(self) -> Iterator[TraceEvent]:
        return iter(self.events)

    def __len__(self) -> int:
        return len(self.events)

    def __getitem__(self, i):
        return self.events[i]

    @property
    def actions(self) -> list[str]:
        return [e.action for e in self.events]

    @property
    def final_state(self) -> WorldState | None:
        return self.events[-1].state_after if self.events else None

    def to_jsonl(self) -> str:
        lines = [json.dumps(e.to_dict()) for e in self.events]
        if self.truncated:
            lines.append(json.dumps({"truncated": True, "max_steps": self.max_steps}))
        return "".join(line + "\n" for line in lines)


@dataclass(frozen=True)
class Plan:
    graph: UmrfGraph
    steps: dict[NodeRef, ActionSpec]

    @property
    def empty(self) -> bool:
        return not self.graph.nodes


EMPTY_PLAN = Plan(UmrfGraph("empty", ()), {})


def load_registry(path: str | Path | None = None) -> list[ActionSpec]:
    if path is None:
        text = (resources.files("umrf_forge") / "data" / "actions.json").read_text(encoding="utf-8")
    else:
        text = Path(path).read_text(encoding="utf-8")
    return [ActionSpec(**entry) for entry in json.loads(text)]


def ground_graph(graph: UmrfGraph, registry: Sequence[ActionSpec] | None = None) -> Plan | list[GroundingViolation]:
    registry = load_registry() if registry is None else registry
    by_name = {spec.name: spec for spec in registry}
    problems: list[GroundingViolation] = []
    steps = {}
    for node in graph.nodes:
        spec = by_name.get(node.name)
        if spec is None:
            problems.append(GroundingViolation("unknown_action", node.ref, f"no executable action named {node.name!r}"))
            continue
        for pname, ptype in spec.required_inputs.items():
            param = node.input_parameters.get(pname)
            if param is None:
                problems.append(GroundingViolation("missing_parameter", node.ref, f"{node.name} requires input {pname!r}"))
            elif param.value_type != ptype:
                problems.append(GroundingViolation(
                    "parameter_type_mismatch", node.ref, f"input {pname!r} must be {ptype}, got {param.value_type}"
                ))
        for pname, ptype in spec.optional_inputs.items():
            param = node.input_parameters.get(pname)
            if param is not None and param.value_type != ptype:
                problems.append(GroundingViolation(
                    "parameter_type_mismatch", node.ref, f"input {pname!r} must be {ptype}, got {param.value_type}"
                ))
        steps[node.ref] = spec
    return problems if problems else Plan(graph, steps)


def _run_node(node: UmrfNode, spec: ActionSpec, state: WorldState) -> tuple[WorldState, str]:
    params = {k: p.value for k, p in node.input_parameters.items()}
    if spec.behavior == "set_pose":
        return replace(state, pose=(params["x"], params["y"], params["yaw"])), "ok"
    if spec.behavior == "count_scan":
        return replace(state, scans_taken=state.scans_taken + 1), "ok"
    if spec.behavior == "set_posture":
        return replace(state, arm_posture=str(params.get("posture", "ready"))), "ok"
    return state, "ok"


def execute_graph(plan: Plan, initial: WorldState | None = None, max_steps: int = DEFAULT_MAX_STEPS) -> Trace:
    state = initial or WorldState()
    if plan.empty:
        return Trace((), False, max_steps)
    violations = validate_graph(plan.graph)
    if violations:
        raise ValueError(f"plan graph is invalid: {violations[0]}")
    by_ref = {n.ref: n for n in plan.graph.nodes}
    order = topological_order(plan.graph)

    events: list[TraceEvent] = []

    def run(ref: NodeRef) -> None:
        nonlocal state
        node = by_ref[ref]
        t = float(len(events))
        state, status = _run_node(node, plan.steps[ref], state)
        events.append(TraceEvent(ref, node.name, t, t + 1.0, state, status))

    if not isinstance(order, CycleReport):
        for node in order[:max_steps]:
            run(node.ref)
        return Trace(tuple(events), len(order) > max_steps, max_steps)

    queue = deque(sorted(r for r, n in by_ref.items() if not n.parents))
    while queue:
        if len(events) >= max_steps:
            return Trace(tuple(events), True, max_steps)
        ref = queue.popleft()
        run(ref)
        queue.extend(sorted(set(by_ref[ref].children) | {c for c, n in by_ref.items() if ref in n.parents}))
    return Trace(tuple(events), False, max_steps)

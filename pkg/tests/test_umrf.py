import json
import random

import jsonschema
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from helpers import random_graph
from umrf_forge import data_path
from umrf_forge.umrf import (
    CycleReport,
    InvalidGraphError,
    NodeRef,
    Parameter,
    UmrfGraph,
    UmrfNode,
    UmrfSchemaError,
    UmrfSyntaxError,
    VIOLATION_CODES,
    format_number,
    make_graph,
    parse_graph,
    serialize_graph,
    topological_order,
    validate_graph,
)

R = NodeRef


def inspection_graph():
    refs = [R("navigation", 0), R("scan", 0), R("scan", 1)]
    return make_graph(
        "inspection",
        [
            {"name": "navigation", "id": 0, "inputs": {"x": 1.0, "y": 2.0, "yaw": 0.5, "location": "tank"}},
            {"name": "scan", "id": 0, "inputs": {"resolution": "low"}},
            {"name": "scan", "id": 1, "inputs": {"resolution": "high"}},
        ],
        [(refs[0], refs[1]), (refs[1], refs[2])],
    )


def chain(names, gname="chain"):
    refs = [R(n, i) for n, i in names]
    return make_graph(gname, [{"name": n, "id": i} for n, i in names], list(zip(refs, refs[1:])))


SCHEMA = json.loads(data_path("umrf.schema.json").read_text())


def test_parse_three_node_inspection_document():
    text = serialize_graph(inspection_graph())
    g = parse_graph(text)
    assert len(g.nodes) == 3
    assert len(g.edges()) == 2
    assert validate_graph(g) == []


def test_empty_node_list_is_schema_error():
    with pytest.raises(UmrfSchemaError) as err:
        parse_graph('{"graph_name": "x", "umrf_actions": []}')
    assert err.value.path == "umrf_actions"


def test_one_sided_link_parses_then_reports_one_violation():
    doc = {
        "graph_name": "half",
        "umrf_actions": [
            {"name": "a", "id": 0, "children": [{"name": "b", "id": 0}]},
            {"name": "b", "id": 0},
        ],
    }
    g = parse_graph(json.dumps(doc))
    violations = validate_graph(g)
    assert [v.code for v in violations] == ["inconsistent_link"]
    assert violations[0].node == R("a", 0)


def test_syntax_error_reports_byte_offset():
    text = '{"graph_name": "é", oops}'
    with pytest.raises(UmrfSyntaxError) as err:
        parse_graph(text)
    # "é" is two bytes in UTF-8, so the byte offset is one past the char offset
    assert err.value.offset == text.index("oops") + 1


@pytest.mark.parametrize(
    "doc, path",
    [
        ({"graph_name": "g", "umrf_actions": [{"name": "a", "id": -1}]}, "umrf_actions[0].id"),
        ({"graph_name": "g", "umrf_actions": [{"name": "a", "id": 0, "bogus": 1}]}, "umrf_actions[0].bogus"),
        ({"umrf_actions": [{"name": "a", "id": 0}]}, "graph_name"),
        (
            {"graph_name": "g", "umrf_actions": [{"name": "a", "id": 0, "input_parameters": {"x": {"pvf_type": "number", "pvf_value": "3"}}}]},
            "umrf_actions[0].input_parameters.x.pvf_value",
        ),
        (
            {"graph_name": "g", "umrf_actions": [{"name": "a", "id": 0, "input_parameters": {"x": {"pvf_type": "blob", "pvf_value": 1}}}]},
            "umrf_actions[0].input_parameters.x.pvf_type",
        ),
        ({"graph_name": "g", "umrf_actions": [{"name": "a", "id": 0, "parents": [{"name": "b"}]}]}, "umrf_actions[0].parents[0].id"),
        ({"graph_name": "g", "umrf_actions": [{"name": "a", "id": True}]}, "umrf_actions[0].id"),
    ],
)
def test_schema_errors_name_the_path(doc, path):
    with pytest.raises(UmrfSchemaError) as err:
        parse_graph(json.dumps(doc))
    assert err.value.path == path


def test_lenient_mode_preserves_unknown_fields():
    doc = {
        "graph_name": "g",
        "note": {"by": "model"},
        "umrf_actions": [{"name": "scan", "id": 0, "confidence": 0.5}],
    }
    with pytest.raises(UmrfSchemaError):
        parse_graph(json.dumps(doc))
    g = parse_graph(json.dumps(doc), strict=False)
    assert g.extra == {"note": {"by": "model"}}
    assert g.nodes[0].extra == {"confidence": 0.5}
    again = parse_graph(serialize_graph(g), strict=False)
    assert again == g


def test_serialize_is_idempotent_byte_for_byte():
    first = serialize_graph(parse_graph(serialize_graph(inspection_graph())))
    second = serialize_graph(parse_graph(first))
    assert first == second


def test_serialize_navigation_parameters():
    g = make_graph("hall", [{"name": "navigation", "id": 0, "inputs": {"x": 14, "y": 3.2, "yaw": 1.26}}])
    text = serialize_graph(g)
    assert '"pvf_value": 14\n' in text
    assert '"pvf_value": 3.2\n' in text
    assert '"pvf_value": 1.26\n' in text
    params = json.loads(text)["umrf_actions"][0]["input_parameters"]
    assert {k: v["pvf_value"] for k, v in params.items()} == {"x": 14, "y": 3.2, "yaw": 1.26}


def test_serialize_layout_and_key_order():
    text = serialize_graph(chain([("a", 0), ("b", 0)]))
    assert text == json.dumps(json.loads(text), indent=2, ensure_ascii=False)
    node = json.loads(text)["umrf_actions"][0]
    assert list(node) == ["name", "id", "effect", "input_parameters", "output_parameters", "parents", "children"]


def test_serialize_refuses_dangling_link():
    g = UmrfGraph("g", [UmrfNode(R("a", 0), children=(R("ghost", 0),))])
    with pytest.raises(InvalidGraphError) as err:
        serialize_graph(g)
    assert [v.code for v in err.value.violations] == ["dangling_link"]


def test_valid_five_step_sequence():
    g = chain([("navigate", 0), ("manipulate", 0), ("scan", 0), ("manipulate", 1), ("scan", 1)])
    assert validate_graph(g) == []


def test_cycle_with_entry_is_valid():
    e, a, b = R("e", 0), R("a", 0), R("b", 0)
    g = make_graph("loop", [{"name": "e"}, {"name": "a"}, {"name": "b"}], [(e, a), (a, b), (b, a)])
    assert validate_graph(g) == []


def test_no_entry_node():
    a, b = R("a", 0), R("b", 0)
    g = make_graph("ring", [{"name": "a"}, {"name": "b"}], [(a, b), (b, a)])
    assert [v.code for v in validate_graph(g)] == ["no_entry_node"]


def test_concurrency_is_not_a_violation():
    a, b, c = R("a", 0), R("b", 0), R("c", 0)
    g = make_graph("fan", [{"name": "a"}, {"name": "b"}, {"name": "c"}], [(a, b), (a, c)])
    assert validate_graph(g) == []


def test_unreachable_node():
    a, b, c, d = R("a", 0), R("b", 0), R("c", 0), R("d", 0)
    g = make_graph("island", [{"name": n} for n in "abcd"], [(a, b), (c, d), (d, c)])
    violations = validate_graph(g)
    assert sorted((v.code, v.node) for v in violations) == [("unreachable_node", c), ("unreachable_node", d)]


def test_duplicate_and_self_links():
    a = R("a", 0)
    g = UmrfGraph("g", [UmrfNode(a, parents=(a,)), UmrfNode(a)])
    codes = sorted(v.code for v in validate_graph(g))
    assert "duplicate_node" in codes and "self_link" in codes
    assert set(codes) <= VIOLATION_CODES


def test_parameter_kind_must_match():
    with pytest.raises(ValueError):
        Parameter("number", True)
    with pytest.raises(ValueError):
        Parameter("bool", 1)
    with pytest.raises(ValueError):
        Parameter("number", float("nan"))
    assert Parameter("number-list", [1, 2]).value == (1.0, 2.0)


def test_topological_order_chain():
    g = chain([("navigation", 0), ("scan", 0), ("scan", 1)])
    order = topological_order(g)
    assert [n.ref for n in order] == [R("navigation", 0), R("scan", 0), R("scan", 1)]


def test_topological_order_diamond_tie_break():
    a, b, c, d = (R(n, 0) for n in "ABCD")
    g = make_graph("diamond", [{"name": n} for n in "DCBA"], [(a, c), (a, b), (b, d), (c, d)])
    assert [n.ref.name for n in topological_order(g)] == ["A", "B", "C", "D"]


def test_topological_order_cycle_report():
    e, a, b = R("E", 0), R("A", 0), R("B", 0)
    g = make_graph("loop", [{"name": "E"}, {"name": "A"}, {"name": "B"}], [(e, a), (a, b), (b, a)])
    assert topological_order(g) == CycleReport(frozenset({a, b}))


@pytest.mark.parametrize(
    "x, json_text, marker_text",
    [(14.0, "14", "14"), (3.2, "3.2", "3.2"), (-0.0, "0", "0"), (1e16, "1e+16", "10000000000000000"),
     (1.5e-7, "1.5e-07", "0.00000015"), (-223.6, "-223.6", "-223.6"), (0.1 + 0.2, "0.30000000000000004", "0.30000000000000004")],
)
def test_format_number(x, json_text, marker_text):
    assert format_number(x) == json_text
    assert format_number(x, positional=True) == marker_text
    assert float(json_text) == x and float(marker_text) == x


def test_shipped_graphs_match_schema_document():
    for name in ("demo_examples.jsonl", "example_types.jsonl", "validation.jsonl"):
        for line in data_path(name).read_text().splitlines():
            jsonschema.validate(json.loads(line)["umrf_graph"], SCHEMA)


@settings(max_examples=150, deadline=None)
@given(st.randoms(use_true_random=False))
def test_round_trip_property(rnd):
    g = random_graph(random.Random(rnd.random()))
    assert validate_graph(g) == []
    text = serialize_graph(g)
    assert parse_graph(text) == g
    assert serialize_graph(parse_graph(text)) == text
    jsonschema.validate(json.loads(text), SCHEMA)


@settings(max_examples=100, deadline=None)
@given(st.randoms(use_true_random=False))
def test_validate_is_pure_and_topo_respects_edges(rnd):
    g = random_graph(random.Random(rnd.random()))
    assert validate_graph(g) == validate_graph(g)
    order = topological_order(g)
    if isinstance(order, CycleReport):
        assert order.nodes
        return
    pos = {n.ref: i for i, n in enumerate(order)}
    for p, c in g.edges():
        assert pos[p] < pos[c]

import json

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from umrf_forge import data_path
from umrf_forge.grammar import parse_command
from umrf_forge.prompt import (
    CUE,
    FewShotExample,
    OrderingFlag,
    PromptBudgetError,
    PromptSpec,
    build_prompt,
    estimate_tokens,
    extract_candidate,
    load_examples,
    load_pool,
    render_example,
    write_examples,
)
from umrf_forge.umrf import parse_graph, serialize_graph

V, L = OrderingFlag.VISUAL_FIRST, OrderingFlag.LANGUAGE_FIRST
DEMO = load_examples(data_path("demo_examples.jsonl"))
TYPES = load_examples(data_path("example_types.jsonl"))
QUERY = parse_command("robot go inspect the workshop [x=74.2; y=-223.6; yaw=2.72]")


def test_shipped_libraries_have_five_examples_each():
    assert [e.example_id for e in DEMO] == [1, 2, 3, 4, 5]
    assert [e.example_id for e in TYPES] == [1, 2, 3, 4, 5]
    assert all(e.cot_rationale for e in DEMO + TYPES)


def test_render_type1_visual_first():
    ex = TYPES[0]
    text = render_example(ex, V, include_cot=False)
    graph = serialize_graph(ex.umrf_output)
    assert text == (
        "[x=-9.074; y=-1.89; yaw=2.97] the left side of the same desk\n"
        "Turn left and approach the left side of the same desk\n" + graph + "\n\n"
    )


def test_render_language_first_swaps_first_two_blocks():
    ex = TYPES[0]
    v = render_example(ex, V).split("\n")
    l = render_example(ex, L).split("\n")
    assert (l[0], l[1]) == (v[1], v[0])
    assert l[2:] == v[2:]


def test_rationale_block_toggles():
    ex = TYPES[0]
    with_cot = render_example(ex, V, include_cot=True)
    without = render_example(ex, V, include_cot=False)
    assert ex.cot_rationale in with_cot
    assert ex.cot_rationale not in without
    assert with_cot.split("\n")[2] == ex.cot_rationale


def test_example_without_visual_cue_renders_language_only():
    ex = DEMO[4]
    assert ex.visual_cue is None
    assert render_example(ex, V, False) == render_example(ex, L, False)
    assert render_example(ex, V, False).startswith(ex.nl_command + "\n{")


def test_build_prompt_ends_with_query_and_cue():
    spec = PromptSpec(tuple((e, V) for e in DEMO), QUERY)
    built = build_prompt(spec)
    assert built.text.endswith("robot go inspect the workshop [x=74.2; y=-223.6; yaw=2.72]\nUMRF:\n")
    assert built.n_examples == 5
    assert built.token_estimate == estimate_tokens(built.text)


def test_empty_example_list_rejected():
    with pytest.raises(ValueError):
        PromptSpec((), QUERY)


def test_duplicate_pair_rejected_but_other_flag_allowed():
    with pytest.raises(ValueError):
        PromptSpec(((TYPES[0], V), (TYPES[0], V)), QUERY)
    PromptSpec(((TYPES[0], V), (TYPES[0], L)), QUERY)


def test_example_blocks_keep_list_order():
    spec = PromptSpec(((TYPES[4], L), (TYPES[3], V)), QUERY)
    text = build_prompt(spec).text
    assert spec.label() == "5L+4V"
    assert text.index(TYPES[4].nl_command) < text.index(TYPES[3].nl_command)
    assert text.startswith(TYPES[4].nl_command + "\n")


def test_permuting_examples_changes_text():
    a = build_prompt(PromptSpec(((TYPES[0], V), (TYPES[1], V)), QUERY)).text
    b = build_prompt(PromptSpec(((TYPES[1], V), (TYPES[0], V)), QUERY)).text
    assert a != b


def test_budget_error_lists_trailing_drops():
    spec = PromptSpec(tuple((e, V) for e in DEMO), QUERY)
    full = build_prompt(spec, budget=None)
    assert full.token_estimate > 400
    with pytest.raises(PromptBudgetError) as err:
        build_prompt(spec, budget=400)
    assert err.value.drop and err.value.drop == list(range(err.value.drop[0], 5))
    keep = err.value.drop[0]
    kept = PromptSpec(spec.examples[:keep], QUERY) if keep else None
    if kept:
        assert build_prompt(kept, budget=400).token_estimate <= 400


def test_missing_query_rejected():
    with pytest.raises(ValueError):
        build_prompt(PromptSpec(((TYPES[0], V),)))


def test_graph_blocks_reparse():
    spec = PromptSpec(tuple((e, L) for e in DEMO), QUERY)
    blocks = build_prompt(spec).text.split("\n\n")[:-1]
    for block, ex in zip(blocks, DEMO):
        graph_text = block[block.index("{"):]
        assert parse_graph(graph_text) == ex.umrf_output


@settings(max_examples=40, deadline=None)
@given(st.permutations(range(10)), st.integers(1, 3), st.booleans())
def test_build_is_deterministic(order, k, cot):
    pool = [(e, f) for e in TYPES for f in (V, L)]
    chosen = tuple(pool[i] for i in order[:k])
    a = build_prompt(PromptSpec(chosen, QUERY, cot)).text
    b = build_prompt(PromptSpec(chosen, QUERY, cot)).text
    assert a == b


def test_extract_candidate():
    graph = serialize_graph(DEMO[4].umrf_output)
    assert extract_candidate(graph + "\n\nnext example junk") == graph
    assert extract_candidate("\n" + graph) == graph
    assert extract_candidate(f"prompt\n{CUE}\n{graph}") == graph
    assert extract_candidate(graph + "###tail", stop=["###"]) == graph
    assert extract_candidate("") == ""


def test_example_library_round_trip(tmp_path):
    path = tmp_path / "ex.jsonl"
    write_examples(DEMO, path)
    assert load_examples(path) == DEMO


def test_load_pool_expands_flags(tmp_path):
    pool = load_pool(data_path("example_types.jsonl"))
    assert len(pool) == 10
    assert [(e.example_id, f) for e, f in pool[:2]] == [(1, V), (1, L)]
    path = tmp_path / "pinned.jsonl"
    rec = TYPES[0].to_dict() | {"flag": "L"}
    path.write_text(json.dumps(rec) + "\n")
    assert [(e.example_id, f) for e, f in load_pool(path)] == [(1, L)]


def test_invalid_example_rejected():
    with pytest.raises(ValueError):
        FewShotExample(1, "  ", TYPES[0].umrf_output)

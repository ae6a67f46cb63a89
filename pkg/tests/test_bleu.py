import math
import random

import pytest
from hypothesis import given
from hypothesis import strategies as st

from helpers import bleu_oracle
from umrf_forge.bleu import TokenSequence, average_bleu, sentence_bleu, tokenize


def test_tokenize_splits_json_punctuation():
    assert list(tokenize('{"name": "navigate"}')) == ["{", '"', "name", '"', ":", '"', "navigate", '"', "}"]


def test_tokenize_marker_and_edge_cases():
    assert list(tokenize("scan")) == ["scan"]
    assert list(tokenize("")) == []
    assert list(tokenize("[x=1; y=2]")) == ["[", "x", "=", "1", ";", "y", "=", "2", "]"]
    assert list(tokenize("Turn Left.")) == ["Turn", "Left."]


def test_token_sequence_rejects_empty_tokens():
    with pytest.raises(ValueError):
        TokenSequence(("a", ""))


def test_identity_and_disjoint():
    x = tokenize("navigate to the main hall now")
    assert sentence_bleu(x, x) == 1.0
    assert sentence_bleu(tokenize("alpha beta gamma delta"), x) == 0.0


def test_four_gram_miss_fixture():
    cand = tokenize("navigate to the hall")
    ref = tokenize("navigate to the main hall")
    # p1 = 4/4, p2 = 2/3, p3 = 1/2, p4 = 0/1
    assert sentence_bleu(cand, ref) == 0.0
    smoothed = sentence_bleu(cand, ref, smoothing=True)
    assert smoothed > 0
    expected = math.exp(1 - 5 / 4) * (1 * (2 / 3) * (1 / 2) * 1e-9) ** 0.25
    assert smoothed == pytest.approx(expected, rel=1e-12)


def test_short_exact_match_scores_one():
    assert sentence_bleu(["scan"], ["scan"]) == 1.0
    assert sentence_bleu(["a", "b"], ["a", "b"], max_n=4) == 1.0


def test_argument_errors():
    assert sentence_bleu([], ["a"]) == 0.0
    with pytest.raises(ValueError):
        sentence_bleu(["a"], [])
    with pytest.raises(ValueError):
        sentence_bleu(["a"], ["a"], max_n=0)
    with pytest.raises(ValueError):
        average_bleu([])


def test_average_of_identical_pairs():
    assert average_bleu([("a b c", "a b c"), ("x y", "x y")]) == 1.0


def test_average_half():
    assert average_bleu([("a b c d", "a b c d"), ("p q", "a b c d")]) == 0.5


def test_average_matches_oracle_on_five_pairs():
    pairs = [
        ('{"name": "scan", "id": 0}', '{"name": "scan", "id": 0}'),
        ('{"name": "scan", "id": 1}', '{"name": "scan", "id": 0}'),
        ("navigate to the hall", "navigate to the main hall"),
        ('{ "x": 14 , "y": 3.2 }', '{ "x": 14 , "y": 3.2 , "yaw": 1.26 }'),
        ("a b c d e f", "f e d c b a"),
    ]
    expected = sum(bleu_oracle(list(tokenize(c)), list(tokenize(r))) for c, r in pairs) / 5
    assert average_bleu(pairs) == pytest.approx(expected, abs=1e-12)
    assert 0 < expected < 1


def test_oracle_agreement_random_pairs():
    rng = random.Random(7)
    vocab = list("abcdef")
    for _ in range(100):
        ref = [rng.choice(vocab) for _ in range(rng.randint(1, 15))]
        cand = [rng.choice(vocab) for _ in range(rng.randint(1, 15))]
        for smoothing in (False, True):
            assert abs(sentence_bleu(cand, ref, smoothing=smoothing) - bleu_oracle(cand, ref, smoothing=smoothing)) <= 1e-12


tokens = st.lists(st.sampled_from(["{", "}", '"', "name", "scan", "id", "0", "1", ":"]), min_size=1, max_size=20)


@given(tokens, tokens, st.integers(1, 5), st.booleans())
def test_score_in_unit_interval(cand, ref, n, smoothing):
    assert 0.0 <= sentence_bleu(cand, ref, n, smoothing) <= 1.0


@given(tokens)
def test_self_score_is_one(x):
    assert sentence_bleu(x, x) == 1.0


@given(st.lists(st.text(alphabet="abc", min_size=1, max_size=2), min_size=2, max_size=20), st.data())
def test_truncation_strictly_lowers_score(ref, data):
    m = data.draw(st.integers(1, len(ref) - 1))
    assert sentence_bleu(ref[:m], ref) < sentence_bleu(ref, ref)

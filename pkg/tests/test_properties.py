"""Property tests over randomly generated inputs (hypothesis)."""

import math

from hypothesis import given, settings, strategies as st

from geoerasure import (
    CandidateSet,
    Country,
    ProbDist,
    aggregate_model,
    aggregate_uniform,
    erasure,
    erasure_complement,
    kl,
)
from geoerasure.corpus import count_mentions

WORLD = CandidateSet(
    (
        Country("United Kingdom", ("United Kingdom", "UK")),
        Country("Ukraine", ("Ukraine",)),
        Country("Canada", ("Canada",)),
    )
)

weights = st.lists(
    st.floats(min_value=1e-6, max_value=1e6, allow_nan=False), min_size=3, max_size=3
)


def dist(ws):
    return ProbDist.from_weights(WORLD, ws)


@settings(max_examples=200, deadline=None)
@given(weights, weights, st.floats(min_value=0, max_value=50))
def test_decomposition_holds_for_arbitrary_r(w1, w2, r):
    p_true, p = dist(w1), dist(w2)
    total = erasure(p_true, p, r) + erasure_complement(p_true, p, r)
    assert abs(total - kl(p_true, p)) <= 1e-12


@settings(max_examples=200, deadline=None)
@given(st.lists(weights, min_size=1, max_size=6))
def test_aggregate_uniform_is_valid_dist(rows):
    preds = {f"p{i}": dist(w) for i, w in enumerate(rows)}
    agg = aggregate_uniform(preds)  # constructor enforces normalization
    assert all(p >= 0 for p in agg.probs)


@settings(max_examples=200, deadline=None)
@given(
    st.lists(weights, min_size=1, max_size=6),
    st.lists(
        st.floats(min_value=-200, max_value=0, allow_nan=False),
        min_size=6,
        max_size=6,
    ),
)
def test_aggregate_model_is_valid_dist(rows, logprobs):
    preds = {f"p{i}": dist(w) for i, w in enumerate(rows)}
    lps = {f"p{i}": logprobs[i] for i in range(len(rows))}
    agg = aggregate_model(preds, lps)
    assert abs(math.fsum(agg.probs) - 1.0) <= 1e-9


text_alphabet = st.sampled_from(
    ["UK", "Ukraine", "Canada", "United Kingdom", "uk", "x", "(", " ", ".", "\n", "e"]
)


@settings(max_examples=300, deadline=None)
@given(st.lists(text_alphabet, max_size=80))
def test_counts_match_naive_scan(pieces):
    text = "".join(pieces)

    def word(ch):
        return ch.isalnum()

    matches = []
    for idx, country in enumerate(WORLD):
        for alias in country.aliases:
            start = 0
            while True:
                pos = text.find(alias, start)
                if pos < 0:
                    break
                end = pos + len(alias)
                if (pos == 0 or not word(text[pos - 1])) and (
                    end == len(text) or not word(text[end])
                ):
                    matches.append((pos, end, idx))
                start = pos + 1
    matches.sort(key=lambda m: (m[0], m[0] - m[1]))
    expected = [0] * len(WORLD)
    cursor = 0
    for s, e, idx in matches:
        if s >= cursor:
            expected[idx] += 1
            cursor = e
    assert list(count_mentions(text, WORLD).counts) == expected

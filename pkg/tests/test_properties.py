import math

import pytest
from hypothesis import given, settings, strategies as st

from genparse.evaluate import bracket_prf, extract_brackets, oracle_f1
from genparse.models import UNK, CallableModel, EnsembleModel
from genparse.transition import Constraints, advance, initial_state, legal_actions
from genparse.treebank import (
    GEN,
    NT,
    REDUCE,
    Inventory,
    Sentence,
    Tree,
    actions_to_tree,
    parse_bracketed,
    serialize,
    tree_to_actions,
)

LABELS = ("S", "NP", "VP", "PP")
WORDS = st.sampled_from(["a", "b", "the", "dog", "x1", "?"])


@st.composite
def trees(draw, depth=0):
    label = draw(st.sampled_from(LABELS))
    if depth >= 4:
        return Tree(label, tuple(draw(st.lists(WORDS, min_size=1, max_size=3))))
    kids = draw(st.lists(st.one_of(WORDS, trees(depth=depth + 1)), min_size=1, max_size=4))
    return Tree(label, tuple(kids))


@given(trees(), st.sampled_from(list(Inventory)))
def test_action_roundtrip(tree, inventory):
    assert actions_to_tree(tree_to_actions(tree, inventory)) == tree


@given(trees())
def test_shift_roundtrip_needs_sentence(tree):
    seq = tree_to_actions(tree, shift=True)
    assert actions_to_tree(seq, Sentence.from_tree(tree)) == tree


@given(trees())
def test_length_law(tree):
    assert len(tree_to_actions(tree)) == 2 * tree.internal_count() + len(tree.leaves())


@given(trees())
def test_serialize_roundtrip(tree):
    assert parse_bracketed(serialize(tree)) == tree


@settings(max_examples=200)
@given(
    st.lists(WORDS, min_size=1, max_size=8),
    st.integers(1, 5),
    st.sampled_from(list(Inventory)),
    st.randoms(use_true_random=False),
)
def test_random_legal_walks_never_strand(words, max_open, inventory, rng):
    s = Sentence.of(words)
    c = Constraints(LABELS, max_open, inventory)
    state = initial_state(s)
    for _ in range(200):
        if state.finished:
            break
        acts = legal_actions(state, s, c)
        assert acts, "no legal action in an unfinished state"
        state = advance(state, rng.choice(acts), s)
        assert state.open_count <= max_open
    if state.finished:
        assert state.tree().leaves() == list(words)


@st.composite
def trees_over(draw, words, depth=0):
    """Random bracketing of a fixed word sequence."""
    label = draw(st.sampled_from(LABELS))
    if depth < 3 and draw(st.integers(0, 9)) == 0:
        return Tree(label, (draw(trees_over(words, depth + 1)),))
    if len(words) == 1 or depth >= 4:
        return Tree(label, tuple(words))
    k = draw(st.integers(1, min(4, len(words))))
    cuts = sorted(draw(st.sets(st.integers(1, len(words) - 1), min_size=k - 1, max_size=k - 1)))
    kids = []
    for i, j in zip([0] + cuts, cuts + [len(words)]):
        part = words[i:j]
        if len(part) == 1 and draw(st.booleans()):
            kids.append(part[0])
        else:
            kids.append(draw(trees_over(part, depth + 1)))
    return Tree(label, tuple(kids))


@st.composite
def same_yield(draw, n_trees):
    n = draw(st.integers(1, 8))
    words = [f"w{i}" for i in range(n)]
    return [draw(trees_over(words)) for _ in range(n_trees)]


@given(same_yield(2))
def test_bracket_symmetry_and_bounds(pair):
    a, b = pair
    ab, ba = bracket_prf(a, b), bracket_prf(b, a)
    assert ab.precision == ba.recall and ab.recall == ba.precision
    assert ab.f1 == ba.f1
    assert 0.0 <= ab.f1 <= 100.0
    assert bracket_prf(a, a).f1 == 100.0
    assert sum(extract_brackets(a).values()) == a.internal_count()


@given(same_yield(7), st.integers(1, 5))
def test_oracle_monotone_under_inclusion(ts, cut):
    gold, cands = ts[0], ts[1:]
    assert oracle_f1([cands], [gold]).f1 >= oracle_f1([cands[:cut]], [gold]).f1
    assert oracle_f1([cands + [gold]], [gold]).f1 == 100.0


@given(st.lists(st.tuples(st.floats(0.01, 1), st.floats(0.01, 1), st.floats(0.01, 1)), min_size=1, max_size=5))
def test_ensemble_is_normalised(weights):
    members = []
    for w in weights:
        z = sum(w)

        def fn(state, sentence, w=w, z=z):
            return {NT("S"): w[0] / z, GEN(UNK): w[1] / z, REDUCE: w[2] / z}

        members.append(CallableModel(fn, ["S"]))
    ens = EnsembleModel(members)
    s = Sentence.of("w")
    d = ens.score_actions(initial_state(s), s)
    assert math.fsum(math.exp(v) for v in d.values()) == pytest.approx(1.0, abs=1e-9)
    want = sum(w[0] / sum(w) for w in weights) / len(weights)
    assert math.exp(d[NT("S")]) == pytest.approx(want, abs=1e-12)

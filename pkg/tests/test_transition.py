import pytest

from genparse.transition import (
    Constraints,
    Mode,
    TransitionError,
    apply,
    initial_state,
    is_final,
    legal_actions,
    replay,
)
from genparse.treebank import GEN, NT, REDUCE, REDUCE_X, SHIFT, Inventory, Sentence, serialize, tree_to_actions

W = Sentence.of("w")


def cons(labels=("S",), max_open=2, **kw):
    return Constraints(labels, max_open, **kw)


def test_initial_state():
    st = initial_state(Sentence.of("a b c"))
    assert (st.open_count, st.words_done, st.finished) == (0, 0, False)
    assert not is_final(st)


def test_initial_only_nt():
    c = cons(("NP", "S", "VP"), 5)
    acts = legal_actions(initial_state(Sentence.of("a b")), Sentence.of("a b"), c)
    assert acts == (NT("NP"), NT("S"), NT("VP"))


def test_one_word_examples():
    c = cons()
    st = initial_state(W)
    assert legal_actions(st, W, c) == (NT("S"),)
    st = replay([NT("S"), GEN("w")], W, c)
    assert legal_actions(st, W, c) == (REDUCE,)


def test_nt_cap_blocks_nt_and_empty_blocks_reduce():
    c = cons(max_open=1)
    st = replay([NT("S")], W, c)
    assert legal_actions(st, W, c) == (GEN("w"),)


def test_root_reduce_needs_all_words():
    s = Sentence.of("a b")
    c = cons(max_open=3)
    st = replay([NT("S"), GEN("a")], s, c)
    assert REDUCE not in legal_actions(st, s, c)
    st = replay([NT("S"), NT("S"), GEN("a")], s, c)
    assert REDUCE in legal_actions(st, s, c)


def test_replay_gold(dog_tree):
    s = Sentence.from_tree(dog_tree)
    c = cons(("NP", "S", "VP"), 10)
    st = replay(tree_to_actions(dog_tree), s, c)
    assert is_final(st)
    assert serialize(st.tree()) == "(S (NP the dog) (VP barks))"
    assert st.actions() == tree_to_actions(dog_tree)


def test_unary_chain():
    st = replay([NT("S"), NT("S"), GEN("w"), REDUCE, REDUCE], W, cons())
    assert serialize(st.tree()) == "(S (S w))"


def test_reduce_after_nt_raises():
    with pytest.raises(TransitionError, match="empty"):
        replay([NT("S"), REDUCE], W, cons())


@pytest.mark.parametrize(
    "seq, msg",
    [
        ([NT("S"), GEN("x")], "next word"),
        ([GEN("w")], "no open"),
        ([NT("X")], "unknown label"),
        ([NT("S"), NT("S"), NT("S")], "limit"),
        ([NT("S"), GEN("w"), NT("S")], "already generated"),
        ([NT("S"), GEN("w"), REDUCE, REDUCE], "final"),
        ([NT("S"), GEN("w"), REDUCE_X("S")], "inventory"),
    ],
)
def test_illegal_actions(seq, msg):
    with pytest.raises(TransitionError, match=msg):
        replay(seq, W, cons())


def test_not_final_with_open_constituent():
    st = replay([NT("S"), GEN("w")], W, cons())
    assert st.words_done == 1 and st.open_count == 1
    assert not is_final(st)
    with pytest.raises(TransitionError):
        st.tree()


def test_legal_actions_on_final_raises():
    st = replay([NT("S"), GEN("w"), REDUCE], W, cons())
    with pytest.raises(TransitionError):
        legal_actions(st, W, cons())


def test_discriminative_uses_shift():
    c = cons(mode=Mode.DISCRIMINATIVE)
    st = replay([NT("S")], W, c)
    assert SHIFT in legal_actions(st, W, c)
    st = apply(st, SHIFT, W, c)
    assert st.stack[0] == "w"


def test_labeled_reduce():
    c = cons(("NP", "S"), inventory=Inventory.LABELED_REDUCE)
    st = replay([NT("S"), GEN("w")], W, c)
    assert legal_actions(st, W, c) == (REDUCE_X("NP"), REDUCE_X("S"))
    st = apply(st, REDUCE_X("NP"), W, c)
    assert serialize(st.tree()) == "(NP w)"


def test_require_label_match():
    c = cons(("NP", "S"), inventory=Inventory.LABELED_REDUCE, require_label_match=True)
    st = replay([NT("S"), GEN("w")], W, c)
    assert legal_actions(st, W, c) == (REDUCE_X("S"),)
    with pytest.raises(TransitionError, match="does not match"):
        apply(st, REDUCE_X("NP"), W, c)


def test_states_are_values():
    c = cons()
    a = replay([NT("S")], W, c)
    b = apply(a, GEN("w"), W, c)
    assert a.words_done == 0 and b.words_done == 1
    assert a == replay([NT("S")], W, c)


def test_constraints_validation():
    with pytest.raises(ValueError):
        Constraints(("S",), 0)
    with pytest.raises(ValueError):
        Constraints((), 3)

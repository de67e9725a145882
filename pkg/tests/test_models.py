import math
import random

import pytest

from genparse.models import (
    UNK,
    CallableModel,
    EnsembleModel,
    Flavor,
    ModelError,
    ModelFileError,
    NTBiasedModel,
    TrainConfig,
    ensemble_distribution,
    load_model,
    logprob_of_parse,
    logsumexp,
    perplexity,
    save_model,
    train_count_model,
)
from genparse.search import exhaustive_search
from genparse.synthetic import sample_corpus
from genparse.transition import TransitionError, advance, initial_state, legal_actions
from genparse.treebank import GEN, NT, REDUCE, SHIFT, Inventory, Sentence, parse_bracketed, tree_to_actions


def random_states(model, trees, n, seed=0, max_open=6):
    """Random reachable (state, sentence) pairs from legal walks over the trees' sentences."""
    rng = random.Random(seed)
    c = model.constraints(max_open)
    out = []
    while len(out) < n:
        s = Sentence.from_tree(rng.choice(trees))
        st = initial_state(s)
        while not st.finished and len(out) < n:
            out.append((st, s))
            st = advance(st, rng.choice(legal_actions(st, s, c)), s)
    return out


def total_mass(dist):
    return math.fsum(math.exp(v) for v in dist.values())


# -- count model ---------------------------------------------------------------


@pytest.mark.parametrize("alpha", [0.1, 0.5, 1.0])
def test_single_tree_add_alpha(alpha):
    m = train_count_model([parse_bracketed("(S w)")], TrainConfig(smoothing_alpha=alpha))
    s = Sentence.of("w")
    d = m.score_actions(initial_state(s), s)
    # action classes are NT(S), SHIFT, REDUCE
    assert len(m.classes) == 3
    assert math.exp(d[NT("S")]) == pytest.approx((1 + alpha) / (1 + 3 * alpha), abs=1e-12)


def test_single_tree_frozen_value():
    m = train_count_model([parse_bracketed("(S w)")])
    s = Sentence.of("w")
    assert math.exp(m.score_actions(initial_state(s), s)[NT("S")]) == pytest.approx(0.8461538461538461, abs=1e-12)


def test_duplicate_corpus_scales_counts():
    t = parse_bracketed("(S (NP a b) (VP c))")
    one = train_count_model([t, parse_bracketed("(S b)")], TrainConfig(unk_threshold=1))
    two = train_count_model([t, t, parse_bracketed("(S b)"), parse_bracketed("(S b)")], TrainConfig(unk_threshold=1))
    # counts double; with add-alpha only the unsmoothed ratios are unchanged
    assert one.class_counts.keys() == two.class_counts.keys()
    for ctx, counts in one.class_counts.items():
        assert {k: 2 * v for k, v in counts.items()} == two.class_counts[ctx]


def test_start_prefers_nt_s(gen_model, train_trees):
    s = Sentence.from_tree(train_trees[0])
    d = gen_model.score_actions(initial_state(s), s)
    best = max(d, key=d.get)
    assert best == NT("S")


def test_unseen_context_is_uniform():
    m = train_count_model([parse_bracketed("(S w)")], TrainConfig(order=1, flavor=Flavor.DISCRIMINATIVE, unk_threshold=1))
    s = Sentence.of("zzz")
    # discriminative context includes the next word; "zzz" maps to UNK, never seen
    d = m.score_actions(initial_state(s), s)
    vals = set(round(v, 12) for v in d.values())
    assert len(vals) == 1
    assert total_mass(d) == pytest.approx(1.0, abs=1e-9)


def test_unk_policy(gen_model):
    assert "dog" in gen_model.vocab
    assert UNK not in gen_model.vocab
    s = Sentence.of("qwerty")
    st = advance(initial_state(s), NT("S"), s)
    assert gen_model.action_logprob(st, s, GEN("qwerty")) == gen_model.score_actions(st, s)[GEN(UNK)]


@pytest.mark.parametrize("flavor", list(Flavor))
def test_normalisation_on_random_states(flavor, train_trees):
    m = train_count_model(train_trees, TrainConfig(flavor=flavor))
    for st, s in random_states(m, train_trees, 1000):
        assert total_mass(m.score_actions(st, s)) == pytest.approx(1.0, abs=1e-9)


def test_labeled_inventory_normalised(train_trees):
    m = train_count_model(train_trees, TrainConfig(inventory=Inventory.LABELED_REDUCE))
    for st, s in random_states(m, train_trees, 200):
        assert total_mass(m.score_actions(st, s)) == pytest.approx(1.0, abs=1e-9)


def test_score_legal_matches_full_distribution(gen_model, disc_model, train_trees):
    for m in (gen_model, disc_model):
        c = m.constraints(6)
        for st, s in random_states(m, train_trees, 300, seed=5):
            acts = legal_actions(st, s, c)
            full = m.score_actions(st, s)
            assert m.score_legal(st, s, acts) == [full[m.canonical(a)] for a in acts]


def test_discriminative_shift(disc_model):
    s = Sentence.of("the dog")
    st = advance(initial_state(s), NT("S"), s)
    assert disc_model.canonical(GEN("the")) == SHIFT
    assert SHIFT in disc_model.score_actions(st, s)
    assert all(a.kind.name != "GEN" for a in disc_model.action_space())


def test_scoring_final_state_raises(gen_model):
    s = Sentence.of("dogs")
    st = initial_state(s)
    for a in (NT("S"), GEN("dogs"), REDUCE):
        st = advance(st, a, s)
    with pytest.raises(TransitionError):
        gen_model.score_actions(st, s)


def test_empty_corpus_and_bad_config():
    with pytest.raises(ModelError):
        train_count_model([])
    with pytest.raises(ModelError):
        train_count_model([parse_bracketed("(S w)")], TrainConfig(labels=("NP",)))
    with pytest.raises(ModelError):
        train_count_model([parse_bracketed("(S w)")], TrainConfig(smoothing_alpha=0))


def test_perplexity_order_regression():
    train = sample_corpus(500, seed=21)
    dev = sample_corpus(100, seed=22)
    ppl = [perplexity(train_count_model(train, TrainConfig(order=o)), dev) for o in (1, 2)]
    # measured baseline: higher order helps on this corpus
    assert ppl[1] < ppl[0]


# -- parse log-probabilities -----------------------------------------------------


def test_logprob_decomposition(gen_model, train_trees):
    for t in train_trees[:50]:
        s = Sentence.from_tree(t)
        st, total = initial_state(s), 0.0
        for a in tree_to_actions(t):
            total += gen_model.score_actions(st, s)[gen_model.canonical(a)]
            st = advance(st, a, s)
        assert logprob_of_parse(gen_model, t, s) == total


def test_forced_path_has_logprob_zero():
    def fn(state, sentence):
        if state.open_count == 0:
            return {NT("S"): 1.0}
        if state.words_done < len(sentence):
            return {GEN(UNK): 1.0}
        return {REDUCE: 1.0}

    m = CallableModel(fn, ["S"])
    assert logprob_of_parse(m, parse_bracketed("(S a b c)"), Sentence.of("a b c")) == 0.0


def test_logprob_errors(gen_model):
    with pytest.raises(ModelError, match="yield"):
        logprob_of_parse(gen_model, parse_bracketed("(S a b)"), Sentence.of("a c"))
    with pytest.raises(ModelError, match="labels"):
        logprob_of_parse(gen_model, parse_bracketed("(FOO a)"), Sentence.of("a"))


def test_generative_mass_at_most_one():
    train = [parse_bracketed(x) for x in ["(S (NP a) b)", "(S a b)", "(NP (S a) (NP b))", "(S (S a b))"]]
    m = train_count_model(train, TrainConfig(unk_threshold=1, order=2))
    s = Sentence.of("a b")
    parses = exhaustive_search(m, s, m.constraints(2))
    mass = math.fsum(math.exp(lp) for _, lp in parses)
    assert 0 < mass <= 1


# -- ensembles and mixtures ------------------------------------------------------


def test_ensemble_of_identical_members(gen_model, train_trees):
    ens = EnsembleModel([gen_model] * 4)
    for st, s in random_states(gen_model, train_trees, 200):
        a, b = ens.score_actions(st, s), gen_model.score_actions(st, s)
        assert all(abs(a[k] - b[k]) < 1e-12 for k in b)
    t = train_trees[3]
    s = Sentence.from_tree(t)
    assert logprob_of_parse(ens, t, s) == pytest.approx(logprob_of_parse(gen_model, t, s), abs=1e-12)


def two_member_ensemble():
    def member(p_nt):
        def fn(state, sentence):
            return {NT("S"): p_nt, GEN(UNK): (1 - p_nt) / 2, REDUCE: (1 - p_nt) / 2}

        return CallableModel(fn, ["S"])

    return EnsembleModel([member(0.2), member(0.4)])


def test_ensemble_probability_mean():
    ens = two_member_ensemble()
    s = Sentence.of("w")
    d = ensemble_distribution(ens, initial_state(s), s)
    assert math.exp(d[NT("S")]) == pytest.approx(0.3, abs=1e-12)
    assert total_mass(d) == pytest.approx(1.0, abs=1e-9)


def test_ensemble_mismatch(gen_model, disc_model):
    with pytest.raises(ModelError):
        EnsembleModel([gen_model, disc_model])
    with pytest.raises(ModelError):
        EnsembleModel([])


def test_nt_biased_model(gen_model, train_trees):
    m = NTBiasedModel(gen_model, 0.5)
    for st, s in random_states(gen_model, train_trees, 300):
        d = m.score_actions(st, s)
        assert total_mass(d) == pytest.approx(1.0, abs=1e-9)
        nt_mass = math.fsum(math.exp(v) for a, v in d.items() if a.kind.name == "NT")
        assert all(nt_mass > math.exp(v) for a, v in d.items() if a.kind.name == "GEN")
    with pytest.raises(ModelError):
        NTBiasedModel(gen_model, 1.0)


def test_logsumexp():
    assert logsumexp([math.log(0.2), math.log(0.3)]) == pytest.approx(math.log(0.5))
    assert logsumexp([-math.inf, -math.inf]) == -math.inf


# -- model files -------------------------------------------------------------------


def test_save_load_roundtrip(tmp_path, gen_model, disc_model, train_trees):
    for m in (gen_model, disc_model):
        p = tmp_path / "m.bin"
        save_model(m, p)
        m2 = load_model(p)
        for st, s in random_states(m, train_trees, 100, seed=9):
            assert m.score_actions(st, s) == m2.score_actions(st, s)


def test_save_is_deterministic(tmp_path, train_trees):
    a, b = tmp_path / "a.bin", tmp_path / "b.bin"
    save_model(train_count_model(train_trees), a)
    save_model(train_count_model(list(train_trees)), b)
    assert a.read_bytes() == b.read_bytes()


def test_corrupt_files(tmp_path, gen_model):
    p = tmp_path / "m.bin"
    save_model(gen_model, p)
    data = p.read_bytes()
    p.write_bytes(data[:-10])
    with pytest.raises(ModelFileError, match="checksum"):
        load_model(p)
    p.write_bytes(data[:20])
    with pytest.raises(ModelFileError, match="truncated"):
        load_model(p)
    p.write_bytes(b"NOTAMODL" + data[8:])
    with pytest.raises(ModelFileError, match="not a model"):
        load_model(p)
    p.write_bytes(data[:8] + b"\x00\x63" + data[10:])
    with pytest.raises(ModelFileError, match="version"):
        load_model(p)
    flipped = bytearray(data)
    flipped[-3] ^= 1
    p.write_bytes(bytes(flipped))
    with pytest.raises(ModelFileError, match="checksum"):
        load_model(p)

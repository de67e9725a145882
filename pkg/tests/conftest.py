import random

import pytest

from genparse.models import Flavor, TrainConfig, train_count_model
from genparse.synthetic import sample_corpus
from genparse.treebank import parse_bracketed


@pytest.fixture(scope="session")
def train_trees():
    return sample_corpus(600, seed=1, max_len=12)


@pytest.fixture(scope="session")
def gen_model(train_trees):
    return train_count_model(train_trees, TrainConfig(flavor=Flavor.GENERATIVE))


@pytest.fixture(scope="session")
def disc_model(train_trees):
    return train_count_model(train_trees, TrainConfig(flavor=Flavor.DISCRIMINATIVE))


@pytest.fixture(scope="session")
def tiny_model():
    """Generative model over labels {A, B} and words w0..w3, small enough for exhaustive search."""
    rng = random.Random(3)
    from genparse.synthetic import random_tree

    trees = [random_tree(rng, ("A", "B"), ("w0", "w1", "w2", "w3"), max_words=4) for _ in range(200)]
    return train_count_model(trees, TrainConfig(flavor=Flavor.GENERATIVE, order=2))


@pytest.fixture
def dog_tree():
    return parse_bracketed("(S (NP the dog) (VP barks))")


def pytest_terminal_summary(terminalreporter):
    mod = __import__("sys").modules.get("test_acceptance")
    if mod is None or not mod.RESULTS:
        return
    terminalreporter.section("acceptance criteria")
    for n in sorted(mod.RESULTS):
        terminalreporter.write_line(mod.RESULTS[n])

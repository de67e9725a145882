"""Desk-scale corpora: a small English-like probabilistic grammar and random trees."""
from __future__ import annotations

import random
from typing import Sequence

from .treebank import Tree

# category -> words; a few words are ambiguous between categories
LEXICON = {
    "DT": ["the", "a", "every", "some", "this", "that", "no"],
    "NN": [
        "dog", "cat", "man", "woman", "child", "park", "telescope", "book", "garden", "house",
        "river", "city", "teacher", "student", "letter", "table", "window", "car", "road", "tree",
        "bird", "song", "idea", "market", "friend", "story", "paper", "hill", "boat", "school",
    ],
    "NNS": ["dogs", "cats", "people", "books", "trees", "birds", "songs", "stories", "cars", "friends"],
    "NNP": ["Mary", "John", "Paris", "Kim", "Lee", "Sam", "Oslo", "Rome"],
    "PRP": ["she", "he", "they", "we", "it", "you"],
    "JJ": ["big", "small", "old", "young", "red", "happy", "quiet", "bright", "strange", "tall", "green", "new"],
    "RB": ["very", "quite", "really", "rather"],
    "VBD": [
        "saw", "liked", "found", "took", "gave", "read", "wrote", "heard", "watched", "sold",
        "bought", "left", "knew", "said", "thought", "walked", "slept", "ran", "sang", "met",
    ],
    "MD": ["will", "can", "might", "should"],
    "VB": ["see", "like", "find", "take", "read", "write", "leave", "walk", "sleep", "meet"],
    "IN": ["with", "in", "on", "near", "under", "from", "by", "to"],
    "COMP": ["that", "because", "while", "if"],
    "CC": ["and", "or", "but"],
}

# (rhs, weight); "leaf" expansions are used once the depth budget runs out
GRAMMAR = {
    "S": [(("NP", "VP"), 0.85), (("S", "CC", "S"), 0.05), (("PP", "NP", "VP"), 0.10)],
    "NP": [
        (("DT", "NN"), 0.30), (("DT", "JJ", "NN"), 0.12), (("NNP",), 0.12), (("PRP",), 0.12),
        (("NNS",), 0.06), (("JJ", "NNS"), 0.05), (("NP", "PP"), 0.15), (("NP", "SBAR"), 0.04),
        (("DT", "ADJP", "NN"), 0.04),
    ],
    "VP": [
        (("VBD", "NP"), 0.32), (("VBD",), 0.12), (("VBD", "NP", "PP"), 0.18), (("VBD", "PP"), 0.10),
        (("VBD", "SBAR"), 0.10), (("MD", "VP2"), 0.08), (("VBD", "ADJP"), 0.06), (("VBD", "NP", "NP"), 0.04),
    ],
    "VP2": [(("VB", "NP"), 0.5), (("VB",), 0.2), (("VB", "NP", "PP"), 0.3)],
    "PP": [(("IN", "NP"), 1.0)],
    "SBAR": [(("COMP", "S"), 1.0)],
    "ADJP": [(("JJ",), 0.5), (("RB", "JJ"), 0.5)],
}
SHALLOW = {
    "S": [(("NP", "VP"), 1.0)],
    "NP": [(("DT", "NN"), 0.4), (("NNP",), 0.2), (("PRP",), 0.2), (("NNS",), 0.2)],
    "VP": [(("VBD", "NP"), 0.5), (("VBD",), 0.5)],
    "VP2": [(("VB",), 1.0)],
    "PP": [(("IN", "NP"), 1.0)],
    "SBAR": [(("COMP", "S"), 1.0)],
    "ADJP": [(("JJ",), 1.0)],
}
# VP2 is an internal alias for VP after a modal
_RENAME = {"VP2": "VP"}
LABELS = ("ADJP", "NP", "PP", "S", "SBAR", "VP")


def _choose(rng: random.Random, options):
    rhs, weights = zip(*options)
    return rng.choices(rhs, weights=weights, k=1)[0]


def _expand(rng: random.Random, symbol: str, depth: int, max_depth: int, pos: bool):
    if symbol in LEXICON:
        word = rng.choice(LEXICON[symbol])
        tag = "IN" if symbol == "COMP" else symbol
        return Tree(tag, (word,)) if pos else word
    rules = GRAMMAR[symbol] if depth < max_depth else SHALLOW[symbol]
    children = tuple(_expand(rng, s, depth + 1, max_depth, pos) for s in _choose(rng, rules))
    return Tree(_RENAME.get(symbol, symbol), children)


def sample_tree(rng: random.Random, max_depth: int = 6, pos: bool = False) -> Tree:
    return _expand(rng, "S", 0, max_depth, pos)


def sample_corpus(
    n: int,
    seed: int = 0,
    min_len: int = 2,
    max_len: int = 15,
    max_depth: int = 6,
    pos: bool = False,
) -> list[Tree]:
    """``n`` trees from the toy grammar, rejection-sampled to the length window."""
    rng = random.Random(seed)
    out = []
    while len(out) < n:
        t = sample_tree(rng, max_depth, pos)
        if min_len <= len(t.leaves()) <= max_len:
            out.append(t)
    return out


def random_tree(
    rng: random.Random,
    labels: Sequence[str],
    vocab: Sequence[str],
    max_words: int = 8,
    max_children: int = 4,
    unary_prob: float = 0.15,
    max_depth: int = 6,
) -> Tree:
    """Arbitrary tree shape over random words, including unary chains."""
    n = rng.randint(1, max_words)
    words = [rng.choice(vocab) for _ in range(n)]

    def build(ws: list[str], depth: int) -> Tree:
        label = rng.choice(labels)
        if depth < max_depth and rng.random() < unary_prob:
            return Tree(label, (build(ws, depth + 1),))
        if len(ws) == 1 or depth >= max_depth:
            return Tree(label, tuple(ws))
        k = rng.randint(1, min(max_children, len(ws)))
        cuts = sorted(rng.sample(range(1, len(ws)), k - 1)) if k > 1 else []
        parts = [ws[i:j] for i, j in zip([0] + cuts, cuts + [len(ws)])]
        children = []
        for p in parts:
            if len(p) == 1 and rng.random() < 0.5:
                children.append(p[0])
            else:
                children.append(build(p, depth + 1))
        return Tree(label, tuple(children))

    return build(words, 0)

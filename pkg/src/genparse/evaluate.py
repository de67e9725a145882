"""Labeled bracket scoring (evalb-style), oracle F1 and paired bootstrap."""
from __future__ import annotations

from collections import Counter
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

from .treebank import Sentence, Tree


class YieldMismatch(ValueError):
    pass


@dataclass(frozen=True)
class EvalConfig:
    ignore_labels: frozenset = frozenset({"TOP"})
    # tokens removed before span indices are computed (evalb's DELETE_LABEL for punctuation)
    ignore_tokens: frozenset = frozenset()


DEFAULT = EvalConfig()


@dataclass(frozen=True)
class PRF:
    matched: int
    gold: int
    pred: int

    @property
    def precision(self) -> float:
        return 100.0 if self.pred == 0 else 100.0 * self.matched / self.pred

    @property
    def recall(self) -> float:
        return 100.0 if self.gold == 0 else 100.0 * self.matched / self.gold

    @property
    def f1(self) -> float:
        p, r = self.precision, self.recall
        return 0.0 if p + r == 0 else 2 * p * r / (p + r)

    def __add__(self, other: "PRF") -> "PRF":
        return PRF(self.matched + other.matched, self.gold + other.gold, self.pred + other.pred)


def extract_brackets(tree: Tree, sentence: Sentence | Sequence[str] | None = None, config: EvalConfig = DEFAULT) -> Counter:
    """Multiset of ``(label, start, end)`` spans, end exclusive."""
    leaves = tree.leaves()
    if sentence is not None and tuple(leaves) != tuple(sentence):
        raise YieldMismatch(f"tree yield {leaves} != sentence {list(sentence)}")
    out: Counter = Counter()

    def walk(node, start: int) -> int:
        if isinstance(node, str):
            return start if node in config.ignore_tokens else start + 1
        end = start
        for c in node.children:
            end = walk(c, end)
        if node.label not in config.ignore_labels and end > start:
            out[(node.label, start, end)] += 1
        return end

    walk(tree, 0)
    return out


def bracket_prf(gold: Tree, pred: Tree, config: EvalConfig = DEFAULT) -> PRF:
    if gold.leaves() != pred.leaves():
        raise YieldMismatch(f"gold yield {gold.leaves()} != predicted yield {pred.leaves()}")
    g = extract_brackets(gold, config=config)
    p = extract_brackets(pred, config=config)
    return PRF(sum((g & p).values()), sum(g.values()), sum(p.values()))


def corpus_f1(pairs: Iterable[tuple[Tree, Tree]], config: EvalConfig = DEFAULT) -> PRF:
    """Micro-averaged scores over ``(gold, pred)`` pairs."""
    total = PRF(0, 0, 0)
    n = 0
    for gold, pred in pairs:
        total = total + bracket_prf(gold, pred, config)
        n += 1
    if n == 0:
        raise ValueError("corpus_f1 needs at least one pair")
    return total


def oracle_choices(candidate_sets: Sequence[Sequence[Tree]], golds: Sequence[Tree], config: EvalConfig = DEFAULT) -> list[Tree]:
    """Per sentence, the first candidate with the highest sentence F1."""
    if len(candidate_sets) != len(golds):
        raise ValueError("candidate sets and golds differ in length")
    chosen = []
    for i, (cands, gold) in enumerate(zip(candidate_sets, golds)):
        if not cands:
            raise ValueError(f"empty candidate set for sentence {i}")
        best, best_f1 = None, -1.0
        for t in cands:
            f = bracket_prf(gold, t, config).f1
            if f > best_f1:
                best, best_f1 = t, f
        chosen.append(best)
    return chosen


def oracle_f1(candidate_sets: Sequence[Sequence[Tree]], golds: Sequence[Tree], config: EvalConfig = DEFAULT) -> PRF:
    return corpus_f1(zip(golds, oracle_choices(candidate_sets, golds, config)), config)


def sentence_counts(golds: Sequence[Tree], preds: Sequence[Tree], config: EvalConfig = DEFAULT) -> np.ndarray:
    """``(n, 3)`` int array of matched, gold, pred bracket counts."""
    if len(golds) != len(preds):
        raise ValueError(f"length mismatch: {len(golds)} golds vs {len(preds)} predictions")
    rows = [bracket_prf(g, p, config) for g, p in zip(golds, preds)]
    return np.array([[r.matched, r.gold, r.pred] for r in rows], dtype=np.int64).reshape(-1, 3)


def _f1_from_sums(m: np.ndarray, g: np.ndarray, p: np.ndarray) -> np.ndarray:
    with np.errstate(divide="ignore", invalid="ignore"):
        prec = np.where(p == 0, 1.0, m / np.where(p == 0, 1, p))
        rec = np.where(g == 0, 1.0, m / np.where(g == 0, 1, g))
        s = prec + rec
        return np.where(s == 0, 0.0, 200.0 * prec * rec / np.where(s == 0, 1, s))


@dataclass(frozen=True)
class SignificanceResult:
    f1_a: float
    f1_b: float
    delta: float
    p_value: float
    iterations: int
    seed: int
    swapped: bool = False


def _bootstrap_chunk(ca: np.ndarray, cb: np.ndarray, seed: int, start: int, stop: int) -> int:
    n = len(ca)
    hits = 0
    for i in range(start, stop):
        idx = np.random.default_rng([seed, i]).integers(0, n, n)
        sa = ca[idx].sum(axis=0)
        sb = cb[idx].sum(axis=0)
        fa = _f1_from_sums(*sa)
        fb = _f1_from_sums(*sb)
        hits += int(fb >= fa)
    return hits


def paired_bootstrap(
    golds: Sequence[Tree],
    preds_a: Sequence[Tree],
    preds_b: Sequence[Tree],
    iterations: int = 10000,
    seed: int = 0,
    jobs: int = 1,
    config: EvalConfig = DEFAULT,
) -> SignificanceResult:
    """Paired bootstrap over sentences.

    ``p`` is the fraction of resamples in which system B's micro F1 is at
    least system A's (ties count toward the null).  If B is better on the full
    corpus the systems are swapped and ``swapped`` is set.  Resample ``i``
    draws from its own generator seeded with ``(seed, i)`` so any ``jobs``
    setting gives the same answer.
    """
    if not (len(golds) == len(preds_a) == len(preds_b)):
        raise ValueError("golds and predictions must be aligned")
    if iterations < 1:
        raise ValueError("iterations must be >= 1")
    ca = sentence_counts(golds, preds_a, config)
    cb = sentence_counts(golds, preds_b, config)
    return bootstrap_counts(ca, cb, iterations, seed, jobs)


def bootstrap_counts(ca: np.ndarray, cb: np.ndarray, iterations: int = 10000, seed: int = 0, jobs: int = 1) -> SignificanceResult:
    fa = float(_f1_from_sums(*ca.sum(axis=0)))
    fb = float(_f1_from_sums(*cb.sum(axis=0)))
    swapped = fb > fa
    if swapped:
        ca, cb, fa, fb = cb, ca, fb, fa
    if jobs <= 1:
        hits = _bootstrap_chunk(ca, cb, seed, 0, iterations)
    else:
        bounds = np.linspace(0, iterations, jobs + 1).astype(int)
        with ThreadPoolExecutor(jobs) as ex:
            hits = sum(ex.map(lambda lo_hi: _bootstrap_chunk(ca, cb, seed, *lo_hi), zip(bounds[:-1], bounds[1:])))
    return SignificanceResult(fa, fb, fa - fb, hits / iterations, iterations, seed, swapped)


def write_sentence_scores(path: str | Path, golds: Sequence[Tree], preds: Sequence[Tree], config: EvalConfig = DEFAULT) -> PRF:
    """Tab-separated ``index matched gold pred`` lines followed by a ``#`` summary block."""
    counts = sentence_counts(golds, preds, config)
    total = PRF(*map(int, counts.sum(axis=0))) if len(counts) else PRF(0, 0, 0)
    with open(path, "w", encoding="utf-8") as f:
        f.write("index\tmatched\tgold\tpred\n")
        for i, (m, g, p) in enumerate(counts):
            f.write(f"{i}\t{m}\t{g}\t{p}\n")
        f.write(f"# sentences\t{len(counts)}\n")
        f.write(f"# precision\t{total.precision:.2f}\n")
        f.write(f"# recall\t{total.recall:.2f}\n")
        f.write(f"# f1\t{total.f1:.2f}\n")
    return total

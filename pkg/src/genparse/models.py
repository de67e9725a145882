"""Scoring models: conditional action distributions over parser states.

Every model exposes the same small surface used by search and rescoring:

* ``score_actions(state, sentence)``: the full distribution over the model's
  action space (natural-log probabilities, summing to one).
* ``score_legal(state, sentence, actions)``: log-probabilities for a subset of
  actions, looked up in that same distribution without renormalising.

``GEN(w)`` for a word outside a generative model's vocabulary is scored as
``GEN(<unk>)``.  Discriminative models score any word action as ``SHIFT``.
"""
from __future__ import annotations

import abc
import enum
import hashlib
import json
import math
import struct
from collections import Counter, defaultdict
from dataclasses import dataclass
from pathlib import Path
from typing import Callable, Iterable, Mapping, Sequence

from .transition import Constraints, Mode, ParserState, TransitionError, advance, initial_state
from .treebank import (
    GEN,
    NT,
    REDUCE,
    REDUCE_X,
    SHIFT,
    Action,
    Inventory,
    Kind,
    Sentence,
    Tree,
    tree_to_actions,
)

UNK = "<unk>"
START = "<s>"
END = "</s>"

ActionDistribution = dict  # Action -> log-probability


class Flavor(enum.Enum):
    DISCRIMINATIVE = "discriminative"
    GENERATIVE = "generative"


class ModelError(ValueError):
    pass


class ModelFileError(ModelError):
    pass


def logsumexp(xs: Sequence[float]) -> float:
    m = max(xs)
    if m == -math.inf:
        return m
    return m + math.log(math.fsum(math.exp(x - m) for x in xs))


class ScoringModel(abc.ABC):
    flavor: Flavor
    inventory: Inventory
    labels: tuple[str, ...]

    @property
    def vocab(self) -> tuple[str, ...]:
        """Known words (generative flavor); ``UNK`` is implicit."""
        return ()

    def action_space(self) -> tuple[Action, ...]:
        nts = tuple(NT(x) for x in self.labels)
        if self.flavor == Flavor.GENERATIVE:
            words = tuple(GEN(w) for w in self.vocab) + (GEN(UNK),)
        else:
            words = (SHIFT,)
        if self.inventory == Inventory.LABELED_REDUCE:
            reduces = tuple(REDUCE_X(x) for x in self.labels)
        else:
            reduces = (REDUCE,)
        return nts + words + reduces

    def constraints(self, max_open_nts: int = 100, require_label_match: bool = False) -> Constraints:
        mode = Mode.GENERATIVE_CONSTRAINED if self.flavor == Flavor.GENERATIVE else Mode.DISCRIMINATIVE
        return Constraints(self.labels, max_open_nts, self.inventory, mode, require_label_match)

    def canonical(self, action: Action) -> Action:
        """Map a decoding-time action onto this model's action space."""
        if action.kind in (Kind.GEN, Kind.SHIFT):
            if self.flavor == Flavor.DISCRIMINATIVE:
                return SHIFT
            if action.kind == Kind.SHIFT:
                raise ModelError("generative models cannot score a bare SHIFT")
            return action if action.symbol in self._vocab_set else GEN(UNK)
        return action

    @property
    def _vocab_set(self) -> frozenset:
        vs = self.__dict__.get("_vs")
        if vs is None:
            vs = frozenset(self.vocab)
            self.__dict__["_vs"] = vs
        return vs

    @abc.abstractmethod
    def score_actions(self, state: ParserState, sentence: Sentence) -> ActionDistribution:
        ...

    def score_legal(self, state: ParserState, sentence: Sentence, actions: Sequence[Action]) -> list[float]:
        dist = self.score_actions(state, sentence)
        return [dist[self.canonical(a)] for a in actions]

    def action_logprob(self, state: ParserState, sentence: Sentence, action: Action) -> float:
        return self.score_legal(state, sentence, (action,))[0]


def _check_not_final(state: ParserState) -> None:
    if state.finished:
        raise TransitionError("cannot score actions from a final state")


def logprob_of_parse(model: ScoringModel, tree: Tree, sentence: Sentence | Sequence[str]) -> float:
    """Sum of unmasked per-action log-probabilities along the tree's action sequence.

    Summation is left to right, matching the accumulation order used in search.
    """
    if not isinstance(sentence, Sentence):
        sentence = Sentence.of(sentence)
    if tuple(tree.leaves()) != sentence.words:
        raise ModelError(f"tree yield {tree.leaves()} does not match sentence {list(sentence.words)}")
    if not tree.labels() <= set(model.labels):
        raise ModelError(f"tree uses labels outside the model: {sorted(tree.labels() - set(model.labels))}")
    seq = tree_to_actions(tree, model.inventory, shift=model.flavor == Flavor.DISCRIMINATIVE)
    state = initial_state(sentence)
    total = 0.0
    for a in seq:
        total += model.score_legal(state, sentence, (a,))[0]
        state = advance(state, a, sentence)
    return total


# ---------------------------------------------------------------------------
# count model


def _action_class(a: Action) -> str:
    if a.kind in (Kind.GEN, Kind.SHIFT):
        return "SHIFT"
    return a.text


@dataclass(frozen=True)
class TrainConfig:
    flavor: Flavor = Flavor.GENERATIVE
    inventory: Inventory = Inventory.UNLABELED_REDUCE
    order: int = 3
    smoothing_alpha: float = 0.1
    unk_threshold: int = 2
    vocab: tuple[str, ...] | None = None  # fixed vocabulary, e.g. shared by ensemble members
    labels: tuple[str, ...] | None = None


class HistoryCountModel(ScoringModel):
    """Add-alpha smoothed n-gram model over action histories.

    The structural decision is conditioned on the previous ``order`` action
    classes (words collapse to ``SHIFT``); the discriminative flavor also
    sees the next buffer word.  The generative flavor factors
    ``p(GEN(w)) = p(SHIFT | ctx) * p(w | ctx)``.
    """

    def __init__(
        self,
        flavor: Flavor,
        inventory: Inventory,
        labels: Sequence[str],
        vocab: Sequence[str],
        order: int,
        alpha: float,
        class_counts: Mapping[tuple, Mapping[str, int]],
        word_counts: Mapping[tuple, Mapping[str, int]],
        unk_threshold: int = 2,
    ):
        if order < 0:
            raise ModelError("order must be >= 0")
        if alpha <= 0:
            raise ModelError("smoothing_alpha must be positive")
        self.flavor = flavor
        self.inventory = inventory
        self.labels = tuple(sorted(labels))
        self._vocab = tuple(sorted(vocab))
        self.order = order
        self.alpha = alpha
        self.unk_threshold = unk_threshold
        self.class_counts = {k: dict(v) for k, v in class_counts.items()}
        self.word_counts = {k: dict(v) for k, v in word_counts.items()}
        self._classes = tuple(
            [f"NT({x})" for x in self.labels]
            + ["SHIFT"]
            + ([f"REDUCE({x})" for x in self.labels] if inventory == Inventory.LABELED_REDUCE else ["REDUCE"])
        )
        self._class_cache: dict[tuple, dict[str, float]] = {}
        self._word_cache: dict[tuple, tuple[dict[str, float], float]] = {}

    @property
    def vocab(self) -> tuple[str, ...]:
        return self._vocab

    @property
    def classes(self) -> tuple[str, ...]:
        return self._classes

    def map_word(self, w: str) -> str:
        return w if w in self._vocab_set else UNK

    def context(self, state: ParserState, sentence: Sentence) -> tuple:
        hist = [_action_class(a) for a in state.recent_actions(self.order)]
        ctx = tuple([START] * (self.order - len(hist)) + hist)
        if self.flavor == Flavor.DISCRIMINATIVE:
            nxt = self.map_word(sentence[state.words_done]) if state.words_done < len(sentence) else END
            ctx = ctx + (nxt,)
        return ctx

    def _class_table(self, ctx: tuple) -> dict[str, float]:
        table = self._class_cache.get(ctx)
        if table is None:
            counts = self.class_counts.get(ctx, {})
            denom = math.log(sum(counts.values()) + self.alpha * len(self._classes))
            table = {c: math.log(counts.get(c, 0) + self.alpha) - denom for c in self._classes}
            self._class_cache[ctx] = table
        return table

    def _word_table(self, ctx: tuple) -> tuple[dict[str, float], float]:
        entry = self._word_cache.get(ctx)
        if entry is None:
            counts = self.word_counts.get(ctx, {})
            denom = math.log(sum(counts.values()) + self.alpha * (len(self._vocab) + 1))
            seen = {w: math.log(c + self.alpha) - denom for w, c in counts.items()}
            entry = (seen, math.log(self.alpha) - denom)
            self._word_cache[ctx] = entry
        return entry

    def score_actions(self, state: ParserState, sentence: Sentence) -> ActionDistribution:
        _check_not_final(state)
        ctx = self.context(state, sentence)
        table = self._class_table(ctx)
        out: dict[Action, float] = {}
        for a in self.action_space():
            if a.kind == Kind.GEN:
                seen, unseen = self._word_table(ctx)
                out[a] = table["SHIFT"] + seen.get(a.symbol, unseen)
            else:
                out[a] = table[_action_class(a)]
        return out

    def score_legal(self, state: ParserState, sentence: Sentence, actions: Sequence[Action]) -> list[float]:
        _check_not_final(state)
        ctx = self.context(state, sentence)
        table = self._class_table(ctx)
        out = []
        for a in actions:
            k = a.kind
            if k == Kind.GEN or k == Kind.SHIFT:
                lp = table["SHIFT"]
                if self.flavor == Flavor.GENERATIVE:
                    if k == Kind.SHIFT:
                        raise ModelError("generative models cannot score a bare SHIFT")
                    seen, unseen = self._word_table(ctx)
                    lp += seen.get(self.map_word(a.symbol), unseen)
                out.append(lp)
            else:
                try:
                    out.append(table[a.text])
                except KeyError:
                    raise ModelError(f"{a} is outside the model's action space") from None
        return out

    # -- persistence -------------------------------------------------------

    def to_payload(self) -> dict:
        def table(counts):
            return [[list(ctx), sorted(v.items())] for ctx, v in sorted(counts.items())]

        return {
            "flavor": self.flavor.value,
            "inventory": self.inventory.value,
            "labels": list(self.labels),
            "vocab": list(self._vocab),
            "order": self.order,
            "alpha": self.alpha,
            "unk_threshold": self.unk_threshold,
            "class_counts": table(self.class_counts),
            "word_counts": table(self.word_counts),
        }

    @classmethod
    def from_payload(cls, p: dict) -> "HistoryCountModel":
        def table(rows):
            return {tuple(ctx): {k: c for k, c in items} for ctx, items in rows}

        return cls(
            Flavor(p["flavor"]),
            Inventory(p["inventory"]),
            p["labels"],
            p["vocab"],
            p["order"],
            p["alpha"],
            table(p["class_counts"]),
            table(p["word_counts"]),
            p["unk_threshold"],
        )


def train_count_model(corpus: Iterable[Tree | tuple[Sentence, Tree]], config: TrainConfig = TrainConfig()) -> HistoryCountModel:
    trees = [t[1] if isinstance(t, tuple) else t for t in corpus]
    if not trees:
        raise ModelError("cannot train on an empty corpus")
    labels = set()
    word_freq: Counter = Counter()
    for t in trees:
        labels |= t.labels()
        word_freq.update(t.leaves())
    if config.labels is not None:
        if not labels <= set(config.labels):
            raise ModelError(f"corpus labels {sorted(labels - set(config.labels))} not in configured label set")
        labels = set(config.labels)
    if config.vocab is not None:
        vocab = tuple(sorted(config.vocab))
    else:
        vocab = tuple(sorted(w for w, c in word_freq.items() if c >= config.unk_threshold))
    model = HistoryCountModel(
        config.flavor, config.inventory, labels, vocab, config.order, config.smoothing_alpha, {}, {},
        config.unk_threshold,
    )
    class_counts: dict = defaultdict(Counter)
    word_counts: dict = defaultdict(Counter)
    for t in trees:
        sentence = Sentence.from_tree(t)
        seq = tree_to_actions(t, config.inventory)
        state = initial_state(sentence)
        for a in seq:
            ctx = model.context(state, sentence)
            class_counts[ctx][_action_class(a)] += 1
            if a.kind == Kind.GEN and config.flavor == Flavor.GENERATIVE:
                word_counts[ctx][model.map_word(a.symbol)] += 1
            state = advance(state, a, sentence)
    model.class_counts = {k: dict(v) for k, v in class_counts.items()}
    model.word_counts = {k: dict(v) for k, v in word_counts.items()}
    return model


def perplexity(model: ScoringModel, corpus: Iterable[Tree | tuple[Sentence, Tree]]) -> float:
    """Per-action perplexity of gold action sequences."""
    total, n = 0.0, 0
    for item in corpus:
        t = item[1] if isinstance(item, tuple) else item
        total += logprob_of_parse(model, t, Sentence.from_tree(t))
        n += len(tree_to_actions(t, model.inventory))
    return math.exp(-total / n)


# ---------------------------------------------------------------------------
# hand-built and derived models


class CallableModel(ScoringModel):
    """Model defined by a function returning probabilities over the full action space.

    Mostly useful for tests and constructed experiments.
    """

    def __init__(
        self,
        fn: Callable[[ParserState, Sentence], Mapping[Action, float]],
        labels: Sequence[str],
        flavor: Flavor = Flavor.GENERATIVE,
        inventory: Inventory = Inventory.UNLABELED_REDUCE,
        vocab: Sequence[str] = (),
    ):
        self.fn = fn
        self.labels = tuple(sorted(labels))
        self.flavor = flavor
        self.inventory = inventory
        self._vocab = tuple(sorted(vocab))

    @property
    def vocab(self) -> tuple[str, ...]:
        return self._vocab

    def score_actions(self, state: ParserState, sentence: Sentence) -> ActionDistribution:
        _check_not_final(state)
        probs = self.fn(state, sentence)
        return {a: (math.log(probs[a]) if probs.get(a, 0.0) > 0 else -math.inf) for a in self.action_space()}


class NTBiasedModel(ScoringModel):
    """Mixture of a generative base model with a uniform distribution over NT actions.

    ``p(a) = (1 - bias) * p_base(a) + bias * [a is NT] / |labels|``.  With
    ``bias >= 0.5`` the total NT mass exceeds the probability of any single
    ``GEN(w)`` in every context.
    """

    def __init__(self, base: ScoringModel, bias: float = 0.5):
        if not 0.0 <= bias < 1.0:
            raise ModelError("bias must be in [0, 1)")
        self.base = base
        self.bias = bias
        self.flavor = base.flavor
        self.inventory = base.inventory
        self.labels = base.labels
        self._log_keep = math.log1p(-bias) if bias < 1 else -math.inf
        self._log_nt = math.log(bias / len(base.labels)) if bias > 0 else -math.inf

    @property
    def vocab(self) -> tuple[str, ...]:
        return self.base.vocab

    def _mix(self, a: Action, lp: float) -> float:
        if a.kind == Kind.NT:
            x, y = self._log_keep + lp, self._log_nt
            m = max(x, y)
            return m + math.log(math.exp(x - m) + math.exp(y - m))
        return self._log_keep + lp

    def score_actions(self, state: ParserState, sentence: Sentence) -> ActionDistribution:
        return {a: self._mix(a, lp) for a, lp in self.base.score_actions(state, sentence).items()}

    def score_legal(self, state: ParserState, sentence: Sentence, actions: Sequence[Action]) -> list[float]:
        lps = self.base.score_legal(state, sentence, actions)
        return [self._mix(a, lp) for a, lp in zip(actions, lps)]


class EnsembleModel(ScoringModel):
    """Average member distributions in probability space."""

    def __init__(self, members: Sequence[ScoringModel]):
        if not members:
            raise ModelError("ensemble needs at least one member")
        first = members[0]
        for m in members[1:]:
            if (m.flavor, m.inventory, m.action_space()) != (first.flavor, first.inventory, first.action_space()):
                raise ModelError("ensemble members must share flavor, inventory and action space")
        self.members = tuple(members)
        self.flavor = first.flavor
        self.inventory = first.inventory
        self.labels = first.labels
        self._log_k = math.log(len(members))

    @property
    def vocab(self) -> tuple[str, ...]:
        return self.members[0].vocab

    def _average(self, columns: Sequence[float]) -> float:
        return logsumexp(columns) - self._log_k

    def score_actions(self, state: ParserState, sentence: Sentence) -> ActionDistribution:
        dists = [m.score_actions(state, sentence) for m in self.members]
        return {a: self._average([d[a] for d in dists]) for a in dists[0]}

    def score_legal(self, state: ParserState, sentence: Sentence, actions: Sequence[Action]) -> list[float]:
        rows = [m.score_legal(state, sentence, actions) for m in self.members]
        return [self._average(col) for col in zip(*rows)]


def ensemble_distribution(ensemble: EnsembleModel, state: ParserState, sentence: Sentence) -> ActionDistribution:
    return ensemble.score_actions(state, sentence)


# ---------------------------------------------------------------------------
# model files: MAGIC | version u16 | payload length u64 | sha256(payload) | payload

MAGIC = b"GPCOUNT\x00"
FORMAT_VERSION = 1
_HEADER = struct.Struct(">8sHQ32s")


def save_model(model: HistoryCountModel, path: str | Path) -> None:
    if not isinstance(model, HistoryCountModel):
        raise ModelError("only count models can be saved")
    payload = json.dumps(model.to_payload(), sort_keys=True, separators=(",", ":"), ensure_ascii=False).encode()
    header = _HEADER.pack(MAGIC, FORMAT_VERSION, len(payload), hashlib.sha256(payload).digest())
    Path(path).write_bytes(header + payload)


def load_model(path: str | Path) -> HistoryCountModel:
    data = Path(path).read_bytes()
    if len(data) < _HEADER.size:
        raise ModelFileError(f"{path}: truncated header")
    magic, version, length, digest = _HEADER.unpack_from(data)
    if magic != MAGIC:
        raise ModelFileError(f"{path}: not a model file")
    if version != FORMAT_VERSION:
        raise ModelFileError(f"{path}: unsupported format version {version} (expected {FORMAT_VERSION})")
    payload = data[_HEADER.size:]
    if len(payload) != length or hashlib.sha256(payload).digest() != digest:
        raise ModelFileError(f"{path}: checksum mismatch (file corrupt or truncated)")
    return HistoryCountModel.from_payload(json.loads(payload))

"""Beam search and exhaustive enumeration over transition sequences.

All rankings use one tie-break: higher log-probability first, then the
lexicographically smaller serialized action history.
"""
from __future__ import annotations

import logging
from dataclasses import dataclass, field
from typing import NamedTuple, Sequence

from .models import ScoringModel
from .transition import Constraints, ParserState, advance, initial_state, legal_actions
from .treebank import Action, Kind, Sentence, Tree, serialize

logger = logging.getLogger(__name__)


class SearchFailure(RuntimeError):
    def __init__(self, message: str, diagnostics: dict | None = None):
        super().__init__(message)
        self.diagnostics = diagnostics or {}


class Hypothesis(NamedTuple):
    state: ParserState
    logprob: float
    history: str = ""  # serialized action history, the secondary sort key


class BeamKey(NamedTuple):
    words_done: int
    struct_actions_since_word: int


@dataclass(frozen=True)
class SearchConfig:
    K: int | None = 100  # action-synchronous beam; None = unbounded
    K_w: int = 10
    K_a: int | None = None  # defaults to 10 * K_w
    k_best: int = 10
    max_open_nts: int = 100
    struct_cap: int | None = None  # defaults to 4 * max_open_nts
    require_label_match: bool = False
    # next-word bucket size that triggers adoption; None means K_a.  Setting
    # it to K_w adopts as soon as a full (w, 0) beam has shifted, which never
    # builds structure after the first word.
    ready_size: int | None = None

    def __post_init__(self):
        if self.K_a is None:
            object.__setattr__(self, "K_a", 10 * self.K_w)
        if self.struct_cap is None:
            object.__setattr__(self, "struct_cap", 4 * self.max_open_nts)
        for name in ("K", "K_w", "K_a", "k_best", "max_open_nts", "struct_cap", "ready_size"):
            v = getattr(self, name)
            if v is not None and v < 1:
                raise ValueError(f"{name} must be >= 1")

    @property
    def ready(self) -> int:
        return self.K_a if self.ready_size is None else self.ready_size


@dataclass
class Candidate:
    tree: Tree
    scores: dict[str, float]
    history: str = ""

    @property
    def key(self) -> str:
        return serialize(self.tree)


@dataclass
class CandidateList:
    sentence: Sentence
    candidates: list[Candidate]
    source: str = ""
    diagnostics: dict = field(default_factory=dict)

    def __len__(self) -> int:
        return len(self.candidates)

    def __iter__(self):
        return iter(self.candidates)

    def trees(self) -> list[Tree]:
        return [c.tree for c in self.candidates]


def rank(hyps: list[Hypothesis], k: int | None = None) -> list[Hypothesis]:
    """Sort by the global tie-break and keep the first ``k``.

    History strings are only built for runs of equal scores that reach the cut.
    """
    hyps = sorted(hyps, key=lambda h: -h.logprob)
    limit = len(hyps) if k is None else min(k, len(hyps))
    i = 0
    while i < limit:
        j = i
        lp = hyps[i].logprob
        while j + 1 < len(hyps) and hyps[j + 1].logprob == lp:
            j += 1
        if j > i:
            hyps[i:j + 1] = sorted(hyps[i:j + 1], key=lambda h: h.history)
        i = j + 1
    return hyps if k is None else hyps[:k]


class Successor(NamedTuple):
    """A scored but not yet applied extension of ``parent``."""

    logprob: float
    parent: Hypothesis
    action: Action

    @property
    def history(self) -> str:
        head = self.parent.history
        return f"{head} {self.action.text}" if head else self.action.text

    def finishes(self, n_words: int) -> bool:
        st = self.parent.state
        return self.action.kind == Kind.REDUCE and st.open_count == 1 and st.words_done == n_words

    def materialize(self, sentence: Sentence) -> Hypothesis:
        return Hypothesis(advance(self.parent.state, self.action, sentence), self.logprob, self.history)


def _expand(model: ScoringModel, hyp: Hypothesis, sentence: Sentence, c: Constraints, struct_cap: int, diag: dict) -> list[Successor]:
    state = hyp.state
    acts = legal_actions(state, sentence, c)
    if state.struct_since_word + 1 > struct_cap:
        kept = tuple(a for a in acts if not a.is_structural)
        if len(kept) != len(acts):
            diag["struct_cap_drops"] += len(acts) - len(kept)
        acts = kept
    if not acts:
        diag["dead_ends"] += 1
        return []
    lps = model.score_legal(state, sentence, acts)
    base = hyp.logprob
    return [Successor(base + lp, hyp, a) for a, lp in zip(acts, lps)]


def _materialize(succs: Sequence[Successor], sentence: Sentence) -> list[Hypothesis]:
    return [s.materialize(sentence) for s in succs]


def _new_diag() -> dict:
    return {"struct_cap_drops": 0, "dead_ends": 0, "max_struct_level": 0, "occupancy": []}


def kbest_from_beam(
    finished: Sequence[Hypothesis],
    sentence: Sentence,
    k_best: int,
    source: str = "",
    model_id: str | None = None,
    diagnostics: dict | None = None,
) -> CandidateList:
    """Deduplicate finished hypotheses by tree (keeping the best), rank, truncate."""
    best: dict[str, Hypothesis] = {}
    for h in rank(list(finished)):
        key = serialize(h.state.tree())
        if key not in best:
            best[key] = h
    ranked = list(best.values())[:k_best]
    mid = model_id or source
    cands = [Candidate(h.state.tree(), {mid: h.logprob}, h.history) for h in ranked]
    return CandidateList(sentence, cands, source, diagnostics or {})


def action_sync_beam(
    model: ScoringModel,
    sentence: Sentence,
    config: SearchConfig = SearchConfig(),
    source: str = "",
    model_id: str | None = None,
) -> CandidateList:
    """Standard beam search: hypotheses compete after equal numbers of actions."""
    c = model.constraints(config.max_open_nts, config.require_label_match)
    diag = _new_diag()
    n = len(sentence)
    beam = [Hypothesis(initial_state(sentence), 0.0)]
    finished: list[Hypothesis] = []
    steps = 0
    while beam:
        pool = []
        for h in beam:
            for succ in _expand(model, h, sentence, c, config.struct_cap, diag):
                if succ.finishes(n):
                    finished.append(succ.materialize(sentence))
                else:
                    pool.append(succ)
        beam = _materialize(rank(pool, config.K), sentence)
        steps += 1
        diag["occupancy"].append(len(beam))
        # log-probs only decrease, so once the k-th finished score beats the
        # whole beam no later completion can enter the k-best list
        if beam and len(finished) >= config.k_best:
            kth = rank(finished, config.k_best)[-1].logprob
            if beam[0].logprob < kth:
                break
    diag["steps"] = steps
    if not finished:
        raise SearchFailure(f"action-synchronous search found no complete parse for {' '.join(sentence)!r}", diag)
    return kbest_from_beam(finished, sentence, config.k_best, source, model_id, diag)


def word_sync_beam(
    model: ScoringModel,
    sentence: Sentence,
    config: SearchConfig = SearchConfig(),
    source: str = "",
    model_id: str | None = None,
) -> CandidateList:
    """Word-synchronous beam search over beams keyed by (words done, structural actions since last word).

    Structural successors of level ``(w, a)`` go to ``(w, a + 1)``; word
    successors go to the bucket ``(w + 1, 0)``.  After each level is fully
    expanded, the bucket is adopted (pruned to ``K_w``) once it holds
    ``config.ready`` hypotheses and the structural frontier is discarded;
    otherwise the frontier is pruned to ``K_a`` and expanded.  After the last
    word, structural levels continue until ``config.ready`` parses have
    finished or the frontier is empty.
    """
    c = model.constraints(config.max_open_nts, config.require_label_match)
    diag = _new_diag()
    diag["discarded_frontier"] = 0
    n = len(sentence)
    ready = config.ready
    level = [Hypothesis(initial_state(sentence), 0.0)]
    for w in range(n):
        word_bucket: list[Hypothesis] = []
        frontier = level
        a = 0
        while frontier:
            struct = []
            for h in frontier:
                for succ in _expand(model, h, sentence, c, config.struct_cap, diag):
                    (struct if succ.action.is_structural else word_bucket).append(succ)
            diag["occupancy"].append((BeamKey(w, a + 1), len(struct), len(word_bucket)))
            if len(word_bucket) >= ready:
                diag["discarded_frontier"] += len(struct)
                break
            frontier = _materialize(rank(struct, config.K_a), sentence)
            a += 1
        diag["max_struct_level"] = max(diag["max_struct_level"], a)
        if not word_bucket:
            raise SearchFailure(
                f"word-synchronous search stranded before word {w} of {' '.join(sentence)!r}", diag
            )
        level = _materialize(rank(word_bucket, config.K_w), sentence)

    finished: list[Hypothesis] = []
    frontier = level
    a = 0
    while frontier and len(finished) < ready:
        struct = []
        for h in frontier:
            for succ in _expand(model, h, sentence, c, config.struct_cap, diag):
                if succ.finishes(n):
                    finished.append(succ.materialize(sentence))
                else:
                    struct.append(succ)
        diag["occupancy"].append((BeamKey(n, a + 1), len(struct), len(finished)))
        frontier = _materialize(rank(struct, config.K_a), sentence)
        a += 1
    diag["max_struct_level"] = max(diag["max_struct_level"], a)
    if not finished:
        raise SearchFailure(f"word-synchronous search found no complete parse for {' '.join(sentence)!r}", diag)
    return kbest_from_beam(finished, sentence, config.k_best, source, model_id, diag)


# ---------------------------------------------------------------------------
# exhaustive oracle


@dataclass(frozen=True)
class ExhaustiveGuard:
    max_words: int = 7
    max_open_nts: int = 3
    max_labels: int = 3


def exhaustive_search(
    model: ScoringModel,
    sentence: Sentence,
    constraints: Constraints | None = None,
    guard: ExhaustiveGuard | None = ExhaustiveGuard(),
) -> list[tuple[Tree, float]]:
    """Every complete parse with its model log-probability, ranked.

    Enumerates all legal action sequences depth first.  Distinct sequences
    yielding the same tree keep the best score.  Pass ``guard=None`` to lift
    the size limits.
    """
    c = constraints or model.constraints(3)
    if guard is not None:
        if len(sentence) > guard.max_words or c.max_open_nts > guard.max_open_nts or len(c.labels) > guard.max_labels:
            raise ValueError(
                f"instance exceeds exhaustive guard ({len(sentence)} words, max_open {c.max_open_nts}, "
                f"{len(c.labels)} labels); pass guard=None to override"
            )
    finished: list[Hypothesis] = []
    stack = [Hypothesis(initial_state(sentence), 0.0)]
    while stack:
        h = stack.pop()
        acts = legal_actions(h.state, sentence, c)
        lps = model.score_legal(h.state, sentence, acts)
        for a, lp in zip(acts, lps):
            hist = f"{h.history} {a.text}" if h.history else a.text
            nh = Hypothesis(advance(h.state, a, sentence), h.logprob + lp, hist)
            (finished if nh.state.finished else stack).append(nh)
    best: dict[str, Hypothesis] = {}
    for h in rank(finished):
        best.setdefault(serialize(h.state.tree()), h)
    return [(h.state.tree(), h.logprob) for h in best.values()]


def count_parses(sentence_length: int, n_labels: int, max_open_nts: int) -> int:
    """Number of action sequences (= trees under unlabeled REDUCE) for a sentence.

    Dynamic program over (words done, open count, top-is-open); independent of
    the search code, used to size oracle beams.
    """
    from functools import lru_cache

    n = sentence_length

    @lru_cache(maxsize=None)
    def ways(w: int, open_: int, top_open: bool, started: bool) -> int:
        if started and open_ == 0:
            return 1 if w == n else 0
        total = 0
        if w < n and open_ < max_open_nts:
            total += n_labels * ways(w, open_ + 1, True, True)
        if w < n and open_ >= 1:
            total += ways(w + 1, open_, False, True)
        if open_ >= 1 and not top_open and (open_ > 1 or w == n):
            total += ways(w, open_ - 1, False, True)
        return total

    return ways(0, 0, False, False)


def decode(model: ScoringModel, sentence: Sentence, strategy: str, config: SearchConfig, source: str = "", model_id: str | None = None) -> CandidateList:
    if strategy == "action-sync":
        return action_sync_beam(model, sentence, config, source, model_id)
    if strategy == "word-sync":
        return word_sync_beam(model, sentence, config, source, model_id)
    if strategy == "exhaustive":
        c = model.constraints(config.max_open_nts, config.require_label_match)
        ranked = exhaustive_search(model, sentence, c)
        mid = model_id or source
        cands = [Candidate(t, {mid: lp}) for t, lp in ranked[: config.k_best]]
        return CandidateList(sentence, cands, source)
    raise ValueError(f"unknown search strategy {strategy!r}")


def _decode_one(args):
    model, sentence, strategy, config, source, model_id = args
    try:
        return decode(model, sentence, strategy, config, source, model_id)
    except SearchFailure as e:
        logger.warning("%s", e)
        return CandidateList(sentence, [], source, {"failure": str(e)})


def decode_corpus(
    model: ScoringModel,
    sentences: Sequence[Sentence],
    strategy: str,
    config: SearchConfig,
    source: str = "",
    model_id: str | None = None,
    jobs: int = 1,
) -> list[CandidateList]:
    """Decode every sentence; failures yield empty candidate lists.  Output order follows input."""
    work = [(model, s, strategy, config, source, model_id) for s in sentences]
    if jobs <= 1:
        return [_decode_one(w) for w in work]
    from concurrent.futures import ProcessPoolExecutor

    with ProcessPoolExecutor(jobs) as ex:
        return list(ex.map(_decode_one, work, chunksize=max(1, len(work) // (4 * jobs))))

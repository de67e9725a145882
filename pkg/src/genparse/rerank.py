"""Cross-scoring, candidate union, weighted score combination and weight tuning."""
from __future__ import annotations

import itertools
import json
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Mapping, Sequence

from . import evaluate
from .models import ModelError, ScoringModel, logprob_of_parse
from .search import Candidate, CandidateList, SearchConfig, decode_corpus
from .treebank import Sentence, Tree, parse_bracketed, serialize, tree_to_actions


class MissingScoreError(KeyError):
    pass


@dataclass
class ScoredCandidateSet:
    sentence: Sentence
    entries: list[Candidate]
    provenance: frozenset = frozenset()

    def __len__(self) -> int:
        return len(self.entries)

    def trees(self) -> list[Tree]:
        return [e.tree for e in self.entries]

    def keys(self) -> set[str]:
        return {e.key for e in self.entries}

    @classmethod
    def from_list(cls, cl: CandidateList) -> "ScoredCandidateSet":
        entries, seen = [], set()
        for c in cl.candidates:
            if c.key not in seen:
                seen.add(c.key)
                entries.append(Candidate(c.tree, dict(c.scores), c.history))
        return cls(cl.sentence, entries, frozenset([cl.source]) if cl.source else frozenset())


def union_candidates(a: CandidateList | ScoredCandidateSet, b: CandidateList | ScoredCandidateSet) -> ScoredCandidateSet:
    """Structural union; entries of ``a`` first, scores merged per model id."""
    a = a if isinstance(a, ScoredCandidateSet) else ScoredCandidateSet.from_list(a)
    b = b if isinstance(b, ScoredCandidateSet) else ScoredCandidateSet.from_list(b)
    if a.sentence != b.sentence:
        raise ValueError(f"cannot union candidates for different sentences: {a.sentence.words} vs {b.sentence.words}")
    entries = [Candidate(e.tree, dict(e.scores), e.history) for e in a.entries]
    index = {e.key: e for e in entries}
    for e in b.entries:
        if e.key in index:
            for mid, lp in e.scores.items():
                index[e.key].scores.setdefault(mid, lp)
        else:
            c = Candidate(e.tree, dict(e.scores), e.history)
            entries.append(c)
            index[c.key] = c
    return ScoredCandidateSet(a.sentence, entries, a.provenance | b.provenance)


def fill_scores(cset: ScoredCandidateSet, model: ScoringModel, model_id: str) -> ScoredCandidateSet:
    """Add ``model_id`` scores to entries lacking them; existing scores are kept."""
    entries = []
    for e in cset.entries:
        scores = dict(e.scores)
        if model_id not in scores:
            try:
                scores[model_id] = logprob_of_parse(model, e.tree, cset.sentence)
            except ModelError as err:
                raise ModelError(f"cannot score {serialize(e.tree)} with {model_id}: {err}") from None
        entries.append(Candidate(e.tree, scores, e.history))
    return ScoredCandidateSet(cset.sentence, entries, cset.provenance)


@dataclass(frozen=True)
class CombinationWeights:
    weights: Mapping[str, float]

    def __post_init__(self):
        w = dict(self.weights)
        if not w or any(v < 0 for v in w.values()):
            raise ValueError("weights must be non-empty and non-negative")
        total = math.fsum(w.values())
        if total <= 0:
            raise ValueError("weights must not all be zero")
        object.__setattr__(self, "weights", {k: v / total for k, v in sorted(w.items())})

    def __getitem__(self, k: str) -> float:
        return self.weights.get(k, 0.0)

    def __str__(self) -> str:
        return ",".join(f"{k}={v:.2f}" for k, v in self.weights.items())


def _tiebreak_key(tree: Tree) -> str:
    return str(tree_to_actions(tree))


def combined_score(entry: Candidate, weights: CombinationWeights) -> float:
    total = 0.0
    for mid, w in weights.weights.items():
        if w == 0:
            continue
        if mid not in entry.scores:
            raise MissingScoreError(f"entry {serialize(entry.tree)} has no score for {mid!r}")
        total += w * entry.scores[mid]
    return total


def select_best(cset: ScoredCandidateSet, weights: CombinationWeights | Mapping[str, float]) -> Tree:
    """Argmax of the weighted sum of log-probabilities (ties: smaller action string)."""
    if not isinstance(weights, CombinationWeights):
        weights = CombinationWeights(weights)
    if not cset.entries:
        raise ValueError("cannot select from an empty candidate set")
    scored = [(combined_score(e, weights), e) for e in cset.entries]
    top = max(s for s, _ in scored)
    tied = [e for s, e in scored if s == top]
    if len(tied) == 1:
        return tied[0].tree
    return min(tied, key=lambda e: _tiebreak_key(e.tree)).tree


def weight_grid(model_ids: Sequence[str]) -> list[dict[str, float]]:
    """Simplex grid: step 0.01 for two models, 0.05 for three, the corner for one."""
    k = len(model_ids)
    if k == 1:
        return [{model_ids[0]: 1.0}]
    steps = {2: 100, 3: 20}.get(k)
    if steps is None:
        raise ValueError("weight tuning supports one to three models")
    grid = []
    for combo in itertools.product(range(steps + 1), repeat=k - 1):
        rest = steps - sum(combo)
        if rest < 0:
            continue
        grid.append({m: c / steps for m, c in zip(model_ids, (*combo, rest))})
    return grid


def tune_weights(
    dev: Sequence[tuple[ScoredCandidateSet, Tree]],
    model_ids: Sequence[str],
    config: evaluate.EvalConfig = evaluate.DEFAULT,
) -> CombinationWeights:
    """Grid search for the weights maximising dev corpus F1.

    Ties go to the most uniform weights (smallest squared distance from
    uniform), then the lexicographically smallest weight vector.
    """
    if not dev:
        raise ValueError("tune_weights needs a non-empty dev set")
    model_ids = list(model_ids)
    # bracket counts per (sentence, candidate) computed once
    counts = []
    for cset, gold in dev:
        counts.append({e.key: evaluate.bracket_prf(gold, e.tree, config) for e in cset.entries})
    uniform = 1.0 / len(model_ids)
    best = None
    for point in weight_grid(model_ids):
        weights = CombinationWeights(point)
        total = evaluate.PRF(0, 0, 0)
        for (cset, _), c in zip(dev, counts):
            total = total + c[serialize(select_best(cset, weights))]
        vec = tuple(point[m] for m in model_ids)
        spread = round(sum((v - uniform) ** 2 for v in vec), 12)
        key = (-total.f1, spread, vec)
        if best is None or key < best[0]:
            best = (key, point)
    return CombinationWeights(best[1])


def corpus_selection(sets: Sequence[ScoredCandidateSet], weights: CombinationWeights) -> list[Tree]:
    return [select_best(s, weights) for s in sets]


# ---------------------------------------------------------------------------
# candidate files: "index<TAB>source<TAB>tree<TAB>{model-id: logprob}" per line


def write_candidates(path: str | Path, lists: Sequence[CandidateList]) -> None:
    with open(path, "w", encoding="utf-8") as f:
        for i, cl in enumerate(lists):
            if not cl.candidates:
                f.write(f"#empty\t{i}\t{cl.source}\t{' '.join(cl.sentence)}\n")
            for c in cl.candidates:
                scores = json.dumps(dict(sorted(c.scores.items())), separators=(",", ":"))
                f.write(f"{i}\t{cl.source}\t{serialize(c.tree)}\t{scores}\n")


def read_candidates(path: str | Path) -> list[CandidateList]:
    by_index: dict[int, CandidateList] = {}
    with open(path, encoding="utf-8") as f:
        for lineno, line in enumerate(f, 1):
            line = line.rstrip("\n")
            if not line:
                continue
            if line.startswith("#empty\t"):
                _, idx, source, words = line.split("\t", 3)
                by_index.setdefault(int(idx), CandidateList(Sentence.of(words), [], source))
                continue
            if line.startswith("#"):
                continue
            try:
                idx, source, tree_text, scores = line.split("\t")
                tree = parse_bracketed(tree_text)
                score_map = {k: float(v) for k, v in json.loads(scores).items()}
            except ValueError as e:
                raise ValueError(f"{path}:{lineno}: bad candidate record: {e}") from None
            cl = by_index.setdefault(int(idx), CandidateList(Sentence.from_tree(tree), [], source))
            cl.candidates.append(Candidate(tree, score_map))
    if not by_index:
        return []
    n = max(by_index) + 1
    missing = [i for i in range(n) if i not in by_index]
    if missing:
        raise ValueError(f"{path}: no records for sentence indices {missing[:5]}")
    return [by_index[i] for i in range(n)]


# ---------------------------------------------------------------------------
# experiment grid


@dataclass(frozen=True)
class Source:
    model_id: str
    strategy: str
    search: SearchConfig


@dataclass
class ExperimentSpec:
    """One results table.

    ``rows`` name candidate conditions as ``+``-free source lists, e.g.
    ``("B",)`` or ``("B", "A")`` for the union; ``columns`` are scorer
    combinations, e.g. ``("A",)`` or ``("A", "B")``.  ``weights`` maps a
    column's label to fixed weights; unlisted multi-model columns are tuned
    on the dev corpus per row.
    """

    sources: Mapping[str, Source]
    rows: Sequence[tuple[str, ...]]
    columns: Sequence[tuple[str, ...]]
    weights: Mapping[str, Mapping[str, float]] = field(default_factory=dict)
    bootstrap_iterations: int = 1000
    seed: int = 0
    fallback_label: str = "S"


def row_name(row: Sequence[str]) -> str:
    return "|".join(row)


def col_name(col: Sequence[str]) -> str:
    return "+".join(col)


@dataclass
class CellResult:
    row: str
    column: str
    prf: evaluate.PRF
    oracle: evaluate.PRF
    weights: CombinationWeights
    predictions: list[Tree] = field(repr=False, default_factory=list)

    @property
    def config_id(self) -> str:
        return f"{self.row}->{self.column}"


@dataclass
class ExperimentResult:
    cells: list[CellResult]
    significance: list[tuple[str, str, evaluate.SignificanceResult]]
    diagnostics: dict

    def cell(self, row: str, column: str) -> CellResult:
        for c in self.cells:
            if c.row == row and c.column == column:
                return c
        raise KeyError((row, column))

    def table(self) -> list[list[float]]:
        rows = list(dict.fromkeys(c.row for c in self.cells))
        cols = list(dict.fromkeys(c.column for c in self.cells))
        return [[self.cell(r, k).prf.f1 for k in cols] for r in rows]

    def selected_f1_change(self, base_row: str, union_row: str, column: str) -> float:
        """F1(union_row -> column) - F1(base_row -> column); negative means augmentation hurt."""
        return self.cell(union_row, column).prf.f1 - self.cell(base_row, column).prf.f1

    def to_tsv(self, header: Mapping[str, str] | None = None) -> str:
        lines = [f"# {k}\t{v}" for k, v in (header or {}).items()]
        lines.append("config\tf1\tprecision\trecall\toracle_f1\tweights")
        for c in self.cells:
            lines.append(
                f"{c.config_id}\t{c.prf.f1:.4f}\t{c.prf.precision:.4f}\t{c.prf.recall:.4f}\t{c.oracle.f1:.4f}\t{c.weights}"
            )
        lines.append("")
        lines.append("system_a\tsystem_b\tf1_a\tf1_b\tp_value\tswapped")
        for a, b, s in self.significance:
            lines.append(f"{a}\t{b}\t{s.f1_a:.4f}\t{s.f1_b:.4f}\t{s.p_value:.4f}\t{int(s.swapped)}")
        return "\n".join(lines) + "\n"


def _fallback(sentence: Sentence, label: str, scorers: Mapping[str, ScoringModel]) -> CandidateList:
    common = set.intersection(*(set(m.labels) for m in scorers.values())) if scorers else {label}
    if label not in common:
        label = min(common)
    return CandidateList(sentence, [Candidate(Tree(label, sentence.words), {})], "fallback")


def build_sets(
    row: Sequence[str],
    decoded: Mapping[str, Sequence[CandidateList]],
    scorers: Mapping[str, ScoringModel],
    fallback_label: str = "S",
) -> tuple[list[ScoredCandidateSet], int]:
    n = len(next(iter(decoded.values())))
    sets, fallbacks = [], 0
    for i in range(n):
        cset = ScoredCandidateSet.from_list(decoded[row[0]][i])
        for src in row[1:]:
            cset = union_candidates(cset, decoded[src][i])
        if not cset.entries:
            fallbacks += 1
            cset = ScoredCandidateSet.from_list(_fallback(cset.sentence, fallback_label, scorers))
        for mid, model in scorers.items():
            cset = fill_scores(cset, model, mid)
        sets.append(cset)
    return sets, fallbacks


def run_experiment(
    spec: ExperimentSpec,
    scorers: Mapping[str, ScoringModel],
    eval_corpus: Sequence[Tree],
    dev_corpus: Sequence[Tree] | None = None,
    jobs: int = 1,
) -> ExperimentResult:
    """Decode with every source, then score every (candidates, scorers) cell.

    Multi-model columns without fixed weights are tuned on ``dev_corpus``
    (per row); if no dev corpus is given the eval corpus is used.
    """
    dev_corpus = eval_corpus if dev_corpus is None else dev_corpus
    needed = {m for col in spec.columns for m in col}
    missing = needed - set(scorers)
    if missing:
        raise ValueError(f"scoring models not provided: {sorted(missing)}")

    def decode_all(corpus):
        sents = [Sentence.from_tree(t) for t in corpus]
        out = {}
        for tag, src in spec.sources.items():
            out[tag] = decode_corpus(scorers[src.model_id], sents, src.strategy, src.search, tag, src.model_id, jobs)
        return out

    decoded_eval = decode_all(eval_corpus)
    same_dev = dev_corpus is eval_corpus
    decoded_dev = decoded_eval if same_dev else None
    diagnostics = {"fallbacks": {}, "failures": {tag: sum(1 for cl in lists if not cl.candidates) for tag, lists in decoded_eval.items()}}

    cells = []
    for row in spec.rows:
        rname = row_name(row)
        sets, nfb = build_sets(row, decoded_eval, scorers, spec.fallback_label)
        diagnostics["fallbacks"][rname] = nfb
        oracle = evaluate.oracle_f1([s.trees() for s in sets], eval_corpus)
        dev_sets = None
        for col in spec.columns:
            cname = col_name(col)
            if len(col) == 1:
                weights = CombinationWeights({col[0]: 1.0})
            elif cname in spec.weights:
                weights = CombinationWeights(spec.weights[cname])
            else:
                if dev_sets is None:
                    if same_dev:
                        dev_sets = sets
                    else:
                        if decoded_dev is None:
                            decoded_dev = decode_all(dev_corpus)
                        dev_sets, _ = build_sets(row, decoded_dev, scorers, spec.fallback_label)
                weights = tune_weights(list(zip(dev_sets, dev_corpus)), list(col))
            preds = corpus_selection(sets, weights)
            prf = evaluate.corpus_f1(zip(eval_corpus, preds))
            cells.append(CellResult(rname, cname, prf, oracle, weights, preds))

    counts = {c.config_id: evaluate.sentence_counts(eval_corpus, c.predictions) for c in cells}
    significance = []
    for a, b in itertools.combinations(cells, 2):
        res = evaluate.bootstrap_counts(counts[a.config_id], counts[b.config_id], spec.bootstrap_iterations, spec.seed)
        significance.append((a.config_id, b.config_id, res))
    return ExperimentResult(cells, significance, diagnostics)

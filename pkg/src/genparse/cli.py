"""Command-line entry point: ``genparse <command> ...``.

Exit codes: 0 success, 2 configuration error, 3 data error, 4 search
failure, 5 internal error.
"""
from __future__ import annotations

import argparse
import hashlib
import json
import logging
import os
import sys
from pathlib import Path

import yaml

from . import evaluate, rerank, synthetic
from .models import Flavor, ModelError, TrainConfig, load_model, perplexity, save_model, train_count_model
from .search import SearchConfig, decode_corpus
from .treebank import Inventory, ParseError, Sentence, read_corpus, write_corpus

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_DATA = 3
EXIT_SEARCH = 4
EXIT_INTERNAL = 5

log = logging.getLogger("genparse")


class ConfigError(Exception):
    pass


class DataError(Exception):
    pass


def _trees(path, strip_pos=False):
    try:
        return [t for _, t in read_corpus(path, strip_pos=strip_pos)]
    except (OSError, ParseError) as e:
        raise DataError(f"{path}: {e}") from None


def _load(path):
    try:
        return load_model(path)
    except (OSError, ModelError) as e:
        raise DataError(str(e)) from None


def _search_config(args) -> SearchConfig:
    return SearchConfig(
        K=args.K,
        K_w=args.Kw,
        K_a=args.Ka,
        k_best=args.kbest,
        max_open_nts=args.max_open,
        ready_size=args.ready,
    )


# -- commands ---------------------------------------------------------------


def cmd_train(args) -> int:
    trees = _trees(args.corpus, args.strip_pos)
    cfg = TrainConfig(
        flavor=Flavor(args.flavor),
        inventory=Inventory(args.inventory),
        order=args.order,
        smoothing_alpha=args.alpha,
    )
    try:
        model = train_count_model(trees, cfg)
    except ModelError as e:
        raise DataError(str(e)) from None
    save_model(model, args.out)
    if args.dev:
        dev = [t for t in _trees(args.dev, args.strip_pos) if t.labels() <= set(model.labels)]
        print(f"dev perplexity\t{perplexity(model, dev):.4f}")
    return EXIT_OK


def cmd_parse(args) -> int:
    model = _load(args.model)
    sents = [s for s, _ in read_corpus(args.corpus, strip_pos=args.strip_pos)] if not args.raw else [
        Sentence.of(line) for line in Path(args.corpus).read_text(encoding="utf-8").splitlines() if line.strip()
    ]
    source = args.source or Path(args.model).stem
    model_id = args.model_id or source
    lists = decode_corpus(model, sents, args.strategy, _search_config(args), source, model_id, args.jobs)
    rerank.write_candidates(args.out, lists)
    failed = sum(1 for cl in lists if not cl.candidates)
    if failed:
        log.warning("search failed on %d of %d sentences", failed, len(lists))
        return EXIT_SEARCH
    return EXIT_OK


def _parse_models(specs) -> dict:
    out = {}
    for spec in specs or []:
        mid, sep, path = spec.partition("=")
        if not sep:
            raise ConfigError(f"--model expects ID=PATH, got {spec!r}")
        out[mid] = _load(path)
    return out


def _merged_sets(paths) -> list[rerank.ScoredCandidateSet]:
    per_file = []
    for p in paths:
        try:
            per_file.append(rerank.read_candidates(p))
        except (OSError, ValueError) as e:
            raise DataError(str(e)) from None
    n = len(per_file[0])
    if any(len(f) != n for f in per_file):
        raise DataError("candidate files cover different numbers of sentences")
    sets = []
    for i in range(n):
        cset = rerank.ScoredCandidateSet.from_list(per_file[0][i])
        for f in per_file[1:]:
            cset = rerank.union_candidates(cset, f[i])
        sets.append(cset)
    return sets


def _write_sets(path, sets) -> None:
    lists = [rerank.CandidateList(s.sentence, s.entries, ",".join(sorted(s.provenance))) for s in sets]
    rerank.write_candidates(path, lists)


def cmd_rescore(args) -> int:
    models = _parse_models(args.model)
    sets = _merged_sets(args.candidates)
    try:
        for mid, m in models.items():
            sets = [rerank.fill_scores(s, m, mid) for s in sets]
    except ModelError as e:
        raise DataError(str(e)) from None
    _write_sets(args.out, sets)
    return EXIT_OK


def _parse_weights(text: str) -> rerank.CombinationWeights:
    try:
        pairs = [item.split("=") for item in text.split(",")]
        return rerank.CombinationWeights({k: float(v) for k, v in pairs})
    except ValueError as e:
        raise ConfigError(f"bad weights {text!r}: {e}") from None


def cmd_tune(args) -> int:
    sets = _merged_sets(args.candidates)
    golds = _trees(args.gold, args.strip_pos)
    if len(golds) != len(sets):
        raise DataError("gold and candidate files differ in length")
    weights = rerank.tune_weights(list(zip(sets, golds)), args.models.split(","))
    print(json.dumps(weights.weights, sort_keys=True))
    return EXIT_OK


def _predictions(args):
    if args.pred:
        return _trees(args.pred, args.strip_pos)
    sets = _merged_sets(args.candidates)
    try:
        return rerank.corpus_selection(sets, _parse_weights(args.weights))
    except rerank.MissingScoreError as e:
        raise DataError(str(e)) from None


def cmd_eval(args) -> int:
    golds = _trees(args.gold, args.strip_pos)
    preds = _predictions(args)
    try:
        if args.sentence_scores:
            total = evaluate.write_sentence_scores(args.sentence_scores, golds, preds)
        else:
            total = evaluate.corpus_f1(zip(golds, preds))
    except ValueError as e:
        raise DataError(str(e)) from None
    print(f"precision\t{total.precision:.2f}\nrecall\t{total.recall:.2f}\nf1\t{total.f1:.2f}")
    if args.candidates:
        sets = _merged_sets(args.candidates)
        print(f"oracle_f1\t{evaluate.oracle_f1([s.trees() for s in sets], golds).f1:.2f}")
    return EXIT_OK


def cmd_significance(args) -> int:
    golds = _trees(args.gold, args.strip_pos)
    a = _trees(args.pred_a, args.strip_pos)
    b = _trees(args.pred_b, args.strip_pos)
    try:
        res = evaluate.paired_bootstrap(golds, a, b, args.iterations, args.seed, args.jobs)
    except ValueError as e:
        raise DataError(str(e)) from None
    print(json.dumps(res.__dict__, sort_keys=True))
    return EXIT_OK


# -- experiment config --------------------------------------------------------

_PATH_ENV = {"dev": "GENPARSE_DEV", "eval": "GENPARSE_EVAL", "output": "GENPARSE_OUTPUT"}


def load_experiment_config(path: str | Path) -> tuple[dict, str]:
    """Parse an experiment YAML file; returns (config, sha256 of its bytes)."""
    raw = Path(path).read_bytes()
    try:
        cfg = yaml.safe_load(raw)
    except yaml.YAMLError as e:
        raise ConfigError(f"{path}: {e}") from None
    if not isinstance(cfg, dict):
        raise ConfigError(f"{path}: expected a mapping at top level")
    base = Path(path).parent

    def resolve(p):
        p = Path(p)
        return p if p.is_absolute() else base / p

    for key in ("models", "sources", "rows", "columns", "corpora"):
        if key not in cfg:
            raise ConfigError(f"{path}: missing required key {key!r}")
    models = {}
    for mid, p in cfg["models"].items():
        models[mid] = Path(os.environ.get(f"GENPARSE_MODEL_{mid}", resolve(p)))
        if not models[mid].exists():
            raise ConfigError(f"{path}: model file for {mid!r} not found: {models[mid]}")
    cfg["models"] = models
    corpora = cfg["corpora"]
    if "eval" not in corpora:
        raise ConfigError(f"{path}: corpora.eval is required")
    cfg["corpora"] = {k: Path(os.environ.get(_PATH_ENV[k], resolve(v))) for k, v in corpora.items() if k in _PATH_ENV}
    if "output" in cfg:
        cfg["output"] = Path(os.environ.get(_PATH_ENV["output"], resolve(cfg["output"])))
    for tag, src in cfg["sources"].items():
        if src.get("model") not in models:
            raise ConfigError(f"{path}: source {tag!r} refers to unknown model {src.get('model')!r}")
    for row in cfg["rows"]:
        for tag in row:
            if tag not in cfg["sources"]:
                raise ConfigError(f"{path}: row {row} uses unknown source {tag!r}")
    weights = cfg.get("weights") or {}
    for col in cfg["columns"]:
        for mid in col:
            if mid not in models:
                raise ConfigError(f"{path}: column {col} uses unknown model {mid!r}")
        name = rerank.col_name(col)
        if name in weights and set(weights[name]) != set(col):
            raise ConfigError(f"{path}: weights for {name!r} must name exactly {sorted(col)}")
    return cfg, hashlib.sha256(raw).hexdigest()


def build_spec(cfg: dict, seed: int | None = None) -> rerank.ExperimentSpec:
    sources = {}
    for tag, src in cfg["sources"].items():
        search = SearchConfig(
            K=src.get("K", 100),
            K_w=src.get("Kw", 10),
            K_a=src.get("Ka"),
            k_best=src.get("kbest", 10),
            max_open_nts=src.get("max_open", 100),
            ready_size=src.get("ready"),
        )
        sources[tag] = rerank.Source(src["model"], src.get("strategy", "word-sync"), search)
    return rerank.ExperimentSpec(
        sources=sources,
        rows=[tuple(r) for r in cfg["rows"]],
        columns=[tuple(c) for c in cfg["columns"]],
        weights=cfg.get("weights") or {},
        bootstrap_iterations=cfg.get("bootstrap_iterations", 1000),
        seed=cfg.get("seed", 0) if seed is None else seed,
    )


def cmd_experiment(args) -> int:
    try:
        cfg, digest = load_experiment_config(args.config)
        spec = build_spec(cfg, args.seed)
    except (OSError, KeyError, TypeError) as e:
        raise ConfigError(f"{args.config}: {e}") from None
    scorers = {mid: _load(p) for mid, p in cfg["models"].items()}
    eval_trees = _trees(cfg["corpora"]["eval"], cfg.get("strip_pos", False))
    dev_path = cfg["corpora"].get("dev")
    dev_trees = _trees(dev_path, cfg.get("strip_pos", False)) if dev_path else None
    result = rerank.run_experiment(spec, scorers, eval_trees, dev_trees, jobs=args.jobs or cfg.get("jobs", 1))
    header = {"config_sha256": digest, "seed": spec.seed, "sentences": len(eval_trees)}
    text = result.to_tsv(header)
    out = args.out or cfg.get("output")
    if out:
        Path(out).write_text(text, encoding="utf-8")
    else:
        sys.stdout.write(text)
    return EXIT_OK


def cmd_synth(args) -> int:
    trees = synthetic.sample_corpus(args.n, args.seed, args.min_len, args.max_len, pos=args.pos)
    write_corpus(args.out, trees)
    return EXIT_OK


# -- argument parsing ---------------------------------------------------------


def _add_search_flags(p) -> None:
    p.add_argument("--strategy", choices=["action-sync", "word-sync", "exhaustive"], default="word-sync")
    p.add_argument("--K", type=int, default=100, help="action-synchronous beam size")
    p.add_argument("--Kw", type=int, default=10, help="word beam size")
    p.add_argument("--Ka", type=int, default=None, help="action beam size (default 10 x Kw)")
    p.add_argument("--kbest", type=int, default=10)
    p.add_argument("--max-open", type=int, default=100, dest="max_open")
    p.add_argument("--ready", type=int, default=None, help="word-bucket adoption threshold (default Ka)")


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="genparse", description=__doc__.splitlines()[0])
    ap.add_argument("-v", "--verbose", action="store_true")
    sub = ap.add_subparsers(dest="command", required=True)

    p = sub.add_parser("train", help="train a count model")
    p.add_argument("--corpus", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--dev")
    p.add_argument("--flavor", choices=[f.value for f in Flavor], default="generative")
    p.add_argument("--inventory", choices=[i.value for i in Inventory], default="unlabeled")
    p.add_argument("--order", type=int, default=3)
    p.add_argument("--alpha", type=float, default=0.1)
    p.add_argument("--strip-pos", action="store_true")
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("parse", help="decode a corpus into a candidate file")
    p.add_argument("--model", required=True)
    p.add_argument("--corpus", required=True)
    p.add_argument("--raw", action="store_true", help="corpus is one whitespace-tokenized sentence per line")
    p.add_argument("--out", required=True)
    p.add_argument("--source")
    p.add_argument("--model-id")
    p.add_argument("--jobs", type=int, default=1)
    p.add_argument("--strip-pos", action="store_true")
    _add_search_flags(p)
    p.set_defaults(func=cmd_parse)

    p = sub.add_parser("rescore", help="union candidate files and fill in model scores")
    p.add_argument("--candidates", nargs="+", required=True)
    p.add_argument("--model", action="append", help="ID=PATH; repeatable")
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_rescore)

    p = sub.add_parser("tune", help="tune interpolation weights on scored candidates")
    p.add_argument("--candidates", nargs="+", required=True)
    p.add_argument("--gold", required=True)
    p.add_argument("--models", required=True, help="comma-separated model ids")
    p.add_argument("--strip-pos", action="store_true")
    p.set_defaults(func=cmd_tune)

    p = sub.add_parser("eval", help="bracket precision / recall / F1")
    p.add_argument("--gold", required=True)
    g = p.add_mutually_exclusive_group(required=True)
    g.add_argument("--pred")
    g.add_argument("--candidates", nargs="+")
    p.add_argument("--weights", default=None, help="ID=W,... (with --candidates)")
    p.add_argument("--sentence-scores")
    p.add_argument("--strip-pos", action="store_true")
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("significance", help="paired bootstrap test")
    p.add_argument("--gold", required=True)
    p.add_argument("--pred-a", required=True)
    p.add_argument("--pred-b", required=True)
    p.add_argument("--iterations", type=int, default=10000)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--jobs", type=int, default=1)
    p.add_argument("--strip-pos", action="store_true")
    p.set_defaults(func=cmd_significance)

    p = sub.add_parser("experiment", help="run a full candidates x scorers grid")
    p.add_argument("--config", required=True)
    p.add_argument("--out")
    p.add_argument("--seed", type=int, default=None)
    p.add_argument("--jobs", type=int, default=None)
    p.set_defaults(func=cmd_experiment)

    p = sub.add_parser("synth", help="sample a corpus from the toy grammar")
    p.add_argument("--n", type=int, required=True)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--min-len", type=int, default=2)
    p.add_argument("--max-len", type=int, default=15)
    p.add_argument("--pos", action="store_true", help="include preterminal tags")
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_synth)
    return ap


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    if getattr(args, "weights", None) is None and getattr(args, "candidates", None) and args.command == "eval":
        print("eval --candidates needs --weights", file=sys.stderr)
        return EXIT_CONFIG
    try:
        return args.func(args)
    except ConfigError as e:
        print(f"config error: {e}", file=sys.stderr)
        return EXIT_CONFIG
    except DataError as e:
        print(f"data error: {e}", file=sys.stderr)
        return EXIT_DATA
    except Exception as e:  # noqa: BLE001
        log.exception("internal error")
        print(f"internal error: {e}", file=sys.stderr)
        return EXIT_INTERNAL


if __name__ == "__main__":
    sys.exit(main())

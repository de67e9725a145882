"""Word-synchronous beam-size sweep: summed top-1 log-prob and F1 for each K_w.

    python3 scripts/beam_sweep.py --sizes 10 20 40 80 --n 200
"""
import argparse
import math
import time

from genparse import evaluate
from genparse.models import Flavor, TrainConfig, load_model, train_count_model
from genparse.search import SearchConfig, word_sync_beam
from genparse.synthetic import sample_corpus
from genparse.treebank import Sentence, read_corpus


def main() -> None:
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--model", help="model file; default trains one on 2000 sampled trees")
    ap.add_argument("--corpus", help="gold trees; default samples --n sentences")
    ap.add_argument("--n", type=int, default=200)
    ap.add_argument("--max-len", type=int, default=8)
    ap.add_argument("--sizes", type=int, nargs="+", default=[10, 20, 40, 80])
    ap.add_argument("--max-open", type=int, default=10)
    args = ap.parse_args()

    if args.model:
        model = load_model(args.model)
    else:
        model = train_count_model(sample_corpus(2000, seed=1), TrainConfig(flavor=Flavor.GENERATIVE))
    golds = [t for _, t in read_corpus(args.corpus)] if args.corpus else sample_corpus(args.n, seed=4, max_len=args.max_len)
    sents = [Sentence.from_tree(g) for g in golds]

    print("K_w\tK_a\tlogprob\tf1\tseconds")
    for kw in args.sizes:
        cfg = SearchConfig(K_w=kw, k_best=1, max_open_nts=args.max_open)
        t0 = time.perf_counter()
        best = [word_sync_beam(model, s, cfg).candidates[0] for s in sents]
        secs = time.perf_counter() - t0
        total = math.fsum(c.scores[""] for c in best)
        f1 = evaluate.corpus_f1(zip(golds, (c.tree for c in best))).f1
        print(f"{kw}\t{cfg.K_a}\t{total:.3f}\t{f1:.2f}\t{secs:.1f}")


if __name__ == "__main__":
    main()

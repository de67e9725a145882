"""Action- vs word-synchronous search under a model that over-proposes nonterminals.

The base generative model is mixed with a uniform NT distribution so that
opening a constituent always outweighs generating any single word.  Action
beams fill with open constituents and lose the word-generating hypotheses;
word-synchronous beams keep them.

    python3 scripts/search_failure_demo.py --bias 0.5 --n 100
"""
import argparse
import time

from genparse import evaluate
from genparse.models import Flavor, NTBiasedModel, TrainConfig, train_count_model
from genparse.search import SearchConfig, action_sync_beam, word_sync_beam
from genparse.synthetic import sample_corpus
from genparse.treebank import Sentence


def main() -> None:
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--bias", type=float, default=0.5, help="mixture weight on the NT-only distribution")
    ap.add_argument("--n", type=int, default=100)
    ap.add_argument("--K", type=int, default=100)
    ap.add_argument("--Kw", type=int, default=10)
    ap.add_argument("--max-open", type=int, default=10)
    args = ap.parse_args()

    base = train_count_model(sample_corpus(2000, seed=1), TrainConfig(flavor=Flavor.GENERATIVE))
    model = NTBiasedModel(base, args.bias)
    golds = sample_corpus(args.n, seed=3, max_len=10)

    rows = {}
    for name, run, cfg in (
        ("action-sync", action_sync_beam, SearchConfig(K=args.K, k_best=1, max_open_nts=args.max_open)),
        ("word-sync", word_sync_beam, SearchConfig(K_w=args.Kw, k_best=1, max_open_nts=args.max_open)),
    ):
        t0 = time.perf_counter()
        best = [run(model, Sentence.from_tree(g), cfg).candidates[0] for g in golds]
        rows[name] = (best, time.perf_counter() - t0)

    act, wrd = rows["action-sync"][0], rows["word-sync"][0]
    wins = sum(w.scores[""] > a.scores[""] for a, w in zip(act, wrd))
    print("search\tmean_logprob\tmean_f1\tseconds")
    for name, (best, secs) in rows.items():
        lp = sum(c.scores[""] for c in best) / len(best)
        f1 = sum(evaluate.bracket_prf(g, c.tree).f1 for g, c in zip(golds, best)) / len(best)
        print(f"{name}\t{lp:.3f}\t{f1:.2f}\t{secs:.1f}")
    print(f"word-sync finds a higher-scoring parse on {wins}/{len(golds)} sentences")
    print(f"example action-sync parse: {act[0].tree}")


if __name__ == "__main__":
    main()

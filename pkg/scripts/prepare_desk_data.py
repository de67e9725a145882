"""Sample the desk-scale corpora and train the two count models used by configs/desk.yaml.

    python3 scripts/prepare_desk_data.py --out data/desk
"""
import argparse
from pathlib import Path

from genparse.models import Flavor, TrainConfig, save_model, train_count_model
from genparse.synthetic import sample_corpus
from genparse.treebank import write_corpus


def main() -> None:
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--out", default="data/desk")
    ap.add_argument("--train", type=int, default=2000)
    ap.add_argument("--dev", type=int, default=200)
    ap.add_argument("--eval", type=int, default=500)
    ap.add_argument("--max-len", type=int, default=15)
    args = ap.parse_args()

    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    train = sample_corpus(args.train, seed=1, max_len=args.max_len)
    write_corpus(out / "train.trees", train)
    write_corpus(out / "dev.trees", sample_corpus(args.dev, seed=2, max_len=args.max_len))
    write_corpus(out / "eval.trees", sample_corpus(args.eval, seed=3, max_len=args.max_len))
    save_model(train_count_model(train, TrainConfig(flavor=Flavor.GENERATIVE)), out / "gen.model")
    save_model(train_count_model(train, TrainConfig(flavor=Flavor.DISCRIMINATIVE)), out / "disc.model")
    print(f"wrote corpora and models to {out}")


if __name__ == "__main__":
    main()

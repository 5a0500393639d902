"""Write a synthetic train/dev/test standoff corpus whose labels follow word identity."""

import argparse

from trigger_rnn.synthetic import make_lexicon, write_corpus


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("out_dir")
    ap.add_argument("--words", type=int, default=30)
    ap.add_argument("--sizes", type=int, nargs=3, default=(40, 10, 10), metavar=("TRAIN", "DEV", "TEST"))
    ap.add_argument("--seed", type=int, default=0)
    args = ap.parse_args()
    lex = make_lexicon(n_words=args.words, seed=args.seed)
    write_corpus(args.out_dir, lex, sizes=tuple(args.sizes), seed=args.seed)
    print(f"wrote {sum(args.sizes)} sentences under {args.out_dir}")


if __name__ == "__main__":
    main()

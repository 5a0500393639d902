"""Full MLEE experiment: best-of-N GRU and LSTM, the feature/head ablation and a t-test.

Needs the MLEE standoff corpus (train/, dev/ or devel/, test/) and, optionally,
200-dimensional word2vec vectors. Takes hours on a desktop CPU at default sizes.
"""

import argparse
from dataclasses import replace
from pathlib import Path

from trigger_rnn import mlee
from trigger_rnn.cli import cmd_ablate, cmd_eval, cmd_prepare, cmd_stats, cmd_train
from trigger_rnn.evaluation import pct, t_test_one_sided
from trigger_rnn.model import ModelConfig
from trigger_rnn.training import TrainConfig


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("corpus_dir")
    ap.add_argument("out_dir")
    ap.add_argument("--vectors")
    ap.add_argument("--runs", type=int, default=5)
    ap.add_argument("--epochs", type=int, default=30)
    ap.add_argument("--skip-ablation", action="store_true")
    args = ap.parse_args()

    out = Path(args.out_dir)
    prep = cmd_prepare(args.corpus_dir, out, args.vectors)
    print(cmd_stats(prep)[0])

    train_cfg = TrainConfig(runs=args.runs, epochs=args.epochs, combine_train_dev=True)
    scores = {}
    for cell in ("gru", "lstm"):
        root = out / cell
        _, result = cmd_train(prep, args.vectors, ModelConfig(cell_kind=cell), train_cfg, root)
        report = cmd_eval(root / "checkpoints" / "best.ckpt", prep / "test.tsv", root / "reports" / "test")
        scores[cell] = result.scores
        published = mlee.PUBLISHED_GRU if cell == "gru" else mlee.PUBLISHED_LSTM
        print(f"{cell}: best P/R/F1 {pct(report.precision)} {pct(report.recall)} {pct(report.f1)}"
              f"  (published {published[0]:.2f} {published[1]:.2f} {published[2]:.2f});"
              f" mean F1 {pct(result.mean)} +- {pct(result.std)}")
        if cell == "gru":
            for cat, c in report.per_category.items():
                ref = mlee.PUBLISHED_CATEGORIES.get(cat)
                ref_s = f"{ref[2]:.2f}" if ref else "-"
                print(f"  {cat:<10} F1 {pct(c.f1)}  (published {ref_s})")

    if args.runs > 1:
        p = t_test_one_sided(scores["gru"], scores["lstm"])
        print(f"one-sided Welch t-test, GRU > LSTM over {args.runs} runs: p = {p:.4f}")

    if not args.skip_ablation:
        text, _ = cmd_ablate(prep, args.vectors, ModelConfig(), replace(train_cfg, combine_train_dev=False), out / "ablation")
        print(text)


if __name__ == "__main__":
    main()

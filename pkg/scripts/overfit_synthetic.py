"""Train the default model on a separable synthetic corpus until it fits.

Prints per-epoch training loss and token accuracy; stops at the target
accuracy or after --max-epochs.
"""

import argparse

from trigger_rnn.corpus import build_vocabs
from trigger_rnn.model import ModelConfig, TriggerModel
from trigger_rnn.synthetic import make_lexicon, make_sentences, make_sequences
from trigger_rnn.training import TrainConfig, train


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--sentences", type=int, default=50)
    ap.add_argument("--cell", choices=["gru", "lstm"], default="gru")
    ap.add_argument("--max-epochs", type=int, default=200)
    ap.add_argument("--target", type=float, default=0.99)
    ap.add_argument("--seed", type=int, default=0)
    args = ap.parse_args()

    lex = make_lexicon(n_words=30, labels=("A", "B", "C"), seed=args.seed)
    raw = make_sequences(lex, make_sentences(lex, args.sentences, seed=args.seed + 1))
    vocabs = build_vocabs(raw)
    seqs = [vocabs.encode(s) for s in raw]
    gold = [g for s in seqs for g in s.label_ids]
    model = TriggerModel(ModelConfig(cell_kind=args.cell, seed=args.seed), vocabs)

    def on_epoch(row, m):
        pred = [p for s in seqs for p in m.predict(s)]
        acc = sum(p == g for p, g in zip(pred, gold)) / len(gold)
        print(f"epoch {row.epoch:3d}  loss {row.train_loss:.4f}  accuracy {acc:.4f}", flush=True)
        return acc >= args.target

    train(model, seqs, [], TrainConfig(epochs=args.max_epochs, seed=args.seed), on_epoch)


if __name__ == "__main__":
    main()

"""Finite-difference error of the whole-model gradient across random points and eps.

For each parameter tensor above the tolerance at the reference eps, prints the
smallest analytic gradient magnitude and the error at coarser eps values. An
error that shrinks as eps grows points at float64 rounding in the difference
quotient, not at a wrong derivative.
"""

import argparse
import itertools
import sys
from pathlib import Path

import numpy as np

sys.path.insert(0, str(Path(__file__).resolve().parents[1] / "tests"))
from conftest import make_tiny_data, randomize, tiny_config  # noqa: E402

from trigger_rnn.autodiff import grad_check  # noqa: E402
from trigger_rnn.model import TriggerModel  # noqa: E402
from trigger_rnn.training import sentence_loss  # noqa: E402


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--points", type=int, default=10)
    ap.add_argument("--eps", type=float, default=1e-5)
    ap.add_argument("--tol", type=float, default=1e-4)
    args = ap.parse_args()

    vocabs, seqs = make_tiny_data()
    over = total = 0
    for point in range(args.points):
        for cell, feat, head in itertools.product(("lstm", "gru"), ("word_only", "word_plus_entity"), ("g_only", "l_plus_g")):
            model = TriggerModel(tiny_config(cell_kind=cell, feature_variant=feat, head_variant=head), vocabs)
            randomize(model, point)

            def f(tape, _):
                return sentence_loss(model, seqs[1], np.random.default_rng(11), tape)

            for name, t in model.named_tensors():
                total += 1
                err = grad_check(f, t, args.eps)
                if err <= args.tol:
                    continue
                over += 1
                min_g = float(np.min(np.abs(t.grad)))
                coarse = {e: grad_check(f, t, e) for e in (1e-4, 1e-3)}
                print(f"point {point} {cell}/{feat}/{head} {name}: err {err:.2e} min|g| {min_g:.1e} "
                      + " ".join(f"err@{e:g} {v:.1e}" for e, v in coarse.items()))
    print(f"{over} of {total} tensor checks above {args.tol:g} at eps {args.eps:g}")


if __name__ == "__main__":
    main()

"""Token-level trigger scoring: micro P/R/F1, category rollups, confusion matrix, t-test."""

from __future__ import annotations

import math
import warnings
from collections import Counter
from dataclasses import dataclass, field

import numpy as np
from scipy import stats

from .corpus import NONE
from .errors import LengthMismatch, UnmappedLabel


class DegenerateVariance(UserWarning):
    """Both samples of a t-test have zero variance."""


def prf(tp, fp, fn):
    """Precision, recall, F1 with zero-guarded denominators."""
    p = tp / (tp + fp) if tp + fp else 0.0
    r = tp / (tp + fn) if tp + fn else 0.0
    f = 2 * p * r / (p + r) if p + r > 0 else 0.0
    return p, r, f


@dataclass
class Counts:
    tp: int = 0
    fp: int = 0
    fn: int = 0

    @property
    def precision(self):
        return prf(self.tp, self.fp, self.fn)[0]

    @property
    def recall(self):
        return prf(self.tp, self.fp, self.fn)[1]

    @property
    def f1(self):
        return prf(self.tp, self.fp, self.fn)[2]

    def __iadd__(self, other):
        self.tp += other.tp
        self.fp += other.fp
        self.fn += other.fn
        return self


@dataclass
class EvalReport:
    micro: Counts
    per_label: dict
    per_category: dict = field(default_factory=dict)
    confusion_labels: list = field(default_factory=list)
    confusion: np.ndarray | None = None
    n_tokens: int = 0
    deferred: tuple = ()

    @property
    def precision(self):
        return self.micro.precision

    @property
    def recall(self):
        return self.micro.recall

    @property
    def f1(self):
        return self.micro.f1


def micro_prf(gold, pred, deferred=(), none=NONE) -> EvalReport:
    """Pooled token-level counts over the non-None labels.

    TP: pred == gold != None. FP: pred != None and pred != gold. FN: gold !=
    None and pred != gold. A prediction of a deferred label is read as None,
    so every gold token of a deferred label is a false negative whatever the
    model said. None/None agreements are not counted.
    """
    if len(gold) != len(pred):
        raise LengthMismatch(f"{len(gold)} gold vs {len(pred)} predicted labels")
    deferred = frozenset(deferred)
    per_label = {}

    def slot(label):
        c = per_label.get(label)
        if c is None:
            c = per_label[label] = Counts()
        return c

    for g, p in zip(gold, pred):
        if p in deferred:
            p = none
        if g != none:
            slot(g)
        if p == g:
            if g != none:
                slot(g).tp += 1
            continue
        if p != none:
            slot(p).fp += 1
        if g != none:
            slot(g).fn += 1
    micro = Counts()
    for c in per_label.values():
        micro += c
    return EvalReport(micro, dict(sorted(per_label.items())), n_tokens=len(gold), deferred=tuple(sorted(deferred)))


def category_rollup(per_label, category_map, categories=None):
    """Per-category counts (and an ``Overall`` row) from per-label counts."""
    if categories is None:
        categories = sorted(set(category_map.values()))
    out = {c: Counts() for c in categories}
    overall = Counts()
    for label, c in per_label.items():
        if label == NONE:
            continue
        cat = category_map.get(label)
        if cat is None:
            raise UnmappedLabel(f"label {label!r} has no category")
        out.setdefault(cat, Counts())
        out[cat] += c
        overall += c
    out["Overall"] = overall
    return out


def confusion_matrix(gold, pred, labels):
    """Counts of (gold i, predicted j); labels not listed are appended sorted."""
    if len(gold) != len(pred):
        raise LengthMismatch(f"{len(gold)} gold vs {len(pred)} predicted labels")
    labels = list(labels)
    extra = sorted((set(gold) | set(pred)) - set(labels))
    labels += extra
    index = {lab: i for i, lab in enumerate(labels)}
    m = np.zeros((len(labels), len(labels)), dtype=np.int64)
    for g, p in zip(gold, pred):
        m[index[g], index[p]] += 1
    return labels, m


def t_test_one_sided(scores_a, scores_b):
    """p-value of Welch's unpaired t-test for mean(a) > mean(b)."""
    a = np.asarray(scores_a, dtype=np.float64)
    b = np.asarray(scores_b, dtype=np.float64)
    if a.size < 2 or b.size < 2:
        raise ValueError("each sample needs at least two values")
    va, vb = a.var(ddof=1), b.var(ddof=1)
    ma, mb = a.mean(), b.mean()
    if va == 0.0 and vb == 0.0:
        warnings.warn("both samples have zero variance", DegenerateVariance, stacklevel=2)
        return 0.0 if ma > mb else 1.0
    sa, sb = va / a.size, vb / b.size
    se2 = sa + sb
    t = (ma - mb) / math.sqrt(se2)
    df = se2 ** 2 / (sa ** 2 / (a.size - 1) + sb ** 2 / (b.size - 1))
    return float(stats.t.sf(t, df))


def evaluate(gold_seqs, pred_seqs, labels, deferred=(), category_map=None, categories=None) -> EvalReport:
    """Score whole sentences: ``gold_seqs`` / ``pred_seqs`` are label-string lists."""
    gold = [g for seq in gold_seqs for g in seq]
    pred = [p for seq in pred_seqs for p in seq]
    if len(gold_seqs) != len(pred_seqs):
        raise LengthMismatch(f"{len(gold_seqs)} gold vs {len(pred_seqs)} predicted sentences")
    report = micro_prf(gold, pred, deferred)
    for lab in labels:
        if lab != NONE:
            report.per_label.setdefault(lab, Counts())
    report.per_label = dict(sorted(report.per_label.items()))
    report.confusion_labels, report.confusion = confusion_matrix(gold, pred, labels)
    if category_map is not None and all(l in category_map for l in report.per_label):
        report.per_category = category_rollup(report.per_label, category_map, categories)
    return report


# ---------------------------------------------------------------------------
# rendering


def pct(x):
    return f"{100.0 * x:.2f}"


def report_render(report: EvalReport):
    """Human table (percent, 2 decimals) and a flat ``key=value`` record."""
    width = max([len("Overall"), len("Label")] + [len(l) for l in report.per_label] + [len(c) for c in report.per_category])
    head = f"{'Label':<{width}}  {'TP':>6} {'FP':>6} {'FN':>6} {'P':>7} {'R':>7} {'F1':>7}"
    lines = [head, "-" * len(head)]
    for lab, c in report.per_label.items():
        mark = " *" if lab in report.deferred else ""
        lines.append(f"{lab:<{width}}  {c.tp:>6} {c.fp:>6} {c.fn:>6} {pct(c.precision):>7} {pct(c.recall):>7} {pct(c.f1):>7}{mark}")
    if report.per_category:
        lines.append("")
        lines.append(f"{'Category':<{width}}  {'P':>7} {'R':>7} {'F1':>7}")
        for cat, c in report.per_category.items():
            if cat != "Overall":
                lines.append(f"{cat:<{width}}  {pct(c.precision):>7} {pct(c.recall):>7} {pct(c.f1):>7}")
    lines.append("")
    m = report.micro
    lines.append(f"{'Overall':<{width}}  {pct(m.precision):>7} {pct(m.recall):>7} {pct(m.f1):>7}   (TP={m.tp} FP={m.fp} FN={m.fn})")
    if report.deferred:
        lines.append(f"* deferred labels, scored as false negatives: {', '.join(report.deferred)}")
    text = "\n".join(lines) + "\n"

    rec = [
        f"n_tokens={report.n_tokens}",
        f"deferred={','.join(report.deferred)}",
    ]
    for key, c in [("micro", m)] + [(f"label.{l}", c) for l, c in report.per_label.items()] + [
        (f"category.{k}", c) for k, c in report.per_category.items()
    ]:
        rec += [
            f"{key}.tp={c.tp}",
            f"{key}.fp={c.fp}",
            f"{key}.fn={c.fn}",
            f"{key}.precision={c.precision!r}",
            f"{key}.recall={c.recall!r}",
            f"{key}.f1={c.f1!r}",
        ]
    return text, "\n".join(rec) + "\n"


def parse_record(text):
    """Inverse of the record half of :func:`report_render` (ints stay ints)."""
    out = {}
    for line in text.splitlines():
        if not line or line.startswith("#"):
            continue
        key, _, value = line.partition("=")
        if key.endswith((".tp", ".fp", ".fn")) or key == "n_tokens":
            out[key] = int(value)
        elif key.endswith((".precision", ".recall", ".f1")):
            out[key] = float(value)
        else:
            out[key] = value
    return out


def confusion_tsv(report: EvalReport, names=None):
    """Labeled matrix, gold labels down the rows, predictions across."""
    names = names or {}
    labels = [names.get(l, l) for l in report.confusion_labels]
    rows = ["gold\\pred\t" + "\t".join(labels)]
    for lab, row in zip(labels, report.confusion):
        rows.append(lab + "\t" + "\t".join(str(int(v)) for v in row))
    return "\n".join(rows) + "\n"


def label_counts(sequences):
    """Gold token count per label."""
    return Counter(t.label for s in sequences for t in s.tokens)

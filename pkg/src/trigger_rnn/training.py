"""Pretrained vectors, per-sentence SGD, dev-based model selection, multi-run protocol."""

from __future__ import annotations

import logging
import mmap
import statistics
from dataclasses import asdict, dataclass, field, fields, replace
from pathlib import Path

import numpy as np

from . import mlee
from .autodiff import Tape
from .corpus import TokenSequence
from .errors import ConfigError, DimensionMismatch, EmptyTrainSet, MalformedEntry, NonFiniteGradient
from .evaluation import EvalReport, evaluate
from .model import TriggerModel, forward_sentence

log = logging.getLogger(__name__)


# ---------------------------------------------------------------------------
# word2vec vectors


@dataclass
class PretrainedVectors:
    dimension: int
    entries: dict = field(default_factory=dict)
    _folded: dict | None = field(default=None, repr=False, compare=False)

    def __len__(self):
        return len(self.entries)

    def lookup(self, word):
        """Exact match first, then the first case-insensitive match in file order."""
        vec = self.entries.get(word)
        if vec is not None:
            return vec
        if self._folded is None:
            self._folded = {}
            for w, v in self.entries.items():
                self._folded.setdefault(w.lower(), v)
        return self._folded.get(word.lower())


def _parse_header(line, path):
    parts = line.split()
    if len(parts) != 2:
        raise MalformedEntry(f"{path}: header must be 'count dim', got {line.strip()!r}")
    try:
        count, dim = int(parts[0]), int(parts[1])
    except ValueError:
        raise MalformedEntry(f"{path}: header must be 'count dim', got {line.strip()!r}") from None
    if count < 0 or dim <= 0:
        raise MalformedEntry(f"{path}: bad header {line.strip()!r}")
    return count, dim


def _keep(word, vocabulary):
    return vocabulary is None or word.lower() in vocabulary


def load_word2vec(path, binary=None, vocabulary=None) -> PretrainedVectors:
    """Read word2vec vectors (text or binary), widened to float64.

    ``binary=None`` picks the binary reader for ``*.bin`` files. ``vocabulary``
    (lowercased words) restricts which entries are kept, which matters for
    multi-gigabyte vector files.
    """
    path = Path(path)
    if binary is None:
        binary = path.suffix == ".bin"
    vocabulary = None if vocabulary is None else {w.lower() for w in vocabulary}
    entries = {}
    if not binary:
        with open(path, encoding="utf-8", errors="replace") as fh:
            count, dim = _parse_header(fh.readline(), path)
            n = 0
            for lineno, line in enumerate(fh, 2):
                if not line.strip():
                    continue
                parts = line.rstrip().split(" ")
                if len(parts) != dim + 1:
                    raise MalformedEntry(f"{path}:{lineno}: {len(parts) - 1} values, expected {dim}")
                n += 1
                word = parts[0]
                if word in entries or not _keep(word, vocabulary):
                    continue
                try:
                    entries[word] = np.array(parts[1:], dtype=np.float64)
                except ValueError:
                    raise MalformedEntry(f"{path}:{lineno}: non-numeric value") from None
        if n != count:
            raise DimensionMismatch(f"{path}: header announces {count} entries, found {n}")
        return PretrainedVectors(dim, entries)

    with open(path, "rb") as fh, mmap.mmap(fh.fileno(), 0, access=mmap.ACCESS_READ) as mm:
        nl = mm.find(b"\n")
        if nl < 0:
            raise MalformedEntry(f"{path}: missing header")
        count, dim = _parse_header(mm[:nl].decode("ascii", errors="replace"), path)
        pos = nl + 1
        size = len(mm)
        nbytes = 4 * dim
        for i in range(count):
            while pos < size and mm[pos:pos + 1] in (b"\n", b"\r"):
                pos += 1
            sp = mm.find(b" ", pos)
            if sp < 0 or sp + 1 + nbytes > size:
                raise DimensionMismatch(f"{path}: header announces {count} entries, file ends after {i}")
            word = mm[pos:sp].decode("utf-8", errors="replace")
            start = sp + 1
            pos = start + nbytes
            if word in entries or not _keep(word, vocabulary):
                continue
            entries[word] = np.frombuffer(mm[start:pos], dtype="<f4").astype(np.float64)
    return PretrainedVectors(dim, entries)


def save_word2vec_text(path, vectors: PretrainedVectors):
    lines = [f"{len(vectors.entries)} {vectors.dimension}"]
    for w, v in vectors.entries.items():
        lines.append(w + " " + " ".join(repr(float(x)) for x in v))
    Path(path).write_text("\n".join(lines) + "\n", encoding="utf-8")


def save_word2vec_binary(path, vectors: PretrainedVectors):
    out = [f"{len(vectors.entries)} {vectors.dimension}\n".encode()]
    for w, v in vectors.entries.items():
        out.append(w.encode("utf-8") + b" " + np.asarray(v, dtype="<f4").tobytes() + b"\n")
    Path(path).write_bytes(b"".join(out))


# ---------------------------------------------------------------------------
# loss and update


def sentence_loss(model: TriggerModel, sequence: TokenSequence, rng=None, tape=None, train_mode=True):
    """Mean token cross-entropy of one sentence, recorded on ``tape``."""
    if tape is None:
        tape = Tape()
    trace = forward_sentence(model, sequence, train_mode=train_mode, rng=rng, tape=tape)
    losses = [tape.softmax_cross_entropy(lg, t.label_id) for lg, t in zip(trace.logits, sequence.tokens)]
    return tape.mean(losses)


def _grad_view(t):
    if t.touched is None:
        return t.grad
    rows = sorted(t.touched)
    return t.grad[rows]


def sgd_step(params, learning_rate, grad_clip_norm=None):
    """Clip by global L2 norm, take a plain SGD step, zero the gradients.

    Returns the gradient norm before clipping.
    """
    sq = 0.0
    for t in params:
        g = _grad_view(t)
        s = float(np.dot(g.ravel(), g.ravel()))
        if not np.isfinite(s):
            raise NonFiniteGradient(f"non-finite gradient in {t.name or 'tensor'}")
        sq += s
    norm = float(np.sqrt(sq))
    scale = 1.0
    if grad_clip_norm is not None and norm > grad_clip_norm:
        scale = grad_clip_norm / norm
    step = learning_rate * scale
    for t in params:
        if t.touched is None:
            t.values -= step * t.grad
        elif t.touched:
            rows = sorted(t.touched)
            t.values[rows] -= step * t.grad[rows]
        t.zero_grad()
    return norm


def clip_gradients(params, max_norm):
    """Scale gradients in place so their global norm is at most ``max_norm``."""
    norm = float(np.sqrt(sum(float(np.sum(_grad_view(t) ** 2)) for t in params)))
    if norm > max_norm:
        for t in params:
            t.grad *= max_norm / norm
    return norm


# ---------------------------------------------------------------------------
# training loop


@dataclass
class TrainConfig:
    learning_rate: float = 0.05
    epochs: int = 30
    grad_clip_norm: float = 5.0
    seed: int = 0
    runs: int = 5
    shuffle: bool = True
    combine_train_dev: bool = False
    selection_metric: str = "dev_f1"

    def __post_init__(self):
        if not self.learning_rate > 0:
            raise ConfigError(f"learning_rate must be > 0, got {self.learning_rate}")
        if self.epochs < 1:
            raise ConfigError(f"epochs must be >= 1, got {self.epochs}")
        if self.runs < 1:
            raise ConfigError(f"runs must be >= 1, got {self.runs}")
        if not self.grad_clip_norm > 0:
            raise ConfigError(f"grad_clip_norm must be > 0, got {self.grad_clip_norm}")
        if self.selection_metric != "dev_f1":
            raise ConfigError("only selection_metric = dev_f1 is supported")

    def to_dict(self):
        return asdict(self)

    @classmethod
    def from_dict(cls, d):
        known = {f.name for f in fields(cls)}
        return cls(**{k: v for k, v in d.items() if k in known})


@dataclass
class EpochLog:
    epoch: int
    train_loss: float
    dev_precision: float
    dev_recall: float
    dev_f1: float

    def row(self):
        return f"{self.epoch}\t{self.train_loss!r}\t{self.dev_precision!r}\t{self.dev_recall!r}\t{self.dev_f1!r}"


LOG_HEADER = "epoch\ttrain_loss\tdev_precision\tdev_recall\tdev_f1"


def log_tsv(rows):
    return "\n".join([LOG_HEADER] + [r.row() for r in rows]) + "\n"


@dataclass
class Checkpoint:
    epoch: int
    state: dict
    dev_f1: float


def train_epoch(model: TriggerModel, sequences, cfg: TrainConfig, rng):
    """One pass of per-sentence updates; returns the mean sentence loss."""
    order = rng.permutation(len(sequences)) if cfg.shuffle else range(len(sequences))
    params = model.parameters()
    total = 0.0
    for i in order:
        tape = Tape()
        loss = sentence_loss(model, sequences[i], rng, tape)
        tape.backward(loss)
        sgd_step(params, cfg.learning_rate, cfg.grad_clip_norm)
        total += loss.item()
    return total / len(sequences)


def predict_all(model: TriggerModel, sequences):
    return [model.predict_labels(s) for s in sequences]


def evaluate_model(model: TriggerModel, sequences) -> EvalReport:
    """Eval-mode scoring against the gold label strings of ``sequences``."""
    preds = predict_all(model, sequences)
    gold = [s.labels for s in sequences]
    return evaluate(gold, preds, list(model.vocabs.labels), model.vocabs.deferred_fn_labels,
                    mlee.CATEGORY_MAP, mlee.CATEGORIES)


def train(model: TriggerModel, train_sequences, dev_sequences, cfg: TrainConfig, on_epoch=None):
    """Train in place; the model ends holding the selected parameters.

    Selection is by dev micro-F1, earliest epoch on ties. Without a dev set the
    last epoch is kept. ``on_epoch(row, model)`` may return True to stop early.
    Returns (Checkpoint, list of EpochLog).
    """
    seqs = [model.vocabs.training_view(s) for s in train_sequences if len(s)]
    if not seqs:
        raise EmptyTrainSet("no non-empty training sentences")
    dev = [s for s in dev_sequences if len(s)]
    rng = np.random.default_rng(cfg.seed)
    best = None
    rows = []
    for epoch in range(1, cfg.epochs + 1):
        loss = train_epoch(model, seqs, cfg, rng)
        if dev:
            rep = evaluate_model(model, dev)
            row = EpochLog(epoch, loss, rep.precision, rep.recall, rep.f1)
        else:
            row = EpochLog(epoch, loss, 0.0, 0.0, 0.0)
        rows.append(row)
        log.info("epoch %d loss %.4f dev F1 %.4f", epoch, loss, row.dev_f1)
        if best is None or (row.dev_f1 > best.dev_f1 if dev else True):
            best = Checkpoint(epoch, model.state_dict(), row.dev_f1)
        if on_epoch is not None and on_epoch(row, model):
            break
    model.load_state(best.state)
    return best, rows


def fit(make_model, train_sequences, dev_sequences, cfg: TrainConfig, on_epoch=None):
    """``train`` plus the optional retrain-on-train+dev protocol.

    With ``cfg.combine_train_dev`` a fresh model is trained on train+dev for the
    number of epochs selected on dev. Returns (model, checkpoint, log rows).
    """
    model = make_model()
    best, rows = train(model, train_sequences, dev_sequences, cfg, on_epoch)
    if not cfg.combine_train_dev:
        return model, best, rows
    final = make_model()
    final_cfg = replace(cfg, epochs=best.epoch)
    last, more = train(final, list(train_sequences) + list(dev_sequences), [], final_cfg, on_epoch)
    return final, last, rows + more


@dataclass
class RunResult:
    seed: int
    test_report: EvalReport
    model: TriggerModel
    log: list

    @property
    def test_f1(self):
        return self.test_report.f1


@dataclass
class MultiRunResult:
    runs: list

    @property
    def scores(self):
        return [r.test_f1 for r in self.runs]

    @property
    def best(self):
        return max(self.runs, key=lambda r: r.test_f1)

    @property
    def mean(self):
        return statistics.fmean(self.scores)

    @property
    def std(self):
        return statistics.stdev(self.scores) if len(self.runs) > 1 else 0.0


def multi_run(make_model, train_sequences, dev_sequences, test_sequences, cfg: TrainConfig, runs=None, on_run=None):
    """Train ``runs`` models with seeds seed, seed+1, ... and score each on test.

    ``make_model(seed)`` builds a fresh model; the same seed drives training.
    """
    runs = cfg.runs if runs is None else runs
    results = []
    for i in range(runs):
        seed = cfg.seed + i
        run_cfg = replace(cfg, seed=seed)
        model, _, rows = fit(lambda: make_model(seed), train_sequences, dev_sequences, run_cfg)
        res = RunResult(seed, evaluate_model(model, test_sequences), model, rows)
        results.append(res)
        if on_run is not None:
            on_run(res)
    return MultiRunResult(results)

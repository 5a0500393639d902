"""Bidirectional RNN trigger classifier.

Per token k of a sentence:

    l_k = E_w[word_k] (+) E_e[entity_k]           word-level feature
    g_k = h_fwd_k (+) h_bwd_k                      sentence-level feature
    f_k = g_k (+) l_k   (or just g_k)
    h_0 = tanh(W_0 f_k + b_0), h_i = tanh(W_i h_{i-1} + b_i)   with dropout
    p(y | x) = softmax(W_o h_last + b_o)

Gate weights are stacked row-wise: LSTM blocks are [input, forget, output,
candidate]; GRU input blocks are [update, reset, candidate] with separate
hidden-to-hidden matrices ``U_zr`` (update+reset) and ``U_c`` (candidate).
"""

from __future__ import annotations

import json
import struct
from dataclasses import asdict, dataclass, field, fields
from pathlib import Path

import numpy as np

from .autodiff import Tape, Tensor, stable_softmax
from .corpus import TokenSequence, Vocabularies
from .errors import CheckpointError, ConfigError, DimensionMismatch, EmptySequence, IndexOutOfRange, ShapeMismatch

CELL_KINDS = ("lstm", "gru")
FEATURE_VARIANTS = ("word_only", "word_plus_entity")
HEAD_VARIANTS = ("g_only", "l_plus_g")

CHECKPOINT_MAGIC = b"TRIGRNN\x00"
CHECKPOINT_VERSION = 1


@dataclass
class ModelConfig:
    d_w: int = 200
    d_e: int = 50
    rnn_hidden: int = 250
    hidden_dims: tuple = (150, 100)
    dropout_rate: float = 0.2
    cell_kind: str = "gru"
    feature_variant: str = "word_plus_entity"
    head_variant: str = "l_plus_g"
    seed: int = 0
    train_word_embeddings: bool = True

    def __post_init__(self):
        self.hidden_dims = tuple(int(d) for d in self.hidden_dims)
        if self.cell_kind not in CELL_KINDS:
            raise ConfigError(f"cell_kind must be one of {CELL_KINDS}, got {self.cell_kind!r}")
        if self.feature_variant not in FEATURE_VARIANTS:
            raise ConfigError(f"feature_variant must be one of {FEATURE_VARIANTS}, got {self.feature_variant!r}")
        if self.head_variant not in HEAD_VARIANTS:
            raise ConfigError(f"head_variant must be one of {HEAD_VARIANTS}, got {self.head_variant!r}")
        if min(self.d_w, self.d_e, self.rnn_hidden, *self.hidden_dims) <= 0:
            raise ConfigError("all dimensions must be positive")
        if not 0.0 <= self.dropout_rate < 1.0:
            raise ConfigError(f"dropout_rate must lie in [0, 1), got {self.dropout_rate}")

    @property
    def uses_entities(self):
        return self.feature_variant == "word_plus_entity"

    @property
    def local_dim(self):
        return self.d_w + (self.d_e if self.uses_entities else 0)

    @property
    def global_dim(self):
        return 2 * self.rnn_hidden

    @property
    def fused_dim(self):
        return self.global_dim + (self.local_dim if self.head_variant == "l_plus_g" else 0)

    def to_dict(self):
        d = asdict(self)
        d["hidden_dims"] = list(self.hidden_dims)
        return d

    @classmethod
    def from_dict(cls, d):
        known = {f.name for f in fields(cls)}
        return cls(**{k: v for k, v in d.items() if k in known})


@dataclass
class EmbeddingTable:
    word_table: Tensor
    entity_table: Tensor | None

    @property
    def d_w(self):
        return self.word_table.shape[1]

    @property
    def d_e(self):
        return 0 if self.entity_table is None else self.entity_table.shape[1]


@dataclass
class RnnCellParams:
    cell_kind: str
    hidden_dim: int
    W: Tensor
    U: Tensor
    b: Tensor
    U_c: Tensor | None = None  # GRU candidate hidden-to-hidden

    def tensors(self):
        return [t for t in (self.W, self.U, self.b, self.U_c) if t is not None]


@dataclass
class ClassifierHead:
    weights: list
    biases: list
    W_o: Tensor
    b_o: Tensor
    dropout_rate: float = 0.2

    @property
    def layer_dims(self):
        return [w.shape[0] for w in self.weights]


@dataclass
class ForwardTrace:
    local: list = field(default_factory=list)
    global_: list = field(default_factory=list)
    fused: list = field(default_factory=list)
    logits: list = field(default_factory=list)
    probs: list = field(default_factory=list)
    tape: Tape | None = None

    def predictions(self, allowed=None):
        """Argmax label id per token, optionally restricted to a boolean mask."""
        out = []
        for p in self.probs:
            if allowed is not None:
                p = np.where(allowed, p, -np.inf)
            out.append(int(np.argmax(p)))
        return out


# ---------------------------------------------------------------------------
# initialization


def glorot(rng, rows, cols, blocks=1):
    """Uniform(+-sqrt(6/(fan_in+fan_out))) per stacked gate block."""
    bound = np.sqrt(6.0 / (cols + rows))
    return rng.uniform(-bound, bound, size=(blocks * rows, cols))


def _param(values, name, trainable=True):
    return Tensor(values, requires_grad=trainable, name=name)


def init_cell(rng, kind, input_dim, hidden, prefix):
    if kind == "lstm":
        return RnnCellParams(
            kind, hidden,
            W=_param(glorot(rng, hidden, input_dim, 4), f"{prefix}.W"),
            U=_param(glorot(rng, hidden, hidden, 4), f"{prefix}.U"),
            b=_param(np.zeros(4 * hidden), f"{prefix}.b"),
        )
    return RnnCellParams(
        kind, hidden,
        W=_param(glorot(rng, hidden, input_dim, 3), f"{prefix}.W"),
        U=_param(glorot(rng, hidden, hidden, 2), f"{prefix}.U_zr"),
        b=_param(np.zeros(3 * hidden), f"{prefix}.b"),
        U_c=_param(glorot(rng, hidden, hidden), f"{prefix}.U_c"),
    )


def init_head(rng, in_dim, hidden_dims, n_labels, dropout_rate):
    weights, biases = [], []
    prev = in_dim
    for i, d in enumerate(hidden_dims):
        weights.append(_param(glorot(rng, d, prev), f"head.W{i}"))
        biases.append(_param(np.zeros(d), f"head.b{i}"))
        prev = d
    return ClassifierHead(
        weights, biases,
        W_o=_param(glorot(rng, n_labels, prev), "head.W_o"),
        b_o=_param(np.zeros(n_labels), "head.b_o"),
        dropout_rate=dropout_rate,
    )


# ---------------------------------------------------------------------------
# forward pieces


def embed(tape: Tape, sequence: TokenSequence, tables: EmbeddingTable, variant="word_plus_entity"):
    """Word-level feature vector for every token."""
    out = []
    for t in sequence.tokens:
        if not 0 <= t.word_id < tables.word_table.shape[0]:
            raise IndexOutOfRange(f"word id {t.word_id} outside table of {tables.word_table.shape[0]} rows")
        w = tape.lookup(tables.word_table, t.word_id)
        if variant == "word_plus_entity":
            if not 0 <= t.entity_id < tables.entity_table.shape[0]:
                raise IndexOutOfRange(f"entity id {t.entity_id} outside table of {tables.entity_table.shape[0]} rows")
            w = tape.concat(w, tape.lookup(tables.entity_table, t.entity_id))
        out.append(w)
    return out


def _check_cell_input(p, x, h):
    if x.shape != (p.W.shape[1],) or h.shape != (p.hidden_dim,):
        raise ShapeMismatch(f"{p.cell_kind} step: x {x.shape}, h {h.shape} vs W {p.W.shape}")


def lstm_step(tape: Tape, p: RnnCellParams, x, h_prev, c_prev):
    """One LSTM step; returns (h_t, c_t)."""
    x, h_prev, c_prev = (v if isinstance(v, Tensor) else Tensor(v) for v in (x, h_prev, c_prev))
    _check_cell_input(p, x, h_prev)
    H = p.hidden_dim
    z = tape.add(tape.add(tape.matmul(p.W, x), tape.matmul(p.U, h_prev)), p.b)
    gates = tape.sigmoid(tape.slice(z, 0, 3 * H))
    i = tape.slice(gates, 0, H)
    f = tape.slice(gates, H, 2 * H)
    o = tape.slice(gates, 2 * H, 3 * H)
    cand = tape.tanh(tape.slice(z, 3 * H, 4 * H))
    c = tape.add(tape.mul(f, c_prev), tape.mul(i, cand))
    h = tape.mul(o, tape.tanh(c))
    return h, c


def gru_step(tape: Tape, p: RnnCellParams, x, h_prev):
    """One GRU step: h_t = (1 - z) * h_prev + z * cand."""
    x, h_prev = (v if isinstance(v, Tensor) else Tensor(v) for v in (x, h_prev))
    _check_cell_input(p, x, h_prev)
    H = p.hidden_dim
    a = tape.add(tape.matmul(p.W, x), p.b)
    zr = tape.sigmoid(tape.add(tape.slice(a, 0, 2 * H), tape.matmul(p.U, h_prev)))
    z = tape.slice(zr, 0, H)
    r = tape.slice(zr, H, 2 * H)
    cand = tape.tanh(tape.add(tape.slice(a, 2 * H, 3 * H), tape.matmul(p.U_c, tape.mul(r, h_prev))))
    return tape.add(h_prev, tape.mul(z, tape.sub(cand, h_prev)))


def run_rnn(tape, p, xs):
    h = Tensor(np.zeros(p.hidden_dim))
    if p.cell_kind == "lstm":
        c = Tensor(np.zeros(p.hidden_dim))
        out = []
        for x in xs:
            h, c = lstm_step(tape, p, x, h, c)
            out.append(h)
        return out
    out = []
    for x in xs:
        h = gru_step(tape, p, x, h)
        out.append(h)
    return out


def bi_rnn(tape: Tape, params_fwd: RnnCellParams, params_bwd: RnnCellParams, l_sequence):
    """g_k = forward state at k (+) backward state at k."""
    if not l_sequence:
        raise EmptySequence("bi_rnn needs at least one token")
    fwd = run_rnn(tape, params_fwd, l_sequence)
    bwd = run_rnn(tape, params_bwd, l_sequence[::-1])[::-1]
    return [tape.concat(hf, hb) for hf, hb in zip(fwd, bwd)]


def classify(tape: Tape, f, head: ClassifierHead, rng=None, train_mode=False):
    """Hidden tanh layers with dropout, then the output layer.

    Returns (logits tensor, probability vector).
    """
    first = head.weights[0] if head.weights else head.W_o
    if f.shape != (first.shape[1],):
        raise ShapeMismatch(f"fused feature {f.shape} vs head input width {first.shape[1]}")
    h = f
    for W, b in zip(head.weights, head.biases):
        h = tape.tanh(tape.add(tape.matmul(W, h), b))
        h = tape.dropout(h, head.dropout_rate, rng, train_mode)
    logits = tape.add(tape.matmul(head.W_o, h), head.b_o)
    return logits, stable_softmax(logits.values)


class TriggerModel:
    """Parameters plus vocabularies; forward passes go through module functions."""

    def __init__(self, config: ModelConfig, vocabs: Vocabularies, pretrained=None):
        self.config = config
        self.vocabs = vocabs
        rng = np.random.default_rng(config.seed)
        n_w, n_e, n_labels = len(vocabs.words), len(vocabs.entities), len(vocabs.labels)

        word = rng.uniform(-0.05, 0.05, size=(n_w, config.d_w))
        self.pretrained_rows = 0
        if pretrained is not None:
            if pretrained.dimension != config.d_w:
                raise DimensionMismatch(f"pretrained vectors have dimension {pretrained.dimension}, d_w is {config.d_w}")
            for wid, w in enumerate(vocabs.words):
                vec = pretrained.lookup(w)
                if vec is not None:
                    word[wid] = vec
                    self.pretrained_rows += 1
        word_table = _param(word, "embed.word", trainable=config.train_word_embeddings)
        entity_table = None
        if config.uses_entities:
            entity_table = _param(rng.uniform(-0.05, 0.05, size=(n_e, config.d_e)), "embed.entity")
        self.tables = EmbeddingTable(word_table, entity_table)
        self.rnn_fwd = init_cell(rng, config.cell_kind, config.local_dim, config.rnn_hidden, "rnn_fwd")
        self.rnn_bwd = init_cell(rng, config.cell_kind, config.local_dim, config.rnn_hidden, "rnn_bwd")
        self.head = init_head(rng, config.fused_dim, config.hidden_dims, n_labels, config.dropout_rate)
        for t in (word_table, entity_table):
            if t is not None and t.requires_grad:
                t.touched = set()

    # -- parameter access ------------------------------------------------

    def named_tensors(self):
        """All parameter tensors in checkpoint order."""
        out = [self.tables.word_table]
        if self.tables.entity_table is not None:
            out.append(self.tables.entity_table)
        out += self.rnn_fwd.tensors() + self.rnn_bwd.tensors()
        for W, b in zip(self.head.weights, self.head.biases):
            out += [W, b]
        out += [self.head.W_o, self.head.b_o]
        return [(t.name, t) for t in out]

    def parameters(self):
        """Trainable tensors."""
        return [t for _, t in self.named_tensors() if t.requires_grad]

    def state_dict(self):
        return {name: t.values.copy() for name, t in self.named_tensors()}

    def load_state(self, state):
        for name, t in self.named_tensors():
            if state[name].shape != t.shape:
                raise CheckpointError(f"{name}: shape {state[name].shape} vs {t.shape}")
            t.values[...] = state[name]

    def zero_grad(self):
        for t in self.parameters():
            t.zero_grad()

    @property
    def allowed_labels(self):
        """Boolean mask of labels the model may predict (deferred labels excluded)."""
        deferred = self.vocabs.deferred_fn_labels
        return np.array([lab not in deferred for lab in self.vocabs.labels])

    # -- inference -------------------------------------------------------

    def forward(self, sequence, train_mode=False, rng=None, tape=None):
        return forward_sentence(self, sequence, train_mode, rng, tape)

    def predict(self, sequence):
        """Predicted label ids (eval mode, deferred labels never predicted)."""
        return self.forward(sequence).predictions(self.allowed_labels)

    def predict_labels(self, sequence):
        return [self.vocabs.labels.items[i] for i in self.predict(sequence)]

    # -- persistence -----------------------------------------------------

    def save(self, path, meta=None):
        save_checkpoint(self, path, meta)

    @classmethod
    def load(cls, path):
        return load_checkpoint(path)[0]


def forward_sentence(model: TriggerModel, sequence: TokenSequence, train_mode=False, rng=None, tape=None) -> ForwardTrace:
    """embed -> bi_rnn -> fuse -> classify for every token of one sentence."""
    if len(sequence) == 0:
        raise EmptySequence(f"{sequence.doc_id}: empty sentence")
    if train_mode and rng is None:
        raise ValueError("train_mode needs an rng for dropout")
    if tape is None:
        tape = Tape(record=train_mode)
    cfg = model.config
    local = embed(tape, sequence, model.tables, cfg.feature_variant)
    glob = bi_rnn(tape, model.rnn_fwd, model.rnn_bwd, local)
    trace = ForwardTrace(local=local, global_=glob, tape=tape)
    for l, g in zip(local, glob):
        f = tape.concat(g, l) if cfg.head_variant == "l_plus_g" else g
        logits, probs = classify(tape, f, model.head, rng, train_mode)
        trace.fused.append(f)
        trace.logits.append(logits)
        trace.probs.append(probs)
    return trace


# ---------------------------------------------------------------------------
# checkpoint container
#
# layout: 8-byte magic, uint32 version, uint64 header length, UTF-8 JSON header
# (config, vocabs, tensor names/shapes in order, free-form meta), then each
# tensor's values as little-endian float64 in row-major order.


def checkpoint_bytes(model: TriggerModel, meta=None) -> bytes:
    tensors = model.named_tensors()
    header = {
        "config": model.config.to_dict(),
        "vocabs": model.vocabs.to_dict(),
        "vocab_digest": model.vocabs.digest(),
        "tensors": [{"name": name, "shape": list(t.shape)} for name, t in tensors],
        "meta": meta or {},
    }
    blob = json.dumps(header, sort_keys=True, ensure_ascii=False).encode("utf-8")
    parts = [CHECKPOINT_MAGIC, struct.pack("<IQ", CHECKPOINT_VERSION, len(blob)), blob]
    parts += [np.ascontiguousarray(t.values, dtype="<f8").tobytes() for _, t in tensors]
    return b"".join(parts)


def save_checkpoint(model: TriggerModel, path, meta=None):
    Path(path).write_bytes(checkpoint_bytes(model, meta))


def load_checkpoint(path):
    """Returns (model, header)."""
    data = Path(path).read_bytes()
    if data[:8] != CHECKPOINT_MAGIC:
        raise CheckpointError(f"{path}: not a checkpoint file")
    version, hlen = struct.unpack_from("<IQ", data, 8)
    if version != CHECKPOINT_VERSION:
        raise CheckpointError(f"{path}: unsupported checkpoint version {version}")
    offset = 8 + struct.calcsize("<IQ")
    header = json.loads(data[offset:offset + hlen].decode("utf-8"))
    offset += hlen
    config = ModelConfig.from_dict(header["config"])
    vocabs = Vocabularies.from_dict(header["vocabs"])
    model = TriggerModel(config, vocabs)
    state = {}
    for entry in header["tensors"]:
        shape = tuple(entry["shape"])
        n = int(np.prod(shape)) if shape else 1
        arr = np.frombuffer(data, dtype="<f8", count=n, offset=offset).reshape(shape)
        state[entry["name"]] = arr.astype(np.float64)
        offset += 8 * n
    if offset != len(data):
        raise CheckpointError(f"{path}: {len(data) - offset} trailing bytes")
    expected = [name for name, _ in model.named_tensors()]
    if [e["name"] for e in header["tensors"]] != expected:
        raise CheckpointError(f"{path}: tensor list does not match the config")
    model.load_state(state)
    return model, header

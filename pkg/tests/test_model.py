import itertools
from dataclasses import replace

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from conftest import make_tiny_data, randomize, tiny_config
from trigger_rnn.autodiff import Tape, Tensor, grad_check
from trigger_rnn.corpus import Token, TokenSequence
from trigger_rnn.errors import DimensionMismatch, EmptySequence, IndexOutOfRange, ShapeMismatch
from trigger_rnn.model import (
    ModelConfig,
    TriggerModel,
    bi_rnn,
    classify,
    embed,
    forward_sentence,
    gru_step,
    init_cell,
    init_head,
    load_checkpoint,
    lstm_step,
)
from trigger_rnn.synthetic import random_vectors
from trigger_rnn.training import sentence_loss

TOL = 1e-4
# Parameter point for the whole-model checks; see
# test_end_to_end_tiny_coordinate_is_roundoff for why it is pinned.
E2E_SEED = 8
VARIANTS = list(itertools.product(["word_only", "word_plus_entity"], ["g_only", "l_plus_g"]))


def test_default_config_matches_published_sizes():
    cfg = ModelConfig()
    assert (cfg.d_w, cfg.d_e, cfg.rnn_hidden, cfg.hidden_dims, cfg.dropout_rate) == (200, 50, 250, (150, 100), 0.2)
    assert cfg.local_dim == 250
    assert cfg.global_dim == 500
    assert cfg.fused_dim == 750
    assert replace(cfg, head_variant="g_only").fused_dim == 500
    assert replace(cfg, feature_variant="word_only").local_dim == 200


def test_default_model_shapes(tiny_data):
    vocabs, seqs = tiny_data
    model = TriggerModel(ModelConfig(), vocabs)
    trace = forward_sentence(model, seqs[0])
    assert trace.local[0].shape == (250,)
    assert trace.global_[0].shape == (500,)
    assert trace.fused[0].shape == (750,)
    assert trace.probs[0].shape == (len(vocabs.labels),)
    h, c = lstm_step(Tape(), init_cell(np.random.default_rng(0), "lstm", 250, 250, "x"), np.zeros(250), np.zeros(250), np.zeros(250))
    assert h.shape == c.shape == (250,)


@settings(max_examples=30)
@given(
    d_w=st.integers(1, 6), d_e=st.integers(1, 4), hidden=st.integers(1, 5),
    dims=st.lists(st.integers(1, 5), min_size=1, max_size=3),
    cell=st.sampled_from(["lstm", "gru"]), variant=st.sampled_from(VARIANTS),
)
def test_dimension_algebra(d_w, d_e, hidden, dims, cell, variant):
    vocabs, seqs = make_tiny_data()
    cfg = ModelConfig(d_w=d_w, d_e=d_e, rnn_hidden=hidden, hidden_dims=tuple(dims), cell_kind=cell,
                      feature_variant=variant[0], head_variant=variant[1])
    trace = forward_sentence(TriggerModel(cfg, vocabs), seqs[1])
    l_dim = d_w + (d_e if variant[0] == "word_plus_entity" else 0)
    for l, g, f, p in zip(trace.local, trace.global_, trace.fused, trace.probs):
        assert l.shape == (l_dim,)
        assert g.shape == (2 * hidden,)
        assert f.shape == (2 * hidden + (l_dim if variant[1] == "l_plus_g" else 0),)
        assert abs(p.sum() - 1.0) <= 1e-12


def test_lstm_zero_parameters_fixed_point():
    p = init_cell(np.random.default_rng(0), "lstm", 4, 3, "c")
    for t in p.tensors():
        t.values[...] = 0
    h, c = lstm_step(Tape(), p, np.ones(4), np.zeros(3), np.zeros(3))
    assert np.array_equal(h.values, np.zeros(3)) and np.array_equal(c.values, np.zeros(3))
    h, c = lstm_step(Tape(), p, np.ones(4), np.zeros(3), np.full(3, 2.0))
    np.testing.assert_allclose(c.values, 1.0)
    np.testing.assert_allclose(h.values, 0.5 * np.tanh(1.0))


def test_gru_zero_parameters_fixed_point():
    p = init_cell(np.random.default_rng(0), "gru", 4, 3, "c")
    for t in p.tensors():
        t.values[...] = 0
    h = gru_step(Tape(), p, np.ones(4), np.zeros(3))
    assert np.array_equal(h.values, np.zeros(3))


def test_gru_closed_update_gate_keeps_state():
    p = init_cell(np.random.default_rng(1), "gru", 4, 3, "c")
    p.b.values[:3] = -50.0
    h_prev = np.array([0.3, -0.7, 0.1])
    h = gru_step(Tape(), p, np.random.default_rng(2).normal(size=4), h_prev)
    np.testing.assert_allclose(h.values, h_prev, atol=1e-12)


def test_cell_shape_mismatch():
    p = init_cell(np.random.default_rng(0), "gru", 4, 3, "c")
    with pytest.raises(ShapeMismatch):
        gru_step(Tape(), p, np.ones(5), np.zeros(3))
    q = init_cell(np.random.default_rng(0), "lstm", 4, 3, "c")
    with pytest.raises(ShapeMismatch):
        lstm_step(Tape(), q, np.ones(4), np.zeros(2), np.zeros(2))


def _cell_loss(kind, p, xs, w):
    def f(tape, _):
        h = Tensor(np.zeros(p.hidden_dim))
        c = Tensor(np.zeros(p.hidden_dim))
        total = []
        for x in xs:
            if kind == "lstm":
                h, c = lstm_step(tape, p, x, h, c)
            else:
                h = gru_step(tape, p, x, h)
            total.append(tape.sum(tape.mul(h, Tensor(w))))
        return tape.mean(total)
    return f


@pytest.mark.parametrize("kind", ["lstm", "gru"])
@settings(max_examples=100)
@given(seed=st.integers(0, 2**32 - 1))
def test_cell_gradients(kind, seed):
    rng = np.random.default_rng(seed)
    p = init_cell(rng, kind, 4, 3, "c")
    for t in p.tensors():
        t.values[...] = rng.uniform(-1, 1, size=t.shape)
    xs = [Tensor(rng.normal(size=4), requires_grad=True) for _ in range(3)]
    w = rng.normal(size=3)
    f = _cell_loss(kind, p, xs, w)
    for t in p.tensors() + [xs[0]]:
        assert grad_check(f, t, 1e-5) <= TOL, t.name


def test_bi_rnn_length_one_and_reversal(tiny_data):
    vocabs, _ = tiny_data
    rng = np.random.default_rng(0)
    fwd, bwd = init_cell(rng, "gru", 3, 2, "f"), init_cell(rng, "gru", 3, 2, "b")
    xs = [Tensor(rng.normal(size=3)) for _ in range(4)]
    [g] = bi_rnn(Tape(), fwd, bwd, xs[:1])
    hf = gru_step(Tape(), fwd, xs[0], np.zeros(2))
    hb = gru_step(Tape(), bwd, xs[0], np.zeros(2))
    np.testing.assert_array_equal(g.values, np.concatenate([hf.values, hb.values]))

    gs = bi_rnn(Tape(), fwd, bwd, xs)
    swapped = bi_rnn(Tape(), bwd, fwd, xs[::-1])
    n = len(xs)
    for k in range(n):
        mirrored = swapped[n - 1 - k].values
        np.testing.assert_array_equal(gs[k].values, np.concatenate([mirrored[2:], mirrored[:2]]))

    with pytest.raises(EmptySequence):
        bi_rnn(Tape(), fwd, bwd, [])


def test_classify_zero_head_is_uniform():
    rng = np.random.default_rng(0)
    head = init_head(rng, 6, (4, 3), 5, 0.2)
    for t in head.weights + head.biases + [head.W_o, head.b_o]:
        t.values[...] = 0
    logits, p = classify(Tape(), Tensor(rng.normal(size=6)), head)
    assert p.shape == (5,)
    np.testing.assert_allclose(p, np.full(5, 0.2), rtol=0, atol=1e-15)
    with pytest.raises(ShapeMismatch):
        classify(Tape(), Tensor(np.ones(7)), head)


def test_embed_variants(tiny_data):
    vocabs, seqs = tiny_data
    model = TriggerModel(tiny_config(), vocabs)
    ls = embed(Tape(), seqs[0], model.tables, "word_plus_entity")
    assert ls[0].shape == (7,)
    tok = seqs[0].tokens[1]  # untagged token
    np.testing.assert_array_equal(ls[1].values[4:], model.tables.entity_table.values[vocabs.none_entity_id])
    assert tok.entity_id == vocabs.none_entity_id
    assert embed(Tape(), seqs[0], model.tables, "word_only")[0].shape == (4,)
    bad = TokenSequence("d", (Token("x", 0, 1, word_id=999, entity_id=0, label_id=0),))
    with pytest.raises(IndexOutOfRange):
        embed(Tape(), bad, model.tables)


def test_pretrained_rows_copied_exactly(tiny_data):
    vocabs, _ = tiny_data
    vecs = random_vectors(["VEGF", "mice", "nothere"], 4, seed=1)
    model = TriggerModel(tiny_config(), vocabs, vecs)
    np.testing.assert_array_equal(model.tables.word_table.values[vocabs.words["vegf"]], vecs.entries["VEGF"])
    np.testing.assert_array_equal(model.tables.word_table.values[vocabs.words["mice"]], vecs.entries["mice"])
    assert model.pretrained_rows == 2
    with pytest.raises(DimensionMismatch):
        TriggerModel(tiny_config(d_w=5), vocabs, vecs)


@pytest.mark.parametrize("cell", ["lstm", "gru"])
@pytest.mark.parametrize("variant", VARIANTS)
def test_end_to_end_gradients(tiny_data, cell, variant):
    vocabs, seqs = tiny_data
    model = TriggerModel(tiny_config(cell_kind=cell, feature_variant=variant[0], head_variant=variant[1]), vocabs)
    randomize(model, E2E_SEED)
    seq = seqs[1]
    assert len(seq) == 5

    def f(tape, _):
        return sentence_loss(model, seq, np.random.default_rng(11), tape)

    for name, t in model.named_tensors():
        assert grad_check(f, t, 1e-5) <= TOL, name


def test_end_to_end_tiny_coordinate_is_roundoff(tiny_data):
    # At this point one weight has a gradient near 5e-8, where central
    # differences at eps=1e-5 are dominated by float64 rounding of the loss.
    vocabs, seqs = tiny_data
    model = TriggerModel(tiny_config(feature_variant="word_only"), vocabs)
    randomize(model, 7)
    w = model.rnn_fwd.W

    def f(tape, _):
        return sentence_loss(model, seqs[1], np.random.default_rng(11), tape)

    errs = {eps: grad_check(f, w, eps) for eps in (1e-3, 1e-5)}
    assert np.min(np.abs(w.grad)) < 1e-7
    assert errs[1e-3] <= TOL
    assert errs[1e-5] > TOL


def test_eval_mode_deterministic(tiny_model, tiny_data):
    _, seqs = tiny_data
    a = forward_sentence(tiny_model, seqs[1])
    b = forward_sentence(tiny_model, seqs[1])
    for x, y in zip(a.probs, b.probs):
        assert np.array_equal(x, y)


@given(shift=st.floats(-100, 100))
@settings(max_examples=30)
def test_argmax_stable_under_logit_shift(shift):
    vocabs, seqs = make_tiny_data()
    model = TriggerModel(tiny_config(), vocabs)
    randomize(model, 3)
    base = forward_sentence(model, seqs[1]).predictions()
    model.head.b_o.values += shift
    assert forward_sentence(model, seqs[1]).predictions() == base


def test_word_only_ignores_entities(tiny_data):
    vocabs, seqs = tiny_data
    model = TriggerModel(tiny_config(feature_variant="word_only"), vocabs)
    seq = seqs[1]
    perm = TokenSequence(seq.doc_id, tuple(replace(t, entity_id=(t.entity_id + 1) % len(vocabs.entities)) for t in seq.tokens))
    a, b = forward_sentence(model, seq), forward_sentence(model, perm)
    for x, y in zip(a.probs, b.probs):
        assert np.array_equal(x, y)


def test_deferred_labels_never_predicted(tiny_data):
    vocabs, seqs = tiny_data
    vocabs = vocabs.with_deferred(set(vocabs.labels.items[1:]))
    model = TriggerModel(tiny_config(), vocabs)
    randomize(model, 5, scale=2.0)
    assert all(p == vocabs.none_label_id for s in seqs for p in model.predict(s))


def test_checkpoint_round_trip(tmp_path, tiny_data):
    vocabs, seqs = tiny_data
    model = TriggerModel(tiny_config(cell_kind="lstm"), vocabs)
    randomize(model, 9)
    model.save(tmp_path / "m.ckpt", meta={"epoch": 3})
    loaded, header = load_checkpoint(tmp_path / "m.ckpt")
    assert header["meta"] == {"epoch": 3}
    assert loaded.config == model.config and loaded.vocabs == model.vocabs
    for (n1, t1), (n2, t2) in zip(model.named_tensors(), loaded.named_tensors()):
        assert n1 == n2 and np.array_equal(t1.values, t2.values)
    for s in seqs:
        for p, q in zip(forward_sentence(model, s).probs, forward_sentence(loaded, s).probs):
            assert np.array_equal(p, q)
    loaded.save(tmp_path / "again.ckpt", meta={"epoch": 3})
    assert (tmp_path / "again.ckpt").read_bytes() == (tmp_path / "m.ckpt").read_bytes()

import numpy as np
import pytest
from hypothesis import HealthCheck, settings

from trigger_rnn.corpus import NONE, Token, TokenSequence, build_vocabs
from trigger_rnn.model import ModelConfig, TriggerModel

settings.register_profile("default", deadline=None, derandomize=True, suppress_health_check=[HealthCheck.too_slow])
settings.register_profile("fast", max_examples=10, deadline=None)
settings.load_profile("default")


def tiny_config(**kw):
    base = dict(d_w=4, d_e=3, rnn_hidden=3, hidden_dims=(4, 3), dropout_rate=0.2, seed=0)
    base.update(kw)
    return ModelConfig(**base)


def tiny_sequences():
    rows = [
        [("VEGF", "Gene", NONE), ("induces", NONE, "Positive_regulation"), ("angiogenesis", NONE, "Blood_vessel_development")],
        [("endothelial", "Cell", NONE), ("cells", "Cell", NONE), ("proliferate", NONE, "Cell_proliferation"), ("in", NONE, NONE), ("mice", "Organism", NONE)],
    ]
    out = []
    for k, row in enumerate(rows):
        toks, pos = [], 0
        for w, e, l in row:
            toks.append(Token(w, pos, pos + len(w), entity=e, label=l))
            pos += len(w) + 1
        out.append(TokenSequence("doc", tuple(toks), k))
    return out


def make_tiny_data():
    seqs = tiny_sequences()
    vocabs = build_vocabs(seqs)
    return vocabs, [vocabs.encode(s) for s in seqs]


@pytest.fixture
def tiny_data():
    return make_tiny_data()


@pytest.fixture
def tiny_model(tiny_data):
    vocabs, _ = tiny_data
    return TriggerModel(tiny_config(), vocabs)


def randomize(model, seed, scale=0.5):
    """Replace every parameter with random values so gradients are generic."""
    rng = np.random.default_rng(seed)
    for _, t in model.named_tensors():
        t.values[...] = rng.uniform(-scale, scale, size=t.shape)

"""Small synthetic corpora whose trigger labels are a function of the word."""

from __future__ import annotations

from pathlib import Path

import numpy as np

from .corpus import NONE, Token, TokenSequence

SYLLABLES = ["ka", "lo", "mi", "ne", "pu", "ra", "si", "to", "vu", "ze"]


def make_lexicon(n_words=30, labels=("A", "B", "C"), entity_types=("Cell", "Gene"), seed=0):
    """word -> (trigger label, entity type); roughly half the words are untriggered."""
    rng = np.random.default_rng(seed)
    words = set()
    while len(words) < n_words:
        words.add("".join(rng.choice(SYLLABLES, size=3)))
    lexicon = {}
    for i, w in enumerate(sorted(words)):
        label = labels[i % len(labels)] if i % 2 == 0 else NONE
        entity = entity_types[i % len(entity_types)] if i % 3 == 0 else NONE
        lexicon[w] = (label, entity)
    return lexicon


def make_sentences(lexicon, n_sentences=50, min_len=3, max_len=10, seed=0):
    """Lists of words drawn uniformly from the lexicon."""
    rng = np.random.default_rng(seed)
    words = sorted(lexicon)
    return [list(rng.choice(words, size=int(rng.integers(min_len, max_len + 1)))) for _ in range(n_sentences)]


def make_sequences(lexicon, sentences, doc_id="synth"):
    out = []
    for k, sent in enumerate(sentences):
        toks, pos = [], 0
        for w in sent:
            label, entity = lexicon[w]
            toks.append(Token(w, pos, pos + len(w), entity=entity, label=label))
            pos += len(w) + 1
        out.append(TokenSequence(doc_id, tuple(toks), sent_idx=k))
    return out


def write_standoff(directory, doc_id, lexicon, sentences):
    """One document: capitalized sentences ending in '.', entity and trigger T-lines."""
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    parts, a1, a2 = [], [], []
    pos = 0
    tid = 0
    for sent in sentences:
        for i, w in enumerate(sent):
            surface = w.capitalize() if i == 0 else w
            label, entity = lexicon[w]
            if entity != NONE:
                tid += 1
                a1.append(f"T{tid}\t{entity} {pos} {pos + len(surface)}\t{surface}")
            if label != NONE:
                tid += 1
                a2.append(f"T{tid}\t{label} {pos} {pos + len(surface)}\t{surface}")
            parts.append(surface)
            pos += len(surface)
            sep = "" if i == len(sent) - 1 else " "
            parts.append(sep)
            pos += len(sep)
        parts.append(". ")
        pos += 2
    text = "".join(parts).rstrip() + "\n"
    (directory / f"{doc_id}.txt").write_text(text, encoding="utf-8")
    (directory / f"{doc_id}.a1").write_text("".join(l + "\n" for l in a1), encoding="utf-8")
    # event lines are ignored by the parser but present in real corpora
    events = [f"E{i + 1}\t{line.split(chr(9))[1].split(' ')[0]}:{line.split(chr(9))[0]}" for i, line in enumerate(a2)]
    (directory / f"{doc_id}.a2").write_text("".join(l + "\n" for l in a2 + events), encoding="utf-8")


def write_corpus(root, lexicon=None, sizes=(40, 10, 10), seed=0, docs_per_split=2):
    """train/dev/test standoff directories under ``root``."""
    lexicon = lexicon or make_lexicon(seed=seed)
    for s_i, (split, n) in enumerate(zip(("train", "dev", "test"), sizes)):
        sents = make_sentences(lexicon, n, seed=seed + 100 * (s_i + 1))
        per = max(1, len(sents) // docs_per_split)
        for d in range(docs_per_split):
            chunk = sents[d * per:(d + 1) * per] if d < docs_per_split - 1 else sents[d * per:]
            if chunk:
                write_standoff(Path(root) / split, f"{split}{d:02d}", lexicon, chunk)
    return lexicon


def random_vectors(words, dim, seed=0):
    from .training import PretrainedVectors

    rng = np.random.default_rng(seed)
    return PretrainedVectors(dim, {w: rng.normal(size=dim) for w in words})

"""Standoff corpus ingestion: parsing, segmentation, token alignment, vocabularies.

Documents come as BioNLP-style triples ``<id>.txt``, ``<id>.a1`` (entity
T-lines) and ``<id>.a2`` (trigger T-lines plus event/modification/relation
lines, which are skipped). Offsets are in code points.
"""

from __future__ import annotations

import hashlib
import json
import logging
import re
from collections import Counter
from dataclasses import dataclass, replace
from pathlib import Path
from typing import Iterable, Sequence

from .errors import EmptyCorpus, MalformedLine, MissingFile, OffsetMismatch

log = logging.getLogger(__name__)

NONE = "None"
UNK = "<UNK>"
NUM = "<NUM>"

_TOKEN_RE = re.compile(r"[^\W_]+|\S")
_NUMBER_RE = re.compile(r"^[+-]?\d+(?:[.,]\d+)*$")
_SENT_END_RE = re.compile(r"[.!?](?=\s+[A-Z0-9])")


@dataclass(frozen=True)
class SpanAnnotation:
    ann_id: str
    label: str
    start: int
    end: int
    surface: str


@dataclass(frozen=True)
class AnnotatedDocument:
    doc_id: str
    text: str
    entities: tuple[SpanAnnotation, ...] = ()
    triggers: tuple[SpanAnnotation, ...] = ()


@dataclass(frozen=True)
class Token:
    surface: str
    start: int
    end: int
    entity: str = NONE
    label: str = NONE
    word_id: int = -1
    entity_id: int = -1
    label_id: int = -1
    # ids of the annotations the token was aligned to, for per-annotation counts
    entity_ann: str | None = None
    trigger_ann: str | None = None


@dataclass(frozen=True)
class TokenSequence:
    doc_id: str
    tokens: tuple[Token, ...]
    sent_idx: int = 0

    def __len__(self):
        return len(self.tokens)

    @property
    def word_ids(self):
        return [t.word_id for t in self.tokens]

    @property
    def entity_ids(self):
        return [t.entity_id for t in self.tokens]

    @property
    def label_ids(self):
        return [t.label_id for t in self.tokens]

    @property
    def labels(self):
        return [t.label for t in self.tokens]


# ---------------------------------------------------------------------------
# parsing


def _parse_tlines(content, text, kind, doc_id):
    anns = []
    for lineno, line in enumerate(content.splitlines(), 1):
        if not line.strip() or not line.startswith("T"):
            continue
        where = f"{doc_id}.{kind}:{lineno}"
        fields = line.split("\t")
        if len(fields) != 3:
            raise MalformedLine(f"{where}: expected 3 tab-separated fields, got {len(fields)}")
        ann_id, middle, surface = fields
        if ";" in middle:
            log.warning("%s: discontinuous span rejected", where)
            raise MalformedLine(f"{where}: discontinuous span {middle!r}")
        parts = middle.split(" ")
        if len(parts) != 3:
            raise MalformedLine(f"{where}: expected 'Type start end', got {middle!r}")
        label, start_s, end_s = parts
        try:
            start, end = int(start_s), int(end_s)
        except ValueError:
            raise MalformedLine(f"{where}: non-integer offsets in {middle!r}") from None
        if not 0 <= start < end <= len(text):
            raise OffsetMismatch(f"{where}: offsets {start}-{end} outside text of length {len(text)}")
        if text[start:end] != surface:
            raise OffsetMismatch(f"{where}: {surface!r} != text[{start}:{end}] {text[start:end]!r}")
        anns.append(SpanAnnotation(ann_id, label, start, end, surface))
    return anns


def parse_standoff(text: str, a1: str, a2: str, doc_id: str = "") -> AnnotatedDocument:
    """Build a document from the text and the contents of its .a1/.a2 files."""
    entities = _parse_tlines(a1, text, "a1", doc_id)
    triggers = _parse_tlines(a2, text, "a2", doc_id)
    seen = set()
    for ann in entities + triggers:
        if ann.ann_id in seen:
            raise MalformedLine(f"{doc_id}: duplicate annotation id {ann.ann_id}")
        seen.add(ann.ann_id)
    return AnnotatedDocument(doc_id, text, tuple(entities), tuple(triggers))


def read_document(directory, doc_id) -> AnnotatedDocument:
    directory = Path(directory)
    paths = {ext: directory / f"{doc_id}.{ext}" for ext in ("txt", "a1", "a2")}
    for ext, path in paths.items():
        if not path.is_file():
            raise MissingFile(f"document {doc_id}: missing {path}")
    return parse_standoff(_read(paths["txt"]), _read(paths["a1"]), _read(paths["a2"]), doc_id)


def _read(path):
    # newline="" keeps \r\n intact so offsets stay valid
    with open(path, encoding="utf-8", newline="") as fh:
        return fh.read()


def read_corpus_dir(directory) -> list[AnnotatedDocument]:
    """Every ``*.txt`` document in a directory, sorted by id."""
    directory = Path(directory)
    if not directory.is_dir():
        raise MissingFile(f"corpus directory {directory} does not exist")
    return [read_document(directory, p.stem) for p in sorted(directory.glob("*.txt"))]


# ---------------------------------------------------------------------------
# segmentation


def tokenize(text: str) -> list[tuple[str, int, int]]:
    """Whitespace split, then alphanumeric runs and single punctuation marks.

    >>> [t[0] for t in tokenize("VEGF-induced growth.")]
    ['VEGF', '-', 'induced', 'growth', '.']
    """
    return [(m.group(), m.start(), m.end()) for m in _TOKEN_RE.finditer(text)]


def split_sentences(text: str, annotations: Iterable = ()) -> list[tuple[int, int]]:
    """Sentence spans, trimmed of surrounding whitespace.

    A boundary sits after ``.``, ``!`` or ``?`` followed by whitespace and an
    uppercase letter or digit. Boundaries that would cut through an annotation
    (given as SpanAnnotations or ``(start, end)`` pairs) are suppressed.
    """
    spans = [(a.start, a.end) if isinstance(a, SpanAnnotation) else tuple(a) for a in annotations]
    cuts = []
    for m in _SENT_END_RE.finditer(text):
        cut = m.end()
        if any(s < cut < e for s, e in spans):
            continue
        cuts.append(cut)
    out = []
    begin = 0
    for cut in cuts + [len(text)]:
        chunk = text[begin:cut]
        stripped = chunk.strip()
        if stripped:
            lead = len(chunk) - len(chunk.lstrip())
            start = begin + lead
            out.append((start, start + len(stripped)))
        begin = cut
    return out


def _winner(tok_start, tok_end, anns):
    best = None
    for a in anns:
        if a.start < tok_end and tok_start < a.end:
            key = (a.start, -(a.end - a.start), a.ann_id)
            if best is None or key < best[0]:
                best = (key, a)
    return None if best is None else best[1]


def align_labels(doc: AnnotatedDocument, sentences, tokens, vocabs: "Vocabularies | None" = None) -> list[TokenSequence]:
    """Project character-offset annotations onto tokens, one sequence per sentence.

    Every token overlapping an entity gets that entity's type (so all words of
    a multi-word entity share it); triggers likewise. On overlap the
    annotation starting earliest wins, then the longer one. If ``vocabs`` is
    given the sequences are also encoded to ids.
    """
    out = []
    for sent_idx, (s_start, s_end) in enumerate(sentences):
        toks = []
        for surface, start, end in tokens:
            if start < s_start or end > s_end:
                continue
            ent = _winner(start, end, doc.entities)
            trig = _winner(start, end, doc.triggers)
            toks.append(Token(
                surface, start, end,
                entity=ent.label if ent else NONE,
                label=trig.label if trig else NONE,
                entity_ann=ent.ann_id if ent else None,
                trigger_ann=trig.ann_id if trig else None,
            ))
        if toks:
            out.append(TokenSequence(doc.doc_id, tuple(toks), sent_idx=len(out)))
    if vocabs is not None:
        out = [vocabs.encode(s) for s in out]
    return out


def document_sequences(doc: AnnotatedDocument, vocabs=None) -> list[TokenSequence]:
    """Split, tokenize and align one document."""
    sentences = split_sentences(doc.text, doc.entities + doc.triggers)
    return align_labels(doc, sentences, tokenize(doc.text), vocabs)


# ---------------------------------------------------------------------------
# vocabularies


class Index:
    """Dense 0-based bijection between strings and ids."""

    def __init__(self, items=()):
        self.items = []
        self.ids = {}
        for it in items:
            self.add(it)

    def add(self, item):
        if item not in self.ids:
            self.ids[item] = len(self.items)
            self.items.append(item)
        return self.ids[item]

    def __len__(self):
        return len(self.items)

    def __contains__(self, item):
        return item in self.ids

    def __getitem__(self, item):
        return self.ids[item]

    def get(self, item, default=None):
        return self.ids.get(item, default)

    def __iter__(self):
        return iter(self.items)

    def __eq__(self, other):
        return isinstance(other, Index) and self.items == other.items


def is_number(word):
    return bool(_NUMBER_RE.match(word))


@dataclass
class Vocabularies:
    words: Index
    entities: Index
    labels: Index
    deferred_fn_labels: frozenset = frozenset()

    @property
    def train_label_set(self):
        return frozenset(l for l in self.labels if l != NONE and l not in self.deferred_fn_labels)

    @property
    def unk_id(self):
        return self.words[UNK]

    @property
    def none_label_id(self):
        return self.labels[NONE]

    @property
    def none_entity_id(self):
        return self.entities[NONE]

    def word_id(self, surface):
        key = surface.lower()
        wid = self.words.get(key)
        if wid is not None:
            return wid
        if is_number(key):
            return self.words[NUM]
        return self.words[UNK]

    def encode(self, seq: TokenSequence) -> TokenSequence:
        """Fill word/entity/label ids; unseen entity types and labels map to None."""
        toks = []
        for t in seq.tokens:
            eid = self.entities.get(t.entity)
            if eid is None:
                log.warning("%s: unknown entity type %r mapped to None", seq.doc_id, t.entity)
                eid = self.none_entity_id
            lid = self.labels.get(t.label)
            if lid is None and t.label == "_":
                lid = self.none_label_id
            elif lid is None:
                log.warning("%s: unknown trigger label %r mapped to None", seq.doc_id, t.label)
                lid = self.none_label_id
            toks.append(replace(t, word_id=self.word_id(t.surface), entity_id=eid, label_id=lid))
        return replace(seq, tokens=tuple(toks))

    def training_view(self, seq: TokenSequence) -> TokenSequence:
        """Relabel gold tokens of deferred labels as None (ids and strings)."""
        if not self.deferred_fn_labels:
            return seq
        none_id = self.none_label_id
        toks = tuple(
            replace(t, label=NONE, label_id=none_id, trigger_ann=None) if t.label in self.deferred_fn_labels else t
            for t in seq.tokens
        )
        return replace(seq, tokens=toks)

    def with_deferred(self, deferred) -> "Vocabularies":
        return replace(self, deferred_fn_labels=frozenset(deferred))

    def to_dict(self):
        return {
            "words": list(self.words),
            "entities": list(self.entities),
            "labels": list(self.labels),
            "deferred_fn_labels": sorted(self.deferred_fn_labels),
        }

    @classmethod
    def from_dict(cls, d):
        return cls(Index(d["words"]), Index(d["entities"]), Index(d["labels"]), frozenset(d["deferred_fn_labels"]))

    def to_json(self):
        return json.dumps(self.to_dict(), ensure_ascii=False, sort_keys=True, indent=1) + "\n"

    def digest(self):
        return hashlib.sha256(self.to_json().encode("utf-8")).hexdigest()

    def save(self, path):
        Path(path).write_text(self.to_json(), encoding="utf-8")

    @classmethod
    def load(cls, path):
        return cls.from_dict(json.loads(Path(path).read_text(encoding="utf-8")))


def build_vocabs(train_sequences: Sequence[TokenSequence], known_words=None) -> Vocabularies:
    """Vocabularies from the training (+ development) sequences.

    Words are lowercased. Numbers collapse to ``<NUM>`` unless ``known_words``
    (the pretrained vocabulary, matched case-insensitively) contains them.
    """
    if not train_sequences:
        raise EmptyCorpus("no sequences to build vocabularies from")
    known = None if known_words is None else {w.lower() for w in known_words}
    words, entities, labels = set(), set(), set()
    for seq in train_sequences:
        for t in seq.tokens:
            key = t.surface.lower()
            if is_number(key) and (known is None or key not in known):
                pass
            else:
                words.add(key)
            entities.add(t.entity)
            labels.add(t.label)
    words -= {UNK, NUM}
    entities.discard(NONE)
    labels.discard(NONE)
    return Vocabularies(
        Index([UNK, NUM] + sorted(words)),
        Index([NONE] + sorted(entities)),
        Index([NONE] + sorted(labels)),
    )


def filter_rare_labels(label_test_counts, threshold, labels=None):
    """Split labels into (train_label_set, deferred_fn_labels).

    A label is deferred when its test count is <= ``threshold``. ``labels``
    lists every label to partition; labels missing from the counts count 0.
    """
    if threshold < 0:
        raise ValueError("threshold must be >= 0")
    universe = set(label_test_counts) if labels is None else set(labels)
    universe.discard(NONE)
    deferred = {l for l in universe if label_test_counts.get(l, 0) <= threshold}
    return frozenset(universe - deferred), frozenset(deferred)


# ---------------------------------------------------------------------------
# statistics


def corpus_stats(sequences: Iterable[TokenSequence]):
    """Per-annotation (trigger, entity) counts.

    Tokens carrying annotation ids count each annotation once. Tokens read back
    from prepared files have no ids; there a maximal run of consecutive tokens
    sharing a label counts as one annotation.
    """
    trig, ent = Counter(), Counter()
    for seq in sequences:
        for counter, attr, ann_attr in ((trig, "label", "trigger_ann"), (ent, "entity", "entity_ann")):
            seen = set()
            prev = None
            for t in seq.tokens:
                value = getattr(t, attr)
                ann = getattr(t, ann_attr)
                if value == NONE:
                    prev = None
                    continue
                if ann is not None:
                    if ann not in seen:
                        seen.add(ann)
                        counter[value] += 1
                elif value != prev:
                    counter[value] += 1
                prev = value
    return dict(trig), dict(ent)


def annotation_counts(documents: Iterable[AnnotatedDocument]):
    """Counts straight from the parsed .a2/.a1 T-lines: (trigger, entity)."""
    trig, ent = Counter(), Counter()
    for doc in documents:
        trig.update(a.label for a in doc.triggers)
        ent.update(a.label for a in doc.entities)
    return dict(trig), dict(ent)


# ---------------------------------------------------------------------------
# prepared dataset files


def write_dataset(path, sequences: Iterable[TokenSequence], predictions=None):
    """One token per line, blank line between sentences.

    Columns: doc_id, sent_idx, tok_idx, surface, start, end, entity_type,
    trigger_label and, when ``predictions`` (one label list per sequence) is
    given, predicted_label.
    """
    lines = []
    for i, seq in enumerate(sequences):
        preds = None if predictions is None else predictions[i]
        for k, t in enumerate(seq.tokens):
            row = [seq.doc_id, str(seq.sent_idx), str(k), t.surface, str(t.start), str(t.end), t.entity, t.label]
            if preds is not None:
                row.append(preds[k])
            lines.append("\t".join(row))
        lines.append("")
    Path(path).write_text("\n".join(lines) + ("\n" if lines else ""), encoding="utf-8")


def read_dataset(path, vocabs: Vocabularies | None = None) -> list[TokenSequence]:
    path = Path(path)
    if not path.is_file():
        raise MissingFile(f"dataset {path} does not exist")
    seqs, toks, key = [], [], None

    def flush():
        if toks:
            seqs.append(TokenSequence(key[0], tuple(toks), sent_idx=key[1]))

    for lineno, line in enumerate(path.read_text(encoding="utf-8").split("\n"), 1):
        if not line:
            flush()
            toks, key = [], None
            continue
        cols = line.split("\t")
        if len(cols) not in (8, 9):
            raise MalformedLine(f"{path}:{lineno}: expected 8 or 9 columns, got {len(cols)}")
        doc_id, sent_idx, _, surface, start, end, entity, label = cols[:8]
        key = (doc_id, int(sent_idx))
        toks.append(Token(surface, int(start), int(end), entity=entity, label=label))
    flush()
    if vocabs is not None:
        seqs = [vocabs.encode(s) for s in seqs]
    return seqs


def has_gold(sequences):
    """False when the dataset carries no gold labels (label column ``_``)."""
    return not any(t.label == "_" for s in sequences for t in s.tokens)

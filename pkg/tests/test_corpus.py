import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from trigger_rnn.corpus import (
    NONE,
    NUM,
    UNK,
    AnnotatedDocument,
    SpanAnnotation,
    Vocabularies,
    align_labels,
    annotation_counts,
    build_vocabs,
    corpus_stats,
    document_sequences,
    filter_rare_labels,
    parse_standoff,
    read_corpus_dir,
    read_dataset,
    read_document,
    split_sentences,
    tokenize,
    write_dataset,
)
from trigger_rnn.errors import EmptyCorpus, MalformedLine, MissingFile, OffsetMismatch
from trigger_rnn import mlee

TEXT = "VEGF induces angiogenesis."


def test_parse_entity_and_trigger():
    doc = parse_standoff(
        TEXT,
        "T1\tGene_or_gene_product 0 4\tVEGF\n",
        "T10\tBlood_vessel_development 13 25\tangiogenesis\nE1\tBlood_vessel_development:T10\n"
        "M1\tNegation E1\nR1\tCoref Arg1:T1 Arg2:T10\n",
        "d1",
    )
    assert doc.entities == (SpanAnnotation("T1", "Gene_or_gene_product", 0, 4, "VEGF"),)
    assert doc.triggers == (SpanAnnotation("T10", "Blood_vessel_development", 13, 25, "angiogenesis"),)


def test_parse_offset_mismatch():
    with pytest.raises(OffsetMismatch):
        parse_standoff(TEXT, "T2\tCell 0 4\tWXYZ\n", "")


def test_parse_offsets_out_of_range():
    with pytest.raises(OffsetMismatch):
        parse_standoff(TEXT, "T2\tCell 20 40\tWXYZ\n", "")


@pytest.mark.parametrize("line", ["T1\tCell 0 4", "T1\tCell 0 4\tVEGF\textra", "T1\tCell 0\tVEGF", "T1\tCell a 4\tVEGF"])
def test_parse_malformed(line):
    with pytest.raises(MalformedLine):
        parse_standoff(TEXT, line + "\n", "")


def test_parse_rejects_discontinuous():
    with pytest.raises(MalformedLine):
        parse_standoff(TEXT, "T1\tCell 0 4;5 12\tVEGF induces\n", "")


def test_parse_rejects_duplicate_ids():
    with pytest.raises(MalformedLine):
        parse_standoff(TEXT, "T1\tCell 0 4\tVEGF\n", "T1\tGrowth 13 25\tangiogenesis\n")


def test_read_document_missing_a2(tmp_path):
    (tmp_path / "d.txt").write_text(TEXT)
    (tmp_path / "d.a1").write_text("")
    with pytest.raises(MissingFile, match="d"):
        read_document(tmp_path, "d")


@pytest.mark.parametrize(
    "text, expected",
    [
        ("VEGF-induced growth.", ["VEGF", "-", "induced", "growth", "."]),
        ("", []),
        ("p53", ["p53"]),
        ("(IL-2)", ["(", "IL", "-", "2", ")"]),
        ("  a  b ", ["a", "b"]),
        ("TNF-α/β", ["TNF", "-", "α", "/", "β"]),
    ],
)
def test_tokenize(text, expected):
    assert [t[0] for t in tokenize(text)] == expected


@given(st.text(alphabet=st.sampled_from(list("ab1-. ()\t\nαZ_")), max_size=40))
def test_tokenize_reconstructs_input(text):
    toks = tokenize(text)
    rebuilt, pos = [], 0
    for surface, start, end in toks:
        gap = text[pos:start]
        assert gap.strip() == ""
        assert text[start:end] == surface
        rebuilt.append(gap + surface)
        pos = end
    assert text[pos:].strip() == ""
    assert "".join(rebuilt) + text[pos:] == text
    assert all(a[2] <= b[1] for a, b in zip(toks, toks[1:]))


def test_split_sentences_basic():
    text = "A cat. B dog."
    spans = split_sentences(text)
    assert [text[s:e] for s, e in spans] == ["A cat.", "B dog."]


def test_split_sentences_suppressed_inside_annotation():
    text = "E. Coli grows."
    assert split_sentences(text) == [(0, 2), (3, 14)]
    assert split_sentences(text, [(0, 7)]) == [(0, 14)]


def test_split_sentences_lowercase_continuation():
    assert split_sentences("E. coli grows.", [(0, 7)]) == [(0, 14)]


def test_split_sentences_no_terminator():
    assert split_sentences("one sentence") == [(0, 12)]
    assert split_sentences("   ") == []


def test_split_sentences_digit_start():
    text = "Cells grew. 5 mice died!  Why? Unknown"
    assert [text[s:e] for s, e in split_sentences(text)] == ["Cells grew.", "5 mice died!", "Why?", "Unknown"]


def _doc():
    text = "Angiogenesis in endothelial cells of mice."
    ents = (SpanAnnotation("T1", "Cell", 16, 33, "endothelial cells"), SpanAnnotation("T2", "Organism", 37, 41, "mice"))
    trigs = (SpanAnnotation("T3", "Blood_vessel_development", 0, 12, "Angiogenesis"),)
    return AnnotatedDocument("d", text, ents, trigs)


def test_align_multiword_entity_and_none():
    doc = _doc()
    seqs = document_sequences(doc)
    assert len(seqs) == 1
    by_word = {t.surface: t for t in seqs[0].tokens}
    assert by_word["endothelial"].entity == "Cell" and by_word["cells"].entity == "Cell"
    assert by_word["in"].entity == NONE and by_word["in"].label == NONE
    assert by_word["Angiogenesis"].label == "Blood_vessel_development"
    assert by_word["mice"].entity == "Organism"


def test_align_overlap_earliest_then_longest():
    text = "alpha beta gamma"
    ents = (
        SpanAnnotation("T1", "Short", 6, 10, "beta"),
        SpanAnnotation("T2", "Long", 6, 16, "beta gamma"),
        SpanAnnotation("T3", "Early", 0, 10, "alpha beta"),
    )
    doc = AnnotatedDocument("d", text, ents, ())
    [seq] = document_sequences(doc)
    assert [t.entity for t in seq.tokens] == ["Early", "Early", "Long"]


def test_align_encodes_ids_when_vocab_given():
    doc = _doc()
    raw = document_sequences(doc)
    vocabs = build_vocabs(raw)
    [seq] = align_labels(doc, split_sentences(doc.text), tokenize(doc.text), vocabs)
    cell = vocabs.entities["Cell"]
    assert [t.entity_id for t in seq.tokens if t.entity == "Cell"] == [cell, cell]
    assert seq.tokens[1].entity_id == vocabs.none_entity_id
    assert seq.tokens[1].label_id == vocabs.none_label_id


@settings(max_examples=60)
@given(st.data())
def test_token_cover_and_determinism(data):
    words = data.draw(st.lists(st.sampled_from(["Cell", "grow", "IL-2", "p53", "(x)", "a.b", "Mice"]), min_size=1, max_size=12))
    text = " ".join(words) + "."
    # non-overlapping annotations on word boundaries
    starts, pos = [], 0
    for w in words:
        starts.append((pos, pos + len(w)))
        pos += len(w) + 1
    chosen = data.draw(st.lists(st.integers(0, len(words) - 1), unique=True, max_size=len(words)))
    ents = tuple(SpanAnnotation(f"T{i}", f"E{i % 3}", *starts[i], text[slice(*starts[i])]) for i in sorted(chosen))
    doc = AnnotatedDocument("d", text, ents, ())
    seqs = document_sequences(doc)
    assert seqs == document_sequences(doc)
    toks = [t for s in seqs for t in s.tokens]
    for ann in ents:
        covered = [t for t in toks if t.start < ann.end and ann.start < t.end]
        chars = set()
        for t in covered:
            chars.update(range(t.start, t.end))
        assert set(range(ann.start, ann.end)) - {i for i in range(ann.start, ann.end) if text[i].isspace()} <= chars
        assert all(t.entity == ann.label for t in covered)


def _seq(*pairs):
    from trigger_rnn.corpus import Token, TokenSequence

    return TokenSequence("d", tuple(Token(w, 0, 1, entity=e, label=l) for w, e, l in pairs))


def test_build_vocabs_enumeration():
    seqs = [_seq(("Endothelial", "Cell", NONE), ("mice", "Organism", "Growth"), ("1.5", NONE, NONE))]
    v = build_vocabs(seqs)
    assert list(v.entities) == [NONE, "Cell", "Organism"]
    assert len(v.entities) == 3
    assert NONE in v.labels and "Growth" in v.labels
    assert v.words.items[:2] == [UNK, NUM]
    assert "endothelial" in v.words and "Endothelial" not in v.words
    assert "1.5" not in v.words
    assert v.word_id("ENDOTHELIAL") == v.words["endothelial"]
    assert v.word_id("unseen") == v.unk_id
    assert v.word_id("42") == v.words[NUM]


def test_build_vocabs_keeps_numbers_known_to_pretrained():
    v = build_vocabs([_seq(("1.5", NONE, NONE), ("7", NONE, NONE))], known_words=["1.5"])
    assert "1.5" in v.words and "7" not in v.words


def test_build_vocabs_empty():
    with pytest.raises(EmptyCorpus):
        build_vocabs([])


def test_vocab_save_load_stable(tmp_path):
    v = build_vocabs([_seq(("a", "Cell", "X"), ("b", NONE, "Y"))]).with_deferred({"Y"})
    v.save(tmp_path / "v.json")
    w = Vocabularies.load(tmp_path / "v.json")
    assert w == v and w.digest() == v.digest()
    assert w.train_label_set == {"X"}
    assert w.train_label_set | w.deferred_fn_labels | {NONE} == set(w.labels)


def test_filter_rare_labels_mlee():
    train, deferred = filter_rare_labels(mlee.TEST_COUNTS, 10)
    assert deferred == {"Synthesis", "Transcription", "Catabolism", "Phosphorylation", "Dephosphorylation", "Remodeling"}
    assert len(train) == 13


def test_filter_rare_labels_edges():
    assert filter_rare_labels(mlee.TEST_COUNTS, 0)[1] == frozenset()
    assert filter_rare_labels({"A": 11, "B": 10}, 10) == ({"A"}, {"B"})


@given(st.dictionaries(st.text(min_size=1, max_size=4), st.integers(0, 30)), st.integers(0, 30))
def test_filter_rare_labels_partition(counts, threshold):
    train, deferred = filter_rare_labels(counts, threshold)
    assert not train & deferred
    assert train | deferred == set(counts) - {NONE}


def test_training_view_relabels_deferred():
    v = build_vocabs([_seq(("a", NONE, "X"), ("b", NONE, "Y"))]).with_deferred({"Y"})
    seq = v.encode(_seq(("a", NONE, "X"), ("b", NONE, "Y")))
    tv = v.training_view(seq)
    assert tv.labels == ["X", NONE]
    assert tv.label_ids == [v.labels["X"], v.none_label_id]


def test_corpus_stats_per_annotation():
    doc = _doc()
    seqs = document_sequences(doc)
    trig, ent = corpus_stats(seqs)
    assert trig == {"Blood_vessel_development": 1}
    assert ent == {"Cell": 1, "Organism": 1}
    assert corpus_stats([]) == ({}, {})
    assert annotation_counts([doc]) == ({"Blood_vessel_development": 1}, {"Cell": 1, "Organism": 1})


def test_dataset_round_trip(tmp_path):
    doc = _doc()
    seqs = document_sequences(doc)
    write_dataset(tmp_path / "x.tsv", seqs)
    back = read_dataset(tmp_path / "x.tsv")
    assert [[(t.surface, t.start, t.end, t.entity, t.label) for t in s.tokens] for s in back] == \
        [[(t.surface, t.start, t.end, t.entity, t.label) for t in s.tokens] for s in seqs]
    lines = (tmp_path / "x.tsv").read_text().splitlines()
    assert lines[0].split("\t") == ["d", "0", "0", "Angiogenesis", "0", "12", NONE, "Blood_vessel_development"]
    # token-run counting on files without annotation ids
    assert corpus_stats(back) == corpus_stats(seqs)


def test_read_corpus_dir_round_trip(tmp_path):
    from trigger_rnn.synthetic import make_lexicon, make_sentences, write_standoff

    lex = make_lexicon(seed=3)
    write_standoff(tmp_path, "doc1", lex, make_sentences(lex, 5, seed=3))
    [doc] = read_corpus_dir(tmp_path)
    for ann in doc.entities + doc.triggers:
        assert doc.text[ann.start:ann.end] == ann.surface
    seqs = document_sequences(doc)
    assert len(seqs) == 5

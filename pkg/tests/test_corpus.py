import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from zpsnn import nn
from zpsnn.candidates import extract_candidates, label
from zpsnn.corpus import (CorpusError, EmbeddingMatrix, ZeroPronoun, corpus_vocabulary,
                          dumps_conll, genre_of, load_embeddings, loads_conll, lookup,
                          parse_conll, save_conll, save_embeddings)
from zpsnn.synthetic import DISTRACTOR_MODES, Lexicon, SyntheticSpec, generate_synthetic

from .helpers import conll_from_trees, doc_from_trees


# --------------------------------------------------------------------------
# Reading


def test_empty_file(tmp_path):
    path = tmp_path / "empty.conll"
    path.write_text("", encoding="utf-8")
    assert parse_conll(path) == []


def test_books_fixture(books):
    # values worked out by hand from tests/data/books.conll
    assert books.id == "nw/fixture/00/books" and books.genre == "NW"
    assert [len(s) for s in books.sentences] == [11, 5]
    assert books.chains[3] == {(0, 0, 1), (0, 2, 3), (1, 0, 1)}
    assert books.chains[5] == {(0, 5, 10), (1, 3, 4)}
    assert books.zero_pronouns() == [ZeroPronoun(1, 0, 3)]
    assert books.anaphoric_zero_pronouns() == [ZeroPronoun(1, 0, 3)]
    tree = books.sentences[0].tree
    assert tree.label == "TOP" and tree.span == (0, 11)
    assert tree.to_bracketed(books.sentences[0].tokens) == (
        "(TOP (IP (NP-SBJ (NR 张三)) (VP (VV 说) (IP (NP-SBJ (PN 他)) (VP (VV 买) (AS 了) "
        "(NP-OBJ (NP (CD 一些) (NN 书)) (CC 和) (NP (CD 一个) (NN 书包)))))) (PU 。)))")


def test_words_skip_placeholders(books):
    s = books.sentences[1]
    assert s.words() == ["很", "喜欢", "它们", "。"]
    assert s.word_positions() == [1, 2, 3, 4]
    assert s.tokens[0].is_zp_placeholder


def test_pro_without_chain_is_not_anaphoric():
    doc = doc_from_trees(["(TOP (IP (NP (NN 天)) (VP (VA 冷))))",
                          "(TOP (IP (NP-SBJ (-NONE- *pro*)) (VP (VV 下雨))))"])
    zp, = doc.zero_pronouns()
    assert zp.chain_id is None and not zp.is_anaphoric(doc)
    assert doc.anaphoric_zero_pronouns() == []


def test_chain_only_after_gap_is_not_anaphoric():
    doc = doc_from_trees(["(TOP (IP (NP-SBJ (-NONE- *pro*)) (VP (VV 说) (NP (NR 李四)))))"],
                         {(0, 0, 1): 1, (0, 2, 3): 1})
    zp, = doc.zero_pronouns()
    assert zp.chain_id == 1 and not zp.is_anaphoric(doc)


def test_gap_index_points_at_placeholder(books):
    for zp in books.zero_pronouns():
        assert books.sentences[zp.sentence_idx].tokens[zp.gap_index].is_zp_placeholder


def test_coref_column_forms():
    text = conll_from_trees("bc/x/00/y", ["(TOP (NP (NP (NN a)) (NP (NN b) (NN c))))"],
                            {(0, 0, 3): 1, (0, 0, 1): 2, (0, 1, 3): 4})
    doc, = loads_conll(text)
    assert doc.chains == {1: {(0, 0, 3)}, 2: {(0, 0, 1)}, 4: {(0, 1, 3)}}
    assert "(1|(2)" in text


def test_genre_from_document_id():
    assert genre_of("tc/ch/00/ch_0000") == "TC"
    assert genre_of("syn/off/1_0000") == "SYN"
    assert genre_of("xx/abc") is None


BAD = {
    "unbalanced": ("nw/a/0/b\t0\t0\tx\tNN\t(TOP(NP*\t-\n", "left open"),
    "extra close": ("nw/a/0/b\t0\t0\tx\tNN\t(TOP*))\t-\n", "too many"),
    "index gap": ("nw/a/0/b\t0\t0\tx\tNN\t(TOP(NP*\t-\nnw/a/0/b\t0\t2\ty\tNN\t*))\t-\n",
                  "non-contiguous"),
    "open coref": ("nw/a/0/b\t0\t0\tx\tNN\t(TOP*)\t(4\n", "not closed"),
    "stray close": ("nw/a/0/b\t0\t0\tx\tNN\t(TOP*)\t4)\n", "not open"),
    "bad coref": ("nw/a/0/b\t0\t0\tx\tNN\t(TOP*)\t(x)\n", "malformed coref"),
    "two roots": ("nw/a/0/b\t0\t0\tx\tNN\t(TOP*)\t-\nnw/a/0/b\t0\t1\ty\tNN\t(TOP*)\t-\n",
                  "root"),
}


@pytest.mark.parametrize("case", sorted(BAD))
def test_malformed_input_reports_line(case, tmp_path):
    body, message = BAD[case]
    path = tmp_path / "bad.conll"
    path.write_text("#begin document (nw/a/0/b); part 000\n" + body + "\n#end document\n",
                    encoding="utf-8")
    with pytest.raises(CorpusError, match=message) as info:
        parse_conll(path)
    assert info.value.line is not None and info.value.line >= 2
    assert str(path) in str(info.value)


# --------------------------------------------------------------------------
# Round trip


def test_round_trip_books(books, tmp_path):
    path = tmp_path / "out.conll"
    save_conll([books], path)
    again, = parse_conll(path)
    assert again == books
    assert dumps_conll([again]) == (tmp_path / "out.conll").read_text(encoding="utf-8")


@settings(max_examples=60, deadline=None)
@given(st.integers(0, 10_000), st.sampled_from(DISTRACTOR_MODES))
def test_round_trip_synthetic(seed, mode):
    docs = generate_synthetic(seed, SyntheticSpec(n_docs=2, sentences_per_doc=6,
                                                  distractor_mode=mode))
    text = dumps_conll(docs)
    again = loads_conll(text)
    assert again == docs
    assert dumps_conll(again) == text


def test_chain_spans_stay_inside_sentences():
    for mode in DISTRACTOR_MODES:
        for doc in generate_synthetic(3, SyntheticSpec(n_docs=3, distractor_mode=mode)):
            for spans in doc.chains.values():
                for si, start, end in spans:
                    assert 0 <= start < end <= len(doc.sentences[si])


# --------------------------------------------------------------------------
# Embeddings


def _write_embeddings(path, rows, header=None, dim=100):
    lines = [header or f"{len(rows)} {dim}"]
    lines += [w + " " + " ".join(str(v) for v in vec) for w, vec in rows]
    path.write_text("\n".join(lines) + "\n", encoding="utf-8")


def test_load_embeddings(tmp_path):
    rng = np.random.default_rng(0)
    rows = [("书", rng.normal(size=100)), ("书包", rng.normal(size=100))]
    path = tmp_path / "emb.txt"
    _write_embeddings(path, rows)
    m = load_embeddings(path)
    assert len(m) == 2 and m.dim == 100
    np.testing.assert_array_equal(lookup("书包", m).data, rows[1][1])


@pytest.mark.parametrize("header,rows,message", [
    ("2 50", [("a", [0.0] * 50), ("b", [0.0] * 50)], "dimension"),
    (None, [("a", [0.0] * 100), ("a", [1.0] * 100)], "duplicate"),
    (None, [("a", ["x"] * 100)], "malformed float"),
    ("3 100", [("a", [0.0] * 100)], "announces"),
])
def test_load_embeddings_errors(tmp_path, header, rows, message):
    path = tmp_path / "emb.txt"
    _write_embeddings(path, rows, header)
    with pytest.raises(CorpusError, match=message):
        load_embeddings(path)


def test_embedding_save_load_round_trip(tmp_path):
    rng = np.random.default_rng(1)
    m = EmbeddingMatrix({"a": 0, "b": 1, "c": 2}, rng.normal(size=(4, 3)), np.zeros(4))
    save_embeddings(m, tmp_path / "e.txt")
    again = load_embeddings(tmp_path / "e.txt", dim=4)
    assert again.vocab == m.vocab
    np.testing.assert_array_equal(again.matrix.data, m.matrix.data)


def test_oov_words_share_unk():
    m = EmbeddingMatrix({"a": 0}, np.arange(3.0).reshape(3, 1), np.full(3, 0.5))
    np.testing.assert_array_equal(lookup("a", m).data, [0.0, 1.0, 2.0])
    assert lookup("x", m) is lookup("y", m) is m.unk_vector


def test_sgd_step_updates_unk():
    m = EmbeddingMatrix({"a": 0}, np.zeros((2, 1)), np.array([0.1, -0.2]))
    with nn.GradientTape() as tape:
        loss = nn.cross_entropy(nn.softmax(lookup("unseen", m)), [1, 0])
    grads = nn.backward(loss, tape, m.tensors())
    before = lookup("other", m).data.copy()
    nn.sgd_step(m.tensors(), grads, 0.5)
    after = lookup("other", m).data
    np.testing.assert_allclose(after, before - 0.5 * grads[m.unk_vector])
    assert not np.array_equal(after, before)
    assert np.all(grads[m.matrix] == 0.0)


def test_corpus_vocabulary_excludes_empty_elements(books):
    vocab = corpus_vocabulary([books])
    assert "*pro*" not in vocab and "书包" in vocab and vocab == sorted(vocab)


# --------------------------------------------------------------------------
# Synthetic corpora


@pytest.mark.parametrize("mode", DISTRACTOR_MODES)
def test_synthetic_is_deterministic(mode):
    spec = SyntheticSpec(n_docs=3, distractor_mode=mode)
    assert generate_synthetic(5, spec) == generate_synthetic(5, spec)
    assert generate_synthetic(5, spec) != generate_synthetic(6, spec)


def test_synthetic_zero_docs():
    assert generate_synthetic(0, SyntheticSpec(n_docs=0)) == []


@pytest.mark.parametrize("bad", [dict(n_docs=-1), dict(sentences_per_doc=0), dict(vocab_size=3),
                                 dict(distractor_mode="nope")])
def test_synthetic_spec_validation(bad):
    with pytest.raises(ValueError):
        SyntheticSpec(**bad)


@pytest.mark.parametrize("mode", DISTRACTOR_MODES)
def test_every_synthetic_azp_has_gold_candidate(mode):
    docs = generate_synthetic(11, SyntheticSpec(n_docs=8, distractor_mode=mode))
    n = 0
    for doc in docs:
        assert doc.genre == "SYN"
        for zp in doc.anaphoric_zero_pronouns():
            cands = extract_candidates(zp, doc)
            assert any(label(zp, c) for c in cands)
            n += 1
    assert n > 0


def test_global_antecedent_precedes_cue():
    lex = Lexicon(SyntheticSpec().vocab_size)
    docs = generate_synthetic(2, SyntheticSpec(n_docs=4, distractor_mode="global"))
    for doc in docs:
        for zp in doc.anaphoric_zero_pronouns():
            cands = extract_candidates(zp, doc)
            heads = [doc.sentences[c.sentence_idx].tokens[c.head_index].form for c in cands]
            gold = [i for i, c in enumerate(cands) if label(zp, c)]
            cue = [i for i, h in enumerate(heads) if h in lex.cues]
            assert len(gold) == 1 and cue == [gold[0] + 1]
            others = [h for i, h in enumerate(heads) if i != cue[0]]
            assert all(h in lex.neutrals for h in others) and len(set(others)) == len(others)

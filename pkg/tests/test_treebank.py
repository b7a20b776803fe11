import io
import itertools

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from charparser.synthetic import encipher, generate_treebank
from charparser.treebank import (
    ABSENT,
    UNK,
    UnknownLanguageError,
    build_vocabularies,
    encode_sentence,
    encode_word,
    load_conllu,
    make_batches,
    parse_conllu,
    read_vocab,
    write_conllu,
    write_vocab,
)

MINIMAL = "1\tAla\t_\tNOUN\t_\tCase=Nom\t2\tnsubj\t_\t_\n2\tśpi\t_\tVERB\t_\t_\t0\troot\t_\t_\n\n"


def parse(text, lang="pl"):
    return parse_conllu(io.StringIO(text), lang)


def test_minimal_sentence():
    (s,) = parse(MINIMAL)
    assert s.heads == [2, 0]
    assert s.forms == ["Ala", "śpi"]
    assert s.tokens[0].feats == {"Case": "Nom"}


def test_comment_ignored():
    (s,) = parse("# text = Ala śpi\n" + MINIMAL)
    assert len(s) == 2
    assert s.comments == ["# text = Ala śpi"]


def test_multiword_and_empty_nodes_skipped():
    text = ("1-2\tdo\t_\t_\t_\t_\t_\t_\t_\t_\n" + MINIMAL.rstrip("\n") + "\n"
            + "2.1\tx\t_\t_\t_\t_\t_\t_\t_\t_\n\n")
    (s,) = parse(text)
    assert s.forms == ["Ala", "śpi"]


def test_two_cycle_rejected():
    bad = "1\ta\t_\tX\t_\t_\t2\tdep\t_\t_\n2\tb\t_\tX\t_\t_\t1\tdep\t_\t_\n\n"
    corpus = parse(bad + MINIMAL)
    assert len(corpus) == 1
    assert corpus.rejected == 1


def test_cycles_allowed_for_system_output():
    bad = "1\ta\t_\tX\t_\t_\t2\tdep\t_\t_\n2\tb\t_\tX\t_\t_\t1\tdep\t_\t_\n\n"
    corpus = parse_conllu(io.StringIO(bad), "pl", require_tree=False)
    assert corpus.rejected == 0 and corpus[0].heads == [2, 1]


def test_bad_head_rejected_with_line_number():
    bad = "1\ta\t_\tX\t_\t_\tx\tdep\t_\t_\n\n"
    corpus = parse(MINIMAL + bad)
    assert corpus.rejected == 1 and len(corpus) == 1
    assert ":4:" in corpus.problems[0] and "non-integer head" in corpus.problems[0]


def test_head_out_of_range_rejected():
    corpus = parse("1\ta\t_\tX\t_\t_\t5\tdep\t_\t_\n\n")
    assert corpus.rejected == 1 and not corpus


def test_round_trip(tmp_path):
    sents = generate_treebank(30, 4)
    path = tmp_path / "x.conllu"
    path.write_text(write_conllu(sents), encoding="utf-8")
    again = load_conllu(path, "syn")
    assert write_conllu(again) == path.read_text(encoding="utf-8")
    for a, b in zip(sents, again):
        assert [(t.form, t.upos, t.feats, t.head, t.deprel) for t in a.tokens] == \
               [(t.form, t.upos, t.feats, t.head, t.deprel) for t in b.tokens]


def test_single_language_vocabulary():
    (s,) = parse("1\tab\t_\tX\t_\t_\t0\troot\t_\t_\n\n", "xx")
    vocab = build_vocabularies({"xx": [s]})
    assert set(vocab.chars) == {UNK, "a", "b"}
    assert vocab.fences["xx"] == (1, 2)
    assert encode_word("ab", "xx", vocab) == [1, vocab.chars["a"], vocab.chars["b"], 2]


def test_label_union():
    a = parse("1\tx\t_\tX\t_\t_\t0\tnsubj\t_\t_\n\n", "a")
    b = parse("1\tx\t_\tX\t_\t_\t0\tnsubj\t_\t_\n2\ty\t_\tX\t_\t_\t1\tobj\t_\t_\n\n", "b")
    vocab = build_vocabularies({"a": a, "b": b})
    assert list(vocab.deprel) == [UNK, "nsubj", "obj"]


def test_distinct_code_points_get_distinct_ids():
    pl = parse("1\tż\t_\tX\t_\t_\t0\troot\t_\t_\n\n", "pl")
    ru = parse("1\tж\t_\tX\t_\t_\t0\troot\t_\t_\n\n", "ru")
    vocab = build_vocabularies({"pl": pl, "ru": ru})
    assert vocab.chars["ż"] != vocab.chars["ж"]


def test_same_string_differs_only_in_fences():
    vocab = build_vocabularies({"a": generate_treebank(3, 0, "a"), "b": generate_treebank(3, 1, "b")})
    x, y = encode_word("ten", "a", vocab), encode_word("ten", "b", vocab)
    assert x[1:-1] == y[1:-1]
    assert x[0] != y[0] and x[-1] != y[-1]


def test_unseen_char_is_unk_and_unknown_language_errors():
    vocab = build_vocabularies({"a": generate_treebank(3, 0, "a")})
    assert encode_word("ą", "a", vocab)[1] == 0
    with pytest.raises(UnknownLanguageError) as info:
        encode_word("x", "zz", vocab)
    assert "a" in str(info.value)


def test_feature_absent_from_language_targets_unk():
    a = parse("1\tx\t_\tX\t_\tCase=Nom\t0\troot\t_\t_\n\n", "a")
    b = parse("1\ty\t_\tX\t_\t_\t0\troot\t_\t_\n\n", "b")
    vocab = build_vocabularies({"a": a, "b": b})
    assert encode_sentence(b[0], vocab).pos[0, 1] == 0
    a2 = parse("1\tx\t_\tX\t_\tCase=Nom\t0\troot\t_\t_\n2\tz\t_\tX\t_\t_\t1\tdep\t_\t_\n\n", "a")
    vocab = build_vocabularies({"a": a2})
    assert encode_sentence(a2[0], vocab).pos[1, 1] == vocab.feats["Case"][ABSENT]


def test_empty_corpus_set_rejected():
    with pytest.raises(ValueError):
        build_vocabularies({})


def test_vocab_export_round_trip(tmp_path):
    corpora = {"a": generate_treebank(5, 0, "a"), "b": encipher(generate_treebank(5, 1), "b")}
    vocab = build_vocabularies(corpora)
    path = tmp_path / "vocab.tsv"
    text = write_vocab(vocab, path)
    lines = [line.split("\t") for line in text.splitlines()]
    assert all(len(parts) == 4 for parts in lines)
    again = read_vocab(path)
    assert again == vocab
    assert write_vocab(again) == text


@settings(max_examples=20, deadline=None)
@given(st.integers(0, 1000))
def test_fences_never_shared(seed):
    langs = [f"l{i}" for i in range(3)]
    vocab = build_vocabularies({lang: generate_treebank(2, seed + i, lang) for i, lang in enumerate(langs)})
    for a, b in itertools.combinations(langs, 2):
        wa, wb = encode_word("ab", a, vocab), encode_word("ab", b, vocab)
        assert not {wa[0], wa[-1]} & {wb[0], wb[-1]}


def test_every_gold_symbol_decodable():
    corpora = {"a": generate_treebank(10, 0, "a"), "b": encipher(generate_treebank(10, 1), "b")}
    vocab = build_vocabularies(corpora)
    for sents in corpora.values():
        for s in sents:
            enc = encode_sentence(s, vocab)
            assert [vocab.symbol("deprel", i) for i in enc.deprels] == s.deprels
            assert [vocab.symbol("upos", i) for i in enc.pos[:, 0]] == [t.upos for t in s.tokens]


def test_batches_equalize_and_cycle():
    corpora = {"big": list(range(10)), "small": list(range(3))}
    stream = make_batches(corpora, 2, seed=5)
    seen_small = []
    for _ in range(6):
        batch = next(stream)
        assert batch.counts() == {"big": 2, "small": 2}
        seen_small += batch.sentences["small"]
    assert len(seen_small) == 12 and set(seen_small) == {0, 1, 2}
    assert sorted(seen_small[:3]) == [0, 1, 2]


def test_batches_single_language_is_shuffled_epochs():
    stream = make_batches({"a": list(range(6))}, 3, seed=1)
    first = next(stream).sentences["a"] + next(stream).sentences["a"]
    assert sorted(first) == list(range(6))


def test_batches_deterministic():
    corpora = {"a": list(range(7)), "b": list(range(4))}
    s1, s2 = make_batches(corpora, 3, 9), make_batches(corpora, 3, 9)
    for _ in range(10):
        assert next(s1) == next(s2)


def test_batches_reject_empty_language():
    with pytest.raises(ValueError):
        next(make_batches({"a": [1], "b": []}, 1, 0))

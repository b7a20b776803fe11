from types import SimpleNamespace

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from charparser.analysis import (
    GoldOracle,
    attachment_scores,
    attribution_from_predictions,
    char_analogy_accuracy,
    distances,
    format_neighbors,
    nearest_words,
    pos_error_attribution,
    read_embeddings,
    read_pairs,
)
from charparser.synthetic import generate_treebank
from charparser.treebank import Sentence, Token

LATIN = "abcdefghij"
CYRILLIC = "абвгдежзий"


def sentence(heads, deprels, upos=None):
    upos = upos or ["X"] * len(heads)
    tokens = [Token(i, f"w{i}", u, {}, h, r) for i, (h, r, u) in enumerate(zip(heads, deprels, upos), 1)]
    return Sentence("xx", tokens)


def pred(heads, deprels):
    return SimpleNamespace(heads=heads, deprels=deprels)


def test_hand_counted_scores():
    gold = sentence([2, 0, 2, 3], ["a", "root", "b", "c"])
    p = pred([2, 0, 2, 1], ["a", "root", "x", "c"])
    report = attachment_scores([p], [gold])
    assert (report.uas, report.las, report.tokens) == (75.0, 50.0, 4)


def test_all_correct():
    gold = sentence([0, 1], ["root", "dep"])
    assert attachment_scores([pred([0, 1], ["root", "dep"])], [gold]).las == 100.0


def test_punctuation_flag():
    gold = sentence([0, 1, 1], ["root", "dep", "punct"], ["VERB", "NOUN", "PUNCT"])
    p = pred([0, 1, 2], ["root", "dep", "punct"])
    assert attachment_scores([p], [gold]).uas == pytest.approx(200 / 3)
    assert attachment_scores([p], [gold], include_punct=False).uas == 100.0


def test_length_mismatch_errors():
    gold = sentence([0, 1], ["root", "dep"])
    with pytest.raises(ValueError):
        attachment_scores([pred([0], ["root"])], [gold])
    with pytest.raises(ValueError):
        attachment_scores([], [gold])


def random_case(rng, n_sents=4):
    labels = ["a", "b", "c"]
    gold, preds = [], []
    for _ in range(n_sents):
        n = int(rng.integers(1, 7))
        gold.append(sentence(list(rng.integers(0, n + 1, n)), list(rng.choice(labels, n))))
        preds.append(pred(list(rng.integers(0, n + 1, n)), list(rng.choice(labels, n))))
    return preds, gold


@settings(max_examples=200, deadline=None)
@given(st.integers(0, 2**31 - 1))
def test_las_never_exceeds_uas(seed):
    report = attachment_scores(*random_case(np.random.default_rng(seed)))
    assert 0.0 <= report.las <= report.uas <= 100.0


@settings(max_examples=50, deadline=None)
@given(st.integers(0, 2**31 - 1))
def test_scores_permutation_equivariant_and_label_invariant(seed):
    rng = np.random.default_rng(seed)
    preds, gold = random_case(rng)
    base = attachment_scores(preds, gold)
    order = rng.permutation(len(gold))
    shuffled = attachment_scores([preds[i] for i in order], [gold[i] for i in order])
    assert (shuffled.uas, shuffled.las) == (base.uas, base.las)
    rename = {"a": "c", "b": "a", "c": "b"}
    preds2 = [pred(p.heads, [rename[r] for r in p.deprels]) for p in preds]
    gold2 = [sentence(g.heads, [rename[r] for r in g.deprels]) for g in gold]
    relabelled = attachment_scores(preds2, gold2)
    assert (relabelled.uas, relabelled.las) == (base.uas, base.las)


# --- analogies ------------------------------------------------------------

def offset_embeddings(rng, pairs, dim=6):
    t = rng.normal(size=dim) * 3
    emb = {}
    for p, r in pairs:
        emb[p] = rng.normal(size=dim)
        emb[r] = emb[p] + t
    return emb


@pytest.mark.parametrize("metric", ["cosine", "euclidean"])
def test_offset_embeddings_are_solved(metric):
    pairs = list(zip(LATIN, CYRILLIC))
    report = char_analogy_accuracy(offset_embeddings(np.random.default_rng(1), pairs), pairs, metric)
    assert report.accuracy == 100.0
    assert report.total == len(pairs) * (len(pairs) - 1)
    assert all(q["rank"] == 1 for q in report.queries)


def test_two_pairs_give_two_ordered_queries():
    pairs = [("a", "а"), ("b", "б")]
    emb = offset_embeddings(np.random.default_rng(0), pairs)
    assert char_analogy_accuracy(emb, pairs).total == 2
    assert char_analogy_accuracy(emb, pairs, ordered=False).total == 1


def test_analogy_errors():
    with pytest.raises(ValueError):
        char_analogy_accuracy({"a": [1.0], "а": [1.0]}, [("a", "а")])
    with pytest.raises(KeyError):
        char_analogy_accuracy({"a": [1.0], "а": [1.0]}, [("a", "а"), ("b", "б")])


def test_exclusion_changes_the_candidate_pool():
    pairs = [("a", "а"), ("b", "б"), ("c", "в")]
    emb = {"a": np.zeros(2), "b": np.zeros(2), "c": np.zeros(2),
           "а": np.array([1.0, 0]), "б": np.array([0, 1.0]), "в": np.array([-1.0, 0])}
    # q == C(r1), so without exclusion r1 always wins
    assert char_analogy_accuracy(emb, pairs, "euclidean").correct == 0
    excl = char_analogy_accuracy(emb, pairs, "euclidean", exclude_query=True)
    assert all(q["predicted"] != q["r1"] for q in excl.queries)


@settings(max_examples=25, deadline=None)
@given(st.integers(0, 2**31 - 1))
def test_analogy_invariant_under_isometries(seed):
    rng = np.random.default_rng(seed)
    pairs = list(zip(LATIN[:6], CYRILLIC[:6]))
    emb = {c: rng.normal(size=4) for pair in pairs for c in pair}
    q, _ = np.linalg.qr(rng.normal(size=(4, 4)))
    shift = rng.normal(size=4)
    predicted = lambda e, m: [r["predicted"] for r in char_analogy_accuracy(e, pairs, m).queries]  # noqa: E731
    moved = {c: q @ v + shift for c, v in emb.items()}
    assert predicted(moved, "euclidean") == predicted(emb, "euclidean")
    rotated = {c: 2.5 * (q @ v) for c, v in emb.items()}
    assert predicted(rotated, "cosine") == predicted(emb, "cosine")


def test_bundled_pair_list():
    pairs = read_pairs()
    assert len(pairs) == 26
    assert ("ł", "л") in pairs and ("l", "л") in pairs
    assert ("e", "е") in pairs and ("e", "э") in pairs


def test_pair_file_format(tmp_path):
    path = tmp_path / "p.tsv"
    path.write_text("a\tа\nb\tб\n", encoding="utf-8")
    assert read_pairs(path) == [("a", "а"), ("b", "б")]
    path.write_text("a а\n", encoding="utf-8")
    with pytest.raises(ValueError):
        read_pairs(path)


def test_embedding_file(tmp_path):
    path = tmp_path / "e.tsv"
    path.write_text("a\t1 2 3\nа\t0.5 0 -1\n", encoding="utf-8")
    emb = read_embeddings(path)
    assert emb["a"].tolist() == [1.0, 2.0, 3.0] and emb["а"].tolist() == [0.5, 0.0, -1.0]


# --- distances and neighbours ----------------------------------------------

@settings(max_examples=100, deadline=None)
@given(st.integers(0, 2**31 - 1), st.sampled_from(["cosine", "euclidean"]))
def test_zero_distance_only_for_equal_rows(seed, metric):
    rng = np.random.default_rng(seed)
    m = rng.normal(size=(5, 3))
    m[2] = m[0]
    d = distances(m[0], m, metric)
    assert d[0] == 0.0 and d[2] == 0.0
    assert (d[[1, 3, 4]] > 0).all()


def test_nearest_words_self_first(tiny_bundle, corpora):
    words = sorted({t.form for s in corpora["a"] for t in s.tokens})
    query = words[3]
    top = nearest_words(query, "a", 5, tiny_bundle, words)
    assert top[0] == (query, 0.0)
    assert len(nearest_words(query, "a", 10_000, tiny_bundle, words)) == len(words)
    with pytest.raises(ValueError):
        nearest_words(query, "a", 3, tiny_bundle, [])
    assert format_neighbors(query, top).startswith(query + "\t")


def test_cross_language_neighbours(tiny_bundle, corpora):
    targets = sorted({t.form for s in corpora["b"] for t in s.tokens})
    top = nearest_words(corpora["a"][0].forms[0], "a", 7, tiny_bundle, targets, "b")
    assert len(top) == 7 and all(w in targets for w, _ in top)
    assert [d for _, d in top] == sorted(d for _, d in top)


# --- POS error attribution -------------------------------------------------

def test_oracle_attribution():
    sents = generate_treebank(10, 3)
    att = pos_error_attribution(GoldOracle(), sents)
    n = sum(len(s) for s in sents)
    assert att.tokens == n and att.counts[(True, True, True)] == n
    rates = att.rates()
    assert rates["P(head wrong | POS wrong)"] == {"rate": None, "denominator": 0}
    assert rates["P(head wrong | POS correct)"]["rate"] == 0.0
    assert "undefined" in att.summary()


def test_attribution_partition():
    gold = sentence([2, 0, 2], ["a", "root", "b"], ["NOUN", "VERB", "NOUN"])
    p = SimpleNamespace(heads=[2, 0, 1], deprels=["a", "root", "b"], upos_tags=["VERB", "VERB", "NOUN"])
    att = attribution_from_predictions([p], [gold])
    assert sum(att.counts.values()) == att.tokens == 3
    assert att.counts[(False, True, True)] == 1
    assert att.counts[(True, False, True)] == 1
    assert att.rate("head", True) == (0.5, 2)

"""Attachment scores, character analogies, word neighbours and POS-error attribution."""

from __future__ import annotations

import itertools
from dataclasses import dataclass, field
from importlib import resources

import numpy as np

from .treebank import encode_word

PUNCT = "PUNCT"


@dataclass
class EvalReport:
    uas: float
    las: float
    tokens: int
    sentences: list = field(default_factory=list)

    def summary(self):
        return f"UAS {self.uas:.2f}  LAS {self.las:.2f}  ({self.tokens} tokens)"


def attachment_scores(predicted, gold, include_punct=True):
    """UAS/LAS in percent.

    ``predicted`` items need ``heads`` and ``deprels``; ``gold`` items are
    Sentences.  With ``include_punct`` off, tokens whose gold UPOS is PUNCT
    are not scored.
    """
    if len(predicted) != len(gold):
        raise ValueError(f"{len(predicted)} predicted vs {len(gold)} gold sentences")
    total = heads_ok = both_ok = 0
    rows = []
    for i, (p, g) in enumerate(zip(predicted, gold)):
        ph, pl = list(p.heads), list(p.deprels)
        if len(ph) != len(g.tokens) or len(pl) != len(g.tokens):
            raise ValueError(f"sentence {i}: {len(ph)} predicted vs {len(g.tokens)} gold tokens")
        n = h = b = 0
        for head, rel, tok in zip(ph, pl, g.tokens):
            if not include_punct and tok.upos == PUNCT:
                continue
            n += 1
            if int(head) == tok.head:
                h += 1
                b += rel == tok.deprel
        rows.append({"sentence": i, "tokens": n, "head_correct": h, "label_correct": b})
        total, heads_ok, both_ok = total + n, heads_ok + h, both_ok + b
    if not total:
        return EvalReport(0.0, 0.0, 0, rows)
    return EvalReport(100.0 * heads_ok / total, 100.0 * both_ok / total, total, rows)


# --- distances ------------------------------------------------------------

def distances(query, matrix, metric="cosine"):
    """Distance from ``query`` to each row of ``matrix``."""
    query = np.asarray(query, dtype=np.float64)
    matrix = np.asarray(matrix, dtype=np.float64)
    if metric == "euclidean":
        return np.sqrt(((matrix - query) ** 2).sum(axis=1))
    if metric != "cosine":
        raise ValueError(f"unknown metric {metric!r}")
    norms = np.linalg.norm(matrix, axis=1) * np.linalg.norm(query)
    with np.errstate(invalid="ignore", divide="ignore"):
        cos = np.where(norms > 0, matrix @ query / np.where(norms > 0, norms, 1.0), 0.0)
    d = np.clip(1.0 - cos, 0.0, 2.0)
    d[(matrix == query).all(axis=1)] = 0.0
    return d


# --- character analogies --------------------------------------------------

@dataclass
class AnalogyReport:
    total: int
    correct: int
    accuracy: float
    queries: list = field(default_factory=list)

    def summary(self):
        return f"analogy accuracy {self.accuracy:.1f}% ({self.correct}/{self.total})"


def read_pairs(path=None):
    """``src<TAB>tgt`` lines; the bundled Polish-Russian list when ``path`` is None."""
    if path is None:
        text = resources.files("charparser.data").joinpath("pl_ru_pairs.tsv").read_text("utf-8")
    else:
        with open(path, encoding="utf-8") as fh:
            text = fh.read()
    pairs = []
    for lineno, line in enumerate(text.splitlines(), 1):
        if not line.strip() or line.startswith("#"):
            continue
        parts = line.split("\t")
        if len(parts) != 2:
            raise ValueError(f"line {lineno}: expected 'src<TAB>tgt', got {line!r}")
        pairs.append((parts[0], parts[1]))
    if len(set(pairs)) != len(pairs):
        raise ValueError("duplicate letter pairs")
    return pairs


def char_analogy_accuracy(embeddings, pairs, metric="cosine", ordered=True,
                          exclude_query=False, candidates=None):
    """For pairs of pairs (p1-r1, p2-r2), is r2 the target letter nearest to C(p2) - C(p1) + C(r1)?

    ``embeddings`` maps letters to vectors.  Candidates default to the
    distinct target letters of ``pairs``; ``exclude_query`` drops r1 from
    the candidates of its own query.
    """
    pairs = list(pairs)
    if len(pairs) < 2:
        raise ValueError("need at least two letter pairs")
    letters = {c for pair in pairs for c in pair}
    if candidates is None:
        candidates = list(dict.fromkeys(r for _, r in pairs))
    missing = sorted((letters | set(candidates)) - set(embeddings))
    if missing:
        raise KeyError(f"no embedding for letters: {' '.join(missing)}")
    cand = np.stack([np.asarray(embeddings[c], dtype=np.float64) for c in candidates])
    combos = (itertools.permutations(range(len(pairs)), 2) if ordered
              else itertools.combinations(range(len(pairs)), 2))
    records = []
    for i, j in combos:
        (p1, r1), (p2, r2) = pairs[i], pairs[j]
        q = (np.asarray(embeddings[p2], dtype=np.float64) - embeddings[p1]) + embeddings[r1]
        d = distances(q, cand, metric)
        if exclude_query:
            d = np.where([c == r1 for c in candidates], np.inf, d)
        order = np.argsort(d, kind="stable")
        ranked = [candidates[k] for k in order]
        predicted = ranked[0]
        rank = ranked.index(r2) + 1 if r2 in ranked and np.isfinite(d[candidates.index(r2)]) else None
        records.append({"p1": p1, "r1": r1, "p2": p2, "expected": r2, "predicted": predicted,
                        "correct": predicted == r2, "rank": rank})
    correct = sum(r["correct"] for r in records)
    return AnalogyReport(len(records), correct, 100.0 * correct / len(records), records)


def char_embeddings(bundle, language, letters=None):
    """Rows of a language's reader character table, keyed by letter."""
    reader = bundle.net(language).reader
    table = reader.char_embed.value
    chars = bundle.vocab.chars
    letters = letters if letters is not None else sorted(bundle.vocab.lang_chars[language])
    return {c: table[chars[c]].astype(np.float64) for c in letters if c in chars}


def shared_char_embeddings(bundle, pairs, source, target):
    """Embeddings for every letter in ``pairs`` (source letters from ``source``'s reader)."""
    emb = char_embeddings(bundle, target, [r for _, r in pairs])
    emb.update(char_embeddings(bundle, source, [p for p, _ in pairs]))
    return emb


def read_embeddings(path):
    """``symbol<TAB>v1 v2 ...`` lines."""
    out = {}
    with open(path, encoding="utf-8") as fh:
        for line in fh:
            if not line.strip("\n"):
                continue
            sym, _, vec = line.rstrip("\n").partition("\t")
            out[sym] = np.array([float(x) for x in vec.split()])
    return out


# --- word neighbours ------------------------------------------------------

def embed_forms(forms, language, bundle):
    from .model import embed_words

    reader = bundle.net(language).reader
    table, rows = embed_words([encode_word(f, language, bundle.vocab) for f in forms], reader)
    return table.value[rows].astype(np.float64)


def nearest_words(query, source_language, k, bundle, target_words, target_language=None,
                  metric="cosine"):
    """Top-``k`` target-language words by embedding distance to ``query``."""
    words = list(dict.fromkeys(target_words))
    if not words:
        raise ValueError("empty target vocabulary")
    target_language = target_language or source_language
    q = embed_forms([query], source_language, bundle)[0]
    d = distances(q, embed_forms(words, target_language, bundle), metric)
    order = np.argsort(d, kind="stable")[:k]
    return [(words[i], float(d[i])) for i in order]


def format_neighbors(query, neighbors):
    return f"{query}\t" + " ".join(w for w, _ in neighbors)


# --- POS error attribution ------------------------------------------------

@dataclass
class Attribution:
    counts: dict  # (pos_ok, head_ok, label_ok) -> tokens
    tokens: int

    def rate(self, outcome, given_pos_ok):
        """P(outcome wrong | POS correct == given_pos_ok) with its denominator."""
        idx = {"head": 1, "label": 2}[outcome]
        denom = sum(c for key, c in self.counts.items() if key[0] == given_pos_ok)
        wrong = sum(c for key, c in self.counts.items() if key[0] == given_pos_ok and not key[idx])
        return (wrong / denom if denom else None), denom

    def rates(self):
        out = {}
        for outcome in ("head", "label"):
            for pos_ok in (False, True):
                value, denom = self.rate(outcome, pos_ok)
                tag = "correct" if pos_ok else "wrong"
                out[f"P({outcome} wrong | POS {tag})"] = {"rate": value, "denominator": denom}
        return out

    def summary(self):
        lines = ["pos   head  label  tokens"]
        for key in sorted(self.counts, reverse=True):
            lines.append("  ".join("ok   " if v else "err  " for v in key) + f"{self.counts[key]}")
        for name, r in self.rates().items():
            shown = "undefined" if r["rate"] is None else f"{100 * r['rate']:.2f}%"
            lines.append(f"{name}: {shown} (n={r['denominator']})")
        return "\n".join(lines)


def attribution_from_predictions(predictions, gold):
    counts = {key: 0 for key in itertools.product((True, False), repeat=3)}
    tokens = 0
    for p, g in zip(predictions, gold):
        for tag, head, rel, tok in zip(p.upos_tags, p.heads, p.deprels, g.tokens):
            key = (tag == tok.upos, int(head) == tok.head, rel == tok.deprel)
            counts[key] += 1
            tokens += 1
    return Attribution(counts, tokens)


def pos_error_attribution(model, sentences, decoder_name="greedy"):
    """Cross-tabulate predicted-UPOS correctness against head and label correctness."""
    preds = [model.predict(s, decoder_name) for s in sentences]
    return attribution_from_predictions(preds, sentences)


class GoldOracle:
    """A stand-in model that echoes the gold annotation."""

    def predict(self, sentence, decoder_name="greedy", single_root=False):
        from .model import Prediction

        n = len(sentence)
        heads = np.array(sentence.heads)
        scores = np.full((n, n + 1), -1e9)
        scores[np.arange(n), heads] = 0.0
        return Prediction(heads, np.zeros(n, dtype=int), np.zeros(n, dtype=int), True, scores,
                          list(sentence.deprels), [t.upos for t in sentence.tokens])

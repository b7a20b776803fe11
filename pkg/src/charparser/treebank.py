"""CoNLL-U treebanks, vocabularies and multilingual batching."""

from __future__ import annotations

import logging
import zlib
from dataclasses import dataclass, field

import numpy as np

log = logging.getLogger(__name__)

UNK = "<unk>"
ABSENT = "_"
SOW = "<w>"
EOW = "</w>"
KINDS = ("lang", "char", "sow", "eow", "upos", "deprel", "feat", "langfeat")


class UnknownLanguageError(KeyError):
    def __init__(self, language, known):
        self.language = language
        self.known = list(known)
        super().__init__(f"unknown language {language!r}; known languages: {', '.join(self.known)}")

    def __str__(self):
        return self.args[0]


@dataclass
class Token:
    id: int
    form: str
    upos: str = ABSENT
    feats: dict = field(default_factory=dict)
    head: int = 0
    deprel: str = ABSENT
    lemma: str = ABSENT
    xpos: str = ABSENT
    deps: str = ABSENT
    misc: str = ABSENT


@dataclass
class Sentence:
    language: str
    tokens: list
    comments: list = field(default_factory=list)

    def __len__(self):
        return len(self.tokens)

    @property
    def forms(self):
        return [t.form for t in self.tokens]

    @property
    def heads(self):
        return [t.head for t in self.tokens]

    @property
    def deprels(self):
        return [t.deprel for t in self.tokens]


class Corpus(list):
    """Sentences loaded from one file, plus what was rejected on the way."""

    def __init__(self, sentences=(), language=None):
        super().__init__(sentences)
        self.language = language
        self.rejected = 0
        self.problems = []


def is_tree(heads):
    """True iff ``heads`` (1-based dependents, 0 = ROOT) form an arborescence at 0."""
    n = len(heads)
    state = [0] * (n + 1)  # 0 unseen, 1 on path, 2 reaches root
    state[0] = 2
    for start in range(1, n + 1):
        path = []
        node = start
        while state[node] == 0:
            state[node] = 1
            path.append(node)
            h = heads[node - 1]
            if not 0 <= h <= n:
                return False
            node = h
        if state[node] == 1:
            return False
        for v in path:
            state[v] = 2
    return True


def _parse_feats(text):
    if text == ABSENT or not text:
        return {}
    feats = {}
    for item in text.split("|"):
        name, sep, value = item.partition("=")
        if not sep:
            raise ValueError(f"malformed feature {item!r}")
        feats[name] = value
    return feats


def format_feats(feats):
    return "|".join(f"{k}={v}" for k, v in feats.items()) if feats else ABSENT


def parse_conllu(lines, language, source="<string>", require_tree=True):
    """Sentences from CoNLL-U lines; malformed ones are counted and skipped.

    ``require_tree`` off accepts any in-range head array, which is what
    greedy system output needs.
    """
    corpus = Corpus(language=language)
    block, comments, start = [], [], None

    def reject(lineno, why):
        corpus.rejected += 1
        msg = f"{source}:{lineno}: {why}"
        corpus.problems.append(msg)
        log.warning("rejected sentence: %s", msg)

    def flush():
        if not block:
            return
        tokens = []
        for lineno, line in block:
            cols = line.split("\t")
            if len(cols) != 10:
                return reject(lineno, f"expected 10 columns, got {len(cols)}")
            if "-" in cols[0] or "." in cols[0]:
                continue
            try:
                tid = int(cols[0])
            except ValueError:
                return reject(lineno, f"non-integer token id {cols[0]!r}")
            try:
                head = int(cols[6])
            except ValueError:
                return reject(lineno, f"non-integer head {cols[6]!r}")
            if not cols[1]:
                return reject(lineno, "empty form")
            try:
                feats = _parse_feats(cols[5])
            except ValueError as exc:
                return reject(lineno, str(exc))
            tokens.append(Token(tid, cols[1], cols[3], feats, head, cols[7],
                                lemma=cols[2], xpos=cols[4], deps=cols[8], misc=cols[9]))
        if not tokens:
            return
        n = len(tokens)
        if [t.id for t in tokens] != list(range(1, n + 1)):
            return reject(start, "token ids are not 1..n")
        for t in tokens:
            if not 0 <= t.head <= n:
                return reject(start, f"head {t.head} out of range for token {t.id}")
        if require_tree and not is_tree([t.head for t in tokens]):
            return reject(start, "gold heads do not form a tree rooted at 0")
        corpus.append(Sentence(language, tokens, list(comments)))

    for lineno, raw in enumerate(lines, 1):
        line = raw.rstrip("\r\n")
        if not line.strip():
            flush()
            block, comments, start = [], [], None
        elif line.startswith("#") and not block:
            comments.append(line)
        else:
            if start is None:
                start = lineno
            block.append((lineno, line))
    flush()
    return corpus


def load_conllu(path, language, require_tree=True):
    with open(path, encoding="utf-8") as fh:
        corpus = parse_conllu(fh, language, source=str(path), require_tree=require_tree)
    if corpus.rejected:
        log.warning("%s: %d sentence(s) rejected", path, corpus.rejected)
    return corpus


def format_sentence(sentence, heads=None, deprels=None):
    lines = list(sentence.comments)
    for i, t in enumerate(sentence.tokens):
        head = t.head if heads is None else heads[i]
        rel = t.deprel if deprels is None else deprels[i]
        lines.append("\t".join([str(t.id), t.form, t.lemma, t.upos, t.xpos,
                                format_feats(t.feats), str(head), rel, t.deps, t.misc]))
    return "\n".join(lines) + "\n\n"


def write_conllu(sentences, fh=None):
    text = "".join(format_sentence(s) for s in sentences)
    if fh is not None:
        fh.write(text)
    return text


# --- vocabularies ---------------------------------------------------------

@dataclass
class VocabularySet:
    languages: list
    chars: dict  # code point -> id, shared table; id 0 is UNK
    fences: dict  # language -> (sow id, eow id)
    lang_chars: dict  # language -> set of characters seen
    upos: dict
    deprel: dict
    feats: dict  # attribute -> {value -> id}, each with UNK=0 and ABSENT=1
    lang_feats: dict  # language -> set of attributes seen

    @property
    def n_chars(self):
        return len(self.chars) + 2 * len(self.fences)

    @property
    def categories(self):
        """POS-predictor categories: UPOS then each feature attribute."""
        return ["upos"] + sorted(self.feats)

    def category_sizes(self):
        return [len(self.upos)] + [len(self.feats[a]) for a in sorted(self.feats)]

    def check_language(self, language):
        if language not in self.fences:
            raise UnknownLanguageError(language, self.languages)

    def symbol(self, kind, idx):
        table = self.upos if kind == "upos" else self.deprel if kind == "deprel" else self.feats[kind]
        for s, i in table.items():
            if i == idx:
                return s
        raise KeyError(idx)


def _inventory(symbols, reserved=(UNK,)):
    table = {s: i for i, s in enumerate(reserved)}
    for s in sorted(set(symbols) - set(reserved)):
        table[s] = len(table)
    return table


def build_vocabularies(corpora):
    """``corpora`` maps language -> sentences (first language is the main one)."""
    if not corpora or not any(len(s) for s in corpora.values()):
        raise ValueError("need at least one language with at least one sentence")
    languages = list(corpora)
    lang_chars, lang_feats = {}, {}
    upos, rels, feat_values = set(), set(), {}
    for lang, sents in corpora.items():
        seen, attrs = set(), set()
        for s in sents:
            for t in s.tokens:
                seen.update(t.form)
                upos.add(t.upos)
                rels.add(t.deprel)
                for k, v in t.feats.items():
                    attrs.add(k)
                    feat_values.setdefault(k, set()).add(v)
        lang_chars[lang], lang_feats[lang] = seen, attrs
    fences = {lang: (1 + 2 * i, 2 + 2 * i) for i, lang in enumerate(languages)}
    first = 1 + 2 * len(languages)
    chars = {UNK: 0}
    for i, ch in enumerate(sorted(set().union(*lang_chars.values()))):
        chars[ch] = first + i
    feats = {a: _inventory(vals, (UNK, ABSENT)) for a, vals in sorted(feat_values.items())}
    return VocabularySet(languages, chars, fences, lang_chars, _inventory(upos),
                         _inventory(rels), feats, lang_feats)


def encode_word(form, language, vocab):
    vocab.check_language(language)
    sow, eow = vocab.fences[language]
    return [sow] + [vocab.chars.get(ch, 0) for ch in form] + [eow]


@dataclass
class EncodedSentence:
    language: str
    words: list  # list of int lists (fenced char ids)
    heads: np.ndarray  # [n], 0..n
    deprels: np.ndarray  # [n]
    pos: np.ndarray  # [n, n_categories]
    source: Sentence | None = None

    def __len__(self):
        return len(self.words)


def encode_sentence(sentence, vocab):
    lang = sentence.language
    vocab.check_language(lang)
    attrs = sorted(vocab.feats)
    known_attrs = vocab.lang_feats.get(lang, set())
    pos = np.zeros((len(sentence), 1 + len(attrs)), dtype=np.intp)
    for i, t in enumerate(sentence.tokens):
        pos[i, 0] = vocab.upos.get(t.upos, 0)
        for j, a in enumerate(attrs, 1):
            if a not in known_attrs:
                pos[i, j] = 0
            elif a in t.feats:
                pos[i, j] = vocab.feats[a].get(t.feats[a], 0)
            else:
                pos[i, j] = vocab.feats[a][ABSENT]
    return EncodedSentence(
        lang,
        [encode_word(t.form, lang, vocab) for t in sentence.tokens],
        np.array([t.head for t in sentence.tokens], dtype=np.intp),
        np.array([vocab.deprel.get(t.deprel, 0) for t in sentence.tokens], dtype=np.intp),
        pos,
        sentence,
    )


def write_vocab(vocab, path=None):
    rows = [("lang", lang, lang, i) for i, lang in enumerate(vocab.languages)]
    rows.append(("char", "*", UNK, 0))
    for lang in vocab.languages:
        sow, eow = vocab.fences[lang]
        rows.append(("sow", lang, SOW, sow))
        rows.append(("eow", lang, EOW, eow))
        rows.extend(("char", lang, ch, vocab.chars[ch]) for ch in vocab.lang_chars[lang])
    rows.extend(("upos", "*", s, i) for s, i in vocab.upos.items())
    rows.extend(("deprel", "*", s, i) for s, i in vocab.deprel.items())
    for a, table in vocab.feats.items():
        rows.extend((f"feat:{a}", "*", s, i) for s, i in table.items())
    cats = vocab.categories
    for lang in vocab.languages:
        rows.extend(("langfeat", lang, a, cats.index(a)) for a in vocab.lang_feats[lang])

    def order(row):
        kind = row[0].split(":")[0]
        return (KINDS.index(kind), row[0], row[3], row[1])

    text = "".join(f"{k}\t{lang}\t{s}\t{i}\n" for k, lang, s, i in sorted(rows, key=order))
    if path is not None:
        with open(path, "w", encoding="utf-8") as fh:
            fh.write(text)
    return text


def read_vocab(path):
    with open(path, encoding="utf-8") as fh:
        rows = [line.rstrip("\n").split("\t") for line in fh if line.strip("\n")]
    languages, fences, chars, lang_chars = [], {}, {}, {}
    upos, deprel, feats, lang_feats = {}, {}, {}, {}
    sow_eow = {}
    for kind, lang, sym, idx in rows:
        idx = int(idx)
        if kind == "lang":
            languages.append(lang)
            lang_chars[lang], lang_feats[lang] = set(), set()
        elif kind == "char":
            chars[sym] = idx
            if lang != "*":
                lang_chars[lang].add(sym)
        elif kind in ("sow", "eow"):
            sow_eow.setdefault(lang, {})[kind] = idx
        elif kind == "upos":
            upos[sym] = idx
        elif kind == "deprel":
            deprel[sym] = idx
        elif kind.startswith("feat:"):
            feats.setdefault(kind[5:], {})[sym] = idx
        elif kind == "langfeat":
            lang_feats[lang].add(sym)
        else:
            raise ValueError(f"{path}: unknown vocabulary row kind {kind!r}")
    for lang in languages:
        fences[lang] = (sow_eow[lang]["sow"], sow_eow[lang]["eow"])
    by_id = lambda d: dict(sorted(d.items(), key=lambda kv: kv[1]))  # noqa: E731
    return VocabularySet(languages, by_id(chars), fences, lang_chars, by_id(upos),
                         by_id(deprel), {a: by_id(t) for a, t in sorted(feats.items())}, lang_feats)


# --- batching -------------------------------------------------------------

@dataclass
class Batch:
    sentences: dict  # language -> list of sentences

    def counts(self):
        return {lang: len(s) for lang, s in self.sentences.items()}


def language_rng(seed, language, stream=""):
    """A generator that depends only on the seed and the language's name."""
    return np.random.default_rng([seed, zlib.crc32(f"{stream}:{language}".encode("utf-8"))])


def _cycle(items, rng):
    order = []
    while True:
        if not order:
            order = list(rng.permutation(len(items)))
        yield items[order.pop(0)]


def make_batches(corpora, per_language_size, seed):
    """Endless stream of batches holding ``per_language_size`` sentences per language.

    Each language is drawn from its own reshuffled cycle, so smaller corpora
    repeat while larger ones are still being consumed.
    """
    if per_language_size < 1:
        raise ValueError("per_language_size must be >= 1")
    for lang, sents in corpora.items():
        if not len(sents):
            raise ValueError(f"language {lang!r} has no sentences")
    streams = {lang: _cycle(list(sents), language_rng(seed, lang, "batch"))
               for lang, sents in corpora.items()}
    while True:
        yield Batch({lang: [next(it) for _ in range(per_language_size)]
                     for lang, it in streams.items()})

"""A small case-marking toy grammar for desk-scale experiments.

Heads are recoverable from word endings: case suffixes mark subjects,
objects, obliques and genitive modifiers, and word order varies, so a parser
has to read the characters to attach words correctly.  A second language is
produced by running the same generator through a letter-substitution cipher
(Latin -> Cyrillic), which keeps the syntax and changes every code point.
"""

from __future__ import annotations

import numpy as np

from .treebank import Sentence, Token

CONSONANTS = "bdfgklmprsvz"
VOWELS = "aeiy"

NOUN_CASE = {"Nom": "o", "Acc": "u", "Gen": "ich", "Ins": "em"}
ADJ_CASE = {"Nom": "ny", "Acc": "na", "Gen": "nych", "Ins": "nym"}
DET_CASE = {"Nom": "ten", "Acc": "tu", "Gen": "tych", "Ins": "tym"}
PREPS = ["za", "pod", "nad"]

CYRILLIC = {
    "a": "а", "b": "б", "c": "ц", "d": "д", "e": "е", "f": "ф", "g": "г", "h": "х",
    "i": "и", "k": "к", "l": "л", "m": "м", "n": "н", "o": "о", "p": "п", "r": "р",
    "s": "с", "t": "т", "u": "у", "v": "в", "y": "ы", "z": "з", "j": "й", "w": "ш",
}


def make_lexicon(seed=0, nouns=60, verbs=25, adjectives=25):
    rng = np.random.default_rng(seed)

    def stem():
        syll = rng.integers(1, 3)
        return "".join(str(rng.choice(list(CONSONANTS))) + str(rng.choice(list(VOWELS)))
                       for _ in range(syll)) + str(rng.choice(list(CONSONANTS)))

    def unique(k):
        out = set()
        while len(out) < k:
            out.add(stem())
        return sorted(out)

    return {"noun": unique(nouns), "verb": unique(verbs), "adj": unique(adjectives)}


class _Builder:
    def __init__(self):
        self.words = []  # [form, upos, feats, head (index into words or -1 root), deprel]

    def add(self, form, upos, feats, rel):
        self.words.append([form, upos, feats, None, rel])
        return len(self.words) - 1


def _noun_phrase(b, lex, rng, case, rel, allow_gen=True):
    """Append a noun phrase in ``case``; return the index of its head noun."""
    pending = []
    if rng.random() < 0.5:
        pending.append(b.add(DET_CASE[case], "DET", {"Case": case}, "det"))
    for _ in range(rng.choice([0, 0, 1, 2])):
        adj = rng.choice(lex["adj"]) + ADJ_CASE[case]
        pending.append(b.add(adj, "ADJ", {"Case": case}, "amod"))
    noun = b.add(rng.choice(lex["noun"]) + NOUN_CASE[case], "NOUN", {"Case": case}, rel)
    for i in pending:
        b.words[i][3] = noun
    if allow_gen and rng.random() < 0.3:
        gen = _noun_phrase(b, lex, rng, "Gen", "nmod", allow_gen=False)
        b.words[gen][3] = noun
    return noun


def generate_sentence(lex, rng, language="syn"):
    b = _Builder()
    parts = ["subj", "verb"]
    if rng.random() < 0.7:
        parts.append("obj")
    order = {"subj": 0, "verb": 1, "obj": 2}
    roll = rng.random()
    if roll < 0.5:
        parts.sort(key=order.get)
    elif roll < 0.7:
        parts.sort(key=lambda p: -order[p])
    else:
        rng.shuffle(parts)
    obl_first = rng.random() < 0.2
    has_obl = rng.random() < 0.4
    attach_to_verb = []

    def oblique():
        if rng.random() < 0.5:
            prep = b.add(str(rng.choice(PREPS)), "ADP", {}, "case")
            noun = _noun_phrase(b, lex, rng, "Ins", "obl")
            b.words[prep][3] = noun
        else:
            noun = _noun_phrase(b, lex, rng, "Ins", "obl")
        attach_to_verb.append(noun)

    if has_obl and obl_first:
        oblique()
    verb = None
    for p in parts:
        if p == "verb":
            verb = b.add(rng.choice(lex["verb"]) + rng.choice(["at", "it"]), "VERB",
                         {"VerbForm": "Fin"}, "root")
            b.words[verb][3] = -1
        else:
            case, rel = ("Nom", "nsubj") if p == "subj" else ("Acc", "obj")
            attach_to_verb.append(_noun_phrase(b, lex, rng, case, rel))
    if has_obl and not obl_first:
        oblique()
    punct = b.add(".", "PUNCT", {}, "punct")
    attach_to_verb.append(punct)
    for i in attach_to_verb:
        b.words[i][3] = verb
    tokens = [Token(i + 1, str(form), upos, dict(feats), head + 1, rel)
              for i, (form, upos, feats, head, rel) in enumerate(b.words)]
    return Sentence(language, tokens)


def generate_treebank(n, seed, language="syn", lexicon_seed=0):
    lex = make_lexicon(lexicon_seed)
    rng = np.random.default_rng(seed)
    return [generate_sentence(lex, rng, language) for _ in range(n)]


def encipher(sentences, language, mapping=None):
    """Copy sentences, substituting every character of every form."""
    mapping = CYRILLIC if mapping is None else mapping
    out = []
    for s in sentences:
        tokens = [Token(t.id, "".join(mapping.get(ch, ch) for ch in t.form), t.upos,
                        dict(t.feats), t.head, t.deprel) for t in s.tokens]
        out.append(Sentence(language, tokens))
    return out

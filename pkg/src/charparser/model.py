"""Reader, tagger, POS predictor and scorer/labeler networks.

A :class:`ModelBundle` holds one of each subnetwork per language; the
subnetworks named in a :class:`SharingSpec` are single objects aliased across
languages, so a gradient step driven by any language moves all of them.
"""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass, field, fields

import numpy as np

from . import decoder
from . import numcore as nc
from .treebank import EncodedSentence, Sentence, encode_sentence, language_rng

SUBNETS = ("reader", "tagger", "pos", "parser")


def _reference_filters():
    return {k: 50 * k for k in range(1, 7)}


@dataclass
class ModelConfig:
    char_embed_dim: int = 15
    filters: dict = field(default_factory=_reference_filters)
    reader_proj_dim: int = 512
    reader_mlp_layers: int = 3
    tagger_layers: int = 2
    tagger_hidden: int = 548
    scorer_hidden: int = 384
    labeler_units: int = 256
    labeler_pieces: int = 2
    alpha_head: float = 0.6
    alpha_label: float = 0.4
    alpha_pos: float = 1.0
    dropout_reader: float = 0.2
    dropout_tagger: float = 0.7
    dropout_labeler: float = 0.5
    token_reduction: str = "mean"
    precision: str = "float32"

    def __post_init__(self):
        self.filters = {int(k): int(v) for k, v in self.filters.items()}
        dims = [self.char_embed_dim, self.reader_proj_dim, self.tagger_hidden,
                self.scorer_hidden, self.labeler_units, self.labeler_pieces,
                self.tagger_layers, *self.filters.keys(), *self.filters.values()]
        if any(d <= 0 for d in dims) or not self.filters:
            raise ValueError("all model dimensions must be positive")
        if self.reader_mlp_layers < 0:
            raise ValueError("reader_mlp_layers must be >= 0")
        for name in ("dropout_reader", "dropout_tagger", "dropout_labeler"):
            if not 0.0 <= getattr(self, name) < 1.0:
                raise ValueError(f"{name} must be in [0, 1)")
        if self.token_reduction not in ("mean", "sum"):
            raise ValueError("token_reduction must be 'mean' or 'sum'")
        if self.precision not in ("float32", "float64"):
            raise ValueError("precision must be float32 or float64")

    @property
    def dtype(self):
        return np.dtype(self.precision)

    @property
    def n_filters(self):
        return sum(self.filters.values())

    @property
    def embed_dim(self):
        return self.reader_proj_dim

    def to_text(self):
        lines = []
        for f in fields(self):
            v = getattr(self, f.name)
            if f.name == "filters":
                v = ",".join(f"{k}:{n}" for k, n in sorted(v.items()))
            lines.append(f"{f.name} = {v}")
        return "\n".join(lines) + "\n"

    @classmethod
    def from_text(cls, text):
        return cls(**_coerce(cls, parse_kv(text)))


def parse_kv(text):
    """``key = value`` lines; blank lines and ``#`` comments ignored."""
    out = {}
    for lineno, line in enumerate(text.splitlines(), 1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        key, sep, value = line.partition("=")
        if not sep:
            raise ValueError(f"line {lineno}: expected 'key = value', got {line!r}")
        out[key.strip()] = value.strip()
    return out


def _coerce(cls, raw):
    types = {f.name: f.type for f in fields(cls)}
    out = {}
    for key, value in raw.items():
        if key not in types:
            raise ValueError(f"unknown {cls.__name__} key {key!r}")
        kind = types[key]
        if key == "filters":
            out[key] = {int(a): int(b) for a, b in (p.split(":") for p in value.split(","))}
        elif kind in ("int", int):
            out[key] = int(value)
        elif kind in ("float", float):
            out[key] = float(value)
        elif kind in ("bool", bool):
            out[key] = value.lower() in ("1", "true", "yes", "on")
        else:
            out[key] = value
    return out


def toy_config(**overrides):
    """The full architecture at desk-scale widths."""
    base = dict(char_embed_dim=8, filters={1: 8, 2: 16, 3: 16, 4: 16}, reader_proj_dim=32,
                reader_mlp_layers=3, tagger_layers=2, tagger_hidden=48, scorer_hidden=32,
                labeler_units=32, labeler_pieces=2)
    base.update(overrides)
    return ModelConfig(**base)


@dataclass
class SharingSpec:
    reader: bool = False
    tagger: bool = False
    pos: bool = False
    parser: bool = False

    @classmethod
    def parse(cls, text):
        text = (text or "none").strip().lower()
        if text == "all":
            return cls(True, True, True, True)
        if text in ("none", ""):
            return cls()
        aliases = {"reader": "reader", "tagger": "tagger", "pos": "pos",
                   "pospredictor": "pos", "parser": "parser"}
        flags = {}
        for part in text.split(","):
            key = aliases.get(part.strip().replace(" ", "").replace("_", ""))
            if key is None:
                raise ValueError(f"unknown subnetwork {part!r}; choose from reader,tagger,pos,parser")
            flags[key] = True
        return cls(**flags)

    def shared(self):
        return [name for name in SUBNETS if getattr(self, name)]

    def __str__(self):
        names = self.shared()
        return "all" if len(names) == len(SUBNETS) else ",".join(names) or "none"


def _uniform(rng, shape, fan_in, dtype):
    limit = math.sqrt(3.0 / fan_in)
    return rng.uniform(-limit, limit, size=shape).astype(dtype)


class Subnet:
    def __init__(self, prefix):
        self.prefix = prefix
        self._params = []

    def param(self, name, value, decay=True):
        p = nc.Parameter(value, f"{self.prefix}.{name}", decay=decay)
        self._params.append(p)
        return p

    def parameters(self):
        return list(self._params)


class Reader(Subnet):
    """Character convolution + max-pool + feedforward word embedder."""

    def __init__(self, prefix, n_chars, config, rng):
        super().__init__(prefix)
        dt = config.dtype
        d = config.char_embed_dim
        self.config = config
        self.char_embed = self.param("char_embed", rng.uniform(-0.1, 0.1, (n_chars, d)).astype(dt))
        self.filters = {k: self.param(f"filters.k{k}", _uniform(rng, (k, d, n), k * d, dt))
                        for k, n in sorted(config.filters.items())}
        nf, e = config.n_filters, config.embed_dim
        self.proj_w = self.param("proj.w", _uniform(rng, (nf, e), nf, dt))
        self.proj_b = self.param("proj.b", np.zeros(e, dt), decay=False)
        self.mlp = [(self.param(f"mlp{i}.w", _uniform(rng, (e, e), e, dt)),
                     self.param(f"mlp{i}.b", np.zeros(e, dt), decay=False))
                    for i in range(config.reader_mlp_layers)]

    def pooled(self, words):
        """Max-pooled filter responses ``[U, n_filters]`` for fenced id sequences."""
        if not words or any(len(w) == 0 for w in words):
            raise ValueError("reader needs non-empty character sequences")
        lengths = np.array([len(w) for w in words])
        longest = int(lengths.max())
        ids = np.zeros((len(words), longest), dtype=np.intp)
        for i, w in enumerate(words):
            ids[i, :len(w)] = w
        emb = nc.take(self.char_embed, ids)
        parts = []
        for k, w in self.filters.items():
            if k > longest:
                parts.append(nc.constant(np.zeros((len(words), w.shape[2])), self.config.dtype))
                continue
            conv = nc.conv1d(emb, w)
            positions = np.arange(longest - k + 1)
            mask = positions[None, :] + k <= lengths[:, None]
            parts.append(nc.max_pool(conv, mask))
        return nc.concat(parts, axis=-1)

    def forward(self, words, train=False, rng=None):
        x = nc.affine(self.pooled(words), self.proj_w, self.proj_b)
        for w, b in self.mlp:
            x = nc.relu(nc.affine(x, w, b))
        return nc.dropout(x, self.config.dropout_reader, train, rng)


class Tagger(Subnet):
    """Stacked bidirectional GRU; directions are summed."""

    def __init__(self, prefix, config, rng):
        super().__init__(prefix)
        dt = config.dtype
        e, h = config.embed_dim, config.tagger_hidden
        self.config = config
        self.root = self.param("root", rng.uniform(-0.1, 0.1, e).astype(dt))
        self.layers = []
        for i in range(config.tagger_layers):
            d = e if i == 0 else h
            layer = []
            for direction in ("fwd", "bwd"):
                bias = np.zeros(3 * h, dt)
                bias[:h] = 1.0
                layer.append((
                    self.param(f"l{i}.{direction}.w_in", _uniform(rng, (d, 3 * h), d, dt)),
                    self.param(f"l{i}.{direction}.w_rec", _uniform(rng, (h, 3 * h), h, dt)),
                    self.param(f"l{i}.{direction}.b", bias, decay=False),
                ))
            self.layers.append(layer)

    def forward(self, embeddings, train=False, rng=None):
        e = self.config.embed_dim
        x = nc.concat([nc.reshape(self.root, (1, e)), embeddings], axis=0)
        for i, (fwd, bwd) in enumerate(self.layers):
            if i:
                x = nc.dropout(x, self.config.dropout_tagger, train, rng)
            x = nc.add(nc.gru(x, *fwd), nc.gru(x, *bwd, reverse=True))
        return x


class POSPredictor(Subnet):
    def __init__(self, prefix, sizes, config, rng):
        super().__init__(prefix)
        dt, h = config.dtype, config.tagger_hidden
        self.heads = [(self.param(f"cat{i}.w", _uniform(rng, (h, n), h, dt)),
                       self.param(f"cat{i}.b", np.zeros(n, dt), decay=False))
                      for i, n in enumerate(sizes)]

    def forward(self, states):
        return [nc.affine(states, w, b) for w, b in self.heads]


class Parser(Subnet):
    """Head scorer (tanh MLP over state pairs) and maxout labeler."""

    def __init__(self, prefix, n_labels, config, rng):
        super().__init__(prefix)
        dt, h, s = config.dtype, config.tagger_hidden, config.scorer_hidden
        u, k = config.labeler_units, config.labeler_pieces
        self.config = config
        self.dep_w = self.param("scorer.dep_w", _uniform(rng, (h, s), 2 * h, dt))
        self.head_w = self.param("scorer.head_w", _uniform(rng, (h, s), 2 * h, dt))
        self.score_b = self.param("scorer.b", np.zeros(s, dt), decay=False)
        self.score_v = self.param("scorer.v", _uniform(rng, (s, 1), s, dt))
        self.lab_w = self.param("labeler.w", _uniform(rng, (2 * h, u * k), 2 * h, dt))
        self.lab_b = self.param("labeler.b", np.zeros(u * k, dt), decay=False)
        self.out_w = self.param("labeler.out_w", _uniform(rng, (u, n_labels), u, dt))
        self.out_b = self.param("labeler.out_b", np.zeros(n_labels, dt), decay=False)

    def score_logits(self, states):
        """Raw pair scores ``[n, n+1]``: row w-1 holds s(w, h) for h = 0..n."""
        n1 = states.shape[0]
        s = self.config.scorer_hidden
        deps = nc.take(states, np.arange(1, n1))
        a = nc.reshape(nc.matmul(deps, self.dep_w), (n1 - 1, 1, s))
        b = nc.reshape(nc.affine(states, self.head_w, self.score_b), (1, n1, s))
        hidden = nc.tanh(nc.add(a, b))
        return nc.reshape(nc.matmul(hidden, self.score_v), (n1 - 1, n1))

    def label_logits(self, states, deps, heads, train=False, rng=None):
        pair = nc.concat([nc.take(states, deps), nc.take(states, heads)], axis=-1)
        x = nc.maxout(nc.affine(pair, self.lab_w, self.lab_b), self.config.labeler_pieces)
        x = nc.dropout(x, self.config.dropout_labeler, train, rng)
        return nc.affine(x, self.out_w, self.out_b)


@dataclass
class LanguageNet:
    reader: Reader
    tagger: Tagger
    pos: POSPredictor
    parser: Parser


class ModelBundle:
    def __init__(self, config, vocab, sharing, languages=None, seed=0):
        self.config = config
        self.vocab = vocab
        self.sharing = sharing
        self.languages = list(languages or vocab.languages)
        for lang in self.languages:
            vocab.check_language(lang)
        self.nets = {}
        shared = {}
        for lang in self.languages:
            parts = {}
            for name in SUBNETS:
                if getattr(sharing, name):
                    if name not in shared:
                        shared[name] = self._build(name, name, language_rng(seed, "*", name))
                    parts[name] = shared[name]
                else:
                    parts[name] = self._build(name, f"{name}@{lang}", language_rng(seed, lang, name))
            self.nets[lang] = LanguageNet(**parts)

    def _build(self, kind, prefix, rng):
        cfg, vocab = self.config, self.vocab
        if kind == "reader":
            return Reader(prefix, vocab.n_chars, cfg, rng)
        if kind == "tagger":
            return Tagger(prefix, cfg, rng)
        if kind == "pos":
            return POSPredictor(prefix, vocab.category_sizes(), cfg, rng)
        return Parser(prefix, len(vocab.deprel), cfg, rng)

    def net(self, language):
        self.vocab.check_language(language)
        if language not in self.nets:
            raise KeyError(f"model has no parser for language {language!r}")
        return self.nets[language]

    def subnets(self):
        seen, out = set(), []
        for lang in self.languages:
            for name in SUBNETS:
                sub = getattr(self.nets[lang], name)
                if id(sub) not in seen:
                    seen.add(id(sub))
                    out.append(sub)
        return out

    def parameters(self, language=None):
        subs = self.subnets() if language is None else [getattr(self.net(language), n) for n in SUBNETS]
        return [p for sub in subs for p in sub.parameters()]

    def predict(self, sentence, decoder_name="greedy", single_root=False):
        return predict(sentence, self, decoder_name, single_root)

    def state(self):
        return {p.name: p.value.copy() for p in self.parameters()}

    def load_state(self, arrays):
        nc.assign(self.parameters(), arrays)

    def model_card(self):
        cfg = self.config
        lines = [
            "charparser model",
            f"languages: {', '.join(self.languages)} (main: {self.languages[0]})",
            f"shared subnetworks: {self.sharing}",
            f"char embedding: {cfg.char_embed_dim}, filters: "
            + ", ".join(f"{n}x{k}" for k, n in sorted(cfg.filters.items()))
            + f" ({cfg.n_filters} total)",
            f"word embedding: {cfg.embed_dim} ({cfg.reader_mlp_layers} ReLU layers)",
            f"tagger: {cfg.tagger_layers} BiGRU layers x {cfg.tagger_hidden}",
            f"scorer: {cfg.scorer_hidden} tanh; labeler: {cfg.labeler_units} maxout x {cfg.labeler_pieces}",
            f"vocabulary: {self.vocab.n_chars} char ids, {len(self.vocab.upos)} UPOS, "
            f"{len(self.vocab.feats)} feature attributes, {len(self.vocab.deprel)} labels",
            f"parameters: {sum(p.value.size for p in self.parameters())} "
            f"in {len(self.parameters())} tensors ({cfg.precision})",
        ]
        return "\n".join(lines) + "\n"


# --- per-sentence operations ----------------------------------------------

def read_word(char_ids, reader, train=False, rng=None):
    """Embed one fenced character-id sequence; returns ``[Edim]``."""
    if len(char_ids) == 0:
        raise ValueError("empty character sequence")
    out = reader.forward([list(char_ids)], train, rng)
    return nc.reshape(out, (out.shape[1],))


def tag_sentence(embeddings, tagger, train=False, rng=None):
    """``[n, Edim]`` word embeddings -> ``[n+1, Hdim]`` states (row 0 is ROOT)."""
    if embeddings.shape[0] < 1:
        raise ValueError("sentence must contain at least one word")
    return tagger.forward(embeddings, train, rng)


def score_heads(states, parser):
    """Row-normalized head log-probabilities ``[n, n+1]``."""
    logits = parser.score_logits(nc.as_tensor(states))
    return nc.log_softmax(logits.value, axis=-1)


def label_edge(dep_state, head_state, parser):
    """Label distribution for one (dependent, head) state pair."""
    states = nc.as_tensor(np.stack([np.asarray(getattr(dep_state, "value", dep_state)),
                                    np.asarray(getattr(head_state, "value", head_state))]))
    logits = parser.label_logits(states, [0], [1])
    return nc.softmax(logits.value[0])


def predict_pos(state, pos):
    """Per-category distributions for one hidden state."""
    x = nc.as_tensor(np.asarray(getattr(state, "value", state))[None])
    return [nc.softmax(t.value[0]) for t in pos.forward(x)]


@dataclass
class LossTerms:
    total: nc.Tensor
    head: nc.Tensor
    label: nc.Tensor
    pos: nc.Tensor

    def values(self):
        return (self.total.item(), self.head.item(), self.label.item(), self.pos.item())


def _encoded(sentence, bundle):
    if isinstance(sentence, EncodedSentence):
        return sentence
    return encode_sentence(sentence, bundle.vocab)


def embed_words(words, reader, train=False, rng=None):
    """Embed a list of fenced sequences, running the reader once per distinct word."""
    index, unique = {}, []
    for w in words:
        key = tuple(w)
        if key not in index:
            index[key] = len(unique)
            unique.append(list(w))
    table = reader.forward(unique, train, rng)
    return table, [index[tuple(w)] for w in words]


def _terms(enc, states, net, config, train, rng):
    red = config.token_reduction
    n = len(enc)
    l_head = nc.softmax_cross_entropy(net.parser.score_logits(states), enc.heads, red)
    deps = np.arange(1, n + 1)
    l_label = nc.softmax_cross_entropy(
        net.parser.label_logits(states, deps, enc.heads, train, rng), enc.deprels, red)
    pos_logits = net.pos.forward(nc.take(states, deps))
    pos_terms = [nc.softmax_cross_entropy(lg, enc.pos[:, j], red) for j, lg in enumerate(pos_logits)]
    l_pos = nc.weighted_sum(pos_terms, [1.0 / len(pos_terms)] * len(pos_terms))
    total = nc.weighted_sum([l_head, l_label, l_pos],
                            [config.alpha_head, config.alpha_label, config.alpha_pos])
    if not np.isfinite(total.value):
        raise nc.NonFiniteError("non-finite sentence loss")
    return LossTerms(total, l_head, l_label, l_pos)


def batch_loss(sentences, bundle, language, train=False, rng=None):
    """Mean loss over same-language sentences sharing one reader pass."""
    net = bundle.net(language)
    encs = [_encoded(s, bundle) for s in sentences]
    words = [w for enc in encs for w in enc.words]
    table, rows = embed_words(words, net.reader, train, rng)
    terms, offset = [], 0
    for i, enc in enumerate(encs):
        n = len(enc)
        emb = nc.take(table, rows[offset:offset + n])
        offset += n
        states = tag_sentence(emb, net.tagger, train, rng)
        try:
            terms.append(_terms(enc, states, net, bundle.config, train, rng))
        except nc.NonFiniteError as exc:
            label = " ".join(enc.source.forms) if enc.source is not None else f"#{i}"
            raise nc.NonFiniteError(f"{exc} in sentence {label!r}") from None
    w = [1.0 / len(terms)] * len(terms)
    return LossTerms(*(nc.weighted_sum([getattr(t, f) for t in terms], w)
                       for f in ("total", "head", "label", "pos")))


def sentence_loss(sentence, bundle, train=False, rng=None, language=None):
    """``L = a_h L_h + a_l L_l + a_t L_t`` for one sentence."""
    lang = language or sentence.language
    return batch_loss([sentence], bundle, lang, train, rng)


# --- inference ------------------------------------------------------------

@dataclass
class Prediction:
    heads: np.ndarray
    labels: np.ndarray
    upos: np.ndarray
    is_tree: bool
    scores: np.ndarray
    deprels: list = field(default_factory=list)
    upos_tags: list = field(default_factory=list)


def sentence_states(sentence, bundle, language=None):
    lang = language or sentence.language
    net = bundle.net(lang)
    enc = encode_sentence(sentence, bundle.vocab) if isinstance(sentence, Sentence) else sentence
    table, rows = embed_words(enc.words, net.reader)
    return net, tag_sentence(nc.take(table, rows), net.tagger)


def predict(sentence, bundle, decoder_name="greedy", single_root=False, language=None):
    """Decode heads from the scorer, then label the chosen edges."""
    net, states = sentence_states(sentence, bundle, language)
    scores = score_heads(states, net.parser)
    if decoder_name == "greedy":
        tree = decoder.decode_greedy(scores)
    elif decoder_name == "cle":
        tree = decoder.decode_cle(scores, single_root=single_root)
    else:
        raise ValueError(f"unknown decoder {decoder_name!r}")
    tree = decoder.assign_labels(tree, states.value, lambda s, d, h: net.parser.label_logits(
        nc.as_tensor(s), d, h).value)
    upos_logits = net.pos.heads[0]
    upos = np.argmax(nc.affine(nc.as_tensor(states.value[1:]), *upos_logits).value, axis=-1)
    rels = {i: s for s, i in bundle.vocab.deprel.items()}
    tags = {i: s for s, i in bundle.vocab.upos.items()}
    return Prediction(tree.heads, tree.labels, upos, tree.is_tree, scores,
                      [rels[int(i)] for i in tree.labels], [tags[int(i)] for i in upos])


def config_dict(config):
    return asdict(config)

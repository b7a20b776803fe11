"""Command-line entry point: train, parse, eval, analyze, synth.

Exit status is 0 on success, 1 when a command fails at run time and 2 for
usage errors.
"""

from __future__ import annotations

import argparse
import dataclasses
import hashlib
import json
import logging
import os
import sys
from importlib import metadata

from . import analysis, decoder, plots, trainer
from .model import ModelConfig, SharingSpec, _coerce, parse_kv, score_heads, sentence_states, toy_config
from .numcore import NonFiniteError
from .treebank import UnknownLanguageError, format_sentence, load_conllu, write_conllu

log = logging.getLogger("charparser")


class UsageError(Exception):
    pass


def tool_version():
    try:
        return metadata.version("artifact")
    except metadata.PackageNotFoundError:
        return "unknown"


def file_sha256(path):
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for block in iter(lambda: fh.read(1 << 16), b""):
            h.update(block)
    return h.hexdigest()


@dataclasses.dataclass
class RunManifest:
    command: list
    config: dict
    seed: int | None
    inputs: list
    version: str = dataclasses.field(default_factory=tool_version)

    @classmethod
    def create(cls, argv, config, seed, paths):
        inputs = [{"path": os.path.abspath(p), "sha256": file_sha256(p)} for p in paths]
        return cls(list(argv), config, seed, inputs)

    def write(self, path):
        os.makedirs(os.path.dirname(os.path.abspath(path)), exist_ok=True)
        with open(path, "w", encoding="utf-8") as fh:
            json.dump(dataclasses.asdict(self), fh, indent=2, ensure_ascii=False)
            fh.write("\n")
        return path


# --- argument helpers -----------------------------------------------------

def lang_path(text):
    lang, sep, path = text.partition("=")
    if not sep or not lang or not path:
        raise argparse.ArgumentTypeError(f"expected LANG=PATH, got {text!r}")
    return lang, path


def sharing_arg(text):
    try:
        return SharingSpec.parse(text)
    except ValueError as exc:
        raise argparse.ArgumentTypeError(str(exc)) from None


TRAIN_KEYS = {f.name for f in dataclasses.fields(trainer.TrainConfig)} - {
    "languages", "sharing", "seed", "workers", "language_weights"}


def resolve_configs(args):
    """Merge preset, config file and flags into (ModelConfig, TrainConfig kwargs)."""
    raw = {}
    if args.config:
        with open(args.config, encoding="utf-8") as fh:
            try:
                raw = parse_kv(fh.read())
            except ValueError as exc:
                raise UsageError(f"{args.config}: {exc}") from None
    preset = raw.pop("preset", args.preset)
    recipe = raw.pop("recipe", args.recipe)
    train_raw = {k: raw.pop(k) for k in list(raw) if k in TRAIN_KEYS}
    try:
        model_kw = _coerce(ModelConfig, raw)
        train_kw = _coerce(trainer.TrainConfig, train_raw)
        if preset == "toy":
            model_cfg = toy_config(**model_kw)
        elif preset == "full":
            model_cfg = ModelConfig(**model_kw)
        else:
            raise UsageError(f"unknown preset {preset!r} (full or toy)")
    except ValueError as exc:
        raise UsageError(str(exc)) from None
    if recipe == "desk":
        train_kw = {**trainer.DESK_RECIPE, **train_kw}
    elif recipe != "reference":
        raise UsageError(f"unknown recipe {recipe!r} (reference or desk)")
    for key in ("epochs", "patience", "batch_size"):
        if getattr(args, key) is not None:
            train_kw[key] = getattr(args, key)
    return model_cfg, train_kw, preset, recipe


def load_many(pairs):
    corpora = {}
    for lang, path in pairs:
        corpus = load_conllu(path, lang)
        if not corpus:
            raise ValueError(f"{path}: no usable sentences")
        corpora.setdefault(lang, []).extend(corpus)
    return corpora


def emit(records, summary, fmt, out=None):
    out = out or sys.stdout
    if fmt == "jsonl":
        for rec in records:
            out.write(json.dumps(rec, ensure_ascii=False, default=_jsonable) + "\n")
        out.write(json.dumps({"summary": summary}, ensure_ascii=False) + "\n")
    else:
        out.write(summary.rstrip("\n") + "\n")


def _jsonable(obj):
    if hasattr(obj, "tolist"):
        return obj.tolist()
    raise TypeError(type(obj).__name__)


def manifest_for(args, argv, paths, config=None):
    if getattr(args, "manifest", None):
        RunManifest.create(argv, config or {}, getattr(args, "seed", None), paths).write(args.manifest)


def pick_language(bundle, requested):
    if requested is None:
        if len(bundle.languages) != 1:
            raise UsageError(f"--language is required; model knows {', '.join(bundle.languages)}")
        return bundle.languages[0]
    bundle.vocab.check_language(requested)
    return requested


# --- commands -------------------------------------------------------------

def cmd_train(args, argv):
    if not args.train:
        raise UsageError("at least one --train LANG=PATH is required")
    langs = list(dict.fromkeys(lang for lang, _ in args.train))
    model_cfg, train_kw, preset, recipe = resolve_configs(args)
    try:
        config = trainer.TrainConfig(langs, sharing=args.share, seed=args.seed,
                                     workers=args.workers, **train_kw)
    except ValueError as exc:
        raise UsageError(str(exc)) from None
    paths = [p for _, p in args.train] + [p for _, p in args.dev or []]
    if args.config:
        paths.append(args.config)
    resolved = {"preset": preset, "recipe": recipe, "model": dataclasses.asdict(model_cfg),
                "train": {**dataclasses.asdict(config), "sharing": str(config.sharing)}}
    RunManifest.create(argv, resolved, args.seed, paths).write(os.path.join(args.out, "manifest.json"))
    corpora = load_many(args.train)
    dev = load_many(args.dev) if args.dev else None
    result = trainer.train(config, model_cfg, corpora, dev, out_dir=args.out)
    if args.figures:
        plots.learning_curves(result.log, os.path.join(args.figures, "learning_curves.png"))
    s = result.state
    print(f"best {config.main} dev UAS {s.best_uas:.2f} LAS {s.best_las:.2f} at epoch {s.best_epoch}"
          f" ({s.evaluations} evaluations); model in {args.out}")
    return 0


def cmd_parse(args, argv):
    bundle = trainer.load_model(args.model)
    lang = pick_language(bundle, args.language)
    manifest_for(args, argv, [args.input, os.path.join(args.model, "best.npz")],
                 {"decoder": args.decoder, "single_root": args.single_root, "language": lang})
    corpus = load_conllu(args.input, lang)
    out = open(args.output, "w", encoding="utf-8") if args.output else sys.stdout
    try:
        for sentence in corpus:
            p = bundle.predict(sentence, args.decoder, args.single_root)
            out.write(format_sentence(sentence, [int(h) for h in p.heads], p.deprels))
    finally:
        if out is not sys.stdout:
            out.close()
    return 0


def cmd_eval(args, argv):
    if bool(args.system) == bool(args.model):
        raise UsageError("give exactly one of --system FILE or --model DIR")
    bundle = trainer.load_model(args.model) if args.model else None
    lang = pick_language(bundle, args.language) if bundle else (args.language or "xx")
    manifest_for(args, argv, [p for p in (args.gold, args.system) if p],
                 {"include_punct": not args.no_punct, "decoder": args.decoder})
    gold = load_conllu(args.gold, lang)
    if bundle is None:
        predicted = load_conllu(args.system, lang, require_tree=False)
        if len(predicted) != len(gold):
            raise ValueError(f"{args.system}: {len(predicted)} sentences vs {len(gold)} in gold")
    else:
        predicted = [bundle.predict(s, args.decoder, args.single_root) for s in gold]
    report = analysis.attachment_scores(predicted, gold, include_punct=not args.no_punct)
    emit(report.sentences, report.summary(), args.format)
    return 0


def cmd_analogy(args, argv):
    pairs = analysis.read_pairs(args.pairs)
    if args.embeddings:
        emb = analysis.read_embeddings(args.embeddings)
    elif args.model:
        bundle = trainer.load_model(args.model)
        if not (args.source and args.target):
            raise UsageError("--source and --target are required with --model")
        for lang in (args.source, args.target):
            bundle.vocab.check_language(lang)
        emb = analysis.shared_char_embeddings(bundle, pairs, args.source, args.target)
    else:
        raise UsageError("give --embeddings FILE or --model DIR")
    manifest_for(args, argv, [p for p in (args.pairs, args.embeddings) if p],
                 {"metric": args.metric, "ordered": not args.unordered,
                  "exclude_query": args.exclude_query})
    report = analysis.char_analogy_accuracy(emb, pairs, args.metric, ordered=not args.unordered,
                                            exclude_query=args.exclude_query)
    emit(report.queries, report.summary(), args.format)
    if args.figures:
        plots.analogy_ranks(report, os.path.join(args.figures, "analogy_ranks.png"))
    return 0


def cmd_neighbors(args, argv):
    bundle = trainer.load_model(args.model)
    for lang in (args.source, args.target):
        bundle.vocab.check_language(lang)
    target = load_conllu(args.target_corpus, args.target)
    words = sorted({t.form for s in target for t in s.tokens})
    manifest_for(args, argv, [args.target_corpus], {"k": args.k, "metric": args.metric})
    records, lines = [], []
    for query in args.words:
        top = analysis.nearest_words(query, args.source, args.k, bundle, words, args.target,
                                     args.metric)
        records.append({"query": query, "neighbors": [{"word": w, "distance": d} for w, d in top]})
        lines.append(analysis.format_neighbors(query, top))
    emit(records, "\n".join(lines), args.format)
    return 0


def cmd_pos_errors(args, argv):
    bundle = trainer.load_model(args.model)
    lang = pick_language(bundle, args.language)
    manifest_for(args, argv, [args.input], {"decoder": args.decoder})
    corpus = load_conllu(args.input, lang)
    att = analysis.pos_error_attribution(bundle, corpus, args.decoder)
    records = [{"pos_ok": k[0], "head_ok": k[1], "label_ok": k[2], "tokens": v}
               for k, v in att.counts.items()]
    records += [{"rate": name, **r} for name, r in att.rates().items()]
    emit(records, att.summary(), args.format)
    if args.figures:
        plots.pos_attribution(att, os.path.join(args.figures, "pos_errors.png"))
    return 0


def cmd_decoders(args, argv):
    bundle = trainer.load_model(args.model)
    lang = pick_language(bundle, args.language)
    manifest_for(args, argv, [args.input], {"single_root": args.single_root})
    corpus = load_conllu(args.input, lang)
    scores = []
    for s in corpus:
        net, states = sentence_states(s, bundle)
        scores.append(score_heads(states, net.parser))
    report = decoder.compare_decoders(scores, [s.heads for s in corpus], args.single_root)
    emit(report.sentences, report.summary(), args.format)
    if args.figures:
        plots.decoder_deltas(report, os.path.join(args.figures, "decoder_deltas.png"))
    return 0


def cmd_synth(args, argv):
    from .synthetic import encipher, generate_treebank

    sents = generate_treebank(args.n, args.seed, args.language)
    if args.cipher:
        sents = encipher(sents, args.language)
    text = write_conllu(sents)
    if args.output:
        with open(args.output, "w", encoding="utf-8") as fh:
            fh.write(text)
    else:
        sys.stdout.write(text)
    return 0


# --- parser ---------------------------------------------------------------

def build_parser():
    p = argparse.ArgumentParser(prog="charparser", description=__doc__.splitlines()[0])
    p.add_argument("--version", action="version", version=f"%(prog)s {tool_version()}")
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True)

    def common(sp, model=True):
        if model:
            sp.add_argument("--model", required=True, help="directory written by train")
        sp.add_argument("--manifest", help="write a run manifest here")
        sp.add_argument("--format", choices=("text", "jsonl"), default="text")

    def decoding(sp):
        sp.add_argument("--decoder", choices=("greedy", "cle"), default="greedy")
        sp.add_argument("--single-root", action="store_true", help="CLE: exactly one root child")

    t = sub.add_parser("train", help="train a parser on one or more languages")
    t.add_argument("--train", action="append", type=lang_path, metavar="LANG=PATH",
                   help="training treebank; repeatable, the first language is the main one")
    t.add_argument("--dev", action="append", type=lang_path, metavar="LANG=PATH")
    t.add_argument("--share", type=sharing_arg, default=SharingSpec(),
                   help="reader,tagger,pos,parser subset, 'all' or 'none'")
    t.add_argument("--config", help="key = value file (model and training knobs)")
    t.add_argument("--preset", default="full", help="model widths: full or toy")
    t.add_argument("--recipe", default="reference",
                   help="optimizer settings: reference, or desk for tiny corpora")
    t.add_argument("--epochs", type=int)
    t.add_argument("--patience", type=int)
    t.add_argument("--batch-size", dest="batch_size", type=int)
    t.add_argument("--seed", type=int, default=0)
    t.add_argument("--out", required=True)
    t.add_argument("--workers", type=int, default=1)
    t.add_argument("--figures", help="directory for learning-curve plots")
    t.set_defaults(func=cmd_train)

    ps = sub.add_parser("parse", help="parse a CoNLL-U file")
    common(ps)
    ps.add_argument("--input", required=True)
    ps.add_argument("--language")
    ps.add_argument("--output")
    decoding(ps)
    ps.set_defaults(func=cmd_parse)

    e = sub.add_parser("eval", help="UAS/LAS against a gold file")
    common(e, model=False)
    e.add_argument("--gold", required=True)
    e.add_argument("--system", help="predicted CoNLL-U")
    e.add_argument("--model", help="parse the gold file with this model instead")
    e.add_argument("--language")
    e.add_argument("--no-punct", action="store_true", help="skip PUNCT tokens")
    decoding(e)
    e.set_defaults(func=cmd_eval)

    a = sub.add_parser("analyze", help="analyses of a trained model")
    asub = a.add_subparsers(dest="analysis", required=True)

    an = asub.add_parser("analogy", help="cross-script character analogies")
    common(an, model=False)
    an.add_argument("--model")
    an.add_argument("--embeddings", help="symbol<TAB>vector file instead of a model")
    an.add_argument("--source")
    an.add_argument("--target")
    an.add_argument("--pairs", help="src<TAB>tgt letter pairs (default: bundled Polish-Russian list)")
    an.add_argument("--metric", choices=("cosine", "euclidean"), default="cosine")
    an.add_argument("--unordered", action="store_true")
    an.add_argument("--exclude-query", action="store_true", help="drop r1 from its own candidates")
    an.add_argument("--figures")
    an.set_defaults(func=cmd_analogy)

    nb = asub.add_parser("neighbors", help="nearest target-language words")
    common(nb)
    nb.add_argument("--source", required=True)
    nb.add_argument("--target", required=True)
    nb.add_argument("--target-corpus", required=True, help="CoNLL-U supplying the target words")
    nb.add_argument("-k", type=int, default=7)
    nb.add_argument("--metric", choices=("cosine", "euclidean"), default="cosine")
    nb.add_argument("words", nargs="+")
    nb.set_defaults(func=cmd_neighbors)

    pe = asub.add_parser("pos-errors", help="POS correctness against head/label correctness")
    common(pe)
    pe.add_argument("--input", required=True)
    pe.add_argument("--language")
    pe.add_argument("--decoder", choices=("greedy", "cle"), default="greedy")
    pe.add_argument("--figures")
    pe.set_defaults(func=cmd_pos_errors)

    dc = asub.add_parser("decoders", help="greedy against CLE on a parsed set")
    common(dc)
    dc.add_argument("--input", required=True)
    dc.add_argument("--language")
    dc.add_argument("--single-root", action="store_true")
    dc.add_argument("--figures")
    dc.set_defaults(func=cmd_decoders)

    sy = sub.add_parser("synth", help="write a synthetic toy treebank")
    sy.add_argument("--n", type=int, default=20)
    sy.add_argument("--seed", type=int, default=0)
    sy.add_argument("--language", default="syn")
    sy.add_argument("--cipher", action="store_true", help="map letters to Cyrillic")
    sy.add_argument("--output")
    sy.set_defaults(func=cmd_synth)
    return p


def main(argv=None):
    argv = sys.argv[1:] if argv is None else list(argv)
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args, ["charparser", *argv])
    except UsageError as exc:
        parser.print_usage(sys.stderr)
        print(f"charparser: error: {exc}", file=sys.stderr)
        return 2
    except UnknownLanguageError as exc:
        print(f"charparser: {exc}", file=sys.stderr)
        return 1
    except (OSError, ValueError, KeyError, NonFiniteError, trainer.DivergenceError) as exc:
        print(f"charparser: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())

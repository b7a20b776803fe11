"""Single- and multi-language training with early stopping on the main language."""

from __future__ import annotations

import json
import logging
import math
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from . import numcore as nc
from .analysis import attachment_scores
from .model import ModelBundle, ModelConfig, SharingSpec, batch_loss
from .treebank import build_vocabularies, encode_sentence, language_rng, make_batches, write_vocab

log = logging.getLogger(__name__)


class DivergenceError(RuntimeError):
    """Training produced a non-finite loss or gradient."""


# Small data, small model: per-epoch decay of 0.95 wipes out what a 20-sentence
# epoch learns, and epsilon at 1e-8 makes Adadelta crawl.
DESK_RECIPE = {"batch_size": 2, "weight_decay": 1.0, "epsilon_start": 1e-6, "epsilon_end": 1e-8}


@dataclass
class TrainConfig:
    languages: list
    sharing: SharingSpec = field(default_factory=SharingSpec)
    batch_size: int = 8
    epochs: int = 50
    eval_every: int = 1
    patience: int = 10
    seed: int = 0
    rho: float = 0.95
    epsilon_start: float = 1e-8
    epsilon_end: float = 1e-12
    clip_decay: float = 0.99
    clip_multiplier: float = 2.0
    weight_decay: float = 0.95
    language_weights: dict = field(default_factory=dict)
    restore_best: bool = True
    freeze: bool = False
    decoder: str = "greedy"
    workers: int = 1

    def __post_init__(self):
        if not self.languages:
            raise ValueError("need at least one language")
        if self.patience < 1:
            raise ValueError("patience must be >= 1")
        if self.batch_size < 1 or self.epochs < 1 or self.eval_every < 1:
            raise ValueError("batch_size, epochs and eval_every must be >= 1")
        if not 0.0 < self.weight_decay <= 1.0:
            raise ValueError("weight_decay must be in (0, 1]")
        if isinstance(self.sharing, str):
            self.sharing = SharingSpec.parse(self.sharing)

    @property
    def main(self):
        return self.languages[0]


@dataclass
class TrainState:
    epoch: int = 0
    best_uas: float = -1.0
    best_las: float = -1.0
    best_epoch: int = -1
    since_improvement: int = 0
    evaluations: int = 0
    checkpoint: str | None = None
    log: list = field(default_factory=list)


@dataclass
class TrainResult:
    bundle: ModelBundle
    state: TrainState

    @property
    def log(self):
        return self.state.log


def instantiate_sharing(spec, languages, vocab, config=None, seed=0):
    """Build per-language parsers, aliasing the subnetworks that ``spec`` shares."""
    return ModelBundle(config or ModelConfig(), vocab, spec, languages, seed)


def evaluate_checkpoint(model, dev, decoder_name="greedy", include_punct=True, workers=1):
    """Per-language attachment scores with dropout off.

    ``model`` is anything with ``predict(sentence, decoder_name)``.
    """
    out = {}
    for lang, sents in dev.items():
        if not len(sents):
            raise ValueError(f"no evaluation sentences for {lang!r}")
        if workers > 1:
            with ThreadPoolExecutor(workers) as pool:
                preds = list(pool.map(lambda s: model.predict(s, decoder_name), sents))
        else:
            preds = [model.predict(s, decoder_name) for s in sents]
        out[lang] = attachment_scores(preds, sents, include_punct)
    return out


def _apply_updates(bundle, grads, opt, frozen):
    if not frozen:
        nc.adadelta_step(bundle.parameters(), opt, grads)


def train(config, model_config, corpora, dev=None, vocab=None, out_dir=None, callback=None):
    """Train on ``corpora`` (language -> sentences); returns the best bundle and its log.

    Every batch sums the per-language losses.  Each language's gradient is
    clipped against its own running norm before the sum, then one Adadelta
    step is taken.  Weight decay and epsilon annealing happen once per epoch.
    """
    languages = list(config.languages)
    missing = [lang for lang in languages if lang not in corpora]
    if missing:
        raise ValueError(f"no training data for {missing}")
    if dev is None:
        log.warning("no development data; early stopping on training UAS")
        dev = {lang: corpora[lang] for lang in languages}
    if config.main not in dev:
        raise ValueError(f"no development data for the main language {config.main!r}")
    if vocab is None:
        vocab = build_vocabularies({lang: corpora[lang] for lang in languages})
    bundle = instantiate_sharing(config.sharing, languages, vocab, model_config, config.seed)
    params = bundle.parameters()
    encoded = {lang: [encode_sentence(s, vocab) for s in corpora[lang]] for lang in languages}
    batches = make_batches(encoded, config.batch_size, config.seed)
    steps = math.ceil(max(len(v) for v in encoded.values()) / config.batch_size)
    opt = nc.AdadeltaState(rho=config.rho, epsilon_start=config.epsilon_start,
                           epsilon_end=config.epsilon_end)
    clips = {lang: nc.ClipState(config.clip_decay, config.clip_multiplier) for lang in languages}
    rngs = {lang: language_rng(config.seed, lang, "dropout") for lang in languages}
    weights = {lang: float(config.language_weights.get(lang, 1.0)) for lang in languages}
    lang_params = {lang: bundle.parameters(lang) for lang in languages}
    state = TrainState()
    best = bundle.state()
    metrics_fh = None
    if out_dir is not None:
        os.makedirs(out_dir, exist_ok=True)
        save_model(bundle, out_dir, checkpoint=False)
        metrics_fh = open(os.path.join(out_dir, "metrics.jsonl"), "w", encoding="utf-8")
        state.checkpoint = os.path.join(out_dir, "best.npz")

    def keep_best():
        nonlocal best
        best = bundle.state()
        if state.checkpoint:
            save_checkpoint(bundle, state.checkpoint)

    try:
        for epoch in range(config.epochs):
            state.epoch = epoch
            opt.anneal(epoch, config.epochs)
            sums = {lang: np.zeros(3) for lang in languages}
            for _ in range(steps):
                batch = next(batches)
                grads = {p.name: np.zeros_like(p.value) for p in params}
                for lang, sents in batch.sentences.items():
                    own = lang_params[lang]
                    for p in own:
                        p.zero_grad()
                    try:
                        with nc.Tape() as tape:
                            terms = batch_loss(sents, bundle, lang, True, rngs[lang])
                            loss = nc.scale(terms.total, weights[lang])
                            tape.backward(loss)
                    except nc.NonFiniteError as exc:
                        raise DivergenceError(f"epoch {epoch}, language {lang}: {exc}") from exc
                    nc.clip_gradients(own, clips[lang])
                    for p in own:
                        grads[p.name] += p.grad
                    sums[lang] += terms.values()[1:]
                try:
                    _apply_updates(bundle, grads, opt, config.freeze)
                except nc.NonFiniteError as exc:
                    raise DivergenceError(f"epoch {epoch}: {exc}") from exc
            if not config.freeze:
                nc.weight_decay(params, config.weight_decay)
            if (epoch + 1) % config.eval_every:
                continue
            scores = evaluate_checkpoint(bundle, dev, config.decoder, workers=config.workers)
            state.evaluations += 1
            main_uas, main_las = scores[config.main].uas, scores[config.main].las
            if (main_uas, main_las) > (state.best_uas, state.best_las):
                state.best_uas, state.best_las = main_uas, main_las
                state.best_epoch, state.since_improvement = epoch, 0
                keep_best()
            else:
                state.since_improvement += 1
            for lang in scores:
                rec = {"epoch": epoch, "language": lang, "UAS": scores[lang].uas,
                       "LAS": scores[lang].las,
                       **dict(zip(("L_h", "L_l", "L_t"), (sums[lang] / steps).tolist())),
                       "best_UAS": state.best_uas}
                state.log.append(rec)
                if metrics_fh:
                    metrics_fh.write(json.dumps(rec) + "\n")
                    metrics_fh.flush()
            log.info("epoch %d: %s UAS %.2f (best %.2f @ %d)", epoch, config.main, main_uas,
                     state.best_uas, state.best_epoch)
            if callback is not None:
                callback(epoch, scores, state)
            if state.since_improvement >= config.patience:
                log.info("early stop after %d evaluations", state.evaluations)
                break
    except DivergenceError:
        bundle.load_state(best)
        raise
    finally:
        if metrics_fh:
            metrics_fh.close()
    if config.restore_best:
        bundle.load_state(best)
    return TrainResult(bundle, state)


# --- persistence ----------------------------------------------------------

def save_checkpoint(bundle, path):
    cfg_text = bundle.config.to_text()
    nc.save_checkpoint(path, bundle.parameters(),
                       {"config_hash": nc.config_hash(cfg_text), "languages": bundle.languages,
                        "sharing": str(bundle.sharing)})


def save_model(bundle, out_dir, checkpoint=True):
    """Write config, vocabulary and model card (and the parameters) into ``out_dir``."""
    os.makedirs(out_dir, exist_ok=True)
    text = bundle.config.to_text()
    text += f"languages = {','.join(bundle.languages)}\nsharing = {bundle.sharing}\n"
    with open(os.path.join(out_dir, "model.cfg"), "w", encoding="utf-8") as fh:
        fh.write(text)
    write_vocab(bundle.vocab, os.path.join(out_dir, "vocab.tsv"))
    with open(os.path.join(out_dir, "model_card.txt"), "w", encoding="utf-8") as fh:
        fh.write(bundle.model_card())
    if checkpoint:
        save_checkpoint(bundle, os.path.join(out_dir, "best.npz"))


def load_model(path):
    """Load a directory written by :func:`save_model` / :func:`train`."""
    from .model import parse_kv
    from .treebank import read_vocab

    with open(os.path.join(path, "model.cfg"), encoding="utf-8") as fh:
        raw = parse_kv(fh.read())
    languages = raw.pop("languages").split(",")
    sharing = SharingSpec.parse(raw.pop("sharing"))
    config = ModelConfig.from_text("\n".join(f"{k} = {v}" for k, v in raw.items()))
    vocab = read_vocab(os.path.join(path, "vocab.tsv"))
    bundle = ModelBundle(config, vocab, sharing, languages)
    arrays, meta = nc.load_checkpoint(os.path.join(path, "best.npz"))
    if meta.get("config_hash") != nc.config_hash(config.to_text()):
        raise ValueError(f"{path}: checkpoint was written for a different model config")
    bundle.load_state(arrays)
    return bundle

import numpy as np
import pytest

from charparser.model import ModelBundle, SharingSpec, toy_config
from charparser.synthetic import encipher, generate_treebank
from charparser.treebank import build_vocabularies


def tiny_config(**kw):
    base = dict(char_embed_dim=3, filters={1: 2, 2: 2, 3: 2, 4: 2}, reader_proj_dim=4,
                tagger_hidden=3, scorer_hidden=3, labeler_units=2, precision="float64")
    base.update(kw)
    return toy_config(**base)


@pytest.fixture
def corpora():
    return {"a": generate_treebank(12, 0, "a"), "b": encipher(generate_treebank(12, 1), "b")}


@pytest.fixture
def vocab(corpora):
    return build_vocabularies(corpora)


@pytest.fixture
def tiny_bundle(vocab):
    return ModelBundle(tiny_config(), vocab, SharingSpec(), ["a", "b"], seed=0)


@pytest.fixture
def rng():
    return np.random.default_rng(0)

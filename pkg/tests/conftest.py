import pytest

import conceptqa as cq
from conceptqa import data as data_mod
from conceptqa import model as model_mod
from conceptqa import synthetic
from conceptqa import tokenizer as tok
from conceptqa import training


@pytest.fixture(scope="session")
def builtin_dict():
    return cq.builtin_dictionary()


@pytest.fixture(scope="session")
def tiny_fixture():
    return synthetic.generate_records(16, seed=7)


@pytest.fixture(scope="session")
def tiny_vocab(tiny_fixture):
    return tok.train_vocab(synthetic.corpus_texts(tiny_fixture), 256)


@pytest.fixture(scope="session")
def tiny_encoded(tiny_fixture, tiny_vocab, builtin_dict):
    encoded, _ = data_mod.encode_dataset(tiny_fixture.records, tiny_vocab, builtin_dict)
    return encoded


@pytest.fixture(scope="session")
def tiny_model(tiny_vocab):
    cfg = model_mod.ModelConfig(layers=2, hidden=32, heads=4, vocab_size=len(tiny_vocab))
    return model_mod.build_model(cfg, seed=0)


@pytest.fixture(scope="session")
def memorized():
    """A small model trained to memorize its 8-record training set."""
    fix = synthetic.generate_records(8, seed=21)
    vocab = tok.train_vocab(synthetic.corpus_texts(fix), 192)
    dictionary = cq.builtin_dictionary()
    encoded, _ = data_mod.encode_dataset(fix.records, vocab, dictionary)
    cfg = model_mod.ModelConfig(layers=2, hidden=32, heads=4, vocab_size=len(vocab))
    model = model_mod.build_model(cfg, seed=0, dictionary_version=dictionary.version)
    tcfg = training.TrainConfig(learning_rate=1e-2, warmup_steps=20, seed=0)
    model = training.train_epochs_simple(model, encoded, tcfg, max_steps=200,
                                         total_steps=200)
    return model, encoded, vocab, dictionary

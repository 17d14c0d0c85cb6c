import itertools
import logging
import math

import numpy as np
import pytest

from locolm.sampler import TrainingExample
from locolm.ngram import (NGramModel, UndefinedDistributionError, train_ngram,
                          prob, distribution, predict_topk, sequence_logprob,
                          save_ngram, load_ngram)

PAD = 5

def _ex(context, target):
    return TrainingExample(context, (), target)

EXAMPLES = [_ex((PAD, 0), 1), _ex((PAD, 0), 1), _ex((PAD, 0), 2),
            _ex((0, 1), 3), _ex((1, 3), 4), _ex((PAD, PAD), 0)]

@pytest.fixture(scope="module")
def model():
    return train_ngram(EXAMPLES, k=0.1, pad_id=PAD)

def test_counts(model):
    assert model.n == 3 and model.V == 5
    assert model.total((PAD, 0)) == 3
    assert prob(model, (PAD, 0), 1) == pytest.approx(2.1 / 3.5)
    assert prob(model, (PAD, 0), 4) == pytest.approx(0.1 / 3.5)

def test_normalized(model):
    for history in itertools.product(range(PAD + 1), repeat=2):
        total = sum(prob(model, history, t) for t in range(model.V))
        assert total == pytest.approx(1.0, abs=1e-9)
        assert distribution(model, history).sum() == \
            pytest.approx(1.0, abs=1e-9)

def test_unseen_history_is_uniform(model):
    np.testing.assert_allclose(distribution(model, (4, 4)),
                               np.full(5, 0.2))

def test_history_padding(model):
    assert model.history([0]) == (PAD, 0)
    assert model.history([9, 8, 0, 1]) == (0, 1)
    assert prob(model, [0], 1) == prob(model, (PAD, 0), 1)

def test_unsmoothed():
    model = train_ngram(EXAMPLES, k=0, pad_id=PAD)
    assert prob(model, (PAD, 0), 1) == pytest.approx(2 / 3)
    with pytest.raises(UndefinedDistributionError):
        prob(model, (4, 4), 0)
    with pytest.raises(ValueError, match="nonnegative"):
        NGramModel(3, {}, 5, -1.0, PAD)

def test_bad_target(model):
    with pytest.raises(ValueError, match="not a predictable class"):
        prob(model, (PAD, 0), PAD)

def test_train_errors():
    with pytest.raises(ValueError, match="without examples"):
        train_ngram([], pad_id=PAD)
    with pytest.raises(ValueError, match="one context length"):
        train_ngram([_ex((0,), 1), _ex((0, 1), 2)], pad_id=PAD)

def test_predict_topk(model):
    assert predict_topk(model, (PAD, 0), 2) == [1, 2]
    # ties rank by ascending class id
    assert predict_topk(model, (4, 4), 3) == [0, 1, 2]
    assert PAD not in predict_topk(model, (4, 4), 5)
    with pytest.raises(ValueError):
        predict_topk(model, (PAD, 0), 0)

def test_sequence_logprob(model):
    tokens = [0, 1, 3, 4]
    expected = sum(math.log(prob(model, h, t)) for h, t in
                   [((PAD, PAD), 0), ((PAD, 0), 1), ((0, 1), 3),
                    ((1, 3), 4)])
    assert sequence_logprob(model, tokens) == pytest.approx(expected)
    with pytest.raises(ValueError):
        sequence_logprob(model, [])

def test_zero_probability(caplog):
    model = train_ngram(EXAMPLES, k=0, pad_id=PAD)
    with caplog.at_level(logging.WARNING):
        assert sequence_logprob(model, [0, 4]) == -math.inf
    assert "zero probability" in caplog.text

def test_roundtrip(model, tmp_path):
    path = tmp_path / "model.txt"
    save_ngram(model, path)
    text = path.read_text()
    assert text.splitlines()[0] == "# n=3 k=0.1 V=5 pad=5"
    assert text.splitlines()[1] == "0 1\t3\t1"
    assert load_ngram(path) == model

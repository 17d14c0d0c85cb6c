r"""
Count-based n-gram language model with additive smoothing.

The probability of a sequence factors into next-word conditionals, each
conditioned only on the :math:`n-1` most recent classes :math:`h_q`:

.. math::

    Pr(w_1, \ldots, w_N) \approx \prod_{q=1}^{N} Pr(w_q \mid h_q),
    \qquad
    Pr(t \mid h) = \frac{c(h, t) + k}{c(h) + kV}

where :math:`V` counts every class except padding. Histories are the same
left-padded windows the neural model sees, so both models are scored on
identical examples. Location types are ignored.

Model Dump Format
.................

Plain text, diffable. A header line ``# n=5 k=0.1 V=1001 pad=1001`` followed by
one ``h1 h2 h3 h4<TAB>target<TAB>count`` line per stored count, sorted by
history then target.
"""

import logging
import math
from collections import Counter
from typing import Iterable, Sequence

import numpy as np

from .util import open_text

logger = logging.getLogger(__name__)

#: Default additive smoothing constant
DEFAULT_K = 0.1

class UndefinedDistributionError(ValueError):
    "Unsmoothed model asked about a history it never saw"

class NGramModel:
    """
    Immutable n-gram counts over class ids.

    Attributes:
        n (int): order; histories hold ``n - 1`` classes
        counts (dict): history tuple → :class:`~collections.Counter` of targets
        V (int): number of predictable classes (all but padding)
        k (float): additive smoothing constant
        pad_id (int): padding class, also ``V``
    """

    def __init__(self, n: int, counts: dict, V: int, k: float, pad_id: int):
        if k < 0:
            raise ValueError("smoothing constant must be nonnegative")
        self.n, self.V, self.k, self.pad_id = n, V, k, pad_id
        self.counts = {h: Counter({t: c for t, c in targets.items() if c > 0})
                       for h, targets in counts.items()}
        self._totals = {h: sum(targets.values())
                        for h, targets in self.counts.items()}

    def history(self, classes: Sequence[int]) -> tuple:
        "Left-pad or truncate `classes` to a history of length ``n - 1``"
        h = tuple(classes)[-(self.n - 1):] if self.n > 1 else ()
        return (self.pad_id,) * (self.n - 1 - len(h)) + h

    def total(self, history) -> int:
        return self._totals.get(self.history(history), 0)

    def __eq__(self, other):
        return (isinstance(other, NGramModel)
                and (self.n, self.V, self.k, self.pad_id, self.counts)
                == (other.n, other.V, other.k, other.pad_id, other.counts))

def train_ngram(examples: Iterable, k: float = DEFAULT_K, *,
                pad_id: int) -> NGramModel:
    """
    Count every (context, target) pair of `examples`. `pad_id` is the padding
    class of the vocabulary the examples were encoded with; the model predicts
    the ``pad_id`` classes below it.
    """
    counts, n = {}, None
    for ex in examples:
        h = tuple(ex.context)
        n = len(h) + 1 if n is None else n
        if len(h) != n - 1:
            raise ValueError("examples must share one context length")
        counts.setdefault(h, Counter())[ex.target] += 1
    if n is None:
        raise ValueError("cannot train an n-gram model without examples")
    return NGramModel(n, counts, pad_id, k, pad_id)

def prob(model: NGramModel, history: Sequence[int], target: int) -> float:
    """
    Smoothed :math:`Pr(target \\mid history)`. An unseen history gets the
    uniform distribution when ``k > 0``.

    raises:
        UndefinedDistributionError: ``k == 0`` and `history` was never seen
    """
    if not 0 <= target < model.V:
        raise ValueError(f"target {target} is not a predictable class")
    h = model.history(history)
    total = model._totals.get(h, 0)
    if total == 0 and model.k == 0:
        raise UndefinedDistributionError(f"history {h} unseen and k = 0")
    count = model.counts.get(h, {}).get(target, 0)
    return (count + model.k) / (total + model.k * model.V)

def distribution(model: NGramModel, history: Sequence[int]) -> np.ndarray:
    "Probabilities of all `V` predictable classes after `history`"
    h = model.history(history)
    total = model._totals.get(h, 0)
    if total == 0 and model.k == 0:
        raise UndefinedDistributionError(f"history {h} unseen and k = 0")
    dist = np.full(model.V, model.k, dtype=np.float64)
    for t, c in model.counts.get(h, {}).items():
        dist[t] += c
    return dist / (total + model.k * model.V)

def predict_topk(model: NGramModel, history: Sequence[int],
                 k_best: int = 5) -> list:
    """
    The `k_best` most probable classes after `history`, most probable first;
    equal probabilities rank by ascending class id. Padding is never ranked.
    """
    if k_best < 1:
        raise ValueError("k_best must be at least 1")
    order = np.argsort(-distribution(model, history), kind="stable")
    return order[:k_best].tolist()

def sequence_logprob(model: NGramModel, tokens: Sequence[int]) -> float:
    """
    Natural log probability of the class sequence `tokens`, each position
    conditioned on its left-padded history. A zero probability (possible only
    without smoothing) yields ``-inf`` and a warning.
    """
    if not tokens:
        raise ValueError("cannot score an empty sequence")
    padded = [model.pad_id] * (model.n - 1) + list(tokens)
    total = 0.0
    for q, target in enumerate(tokens):
        p = prob(model, padded[q:q + model.n - 1], target)
        if p == 0.0:
            logger.warning("zero probability at position %d", q)
            return -math.inf
        total += math.log(p)
    return total

def save_ngram(model: NGramModel, path):
    with open_text(path, "w") as fd:
        fd.write(f"# n={model.n} k={model.k!r} V={model.V} "
                 f"pad={model.pad_id}\n")
        for h in sorted(model.counts):
            hist = " ".join(map(str, h))
            for t in sorted(model.counts[h]):
                fd.write(f"{hist}\t{t}\t{model.counts[h][t]}\n")

def load_ngram(path) -> NGramModel:
    with open_text(path) as fd:
        header = dict(item.split("=") for item in
                      fd.readline().lstrip("#").split())
        counts = {}
        for line in fd:
            hist, t, c = line.rstrip("\n").split("\t")
            h = tuple(int(x) for x in hist.split())
            counts.setdefault(h, Counter())[int(t)] = int(c)
    return NGramModel(int(header["n"]), counts, int(header["V"]),
                      float(header["k"]), int(header["pad"]))

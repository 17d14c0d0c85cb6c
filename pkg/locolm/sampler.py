"""
Training examples and class rebalancing.

Each post yields one :class:`TrainingExample` per token after the first: the
preceding `window` tokens as context (left-padded), the multi-hot location
vector of the post and the token itself as target.

Word frequencies are heavily skewed, so the training side is rebalanced with a
:class:`ResamplePlan`. With :math:`\\mu` and :math:`\\sigma` the mean and
population standard deviation of the per-class support,

- classes above :math:`\\lceil\\mu + \\sigma\\rceil` are undersampled to it
  (without replacement)
- classes may be oversampled (by duplication, with replacement) but never
  beyond 3 times their original support, nor past the undersampling bound

The dataset is split *before* resampling so duplicated examples never leak
into the held-out side.
"""

import json
import logging
import math
from collections import Counter, namedtuple
from typing import Mapping, Sequence

import numpy as np

from .vocab import encode
from .util import open_text

logger = logging.getLogger(__name__)

#: Number of preceding tokens used as context
WINDOW = 4

#: Largest allowed oversampling factor
OVERSAMPLE_CAP = 3

class PlanMismatchError(ValueError):
    pass

class TrainingExample(namedtuple("TrainingExample",
                                 "context, place_vector, target")):
    "Context class ids, multi-hot location vector and target class id"

    __slots__ = ()

    def __new__(cls, context, place_vector, target):
        return super().__new__(cls, tuple(context), tuple(place_vector),
                               int(target))

Batch = namedtuple("Batch", "context, place, target")

def stack_examples(examples: Sequence[TrainingExample]) -> Batch:
    """
    Stack examples into arrays: ``context`` (N, window) of class ids,
    ``place`` (N, width) of 0/1 floats and ``target`` (N,) of class ids.
    """
    if isinstance(examples, Batch):
        return examples
    n = len(examples)
    width = len(examples[0].place_vector) if n else 0
    window = len(examples[0].context) if n else WINDOW
    return Batch(
        np.array([ex.context for ex in examples], dtype=np.int64)
            .reshape(n, window),
        np.array([ex.place_vector for ex in examples], dtype=np.float64)
            .reshape(n, width),
        np.array([ex.target for ex in examples], dtype=np.int64),
    )

def window_examples(post, v, catalog, frequent_only: bool = False,
                    window: int = WINDOW) -> list:
    """
    One example per token position ``t >= 1`` of `post`: the encoded previous
    `window` tokens, left-padded with the pad class, predicting the encoded
    token at `t`. The place vector is the post's multi-hot encoding over the
    full `catalog`, or over its frequent subset when `frequent_only`.
    """
    if len(post.tokens) < 2:
        raise ValueError(f"post {post.id} has fewer than 2 tokens")
    ids = [encode(v, tok) for tok in post.tokens]
    padded = [v.pad_id] * window + ids
    place = catalog.encode(post.place_types, frequent_only)
    return [TrainingExample(padded[t:t + window], place, ids[t])
            for t in range(1, len(ids))]

_planbase = namedtuple("ResamplePlan",
                       "original, targets, mu, sigma, oversample_cap")
class ResamplePlan(_planbase):
    """
    Per-class target counts. `original` and `targets` map class id to count;
    classes absent from `targets` keep their original count.
    """

    __slots__ = ()

    @property
    def bound(self) -> int:
        "The undersampling bound :math:`\\lceil\\mu + \\sigma\\rceil`"
        return math.ceil(self.mu + self.sigma)

    def target(self, cls) -> int:
        return self.targets.get(cls, self.original[cls])

    def total(self) -> int:
        return sum(self.target(c) for c in self.original)

def compute_plan(class_counts: Mapping[int, int],
                 oversample_to_mean: bool = False,
                 requests: Mapping[int, int] = None) -> ResamplePlan:
    """
    Build a resampling plan from per-class support.

    Classes above :math:`\\lceil\\mu + \\sigma\\rceil` are reduced to it. A
    class may ask for more examples through `requests`; with
    `oversample_to_mean` every class below the mean asks for
    :math:`\\lceil\\mu\\rceil`. Requests are clipped to 3 times the original
    support and to the undersampling bound. Classes with no support are
    ignored.

    Examples:

    >>> plan = compute_plan({0: 10, 1: 2, 2: 3})
    >>> plan.bound, plan.target(0), plan.target(1)
    (9, 9, 2)
    """
    original = {c: int(n) for c, n in class_counts.items() if n > 0}
    if not original:
        raise ValueError("cannot plan resampling without any support")
    support = np.array([original[c] for c in sorted(original)],
                       dtype=np.float64)
    mu, sigma = float(support.mean()), float(support.std())
    bound = math.ceil(mu + sigma)
    wanted = dict(requests or {})
    if oversample_to_mean:
        for c, n in original.items():
            if n < mu:
                wanted.setdefault(c, math.ceil(mu))
    targets = {}
    for c, n in sorted(original.items()):
        if n > bound:
            targets[c] = bound
        elif wanted.get(c, n) > n:
            targets[c] = min(wanted[c], OVERSAMPLE_CAP * n, max(n, bound))
    return ResamplePlan(original, targets, mu, sigma, OVERSAMPLE_CAP)

def resample(examples: Sequence[TrainingExample], plan: ResamplePlan,
             seed: int = 0) -> list:
    """
    Draw ``plan.target(c)`` examples of every class `c`: a subset without
    replacement when undersampling, all originals plus duplicates drawn with
    replacement when oversampling. Classes are processed in ascending id
    order and the result is shuffled, all from one generator seeded with
    `seed`, so equal seeds give identical output.

    raises:
        PlanMismatchError: `plan` was built from different class counts
    """
    by_class = {}
    for i, ex in enumerate(examples):
        by_class.setdefault(ex.target, []).append(i)
    counts = {c: len(idx) for c, idx in by_class.items()}
    if counts != plan.original:
        raise PlanMismatchError(
            "resample plan does not match the class counts of the examples")
    rng = np.random.default_rng(seed)
    chosen = []
    for c in sorted(by_class):
        idx = np.array(by_class[c])
        target = plan.target(c)
        if target > OVERSAMPLE_CAP * len(idx):
            raise PlanMismatchError(
                f"class {c}: target {target} exceeds the oversampling cap")
        if target <= len(idx):
            chosen.append(np.sort(rng.choice(idx, target, replace=False)))
        else:
            extra = rng.choice(idx, target - len(idx), replace=True)
            chosen.append(np.concatenate([idx, extra]))
    order = np.concatenate(chosen) if chosen else np.array([], dtype=int)
    rng.shuffle(order)
    logger.info("resampled %d examples to %d", len(examples), len(order))
    return [examples[i] for i in order]

def class_counts(examples: Sequence[TrainingExample]) -> Counter:
    return Counter(ex.target for ex in examples)

def write_plan(plan: ResamplePlan, path, meta: dict = None):
    "Dump `plan` as JSON for auditing: one entry per class"
    with open_text(path, "w") as fd:
        json.dump({
            "_meta": meta or {},
            "mu": plan.mu,
            "sigma": plan.sigma,
            "bound": plan.bound,
            "oversample_cap": plan.oversample_cap,
            "classes": [{"class": c, "original": n, "target": plan.target(c)}
                        for c, n in sorted(plan.original.items())],
        }, fd, indent=1)

def split_dataset(examples: Sequence, holdout_fraction: float = 0.10,
                  seed: int = 0) -> tuple:
    """
    Split `examples` into ``(train, validation)``. The validation side holds
    ``round(len * holdout_fraction)`` examples (at least one, and at least one
    is left for training). Both sides keep the input order.
    """
    if not 0 < holdout_fraction < 1:
        raise ValueError("holdout fraction must lie strictly between 0 and 1")
    n = len(examples)
    if n < 2:
        raise ValueError("need at least 2 examples to split")
    n_val = min(max(round(n * holdout_fraction), 1), n - 1)
    perm = np.random.default_rng(seed).permutation(n)
    held = np.zeros(n, dtype=bool)
    held[perm[:n_val]] = True
    train = [ex for ex, h in zip(examples, held) if not h]
    validation = [ex for ex, h in zip(examples, held) if h]
    return train, validation

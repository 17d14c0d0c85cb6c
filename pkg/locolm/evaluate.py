"""
Top-k evaluation of next-word predictors and comparison of model variants.

A predictor is anything that ranks the classes of an example; helpers wrap
the trained networks and the n-gram model. Accuracy is always measured on the
validation split *before* resampling, so it reflects the natural class
distribution.
"""

import logging
from collections import namedtuple
from typing import Callable, Mapping, Sequence

import numpy as np

from . import network, ngram
from .util import read_csv, write_csv

logger = logging.getLogger(__name__)

class EvalResult(namedtuple("EvalResult", "variant, top1, top5, n, by_location")):
    """
    Accuracy of one predictor.

    Attributes:
        variant (str): model name
        top1 (float): fraction of examples whose target ranks first
        top5 (float): fraction whose target is among the first five
        n (int): number of examples evaluated
        by_location (dict): location tag → ``(top1, top5, n)`` over the
            examples whose place vector carries that tag
    """

    __slots__ = ()

    def __new__(cls, variant, top1, top5, n, by_location=None):
        return super().__new__(cls, variant, top1, top5, n, by_location or {})

def topk_accuracy(predict: Callable, examples: Sequence, k: int) -> float:
    """
    Fraction of `examples` whose target is among the first `k` classes
    returned by ``predict(example, k)``.

    Examples:

    >>> from locolm.sampler import TrainingExample
    >>> examples = [TrainingExample((3,), (), 0), TrainingExample((3,), (), 2)]
    >>> topk_accuracy(lambda ex, k: [0, 1, 2][:k], examples, 1)
    0.5
    """
    if k < 1:
        raise ValueError("k must be at least 1")
    if not examples:
        raise ValueError("cannot measure accuracy on no examples")
    hits = sum(ex.target in predict(ex, k)[:k] for ex in examples)
    return hits / len(examples)

def _filter(examples, unk_id, exclude_unk):
    if not exclude_unk:
        return list(examples)
    return [ex for ex in examples if ex.target != unk_id]

def _by_location(hits, examples, catalog, frequent_only):
    if catalog is None:
        return {}
    tags = catalog.frequent_subset if frequent_only else catalog.types
    result = {}
    places = np.array([ex.place_vector for ex in examples], dtype=bool)
    if places.ndim != 2 or places.shape[1] != len(tags):
        return {}
    for j, tag in enumerate(tags):
        mask = places[:, j]
        if mask.any():
            result[tag] = (float(hits[mask, 0].mean()),
                           float(hits[mask].any(axis=1).mean()),
                           int(mask.sum()))
    return result

def _result(variant, hits, examples, catalog, frequent_only):
    logger.info("%s: top1 %.4f top5 %.4f over %d examples", variant,
                hits[:, 0].mean(), hits.any(axis=1).mean(), len(examples))
    return EvalResult(variant, float(hits[:, 0].mean()),
                      float(hits.any(axis=1).mean()), len(examples),
                      _by_location(hits, examples, catalog, frequent_only))

def evaluate_network(params, config, examples: Sequence, catalog=None,
                     exclude_unk: bool = False) -> EvalResult:
    """
    Top-1 and top-5 accuracy of a trained network on `examples`. With
    `exclude_unk` examples whose target is the unk class are left out. With a
    `catalog` a per-location breakdown is added; the examples' place vectors
    must then be encoded the way the variant sees them.
    """
    examples = _filter(examples, config.unk_id, exclude_unk)
    if not examples:
        raise ValueError("cannot measure accuracy on no examples")
    k = min(5, config.n_classes - 1)
    ranked = network.rank_classes(params, config, examples, k)
    targets = np.array([ex.target for ex in examples])
    hits = ranked == targets[:, None]
    return _result(config.variant, hits, examples, catalog,
                   config.frequent_only)

def evaluate_ngram(model, examples: Sequence, catalog=None,
                   exclude_unk: bool = False, unk_id: int = None,
                   variant: str = "ngram") -> EvalResult:
    "Like :func:`evaluate_network` for an n-gram model"
    unk_id = model.V - 1 if unk_id is None else unk_id
    examples = _filter(examples, unk_id, exclude_unk)
    if not examples:
        raise ValueError("cannot measure accuracy on no examples")
    k = min(5, model.V)
    cache = {}
    hits = np.zeros((len(examples), k), dtype=bool)
    for i, ex in enumerate(examples):
        h = model.history(ex.context)
        if h not in cache:
            cache[h] = ngram.predict_topk(model, h, k)
        hits[i] = np.array(cache[h]) == ex.target
    return _result(variant, hits, examples, catalog, False)

def compare_variants(results: Mapping[str, EvalResult]) -> list:
    """
    Rows ``(variant, top1, top5, delta_top1, delta_top5)`` with the deltas in
    percentage points relative to the baseline. The baseline comes first, the
    other variants follow by name.

    raises:
        KeyError: there is no baseline result
    """
    if "baseline" not in results:
        raise KeyError("comparison needs a baseline result")
    base = results["baseline"]
    names = ["baseline"] + sorted(n for n in results if n != "baseline")
    return [(name, results[name].top1, results[name].top5,
             100.0 * (results[name].top1 - base.top1),
             100.0 * (results[name].top5 - base.top5)) for name in names]

def convergence_log_merge(logs: Mapping[str, Sequence]) -> list:
    """
    Merge per-variant epoch logs (lists of
    :class:`~locolm.network.EpochMetrics`) into long-format rows
    ``(epoch, variant, metric, value)`` sorted by epoch, variant and metric.
    Logs covering different epochs are joined on the union of epochs and a
    warning is logged; missing cells are simply absent.
    """
    epochs = {name: {m.epoch for m in log} for name, log in logs.items()}
    if len({frozenset(e) for e in epochs.values()}) > 1:
        logger.warning("epoch logs cover different epochs: %s",
                       {n: len(e) for n, e in epochs.items()})
    rows = []
    for name, log in logs.items():
        for m in log:
            for metric in ("train_loss", "val_top1", "val_top5"):
                rows.append((m.epoch, name, metric, getattr(m, metric)))
    rows.sort(key=lambda r: (r[0], r[1], r[2]))
    return rows

_LOG_COLUMNS = ("epoch", "train_loss", "val_top1", "val_top5")

def write_metric_log(log: Sequence, path, meta: dict = None):
    write_csv(path, _LOG_COLUMNS,
              [(m.epoch, f"{m.train_loss:.6f}", f"{m.val_top1:.6f}",
                f"{m.val_top5:.6f}") for m in log], meta)

def read_metric_log(path) -> tuple:
    "Return ``(meta, log)`` of a metric log written by :func:`write_metric_log`"
    meta, rows = read_csv(path)
    return meta, [network.EpochMetrics(int(r["epoch"]), float(r["train_loss"]),
                                       float(r["val_top1"]),
                                       float(r["val_top5"])) for r in rows]

def write_results_csv(results: Mapping[str, EvalResult], path,
                      meta: dict = None):
    """
    Comparison table of :func:`compare_variants`, one row per variant. Without
    a baseline result the delta columns stay empty.
    """
    if "baseline" in results:
        table = compare_variants(results)
    else:
        table = [(n, r.top1, r.top5, None, None)
                 for n, r in sorted(results.items())]
    rows = [(name, f"{t1:.6f}", f"{t5:.6f}",
             "" if d1 is None else f"{d1:+.2f}",
             "" if d5 is None else f"{d5:+.2f}", results[name].n)
            for name, t1, t5, d1, d5 in table]
    write_csv(path, ("variant", "top1", "top5", "delta_top1_pp",
                     "delta_top5_pp", "n"), rows, meta)

def write_comparison(results: Mapping[str, EvalResult], stream):
    "Print the comparison as an aligned text table to `stream`"
    stream.write(f"{'variant':<10} {'top1':>7} {'top5':>7} "
                 f"{'Δtop1':>7} {'Δtop5':>7}\n")
    for name, t1, t5, d1, d5 in compare_variants(results):
        deltas = " " * 15 if name == "baseline" else f"{d1:+7.2f} {d5:+7.2f}"
        stream.write(f"{name:<10} {100 * t1:7.2f} {100 * t5:7.2f} {deltas}\n")

def write_location_csv(results: Mapping[str, EvalResult], path,
                       meta: dict = None):
    "Per-location accuracy of every variant"
    rows = []
    for name in sorted(results):
        for tag, (t1, t5, n) in sorted(results[name].by_location.items()):
            rows.append((name, tag, f"{t1:.6f}", f"{t5:.6f}", n))
    write_csv(path, ("variant", "location", "top1", "top5", "n"), rows, meta)

def write_long_csv(rows: Sequence, path, meta: dict = None):
    "Long-format rows of :func:`convergence_log_merge`"
    write_csv(path, ("epoch", "variant", "metric", "value"),
              [(e, v, m, f"{x:.6f}") for e, v, m, x in rows], meta)

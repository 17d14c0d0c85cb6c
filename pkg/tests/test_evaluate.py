import io
import logging
import math

import numpy as np
import pytest

from locolm.corpus import Post
from locolm.divergence import build_catalog
from locolm.sampler import TrainingExample
from locolm.network import ModelConfig, EpochMetrics, init_params
from locolm.ngram import train_ngram
from locolm.util import read_csv
from locolm.evaluate import (EvalResult, topk_accuracy, evaluate_network,
                             evaluate_ngram, compare_variants,
                             convergence_log_merge, write_metric_log,
                             read_metric_log, write_results_csv,
                             write_comparison, write_location_csv,
                             write_long_csv)

def _ex(target, context=(0,), place=()):
    return TrainingExample(context, place, target)

#: fixed ranking: 3 first, then 1, 0, 2
FIXED = [3, 1, 0, 2]

def _fixed(example, k):
    return FIXED[:k]

def test_hand_computed_accuracy():
    examples = [_ex(3), _ex(1), _ex(0), _ex(2)]
    assert topk_accuracy(_fixed, examples, 1) == 0.25
    assert topk_accuracy(_fixed, examples, 2) == 0.5
    assert topk_accuracy(_fixed, examples, 3) == 0.75
    assert topk_accuracy(_fixed, examples, 4) == 1.0

def test_accuracy_is_monotone_in_k():
    rng = np.random.default_rng(3)
    examples = [_ex(int(t)) for t in rng.integers(0, 4, size=50)]
    values = [topk_accuracy(_fixed, examples, k) for k in range(1, 5)]
    assert values == sorted(values)

def test_accuracy_errors():
    with pytest.raises(ValueError, match="at least 1"):
        topk_accuracy(_fixed, [_ex(0)], 0)
    with pytest.raises(ValueError, match="no examples"):
        topk_accuracy(_fixed, [], 1)

def test_uniform_ranker():
    V, n, k = 20, 10000, 5
    rng = np.random.default_rng(17)
    examples = [_ex(int(t)) for t in rng.integers(0, V, size=n)]

    def shuffled(example, k):
        return rng.permutation(V)[:k].tolist()

    p = k / V
    se = math.sqrt(p * (1 - p) / n)
    assert abs(topk_accuracy(shuffled, examples, k) - p) < 3 * se

def test_evaluate_network():
    posts = [Post(str(i), ["a"], {"bar"} if i % 2 else {"bar", "zoo"})
             for i in range(20)]
    catalog = build_catalog(posts, frequent_threshold=10)
    config = ModelConfig.for_variant("setup1", 12, catalog, embed_dim=4,
                                     lstm_cells=3, dense_units=5)
    params = init_params(config, seed=2)
    rng = np.random.default_rng(5)
    examples = []
    for i in range(30):
        tags = {"bar", "zoo"} if i % 3 else {"bar"}
        examples.append(TrainingExample(
            tuple(int(c) for c in rng.integers(0, 11, size=4)),
            catalog.encode(tags), int(rng.integers(0, 11))))
    result = evaluate_network(params, config, examples, catalog)
    assert result.variant == "setup1" and result.n == 30
    assert 0.0 <= result.top1 <= result.top5 <= 1.0
    assert set(result.by_location) == {"bar", "zoo"}
    assert result.by_location["bar"][2] == 30
    assert result.by_location["zoo"][2] == 20
    # unk is class 10
    known = evaluate_network(params, config, examples, exclude_unk=True)
    assert known.n == sum(ex.target != 10 for ex in examples)
    assert known.by_location == {}

def test_evaluate_ngram():
    # every history has one continuation
    examples = [_ex(t, (c, c + 1)) for c in range(4) for t in [c + 2] * 3]
    model = train_ngram(examples, k=0.1, pad_id=6)
    result = evaluate_ngram(model, examples)
    assert (result.variant, result.top1, result.top5, result.n) == \
        ("ngram", 1.0, 1.0, 12)
    # unk is class 5
    assert evaluate_ngram(model, examples, exclude_unk=True).n == 9
    with pytest.raises(ValueError):
        evaluate_ngram(model, [_ex(5, (0, 1))], exclude_unk=True)

RESULTS = {"baseline": EvalResult("baseline", 0.30, 0.50, 100),
           "setup1": EvalResult("setup1", 0.32, 0.55, 100),
           "setup3": EvalResult("setup3", 0.29, 0.50, 100)}

def test_compare_variants():
    table = compare_variants(RESULTS)
    assert [row[0] for row in table] == ["baseline", "setup1", "setup3"]
    assert table[0][3:] == (0.0, 0.0)
    assert table[1][3] == pytest.approx(2.0)
    assert table[1][4] == pytest.approx(5.0)
    assert table[2][3] == pytest.approx(-1.0)
    reordered = dict(reversed(list(RESULTS.items())))
    assert compare_variants(reordered) == table
    with pytest.raises(KeyError):
        compare_variants({"setup1": RESULTS["setup1"]})

def _log(variant_offset, epochs=20):
    return [EpochMetrics(e, 1.0 / e + variant_offset, 0.01 * e, 0.02 * e)
            for e in range(1, epochs + 1)]

def test_convergence_merge():
    rows = convergence_log_merge({"setup1": _log(0.5), "baseline": _log(0.0)})
    assert len(rows) == 2 * 20 * 3
    assert rows[0] == (1, "baseline", "train_loss", 1.0)
    assert rows[:6] == sorted(rows[:6])
    assert (7, "setup1", "val_top1", pytest.approx(0.07)) in rows
    assert [r[0] for r in rows] == sorted(r[0] for r in rows)

def test_convergence_merge_warns(caplog):
    with caplog.at_level(logging.WARNING):
        rows = convergence_log_merge({"a": _log(0.0), "b": _log(0.0, 15)})
    assert "different epochs" in caplog.text
    assert len(rows) == (20 + 15) * 3

def test_metric_log_roundtrip(tmp_path):
    log = _log(0.25, 3)
    path = tmp_path / "setup1_metrics.csv"
    write_metric_log(log, path, {"seed": 4})
    meta, back = read_metric_log(path)
    assert meta == {"seed": "4"}
    assert [m.epoch for m in back] == [1, 2, 3]
    for a, b in zip(log, back):
        assert b.train_loss == pytest.approx(a.train_loss, abs=1e-6)
        assert b.val_top5 == pytest.approx(a.val_top5, abs=1e-6)

def test_results_csv(tmp_path):
    path = tmp_path / "results.csv"
    write_results_csv(RESULTS, path, {"seed": 0})
    _, rows = read_csv(path)
    assert [r["variant"] for r in rows] == ["baseline", "setup1", "setup3"]
    assert rows[1]["delta_top1_pp"] == "+2.00"
    assert rows[2]["delta_top1_pp"] == "-1.00"
    assert rows[0]["n"] == "100"
    write_results_csv({"setup1": RESULTS["setup1"]}, path)
    _, rows = read_csv(path)
    assert rows[0]["delta_top1_pp"] == ""

def test_comparison_table():
    out = io.StringIO()
    write_comparison(RESULTS, out)
    lines = out.getvalue().splitlines()
    assert len(lines) == 4
    assert lines[1].split() == ["baseline", "30.00", "50.00"]
    assert lines[2].split() == ["setup1", "32.00", "55.00", "+2.00", "+5.00"]

def test_location_and_long_csv(tmp_path):
    results = {"setup1": EvalResult("setup1", 0.5, 0.5, 4,
                                    {"zoo": (1.0, 1.0, 1),
                                     "bar": (0.25, 0.5, 4)})}
    write_location_csv(results, tmp_path / "locations.csv")
    _, rows = read_csv(tmp_path / "locations.csv")
    assert [r["location"] for r in rows] == ["bar", "zoo"]
    assert rows[0]["top5"] == "0.500000"
    write_long_csv(convergence_log_merge({"baseline": _log(0.0, 2)}),
                   tmp_path / "convergence.csv")
    _, rows = read_csv(tmp_path / "convergence.csv")
    assert len(rows) == 6
    assert rows[0] == {"epoch": "1", "variant": "baseline",
                       "metric": "train_loss", "value": "1.000000"}

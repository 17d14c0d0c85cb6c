import os.path

import numpy as np
import pytest

from locolm.corpus import Post
from locolm.util import read_csv
from locolm.embeddings import (EmbeddingTable, DispersionReport,
                               load_embeddings, random_dispersion,
                               location_dispersion, rank_dispersion,
                               write_dispersion_csv)

test_dir = os.path.dirname(os.path.realpath(__file__))

with open(os.path.join(test_dir, "vectors", "glove.txt"), encoding="utf8") as fd:
    GLOVE_LINES = fd.readlines()

#: Five words in two dimensions
TOY = {"a": [0.0, 1.0], "b": [2.0, 1.0], "c": [4.0, -1.0], "d": [1.0, 3.0],
       "e": [-2.0, 0.0]}

def _table(vectors, policy="skip"):
    return EmbeddingTable(len(next(iter(vectors.values()))),
                          {w: np.array(v, dtype=float)
                           for w, v in vectors.items()}, policy)

def _posts(tokens, n, tag="x"):
    return [Post(str(i), tokens, {tag}) for i in range(n)]

def test_load():
    table = load_embeddings(GLOVE_LINES, dim=3)
    assert len(table) == 5
    assert table.skipped == 2
    assert "pizza" in table and "broken" not in table
    np.testing.assert_array_equal(table.lookup("bank"), [-1.0, 0.5, 0.0])
    assert table.lookup("nothing") is None
    assert table.stddev().shape == (3,)

def test_load_rejects_empty():
    with pytest.raises(ValueError, match="no valid vector"):
        load_embeddings(["x 1 2\n"], dim=3)

def test_table_validation():
    with pytest.raises(ValueError, match="OOV policy"):
        EmbeddingTable(2, {}, "ignore")
    with pytest.raises(ValueError, match="length"):
        EmbeddingTable(2, {"a": np.zeros(3)})

def test_identical_vectors_have_zero_dispersion():
    table = _table({w: [1.0, 2.0, 3.0] for w in "abcde"})
    posts = _posts(list("abcde"), 100)
    assert random_dispersion(posts, table, 200, seed=4) == 0.0

def test_random_dispersion_matches_expectation():
    table = _table(TOY)
    tokens = ["a", "a", "a", "b", "b", "c", "d", "e", "e", "e"]
    posts = _posts(tokens, 3000)
    # distribution of a uniformly drawn token instance
    weights = np.array([tokens.count(w) for w in "abcde"], dtype=float)
    weights /= weights.sum()
    vectors = np.array([TOY[w] for w in "abcde"])
    mean = weights @ vectors
    exact = np.sqrt(weights @ (vectors - mean) ** 2).mean()
    estimate = random_dispersion(posts, table, sample_size=20000, seed=1)
    assert estimate == pytest.approx(exact, rel=0.03)

def test_same_seed_same_value():
    table = _table(TOY)
    posts = _posts(list("abcde"), 50)
    assert random_dispersion(posts, table, 100, 9) == \
        random_dispersion(posts, table, 100, 9)

@pytest.mark.parametrize("shift, scale", [([5.0, -3.0], 1.0),
                                          ([0.0, 0.0], 2.5),
                                          ([-1.0, 7.0], -0.5)])
def test_dispersion_under_affine_maps(shift, scale):
    posts = _posts(["a", "b", "b", "c", "d", "e", "e"], 80)
    moved = _table({w: scale * np.array(v) + shift for w, v in TOY.items()})
    assert random_dispersion(posts, moved, 300, seed=5) == pytest.approx(
        abs(scale) * random_dispersion(posts, _table(TOY), 300, seed=5))

def test_oov_policies():
    posts = _posts(["a", "zzz", "zzz", "zzz"], 100)
    skip = random_dispersion(posts, _table(TOY, "skip"), 200, 0)
    assert skip == 0.0
    zero = random_dispersion(posts, _table(TOY, "zero"), 200, 0)
    assert zero > 0.0
    with pytest.raises(ValueError, match="no corpus word"):
        random_dispersion(_posts(["zzz", "yyy"], 200), _table(TOY), 200)

def test_location_dispersion():
    table = _table(TOY)
    posts = _posts(["a", "b"], 600, "park") + _posts(["c", "d", "e"], 10,
                                                     "bank")
    report = location_dispersion(posts, "park", table, 200, seed=2)
    assert not report.insufficient
    assert report.sample_size == 200
    assert report.random_baseline_std == \
        pytest.approx(random_dispersion(posts, table, 200, 2))
    # park words differ in one dimension only
    assert 0.0 < report.avg_std < 1.0
    sparse = location_dispersion(posts, "bank", table, 200, seed=2,
                                 baseline=1.5)
    assert sparse.insufficient
    assert sparse.random_baseline_std == 1.5

def test_random_dispersion_needs_tokens():
    with pytest.raises(ValueError, match="fewer than the sample size"):
        random_dispersion(_posts(["a", "b"], 10), _table(TOY), 200)

def test_rank_and_write(tmp_path):
    reports = [DispersionReport("x", 200, 0.3, 1.0),
               DispersionReport("y", 200, 0.1, 1.0),
               DispersionReport("z", 200, None, 1.0),
               DispersionReport("w", 200, 0.2, 1.0)]
    lowest, highest = rank_dispersion(reports, 2)
    assert [r.location for r in lowest] == ["y", "w"]
    assert [r.location for r in highest] == ["x", "w"]
    path = tmp_path / "dispersion.csv"
    write_dispersion_csv(reports, path, {"seed": 0})
    meta, rows = read_csv(path)
    assert [r["location"] for r in rows] == ["y", "w", "x"]
    assert rows[0]["avg_std"] == "0.100000"
    assert meta == {"seed": "0"}

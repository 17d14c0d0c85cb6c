import logging
from collections import Counter
from itertools import combinations

import numpy as np
import pytest

from locolm.corpus import Post
from locolm.vocab import (UNK, PAD, EmptyCorpusError, Vocabulary,
                          build_vocabulary, encode, decode, coverage,
                          coverage_curve, save_vocabulary, load_vocabulary)

POSTS = [Post("1", ["a", "b", "a"], {"x"}),
         Post("2", ["c", "b", "a"], {"y"})]

def test_frequency_order():
    v = build_vocabulary(POSTS, K=2)
    assert v.class_to_word == ("a", "b")
    assert (v.K, v.unk_id, v.pad_id, v.n_classes) == (2, 2, 3, 4)
    assert len(v) == 4

def test_ties_break_lexicographically():
    posts = [Post("1", ["zeta", "alpha", "mid"], {"x"})]
    v = build_vocabulary(posts, K=2)
    assert v.class_to_word == ("alpha", "mid")

def test_shrinks_small_vocabulary(caplog):
    with caplog.at_level(logging.WARNING):
        v = build_vocabulary(POSTS, K=10)
    assert v.K == 3
    assert v.n_classes == 5
    assert "shrinking K" in caplog.text

def test_encode_decode():
    v = build_vocabulary(POSTS, K=2)
    assert [encode(v, t) for t in ("a", "b", "c", "never")] == [0, 1, 2, 2]
    assert decode(v, 0) == "a"
    assert decode(v, v.unk_id) == UNK
    assert decode(v, v.pad_id) == PAD
    with pytest.raises(ValueError, match="outside"):
        decode(v, 4)

def test_coverage():
    v = build_vocabulary(POSTS, K=2)
    assert coverage(v, POSTS) == pytest.approx(5 / 6)
    assert coverage_curve(POSTS, [1, 2, 3]) == \
        [(1, pytest.approx(0.5)), (2, pytest.approx(5 / 6)), (3, 1.0)]

@pytest.mark.parametrize("seed", range(5))
def test_top_k_covers_the_most_tokens(seed):
    rng = np.random.default_rng(seed)
    words = [f"w{i}" for i in range(8)]
    weights = rng.dirichlet(np.ones(len(words)))
    posts = [Post(str(i), [str(w) for w in rng.choice(words, 5, p=weights)],
                  {"x"})
             for i in range(12)]
    counts = Counter(tok for post in posts for tok in post.tokens)
    total = sum(counts.values())
    for K in range(1, len(counts) + 1):
        best = max(sum(counts[w] for w in chosen)
                   for chosen in combinations(counts, K))
        v = build_vocabulary(posts, K=K)
        assert coverage(v, posts) == pytest.approx(best / total)

def test_empty_corpus():
    with pytest.raises(EmptyCorpusError):
        build_vocabulary([])
    v = build_vocabulary(POSTS)
    with pytest.raises(EmptyCorpusError):
        coverage(v, [])
    with pytest.raises(ValueError, match="positive"):
        build_vocabulary(POSTS, K=0)

def test_immutable():
    v = build_vocabulary(POSTS)
    with pytest.raises(AttributeError):
        v.counts = {}
    with pytest.raises(ValueError, match="distinct"):
        Vocabulary(["a", "a"], {})

def test_roundtrip(tmp_path):
    v = build_vocabulary(POSTS, K=2)
    path = tmp_path / "vocab.json"
    save_vocabulary(v, path, {"seed": 0})
    loaded = load_vocabulary(path)
    assert loaded == v
    assert all(encode(loaded, t) == encode(v, t) for t in "abcd")

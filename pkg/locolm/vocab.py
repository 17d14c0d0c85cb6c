"""
Frequency-ranked vocabulary and the output class space of the language
models.

The `K` most frequent tokens get class ids ``0 .. K-1`` in order of
decreasing frequency (ties broken lexicographically). Every other token maps to
the ``<unk>`` class ``K``; class ``K + 1`` is reserved for padding short
contexts and is never predicted.
"""

import json
import logging
from collections import Counter
from typing import Iterable, Sequence

from .util import open_text, rank_desc

logger = logging.getLogger(__name__)

UNK = "<unk>"
PAD = "<pad>"

class EmptyCorpusError(ValueError):
    pass

class Vocabulary:
    """
    Immutable token↔class-id mapping with ``K + 2`` classes.

    Attributes:
        K (int): number of real word classes
        class_to_word (tuple): tokens of classes ``0 .. K-1``
        word_to_class (dict): inverse of `class_to_word`
        counts (dict): corpus frequency of every token seen at build time
        unk_id (int): ``K``
        pad_id (int): ``K + 1``
    """

    __slots__ = ("class_to_word", "word_to_class", "counts")

    def __init__(self, class_to_word: Sequence[str], counts: dict):
        class_to_word = tuple(class_to_word)
        if len(set(class_to_word)) != len(class_to_word):
            raise ValueError("vocabulary classes must be distinct")
        if not class_to_word:
            raise ValueError("vocabulary needs at least one word class")
        object.__setattr__(self, "class_to_word", class_to_word)
        object.__setattr__(self, "word_to_class",
                           {w: i for i, w in enumerate(class_to_word)})
        object.__setattr__(self, "counts", dict(counts))

    def __setattr__(self, name, value):
        raise AttributeError("Vocabulary is immutable")

    @property
    def K(self) -> int:
        return len(self.class_to_word)

    @property
    def unk_id(self) -> int:
        return self.K

    @property
    def pad_id(self) -> int:
        return self.K + 1

    @property
    def n_classes(self) -> int:
        "Size of the output layer, ``K + 2``"
        return self.K + 2

    def __len__(self):
        return self.n_classes

    def __eq__(self, other):
        return (isinstance(other, Vocabulary)
                and self.class_to_word == other.class_to_word
                and self.counts == other.counts)

    def __repr__(self):
        return f"{type(self).__name__}(K={self.K})"

    def to_json(self) -> dict:
        return {"K": self.K, "classes": list(self.class_to_word),
                "counts": dict(sorted(self.counts.items()))}

    @classmethod
    def from_json(cls, d: dict) -> "Vocabulary":
        if len(d["classes"]) != d["K"]:
            raise ValueError("vocabulary K disagrees with its class list")
        return cls(d["classes"], d["counts"])

def _count_tokens(posts) -> Counter:
    counts = Counter()
    for post in posts:
        counts.update(post.tokens)
    return counts

def build_vocabulary(posts: Iterable, K: int = 1000) -> Vocabulary:
    """
    Count every token of `posts` and keep the `K` most frequent as word
    classes. If the corpus holds fewer than `K` distinct tokens all of them
    become classes.

    raises:
        EmptyCorpusError: the corpus has no tokens
    """
    if K < 1:
        raise ValueError("K must be positive")
    counts = _count_tokens(posts)
    if not counts:
        raise EmptyCorpusError("cannot build a vocabulary from an empty corpus")
    if len(counts) < K:
        logger.warning("only %d distinct tokens, shrinking K from %d",
                       len(counts), K)
    return Vocabulary(rank_desc(counts, K), counts)

def encode(v: Vocabulary, token: str) -> int:
    "Class id of `token`; the unk id for out-of-vocabulary tokens"
    return v.word_to_class.get(token, v.unk_id)

def decode(v: Vocabulary, class_id: int) -> str:
    "Token of `class_id`, with ``<unk>`` and ``<pad>`` for the special classes"
    if class_id == v.unk_id:
        return UNK
    if class_id == v.pad_id:
        return PAD
    if not 0 <= class_id < v.K:
        raise ValueError(f"class id {class_id} outside 0..{v.pad_id}")
    return v.class_to_word[class_id]

def coverage(v: Vocabulary, posts: Iterable) -> float:
    """
    Fraction of token instances of `posts` that fall into one of the `K` word
    classes.
    """
    total = covered = 0
    for post in posts:
        total += len(post.tokens)
        covered += sum(tok in v.word_to_class for tok in post.tokens)
    if not total:
        raise EmptyCorpusError("coverage of an empty corpus is undefined")
    return covered / total

def coverage_curve(posts: Sequence, ks: Iterable[int]) -> list:
    """
    Coverage of the top-`K` vocabulary for each `K` in `ks`, as a list of
    ``(K, coverage)`` pairs. Useful to choose `K`: past some size the covered
    share grows only slowly.
    """
    counts = _count_tokens(posts)
    if not counts:
        raise EmptyCorpusError("coverage of an empty corpus is undefined")
    ranked = [counts[w] for w in rank_desc(counts)]
    total = sum(ranked)
    return [(k, sum(ranked[:k]) / total) for k in ks]

def save_vocabulary(v: Vocabulary, path, meta: dict = None):
    with open_text(path, "w") as fd:
        json.dump({**v.to_json(), "_meta": meta or {}}, fd,
                  ensure_ascii=False, indent=1)

def load_vocabulary(path) -> Vocabulary:
    with open_text(path) as fd:
        return Vocabulary.from_json(json.load(fd))

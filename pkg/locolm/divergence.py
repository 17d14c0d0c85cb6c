r"""
Statistics of how word usage shifts between location types.

The location catalog (:class:`LocationCatalog`) enumerates the location-type
tags of a corpus, gives each a dense index for multi-hot encoding and marks
the frequent subset used by the restricted network setups.

:func:`chi_square_location` scores one location type. With :math:`o_w` the
count of word :math:`w` among the tokens of posts carrying the tag,
:math:`N_L` the number of those tokens and :math:`p(w)` the unigram
distribution of the whole corpus (the location's own tokens included), each
word with at least `min_support` occurrences contributes

.. math::

    \chi^2_w = \frac{(o_w - N_L\,p(w))^2}{N_L\,p(w)}

and the location's score is the mean contribution over those words. A
location where no word reaches the support is *dropped*, which is reported
apart from a score of 0. Scores grow linearly with corpus size: duplicating
every post `k` times multiplies every score by `k`.
"""

import json
import logging
from collections import Counter, namedtuple
from concurrent.futures import ThreadPoolExecutor
from typing import Iterable, Mapping, Sequence

from .util import open_text, rank_desc, write_csv

logger = logging.getLogger(__name__)

class LocationCatalog:
    """
    Location-type tag ↔ index mapping with per-tag support.

    Attributes:
        type_to_index (dict): tag → dense index, tags in lexicographic order
        post_support (dict): tag → number of posts carrying it
        token_support (dict): tag → number of tokens in those posts
        frequent_subset (tuple): tags with post support of at least
            `threshold`, by descending support then name
        threshold (int): the frequency threshold
    """

    def __init__(self, post_support: Mapping, token_support: Mapping,
                 threshold: int):
        self.post_support = dict(post_support)
        self.token_support = dict(token_support)
        self.threshold = threshold
        self.type_to_index = {t: i for i, t in
                              enumerate(sorted(self.post_support))}
        frequent = {t: n for t, n in self.post_support.items()
                    if n >= threshold}
        self.frequent_subset = tuple(rank_desc(frequent))
        self._frequent_index = {t: i for i, t in
                                enumerate(self.frequent_subset)}

    @property
    def types(self) -> tuple:
        return tuple(self.type_to_index)

    def __len__(self):
        return len(self.type_to_index)

    def __contains__(self, tag):
        return tag in self.type_to_index

    def width(self, frequent_only: bool = False) -> int:
        "Length of the multi-hot vectors :meth:`encode` produces"
        return len(self.frequent_subset) if frequent_only else len(self)

    def encode(self, types: Iterable[str], frequent_only: bool = False) -> tuple:
        """
        Multi-hot encoding of `types`. Tags outside the catalog (or outside
        the frequent subset when `frequent_only`) are ignored, so the result
        may be all zeros.
        """
        index = self._frequent_index if frequent_only else self.type_to_index
        vec = [0] * len(index)
        for tag in types:
            if tag in index:
                vec[index[tag]] = 1
        return tuple(vec)

    def decode(self, vector: Sequence, frequent_only: bool = False) -> list:
        "Tags of the ones of a multi-hot `vector`"
        tags = self.frequent_subset if frequent_only else self.types
        return [tags[i] for i, bit in enumerate(vector) if bit]

    def to_json(self) -> dict:
        return {"threshold": self.threshold,
                "post_support": dict(sorted(self.post_support.items())),
                "token_support": dict(sorted(self.token_support.items()))}

    @classmethod
    def from_json(cls, d: dict) -> "LocationCatalog":
        return cls(d["post_support"], d["token_support"], d["threshold"])

    def __eq__(self, other):
        return (isinstance(other, LocationCatalog)
                and self.to_json() == other.to_json())

    def __repr__(self):
        return (f"{type(self).__name__}({len(self)} types, "
                f"{len(self.frequent_subset)} frequent)")

def build_catalog(posts: Sequence, frequent_threshold: int = 10
                  ) -> LocationCatalog:
    "Enumerate every location tag of `posts` with its support"
    if not posts:
        raise ValueError("cannot build a location catalog without posts")
    post_support, token_support = Counter(), Counter()
    for post in posts:
        for tag in post.place_types:
            post_support[tag] += 1
            token_support[tag] += len(post.tokens)
    return LocationCatalog(post_support, token_support, frequent_threshold)

def save_catalog(catalog: LocationCatalog, path, meta: dict = None):
    with open_text(path, "w") as fd:
        json.dump({**catalog.to_json(), "_meta": meta or {}}, fd, indent=1)

def load_catalog(path) -> LocationCatalog:
    with open_text(path) as fd:
        return LocationCatalog.from_json(json.load(fd))

_reportbase = namedtuple("ChiSquareReport",
    "location, score, qualifying, contributions, tokens")
class ChiSquareReport(_reportbase):
    """
    Chi-square score of one location type. `score` is ``None`` when the
    location was dropped because no word reached the minimum support.
    `tokens` is the location's token count :math:`N_L`.
    """

    __slots__ = ()

    @property
    def dropped(self) -> bool:
        return self.score is None

ChiSquareSummary = namedtuple("ChiSquareSummary",
                              "reports, mean_score, above_one")

def _global_counts(posts) -> Counter:
    counts = Counter()
    for post in posts:
        counts.update(post.tokens)
    return counts

def _location_counts(posts, location) -> Counter:
    counts = Counter()
    for post in posts:
        if location in post.place_types:
            counts.update(post.tokens)
    return counts

def chi_square_location(posts: Sequence, location: str, min_support: int = 5,
                        global_counts: Counter = None) -> ChiSquareReport:
    """
    Score how far the word distribution of `location` departs from the
    corpus-wide distribution. `global_counts` may be passed to avoid
    recounting the corpus for every location.
    """
    global_counts = global_counts or _global_counts(posts)
    observed = _location_counts(posts, location)
    if not observed:
        raise ValueError(f"location {location!r} does not occur in the corpus")
    total = sum(global_counts.values())
    n_loc = sum(observed.values())
    contributions = {}
    for word, o_w in observed.items():
        if o_w < min_support:
            continue
        expected = n_loc * global_counts[word] / total
        contributions[word] = (o_w - expected) ** 2 / expected
    if not contributions:
        logger.debug("location %s dropped: no word with support %d",
                     location, min_support)
        return ChiSquareReport(location, None, 0, {}, n_loc)
    score = sum(contributions[w] for w in sorted(contributions)) \
        / len(contributions)
    return ChiSquareReport(location, score, len(contributions),
                           contributions, n_loc)

def significant_words(report: ChiSquareReport, top_n: int = 10) -> list:
    "The `top_n` words contributing most to the score of `report`"
    if report.dropped:
        raise ValueError(f"location {report.location!r} was dropped")
    return rank_desc(report.contributions, top_n)

def chi_square_all(posts: Sequence, catalog: LocationCatalog,
                   min_support: int = 5, threads: int = 1
                   ) -> ChiSquareSummary:
    """
    Score every frequent location of `catalog`. The summary's mean score and
    count of scores above 1 are taken over the locations that were not
    dropped. With ``threads > 1`` locations are scored concurrently; results
    are collected in catalog order, so the output does not depend on it.
    """
    global_counts = _global_counts(posts)
    def score(tag):
        return chi_square_location(posts, tag, min_support, global_counts)
    if threads > 1:
        with ThreadPoolExecutor(threads) as pool:
            reports = list(pool.map(score, catalog.frequent_subset))
    else:
        reports = [score(tag) for tag in catalog.frequent_subset]
    reports = {r.location: r for r in reports}
    kept = [r.score for r in reports.values() if not r.dropped]
    mean = sum(kept) / len(kept) if kept else 0.0
    return ChiSquareSummary(reports, mean, sum(s > 1.0 for s in kept))

def rank_locations(summary: ChiSquareSummary, n: int = 10) -> tuple:
    """
    Return ``(top, least)``: the `n` highest and `n` lowest scoring locations
    as ``(location, score)`` lists, each ordered from the extreme inwards.
    """
    scores = {tag: r.score for tag, r in summary.reports.items()
              if not r.dropped}
    ranked = rank_desc(scores)
    top = [(tag, scores[tag]) for tag in ranked[:n]]
    tail = ranked[max(len(ranked) - n, 0):]
    least = [(tag, scores[tag]) for tag in reversed(tail)]
    return top, least

def shared_significant_words(reports: Mapping, top_n: int = 10) -> dict:
    """
    Words that are among the `top_n` significant words of more than one
    location, mapped to the sorted list of those locations.
    """
    found = {}
    for tag in sorted(reports):
        if reports[tag].dropped:
            continue
        for word in significant_words(reports[tag], top_n):
            found.setdefault(word, []).append(tag)
    return {w: tags for w, tags in sorted(found.items()) if len(tags) > 1}

def write_chi_square_csv(summary: ChiSquareSummary, path, meta: dict = None,
                         top_n: int = 10):
    "One row per scored location: score, qualifying words and top words"
    rows = []
    for tag, _ in rank_locations(summary, len(summary.reports))[0]:
        r = summary.reports[tag]
        rows.append((tag, f"{r.score:.6f}", r.qualifying,
                     " ".join(significant_words(r, top_n))))
    meta = {**(meta or {}), "mean_score": f"{summary.mean_score:.6f}",
            "above_one": summary.above_one}
    write_csv(path, ("location", "score", "qualifying_words",
                     "significant_words"), rows, meta)

def write_significant_words_csv(summary: ChiSquareSummary, path,
                                meta: dict = None, top_n: int = 10):
    "One row per (location, rank) with the word and its contribution"
    rows = []
    for tag, _ in rank_locations(summary, len(summary.reports))[0]:
        r = summary.reports[tag]
        for rank, word in enumerate(significant_words(r, top_n), 1):
            rows.append((tag, rank, word, f"{r.contributions[word]:.6f}"))
    write_csv(path, ("location", "rank", "word", "contribution"), rows, meta)

"""
Pretrained word vectors and the embedding dispersion study.

Vectors are read from the GloVe text format: one token per line followed by
`D` space separated reals. The dispersion of a location type is measured by
drawing word instances of the location (so frequent words are drawn more
often), looking up their vectors and averaging the per-dimension standard
deviation of the sample. A low value means the location's words sit close
together in embedding space; it is compared with the same statistic over the
whole corpus.
"""

import logging
from collections import namedtuple
from typing import Iterable, Sequence

import numpy as np

from .util import rank_desc, write_csv

logger = logging.getLogger(__name__)

#: Dimension of the embedding table used by the networks
DEFAULT_DIM = 100

#: Word instances drawn per dispersion estimate
SAMPLE_SIZE = 200

#: A location needs this many times `sample_size` tokens to be measured
SUPPORT_FACTOR = 5

OOV_POLICIES = ("skip", "zero")

_tablebase = namedtuple("EmbeddingTable", "dim, vectors, oov_policy, skipped")
class EmbeddingTable(_tablebase):
    """
    Word vectors of one dimension.

    Attributes:
        dim (int): vector length `D`
        vectors (dict): token → float64 array of length `D`
        oov_policy (str): ``"skip"`` re-draws words without a vector during
            sampling, ``"zero"`` uses a zero vector for them
        skipped (int): malformed lines ignored at load time
    """

    __slots__ = ()

    def __new__(cls, dim, vectors, oov_policy="skip", skipped=0):
        if oov_policy not in OOV_POLICIES:
            raise ValueError(f"unknown OOV policy {oov_policy!r}")
        for token, vec in vectors.items():
            if len(vec) != dim:
                raise ValueError(f"vector of {token!r} has length {len(vec)}, "
                                 f"expected {dim}")
        return super().__new__(cls, dim, vectors, oov_policy, skipped)

    def __contains__(self, token):
        return token in self.vectors

    def __len__(self):
        return len(self.vectors)

    def lookup(self, token):
        "Vector of `token`, ``None`` if absent"
        return self.vectors.get(token)

    def stddev(self) -> np.ndarray:
        "Empirical per-dimension standard deviation over all vectors"
        return np.stack(list(self.vectors.values())).std(axis=0)

def load_embeddings(stream: Iterable[str], dim: int = DEFAULT_DIM,
                    oov_policy: str = "skip") -> EmbeddingTable:
    """
    Read a GloVe text stream. Lines with a wrong number of values or values
    that are not numbers are counted in ``skipped``.

    raises:
        ValueError: no line was usable
    """
    vectors, skipped = {}, 0
    for lineno, line in enumerate(stream, 1):
        parts = line.rstrip("\n").split(" ")
        if len(parts) != dim + 1 or not parts[0]:
            skipped += 1
            continue
        try:
            vectors[parts[0]] = np.array(parts[1:], dtype=np.float64)
        except ValueError:
            skipped += 1
    if skipped:
        logger.warning("%d malformed embedding lines skipped", skipped)
    if not vectors:
        raise ValueError("embedding stream holds no valid vector")
    return EmbeddingTable(dim, vectors, oov_policy, skipped)

_dispersionbase = namedtuple("DispersionReport",
    "location, sample_size, avg_std, random_baseline_std")
class DispersionReport(_dispersionbase):
    "Embedding dispersion of one location; `avg_std` is ``None`` if unmeasured"

    __slots__ = ()

    @property
    def insufficient(self) -> bool:
        return self.avg_std is None

def _instances(posts, location=None) -> list:
    return [tok for post in posts
            if location is None or location in post.place_types
            for tok in post.tokens]

def _sample_std(instances: Sequence[str], table: EmbeddingTable,
                sample_size: int, seed: int):
    if table.oov_policy == "skip":
        instances = [tok for tok in instances if tok in table.vectors]
        if not instances:
            return None
    rng = np.random.default_rng(seed)
    picks = rng.integers(0, len(instances), sample_size)
    zero = np.zeros(table.dim)
    sample = np.stack([table.vectors.get(instances[i], zero) for i in picks])
    return float(sample.std(axis=0).mean())

def random_dispersion(posts: Sequence, table: EmbeddingTable,
                      sample_size: int = SAMPLE_SIZE, seed: int = 0) -> float:
    "Dispersion of word instances drawn from the whole corpus"
    instances = _instances(posts)
    if len(instances) < sample_size:
        raise ValueError(f"corpus has {len(instances)} tokens, fewer than "
                         f"the sample size {sample_size}")
    value = _sample_std(instances, table, sample_size, seed)
    if value is None:
        raise ValueError("no corpus word has an embedding")
    return value

def location_dispersion(posts: Sequence, location: str, table: EmbeddingTable,
                        sample_size: int = SAMPLE_SIZE, seed: int = 0,
                        baseline: float = None) -> DispersionReport:
    """
    Dispersion of `sample_size` word instances drawn with replacement from the
    posts tagged `location`. Locations with fewer than ``5 * sample_size``
    tokens (or none with a vector) get an insufficient report. `baseline`
    defaults to :func:`random_dispersion` with the same seed.
    """
    if baseline is None:
        baseline = random_dispersion(posts, table, sample_size, seed)
    instances = _instances(posts, location)
    if len(instances) < SUPPORT_FACTOR * sample_size:
        return DispersionReport(location, sample_size, None, baseline)
    value = _sample_std(instances, table, sample_size, seed)
    return DispersionReport(location, sample_size, value, baseline)

def rank_dispersion(reports: Iterable[DispersionReport], n: int = 10) -> tuple:
    """
    Return ``(lowest, highest)``: the `n` most clustered and the `n` most
    spread locations as lists of reports. ``n=None`` ranks them all.
    """
    measured = {r.location: r for r in reports if not r.insufficient}
    ranked = rank_desc({tag: -r.avg_std for tag, r in measured.items()})
    n = len(ranked) if n is None else n
    lowest = [measured[tag] for tag in ranked[:n]]
    tail = ranked[max(len(ranked) - n, 0):]
    highest = [measured[tag] for tag in reversed(tail)]
    return lowest, highest

def write_dispersion_csv(reports: Iterable[DispersionReport], path,
                         meta: dict = None):
    "Measured locations, most clustered first"
    lowest, _ = rank_dispersion(reports, None)
    rows = [(r.location, f"{r.avg_std:.6f}", f"{r.random_baseline_std:.6f}",
             r.sample_size) for r in lowest]
    write_csv(path, ("location", "avg_std", "random_baseline_std",
                     "sample_size"), rows, meta)

"""
Ingestion of geo-tagged micro-blog posts. This module turns a raw JSONL feed
of posts into enriched :class:`Post` records: tokens plus the location-type
tags of the place each post was sent from.

The pipeline has three stages

1. :func:`parse_corpus` reads the raw feed into :class:`RawPost` records,
   skipping (and counting) malformed lines.
2. :func:`filter_posts` applies the pruning rules: English only, a place tag
   must be present and it must be specific (a point of interest or a
   neighborhood, never a whole city, region or country).
3. :func:`build_posts` tokenizes the text with :func:`tokenize` and queries a
   :class:`PlaceTypeResolver` for the location types of the place. Posts whose
   place cannot be resolved, or which contain fewer than 2 tokens, are dropped.

Raw Feed Format
...............

UTF-8 JSONL, one object per line:

.. code-block:: json

    {"id": "1", "text": "Dinner at #NYC", "lang": "en",
     "place_name": "Joe's Pizza", "place_granularity": "poi",
     "lat": 40.73, "lon": -73.99}

``place_name``, ``lat`` and ``lon`` may be ``null``. ``place_granularity`` is
one of :data:`GRANULARITIES`; values outside it are read as ``"unknown"``.

Place Fixture Format
....................

A UTF-8 JSON object mapping place names to arrays of location-type tags, e.g.
``{"joe's pizza": ["restaurant", "food"]}``. Lookups are case-insensitive.
"""

import json
import logging
from collections import Counter, namedtuple
from typing import Iterable, Protocol

import regex

from .util import canonical_json, open_text

logger = logging.getLogger(__name__)

#: Place granularities a raw post may declare
GRANULARITIES = ("poi", "neighborhood", "city", "admin", "country", "unknown")

#: Granularities specific enough to identify a location type
SPECIFIC_GRANULARITIES = frozenset({"poi", "neighborhood"})

#: Token replacing every URL
URL_TOKEN = "<url>"

class IngestError(IOError):
    "The corpus stream could not be read at all"

class ResolverUnavailable(IOError):
    """
    The place resolver failed to answer. Unlike an unmatched name this is
    retryable: the same query may succeed later.
    """

_rawpostbase = namedtuple("RawPost",
    "id, text, lang, place_name, place_granularity, latitude, longitude")
class RawPost(_rawpostbase):
    """
    One post as it arrives from the feed. Coordinates are decimal degrees and
    are validated on construction.
    """

    __slots__ = ()

    def __new__(cls, id, text, lang, place_name=None,
                place_granularity="unknown", latitude=None, longitude=None):
        if not isinstance(id, str) or not id:
            raise ValueError("post id must be a nonempty string")
        if not isinstance(text, str):
            raise ValueError(f"post {id}: text must be a string")
        if latitude is not None and not -90 <= latitude <= 90:
            raise ValueError(f"post {id}: latitude {latitude} out of range")
        if longitude is not None and not -180 <= longitude <= 180:
            raise ValueError(f"post {id}: longitude {longitude} out of range")
        if place_granularity not in GRANULARITIES:
            place_granularity = "unknown"
        return super().__new__(cls, id, text, lang, place_name,
                               place_granularity, latitude, longitude)

class Post(namedtuple("Post", "id, tokens, place_types")):
    """
    An enriched post: its tokens and the location-type tags of its place.
    Both are nonempty.
    """

    __slots__ = ()

    def __new__(cls, id, tokens, place_types):
        tokens, place_types = tuple(tokens), frozenset(place_types)
        if not tokens:
            raise ValueError(f"post {id}: no tokens")
        if not place_types:
            raise ValueError(f"post {id}: no location types")
        return super().__new__(cls, id, tokens, place_types)

class PlaceResolution(namedtuple("PlaceResolution",
                                 "query_name, matched, types")):
    "Answer of a :class:`PlaceTypeResolver`. Unmatched answers carry no types"

    __slots__ = ()

    def __new__(cls, query_name, matched, types=()):
        types = frozenset(types)
        if not matched and types:
            raise ValueError("an unmatched resolution cannot carry types")
        return super().__new__(cls, query_name, bool(matched), types)

ParsedCorpus = namedtuple("ParsedCorpus", "posts, skipped")

class PlaceTypeResolver(Protocol):
    """
    Anything that can map a place name and position to location types. A live
    place-search client would implement this and raise
    :class:`ResolverUnavailable` on transport failures.
    """

    def resolve(self, name: str, lat: float, lon: float) -> PlaceResolution:
        ...

class FixturePlaceResolver:
    """
    A :class:`PlaceTypeResolver` answering from a fixed name→types table.
    Names are matched case-insensitively and exactly; coordinates are ignored.
    The table is read-only after construction so one instance can be shared
    between threads.
    """

    def __init__(self, table: dict):
        self._table = {name.casefold(): frozenset(types)
                       for name, types in table.items()}

    @classmethod
    def from_file(cls, path):
        "Load a resolver from a place fixture JSON file"
        try:
            with open_text(path) as fd:
                table = json.load(fd)
        except (OSError, ValueError) as e:
            raise ResolverUnavailable(
                f"cannot load place fixture {path}: {e}") from e
        if not isinstance(table, dict):
            raise ResolverUnavailable(
                f"place fixture {path} must hold a JSON object")
        return cls(table)

    def __len__(self):
        return len(self._table)

    def resolve(self, name, lat=None, lon=None):
        types = self._table.get(name.casefold())
        if not types:
            return PlaceResolution(name, False)
        return PlaceResolution(name, True, types)

def _record_to_raw(record: dict) -> RawPost:
    def coord(key):
        value = record.get(key)
        return None if value is None else float(value)
    return RawPost(
        str(record["id"]) if record.get("id") is not None else "",
        record["text"],
        record.get("lang"),
        record.get("place_name") or None,
        record.get("place_granularity", "unknown"),
        coord("lat"),
        coord("lon"),
    )

def parse_corpus(stream: Iterable[str]) -> ParsedCorpus:
    """
    Parse a raw JSONL feed. Every well-formed line becomes a :class:`RawPost`
    in input order. Malformed lines (bad JSON, missing keys, invalid
    coordinates, empty or repeated ids) are logged and counted in
    ``skipped``.

    raises:
        IngestError: the stream itself cannot be read
    """
    posts, seen, skipped = [], set(), 0
    try:
        for lineno, line in enumerate(stream, 1):
            if not line.strip():
                continue
            try:
                record = json.loads(line)
                if not isinstance(record, dict):
                    raise ValueError("record is not an object")
                raw = _record_to_raw(record)
                if raw.id in seen:
                    raise ValueError(f"duplicate id {raw.id}")
            except (ValueError, KeyError, TypeError) as e:
                logger.warning("line %d skipped: %s", lineno, e)
                skipped += 1
                continue
            seen.add(raw.id)
            posts.append(raw)
    except (OSError, UnicodeDecodeError) as e:
        raise IngestError(f"cannot read corpus: {e}") from e
    return ParsedCorpus(posts, skipped)

def drop_reason(post: RawPost):
    """
    Name of the first pruning rule `post` fails, or ``None`` when it passes
    them all. Rules are checked in order: ``"non_english"``, ``"no_place"``,
    ``"broad_place"``.
    """
    if post.lang != "en":
        return "non_english"
    if not post.place_name:
        return "no_place"
    if post.place_granularity not in SPECIFIC_GRANULARITIES:
        return "broad_place"
    return None

def filter_posts(posts: Iterable[RawPost]) -> list:
    "Keep English posts with a specific place tag, preserving order"
    return [post for post in posts if drop_reason(post) is None]

_PICT_MODIFIER = r"[\uFE0E\uFE0F\p{Emoji_Modifier}\U000E0020-\U000E007F]"
_PICT = rf"\p{{Extended_Pictographic}}{_PICT_MODIFIER}*"

_TOKEN_RE = regex.compile(
    r"(?P<url>(?:https?://|www\.)\S+)"
    r"|(?P<keycap>[#*0-9]\uFE0F?\u20E3)"
    r"|(?P<tag>[#@]\w+)"
    r"|(?P<flag>[\U0001F1E6-\U0001F1FF]{2})"
    rf"|(?P<emoji>{_PICT}(?:\u200D{_PICT})*)"
    r"|(?P<word>\w+(?:['\u2019]\w+)*)"
    # a variation selector or skin tone stays with the symbol before it
    rf"|(?P<other>\S{_PICT_MODIFIER}*)"
)

def tokenize(text: str) -> list:
    """
    Split post text into lowercase tokens.

    - ``#hashtags`` and ``@handles`` stay whole
    - every emoji (including modifier and joiner sequences and flags) is its
      own token
    - punctuation and any other symbol is a token of its own
    - URLs become :data:`URL_TOKEN`
    - whitespace is discarded

    Examples:

    >>> tokenize("Dinner at #NYC 🍕!")
    ['dinner', 'at', '#nyc', '🍕', '!']
    """
    tokens = []
    for match in _TOKEN_RE.finditer(text):
        if match.lastgroup == "url":
            tokens.append(URL_TOKEN)
        else:
            tokens.append(match.group().lower())
    return tokens

def resolve_place(name: str, lat, lon,
                  resolver: PlaceTypeResolver) -> PlaceResolution:
    """
    Look up the location types of the place called `name` near (`lat`,
    `lon`). :class:`ResolverUnavailable` raised by the resolver is propagated
    so callers can retry; a miss is an unmatched :class:`PlaceResolution`.
    """
    if not name:
        raise ValueError("place name must be nonempty")
    return resolver.resolve(name, lat, lon)

def build_posts(raw: Iterable[RawPost], resolver: PlaceTypeResolver,
                tally: Counter = None) -> list:
    """
    Tokenize and enrich already filtered posts. Posts whose place does not
    resolve (``"resolver_miss"``) or with fewer than 2 tokens
    (``"too_short"``) are dropped; when `tally` is given it counts the drops
    by reason.
    """
    tally = Counter() if tally is None else tally
    posts = []
    for item in raw:
        tokens = tokenize(item.text)
        if len(tokens) < 2:
            tally["too_short"] += 1
            continue
        found = resolve_place(item.place_name, item.latitude, item.longitude,
                              resolver)
        if not found.matched:
            logger.debug("post %s: place %r not resolved", item.id,
                         item.place_name)
            tally["resolver_miss"] += 1
            continue
        posts.append(Post(item.id, tokens, found.types))
    return posts

def write_posts(posts: Iterable[Post], path, meta: dict = None):
    """
    Write enriched posts as JSONL. A leading ``{"_meta": ...}`` record carries
    `meta` (configuration hash and seed).
    """
    with open_text(path, "w") as fd:
        fd.write(canonical_json({"_meta": meta or {}}) + "\n")
        for post in posts:
            fd.write(canonical_json({
                "id": post.id,
                "tokens": list(post.tokens),
                "place_types": sorted(post.place_types),
            }) + "\n")

def read_posts(path) -> list:
    "Read an enriched corpus written by :func:`write_posts`"
    posts = []
    try:
        with open_text(path) as fd:
            for line in fd:
                if not line.strip():
                    continue
                record = json.loads(line)
                if "_meta" in record:
                    continue
                posts.append(Post(record["id"], record["tokens"],
                                  record["place_types"]))
    except (OSError, UnicodeDecodeError) as e:
        raise IngestError(f"cannot read enriched corpus {path}: {e}") from e
    return posts

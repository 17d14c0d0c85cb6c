"Small utility module for some common functions"

import csv
import hashlib
import json
import sys
from contextlib import nullcontext
from typing import Iterable, Mapping, Sequence

def rank_desc(scores: Mapping, n: int = None) -> list:
    """
    Return the keys of `scores` ordered by descending score. Equal scores are
    ordered by ascending key so the ranking is reproducible. If `n` is given
    only the first `n` keys are returned.
    """
    ranked = sorted(scores, key=lambda key: (-scores[key], key))
    return ranked if n is None else ranked[:n]

def canonical_json(obj) -> str:
    "Compact JSON with sorted keys, used for hashing and diffable dumps"
    return json.dumps(obj, sort_keys=True, separators=(",", ":"),
                      ensure_ascii=False)

def config_hash(obj) -> str:
    """
    Return the first 12 hex digits of the SHA-1 digest of the canonical JSON
    encoding of `obj`. Two runs share a hash exactly when their resolved
    configurations are equal.
    """
    return hashlib.sha1(canonical_json(obj).encode("utf8")).hexdigest()[:12]

def open_text(path, mode: str = "r"):
    """
    Open `path` as UTF-8 text. ``"-"`` maps to stdin or stdout depending on
    `mode`, like :class:`argparse.FileType` does.
    """
    if path == "-":
        return nullcontext(sys.stdin if "r" in mode else sys.stdout)
    return open(path, mode, encoding="utf8", newline="" if "w" in mode
                else None)

def meta_lines(meta: Mapping) -> list:
    "Render `meta` as ``# key=value`` comment lines in key order"
    return [f"# {key}={meta[key]}" for key in sorted(meta)]

def write_csv(path, columns: Sequence[str], rows: Iterable[Sequence],
              meta: Mapping = None):
    """
    Write `rows` under a `columns` header to the CSV file at `path`. Any `meta`
    items are written first as ``#`` comment lines so every artifact carries
    the configuration hash and seed that produced it.
    """
    with open_text(path, "w") as fd:
        for line in meta_lines(meta or {}):
            fd.write(line + "\n")
        writer = csv.writer(fd, lineterminator="\n")
        writer.writerow(columns)
        writer.writerows(rows)

def read_csv(path) -> tuple:
    """
    Read a CSV written by :func:`write_csv`. Returns a ``(meta, rows)`` tuple
    where `meta` is the dict of comment items and `rows` a list of dicts keyed
    by column name.
    """
    meta, body = {}, []
    with open_text(path) as fd:
        for line in fd:
            if line.startswith("#"):
                key, _, value = line[1:].strip().partition("=")
                meta[key] = value
            else:
                body.append(line)
    return meta, list(csv.DictReader(body))

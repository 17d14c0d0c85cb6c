"""
Checkpoint serialization.

A checkpoint is a pair of files: a JSON manifest (``model.json``) and a flat
binary blob next to it with the ``.bin`` suffix. The blob is the concatenation
of every parameter array as little-endian float32, in the order listed by the
manifest. The manifest records the shape of each array, the network config,
the vocabulary and location catalog the network was trained with, and a
SHA-256 digest of the blob so a truncated or altered blob is detected on load.

Manifest Format
...............

.. code-block:: json

    {
     "format": "locolm-checkpoint",
     "version": 1,
     "gate_order": "ifgo",
     "config": {"variant": "setup1", "n_classes": 1002, "...": "..."},
     "arrays": [{"name": "embedding", "shape": [1002, 100]}, "..."],
     "frozen_rows": [0, 1, 5],
     "blob_sha256": "...",
     "vocab": {"K": 1000, "classes": ["..."], "counts": {}},
     "catalog": {"threshold": 10, "post_support": {}, "token_support": {}},
     "meta": {"seed": 0, "epoch": 20, "config_hash": "..."}
    }
"""

import hashlib
import json
import logging
from collections import namedtuple
from pathlib import Path

import numpy as np

from .divergence import LocationCatalog
from .network import GATE_ORDER, ModelConfig, NetworkParams, param_shapes
from .util import canonical_json
from .vocab import Vocabulary

logger = logging.getLogger(__name__)

FORMAT = "locolm-checkpoint"
VERSION = 1

_DTYPE = np.dtype("<f4")

class CheckpointError(ValueError):
    pass

class CheckpointMismatch(CheckpointError):
    "Two checkpoints disagree on a field that must be shared"

    def __init__(self, field, message=None):
        super().__init__(message or f"checkpoints disagree on {field}")
        self.field = field

Checkpoint = namedtuple("Checkpoint", "params, config, vocab, catalog, meta")

def blob_path(path) -> Path:
    "Path of the binary blob belonging to the manifest at `path`"
    return Path(path).with_suffix(".bin")

def save_checkpoint(path, params: NetworkParams, config: ModelConfig,
                    vocab: Vocabulary, catalog: LocationCatalog = None,
                    meta: dict = None):
    """
    Write `params` to the manifest at `path` and its blob. Arrays must have
    the shapes `config` calls for.
    """
    shapes = param_shapes(config)
    if [name for name, _ in shapes] != list(params):
        raise CheckpointError("parameters do not match the network config")
    chunks = []
    for name, shape in shapes:
        arr = np.asarray(params[name])
        if arr.shape != shape:
            raise CheckpointError(f"{name} has shape {arr.shape}, "
                                  f"config calls for {shape}")
        chunks.append(arr.astype(_DTYPE).tobytes())
    blob = b"".join(chunks)
    manifest = {
        "format": FORMAT,
        "version": VERSION,
        "gate_order": GATE_ORDER,
        "config": config.to_json(),
        "arrays": [{"name": n, "shape": list(s)} for n, s in shapes],
        "frozen_rows": sorted(params.frozen_rows),
        "blob_sha256": hashlib.sha256(blob).hexdigest(),
        "vocab": vocab.to_json(),
        "catalog": catalog.to_json() if catalog is not None else None,
        "meta": meta or {},
    }
    blob_path(path).write_bytes(blob)
    Path(path).write_text(canonical_json(manifest) + "\n", encoding="utf8")
    logger.info("checkpoint written to %s (%d bytes)", path, len(blob))

def load_checkpoint(path) -> Checkpoint:
    """
    Read a checkpoint written by :func:`save_checkpoint`. Arrays are returned
    as float32.

    raises:
        CheckpointError: the manifest is unreadable or of another format, or
            the blob is missing, truncated or fails its checksum
    """
    try:
        manifest = json.loads(Path(path).read_text(encoding="utf8"))
        blob = blob_path(path).read_bytes()
    except (OSError, ValueError) as e:
        raise CheckpointError(f"cannot read checkpoint {path}: {e}") from e
    if manifest.get("format") != FORMAT:
        raise CheckpointError(f"{path} is not a {FORMAT} manifest")
    if manifest.get("version") != VERSION:
        raise CheckpointError(f"unsupported checkpoint version "
                              f"{manifest.get('version')}")
    if manifest.get("gate_order") != GATE_ORDER:
        raise CheckpointError(f"gate order {manifest.get('gate_order')} "
                              f"is not {GATE_ORDER}")
    if hashlib.sha256(blob).hexdigest() != manifest.get("blob_sha256"):
        raise CheckpointError("checkpoint blob fails its checksum")
    try:
        config = ModelConfig.from_json(manifest["config"])
        listed = [(a["name"], tuple(a["shape"])) for a in manifest["arrays"]]
    except (KeyError, TypeError, ValueError) as e:
        raise CheckpointError(f"invalid manifest: {e}") from e
    expected = [(n, tuple(s)) for n, s in param_shapes(config)]
    if listed != expected:
        raise CheckpointError("array list does not match the network config")
    arrays, offset = {}, 0
    for name, shape in listed:
        size = int(np.prod(shape)) * _DTYPE.itemsize
        if offset + size > len(blob):
            raise CheckpointError(f"checkpoint blob truncated at {name}")
        arrays[name] = np.frombuffer(blob, _DTYPE, int(np.prod(shape)),
                                     offset).reshape(shape).astype(np.float32)
        offset += size
    if offset != len(blob):
        raise CheckpointError("checkpoint blob has trailing bytes")
    try:
        v = Vocabulary.from_json(manifest["vocab"])
        catalog = manifest.get("catalog")
        catalog = LocationCatalog.from_json(catalog) if catalog else None
    except (KeyError, TypeError, ValueError) as e:
        raise CheckpointError(f"invalid manifest: {e}") from e
    return Checkpoint(
        NetworkParams(arrays, manifest.get("frozen_rows", ())),
        config, v, catalog, manifest.get("meta", {}),
    )

def check_compatible(checkpoints: dict, fields=("vocab", "catalog")):
    """
    Make sure every checkpoint of the `checkpoints` mapping shares the given
    fields (vocabulary and location catalog by default), so their evaluations
    are comparable.

    raises:
        CheckpointMismatch: names the first field that differs
    """
    items = list(checkpoints.values())
    for field in fields:
        # the baseline never reads location vectors
        pool = [c for c in items if field != "catalog"
                or c.config.variant != "baseline"]
        if any(getattr(c, field) != getattr(pool[0], field) for c in pool):
            raise CheckpointMismatch(field)
    for field in ("seed", "holdout"):
        values = {ckpt.meta.get(field) for ckpt in items}
        if len(values) > 1:
            raise CheckpointMismatch(field, f"checkpoints disagree on {field}: "
                                            f"{sorted(map(str, values))}")

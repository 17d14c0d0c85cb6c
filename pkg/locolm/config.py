"""
Run configuration.

A run is described by a TOML file with the sections ``[paths]``, ``[vocab]``,
``[model]``, ``[train]``, ``[stats]`` and ``[sampler]``; every key is optional
and defaults to the values below. The sections are flattened into one
:class:`RunConfig`, which command-line flags then override field by field.

Resampling of the training split both undersamples frequent classes and, with
``[sampler] oversample = true`` (the default), pulls rare classes toward the
mean class support, never past three times their own support. Set it to
``false`` to undersample only.

.. code-block:: toml

    [paths]
    corpus = "data/posts.jsonl"
    places = "data/places.json"
    embeddings = "data/glove.100d.txt"
    out = "runs/setup1"

    [model]
    variant = "setup1"

    [train]
    epochs = 20
    seed = 7
"""

import tomllib
from collections import namedtuple
from pathlib import Path

from .network import VARIANTS
from .util import config_hash

class ConfigError(ValueError):
    pass

#: Section → keys of a run configuration file
SECTIONS = {
    "paths": ("corpus", "places", "posts", "embeddings", "out",
              "pretrained"),
    "vocab": ("vocab_size", "window"),
    "model": ("variant", "embed_dim", "lstm_cells", "lstm_layers",
              "dense_units", "place_dense", "freeze_embeddings"),
    "train": ("epochs", "batch_size", "learning_rate", "beta1", "beta2",
              "adam_eps", "holdout", "seed", "threads"),
    "stats": ("frequent_threshold", "min_support", "sample_size"),
    "sampler": ("oversample", "smoothing"),
}

_DEFAULTS = {
    "corpus": None, "places": None, "posts": None, "embeddings": None,
    "out": ".", "pretrained": None,
    "vocab_size": 1000, "window": 4,
    "variant": "baseline", "embed_dim": 100, "lstm_cells": 256,
    "lstm_layers": 2, "dense_units": 256, "place_dense": 16,
    "freeze_embeddings": True,
    "epochs": 20, "batch_size": 128, "learning_rate": 1e-3, "beta1": 0.9,
    "beta2": 0.999, "adam_eps": 1e-8, "holdout": 0.10, "seed": 0,
    "threads": 1,
    "frequent_threshold": 10, "min_support": 5, "sample_size": 200,
    "oversample": True, "smoothing": 0.1,
}

_PATHS = SECTIONS["paths"]

_runbase = namedtuple("RunConfig", [k for keys in SECTIONS.values()
                                    for k in keys])
class RunConfig(_runbase):
    """
    Flat, immutable run configuration. Construct with keyword arguments;
    missing fields take their defaults. Use ``_replace`` to override.
    """

    __slots__ = ()

    def __new__(cls, **kwargs):
        unknown = set(kwargs) - set(cls._fields)
        if unknown:
            raise ConfigError(f"unknown configuration keys: "
                              f"{', '.join(sorted(unknown))}")
        values = {**_DEFAULTS, **kwargs}
        return super().__new__(cls, **values)._validate()

    def _validate(self):
        if self.vocab_size < 1:
            raise ConfigError("vocab_size must be positive")
        if self.variant not in VARIANTS:
            raise ConfigError(f"unknown variant {self.variant!r}, expected "
                              f"one of {', '.join(VARIANTS)}")
        if self.window < 1:
            raise ConfigError("window must be positive")
        if self.epochs < 1 or self.batch_size < 1:
            raise ConfigError("epochs and batch_size must be positive")
        if not 0 < self.holdout < 1:
            raise ConfigError("holdout must lie strictly between 0 and 1")
        if self.smoothing < 0:
            raise ConfigError("smoothing must be nonnegative")
        if self.threads < 1:
            raise ConfigError("threads must be at least 1")
        return self

    def _replace(self, **kwargs):
        unknown = set(kwargs) - set(self._fields)
        if unknown:
            raise ConfigError(f"unknown configuration keys: "
                              f"{', '.join(sorted(unknown))}")
        return super()._replace(**kwargs)._validate()

    def to_json(self) -> dict:
        "Plain dict of the configuration, paths as strings"
        return {k: (str(v) if k in _PATHS and v is not None else v)
                for k, v in self._asdict().items()}

    def digest(self) -> str:
        """
        Hash of everything that determines results. Output locations and the
        thread count are left out, so they do not change it.
        """
        d = self.to_json()
        del d["out"], d["threads"]
        return config_hash(d)

    def meta(self) -> dict:
        "Header items stamped into every artifact"
        return {"config_hash": self.digest(), "seed": self.seed}

def load_config(path) -> RunConfig:
    """
    Read a TOML run configuration. Relative paths are resolved against the
    directory of the file.

    raises:
        ConfigError: the file is not valid TOML or holds unknown sections or
            keys
    """
    path = Path(path)
    try:
        with open(path, "rb") as fd:
            doc = tomllib.load(fd)
    except tomllib.TOMLDecodeError as e:
        raise ConfigError(f"{path}: {e}") from e
    flat = {}
    for section, table in doc.items():
        if section not in SECTIONS or not isinstance(table, dict):
            raise ConfigError(f"{path}: unknown section [{section}]")
        for key, value in table.items():
            if key not in SECTIONS[section]:
                raise ConfigError(f"{path}: unknown key {key!r} "
                                  f"in [{section}]")
            if section == "paths":
                value = str(path.parent / value)
            flat[key] = value
    return RunConfig(**flat)

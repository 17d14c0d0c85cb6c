import json

import numpy as np
import pytest

from locolm.corpus import Post
from locolm.divergence import build_catalog
from locolm.vocab import build_vocabulary
from locolm.network import ModelConfig, init_params, forward
from locolm.sampler import Batch
from locolm.checkpoint import (CheckpointError, CheckpointMismatch,
                               save_checkpoint, load_checkpoint, blob_path,
                               check_compatible)

POSTS = [Post("1", ["a", "b", "c", "a"], {"bar", "food"}),
         Post("2", ["b", "a", "d"], {"park"})]

@pytest.fixture(scope="module")
def setting():
    v = build_vocabulary(POSTS, K=3)
    catalog = build_catalog(POSTS, frequent_threshold=1)
    config = ModelConfig.for_variant("setup3", v.n_classes, catalog,
                                     place_dense=2, embed_dim=3, lstm_cells=4,
                                     dense_units=5)
    params = init_params(config, seed=9)
    return v, catalog, config, params

@pytest.fixture
def saved(setting, tmp_path):
    v, catalog, config, params = setting
    path = tmp_path / "setup3.json"
    save_checkpoint(path, params, config, v, catalog,
                    {"seed": 9, "holdout": 0.1, "epoch": 3})
    return path

def test_roundtrip(setting, saved):
    v, catalog, config, params = setting
    ckpt = load_checkpoint(saved)
    assert ckpt.config == config
    assert ckpt.vocab == v
    assert ckpt.catalog == catalog
    assert ckpt.meta == {"seed": 9, "holdout": 0.1, "epoch": 3}
    assert list(ckpt.params) == list(params)
    for name in params:
        np.testing.assert_array_equal(ckpt.params[name], params[name])
    batch = Batch(np.array([[v.pad_id, 0, 1, 2]]), np.ones((1, 3)),
                  np.array([0]))
    assert np.array_equal(forward(ckpt.params, config, batch),
                          forward(params, config, batch))

def test_manifest_layout(setting, saved):
    manifest = json.loads(saved.read_text())
    assert manifest["format"] == "locolm-checkpoint"
    assert manifest["gate_order"] == "ifgo"
    assert manifest["arrays"][0] == {"name": "embedding", "shape": [5, 3]}
    size = sum(int(np.prod(a["shape"])) for a in manifest["arrays"])
    assert blob_path(saved).stat().st_size == 4 * size

def test_deterministic_bytes(setting, tmp_path):
    v, catalog, config, params = setting
    for name in ("one.json", "two.json"):
        save_checkpoint(tmp_path / name, params, config, v, catalog,
                        {"seed": 9})
    assert (tmp_path / "one.json").read_bytes() == \
        (tmp_path / "two.json").read_bytes()
    assert (tmp_path / "one.bin").read_bytes() == \
        (tmp_path / "two.bin").read_bytes()

def test_truncated_blob(saved):
    blob = blob_path(saved)
    blob.write_bytes(blob.read_bytes()[:-8])
    with pytest.raises(CheckpointError, match="checksum"):
        load_checkpoint(saved)

def test_missing_and_foreign_files(tmp_path, saved):
    with pytest.raises(CheckpointError):
        load_checkpoint(tmp_path / "absent.json")
    blob_path(saved).unlink()
    with pytest.raises(CheckpointError):
        load_checkpoint(saved)
    other = tmp_path / "other.json"
    other.write_text('{"format": "something-else"}')
    blob_path(other).write_bytes(b"")
    with pytest.raises(CheckpointError, match="not a locolm-checkpoint"):
        load_checkpoint(other)

def test_shape_mismatch_on_save(setting, tmp_path):
    v, catalog, config, params = setting
    with pytest.raises(CheckpointError):
        save_checkpoint(tmp_path / "x.json", params,
                        config._replace(lstm_cells=5), v, catalog)

def test_compatibility(setting, saved, tmp_path):
    v, catalog, config, params = setting
    ckpt = load_checkpoint(saved)
    check_compatible({"a": ckpt, "b": ckpt})
    other_vocab = build_vocabulary(POSTS, K=2)
    base_config = ModelConfig("baseline", other_vocab.n_classes, embed_dim=3,
                              lstm_cells=4, dense_units=5)
    path = tmp_path / "baseline.json"
    save_checkpoint(path, init_params(base_config), base_config, other_vocab,
                    catalog, {"seed": 9, "holdout": 0.1})
    with pytest.raises(CheckpointMismatch) as info:
        check_compatible({"setup3": ckpt, "baseline": load_checkpoint(path)})
    assert info.value.field == "vocab"
    reseeded = ckpt._replace(meta={**ckpt.meta, "seed": 1})
    with pytest.raises(CheckpointMismatch, match="seed"):
        check_compatible({"x": ckpt, "y": reseeded})

def test_manifest_without_vocabulary(saved):
    manifest = json.loads(saved.read_text())
    del manifest["vocab"]
    saved.write_text(json.dumps(manifest))
    with pytest.raises(CheckpointError, match="invalid manifest"):
        load_checkpoint(saved)
    manifest["vocab"] = {"K": 3}
    saved.write_text(json.dumps(manifest))
    with pytest.raises(CheckpointError, match="invalid manifest"):
        load_checkpoint(saved)

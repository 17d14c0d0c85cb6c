"""
End-to-end check that the place input is used: in this corpus the word after
"at the" depends only on the location type of the post.
"""

import numpy as np
import pytest

from locolm.corpus import Post
from locolm.divergence import build_catalog
from locolm.vocab import build_vocabulary, encode
from locolm.sampler import window_examples, split_dataset
from locolm.network import ModelConfig, TrainConfig, init_params, train
from locolm.evaluate import evaluate_network

TYPES = ("bank", "cafe", "gym", "park")
#: share of the dominant word among the ten words of a type
DOMINANT = 0.55

def _corpus(n_posts=20000, seed=21):
    rng = np.random.default_rng(seed)
    posts = []
    for i in range(n_posts):
        tag = TYPES[rng.integers(len(TYPES))]
        if rng.random() < DOMINANT:
            word = f"{tag}0"
        else:
            word = f"{tag}{rng.integers(1, 10)}"
        posts.append(Post(str(i), ["at", "the", word], {tag}))
    return posts

@pytest.fixture(scope="module")
def experiment():
    posts = _corpus()
    v = build_vocabulary(posts, K=1000)
    catalog = build_catalog(posts)
    the = encode(v, "the")
    examples = [ex for post in posts
                for ex in window_examples(post, v, catalog)
                if ex.context[-1] == the]
    train_set, validation_set = split_dataset(examples, 0.2, seed=1)
    results = {}
    for variant in ("baseline", "setup1"):
        config = ModelConfig.for_variant(variant, v.n_classes, catalog,
                                         embed_dim=8, lstm_cells=8,
                                         dense_units=16,
                                         embeddings_frozen=False)
        params = init_params(config, seed=3)
        params, _ = train(params, config,
                          TrainConfig(epochs=5, batch_size=64,
                                      learning_rate=0.01, seed=3),
                          train_set, validation_set)
        results[variant] = evaluate_network(params, config, validation_set,
                                            catalog)
    return results

def test_vocabulary_shrinks():
    v = build_vocabulary(_corpus(200), K=1000)
    assert v.K <= 2 + 10 * len(TYPES)

def test_baseline_cannot_see_the_place(experiment):
    # the best it can do is the most frequent dominant word
    assert experiment["baseline"].top1 < 0.25

def test_place_input_helps(experiment):
    gain = experiment["setup1"].top1 - experiment["baseline"].top1
    assert gain >= 0.10
    assert experiment["setup1"].top5 >= experiment["baseline"].top5

def test_every_type_benefits(experiment):
    for tag in TYPES:
        assert experiment["setup1"].by_location[tag][0] > 0.35

r"""
Location-conditioned next-word classifier, implemented directly on numpy with
exact reverse-mode gradients.

Structure
.........

1. The `window` context class ids are embedded (pretrained rows, optionally
   frozen).
2. Two stacked bidirectional LSTM layers run over the window. Each direction
   of a layer is an independent LSTM; the forward one reads positions
   ``0 .. T-1``, the backward one ``T-1 .. 0``, and the layer's output at a
   position is the concatenation of both directions' states there.
3. The readout concatenates the last forward state (position ``T-1``) with
   the last backward state (position ``0``) of the top layer.
4. The place branch joins the readout by concatenation: absent for the
   *baseline*, the raw multi-hot vector for *setup1* (full catalog) and
   *setup2* (frequent subset), and a tanh projection to `place_dense` units
   for *setup3* (frequent subset).
5. A tanh dense layer, then a linear output layer over ``K + 2`` classes with
   softmax.

LSTM Cell
.........

Gates are packed in the order input, forget, cell, output (``ifgo``) along the
last axis of ``W`` (input → gates), ``U`` (recurrent) and ``b``:

.. math::

    i = \sigma(z_i),\; f = \sigma(z_f),\; g = \tanh(z_g),\; o = \sigma(z_o)
    \qquad c_t = f c_{t-1} + i g, \qquad h_t = o \tanh(c_t)

with :math:`z = x_t W + h_{t-1} U + b` and zero initial states. Forget-gate
biases start at 1.

Parameters are stored as float32 (the checkpoint dtype) and every computation
runs in float64.
"""

import logging
import math
from collections import namedtuple
from typing import Sequence

import numpy as np

from .sampler import Batch, stack_examples

logger = logging.getLogger(__name__)

VARIANTS = ("baseline", "setup1", "setup2", "setup3")

#: Gate packing order of the LSTM weight arrays
GATE_ORDER = "ifgo"

class DimensionError(ValueError):
    pass

class NonFiniteLossError(ArithmeticError):
    "The loss of a batch is not finite"

    def __init__(self, message, batch_index=None):
        super().__init__(message)
        self.batch_index = batch_index

class DivergenceError(ArithmeticError):
    """
    Training diverged. `params` holds the parameters at the end of the last
    completed epoch and `log` the metrics recorded so far.
    """

    def __init__(self, message, params, log, batch_index=None):
        super().__init__(message)
        self.params, self.log, self.batch_index = params, log, batch_index

_configbase = namedtuple("ModelConfig",
    "variant, n_classes, embed_dim, lstm_cells, lstm_layers, dense_units, "
    "place_input_dim, place_dense, window, embeddings_frozen")
class ModelConfig(_configbase):
    """
    Network shape. Wiring rules are checked on construction: the baseline has
    no place input, the setups do, and only *setup3* has a place projection
    layer. Use :meth:`for_variant` to derive the place width from a catalog.
    """

    __slots__ = ()

    def __new__(cls, variant="baseline", n_classes=1002, embed_dim=100,
                lstm_cells=256, lstm_layers=2, dense_units=256,
                place_input_dim=0, place_dense=0, window=4,
                embeddings_frozen=True):
        if variant not in VARIANTS:
            raise ValueError(f"unknown variant {variant!r}")
        if variant == "baseline" and place_input_dim:
            raise ValueError("baseline must not have a place input")
        if variant != "baseline" and place_input_dim < 1:
            raise ValueError(f"{variant} needs a place input")
        if (variant == "setup3") != (place_dense > 0):
            raise ValueError("only setup3 has a place dense layer")
        if n_classes < 3:
            raise ValueError("need at least one word class besides unk and pad")
        for name, value in (("embed_dim", embed_dim), ("lstm_cells", lstm_cells),
                            ("lstm_layers", lstm_layers), ("window", window),
                            ("dense_units", dense_units)):
            if value < 1:
                raise ValueError(f"{name} must be positive")
        return super().__new__(cls, variant, int(n_classes), int(embed_dim),
                               int(lstm_cells), int(lstm_layers),
                               int(dense_units), int(place_input_dim),
                               int(place_dense), int(window),
                               bool(embeddings_frozen))

    @classmethod
    def for_variant(cls, variant, n_classes, catalog=None, place_dense=16,
                    **kwargs) -> "ModelConfig":
        """
        Config of `variant`: *setup1* sees every type of `catalog`, *setup2*
        and *setup3* only its frequent subset.
        """
        if variant == "baseline":
            width = 0
        elif catalog is None:
            raise ValueError(f"{variant} needs a location catalog")
        else:
            width = catalog.width(frequent_only=variant != "setup1")
        return cls(variant, n_classes, place_input_dim=width,
                   place_dense=place_dense if variant == "setup3" else 0,
                   **kwargs)

    @property
    def frequent_only(self) -> bool:
        "Whether place vectors cover only the frequent location subset"
        return self.variant in ("setup2", "setup3")

    @property
    def pad_id(self) -> int:
        return self.n_classes - 1

    @property
    def unk_id(self) -> int:
        return self.n_classes - 2

    def to_json(self) -> dict:
        return dict(self._asdict())

    @classmethod
    def from_json(cls, d: dict) -> "ModelConfig":
        return cls(**d)

_trainbase = namedtuple("TrainConfig",
    "epochs, batch_size, learning_rate, beta1, beta2, eps, seed")
class TrainConfig(_trainbase):
    "Mini-batch Adam settings"

    __slots__ = ()

    def __new__(cls, epochs=20, batch_size=128, learning_rate=1e-3,
                beta1=0.9, beta2=0.999, eps=1e-8, seed=0):
        if epochs < 1:
            raise ValueError("epochs must be at least 1")
        if batch_size < 1:
            raise ValueError("batch size must be at least 1")
        return super().__new__(cls, int(epochs), int(batch_size),
                               float(learning_rate), float(beta1),
                               float(beta2), float(eps), int(seed))

class NetworkParams(dict):
    """
    Ordered name → array mapping of every weight of a network, plus the set of
    embedding rows that stay frozen during training. Iteration order is the
    checkpoint order given by :func:`param_shapes`.
    """

    def __init__(self, arrays=(), frozen_rows=()):
        super().__init__(arrays)
        self.frozen_rows = frozenset(int(r) for r in frozen_rows)

    def copy(self) -> "NetworkParams":
        return NetworkParams({k: v.copy() for k, v in self.items()},
                             self.frozen_rows)

    def shapes(self) -> dict:
        return {k: v.shape for k, v in self.items()}

def _lstm_names(layer, direction):
    stem = f"lstm{layer}_{direction}"
    return f"{stem}_W", f"{stem}_U", f"{stem}_b"

def param_shapes(config: ModelConfig) -> list:
    "``(name, shape)`` of every array of `config`, in checkpoint order"
    H, E = config.lstm_cells, config.embed_dim
    shapes = [("embedding", (config.n_classes, E))]
    for layer in range(1, config.lstm_layers + 1):
        n_in = E if layer == 1 else 2 * H
        for direction in ("fw", "bw"):
            W, U, b = _lstm_names(layer, direction)
            shapes += [(W, (n_in, 4 * H)), (U, (H, 4 * H)), (b, (4 * H,))]
    if config.variant == "setup3":
        shapes += [("place_W", (config.place_input_dim, config.place_dense)),
                   ("place_b", (config.place_dense,))]
    shapes += [("dense_W", (2 * H + _place_width(config), config.dense_units)),
               ("dense_b", (config.dense_units,)),
               ("out_W", (config.dense_units, config.n_classes)),
               ("out_b", (config.n_classes,))]
    return shapes

def _place_width(config):
    if config.variant == "setup3":
        return config.place_dense
    return config.place_input_dim

def _fan_in_uniform(rng, shape):
    limit = 1.0 / math.sqrt(shape[0])
    return rng.uniform(-limit, limit, shape)

def init_params(config: ModelConfig, embeddings=None, vocab=None,
                pretrained: NetworkParams = None, seed: int = 0,
                dtype=np.float32) -> NetworkParams:
    """
    Allocate and initialize every array of `config`.

    - Embedding rows of vocabulary words found in `embeddings` are copied from
      it (and frozen when ``config.embeddings_frozen``); all other rows,
      ``<unk>`` and padding included, are drawn from a zero-mean normal with
      the table's per-dimension standard deviation (0.1 without a table).
    - Weight matrices are drawn uniformly in :math:`\\pm 1/\\sqrt{fan_{in}}`,
      biases start at zero except forget-gate biases at 1.
    - With `pretrained`, every array it shares with `config` is copied. The
      place-input rows of ``dense_W`` and the place projection are drawn from
      a normal with the mean and standard deviation of the pretrained
      ``dense_W`` (and ``dense_b`` for the bias).

    raises:
        DimensionError: the embedding table or `pretrained` does not fit
    """
    rng = np.random.default_rng(seed)
    H = config.lstm_cells
    arrays, frozen = {}, set()
    for name, shape in param_shapes(config):
        if name == "embedding":
            std = 0.1
            if embeddings is not None:
                if embeddings.dim != config.embed_dim:
                    raise DimensionError(
                        f"embedding table has dimension {embeddings.dim}, "
                        f"config expects {config.embed_dim}")
                std = embeddings.stddev()
            arr = rng.normal(0.0, 1.0, shape) * std
            if embeddings is not None and vocab is not None:
                for cls_id, word in enumerate(vocab.class_to_word):
                    vec = embeddings.lookup(word)
                    if vec is not None:
                        arr[cls_id] = vec
                        if config.embeddings_frozen:
                            frozen.add(cls_id)
        elif len(shape) == 1:
            arr = np.zeros(shape)
            if name.startswith("lstm") and name.endswith("_b"):
                arr[H:2 * H] = 1.0
        else:
            arr = _fan_in_uniform(rng, shape)
        arrays[name] = arr
    if pretrained is not None:
        _adopt_pretrained(arrays, config, pretrained, rng)
        frozen = set(pretrained.frozen_rows) if config.embeddings_frozen \
            else set()
    return NetworkParams({k: v.astype(dtype) for k, v in arrays.items()},
                         frozen)

def _adopt_pretrained(arrays, config, pretrained, rng):
    dense_W = np.asarray(pretrained["dense_W"], dtype=np.float64)
    dense_b = np.asarray(pretrained["dense_b"], dtype=np.float64)
    n_shared = 2 * config.lstm_cells
    for name, arr in arrays.items():
        if name == "dense_W":
            if (dense_W.shape[0] < n_shared
                    or dense_W.shape[1] != arr.shape[1]):
                raise DimensionError(
                    f"pretrained dense_W has shape {dense_W.shape}, "
                    f"cannot seed {arr.shape}")
            arr[:n_shared] = dense_W[:n_shared]
            arr[n_shared:] = rng.normal(dense_W.mean(), dense_W.std(),
                                        arr[n_shared:].shape)
        elif name in ("place_W", "place_b"):
            src = dense_W if name == "place_W" else dense_b
            arr[...] = rng.normal(src.mean(), src.std(), arr.shape)
        elif name in pretrained:
            if pretrained[name].shape != arr.shape:
                raise DimensionError(
                    f"pretrained {name} has shape {pretrained[name].shape}, "
                    f"expected {arr.shape}")
            arr[...] = pretrained[name]
        else:
            raise DimensionError(f"pretrained parameters lack {name}")

def _sigmoid(z):
    return 0.5 * (1.0 + np.tanh(0.5 * z))

def lstm_sequence(X, W, U, b, reverse=False):
    """
    Run one LSTM direction over ``X`` of shape (batch, steps, features).
    Returns the states at every position, shape (batch, steps, cells), and the
    cache needed by :func:`lstm_sequence_backward`. With `reverse` the
    sequence is read from the last position to the first; states are still
    indexed by position.
    """
    B, T, _ = X.shape
    H = U.shape[0]
    h, c = np.zeros((B, H)), np.zeros((B, H))
    states = np.zeros((B, T, H))
    cache = []
    for t in (range(T - 1, -1, -1) if reverse else range(T)):
        z = X[:, t] @ W + h @ U + b
        i, f = _sigmoid(z[:, :H]), _sigmoid(z[:, H:2 * H])
        g, o = np.tanh(z[:, 2 * H:3 * H]), _sigmoid(z[:, 3 * H:])
        h_prev, c_prev = h, c
        c = f * c_prev + i * g
        tc = np.tanh(c)
        h = o * tc
        states[:, t] = h
        cache.append((t, h_prev, c_prev, i, f, g, o, tc))
    return states, cache

def lstm_sequence_backward(dstates, X, W, U, cache):
    "Gradients of one LSTM direction: ``(dX, dW, dU, db)``"
    B, _, H = dstates.shape
    dX = np.zeros_like(X)
    dW, dU, db = np.zeros_like(W), np.zeros_like(U), np.zeros(4 * H)
    dh_next, dc_next = np.zeros((B, H)), np.zeros((B, H))
    for t, h_prev, c_prev, i, f, g, o, tc in reversed(cache):
        dh = dstates[:, t] + dh_next
        dc = dc_next + dh * o * (1.0 - tc ** 2)
        dz = np.concatenate([
            dc * g * i * (1.0 - i),
            dc * c_prev * f * (1.0 - f),
            dc * i * (1.0 - g ** 2),
            dh * tc * o * (1.0 - o),
        ], axis=1)
        dc_next = dc * f
        dW += X[:, t].T @ dz
        dU += h_prev.T @ dz
        db += dz.sum(axis=0)
        dX[:, t] = dz @ W.T
        dh_next = dz @ U.T
    return dX, dW, dU, db

def _as_float(params):
    return {k: np.asarray(v, dtype=np.float64) for k, v in params.items()}

def _check_batch(config, batch):
    if batch.context.ndim != 2 or batch.context.shape[1] != config.window:
        raise DimensionError(f"context width must be {config.window}")
    if config.place_input_dim and (batch.place.ndim != 2 or
            batch.place.shape[1] != config.place_input_dim):
        raise DimensionError(
            f"place vector width {batch.place.shape[-1]} does not match "
            f"{config.variant}'s place input of {config.place_input_dim}")
    if batch.context.size and (batch.context.min() < 0 or
                               batch.context.max() >= config.n_classes):
        raise DimensionError("context class id out of range")

def _forward(P, config, batch):
    cache = {"layers": []}
    X = P["embedding"][batch.context]
    for layer in range(1, config.lstm_layers + 1):
        Wf, Uf, bf = (P[n] for n in _lstm_names(layer, "fw"))
        Wb, Ub, bb = (P[n] for n in _lstm_names(layer, "bw"))
        Hf, cf = lstm_sequence(X, Wf, Uf, bf)
        Hb, cb = lstm_sequence(X, Wb, Ub, bb, reverse=True)
        cache["layers"].append((X, cf, cb))
        X = np.concatenate([Hf, Hb], axis=2)
    H = config.lstm_cells
    readout = np.concatenate([X[:, -1, :H], X[:, 0, H:]], axis=1)
    parts = [readout]
    if config.variant == "setup3":
        q = np.tanh(batch.place @ P["place_W"] + P["place_b"])
        cache["place_q"] = q
        parts.append(q)
    elif config.place_input_dim:
        parts.append(batch.place)
    joined = np.concatenate(parts, axis=1)
    a = np.tanh(joined @ P["dense_W"] + P["dense_b"])
    logits = a @ P["out_W"] + P["out_b"]
    logits = logits - logits.max(axis=1, keepdims=True)
    log_probs = logits - np.log(np.exp(logits).sum(axis=1, keepdims=True))
    cache.update(T=X.shape[1], joined=joined, a=a)
    return log_probs, cache

def forward(params: NetworkParams, config: ModelConfig, batch) -> np.ndarray:
    """
    Softmax output of the network for `batch` (a list of
    :class:`~locolm.sampler.TrainingExample` or a stacked
    :class:`~locolm.sampler.Batch`), shape (batch, ``n_classes``). The
    baseline never reads the place vectors.
    """
    batch = stack_examples(batch)
    _check_batch(config, batch)
    log_probs, _ = _forward(_as_float(params), config, batch)
    return np.exp(log_probs)

def loss_and_gradients(params: NetworkParams, config: ModelConfig, batch,
                       batch_index: int = None) -> tuple:
    """
    Mean cross-entropy of the targets of `batch` and its gradient with respect
    to every array of `params`, returned as ``(loss, grads)`` with `grads`
    keyed like `params`. Frozen embedding rows get zero gradient.

    raises:
        NonFiniteLossError: the loss is not finite; carries `batch_index`
    """
    batch = stack_examples(batch)
    if not len(batch.target):
        raise ValueError("cannot compute a loss on an empty batch")
    _check_batch(config, batch)
    P = _as_float(params)
    log_probs, cache = _forward(P, config, batch)
    B = len(batch.target)
    rows = np.arange(B)
    loss = float(-log_probs[rows, batch.target].mean())
    if not math.isfinite(loss):
        raise NonFiniteLossError(f"loss is {loss}", batch_index)

    grads = {}
    dlogits = np.exp(log_probs)
    dlogits[rows, batch.target] -= 1.0
    dlogits /= B
    a, joined = cache["a"], cache["joined"]
    grads["out_W"] = a.T @ dlogits
    grads["out_b"] = dlogits.sum(axis=0)
    da = (dlogits @ P["out_W"].T) * (1.0 - a ** 2)
    grads["dense_W"] = joined.T @ da
    grads["dense_b"] = da.sum(axis=0)
    djoined = da @ P["dense_W"].T
    H = config.lstm_cells
    if config.variant == "setup3":
        q = cache["place_q"]
        dq = djoined[:, 2 * H:] * (1.0 - q ** 2)
        grads["place_W"] = batch.place.T @ dq
        grads["place_b"] = dq.sum(axis=0)

    dX = np.zeros((B, cache["T"], 2 * H))
    dX[:, -1, :H] = djoined[:, :H]
    dX[:, 0, H:] += djoined[:, H:2 * H]
    for layer in range(config.lstm_layers, 0, -1):
        X, cf, cb = cache["layers"][layer - 1]
        names_f, names_b = _lstm_names(layer, "fw"), _lstm_names(layer, "bw")
        dXf, *gf = lstm_sequence_backward(dX[:, :, :H], X, P[names_f[0]],
                                          P[names_f[1]], cf)
        dXb, *gb = lstm_sequence_backward(dX[:, :, H:], X, P[names_b[0]],
                                          P[names_b[1]], cb)
        grads.update(zip(names_f, gf))
        grads.update(zip(names_b, gb))
        dX = dXf + dXb

    demb = np.zeros_like(P["embedding"])
    np.add.at(demb, batch.context, dX)
    frozen = getattr(params, "frozen_rows", ())
    if config.embeddings_frozen and frozen:
        demb[sorted(frozen)] = 0.0
    grads["embedding"] = demb
    return loss, {name: grads[name] for name in params}

def rank_classes(params: NetworkParams, config: ModelConfig, batch,
                 k_best: int, chunk: int = 1024) -> np.ndarray:
    """
    Top `k_best` class ids for every example of `batch`, shape
    (batch, `k_best`), most probable first. Padding is never ranked and equal
    probabilities rank by ascending class id.
    """
    if not 1 <= k_best <= config.n_classes - 1:
        raise ValueError(f"k_best must lie in 1..{config.n_classes - 1}")
    batch = stack_examples(batch)
    _check_batch(config, batch)
    P = _as_float(params)
    ranked = []
    for start in range(0, len(batch.target), chunk):
        part = Batch(*(arr[start:start + chunk] for arr in batch))
        log_probs, _ = _forward(P, config, part)
        log_probs[:, config.pad_id] = -np.inf
        ranked.append(np.argsort(-log_probs, axis=1,
                                 kind="stable")[:, :k_best])
    if not ranked:
        return np.zeros((0, k_best), dtype=np.int64)
    return np.concatenate(ranked)

def predict_topk(params: NetworkParams, config: ModelConfig, example,
                 k_best: int = 5) -> list:
    "The `k_best` most probable next classes for one example"
    return rank_classes(params, config, [example], k_best)[0].tolist()

class Adam:
    """
    Adaptive moment estimation. Keeps first and second moment estimates per
    array and updates parameters in place.
    """

    def __init__(self, learning_rate=1e-3, beta1=0.9, beta2=0.999, eps=1e-8):
        self.lr, self.beta1, self.beta2, self.eps = (
            learning_rate, beta1, beta2, eps)
        self.m, self.v, self.t = {}, {}, 0

    def step(self, params: NetworkParams, grads: dict):
        self.t += 1
        c1 = 1.0 - self.beta1 ** self.t
        c2 = 1.0 - self.beta2 ** self.t
        for name, g in grads.items():
            m = self.m.get(name, 0.0) * self.beta1 + (1.0 - self.beta1) * g
            v = self.v.get(name, 0.0) * self.beta2 + (1.0 - self.beta2) * g * g
            self.m[name], self.v[name] = m, v
            params[name] -= self.lr * (m / c1) / (np.sqrt(v / c2) + self.eps)

EpochMetrics = namedtuple("EpochMetrics",
                          "epoch, train_loss, val_top1, val_top5")

def _accuracy(params, config, batch):
    if not len(batch.target):
        return float("nan"), float("nan")
    k = min(5, config.n_classes - 1)
    ranked = rank_classes(params, config, batch, k)
    hits = ranked == batch.target[:, None]
    return float(hits[:, 0].mean()), float(hits.any(axis=1).mean())

def train(params: NetworkParams, config: ModelConfig, train_cfg: TrainConfig,
          train_set: Sequence, validation_set: Sequence,
          start_epoch: int = 0) -> tuple:
    """
    Mini-batch Adam training from epoch `start_epoch` up to
    ``train_cfg.epochs``. The input `params` are not modified. After each
    epoch the mean training loss and validation top-1/top-5 accuracy are
    logged. Shuffling draws from one generator seeded with
    ``train_cfg.seed``, so a run is reproducible.

    returns:
        ``(params, log)`` with `log` a list of :class:`EpochMetrics`

    raises:
        DivergenceError: a batch loss became non-finite; the error carries
            the parameters of the last completed epoch
    """
    params = params.copy()
    if start_epoch >= train_cfg.epochs:
        return params, []
    train_batch = stack_examples(train_set)
    val_batch = stack_examples(validation_set) if len(validation_set) else \
        Batch(np.zeros((0, config.window), dtype=np.int64),
              np.zeros((0, config.place_input_dim)), np.zeros(0, np.int64))
    n = len(train_batch.target)
    if not n:
        raise ValueError("cannot train on an empty training set")
    opt = Adam(train_cfg.learning_rate, train_cfg.beta1, train_cfg.beta2,
               train_cfg.eps)
    rng = np.random.default_rng(train_cfg.seed)
    log, last_good = [], params.copy()
    for epoch in range(start_epoch, train_cfg.epochs):
        order = rng.permutation(n)
        total = 0.0
        for index, start in enumerate(range(0, n, train_cfg.batch_size)):
            idx = order[start:start + train_cfg.batch_size]
            part = Batch(*(arr[idx] for arr in train_batch))
            try:
                loss, grads = loss_and_gradients(params, config, part, index)
            except NonFiniteLossError as e:
                raise DivergenceError(
                    f"epoch {epoch + 1}, batch {index}: {e}", last_good,
                    log, index) from e
            opt.step(params, grads)
            total += loss * len(idx)
        top1, top5 = _accuracy(params, config, val_batch)
        log.append(EpochMetrics(epoch + 1, total / n, top1, top5))
        logger.info("epoch %d: loss %.4f top1 %.4f top5 %.4f",
                    epoch + 1, total / n, top1, top5)
        last_good = params.copy()
    return params, log

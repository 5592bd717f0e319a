"""Small 1-D CNN classifier: init, forward, backprop, Adam training, k-fold
cross-validation, evaluation, and model file persistence.

Layer order: conv(8,k3)+ReLU -> conv(8,k3)+ReLU -> inverted dropout (train
only) -> max-pool(2, stride 2, floor) -> flatten -> dense(64)+ReLU ->
dense(n_classes) logits.  Softmax cross-entropy loss.

Model file layout (little-endian):

    magic   8 bytes  b"SSVEPCNN"
    version u16      currently 1
    config  u32 x6   input_len, conv_filters, kernel_size, pool_size,
                     hidden_units, n_classes
    dropout f64
    weights f64      conv1_w, conv1_b, conv2_w, conv2_b,
                     dense1_w, dense1_b, dense2_w, dense2_b (C-order)
"""

from __future__ import annotations

import struct
from dataclasses import dataclass, field

import numpy as np

from . import kernels
from .eegio import LabeledExample

MODEL_MAGIC = b"SSVEPCNN"
MODEL_VERSION = 1


class ModelFormatError(ValueError):
    """Malformed model file."""


class DivergenceError(RuntimeError):
    """Training produced a non-finite loss."""

    def __init__(self, epoch: int):
        super().__init__(f"non-finite loss at epoch {epoch}")
        self.epoch = epoch


@dataclass(frozen=True)
class CnnConfig:
    input_len: int = 33
    conv_filters: int = 8
    kernel_size: int = 3
    dropout_rate: float = 0.25
    pool_size: int = 2
    hidden_units: int = 64
    n_classes: int = 3

    def __post_init__(self):
        if min(self.input_len, self.conv_filters, self.kernel_size,
               self.pool_size, self.hidden_units, self.n_classes) <= 0:
            raise ValueError("all architecture counts must be positive")
        if not 0.0 <= self.dropout_rate < 1.0:
            raise ValueError("dropout_rate must be in [0, 1)")
        if self.input_len < 2 * (self.kernel_size - 1) + self.pool_size:
            raise ValueError("input_len too small for two convs plus pooling")

    @property
    def conv_out_len(self) -> int:
        return self.input_len - 2 * (self.kernel_size - 1)

    @property
    def pooled_len(self) -> int:
        return self.conv_out_len // self.pool_size

    @property
    def flatten_len(self) -> int:
        return self.pooled_len * self.conv_filters


@dataclass
class CnnParams:
    conv1_w: np.ndarray
    conv1_b: np.ndarray
    conv2_w: np.ndarray
    conv2_b: np.ndarray
    dense1_w: np.ndarray
    dense1_b: np.ndarray
    dense2_w: np.ndarray
    dense2_b: np.ndarray

    def tensors(self):
        return [
            self.conv1_w, self.conv1_b, self.conv2_w, self.conv2_b,
            self.dense1_w, self.dense1_b, self.dense2_w, self.dense2_b,
        ]

    def copy(self) -> "CnnParams":
        return CnnParams(*[t.copy() for t in self.tensors()])


@dataclass(frozen=True)
class TrainConfig:
    learning_rate: float = 1e-3
    batch_size: int = 32
    epochs: int = 50
    seed: int = 0
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8

    def __post_init__(self):
        if self.learning_rate < 0:
            raise ValueError("learning_rate must be non-negative")
        if self.batch_size < 1 or self.epochs < 1:
            raise ValueError("batch_size and epochs must be >= 1")


@dataclass
class Metrics:
    accuracy: float
    confusion: np.ndarray
    mean_ce: float


@dataclass
class EpochStats:
    epoch: int
    train_loss: float
    train_acc: float
    val_loss: float | None = None
    val_acc: float | None = None


def init_params(config: CnnConfig, seed: int) -> CnnParams:
    """He-normal weights (std sqrt(2/fan_in)) from PCG64(seed); zero biases."""
    rng = np.random.Generator(np.random.PCG64(seed))

    def he(shape, fan_in):
        return rng.standard_normal(shape) * np.sqrt(2.0 / fan_in)

    c, k, h, n = (config.conv_filters, config.kernel_size,
                  config.hidden_units, config.n_classes)
    return CnnParams(
        conv1_w=he((c, 1, k), 1 * k),
        conv1_b=np.zeros(c),
        conv2_w=he((c, c, k), c * k),
        conv2_b=np.zeros(c),
        dense1_w=he((h, config.flatten_len), config.flatten_len),
        dense1_b=np.zeros(h),
        dense2_w=he((n, h), h),
        dense2_b=np.zeros(n),
    )


def _features_matrix(batch) -> np.ndarray:
    """Accept FeatureVectors, LabeledExamples, or raw arrays; -> [B, L]."""
    rows = []
    for item in batch:
        if isinstance(item, LabeledExample):
            item = item.features
        rows.append(np.asarray(getattr(item, "values", item), dtype=np.float64))
    return np.stack(rows)


def _forward_batch(params: CnnParams, config: CnnConfig, x: np.ndarray,
                   train_mode: bool, rng: np.random.Generator | None):
    """x: [B, L] -> (logits [B, n_classes], cache for backprop)."""
    b = x.shape[0]
    z1 = kernels.conv1d_forward(x[:, None, :], params.conv1_w, params.conv1_b)
    a1 = np.maximum(z1, 0.0)
    z2 = kernels.conv1d_forward(a1, params.conv2_w, params.conv2_b)
    a2 = np.maximum(z2, 0.0)
    if train_mode and config.dropout_rate > 0.0:
        if rng is None:
            raise ValueError("train-mode forward with dropout needs an rng")
        keep = 1.0 - config.dropout_rate
        mask = (rng.random(a2.shape) < keep) / keep
    else:
        mask = np.ones_like(a2)
    d = a2 * mask
    p = config.pool_size
    lp = config.pooled_len
    pool_in = d[:, :, : lp * p].reshape(b, config.conv_filters, lp, p)
    pool_arg = pool_in.argmax(axis=3)
    pooled = np.take_along_axis(pool_in, pool_arg[..., None], axis=3)[..., 0]
    flat = pooled.reshape(b, -1)
    z3 = flat @ params.dense1_w.T + params.dense1_b
    a3 = np.maximum(z3, 0.0)
    logits = a3 @ params.dense2_w.T + params.dense2_b
    cache = (x, z1, a1, z2, mask, d, pool_arg, flat, z3, a3)
    return logits, cache


def forward(params: CnnParams, features, config: CnnConfig | None = None,
            train_mode: bool = False,
            rng: np.random.Generator | None = None) -> np.ndarray:
    """Single-example forward pass; eval mode is deterministic."""
    if config is None:
        config = CnnConfig(input_len=_infer_input_len(params))
    x = _features_matrix([features])
    if x.shape[1] != config.input_len:
        raise ValueError(
            f"feature length {x.shape[1]} != configured input_len {config.input_len}"
        )
    logits, _ = _forward_batch(params, config, x, train_mode, rng)
    return logits[0]


def _infer_input_len(params: CnnParams) -> int:
    pooled = params.dense1_w.shape[1] // params.conv1_w.shape[0]
    k = params.conv1_w.shape[2]
    return pooled * 2 + 2 * (k - 1)


def softmax(logits: np.ndarray) -> np.ndarray:
    z = logits - logits.max(axis=-1, keepdims=True)
    e = np.exp(z)
    return e / e.sum(axis=-1, keepdims=True)


def loss_and_grads(params: CnnParams, config: CnnConfig, x: np.ndarray,
                   y: np.ndarray, train_mode: bool = True,
                   rng: np.random.Generator | None = None):
    """Mean softmax cross-entropy and exact gradients (dropout masks fixed)."""
    if x.shape[0] == 0:
        raise ValueError("empty batch")
    b = x.shape[0]
    logits, cache = _forward_batch(params, config, x, train_mode, rng)
    (xin, z1, a1, z2, mask, d, pool_arg, flat, z3, a3) = cache
    probs = softmax(logits)
    loss = float(-np.mean(np.log(probs[np.arange(b), y] + 1e-300)))

    dlogits = probs.copy()
    dlogits[np.arange(b), y] -= 1.0
    dlogits /= b
    g_dense2_w = dlogits.T @ a3
    g_dense2_b = dlogits.sum(axis=0)
    da3 = dlogits @ params.dense2_w
    dz3 = da3 * (z3 > 0)
    g_dense1_w = dz3.T @ flat
    g_dense1_b = dz3.sum(axis=0)
    dflat = dz3 @ params.dense1_w
    p = config.pool_size
    lp = config.pooled_len
    dpooled = dflat.reshape(b, config.conv_filters, lp)
    dpool_in = np.zeros((b, config.conv_filters, lp, p))
    np.put_along_axis(dpool_in, pool_arg[..., None], dpooled[..., None], axis=3)
    dd = np.zeros_like(d)
    dd[:, :, : lp * p] = dpool_in.reshape(b, config.conv_filters, lp * p)
    da2 = dd * mask
    dz2 = da2 * (z2 > 0)
    da1, g_conv2_w, g_conv2_b = kernels.conv1d_backward(a1, params.conv2_w, dz2)
    dz1 = da1 * (z1 > 0)
    _, g_conv1_w, g_conv1_b = kernels.conv1d_backward(
        xin[:, None, :], params.conv1_w, dz1
    )
    grads = CnnParams(
        conv1_w=g_conv1_w, conv1_b=g_conv1_b,
        conv2_w=g_conv2_w, conv2_b=g_conv2_b,
        dense1_w=g_dense1_w, dense1_b=g_dense1_b,
        dense2_w=g_dense2_w, dense2_b=g_dense2_b,
    )
    return loss, grads


def dataset_arrays(examples) -> tuple[np.ndarray, np.ndarray]:
    """List of LabeledExample -> (X [B, L], y [B])."""
    x = _features_matrix(examples)
    y = np.array([ex.class_index for ex in examples], dtype=np.int64)
    return x, y


def train(train_set, config: TrainConfig, net_config: CnnConfig,
          val_set=None) -> tuple[CnnParams, list[EpochStats]]:
    """Mini-batch Adam over shuffled epochs; deterministic per seed."""
    if isinstance(train_set, tuple):
        x, y = train_set
    else:
        if len(train_set) == 0:
            raise ValueError("empty training set")
        x, y = dataset_arrays(train_set)
    if x.shape[0] == 0:
        raise ValueError("empty training set")
    val = None
    if val_set is not None:
        val = val_set if isinstance(val_set, tuple) else dataset_arrays(val_set)
    params = init_params(net_config, config.seed)
    rng = np.random.Generator(np.random.PCG64(config.seed + 1))
    m = [np.zeros_like(t) for t in params.tensors()]
    v = [np.zeros_like(t) for t in params.tensors()]
    step = 0
    history: list[EpochStats] = []
    n = x.shape[0]
    for epoch in range(config.epochs):
        perm = rng.permutation(n)
        for start in range(0, n, config.batch_size):
            idx = perm[start : start + config.batch_size]
            xb, yb = x[idx], y[idx]
            loss, grads = loss_and_grads(
                params, net_config, xb, yb, train_mode=True, rng=rng
            )
            if not np.isfinite(loss):
                raise DivergenceError(epoch)
            step += 1
            ts = params.tensors()
            gs = grads.tensors()
            for i, (t, g) in enumerate(zip(ts, gs)):
                m[i] = config.beta1 * m[i] + (1 - config.beta1) * g
                v[i] = config.beta2 * v[i] + (1 - config.beta2) * g * g
                mhat = m[i] / (1 - config.beta1**step)
                vhat = v[i] / (1 - config.beta2**step)
                t -= config.learning_rate * mhat / (np.sqrt(vhat) + config.eps)
        # history uses eval-mode metrics so it is deterministic and
        # comparable across epochs (dropout-free)
        train_metrics = evaluate(params, (x, y), net_config)
        stats = EpochStats(
            epoch=epoch,
            train_loss=train_metrics.mean_ce,
            train_acc=train_metrics.accuracy,
        )
        if val is not None:
            vm = evaluate(params, val, net_config)
            stats.val_loss = vm.mean_ce
            stats.val_acc = vm.accuracy
        history.append(stats)
    return params, history


def predict_logits(params: CnnParams, config: CnnConfig, x: np.ndarray) -> np.ndarray:
    logits, _ = _forward_batch(params, config, x, train_mode=False, rng=None)
    return logits


def evaluate(params: CnnParams, dataset, config: CnnConfig) -> Metrics:
    """Eval-mode metrics; argmax ties break toward the lowest class index."""
    if not isinstance(dataset, tuple) and len(dataset) == 0:
        raise ValueError("empty dataset")
    x, y = dataset if isinstance(dataset, tuple) else dataset_arrays(dataset)
    if x.shape[0] == 0:
        raise ValueError("empty dataset")
    logits = predict_logits(params, config, x)
    probs = softmax(logits)
    pred = logits.argmax(axis=1)
    nc = config.n_classes
    confusion = np.zeros((nc, nc), dtype=np.int64)
    for yt, yp in zip(y, pred):
        confusion[yt, yp] += 1
    ce = float(-np.mean(np.log(probs[np.arange(len(y)), y] + 1e-300)))
    return Metrics(
        accuracy=float(np.trace(confusion) / confusion.sum()),
        confusion=confusion,
        mean_ce=ce,
    )


def cross_validate(train_set, k: int, train_config: TrainConfig,
                   net_config: CnnConfig) -> list[tuple[Metrics, Metrics]]:
    """Stratified k-fold CV with fresh init per fold; deterministic per seed."""
    x, y = train_set if isinstance(train_set, tuple) else dataset_arrays(train_set)
    if x.shape[0] < k:
        raise ValueError(f"need at least {k} examples for {k}-fold CV")
    rng = np.random.Generator(np.random.PCG64(train_config.seed))
    folds: list[list[int]] = [[] for _ in range(k)]
    for c in sorted(set(y.tolist())):
        idx = np.nonzero(y == c)[0]
        if idx.size < k:
            raise ValueError(f"class {c} has fewer than {k} examples")
        perm = rng.permutation(idx.size)
        for j, i in enumerate(idx[perm]):
            folds[j % k].append(int(i))
    results = []
    for i in range(k):
        val_idx = np.array(sorted(folds[i]))
        tr_idx = np.array(sorted(j for f in range(k) if f != i for j in folds[f]))
        params, _ = train((x[tr_idx], y[tr_idx]), train_config, net_config)
        results.append(
            (
                evaluate(params, (x[tr_idx], y[tr_idx]), net_config),
                evaluate(params, (x[val_idx], y[val_idx]), net_config),
            )
        )
    return results


def save_model(params: CnnParams, config: CnnConfig, path) -> None:
    blob = bytearray(MODEL_MAGIC)
    blob += struct.pack(
        "<HIIIIII",
        MODEL_VERSION,
        config.input_len,
        config.conv_filters,
        config.kernel_size,
        config.pool_size,
        config.hidden_units,
        config.n_classes,
    )
    blob += struct.pack("<d", config.dropout_rate)
    for t in params.tensors():
        blob += np.ascontiguousarray(t, dtype="<f8").tobytes()
    with open(path, "wb") as fh:
        fh.write(bytes(blob))


def load_model(path) -> tuple[CnnParams, CnnConfig]:
    with open(path, "rb") as fh:
        raw = fh.read()
    if len(raw) < 10 or raw[:8] != MODEL_MAGIC:
        raise ModelFormatError("bad magic: not a model file")
    (version,) = struct.unpack_from("<H", raw, 8)
    if version != MODEL_VERSION:
        raise ModelFormatError(f"unsupported model version {version}")
    fields = struct.unpack_from("<IIIIII", raw, 10)
    (dropout,) = struct.unpack_from("<d", raw, 34)
    config = CnnConfig(
        input_len=fields[0],
        conv_filters=fields[1],
        kernel_size=fields[2],
        dropout_rate=dropout,
        pool_size=fields[3],
        hidden_units=fields[4],
        n_classes=fields[5],
    )
    shapes = [
        (config.conv_filters, 1, config.kernel_size),
        (config.conv_filters,),
        (config.conv_filters, config.conv_filters, config.kernel_size),
        (config.conv_filters,),
        (config.hidden_units, config.flatten_len),
        (config.hidden_units,),
        (config.n_classes, config.hidden_units),
        (config.n_classes,),
    ]
    off = 42
    tensors = []
    for shape in shapes:
        count = int(np.prod(shape))
        if off + 8 * count > len(raw):
            raise ModelFormatError("truncated weight payload")
        tensors.append(
            np.frombuffer(raw, dtype="<f8", count=count, offset=off)
            .reshape(shape)
            .copy()
        )
        off += 8 * count
    return CnnParams(*tensors), config

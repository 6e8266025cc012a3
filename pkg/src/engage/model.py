"""Trainable temporal regressor: single-layer LSTM over a window of frame
features, fully connected head, sigmoid output.

Forward, backpropagation through time, Adagrad updates, the training loop
with per-epoch uniform subsampling and early stopping, and bit-exact
checkpointing all live here. Arithmetic is float64 by default so gradient
checks are meaningful; float32 mode exists for speed.
"""

from __future__ import annotations

import json
import math
import struct
import zlib
from dataclasses import dataclass, field, replace

import numpy as np

from .dataset import WindowSample
from .errors import (
    BadMagic,
    CorruptPayload,
    DivergenceDetected,
    EmptyBatch,
    EmptyDataset,
    NonFiniteActivation,
    ShapeMismatch,
    VersionMismatch,
)

CHECKPOINT_MAGIC = b"EGCK"
CHECKPOINT_VERSION = 1

GATE_NAMES = ("W_i", "W_f", "W_g", "W_o")
BIAS_NAMES = ("b_i", "b_f", "b_g", "b_o")
PARAM_NAMES = GATE_NAMES + BIAS_NAMES + ("W_fc", "b_fc")


def _sigmoid(x):
    return 1.0 / (1.0 + np.exp(-x))


@dataclass(frozen=True)
class ModelParams:
    """LSTM gate weights acting on [x; h], biases, and the scalar head."""

    input_dim: int
    hidden_dim: int
    W_i: np.ndarray
    W_f: np.ndarray
    W_g: np.ndarray
    W_o: np.ndarray
    b_i: np.ndarray
    b_f: np.ndarray
    b_g: np.ndarray
    b_o: np.ndarray
    W_fc: np.ndarray  # (H,)
    b_fc: np.ndarray  # scalar, kept 0-d for uniform array handling

    def __post_init__(self):
        h, d = self.hidden_dim, self.input_dim
        for name in GATE_NAMES:
            if getattr(self, name).shape != (h, d + h):
                raise ShapeMismatch(f"{name}: {getattr(self, name).shape} != {(h, d + h)}")
        for name in BIAS_NAMES:
            if getattr(self, name).shape != (h,):
                raise ShapeMismatch(f"{name}: {getattr(self, name).shape} != {(h,)}")
        if self.W_fc.shape != (h,):
            raise ShapeMismatch(f"W_fc: {self.W_fc.shape} != {(h,)}")
        for name in PARAM_NAMES:
            if not np.all(np.isfinite(getattr(self, name))):
                raise ShapeMismatch(f"{name}: non-finite entries")

    def arrays(self) -> dict[str, np.ndarray]:
        return {name: getattr(self, name) for name in PARAM_NAMES}

    def with_arrays(self, arrays: dict[str, np.ndarray]) -> "ModelParams":
        return replace(self, **arrays)


def init_params(input_dim: int, hidden_dim: int, rng: np.random.Generator) -> ModelParams:
    """Glorot-uniform gate and head weights; forget-gate bias 1, others 0."""
    h, d = hidden_dim, input_dim
    bound = math.sqrt(6.0 / (d + h))
    gates = {name: rng.uniform(-bound, bound, (h, d + h)) for name in GATE_NAMES}
    fc_bound = math.sqrt(6.0 / (h + 1))
    return ModelParams(
        input_dim=d,
        hidden_dim=h,
        **gates,
        b_i=np.zeros(h),
        b_f=np.ones(h),
        b_g=np.zeros(h),
        b_o=np.zeros(h),
        W_fc=rng.uniform(-fc_bound, fc_bound, h),
        b_fc=np.zeros(()),
    )


@dataclass
class ForwardTape:
    """Per-step activations retained for backpropagation through time."""

    X: np.ndarray  # (B, w, d)
    i: np.ndarray  # (w, B, H)
    f: np.ndarray
    g: np.ndarray
    o: np.ndarray
    c: np.ndarray
    h: np.ndarray
    y: np.ndarray  # (B,)


def forward_batch(params: ModelParams, X: np.ndarray) -> tuple[np.ndarray, ForwardTape]:
    """LSTM recurrence over a (B, w, input_dim) batch; hidden and cell state
    start at zero for every sample."""
    if X.ndim != 3 or X.shape[2] != params.input_dim:
        raise ShapeMismatch(f"batch shape {X.shape}, input_dim {params.input_dim}")
    B, w, _ = X.shape
    H = params.hidden_dim
    dt = X.dtype
    i_s = np.empty((w, B, H), dt)
    f_s = np.empty((w, B, H), dt)
    g_s = np.empty((w, B, H), dt)
    o_s = np.empty((w, B, H), dt)
    c_s = np.empty((w, B, H), dt)
    h_s = np.empty((w, B, H), dt)
    h = np.zeros((B, H), dt)
    c = np.zeros((B, H), dt)
    for t in range(w):
        z = np.concatenate([X[:, t, :], h], axis=1)
        i = _sigmoid(z @ params.W_i.T + params.b_i)
        f = _sigmoid(z @ params.W_f.T + params.b_f)
        g = np.tanh(z @ params.W_g.T + params.b_g)
        o = _sigmoid(z @ params.W_o.T + params.b_o)
        c = f * c + i * g
        h = o * np.tanh(c)
        i_s[t], f_s[t], g_s[t], o_s[t], c_s[t], h_s[t] = i, f, g, o, c, h
    score = h @ params.W_fc + params.b_fc
    y = _sigmoid(score)
    if not np.all(np.isfinite(y)):
        raise NonFiniteActivation("non-finite output")
    return y, ForwardTape(X=X, i=i_s, f=f_s, g=g_s, o=o_s, c=c_s, h=h_s, y=y)


def forward(params: ModelParams, sample: WindowSample) -> tuple[float, ForwardTape]:
    """Engagement prediction in [0,1] for one window sample."""
    y, tape = forward_batch(params, np.asarray(sample.features)[None])
    return float(y[0]), tape


def _backward(params: ModelParams, tape: ForwardTape, dy: np.ndarray) -> dict[str, np.ndarray]:
    """Gradients of a scalar loss with dL/dy given per sample."""
    X = tape.X
    B, w, d = X.shape
    H = params.hidden_dim
    grads = {name: np.zeros_like(arr) for name, arr in params.arrays().items()}

    ds = dy * tape.y * (1.0 - tape.y)  # through the output sigmoid
    grads["W_fc"] += ds @ tape.h[-1]
    grads["b_fc"] += ds.sum()
    dh = ds[:, None] * params.W_fc
    dc = np.zeros((B, H), X.dtype)
    for t in range(w - 1, -1, -1):
        i, f, g, o, c = tape.i[t], tape.f[t], tape.g[t], tape.o[t], tape.c[t]
        tanh_c = np.tanh(c)
        c_prev = tape.c[t - 1] if t > 0 else np.zeros_like(c)
        h_prev = tape.h[t - 1] if t > 0 else np.zeros((B, H), X.dtype)
        z = np.concatenate([X[:, t, :], h_prev], axis=1)

        do = dh * tanh_c
        dc = dc + dh * o * (1.0 - tanh_c**2)
        di = dc * g
        df = dc * c_prev
        dg = dc * i
        dpre_i = di * i * (1.0 - i)
        dpre_f = df * f * (1.0 - f)
        dpre_g = dg * (1.0 - g**2)
        dpre_o = do * o * (1.0 - o)

        grads["W_i"] += dpre_i.T @ z
        grads["W_f"] += dpre_f.T @ z
        grads["W_g"] += dpre_g.T @ z
        grads["W_o"] += dpre_o.T @ z
        grads["b_i"] += dpre_i.sum(axis=0)
        grads["b_f"] += dpre_f.sum(axis=0)
        grads["b_g"] += dpre_g.sum(axis=0)
        grads["b_o"] += dpre_o.sum(axis=0)

        dz = dpre_i @ params.W_i + dpre_f @ params.W_f + dpre_g @ params.W_g + dpre_o @ params.W_o
        dh = dz[:, d:]
        dc = dc * f
    return grads


def loss_and_gradients(
    params: ModelParams, batch: list[WindowSample]
) -> tuple[float, dict[str, np.ndarray]]:
    """Mean squared error over the batch and its gradients via BPTT."""
    if not batch:
        raise EmptyBatch("empty batch")
    X = np.stack([np.asarray(s.features) for s in batch])
    labels = np.array([s.label for s in batch], X.dtype)
    return _loss_and_gradients_arrays(params, X, labels)


def _loss_and_gradients_arrays(params, X, labels):
    y, tape = forward_batch(params, X)
    resid = y - labels
    mse = float(resid @ resid) / len(labels)
    dy = 2.0 * resid / len(labels)
    return mse, _backward(params, tape, dy)


@dataclass
class OptimizerState:
    """Adagrad squared-gradient accumulators, one per parameter array."""

    accumulators: dict[str, np.ndarray]
    lr: float = 1e-4
    epsilon: float = 1e-8

    @classmethod
    def fresh(cls, params: ModelParams, lr: float = 1e-4, epsilon: float = 1e-8):
        return cls(
            accumulators={k: np.zeros_like(v) for k, v in params.arrays().items()},
            lr=lr,
            epsilon=epsilon,
        )


def adagrad_step(
    params: ModelParams, grads: dict[str, np.ndarray], state: OptimizerState
) -> tuple[ModelParams, OptimizerState]:
    """G += g^2; theta -= lr * g / (sqrt(G) + eps)."""
    new_arrays = {}
    new_acc = {}
    for name, theta in params.arrays().items():
        g = grads[name]
        if g.shape != theta.shape:
            raise ShapeMismatch(f"{name}: grad {g.shape} vs param {theta.shape}")
        G = state.accumulators[name] + g * g
        new_acc[name] = G
        new_arrays[name] = theta - state.lr * g / (np.sqrt(G) + state.epsilon)
    return params.with_arrays(new_arrays), OptimizerState(
        accumulators=new_acc, lr=state.lr, epsilon=state.epsilon
    )


@dataclass(frozen=True)
class TrainConfig:
    batch_size: int = 16
    epoch_fraction: float = 0.2
    patience: int = 3
    max_epochs: int = 40
    seed: int = 0
    w: int = 10
    lr: float = 1e-4
    epsilon: float = 1e-8
    input_dim: int = 2048
    hidden_dim: int = 128

    def __post_init__(self):
        if self.batch_size < 1 or self.max_epochs < 1 or self.w < 1:
            raise ValueError("batch_size, max_epochs and w must be positive")
        if not (0.0 < self.epoch_fraction <= 1.0):
            raise ValueError("epoch_fraction must be in (0,1]")
        if self.patience < 0:
            raise ValueError("patience must be >= 0")

    def to_dict(self) -> dict:
        return {
            "batch_size": self.batch_size,
            "epoch_fraction": self.epoch_fraction,
            "patience": self.patience,
            "max_epochs": self.max_epochs,
            "seed": self.seed,
            "w": self.w,
            "lr": self.lr,
            "epsilon": self.epsilon,
            "input_dim": self.input_dim,
            "hidden_dim": self.hidden_dim,
        }


@dataclass
class Checkpoint:
    """Full training state: reloading resumes bit-identically."""

    params: ModelParams
    optimizer: OptimizerState
    epoch: int
    history: list[tuple[float, float]]  # (train_mse, val_mse) per epoch
    config: TrainConfig
    rng_state: bytes
    best_epoch: int
    best_params: ModelParams


def _mse_over(params: ModelParams, X: np.ndarray, labels: np.ndarray, chunk: int = 256) -> float:
    total = 0.0
    for lo in range(0, len(labels), chunk):
        y, _ = forward_batch(params, X[lo : lo + chunk])
        r = y - labels[lo : lo + chunk]
        total += float(r @ r)
    return total / len(labels)


def train(
    train_set: list[WindowSample],
    val_set: list[WindowSample],
    config: TrainConfig,
    resume: Checkpoint | None = None,
    log=None,
) -> Checkpoint:
    """Train the recurrent regressor.

    Each epoch draws ceil(epoch_fraction * N) training samples uniformly
    without replacement, updates per batch with Adagrad, then evaluates the
    full validation MSE. Stops when validation has not improved for
    `patience` epochs or at max_epochs. The returned checkpoint carries both
    the final state (for resuming) and the best-validation parameters.
    """
    if not train_set or not val_set:
        raise EmptyDataset("need non-empty train and validation sets")
    Xtr = np.stack([np.asarray(s.features) for s in train_set])
    ytr = np.array([s.label for s in train_set])
    Xva = np.stack([np.asarray(s.features) for s in val_set])
    yva = np.array([s.label for s in val_set])

    rng = np.random.default_rng(config.seed)
    if resume is None:
        params = init_params(config.input_dim, config.hidden_dim, rng)
        opt = OptimizerState.fresh(params, lr=config.lr, epsilon=config.epsilon)
        history: list[tuple[float, float]] = []
        start_epoch = 0
    else:
        params = resume.params
        opt = resume.optimizer
        history = list(resume.history)
        start_epoch = resume.epoch
        rng.bit_generator.state = json.loads(resume.rng_state.decode("utf-8"))

    best_epoch = -1
    best_val = math.inf
    best_params = params
    for e, (_, v) in enumerate(history):
        if v < best_val:
            best_val, best_epoch = v, e
    if resume is not None and best_epoch == resume.best_epoch:
        best_params = resume.best_params

    n = len(train_set)
    k = math.ceil(config.epoch_fraction * n)
    epoch = start_epoch
    while epoch < config.max_epochs:
        idx = rng.choice(n, size=k, replace=False)
        train_losses = []
        for lo in range(0, k, config.batch_size):
            sel = idx[lo : lo + config.batch_size]
            mse, grads = _loss_and_gradients_arrays(params, Xtr[sel], ytr[sel])
            if not math.isfinite(mse):
                raise DivergenceDetected(f"non-finite loss at epoch {epoch}")
            params, opt = adagrad_step(params, grads, opt)
            train_losses.append(mse)
        val_mse = _mse_over(params, Xva, yva)
        if not math.isfinite(val_mse):
            raise DivergenceDetected(f"non-finite validation loss at epoch {epoch}")
        history.append((float(np.mean(train_losses)), val_mse))
        if val_mse < best_val:
            best_val = val_mse
            best_epoch = epoch
            best_params = params
        if log:
            log(epoch, history[-1])
        epoch += 1
        if epoch - 1 - best_epoch > config.patience:
            break

    rng_state = json.dumps(rng.bit_generator.state, sort_keys=True).encode("utf-8")
    return Checkpoint(
        params=params,
        optimizer=opt,
        epoch=epoch,
        history=history,
        config=config,
        rng_state=rng_state,
        best_epoch=best_epoch,
        best_params=best_params,
    )


# ---------------------------------------------------------------- checkpoint
#
# Little-endian: magic "EGCK", version u32, u32-length JSON header (config,
# epoch, history, best_epoch, array manifest), then each array as float64
# bytes followed by its crc32, then the u32-length rng_state bytes + crc32.

def _pack_blob(out: list[bytes], blob: bytes) -> None:
    out.append(struct.pack("<I", len(blob)))
    out.append(blob)
    out.append(struct.pack("<I", zlib.crc32(blob)))


def save_checkpoint(ck: Checkpoint, path: str) -> None:
    sections: list[tuple[str, np.ndarray]] = []
    for prefix, arrays in (
        ("params", ck.params.arrays()),
        ("best", ck.best_params.arrays()),
        ("acc", ck.optimizer.accumulators),
    ):
        for name, arr in arrays.items():
            sections.append((f"{prefix}.{name}", np.asarray(arr, np.float64)))

    header = {
        "config": ck.config.to_dict(),
        "epoch": ck.epoch,
        "best_epoch": ck.best_epoch,
        "history": ck.history,
        "lr": ck.optimizer.lr,
        "epsilon": ck.optimizer.epsilon,
        "arrays": [[name, list(arr.shape)] for name, arr in sections],
    }
    out: list[bytes] = [CHECKPOINT_MAGIC, struct.pack("<I", CHECKPOINT_VERSION)]
    _pack_blob(out, json.dumps(header, sort_keys=True).encode("utf-8"))
    for _, arr in sections:
        _pack_blob(out, arr.astype("<f8").tobytes())
    _pack_blob(out, ck.rng_state)
    with open(path, "wb") as f:
        f.write(b"".join(out))


def _read_blob(data: bytes, off: int) -> tuple[bytes, int]:
    if off + 4 > len(data):
        raise CorruptPayload("truncated length field")
    (n,) = struct.unpack_from("<I", data, off)
    off += 4
    if off + n + 4 > len(data):
        raise CorruptPayload("truncated payload")
    blob = data[off : off + n]
    off += n
    (crc,) = struct.unpack_from("<I", data, off)
    if zlib.crc32(blob) != crc:
        raise CorruptPayload("checksum mismatch")
    return blob, off + 4


def load_checkpoint(path: str) -> Checkpoint:
    with open(path, "rb") as f:
        data = f.read()
    if len(data) < 8:
        raise CorruptPayload("file too small")
    if data[:4] != CHECKPOINT_MAGIC:
        raise BadMagic(f"{path}: bad magic {data[:4]!r}")
    (version,) = struct.unpack_from("<I", data, 4)
    if version != CHECKPOINT_VERSION:
        raise VersionMismatch(f"{path}: version {version}")
    header_blob, off = _read_blob(data, 8)
    header = json.loads(header_blob.decode("utf-8"))
    arrays: dict[str, np.ndarray] = {}
    for name, shape in header["arrays"]:
        blob, off = _read_blob(data, off)
        arrays[name] = np.frombuffer(blob, "<f8").reshape(shape).copy()
    rng_state, off = _read_blob(data, off)

    config = TrainConfig(**header["config"])
    d, h = config.input_dim, config.hidden_dim

    def build_params(prefix: str) -> ModelParams:
        kw = {name: arrays[f"{prefix}.{name}"] for name in PARAM_NAMES}
        kw["b_fc"] = kw["b_fc"].reshape(())
        return ModelParams(input_dim=d, hidden_dim=h, **kw)

    opt = OptimizerState(
        accumulators={name: arrays[f"acc.{name}"] for name in PARAM_NAMES},
        lr=header["lr"],
        epsilon=header["epsilon"],
    )
    return Checkpoint(
        params=build_params("params"),
        optimizer=opt,
        epoch=header["epoch"],
        history=[tuple(x) for x in header["history"]],
        config=config,
        rng_state=rng_state,
        best_epoch=header["best_epoch"],
        best_params=build_params("best"),
    )

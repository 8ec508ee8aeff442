"""Small fully-connected value networks, trained with hand-rolled backprop.

Architecture is fixed: ReLU hidden layers (default three of width 64)
and a linear output head with one slot per action tag. Weights are
float64 in memory and initialized scaled-uniform by fan-in. Training
minimizes a weighted, action-masked squared error

    loss = sum_rows w_r * sum_cols m_rc (pred - target)^2 / sum_rows w_r

with global gradient-norm clipping and Adam. A second loss variant
applies a masked softmax to the head first and regresses probability
vectors; both losses are checked against finite differences in tests.

Serialized network layout (all integers little-endian):

    bytes 0..7   magic "DRMNET1\\0"
    u8           game-id length, then that many utf-8 bytes
    u32          number of layer sizes, then each size as u32
    per layer    weight matrix as float32, row-major (fan_in x fan_out),
                 then the float32 bias vector

Weights are quantized to float32 on save; loading widens back to
float64, so save -> load -> save reproduces a file byte for byte.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass, field
from typing import Callable, List, Protocol, Sequence, Tuple

import numpy as np

from .errors import TrainingDivergedError

MAGIC = b"DRMNET1\x00"

ADAM_BETA1 = 0.9
ADAM_BETA2 = 0.999
ADAM_EPS = 1e-8


@dataclass
class MLPParams:
    dims: Tuple[int, ...]
    weights: List[np.ndarray]
    biases: List[np.ndarray]
    game_id: str = ""


Grads = Tuple[List[np.ndarray], List[np.ndarray]]


def mlp_init(dims: Sequence[int], rng: np.random.Generator, game_id: str = "") -> MLPParams:
    """Fresh parameters, each layer uniform on +-1/sqrt(fan_in)."""
    dims = tuple(int(d) for d in dims)
    if len(dims) < 2 or any(d <= 0 for d in dims):
        raise ValueError(f"bad layer sizes {dims}")
    weights, biases = [], []
    for fan_in, fan_out in zip(dims[:-1], dims[1:]):
        bound = 1.0 / np.sqrt(fan_in)
        weights.append(rng.uniform(-bound, bound, size=(fan_in, fan_out)))
        biases.append(rng.uniform(-bound, bound, size=fan_out))
    return MLPParams(dims, weights, biases, game_id)


def default_dims(input_dim: int, hidden: int = 64, n_hidden: int = 3, out: int = 3) -> Tuple[int, ...]:
    return (input_dim,) + (hidden,) * n_hidden + (out,)


def forward(params: MLPParams, x: np.ndarray) -> np.ndarray:
    """Network output for a single row or a batch."""
    single = np.ndim(x) == 1
    h = np.atleast_2d(np.asarray(x, dtype=float))
    last = len(params.weights) - 1
    for i, (w, b) in enumerate(zip(params.weights, params.biases)):
        h = h @ w + b
        if i != last:
            np.maximum(h, 0.0, out=h)
    return h[0] if single else h


def _forward_cached(params: MLPParams, x: np.ndarray):
    acts = [np.atleast_2d(np.asarray(x, dtype=float))]
    h = acts[0]
    last = len(params.weights) - 1
    for i, (w, b) in enumerate(zip(params.weights, params.biases)):
        h = h @ w + b
        if i != last:
            h = np.maximum(h, 0.0)
        acts.append(h)
    return h, acts


@dataclass
class TrainBatch:
    features: np.ndarray  # (n, input_dim)
    targets: np.ndarray  # (n, out_dim)
    masks: np.ndarray  # (n, out_dim), 1 where the target slot counts
    weights: np.ndarray  # (n,) per-row loss weights


def _backprop(params: MLPParams, acts: List[np.ndarray], dout: np.ndarray) -> Grads:
    dW: List[np.ndarray] = [np.empty(0)] * len(params.weights)
    db: List[np.ndarray] = [np.empty(0)] * len(params.weights)
    delta = dout
    for i in range(len(params.weights) - 1, -1, -1):
        dW[i] = acts[i].T @ delta
        db[i] = delta.sum(axis=0)
        if i > 0:
            delta = (delta @ params.weights[i].T) * (acts[i] > 0.0)
    return dW, db


def loss_and_grads(params: MLPParams, batch: TrainBatch) -> Tuple[float, Grads]:
    """Weighted masked MSE and its parameter gradients."""
    out, acts = _forward_cached(params, batch.features)
    w_total = float(batch.weights.sum())
    if w_total <= 0.0:
        raise ValueError("batch weights sum to zero")
    err = (out - batch.targets) * batch.masks
    loss = float((batch.weights @ (err**2).sum(axis=1)) / w_total)
    dout = 2.0 * err * batch.weights[:, None] / w_total
    return loss, _backprop(params, acts, dout)


def masked_softmax(logits: np.ndarray, masks: np.ndarray) -> np.ndarray:
    """Row-wise softmax over unmasked slots; masked slots get probability 0."""
    z = np.where(masks > 0, logits, -np.inf)
    z = z - z.max(axis=-1, keepdims=True)
    e = np.exp(z)
    return e / e.sum(axis=-1, keepdims=True)


def softmax_loss_and_grads(params: MLPParams, batch: TrainBatch) -> Tuple[float, Grads]:
    """Weighted MSE between masked-softmax outputs and target distributions."""
    out, acts = _forward_cached(params, batch.features)
    w_total = float(batch.weights.sum())
    if w_total <= 0.0:
        raise ValueError("batch weights sum to zero")
    p = masked_softmax(out, batch.masks)
    err = (p - batch.targets) * batch.masks
    loss = float((batch.weights @ (err**2).sum(axis=1)) / w_total)
    derr = 2.0 * err * batch.weights[:, None] / w_total
    # softmax jacobian: dL/dz_k = p_k * (dL/dp_k - sum_j dL/dp_j p_j)
    inner = (derr * p).sum(axis=1, keepdims=True)
    dout = p * (derr - inner)
    return loss, _backprop(params, acts, dout)


def clip_grad_norm(grads: Grads, max_norm: float) -> Tuple[Grads, float]:
    """Scale all gradients together so their global L2 norm is at most max_norm."""
    dW, db = grads
    sq = sum(float((g**2).sum()) for g in dW) + sum(float((g**2).sum()) for g in db)
    norm = float(np.sqrt(sq))
    if norm <= max_norm or norm == 0.0:
        return grads, norm
    scale = max_norm / norm
    return ([g * scale for g in dW], [g * scale for g in db]), norm


@dataclass
class AdamState:
    step: int
    m_w: List[np.ndarray]
    v_w: List[np.ndarray]
    m_b: List[np.ndarray]
    v_b: List[np.ndarray]


def adam_init(params: MLPParams) -> AdamState:
    return AdamState(
        0,
        [np.zeros_like(w) for w in params.weights],
        [np.zeros_like(w) for w in params.weights],
        [np.zeros_like(b) for b in params.biases],
        [np.zeros_like(b) for b in params.biases],
    )


def adam_step(
    params: MLPParams, state: AdamState, grads: Grads, lr: float
) -> Tuple[MLPParams, AdamState]:
    """One bias-corrected Adam update; returns fresh params and state."""
    dW, db = grads
    t = state.step + 1
    c1 = 1.0 - ADAM_BETA1**t
    c2 = 1.0 - ADAM_BETA2**t

    def upd(p, m, v, g):
        m2 = ADAM_BETA1 * m + (1 - ADAM_BETA1) * g
        v2 = ADAM_BETA2 * v + (1 - ADAM_BETA2) * g**2
        p2 = p - lr * (m2 / c1) / (np.sqrt(v2 / c2) + ADAM_EPS)
        return p2, m2, v2

    new_w, new_b = [], []
    m_w, v_w, m_b, v_b = [], [], [], []
    for p, m, v, g in zip(params.weights, state.m_w, state.v_w, dW):
        p2, m2, v2 = upd(p, m, v, g)
        new_w.append(p2)
        m_w.append(m2)
        v_w.append(v2)
    for p, m, v, g in zip(params.biases, state.m_b, state.v_b, db):
        p2, m2, v2 = upd(p, m, v, g)
        new_b.append(p2)
        m_b.append(m2)
        v_b.append(v2)
    return MLPParams(params.dims, new_w, new_b, params.game_id), AdamState(t, m_w, v_w, m_b, v_b)


class BatchSource(Protocol):
    def __len__(self) -> int: ...

    def batch(self, idx: np.ndarray) -> TrainBatch: ...


@dataclass
class TrainResult:
    params: MLPParams
    final_loss: float
    mean_loss: float
    skipped: bool = False  # True when the source was empty


def train(
    params: MLPParams,
    source: BatchSource,
    n_batches: int,
    batch_size: int,
    lr: float,
    rng: np.random.Generator,
    reset: bool = False,
    clip: float = 1.0,
    loss_fn: Callable[[MLPParams, TrainBatch], Tuple[float, Grads]] = loss_and_grads,
) -> TrainResult:
    """Minibatch training run; samples uniformly with replacement.

    An empty source is a no-op that keeps the parameters and flags the
    result. ``reset`` reinitializes the parameters first; the optimizer
    state is fresh for every call either way.
    """
    n = len(source)
    if n == 0:
        import logging

        logging.getLogger(__name__).warning("empty buffer: skipping training run")
        return TrainResult(params, float("nan"), float("nan"), skipped=True)
    if reset:
        params = mlp_init(params.dims, rng, params.game_id)
    state = adam_init(params)
    total = 0.0
    loss = 0.0
    for _ in range(n_batches):
        idx = rng.integers(0, n, size=batch_size)
        loss, grads = loss_fn(params, source.batch(idx))
        if not np.isfinite(loss):
            raise TrainingDivergedError(f"training loss became {loss}")
        grads, _ = clip_grad_norm(grads, clip)
        params, state = adam_step(params, state, grads, lr)
        total += loss
    return TrainResult(params, loss, total / max(n_batches, 1))


# -- serialization -----------------------------------------------------------


def net_to_bytes(params: MLPParams) -> bytes:
    game = params.game_id.encode("utf-8")
    if len(game) > 255:
        raise ValueError("game id too long")
    parts = [MAGIC, struct.pack("<B", len(game)), game, struct.pack("<I", len(params.dims))]
    parts.extend(struct.pack("<I", d) for d in params.dims)
    for w, b in zip(params.weights, params.biases):
        parts.append(np.ascontiguousarray(w, dtype="<f4").tobytes())
        parts.append(np.ascontiguousarray(b, dtype="<f4").tobytes())
    return b"".join(parts)


def net_from_bytes(data: bytes) -> MLPParams:
    if data[: len(MAGIC)] != MAGIC:
        raise ValueError("not a serialized network (bad magic)")
    off = len(MAGIC)
    (glen,) = struct.unpack_from("<B", data, off)
    off += 1
    game_id = data[off : off + glen].decode("utf-8")
    off += glen
    (ndims,) = struct.unpack_from("<I", data, off)
    off += 4
    dims = struct.unpack_from(f"<{ndims}I", data, off)
    off += 4 * ndims
    weights, biases = [], []
    for fan_in, fan_out in zip(dims[:-1], dims[1:]):
        w = np.frombuffer(data, dtype="<f4", count=fan_in * fan_out, offset=off)
        off += 4 * fan_in * fan_out
        b = np.frombuffer(data, dtype="<f4", count=fan_out, offset=off)
        off += 4 * fan_out
        weights.append(w.reshape(fan_in, fan_out).astype(float))
        biases.append(b.astype(float))
    if off != len(data):
        raise ValueError(f"{len(data) - off} trailing bytes in network file")
    return MLPParams(tuple(dims), weights, biases, game_id)


def save_net(params: MLPParams, path) -> None:
    with open(path, "wb") as fh:
        fh.write(net_to_bytes(params))


def load_net(path) -> MLPParams:
    with open(path, "rb") as fh:
        return net_from_bytes(fh.read())

"""Minimal float64 neural-net numerics with hand-written backward passes.

Everything the regression model needs lives here: affine maps, pointwise
nonlinearities, row softmax, layer normalization, inverted dropout, the
concordance correlation coefficient (CCC) and its loss, AdamW, central
finite-difference gradient checking, and a JSON checkpoint format.  All
arrays are float64 and gradients are exact analytic expressions, so the
model is verifiable against finite differences to tight tolerances.

Conventions: data is row-major, one sample per row.  Parameters are 2-D
(biases are shaped (1, n)).  Backward functions take the upstream
gradient last and return gradients in the same order as the forward
inputs.
"""

from __future__ import annotations

import json
import math
from pathlib import Path

import numpy as np

from .errors import NumericalFailure, ShapeMismatch

LAYER_NORM_EPS = 1e-5
CHECKPOINT_VERSION = "msf-ser-ckpt-v1"


def seeded_rng(seed: int) -> np.random.Generator:
    return np.random.Generator(np.random.PCG64(seed))


class Param:
    """A named trainable array with a gradient accumulator."""

    def __init__(self, name: str, value):
        self.name = name
        self.value = np.array(value, dtype=np.float64)
        if self.value.ndim != 2:
            raise ShapeMismatch(
                f"param {name!r} must be 2-D, got shape {self.value.shape}")
        self.grad = np.zeros_like(self.value)

    def zero_grad(self) -> None:
        self.grad[...] = 0.0

    def __repr__(self) -> str:
        return f"Param({self.name!r}, shape={self.value.shape})"


def glorot_uniform(rng: np.random.Generator, fan_in: int, fan_out: int) -> np.ndarray:
    limit = math.sqrt(6.0 / (fan_in + fan_out))
    return rng.uniform(-limit, limit, size=(fan_in, fan_out))


# ---------------------------------------------------------------- affine

def linear_fwd(x: np.ndarray, w: np.ndarray, b: np.ndarray) -> np.ndarray:
    if x.shape[1] != w.shape[0]:
        raise ShapeMismatch(
            f"linear: input cols {x.shape[1]} != weight rows {w.shape[0]}")
    return x @ w + b


def linear_bwd(x: np.ndarray, w: np.ndarray, dy: np.ndarray):
    dx = dy @ w.T
    dw = x.T @ dy
    db = dy.sum(axis=0, keepdims=True)
    return dx, dw, db


# -------------------------------------------------------- nonlinearities

def sigmoid(x: np.ndarray) -> np.ndarray:
    out = np.empty_like(x)
    pos = x >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-x[pos]))
    ex = np.exp(x[~pos])
    out[~pos] = ex / (1.0 + ex)
    return out


def sigmoid_bwd(y: np.ndarray, dy: np.ndarray) -> np.ndarray:
    return dy * y * (1.0 - y)


def tanh_fwd(x: np.ndarray) -> np.ndarray:
    return np.tanh(x)


def tanh_bwd(y: np.ndarray, dy: np.ndarray) -> np.ndarray:
    return dy * (1.0 - y * y)


def relu(x: np.ndarray) -> np.ndarray:
    return np.maximum(x, 0.0)


def relu_bwd(x: np.ndarray, dy: np.ndarray) -> np.ndarray:
    return dy * (x > 0.0)


def softmax(x: np.ndarray, axis: int = -1) -> np.ndarray:
    shifted = x - np.max(x, axis=axis, keepdims=True)
    ex = np.exp(shifted)
    return ex / ex.sum(axis=axis, keepdims=True)


def softmax_bwd(y: np.ndarray, dy: np.ndarray, axis: int = -1) -> np.ndarray:
    inner = np.sum(dy * y, axis=axis, keepdims=True)
    return y * (dy - inner)


# ------------------------------------------------------------ layer norm

def layer_norm_fwd(x: np.ndarray, gamma: np.ndarray, beta: np.ndarray,
                   eps: float = LAYER_NORM_EPS):
    """Per-row normalization; returns (y, cache) for the backward pass."""
    mu = x.mean(axis=1, keepdims=True)
    var = ((x - mu) ** 2).mean(axis=1, keepdims=True)
    inv = 1.0 / np.sqrt(var + eps)
    xhat = (x - mu) * inv
    y = gamma * xhat + beta
    return y, (xhat, inv, gamma)


def layer_norm_bwd(cache, dy: np.ndarray):
    xhat, inv, gamma = cache
    d = xhat.shape[1]
    dgamma = (dy * xhat).sum(axis=0, keepdims=True)
    dbeta = dy.sum(axis=0, keepdims=True)
    dxhat = dy * gamma
    dx = inv / d * (d * dxhat
                    - dxhat.sum(axis=1, keepdims=True)
                    - xhat * (dxhat * xhat).sum(axis=1, keepdims=True))
    return dx, dgamma, dbeta


# --------------------------------------------------------------- dropout

def dropout_mask(rng: np.random.Generator, shape, rate: float,
                 train: bool) -> np.ndarray:
    """Inverted-dropout multiplier: 0 or 1/(1-rate) entries; ones in eval."""
    if not 0.0 <= rate < 1.0:
        raise ValueError(f"dropout rate must be in [0, 1), got {rate}")
    if not train or rate == 0.0:
        return np.ones(shape, dtype=np.float64)
    keep = rng.random(shape) >= rate
    return keep.astype(np.float64) / (1.0 - rate)


def dropout_fwd(x: np.ndarray, mask: np.ndarray) -> np.ndarray:
    return x * mask


def dropout_bwd(mask: np.ndarray, dy: np.ndarray) -> np.ndarray:
    return dy * mask


# ------------------------------------------------------------------- CCC

def ccc(pred: np.ndarray, target: np.ndarray) -> float:
    """Lin's concordance correlation, population moments.

    Two identical constant sequences are in perfect agreement (1.0); the
    degenerate zero denominator only happens in exactly that case.
    """
    pred = np.asarray(pred, dtype=np.float64).ravel()
    target = np.asarray(target, dtype=np.float64).ravel()
    if pred.shape != target.shape:
        raise ShapeMismatch(
            f"ccc: got {pred.shape} predictions vs {target.shape} targets")
    if pred.size == 0:
        raise ShapeMismatch("ccc: empty input")
    mu_p, mu_t = pred.mean(), target.mean()
    # A constant sequence has exactly zero residuals; computing them as
    # value - mean would leave rounding dust and a not-quite-zero score.
    dp = np.zeros_like(pred) if np.all(pred == pred[0]) else pred - mu_p
    dt = np.zeros_like(target) if np.all(target == target[0]) else target - mu_t
    var_p, var_t = (dp * dp).mean(), (dt * dt).mean()
    cov = (dp * dt).mean()
    denom = var_p + var_t + (mu_p - mu_t) ** 2
    if denom == 0.0:
        return 1.0
    return float(2.0 * cov / denom)


def ccc_columns(pred: np.ndarray, target: np.ndarray) -> np.ndarray:
    pred = np.atleast_2d(np.asarray(pred, dtype=np.float64))
    target = np.atleast_2d(np.asarray(target, dtype=np.float64))
    if pred.shape != target.shape:
        raise ShapeMismatch(
            f"ccc_columns: shape {pred.shape} vs {target.shape}")
    return np.array([ccc(pred[:, d], target[:, d]) for d in range(pred.shape[1])])


def ccc_loss(pred: np.ndarray, target: np.ndarray):
    """Sum over output dims of (1 - CCC), with the gradient w.r.t. pred.

    A degenerate column (zero denominator) contributes zero loss and
    zero gradient.
    """
    pred = np.asarray(pred, dtype=np.float64)
    target = np.asarray(target, dtype=np.float64)
    if pred.shape != target.shape or pred.ndim != 2:
        raise ShapeMismatch(
            f"ccc_loss: need matching 2-D arrays, got {pred.shape} vs {target.shape}")
    n = pred.shape[0]
    loss = 0.0
    dpred = np.zeros_like(pred)
    for d in range(pred.shape[1]):
        p, t = pred[:, d], target[:, d]
        mu_p, mu_t = p.mean(), t.mean()
        dp, dt = p - mu_p, t - mu_t
        var_p, var_t = (dp * dp).mean(), (dt * dt).mean()
        cov = (dp * dt).mean()
        denom = var_p + var_t + (mu_p - mu_t) ** 2
        if denom == 0.0:
            continue
        c = 2.0 * cov / denom
        loss += 1.0 - c
        dcov = dt / n
        ddenom = 2.0 * dp / n + 2.0 * (mu_p - mu_t) / n
        dc = (2.0 * dcov * denom - 2.0 * cov * ddenom) / (denom * denom)
        dpred[:, d] = -dc
    return float(loss), dpred


# ----------------------------------------------------------------- AdamW

class AdamW:
    """Adam with decoupled weight decay; one shared step counter."""

    def __init__(self, lr: float = 1e-5, betas: tuple[float, float] = (0.9, 0.999),
                 eps: float = 1e-8, weight_decay: float = 0.0):
        self.lr = lr
        self.beta1, self.beta2 = betas
        self.eps = eps
        self.weight_decay = weight_decay
        self.t = 0
        self._m: dict[str, np.ndarray] = {}
        self._v: dict[str, np.ndarray] = {}

    def step(self, params) -> None:
        self.t += 1
        bc1 = 1.0 - self.beta1 ** self.t
        bc2 = 1.0 - self.beta2 ** self.t
        for p in params:
            m = self._m.setdefault(p.name, np.zeros_like(p.value))
            v = self._v.setdefault(p.name, np.zeros_like(p.value))
            m *= self.beta1
            m += (1.0 - self.beta1) * p.grad
            v *= self.beta2
            v += (1.0 - self.beta2) * p.grad * p.grad
            mhat = m / bc1
            vhat = v / bc2
            p.value -= self.lr * (mhat / (np.sqrt(vhat) + self.eps)
                                  + self.weight_decay * p.value)


# ---------------------------------------------------------- grad checking

def grad_check(loss_fn, params, eps: float = 1e-5) -> float:
    """Max relative error of analytic vs central-difference gradients.

    loss_fn() must return the scalar loss and leave d(loss)/d(param) in
    each param's .grad.  It must be a deterministic pure function of the
    param values.
    """
    for p in params:
        p.zero_grad()
    base = loss_fn()
    if not np.isfinite(base):
        raise NumericalFailure(f"loss is not finite: {base}")
    analytic = {p.name: p.grad.copy() for p in params}
    worst = 0.0
    for p in params:
        flat = p.value.reshape(-1)
        for i in range(flat.size):
            orig = flat[i]
            flat[i] = orig + eps
            for q in params:
                q.zero_grad()
            up = loss_fn()
            flat[i] = orig - eps
            for q in params:
                q.zero_grad()
            down = loss_fn()
            flat[i] = orig
            numeric = (up - down) / (2.0 * eps)
            a = analytic[p.name].reshape(-1)[i]
            scale = max(abs(a), abs(numeric), 1e-8)
            worst = max(worst, abs(a - numeric) / scale)
    for p in params:
        p.grad[...] = analytic[p.name]
    return worst


# ------------------------------------------------------------ checkpoints

def save_checkpoint(params, path) -> None:
    """Write named parameter values as versioned JSON (bitwise round-trip)."""
    blob = {"version": CHECKPOINT_VERSION, "params": {}}
    items = params.items() if isinstance(params, dict) else \
        ((p.name, p.value) for p in params)
    for name, value in sorted(items):
        arr = np.asarray(value, dtype=np.float64)
        if arr.ndim != 2:
            raise ShapeMismatch(f"checkpoint param {name!r} must be 2-D")
        blob["params"][name] = {
            "rows": arr.shape[0],
            "cols": arr.shape[1],
            "data": arr.reshape(-1).tolist(),
        }
    Path(path).write_text(json.dumps(blob, indent=1, sort_keys=True) + "\n",
                          encoding="utf-8")


def load_checkpoint(path) -> dict[str, np.ndarray]:
    try:
        blob = json.loads(Path(path).read_text(encoding="utf-8"))
    except json.JSONDecodeError as exc:
        raise NumericalFailure(f"checkpoint is not valid JSON: {exc}") from exc
    if not isinstance(blob, dict) or blob.get("version") != CHECKPOINT_VERSION:
        raise NumericalFailure(
            f"unsupported checkpoint version {blob.get('version')!r}, "
            f"expected {CHECKPOINT_VERSION!r}")
    out = {}
    for name, rec in blob.get("params", {}).items():
        rows, cols, data = rec["rows"], rec["cols"], rec["data"]
        arr = np.asarray(data, dtype=np.float64)
        if arr.size != rows * cols:
            raise NumericalFailure(
                f"checkpoint param {name!r}: {arr.size} values for "
                f"shape ({rows}, {cols})")
        out[name] = arr.reshape(rows, cols)
    return out

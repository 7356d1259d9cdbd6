"""Dense float64 array math shared by every other module.

Everything here is a pure function: arrays in, arrays out, no hidden
state. All public operations work in double precision and raise
``ValueError`` on shape problems or non-finite results.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import NamedTuple

import numpy as np

# Epsilon used in neighbor-weight and correlation denominators.
EPS = 1e-8

_MAX_RANK = 4


def as_dense(data, rank: int | None = None) -> np.ndarray:
    """Coerce ``data`` to a contiguous float64 array of rank <= 4."""
    arr = np.ascontiguousarray(data, dtype=np.float64)
    if arr.ndim > _MAX_RANK:
        raise ValueError(f"rank {arr.ndim} exceeds supported maximum {_MAX_RANK}")
    if rank is not None and arr.ndim != rank:
        raise ValueError(f"expected rank-{rank} array, got shape {arr.shape}")
    return arr


def check_finite(arr: np.ndarray, label: str) -> np.ndarray:
    if not np.all(np.isfinite(arr)):
        raise ValueError(f"{label} contains NaN or Inf")
    return arr


def pairwise_distances(points) -> np.ndarray:
    """Euclidean distance matrix between the rows of an n x d array.

    The result is exactly symmetric with a zero diagonal: entry (i, j)
    and entry (j, i) are computed from the same elementwise differences.
    Large inputs are processed in row blocks to bound temporary memory.
    """
    pts = as_dense(points, rank=2)
    n, d = pts.shape
    if n < 1 or d < 1:
        raise ValueError(f"points must be non-empty, got shape {pts.shape}")
    check_finite(pts, "points")
    out = np.empty((n, n), dtype=np.float64)
    # ~32 MB of float64 temporaries per block
    block = max(1, 4_000_000 // max(n * d, 1))
    for s in range(0, n, block):
        diff = pts[s : s + block, None, :] - pts[None, :, :]
        np.sqrt(np.einsum("ijk,ijk->ij", diff, diff), out=out[s : s + block])
    np.fill_diagonal(out, 0.0)
    return out


def topk_smallest(dist_row, k: int, exclude_index: int | None = None):
    """Indices and values of the ``k`` smallest entries of a 1-D row.

    Ties are broken by the lower index (stable sort), and
    ``exclude_index`` is never returned.
    """
    row = as_dense(dist_row, rank=1)
    n = row.size
    available = n - (1 if exclude_index is not None else 0)
    if k < 1 or k > available:
        raise ValueError(f"k={k} out of range for row of {n} entries"
                         f" (exclude_index={exclude_index})")
    order = np.argsort(row, kind="stable")
    if exclude_index is not None:
        if not 0 <= exclude_index < n:
            raise ValueError(f"exclude_index {exclude_index} out of range")
        order = order[order != exclude_index]
    idx = order[:k]
    return idx, row[idx]


class Correlation(NamedTuple):
    value: float
    degenerate: bool


def pearson(a, b) -> Correlation:
    """Pearson correlation of two equal-length series.

    A series with zero variance yields ``Correlation(0.0, True)`` instead
    of NaN so that causality matrices stay finite for constant traffic.
    """
    x = as_dense(a, rank=1)
    y = as_dense(b, rank=1)
    if x.size != y.size:
        raise ValueError(f"length mismatch: {x.size} vs {y.size}")
    if x.size < 2:
        raise ValueError("pearson needs at least 2 samples")
    if np.ptp(x) == 0.0 or np.ptp(y) == 0.0:
        return Correlation(0.0, True)
    xc = x - x.mean()
    yc = y - y.mean()
    denom = np.sqrt((xc * xc).sum() * (yc * yc).sum())
    if denom == 0.0:
        return Correlation(0.0, True)
    r = float((xc * yc).sum() / denom)
    return Correlation(min(1.0, max(-1.0, r)), False)


def softmax_rows(m) -> np.ndarray:
    """Row softmax over the trailing axis, stabilized by max subtraction."""
    arr = as_dense(m)
    shifted = arr - arr.max(axis=-1, keepdims=True)
    e = np.exp(shifted)
    return e / e.sum(axis=-1, keepdims=True)


def _lag_windows(x: np.ndarray, taps: int, dilation: int) -> np.ndarray:
    """Read-only view of shape (B, C, taps, L_out) onto lagged positions."""
    b, c, length = x.shape
    l_out = length - dilation * (taps - 1)
    sb, sc, sl = x.strides
    return np.lib.stride_tricks.as_strided(
        x,
        shape=(b, c, taps, l_out),
        strides=(sb, sc, sl * dilation, sl),
        writeable=False,
    )


def dilated_conv1d(inp, kernels, dilation: int) -> np.ndarray:
    """Dilated 1-D convolution, no padding, stride 1, no bias.

    ``inp`` is (B, C_in, L), ``kernels`` is (C_out, C_in, E). Output
    position t aggregates input positions t, t+dilation, ...,
    t+(E-1)*dilation, so the output length is L - dilation*(E-1).
    """
    x = as_dense(inp, rank=3)
    k = as_dense(kernels, rank=3)
    if dilation < 1:
        raise ValueError(f"dilation must be positive, got {dilation}")
    if x.shape[1] != k.shape[1]:
        raise ValueError(f"channel mismatch: input {x.shape[1]} vs kernel {k.shape[1]}")
    taps = k.shape[2]
    l_out = x.shape[2] - dilation * (taps - 1)
    if l_out < 1:
        raise ValueError(
            f"window span {dilation * (taps - 1) + 1} exceeds series length {x.shape[2]}")
    win = _lag_windows(x, taps, dilation)
    out = np.einsum("oce,bcet->bot", k, win, optimize=True)
    return check_finite(out, "dilated_conv1d output")


def dilated_conv1d_backward(grad_out, saved_input, kernels, dilation: int):
    """Gradients of :func:`dilated_conv1d` w.r.t. input and kernels."""
    g = as_dense(grad_out, rank=3)
    x = as_dense(saved_input, rank=3)
    k = as_dense(kernels, rank=3)
    taps = k.shape[2]
    l_out = x.shape[2] - dilation * (taps - 1)
    if g.shape != (x.shape[0], k.shape[0], l_out):
        raise ValueError(
            f"grad_out shape {g.shape} inconsistent with forward output "
            f"{(x.shape[0], k.shape[0], l_out)}")
    win = _lag_windows(x, taps, dilation)
    grad_kernels = np.einsum("bot,bcet->oce", g, win, optimize=True)
    grad_input = np.zeros_like(x)
    for e in range(taps):
        grad_input[:, :, e * dilation : e * dilation + l_out] += np.einsum(
            "bot,oc->bct", g, k[:, :, e], optimize=True)
    return grad_input, grad_kernels


def linear(inp, weight, bias) -> np.ndarray:
    """Affine map over the trailing dimension: ``inp @ weight.T + bias``."""
    x = as_dense(inp)
    w = as_dense(weight, rank=2)
    b = as_dense(bias, rank=1)
    if x.shape[-1] != w.shape[1]:
        raise ValueError(f"trailing dim {x.shape[-1]} does not match d_in {w.shape[1]}")
    if w.shape[0] != b.shape[0]:
        raise ValueError(f"bias length {b.shape[0]} does not match d_out {w.shape[0]}")
    return x @ w.T + b


def linear_backward(grad_out, saved_input, weight):
    """Gradients of :func:`linear` w.r.t. input, weight and bias."""
    g = np.asarray(grad_out, dtype=np.float64)
    x = np.asarray(saved_input, dtype=np.float64)
    w = as_dense(weight, rank=2)
    if g.shape[:-1] != x.shape[:-1] or g.shape[-1] != w.shape[0]:
        raise ValueError(f"grad_out shape {g.shape} inconsistent with input "
                         f"{x.shape} and weight {w.shape}")
    grad_input = g @ w
    g_flat = g.reshape(-1, w.shape[0])
    x_flat = x.reshape(-1, w.shape[1])
    grad_weight = g_flat.T @ x_flat
    grad_bias = g_flat.sum(axis=0)
    return grad_input, grad_weight, grad_bias


@dataclass(frozen=True)
class AdamConfig:
    lr: float
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8


@dataclass
class AdamState:
    """First/second moment buffers plus the shared step counter."""

    m: dict[str, np.ndarray] = field(default_factory=dict)
    v: dict[str, np.ndarray] = field(default_factory=dict)
    step: int = 0

    @classmethod
    def for_params(cls, params: dict[str, np.ndarray]) -> "AdamState":
        return cls(
            m={name: np.zeros_like(p) for name, p in params.items()},
            v={name: np.zeros_like(p) for name, p in params.items()},
            step=0,
        )


def adam_step(params: dict[str, np.ndarray], grads: dict[str, np.ndarray],
              state: AdamState, config: AdamConfig):
    """One bias-corrected Adam update. Returns new params and state."""
    t = state.step + 1
    new_params: dict[str, np.ndarray] = {}
    new_m: dict[str, np.ndarray] = {}
    new_v: dict[str, np.ndarray] = {}
    for name, p in params.items():
        g = grads[name]
        if g.shape != p.shape:
            raise ValueError(f"gradient shape {g.shape} != param shape {p.shape}"
                             f" for '{name}'")
        m = config.beta1 * state.m[name] + (1.0 - config.beta1) * g
        v = config.beta2 * state.v[name] + (1.0 - config.beta2) * (g * g)
        m_hat = m / (1.0 - config.beta1 ** t)
        v_hat = v / (1.0 - config.beta2 ** t)
        new_params[name] = p - config.lr * m_hat / (np.sqrt(v_hat) + config.eps)
        new_m[name] = m
        new_v[name] = v
    return new_params, AdamState(new_m, new_v, t)

"""Classic convergent cross mapping on raw series.

Causality between two series is read off the reconstructed state space:
if y drives x, the delay embedding of x carries enough information to
estimate y from nearest neighbors, and the estimation skill grows with
the observation length. ``cross_map_skill`` measures one direction,
``convergence_scan`` sweeps library lengths, and ``ccm_matrix`` runs all
ordered pairs of a panel.
"""

from __future__ import annotations

from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numpy as np

from .core import EPS, as_dense, pairwise_distances, pearson
from .data import TrafficPanel


@dataclass(frozen=True)
class DelayEmbedding:
    """Lagged-coordinate reconstruction of one series.

    Row t of ``points`` is [X(k), X(k-tau), ..., X(k-(dim-1)*tau)] with
    k = t + (dim-1)*tau, so the first row is the earliest fully-lagged
    state and row index + offset() recovers the original time index.
    """

    dim: int
    tau: int
    points: np.ndarray  # (L_emb, dim)

    def offset(self) -> int:
        return (self.dim - 1) * self.tau

    @property
    def n_points(self) -> int:
        return self.points.shape[0]


@dataclass(frozen=True)
class CcmResult:
    skill: float
    library_length: int
    direction: tuple[str, str]  # (manifold series, estimated series)
    degenerate: bool = False


def delay_embed(series, dim: int, tau: int) -> DelayEmbedding:
    """Build the delay embedding of a series (dim lags spaced tau apart)."""
    x = as_dense(series, rank=1)
    if dim < 1 or tau < 1:
        raise ValueError(f"dim and tau must be positive, got dim={dim} tau={tau}")
    n_points = x.size - (dim - 1) * tau
    if n_points < 1:
        raise ValueError(
            f"series of length {x.size} too short for dim={dim}, tau={tau} "
            f"(needs at least {(dim - 1) * tau + 1})")
    points = np.empty((n_points, dim), dtype=np.float64)
    for c in range(dim):
        start = (dim - 1 - c) * tau
        points[:, c] = x[start : start + n_points]
    return DelayEmbedding(dim=dim, tau=tau, points=points)


def simplex_weights(neighbor_distances) -> np.ndarray:
    """Exponential simplex weights for one sorted neighbor-distance list.

    u_i = exp(-d_i / d_1) normalized to sum 1; a zero nearest distance
    replaces d_1 by a small epsilon so the exact match dominates.
    """
    d = as_dense(neighbor_distances, rank=1)
    if d.size < 1:
        raise ValueError("need at least one neighbor distance")
    if np.any(d < 0):
        raise ValueError("distances must be nonnegative")
    if np.any(np.diff(d) < 0):
        raise ValueError("distances must be sorted ascending")
    denom = d[0] if d[0] > 0.0 else EPS
    u = np.exp(-d / denom)
    return u / u.sum()


def _weight_rows(neighbor_distances: np.ndarray) -> np.ndarray:
    # row-wise simplex weights; rows are already sorted ascending
    d1 = neighbor_distances[:, :1].copy()
    d1[d1 == 0.0] = EPS
    u = np.exp(-neighbor_distances / d1)
    return u / u.sum(axis=1, keepdims=True)


def _neighbor_table(points: np.ndarray, k: int):
    """Per-point indices and distances of the k nearest other points.

    Stable sort on distances breaks ties toward the lower index; each
    point's own row position is excluded explicitly.
    """
    n = points.shape[0]
    dists = pairwise_distances(points)
    order = np.argsort(dists, kind="stable", axis=1)
    keep = order != np.arange(n)[:, None]
    neighbors = order[keep].reshape(n, n - 1)[:, :k]
    return neighbors, np.take_along_axis(dists, neighbors, axis=1)


def cross_map_estimates(x, y, dim: int, tau: int):
    """Neighbor-weighted estimates of y from the embedding of x.

    Returns (estimates, targets, neighbor_indices); the estimate at row
    t is the simplex-weighted mean of y at the neighbor times of x's
    state t, and targets are y aligned to the embedding rows.
    """
    xs = as_dense(x, rank=1)
    ys = as_dense(y, rank=1)
    if xs.size != ys.size:
        raise ValueError(f"series lengths differ: {xs.size} vs {ys.size}")
    k = dim + 1
    min_len = (dim - 1) * tau + dim + 3
    if xs.size < min_len:
        raise ValueError(
            f"series length {xs.size} too short for cross mapping with "
            f"dim={dim}, tau={tau} (needs at least {min_len})")
    emb = delay_embed(xs, dim, tau)
    neighbors, dists = _neighbor_table(emb.points, k)
    weights = _weight_rows(dists)
    times = neighbors + emb.offset()
    estimates = (weights * ys[times]).sum(axis=1)
    targets = ys[emb.offset():]
    return estimates, targets, neighbors


def cross_map_skill(x, y, dim: int, tau: int,
                    x_name: str = "x", y_name: str = "y") -> CcmResult:
    """Skill of estimating y from x's shadow manifold.

    High skill indicates that y causally influences x (information about
    y is recoverable from x's reconstructed states). The signed Pearson
    correlation is reported; constant estimates or targets yield skill 0
    with the degenerate flag set.
    """
    estimates, targets, _ = cross_map_estimates(x, y, dim, tau)
    corr = pearson(estimates, targets)
    return CcmResult(
        skill=0.0 if corr.degenerate else corr.value,
        library_length=int(np.asarray(x).shape[-1]),
        direction=(x_name, y_name),
        degenerate=corr.degenerate,
    )


def convergence_scan(x, y, dim: int, tau: int, library_lengths,
                     x_name: str = "x", y_name: str = "y") -> list[CcmResult]:
    """Cross-map skill on series prefixes of increasing library length.

    Rising skill with library length is the convergence signature of a
    genuine causal link; flat near-zero skill indicates none.
    """
    xs = as_dense(x, rank=1)
    ys = as_dense(y, rank=1)
    min_len = (dim - 1) * tau + dim + 3
    lengths = [int(v) for v in library_lengths]
    if not lengths:
        raise ValueError("library_lengths must be non-empty")
    for length in lengths:
        if length < min_len or length > xs.size:
            raise ValueError(
                f"library length {length} outside valid range [{min_len}, {xs.size}]")
    return [cross_map_skill(xs[:length], ys[:length], dim, tau, x_name, y_name)
            for length in lengths]


def ccm_matrix(panel: TrafficPanel, dim: int, tau: int, threads: int = 1) -> np.ndarray:
    """All-pairs cross-map skill matrix for a panel.

    Entry (m, n) is the skill of service m's shadow manifold estimating
    service n, i.e. the detected causal effect of n on m. Degenerate
    pairs score 0. Rows are independent, so they may be evaluated on a
    thread pool; results do not depend on the thread count.
    """
    values = panel.values
    n_services, length = values.shape
    min_len = (dim - 1) * tau + dim + 3
    if length < min_len:
        raise ValueError(f"panel length {length} too short for cross mapping "
                         f"(needs at least {min_len})")
    k = dim + 1
    out = np.empty((n_services, n_services), dtype=np.float64)

    def fill_row(m: int) -> None:
        emb = delay_embed(values[m], dim, tau)
        neighbors, dists = _neighbor_table(emb.points, k)
        weights = _weight_rows(dists)
        times = neighbors + emb.offset()
        for n in range(n_services):
            target = values[n]
            estimates = (weights * target[times]).sum(axis=1)
            corr = pearson(estimates, target[emb.offset():])
            out[m, n] = 0.0 if corr.degenerate else corr.value

    if threads > 1 and n_services > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            list(pool.map(fill_row, range(n_services)))
    else:
        for m in range(n_services):
            fill_row(m)
    return out

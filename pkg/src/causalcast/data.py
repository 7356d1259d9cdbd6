"""Traffic panels: trace ingestion, resampling, splits, synthetic generators.

A panel is N services observed on a shared uniform timeline. Trace files
are UTF-8 CSV with header ``timestamp,service_id,value`` (integer epoch
seconds, nonnegative values); lines starting with ``#`` are comments.
Missing buckets are zero-filled on load (absent traffic means zero
requests) and the panel is flagged as gap-filled.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, replace

import numpy as np

from .core import as_dense, check_finite
from .rng import Xorshift64Star


class TraceFormatError(ValueError):
    """Malformed trace file; the message names the offending line."""


@dataclass
class TrafficPanel:
    """N uniformly-sampled service series sharing one timeline."""

    service_ids: list[str]
    start_time: int
    granularity: int
    values: np.ndarray  # (N, L) float64
    gap_filled: bool = False

    def __post_init__(self):
        self.values = as_dense(self.values, rank=2)
        if len(self.service_ids) != self.values.shape[0]:
            raise ValueError(
                f"{len(self.service_ids)} ids for {self.values.shape[0]} series")
        if self.granularity < 1:
            raise ValueError(f"granularity must be positive, got {self.granularity}")
        check_finite(self.values, "panel values")

    @property
    def n_services(self) -> int:
        return self.values.shape[0]

    @property
    def length(self) -> int:
        return self.values.shape[1]

    def timestamps(self) -> np.ndarray:
        return self.start_time + self.granularity * np.arange(self.length, dtype=np.int64)

    def service_index(self, service_id: str) -> int:
        try:
            return self.service_ids.index(service_id)
        except ValueError:
            raise KeyError(f"unknown service id {service_id!r}") from None


@dataclass(frozen=True)
class NormalizationRecord:
    """Per-service mean/std fitted on the training split only."""

    mean: np.ndarray          # (N,)
    std: np.ndarray           # (N,) divisor actually used (1.0 where constant)
    constant: np.ndarray      # (N,) bool, True where the train split had zero std

    @classmethod
    def fit(cls, values: np.ndarray) -> "NormalizationRecord":
        v = as_dense(values, rank=2)
        mean = v.mean(axis=1)
        std = v.std(axis=1)
        constant = std == 0.0
        return cls(mean=mean, std=np.where(constant, 1.0, std), constant=constant)

    def apply(self, values: np.ndarray) -> np.ndarray:
        return (values - self.mean[:, None]) / self.std[:, None]


def load_trace(path) -> TrafficPanel:
    """Parse a trace CSV into a gap-free panel.

    Unsorted rows are sorted with a warning; a duplicate
    (timestamp, service) pair or any malformed row raises
    :class:`TraceFormatError` naming the line number.
    """
    rows: dict[str, dict[int, float]] = {}
    order: list[str] = []
    header_seen = False
    last_ts = None
    sorted_input = True
    with open(path, "r", encoding="utf-8") as fh:
        for lineno, raw in enumerate(fh, start=1):
            line = raw.strip()
            if not line or line.startswith("#"):
                continue
            if not header_seen:
                if line != "timestamp,service_id,value":
                    raise TraceFormatError(
                        f"line {lineno}: expected header 'timestamp,service_id,value'")
                header_seen = True
                continue
            parts = line.split(",")
            if len(parts) != 3:
                raise TraceFormatError(f"line {lineno}: expected 3 fields, got {len(parts)}")
            ts_text, service, value_text = parts
            try:
                ts = int(ts_text)
            except ValueError:
                raise TraceFormatError(
                    f"line {lineno}: timestamp {ts_text!r} is not an integer") from None
            try:
                value = float(value_text)
            except ValueError:
                raise TraceFormatError(
                    f"line {lineno}: value {value_text!r} is not numeric") from None
            if not math.isfinite(value) or value < 0:
                raise TraceFormatError(f"line {lineno}: value must be finite and >= 0")
            if not service:
                raise TraceFormatError(f"line {lineno}: empty service id")
            if service not in rows:
                rows[service] = {}
                order.append(service)
            if ts in rows[service]:
                raise TraceFormatError(
                    f"line {lineno}: duplicate bucket for service {service!r} at {ts}")
            rows[service][ts] = value
            if last_ts is not None and ts < last_ts:
                sorted_input = False
            last_ts = ts
    if not header_seen:
        raise TraceFormatError("line 1: empty trace file")
    if not order:
        raise TraceFormatError("trace contains a header but no data rows")
    if not sorted_input:
        warnings.warn("trace timestamps were not sorted; sorting", stacklevel=2)

    all_ts = sorted({ts for per in rows.values() for ts in per})
    if len(all_ts) < 2:
        raise TraceFormatError("trace must cover at least 2 time buckets")
    start = all_ts[0]
    gran = 0
    for ts in all_ts[1:]:
        gran = math.gcd(gran, ts - start)
    timeline = range(start, all_ts[-1] + gran, gran)

    values = np.zeros((len(order), len(timeline)), dtype=np.float64)
    gap_filled = False
    for i, service in enumerate(order):
        per = rows[service]
        for j, ts in enumerate(timeline):
            if ts in per:
                values[i, j] = per[ts]
            else:
                gap_filled = True
    return TrafficPanel(service_ids=order, start_time=start, granularity=gran,
                        values=values, gap_filled=gap_filled)


def save_trace(panel: TrafficPanel, path, header_comment: str | None = None) -> None:
    """Write a panel in the trace CSV format (round-trips exactly)."""
    ts = panel.timestamps()
    with open(path, "w", encoding="utf-8") as fh:
        if header_comment:
            fh.write(f"# {header_comment}\n")
        fh.write("timestamp,service_id,value\n")
        for j in range(panel.length):
            for i, service in enumerate(panel.service_ids):
                fh.write(f"{ts[j]},{service},{panel.values[i, j]!r}\n")


def resample(panel: TrafficPanel, new_granularity: int) -> TrafficPanel:
    """Aggregate counts into coarser buckets by summation.

    The new granularity must be an integer multiple of the current one;
    a truncated tail (incomplete final bucket) is dropped.
    """
    if new_granularity == panel.granularity:
        return replace(panel, values=panel.values.copy())
    if new_granularity <= 0 or new_granularity % panel.granularity != 0:
        raise ValueError(
            f"new granularity {new_granularity} is not a positive multiple "
            f"of {panel.granularity}")
    factor = new_granularity // panel.granularity
    n_buckets = panel.length // factor
    if n_buckets < 1:
        raise ValueError("panel too short for requested granularity")
    trimmed = panel.values[:, : n_buckets * factor]
    summed = trimmed.reshape(panel.n_services, n_buckets, factor).sum(axis=2)
    return replace(panel, granularity=new_granularity, values=summed)


def split(panel: TrafficPanel, ratios=(0.7, 0.1, 0.2),
          min_segment_length: int | None = None):
    """Chronological train/val/test segments (never shuffled)."""
    if len(ratios) != 3 or any(r <= 0 for r in ratios):
        raise ValueError(f"ratios must be 3 positive numbers, got {ratios}")
    if abs(sum(ratios) - 1.0) > 1e-9:
        raise ValueError(f"ratios must sum to 1, got {sum(ratios)}")
    n_train = int(panel.length * ratios[0])
    n_val = int(panel.length * ratios[1])
    n_test = panel.length - n_train - n_val
    segments = []
    offset = 0
    for n in (n_train, n_val, n_test):
        if min_segment_length is not None and n < min_segment_length:
            raise ValueError(
                f"split segment of {n} buckets is shorter than required "
                f"{min_segment_length}")
        if n < 1:
            raise ValueError("split produced an empty segment")
        segments.append(replace(
            panel,
            start_time=panel.start_time + offset * panel.granularity,
            values=panel.values[:, offset : offset + n].copy(),
        ))
        offset += n
    return tuple(segments)


def gen_coupled_logistic(length: int, r_x: float = 3.8, r_y: float = 3.5,
                         beta_xy: float = 0.02, beta_yx: float = 0.1,
                         seed: int | None = None,
                         x0: float = 0.4, y0: float = 0.2) -> TrafficPanel:
    """Two coupled logistic maps, the standard cross-mapping test system.

    Iterates
        x(t+1) = x(t) * (r_x - r_x*x(t) - beta_xy*y(t))
        y(t+1) = y(t) * (r_y - r_y*y(t) - beta_yx*x(t))
    so ``beta_xy`` is the strength of y's influence on x and ``beta_yx``
    the strength of x's influence on y. With ``seed=None`` the initial
    conditions are used exactly; a seed perturbs them by +-0.1 (clipped
    to [0.05, 0.95]) through the documented xorshift stream, giving
    independent trajectories per seed.
    """
    if length < 1:
        raise ValueError(f"length must be >= 1, got {length}")
    x, y = float(x0), float(y0)
    if seed is not None:
        rng = Xorshift64Star(seed)
        x = min(max(x + 0.2 * (rng.uniform() - 0.5), 0.05), 0.95)
        y = min(max(y + 0.2 * (rng.uniform() - 0.5), 0.05), 0.95)
    xs = np.empty(length, dtype=np.float64)
    ys = np.empty(length, dtype=np.float64)
    xs[0], ys[0] = x, y
    for t in range(1, length):
        x, y = (x * (r_x - r_x * x - beta_xy * y),
                y * (r_y - r_y * y - beta_yx * x))
        if not (0.0 <= x <= 1.5 and 0.0 <= y <= 1.5):
            raise ValueError(f"coupled logistic map diverged at step {t}: "
                             f"x={x!r}, y={y!r}")
        xs[t], ys[t] = x, y
    return TrafficPanel(service_ids=["x", "y"], start_time=0, granularity=60,
                        values=np.stack([xs, ys]))


def _lorenz_derivatives(state, sigma, rho, beta):
    x, y, z = state
    return np.array([sigma * (y - x), x * (rho - z) - y, x * y - beta * z])


def gen_lorenz(length: int, sigma: float = 10.0, rho: float = 28.0,
               beta: float = 8.0 / 3.0, dt: float = 0.01,
               initial=(1.0, 1.0, 1.0)) -> TrafficPanel:
    """Lorenz trajectory via fixed-step 4th-order Runge-Kutta.

    Returns a 3-series panel (X, Y, Z) including the initial state.
    """
    if dt <= 0:
        raise ValueError(f"dt must be positive, got {dt}")
    if length < 1:
        raise ValueError(f"length must be >= 1, got {length}")
    state = np.asarray(initial, dtype=np.float64)
    if state.shape != (3,):
        raise ValueError(f"initial state must have 3 components, got {state.shape}")
    out = np.empty((3, length), dtype=np.float64)
    out[:, 0] = state
    for t in range(1, length):
        k1 = _lorenz_derivatives(state, sigma, rho, beta)
        k2 = _lorenz_derivatives(state + 0.5 * dt * k1, sigma, rho, beta)
        k3 = _lorenz_derivatives(state + 0.5 * dt * k2, sigma, rho, beta)
        k4 = _lorenz_derivatives(state + dt * k3, sigma, rho, beta)
        state = state + (dt / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)
        if not np.all(np.isfinite(state)):
            raise ValueError(f"Lorenz integration diverged at step {t}")
        out[:, t] = state
    return TrafficPanel(service_ids=["X", "Y", "Z"], start_time=0, granularity=60,
                        values=out)


def gen_traffic_panel(n_services: int, length: int, coupling=None,
                      seasonal_periods=(24, 168), noise_level: float = 0.1,
                      seed: int = 0, coupling_lag: int = 1) -> TrafficPanel:
    """Synthetic service-traffic panel with planted causal coupling.

    Each service is a seasonal base (shared periods, per-service random
    amplitudes and phases) plus an AR(1) volatility term scaled by
    ``noise_level``. Service j influences service i with weight
    ``coupling[i, j]`` applied to j's intrinsic deviation from its own
    base level, lagged by ``coupling_lag`` buckets. Values are clipped
    at zero to keep count semantics.
    """
    if n_services < 1 or length < 1:
        raise ValueError("need at least one service and one bucket")
    if coupling is None:
        coupling = np.zeros((n_services, n_services))
    coupling = as_dense(coupling, rank=2)
    if coupling.shape != (n_services, n_services):
        raise ValueError(f"coupling must be {n_services}x{n_services}, "
                         f"got {coupling.shape}")
    if np.any(np.diag(coupling) != 0.0):
        raise ValueError("coupling diagonal must be zero (no self-coupling)")
    lag = int(coupling_lag)
    if lag < 0:
        raise ValueError(f"coupling_lag must be >= 0, got {lag}")

    rng = Xorshift64Star(seed)
    padded = length + lag
    t_axis = np.arange(-lag, length, dtype=np.float64)
    intrinsic = np.empty((n_services, padded), dtype=np.float64)
    offsets = np.empty(n_services, dtype=np.float64)
    for i in range(n_services):
        offsets[i] = 10.0 + 4.0 * rng.uniform()
        series = np.full(padded, offsets[i])
        for period in seasonal_periods:
            amp = 1.5 + 3.0 * rng.uniform()
            phase = 2.0 * math.pi * rng.uniform()
            series += amp * np.sin(2.0 * math.pi * t_axis / period + phase)
        if noise_level > 0:
            ar = 0.0
            scale = 3.0 * noise_level
            for t in range(padded):
                ar = 0.9 * ar + scale * rng.normal()
                series[t] += ar
        intrinsic[i] = series

    deviations = intrinsic - offsets[:, None]
    values = intrinsic[:, lag:].copy()
    for i in range(n_services):
        for j in range(n_services):
            if coupling[i, j] != 0.0:
                values[i] += coupling[i, j] * deviations[j, : padded - lag]
    np.clip(values, 0.0, None, out=values)
    return TrafficPanel(
        service_ids=[f"svc{i:03d}" for i in range(n_services)],
        start_time=0, granularity=60, values=values)

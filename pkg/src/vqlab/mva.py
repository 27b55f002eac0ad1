"""Offline variance-curve analysis of buffer overflow for Gaussian-like aggregates.

The oracle measures the time-scale-dependent variance of arrivals, scans a
discrete grid for the time scale that dominates the overflow probability,
and turns the minimized index function into tail and loss estimates.  It
deliberately keeps the O(n) measurement and search cost the online
estimator is built to avoid, so the two can be compared.

Unit convention: queue thresholds and variances in bytes (bytes^2); rates
enter in bits/s and are converted to bytes/s at the function boundary.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import (ConfigurationError, DegenerateInputError,
                     InsufficientDataError, NoDtsError)
from .traffic import PacketStream


@dataclass(frozen=True)
class VarianceCurve:
    """Sample variance of arrival bytes over scales k*delta, k = 1..n."""

    delta: float
    values: np.ndarray

    def __post_init__(self) -> None:
        if self.delta <= 0:
            raise ConfigurationError("delta must be positive")
        if len(self.values) < 1:
            raise ConfigurationError("curve needs at least one scale")
        if np.any(np.asarray(self.values) < 0):
            raise ConfigurationError("variance values must be >= 0")

    @property
    def n(self) -> int:
        return len(self.values)

    @property
    def times(self) -> np.ndarray:
        return np.arange(1, self.n + 1) * self.delta

    def to_csv(self, path: str | Path) -> None:
        with open(path, "w", encoding="ascii") as fh:
            fh.write("k,t_s,v_bytes2\n")
            for k, (t, v) in enumerate(zip(self.times.tolist(),
                                           np.asarray(self.values).tolist()), start=1):
                fh.write(f"{k},{t!r},{v!r}\n")


@dataclass(frozen=True)
class DtsResult:
    """Grid minimizer of the index function g."""

    tau: float
    g_star: float
    minimizing_index: int


def measure_variance_curve(stream: PacketStream, delta: float, n: int,
                           t_end: float | None = None) -> VarianceCurve:
    """Measure v(k*delta) from a stream, k = 1..n.

    Arrivals are binned into delta-slots; the scale-k variance is the
    sample variance of sums over non-overlapping blocks of k consecutive
    slots.  Requires at least two blocks at the largest scale.
    """
    if delta <= 0:
        raise ConfigurationError("delta must be positive")
    if n < 1:
        raise ConfigurationError("n must be >= 1")
    if t_end is None:
        t_end = stream.duration
    n_slots = int(t_end / delta)
    if n_slots < 2 * n:
        raise InsufficientDataError(
            f"need >= {2 * n} slots of {delta} s for {n} scales, have {n_slots}")
    idx = np.floor(stream.times / delta).astype(np.int64)
    keep = idx < n_slots
    slot_bytes = np.bincount(idx[keep], weights=stream.sizes[keep],
                             minlength=n_slots)
    values = np.empty(n)
    for k in range(1, n + 1):
        blocks = n_slots // k
        sums = slot_bytes[: blocks * k].reshape(blocks, k).sum(axis=1)
        values[k - 1] = sums.var(ddof=1)
    return VarianceCurve(delta=delta, values=values)


def g_value(q: float, c: float, r: float, v_t: float, t: float) -> float:
    """Index function (q + (c - r) t / 8) / sqrt(v(t)) in byte units."""
    if v_t < 0:
        raise DegenerateInputError("variance must be >= 0")
    numerator = q + (c - r) / 8.0 * t
    if v_t == 0.0:
        if numerator > 0.0:
            return math.inf
        raise DegenerateInputError(
            "zero variance with non-positive headroom has no defined index")
    return numerator / math.sqrt(v_t)


def dts_search(curve: VarianceCurve, q: float, c: float, r: float) -> DtsResult:
    """Exhaustive scan of g over the curve grid; smallest index wins ties."""
    v = np.asarray(curve.values, dtype=np.float64)
    t = curve.times
    numerator = q + (c - r) / 8.0 * t
    g = np.full(curve.n, math.inf)
    positive = v > 0.0
    g[positive] = numerator[positive] / np.sqrt(v[positive])
    degenerate = ~positive & (numerator <= 0.0)
    if np.any(degenerate):
        raise DegenerateInputError(
            "zero variance with non-positive headroom on the scan grid")
    best = int(np.argmin(g))  # argmin returns the first minimum on ties
    if math.isinf(g[best]):
        raise NoDtsError("all time scales degenerate; no dominant scale")
    return DtsResult(tau=float(t[best]), g_star=float(g[best]),
                     minimizing_index=best + 1)


def mva_tail(curve: VarianceCurve, q: float, c: float, r: float) -> float:
    """Tail probability exp(-g*^2 / 2), clamped into (0, 1]."""
    res = dts_search(curve, q, c, r)
    return min(math.exp(-0.5 * res.g_star * res.g_star), 1.0)


def assemble_loss(pl0: float, p0: float, tail: float) -> tuple[float, frozenset[str]]:
    """Loss estimate (pl0 / p0) * tail with degeneracy flags.

    Returns the clamped probability and a flag set drawn from
    {"undefined-scalar", "clamped"}.
    """
    for name, value in (("pl0", pl0), ("p0", p0), ("tail", tail)):
        if not 0.0 <= value <= 1.0:
            raise DegenerateInputError(f"{name}={value} outside [0, 1]")
    if p0 == 0.0:
        return 0.0, frozenset({"undefined-scalar"})
    value = pl0 / p0 * tail
    if value > 1.0:
        return 1.0, frozenset({"clamped"})
    return value, frozenset()

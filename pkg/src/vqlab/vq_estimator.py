"""Online loss-probability estimator driven by the virtual-queue bank.

VQ3 is a scaled-down copy of the real queue: threshold x' = x / alpha and
service rate c' = r + (c - r) / alpha, which shrinks the index function by
exactly alpha at every time scale and therefore keeps the dominant time
scale unchanged.  The measured exceedance probability u in VQ3 maps back to
the real tail as u ** (alpha ** 2).  Combined with the bufferless loss and
busy probabilities from VQ1/VQ2, a loss estimate is emitted per
measurement window.

c' is written as r + (c - r) / alpha rather than the algebraically equal
c / alpha + (1 - 1/alpha) * r so the scaled headroom c' - r matches
(c - r) / alpha at floating-point precision.

The mean rate r is re-sampled on a fixed tick (default 1 ms, aligned to
the window start) as the average rate over the elapsed part of the current
window; before the first full tick has elapsed the previous window's final
rate (or a configured nominal rate) is used.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from pathlib import Path
from typing import Sequence

from . import analysis
from .errors import ConfigurationError
from .mva import assemble_loss
from .queue_core import ARRIVAL_EPOCH, TIME_AVERAGE, time_above_threshold
from .traffic import PacketStream

FLAG_BELOW_RESOLUTION = "below-resolution"
FLAG_UNDEFINED_SCALAR = "undefined-scalar"
FLAG_CLAMPED = "clamped"
FLAG_OVERLOAD = "overload"


@dataclass(frozen=True)
class VqConfig:
    """Estimator configuration.

    ``nominal_rate`` seeds the rate estimate for the very first window
    (defaults to the service rate when left unset); ``warmup`` runs the
    bank without emitting so the queues reach steady state first.
    """

    window: float
    alpha: float = 2.5
    rate_update_interval: float = 1e-3
    tail_mode: str = ARRIVAL_EPOCH
    nominal_rate: float | None = None
    warmup: float = 0.0

    def __post_init__(self) -> None:
        if self.alpha < 1.0:
            raise ConfigurationError("alpha must be >= 1")
        if self.rate_update_interval <= 0:
            raise ConfigurationError("rate_update_interval must be positive")
        if self.window < self.rate_update_interval:
            raise ConfigurationError("window must be >= rate_update_interval")
        if self.tail_mode not in (ARRIVAL_EPOCH, TIME_AVERAGE):
            raise ConfigurationError(f"unknown tail mode: {self.tail_mode}")
        if self.nominal_rate is not None and self.nominal_rate <= 0:
            raise ConfigurationError("nominal_rate must be positive")
        if self.warmup < 0:
            raise ConfigurationError("warmup must be >= 0")


@dataclass
class RateEstimator:
    """Running mean-rate sample over the current measurement window."""

    window_start: float
    fallback_r: float
    bytes_seen: int = 0
    min_elapsed: float = 1e-3
    current_r: float = 0.0

    def __post_init__(self) -> None:
        if self.current_r <= 0.0:
            self.current_r = self.fallback_r

    def roll(self, new_start: float) -> None:
        """Start a new window; the final sample becomes the fallback."""
        elapsed = new_start - self.window_start
        if elapsed >= self.min_elapsed:
            final = self.bytes_seen * 8.0 / elapsed
            if final > 0.0:
                self.fallback_r = final
        self.window_start = new_start
        self.bytes_seen = 0
        self.current_r = self.fallback_r


def sample_rate(est: RateEstimator, now: float) -> float:
    """Average bits/s over the elapsed window, or the fallback early on."""
    elapsed = now - est.window_start
    if elapsed < est.min_elapsed:
        est.current_r = est.fallback_r
    else:
        est.current_r = est.bytes_seen * 8.0 / elapsed
    return est.current_r


def vq3_params(x: float, c: float, r: float, alpha: float) -> tuple[float, float]:
    """Scaled VQ3 threshold and service rate (x', c')."""
    if alpha < 1.0:
        raise ConfigurationError("alpha must be >= 1")
    if x < 0 or c <= 0 or r < 0:
        raise ConfigurationError("need x >= 0, c > 0, r >= 0")
    if alpha == 1.0:
        return x, c
    return x / alpha, r + (c - r) / alpha


def map_tail(u: float, alpha: float) -> float:
    """Real-queue tail from the VQ3 exceedance: u ** (alpha ** 2)."""
    if not 0.0 <= u <= 1.0:
        raise ConfigurationError(f"u={u} outside [0, 1]")
    if alpha < 1.0:
        raise ConfigurationError("alpha must be >= 1")
    if u == 0.0:
        return 0.0
    return u ** (alpha * alpha)


def recommend_alpha(target_tail: float) -> float:
    """Scaling factor that puts VQ3 at its optimal operating point.

    Solves target = u* ** (alpha ** 2) for alpha; targets at or above the
    operating point need no scaling and return 1.
    """
    if not 0.0 < target_tail < 1.0:
        raise ConfigurationError("target_tail must be in (0, 1)")
    u_star = analysis.optimal_u()
    if target_tail >= u_star:
        return 1.0
    return math.sqrt(math.log(target_tail) / math.log(u_star))


@dataclass(frozen=True)
class LossEstimate:
    """One window's assembled loss estimate and its components."""

    value: float
    pl0: float
    p0: float
    u: float
    alpha: float
    flags: frozenset[str]
    window_start: float
    window_end: float
    n_arrivals: int


def _emit(alpha: float, tail_mode: str, window_start: float, window_end: float,
          n: int, lost_bytes: int, total_bytes: int, busy: int, exceed: int,
          busy_secs: float, exceed_secs: float, overload: bool) -> LossEstimate:
    flags: set[str] = set()
    if overload:
        flags.add(FLAG_OVERLOAD)
    if n == 0:
        flags.update((FLAG_UNDEFINED_SCALAR, FLAG_BELOW_RESOLUTION))
        return LossEstimate(0.0, 0.0, 0.0, 0.0, alpha, frozenset(flags),
                            window_start, window_end, 0)
    pl0 = lost_bytes / total_bytes
    if tail_mode == ARRIVAL_EPOCH:
        p0 = busy / n
        u = exceed / n
    else:
        span = window_end - window_start
        p0 = min(busy_secs / span, 1.0)
        u = min(exceed_secs / span, 1.0)
    tail = map_tail(u, alpha)
    if u == 0.0:
        flags.add(FLAG_BELOW_RESOLUTION)
    value, assemble_flags = assemble_loss(pl0, p0, tail)
    flags.update(assemble_flags)
    return LossEstimate(value, pl0, p0, u, alpha, frozenset(flags),
                        window_start, window_end, n)


def _replay(stream: PacketStream, x: float, c: float, cfg: VqConfig,
            t_end: float | None, windowed: bool,
            emit_interval: float | None) -> list[LossEstimate]:
    """Shared bank-replay engine behind run_online and run_growing.

    The virtual-queue updates are an inlined copy of the queue_core bank
    operations (advance / on-arrival / set-rate); tests pin the two paths
    to bit-identical results.
    """
    if x < 0:
        raise ConfigurationError("threshold x must be >= 0")
    if c <= 0:
        raise ConfigurationError("service rate must be positive")
    if t_end is None:
        t_end = stream.duration
    alpha = cfg.alpha
    tick = cfg.rate_update_interval
    nominal = cfg.nominal_rate if cfg.nominal_rate is not None else c
    track_time = cfg.tail_mode == TIME_AVERAGE

    x_prime, c_prime = vq3_params(x, c, nominal, alpha)
    est = RateEstimator(window_start=0.0, fallback_r=nominal, min_elapsed=tick)

    # Bank state and tallies as locals: this loop sees every packet and tick.
    c_bytes = c / 8.0
    cp_bytes = c_prime / 8.0
    vq1 = vq2 = vq3 = 0.0
    last_t = 0.0
    n = lost_b = total_b = busy = exceed = 0
    busy_secs = exceed_secs = 0.0
    overload = nominal >= c

    # Warmup is window 0: tallies are discarded at its end, but the rate
    # estimator's final warmup sample seeds the first real window.
    if cfg.warmup > 0.0:
        win_start = 0.0
        next_emit = cfg.warmup
        in_warmup = True
    else:
        win_start = 0.0
        next_emit = cfg.warmup + (cfg.window if windowed else emit_interval)
        in_warmup = False
    next_tick = win_start + tick

    out: list[LossEstimate] = []
    times = stream.times.tolist()
    sizes = stream.sizes.tolist()
    n_events = len(times)
    i = 0

    while True:
        boundary = next_emit if next_emit <= next_tick else next_tick
        limit = boundary if boundary < t_end else t_end
        # Arrivals strictly before the next boundary (boundaries processed
        # first on ties, so an arrival at a window end opens the next one).
        while i < n_events:
            t_arr = times[i]
            if t_arr >= limit:
                break
            size = sizes[i]
            i += 1
            dt = t_arr - last_t
            if dt > 0.0:
                if track_time:
                    busy_secs += time_above_threshold(vq2, c, 0.0, dt)
                    exceed_secs += time_above_threshold(vq3, c_prime, x_prime, dt)
                drain = c_bytes * dt
                v = vq1 - drain
                vq1 = v if v > 0.0 else 0.0
                v = vq2 - drain
                vq2 = v if v > 0.0 else 0.0
                v = vq3 - cp_bytes * dt
                vq3 = v if v > 0.0 else 0.0
                last_t = t_arr
            elif dt < 0.0:
                raise ValueError("stream is not time-sorted")
            n += 1
            total_b += size
            if vq1 > 0.0:
                lost_b += size
            else:
                vq1 += size
            if vq2 > 0.0:
                busy += 1
            vq2 += size
            if vq3 > x_prime:
                exceed += 1
            vq3 += size
            est.bytes_seen += size
        if boundary > t_end:
            break
        # Drain up to the boundary.
        dt = boundary - last_t
        if dt > 0.0:
            if track_time:
                busy_secs += time_above_threshold(vq2, c, 0.0, dt)
                exceed_secs += time_above_threshold(vq3, c_prime, x_prime, dt)
            drain = c_bytes * dt
            v = vq1 - drain
            vq1 = v if v > 0.0 else 0.0
            v = vq2 - drain
            vq2 = v if v > 0.0 else 0.0
            v = vq3 - cp_bytes * dt
            vq3 = v if v > 0.0 else 0.0
            last_t = boundary
        if next_emit <= next_tick:
            was_warmup_end = in_warmup
            if was_warmup_end:
                in_warmup = False
            else:
                out.append(_emit(alpha, cfg.tail_mode, win_start, boundary,
                                 n, lost_b, total_b, busy, exceed,
                                 busy_secs, exceed_secs, overload))
            if windowed or was_warmup_end:
                # New window: reset tallies, roll the rate sample, and
                # realign the tick grid (the boundary is tick 0).
                est.roll(boundary)
                win_start = boundary
                n = lost_b = total_b = busy = exceed = 0
                busy_secs = exceed_secs = 0.0
                overload = False
                r_hat = est.fallback_r
                if r_hat >= c:
                    overload = True
                if alpha != 1.0:
                    c_prime = r_hat + (c - r_hat) / alpha
                    cp_bytes = c_prime / 8.0
                next_tick = boundary + tick
                next_emit = boundary + (cfg.window if windowed else emit_interval)
            else:
                next_emit = boundary + emit_interval
        else:
            # Rate-update tick.
            elapsed = boundary - est.window_start
            if elapsed < tick:
                r_hat = est.fallback_r
            else:
                r_hat = est.bytes_seen * 8.0 / elapsed
            est.current_r = r_hat
            if r_hat >= c:
                overload = True
            if alpha != 1.0:
                c_prime = r_hat + (c - r_hat) / alpha
                cp_bytes = c_prime / 8.0
            next_tick = boundary + tick
    return out


def run_online(stream: PacketStream, x: float, c: float, cfg: VqConfig,
               t_end: float | None = None) -> list[LossEstimate]:
    """Windowed online estimation of the loss probability at threshold x.

    Consecutive windows of ``cfg.window`` seconds start after the warmup;
    one estimate is emitted per completed window.  VQ backlogs persist
    across windows; only the tallies reset.
    """
    return _replay(stream, x, c, cfg, t_end, windowed=True, emit_interval=None)


def run_growing(stream: PacketStream, x: float, c: float, cfg: VqConfig,
                emit_interval: float, t_end: float | None = None) -> list[LossEstimate]:
    """Single growing-window estimation, emitting every ``emit_interval``.

    Tallies accumulate from the end of the warmup; used for transient
    response studies.
    """
    if emit_interval <= 0:
        raise ConfigurationError("emit_interval must be positive")
    return _replay(stream, x, c, cfg, t_end, windowed=False,
                   emit_interval=emit_interval)


def write_estimates(estimates: Sequence[LossEstimate], path: str | Path) -> None:
    """Export an estimate series as CSV."""
    with open(path, "w", encoding="ascii") as fh:
        fh.write("window_end_s,estimate,pl0,p0,u,alpha,flags\n")
        for e in estimates:
            flags = "|".join(sorted(e.flags))
            fh.write(f"{e.window_end!r},{e.value!r},{e.pl0!r},{e.p0!r},"
                     f"{e.u!r},{e.alpha!r},{flags}\n")

"""Fluid-drain queue engine: finite FIFO ground truth and the VQ bank.

All queues share the same drain model: the byte backlog decreases
continuously at the service rate between arrivals and is clamped at zero.
Thresholds and backlogs are bytes; service rates are bits/s and are
converted once (rate/8 is exact in binary floating point).

The bank holds three virtual queues fed copies of the same traffic:

* VQ1 ("bufferless"): an arriving packet is dropped when any residual work
  remains, giving the zero-buffer loss ratio,
* VQ2 (infinite buffer at the real rate): counts arrivals that find the
  server busy, giving the probability of a non-empty queue,
* VQ3 (infinite buffer at a scaled-down rate): counts arrivals that find
  the backlog above a scaled threshold.

Tail statistics are taken at arrival epochs and exclude the arriving
packet's own bytes; a time-average mode exists for validation.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

from .errors import ConfigurationError
from .traffic import PacketEvent, PacketStream

ARRIVAL_EPOCH = "arrival-epoch"
TIME_AVERAGE = "time-average"


@dataclass(frozen=True)
class QueueParams:
    """Service rate c (bits/s) and buffer size (bytes; math.inf = unbounded)."""

    service_rate: float
    buffer: float = math.inf

    def __post_init__(self) -> None:
        if self.service_rate <= 0:
            raise ConfigurationError("service_rate must be positive")
        if self.buffer < 0:
            raise ConfigurationError("buffer must be >= 0")

    @property
    def bounded(self) -> bool:
        return math.isfinite(self.buffer)


@dataclass
class DirectLossStats:
    """Byte/packet accounting of a finite-buffer run.

    ``served_bytes`` is derived from conservation
    (offered = served + lost + final backlog holds exactly by construction);
    tests cross-check it against independently accumulated drain.
    """

    offered_bytes: int = 0
    lost_bytes: int = 0
    served_bytes: float = 0.0
    final_backlog: float = 0.0
    offered_packets: int = 0
    lost_packets: int = 0

    @property
    def loss_ratio_bytes(self) -> float:
        return self.lost_bytes / self.offered_bytes if self.offered_bytes else 0.0

    @property
    def loss_ratio_packets(self) -> float:
        return self.lost_packets / self.offered_packets if self.offered_packets else 0.0


class FiniteFifo:
    """Incremental finite-buffer FIFO with fluid drain.

    Admission is by backlog threshold: a packet is accepted iff the backlog
    seen on arrival is at most the buffer size, and is dropped whole
    otherwise.  At buffer 0 this coincides with the bufferless VQ1 rule.
    """

    def __init__(self, params: QueueParams):
        self.params = params
        self.backlog = 0.0
        self.clock = 0.0
        self.offered_bytes = 0
        self.lost_bytes = 0
        self.offered_packets = 0
        self.lost_packets = 0

    def advance(self, now: float) -> None:
        if now < self.clock:
            raise ValueError("time goes backwards")
        drained = self.params.service_rate / 8.0 * (now - self.clock)
        self.backlog = self.backlog - drained
        if self.backlog < 0.0:
            self.backlog = 0.0
        self.clock = now

    def offer(self, time: float, size: int) -> bool:
        """Advance to ``time`` and offer one packet; True if accepted."""
        self.advance(time)
        self.offered_bytes += size
        self.offered_packets += 1
        if self.backlog > self.params.buffer:
            self.lost_bytes += size
            self.lost_packets += 1
            return False
        self.backlog += size
        return True

    def reset_counters(self) -> None:
        """Forget offered/lost tallies but keep the backlog (warmup cut)."""
        self.offered_bytes = 0
        self.lost_bytes = 0
        self.offered_packets = 0
        self.lost_packets = 0

    def stats(self) -> DirectLossStats:
        served = self.offered_bytes - self.lost_bytes - self.backlog
        return DirectLossStats(
            offered_bytes=self.offered_bytes,
            lost_bytes=self.lost_bytes,
            served_bytes=served,
            final_backlog=self.backlog,
            offered_packets=self.offered_packets,
            lost_packets=self.lost_packets,
        )


def simulate_finite_fifo(stream: PacketStream, params: QueueParams) -> DirectLossStats:
    """Replay a sorted stream through a finite FIFO and return loss stats.

    Inlined copy of the ``FiniteFifo.offer`` arithmetic; the two paths are
    held bit-identical by tests.
    """
    if not params.bounded:
        raise ConfigurationError("simulate_finite_fifo needs a finite buffer")
    rate_bytes = params.service_rate / 8.0
    buffer = params.buffer
    backlog = 0.0
    prev_t = 0.0
    offered_b = 0
    lost_b = 0
    lost_p = 0
    for t, size in zip(stream.times.tolist(), stream.sizes.tolist()):
        if t < prev_t:
            raise ValueError("stream is not time-sorted")
        backlog -= rate_bytes * (t - prev_t)
        if backlog < 0.0:
            backlog = 0.0
        prev_t = t
        offered_b += size
        if backlog > buffer:
            lost_b += size
            lost_p += 1
        else:
            backlog += size
    return DirectLossStats(
        offered_bytes=offered_b,
        lost_bytes=lost_b,
        served_bytes=offered_b - lost_b - backlog,
        final_backlog=backlog,
        offered_packets=len(stream),
        lost_packets=lost_p,
    )


def time_above_threshold(backlog: float, rate_bps: float, threshold: float,
                         dt: float) -> float:
    """Time within the next ``dt`` seconds the draining backlog exceeds
    ``threshold`` bytes (no arrivals in between)."""
    if backlog <= threshold or dt <= 0.0:
        return 0.0
    crossing = (backlog - threshold) / (rate_bps / 8.0)
    return crossing if crossing < dt else dt


def observe_tail(stream: PacketStream, service_rate: float, threshold: float,
                 mode: str = ARRIVAL_EPOCH, t_end: float | None = None) -> float:
    """Exceedance probability of an unbounded fluid queue fed by ``stream``.

    arrival-epoch: fraction of arrivals whose pre-admission backlog exceeds
    the threshold.  time-average: fraction of time the backlog exceeds the
    threshold, observed from the first arrival until ``t_end`` (default:
    the last arrival).  Returns NaN when the mode's denominator is empty.
    """
    if service_rate <= 0:
        raise ConfigurationError("service_rate must be positive")
    if mode not in (ARRIVAL_EPOCH, TIME_AVERAGE):
        raise ConfigurationError(f"unknown tail mode: {mode}")
    n = len(stream)
    if n == 0:
        return math.nan
    rate_bytes = service_rate / 8.0
    times = stream.times.tolist()
    sizes = stream.sizes.tolist()

    if mode == ARRIVAL_EPOCH:
        backlog = 0.0
        prev_t = times[0]
        seen = 0
        for t, size in zip(times, sizes):
            if t < prev_t:
                raise ValueError("stream is not time-sorted")
            backlog -= rate_bytes * (t - prev_t)
            if backlog < 0.0:
                backlog = 0.0
            prev_t = t
            if backlog > threshold:
                seen += 1
            backlog += size
        return seen / n

    if t_end is None:
        t_end = times[-1]
    span = t_end - times[0]
    if span <= 0.0:
        return math.nan
    backlog = 0.0
    prev_t = times[0]
    above = 0.0
    for t, size in zip(times, sizes):
        if t < prev_t:
            raise ValueError("stream is not time-sorted")
        above += time_above_threshold(backlog, service_rate, threshold, t - prev_t)
        backlog -= rate_bytes * (t - prev_t)
        if backlog < 0.0:
            backlog = 0.0
        prev_t = t
        backlog += size
    above += time_above_threshold(backlog, service_rate, threshold, t_end - prev_t)
    return above / span


@dataclass
class VqBankState:
    """Counters of the three virtual queues (all backlogs in bytes)."""

    service_rate: float
    vq1_residual: float = 0.0
    vq2_backlog: float = 0.0
    vq3_backlog: float = 0.0
    vq3_service_rate: float = 0.0
    last_update_time: float = 0.0

    def __post_init__(self) -> None:
        if self.service_rate <= 0:
            raise ConfigurationError("service_rate must be positive")
        if self.vq3_service_rate <= 0:
            self.vq3_service_rate = self.service_rate


@dataclass
class WindowStats:
    """Per-window tallies of the VQ bank.

    ``vq2_busy_seconds``/``vq3_exceed_seconds`` accumulate exceedance time
    and back the time-average mode; arrival-epoch counters are primary.
    """

    window_start: float = 0.0
    window_end: float = 0.0
    n_arrivals: int = 0
    vq1_lost_bytes: int = 0
    vq1_total_bytes: int = 0
    vq2_busy_seen: int = 0
    vq3_exceed_seen: int = 0
    observed_bytes: int = 0
    vq2_busy_seconds: float = 0.0
    vq3_exceed_seconds: float = 0.0

    @property
    def loss_fraction_vq1(self) -> float:
        return self.vq1_lost_bytes / self.vq1_total_bytes if self.vq1_total_bytes else math.nan

    @property
    def busy_fraction_vq2(self) -> float:
        return self.vq2_busy_seen / self.n_arrivals if self.n_arrivals else math.nan

    @property
    def exceed_fraction_vq3(self) -> float:
        return self.vq3_exceed_seen / self.n_arrivals if self.n_arrivals else math.nan


def advance_vq_bank(state: VqBankState, now: float) -> VqBankState:
    """Drain all three queues up to ``now`` (clamped at zero backlog)."""
    dt = now - state.last_update_time
    if dt < 0:
        raise ValueError("time goes backwards")
    if dt > 0:
        real_drain = state.service_rate / 8.0 * dt
        v = state.vq1_residual - real_drain
        state.vq1_residual = v if v > 0.0 else 0.0
        v = state.vq2_backlog - real_drain
        state.vq2_backlog = v if v > 0.0 else 0.0
        v = state.vq3_backlog - state.vq3_service_rate / 8.0 * dt
        state.vq3_backlog = v if v > 0.0 else 0.0
        state.last_update_time = now
    return state


def on_arrival_vq_bank(state: VqBankState, pkt: PacketEvent, x_prime: float,
                       stats: WindowStats) -> tuple[VqBankState, WindowStats]:
    """Offer one packet to all three queues and update the tallies.

    The state must already be advanced to the packet's timestamp; the
    packet's own bytes never count toward its own exceedance checks.
    """
    if pkt.time != state.last_update_time:
        advance_vq_bank(state, pkt.time)
    size = pkt.size
    stats.n_arrivals += 1
    stats.observed_bytes += size
    stats.vq1_total_bytes += size
    if state.vq1_residual > 0.0:
        stats.vq1_lost_bytes += size
    else:
        state.vq1_residual += size
    if state.vq2_backlog > 0.0:
        stats.vq2_busy_seen += 1
    state.vq2_backlog += size
    if state.vq3_backlog > x_prime:
        stats.vq3_exceed_seen += 1
    state.vq3_backlog += size
    return state, stats


def set_vq3_rate(state: VqBankState, c_prime: float,
                 now: float | None = None) -> VqBankState:
    """Replace VQ3's service rate, draining at the old rate up to ``now``."""
    if c_prime <= 0:
        raise ConfigurationError("VQ3 service rate must be positive")
    if now is not None:
        advance_vq_bank(state, now)
    state.vq3_service_rate = c_prime
    return state

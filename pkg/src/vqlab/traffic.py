"""Synthetic packet-arrival streams and their stationary statistics.

Two source models are provided:

* on-off sources: exponentially distributed on/off periods; during an
  on-period the source emits a constant bit rate that is packetized into
  fixed-size packets (audio-like traffic),
* 3-state MMPP sources: a continuous-time Markov chain modulates the rate
  of a Poisson packet process (video-like traffic).

An aggregate stream is the time-sorted merge of n independent sources.
Seeding rule: the master seed is turned into a ``numpy.random.SeedSequence``
and one child is spawned per source (``spawn_key=(source_index,)``), so the
stream of source i never changes when more sources are added.

Units: time in seconds, packet sizes in bytes, rates in bits/s.
"""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path
from typing import Iterator, NamedTuple, Sequence, Union

import numpy as np

from .errors import ConfigurationError


class PacketEvent(NamedTuple):
    """One packet arrival."""

    time: float
    size: int
    source_id: int


@dataclass(frozen=True)
class PacketStream:
    """A time-sorted packet stream backed by parallel arrays.

    Streams routinely hold millions of events, so the columnar layout is
    kept instead of per-event objects; iteration yields ``PacketEvent``.
    """

    times: np.ndarray
    sizes: np.ndarray
    source_ids: np.ndarray

    def __post_init__(self) -> None:
        if not (len(self.times) == len(self.sizes) == len(self.source_ids)):
            raise ValueError("times/sizes/source_ids lengths differ")

    def __len__(self) -> int:
        return len(self.times)

    def __iter__(self) -> Iterator[PacketEvent]:
        for t, s, src in zip(self.times.tolist(), self.sizes.tolist(),
                             self.source_ids.tolist()):
            yield PacketEvent(t, s, src)

    def __getitem__(self, i: int) -> PacketEvent:
        return PacketEvent(float(self.times[i]), int(self.sizes[i]),
                           int(self.source_ids[i]))

    @property
    def total_bytes(self) -> int:
        return int(self.sizes.sum())

    @property
    def duration(self) -> float:
        """Time of the last arrival (0.0 for an empty stream)."""
        return float(self.times[-1]) if len(self.times) else 0.0

    def is_sorted(self) -> bool:
        return bool(np.all(np.diff(self.times) >= 0.0))

    @classmethod
    def from_events(cls, events: Sequence[PacketEvent]) -> "PacketStream":
        if not events:
            return cls.empty()
        return cls(
            times=np.array([e.time for e in events], dtype=np.float64),
            sizes=np.array([e.size for e in events], dtype=np.int64),
            source_ids=np.array([e.source_id for e in events], dtype=np.int64),
        )

    @classmethod
    def empty(cls) -> "PacketStream":
        return cls(
            times=np.empty(0, dtype=np.float64),
            sizes=np.empty(0, dtype=np.int64),
            source_ids=np.empty(0, dtype=np.int64),
        )


@dataclass(frozen=True)
class OnOffSpec:
    """Aggregate of homogeneous on-off sources.

    Each source alternates exponential on/off periods; while on it produces
    ``on_rate`` bits/s, packetized into ``packet_size``-byte packets.
    """

    n_sources: int
    mean_on: float = 0.2
    mean_off: float = 0.6
    on_rate: float = 64_000.0
    packet_size: int = 500

    def __post_init__(self) -> None:
        if self.n_sources < 0:
            raise ConfigurationError("n_sources must be >= 0")
        if min(self.mean_on, self.mean_off, self.on_rate) <= 0:
            raise ConfigurationError("on/off durations and on_rate must be positive")
        if self.packet_size <= 0:
            raise ConfigurationError("packet_size must be positive")

    @property
    def duty_cycle(self) -> float:
        return self.mean_on / (self.mean_on + self.mean_off)


@dataclass(frozen=True)
class Mmpp3Spec:
    """Aggregate of independent 3-state Markov-modulated Poisson sources.

    In chain state i packets arrive as a Poisson process of ``rates[i]``
    packets/s; ``q_ij`` are the chain transition rates (1/s).
    """

    n_sources: int
    rates: tuple[float, float, float] = (83.0, 367.0, 661.0)
    q12: float = 40.0
    q13: float = 1.0
    q21: float = 10.0
    q23: float = 1.3
    q31: float = 6.0
    q32: float = 0.1
    packet_size: int = 188

    def __post_init__(self) -> None:
        if self.n_sources < 0:
            raise ConfigurationError("n_sources must be >= 0")
        if min(self.rates) <= 0:
            raise ConfigurationError("state rates must be positive")
        if self.packet_size <= 0:
            raise ConfigurationError("packet_size must be positive")
        q = self.transition_matrix()
        if q.min() < 0:
            raise ConfigurationError("transition rates must be non-negative")
        if np.any(q.sum(axis=1) <= 0):
            raise ConfigurationError("every state needs at least one exit rate")
        if not _strongly_connected(q > 0):
            raise ConfigurationError("MMPP transition graph is not irreducible")

    def transition_matrix(self) -> np.ndarray:
        """Off-diagonal transition rates as a 3x3 array (zero diagonal)."""
        return np.array([
            [0.0, self.q12, self.q13],
            [self.q21, 0.0, self.q23],
            [self.q31, self.q32, 0.0],
        ])

    def generator_matrix(self) -> np.ndarray:
        q = self.transition_matrix()
        np.fill_diagonal(q, -q.sum(axis=1))
        return q


TrafficSpec = Union[OnOffSpec, Mmpp3Spec]


@dataclass(frozen=True)
class StationaryStats:
    """Long-run statistics of an aggregate spec."""

    mean_rate: float
    state_distribution: tuple[float, ...] | None = None
    duty_cycle: float | None = None


def _strongly_connected(adj: np.ndarray) -> bool:
    # Boolean transitive closure; fine for the 3x3 chains used here.
    reach = adj | np.eye(adj.shape[0], dtype=bool)
    for _ in range(adj.shape[0]):
        reach = reach | (reach @ reach)
    return bool(reach.all())


def _source_rngs(seed: int, n: int) -> list[np.random.Generator]:
    children = np.random.SeedSequence(seed).spawn(n)
    return [np.random.default_rng(c) for c in children]


def mmpp_stationary_distribution(spec: Mmpp3Spec) -> np.ndarray:
    """Solve pi @ Q = 0, sum(pi) = 1 for the modulating chain."""
    q = spec.generator_matrix()
    m = q.T.copy()
    m[-1, :] = 1.0
    rhs = np.zeros(3)
    rhs[-1] = 1.0
    pi = np.linalg.solve(m, rhs)
    residual = float(np.abs(pi @ q).max())
    if residual > 1e-10:
        raise ConfigurationError(
            f"stationary solve failed global balance (residual {residual:.2e})")
    return pi


def stationary_stats(spec: TrafficSpec) -> StationaryStats:
    """Analytic long-run mean rate of the aggregate (bits/s)."""
    if isinstance(spec, OnOffSpec):
        duty = spec.duty_cycle
        return StationaryStats(mean_rate=spec.n_sources * spec.on_rate * duty,
                               duty_cycle=duty)
    pi = mmpp_stationary_distribution(spec)
    per_flow = float(pi @ np.asarray(spec.rates)) * spec.packet_size * 8
    return StationaryStats(mean_rate=spec.n_sources * per_flow,
                           state_distribution=tuple(float(v) for v in pi))


def _alternating_periods(rng: np.random.Generator, mean_first: float,
                         mean_second: float, horizon: float) -> np.ndarray:
    """Durations of alternating exponential periods covering [0, horizon]."""
    mean_cycle = mean_first + mean_second
    periods: list[np.ndarray] = []
    total = 0.0
    while total < horizon:
        n_cycles = max(8, int((horizon - total) / mean_cycle * 1.5) + 4)
        block = np.empty(2 * n_cycles)
        block[0::2] = rng.exponential(mean_first, n_cycles)
        block[1::2] = rng.exponential(mean_second, n_cycles)
        periods.append(block)
        total += float(block.sum())
    out = np.concatenate(periods)
    # Trim to the first period that crosses the horizon.
    cum = np.cumsum(out)
    last = int(np.searchsorted(cum, horizon, side="left"))
    return out[:last + 1]


def _onoff_source(spec: OnOffSpec, duration: float,
                  rng: np.random.Generator) -> np.ndarray:
    """Packet emission times of one on-off source over [0, duration)."""
    # Stationary start: P(on) = duty cycle; the residual first period is
    # again exponential by memorylessness.
    start_on = bool(rng.random() < spec.duty_cycle)
    if start_on:
        durations = _alternating_periods(rng, spec.mean_on, spec.mean_off, duration)
        on_slice = slice(0, None, 2)
    else:
        durations = _alternating_periods(rng, spec.mean_off, spec.mean_on, duration)
        on_slice = slice(1, None, 2)
    starts = np.concatenate(([0.0], np.cumsum(durations)[:-1]))
    on_starts = starts[on_slice]
    on_durs = durations[on_slice]
    if len(on_starts) == 0:
        return np.empty(0)
    # Clip to the stream horizon.
    keep = on_starts < duration
    on_starts = on_starts[keep]
    on_durs = np.minimum(on_durs[keep], duration - on_starts)

    # A packet leaves whenever packet_size*8 bits have accumulated across
    # on-periods; leftover bits carry over, which the cumulative-bits
    # construction below encodes directly.
    rate = spec.on_rate
    bits_per_packet = spec.packet_size * 8.0
    cum_bits = np.cumsum(on_durs * rate)
    n_packets = int(cum_bits[-1] // bits_per_packet)
    if n_packets == 0:
        return np.empty(0)
    targets = np.arange(1, n_packets + 1) * bits_per_packet
    seg = np.searchsorted(cum_bits, targets, side="left")
    prev_bits = np.concatenate(([0.0], cum_bits[:-1]))
    times = on_starts[seg] + (targets - prev_bits[seg]) / rate
    return times[times < duration]


def generate_onoff(spec: OnOffSpec, duration: float, seed: int) -> PacketStream:
    """Aggregate stream of ``spec.n_sources`` independent on-off sources."""
    if duration <= 0:
        raise ConfigurationError("duration must be positive")
    streams = []
    for i, rng in enumerate(_source_rngs(seed, spec.n_sources)):
        times = _onoff_source(spec, duration, rng)
        streams.append(PacketStream(
            times=times,
            sizes=np.full(len(times), spec.packet_size, dtype=np.int64),
            source_ids=np.full(len(times), i, dtype=np.int64),
        ))
    return merge_streams(streams)


def _mmpp_source(spec: Mmpp3Spec, duration: float,
                 rng: np.random.Generator, pi: np.ndarray) -> np.ndarray:
    """Packet emission times of one MMPP source over [0, duration)."""
    q = spec.transition_matrix()
    exit_rates = q.sum(axis=1)
    jump_probs = q / exit_rates[:, None]
    state = int(rng.choice(3, p=pi))

    seg_starts: list[float] = []
    seg_durs: list[float] = []
    seg_rates: list[float] = []
    t = 0.0
    while t < duration:
        hold = rng.exponential(1.0 / exit_rates[state])
        end = min(t + hold, duration)
        seg_starts.append(t)
        seg_durs.append(end - t)
        seg_rates.append(spec.rates[state])
        state = int(rng.choice(3, p=jump_probs[state]))
        t += hold

    starts = np.array(seg_starts)
    durs = np.array(seg_durs)
    lam = np.array(seg_rates)
    counts = rng.poisson(lam * durs)
    total = int(counts.sum())
    if total == 0:
        return np.empty(0)
    # Given the count, Poisson arrival epochs are i.i.d. uniform in the
    # segment; segments are disjoint so one global sort suffices.
    u = rng.random(total)
    times = np.repeat(starts, counts) + u * np.repeat(durs, counts)
    times.sort()
    return times[times < duration]


def generate_mmpp3(spec: Mmpp3Spec, duration: float, seed: int) -> PacketStream:
    """Aggregate stream of ``spec.n_sources`` independent MMPP-3 sources."""
    if duration <= 0:
        raise ConfigurationError("duration must be positive")
    pi = mmpp_stationary_distribution(spec)
    streams = []
    for i, rng in enumerate(_source_rngs(seed, spec.n_sources)):
        times = _mmpp_source(spec, duration, rng, pi)
        streams.append(PacketStream(
            times=times,
            sizes=np.full(len(times), spec.packet_size, dtype=np.int64),
            source_ids=np.full(len(times), i, dtype=np.int64),
        ))
    return merge_streams(streams)


def generate(spec: TrafficSpec, duration: float, seed: int) -> PacketStream:
    if isinstance(spec, OnOffSpec):
        return generate_onoff(spec, duration, seed)
    return generate_mmpp3(spec, duration, seed)


def merge_streams(streams: Sequence[PacketStream]) -> PacketStream:
    """Globally time-sorted merge; ties break on (source_id, input order)."""
    streams = [s for s in streams if len(s)]
    if not streams:
        return PacketStream.empty()
    for s in streams:
        if not s.is_sorted():
            raise ValueError("merge_streams given an unsorted input stream")
    times = np.concatenate([s.times for s in streams])
    sizes = np.concatenate([s.sizes for s in streams])
    sources = np.concatenate([s.source_ids for s in streams])
    # lexsort is stable, so equal (time, source_id) keys keep input order,
    # which preserves per-source sequence numbering.
    order = np.lexsort((sources, times))
    return PacketStream(times=times[order], sizes=sizes[order],
                        source_ids=sources[order])


def write_trace(stream: PacketStream, path: str | Path) -> None:
    """Export as newline-delimited ``time_s,size_bytes,source_id`` records."""
    with open(path, "w", encoding="ascii") as fh:
        for t, s, src in zip(stream.times.tolist(), stream.sizes.tolist(),
                             stream.source_ids.tolist()):
            fh.write(f"{t!r},{s},{src}\n")


def read_trace(path: str | Path) -> PacketStream:
    times: list[float] = []
    sizes: list[int] = []
    sources: list[int] = []
    with open(path, "r", encoding="ascii") as fh:
        for line in fh:
            line = line.strip()
            if not line:
                continue
            t, s, src = line.split(",")
            times.append(float(t))
            sizes.append(int(s))
            sources.append(int(src))
    return PacketStream(times=np.asarray(times, dtype=np.float64),
                        sizes=np.asarray(sizes, dtype=np.int64),
                        source_ids=np.asarray(sources, dtype=np.int64))

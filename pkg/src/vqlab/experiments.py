"""Experiment runners: steady-state sweeps, transient response, curve dumps.

Experiments are described by a single JSON config (see README for the
schema).  Every runner writes CSV with a header row, echoes the resolved
config into a sidecar file, and stamps each row with the seed and a hash
of the resolved config so outputs are self-identifying.  Reruns with the
same config and seeds are byte-identical.
"""

from __future__ import annotations

import hashlib
import json
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Iterable, Sequence

import numpy as np

from . import analysis
from .errors import ConfigurationError
from .mva import assemble_loss, dts_search, measure_variance_curve, mva_tail
from .queue_core import (FiniteFifo, QueueParams, VqBankState, WindowStats,
                         advance_vq_bank, on_arrival_vq_bank)
from .traffic import (Mmpp3Spec, OnOffSpec, PacketStream, TrafficSpec,
                      generate, stationary_stats)
from .vq_estimator import VqConfig, run_growing, run_online

DEFAULT_ETA_FIG1_TAILS = (1e-4, 1e-6, 1e-8)
DEFAULT_ETA_FIG3_ALPHAS = (1.5, 2.5, 3.5)


@dataclass(frozen=True)
class ExperimentConfig:
    """Resolved experiment description (all defaults applied)."""

    traffic: TrafficSpec
    service_rate: float
    buffer_sweep: tuple[float, ...]
    alphas: tuple[float, ...]
    warmup: float
    duration: float
    seeds: tuple[int, ...]
    out_dir: Path
    load: float | None = None
    rate_update_interval: float = 1e-3
    window: float | None = None
    tail_mode: str = "arrival-epoch"
    transient_step: float = 0.02
    mva_delta: float | None = None
    mva_scales: int = 200
    raw: dict[str, Any] = field(default_factory=dict, repr=False)

    def __post_init__(self) -> None:
        if self.service_rate <= 0:
            raise ConfigurationError("service_rate_bps must be positive")
        if self.load is not None and not 0.0 < self.load < 1.0:
            raise ConfigurationError("load must be in (0, 1) when given")
        if self.duration <= self.warmup:
            raise ConfigurationError("duration_s must exceed warmup_s")
        if not self.seeds:
            raise ConfigurationError("at least one seed is required")
        if not self.buffer_sweep:
            raise ConfigurationError("buffer_sweep_bytes must not be empty")
        if any(b < 0 for b in self.buffer_sweep):
            raise ConfigurationError("buffer sizes must be >= 0")
        if not self.alphas or any(a < 1.0 for a in self.alphas):
            raise ConfigurationError("alphas must be >= 1")
        if self.transient_step <= 0:
            raise ConfigurationError("transient_step_s must be positive")

    @property
    def measure_window(self) -> float:
        """Measurement window: configured, else the whole post-warmup span."""
        return self.window if self.window is not None else self.duration - self.warmup

    def vq_config(self, alpha: float) -> VqConfig:
        return VqConfig(
            window=self.measure_window,
            alpha=alpha,
            rate_update_interval=self.rate_update_interval,
            tail_mode=self.tail_mode,
            nominal_rate=stationary_stats(self.traffic).mean_rate,
            warmup=self.warmup,
        )

    def config_hash(self) -> str:
        # out_dir is excluded: it names where results go, not what they are.
        payload = {k: v for k, v in self.raw.items() if k != "out_dir"}
        canonical = json.dumps(payload, sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(canonical.encode()).hexdigest()[:12]


def _traffic_spec_from_dict(d: dict[str, Any], service_rate: float,
                            load: float | None) -> TrafficSpec:
    model = d.get("model")
    if model == "onoff":
        spec = OnOffSpec(
            n_sources=int(d.get("n_sources", 0)),
            mean_on=float(d.get("mean_on_s", 0.2)),
            mean_off=float(d.get("mean_off_s", 0.6)),
            on_rate=float(d.get("on_rate_bps", 64_000.0)),
            packet_size=int(d.get("packet_size_bytes", 500)),
        )
    elif model == "mmpp3":
        spec = Mmpp3Spec(
            n_sources=int(d.get("n_sources", 0)),
            rates=tuple(float(v) for v in d.get("state_rates_pps", (83.0, 367.0, 661.0))),
            q12=float(d.get("q12", 40.0)), q13=float(d.get("q13", 1.0)),
            q21=float(d.get("q21", 10.0)), q23=float(d.get("q23", 1.3)),
            q31=float(d.get("q31", 6.0)), q32=float(d.get("q32", 0.1)),
            packet_size=int(d.get("packet_size_bytes", 188)),
        )
    else:
        raise ConfigurationError(f"unknown traffic model: {model!r}")
    if load is not None:
        # Load picks the source count: n = round(load * c / per-source rate).
        one = type(spec)(**{**spec.__dict__, "n_sources": 1})
        per_source = stationary_stats(one).mean_rate
        n = round(load * service_rate / per_source)
        if n < 1:
            raise ConfigurationError("load too small for one source")
        spec = type(spec)(**{**spec.__dict__, "n_sources": n})
    return spec


def load_config(path: str | Path, *, seed_override: int | None = None,
                out_override: str | Path | None = None) -> ExperimentConfig:
    """Parse and validate a JSON experiment config."""
    path = Path(path)
    try:
        raw = json.loads(path.read_text())
    except (OSError, json.JSONDecodeError) as exc:
        raise ConfigurationError(f"cannot read config {path}: {exc}") from exc
    return config_from_dict(raw, seed_override=seed_override,
                            out_override=out_override)


def config_from_dict(raw: dict[str, Any], *, seed_override: int | None = None,
                     out_override: str | Path | None = None) -> ExperimentConfig:
    try:
        service_rate = float(raw["service_rate_bps"])
        load = raw.get("load")
        load = float(load) if load is not None else None
        traffic = _traffic_spec_from_dict(raw["traffic"], service_rate, load)
        seeds = tuple(int(s) for s in raw.get("seeds", ()))
        if seed_override is not None:
            seeds = (seed_override,)
        out_dir = Path(out_override if out_override is not None
                       else raw.get("out_dir", "results"))
        vq = raw.get("vq", {})
        window = vq.get("window_s")
        mva_cfg = raw.get("mva", {})
        cfg = ExperimentConfig(
            traffic=traffic,
            service_rate=service_rate,
            load=load,
            buffer_sweep=tuple(float(b) for b in raw.get("buffer_sweep_bytes", ())),
            alphas=tuple(float(a) for a in raw.get("alphas", (2.5,))),
            warmup=float(raw.get("warmup_s", 0.0)),
            duration=float(raw["duration_s"]),
            seeds=seeds,
            out_dir=out_dir,
            rate_update_interval=float(vq.get("rate_update_interval_s", 1e-3)),
            window=float(window) if window is not None else None,
            tail_mode=vq.get("tail_mode", "arrival-epoch"),
            transient_step=float(raw.get("transient_step_s", 0.02)),
            mva_delta=(float(mva_cfg["delta_s"])
                       if mva_cfg.get("delta_s") is not None else None),
            mva_scales=int(mva_cfg.get("n_scales", 200)),
            raw=raw,
        )
    except KeyError as exc:
        raise ConfigurationError(f"config missing required key: {exc}") from exc
    except (TypeError, ValueError) as exc:
        raise ConfigurationError(f"malformed config value: {exc}") from exc
    return cfg


def _write_csv(path: Path, header: Sequence[str],
               rows: Iterable[Sequence[Any]]) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", encoding="ascii") as fh:
        fh.write(",".join(header) + "\n")
        for row in rows:
            fh.write(",".join(_fmt(v) for v in row) + "\n")


def _fmt(value: Any) -> str:
    if isinstance(value, float):
        return repr(value)
    return str(value)


def _write_sidecar(cfg: ExperimentConfig, name: str) -> None:
    cfg.out_dir.mkdir(parents=True, exist_ok=True)
    effective = dict(cfg.raw)
    effective["_resolved"] = {
        "n_sources": cfg.traffic.n_sources,
        "mean_rate_bps": stationary_stats(cfg.traffic).mean_rate,
        "window_s": cfg.measure_window,
        "config_hash": cfg.config_hash(),
        "mva_delta_s": _mva_delta(cfg),
        "mva_n_scales": cfg.mva_scales,
    }
    sidecar = cfg.out_dir / f"{name}_effective_config.json"
    sidecar.write_text(json.dumps(effective, indent=2, sort_keys=True) + "\n")


def _mva_delta(cfg: ExperimentConfig) -> float:
    if cfg.mva_delta is not None:
        return cfg.mva_delta
    # Default smallest scale: one packet service time on the real link.
    return cfg.traffic.packet_size * 8.0 / cfg.service_rate


def _direct_loss(stream: PacketStream, cfg: ExperimentConfig,
                 buffer: float) -> tuple[float, int]:
    """Post-warmup byte-loss ratio and loss-event count of the real FIFO."""
    fifo = FiniteFifo(QueueParams(cfg.service_rate, buffer))
    warmup = cfg.warmup
    t_end = cfg.duration
    times = stream.times.tolist()
    sizes = stream.sizes.tolist()
    started = False
    for t, size in zip(times, sizes):
        if t >= t_end:
            break
        if not started and t >= warmup:
            fifo.reset_counters()
            started = True
        fifo.offer(t, size)
    if not started:
        fifo.reset_counters()
    stats = fifo.stats()
    return stats.loss_ratio_bytes, stats.lost_packets


def run_steady(cfg: ExperimentConfig) -> Path:
    """Buffer sweep: direct FIFO loss vs the online estimate per alpha.

    One estimate per (buffer, alpha, seed) using a single window spanning
    the post-warmup run, emitted to ``steady.csv``.
    """
    _write_sidecar(cfg, "steady")
    chash = cfg.config_hash()
    rows = []
    for seed in cfg.seeds:
        stream = generate(cfg.traffic, cfg.duration, seed)
        for buffer in cfg.buffer_sweep:
            direct, lost_packets = _direct_loss(stream, cfg, buffer)
            for alpha in cfg.alphas:
                estimates = run_online(stream, buffer, cfg.service_rate,
                                       cfg.vq_config(alpha), t_end=cfg.duration)
                if not estimates:
                    raise ConfigurationError(
                        "no complete measurement window fits the run")
                est = estimates[-1]
                rows.append((buffer, direct, est.value, alpha, seed,
                             lost_packets, "|".join(sorted(est.flags)), chash))
    out = cfg.out_dir / "steady.csv"
    _write_csv(out, ("x_bytes", "direct_loss", "vq_estimate", "alpha", "seed",
                     "direct_lost_packets", "flags", "config_hash"), rows)
    return out


def run_transient(cfg: ExperimentConfig) -> Path:
    """Growing-window estimate series vs cumulative direct loss.

    Requires a single buffer size; emits one row per emission step to
    ``transient.csv``.
    """
    if len(cfg.buffer_sweep) != 1:
        raise ConfigurationError("transient runs need exactly one buffer size")
    buffer = cfg.buffer_sweep[0]
    _write_sidecar(cfg, "transient")
    chash = cfg.config_hash()
    step = cfg.transient_step
    rows = []
    for seed in cfg.seeds:
        stream = generate(cfg.traffic, cfg.duration, seed)
        series = _direct_cumulative(stream, cfg, buffer, step)
        for alpha in cfg.alphas:
            vq_cfg = cfg.vq_config(alpha)
            estimates = run_growing(stream, buffer, cfg.service_rate, vq_cfg,
                                    emit_interval=step, t_end=cfg.duration)
            for est, (t_s, cum_loss, first_loss) in zip(estimates, series):
                rows.append((t_s, est.value, cum_loss,
                             first_loss if first_loss is not None else "",
                             alpha, seed, "|".join(sorted(est.flags)), chash))
    out = cfg.out_dir / "transient.csv"
    _write_csv(out, ("t_s", "vq_estimate", "direct_cumulative_loss",
                     "first_direct_loss_time", "alpha", "seed", "flags",
                     "config_hash"), rows)
    return out


def _direct_cumulative(stream: PacketStream, cfg: ExperimentConfig,
                       buffer: float, step: float
                       ) -> list[tuple[float, float, float | None]]:
    """(t, cumulative byte-loss ratio, first loss time) at each step."""
    fifo = FiniteFifo(QueueParams(cfg.service_rate, buffer))
    times = stream.times.tolist()
    sizes = stream.sizes.tolist()
    warmup = cfg.warmup
    t_end = cfg.duration
    first_loss: float | None = None
    series: list[tuple[float, float, float | None]] = []
    next_emit = warmup + step
    started = False
    i = 0
    n_events = len(times)
    while next_emit <= t_end:
        while i < n_events and times[i] < next_emit:
            t = times[i]
            if t >= t_end:
                break
            if not started and t >= warmup:
                fifo.reset_counters()
                started = True
            lost_before = fifo.lost_packets
            fifo.offer(t, sizes[i])
            if started and first_loss is None and fifo.lost_packets > lost_before:
                first_loss = t
            i += 1
        offered = fifo.offered_bytes if started else 0
        lost = fifo.lost_bytes if started else 0
        series.append((next_emit - warmup, lost / offered if offered else 0.0,
                       None if first_loss is None else first_loss - warmup))
        next_emit += step
    return series


def run_eta_curves(cfg: ExperimentConfig) -> list[Path]:
    """Write the three variance-reduction curve datasets."""
    _write_sidecar(cfg, "eta")
    chash = cfg.config_hash()
    eta_cfg = cfg.raw.get("eta", {})
    fig1_tails = tuple(float(p) for p in eta_cfg.get("fig1_tails",
                                                     DEFAULT_ETA_FIG1_TAILS))
    alpha_lo, alpha_hi, alpha_step = (float(v) for v in eta_cfg.get(
        "fig1_alpha_grid", (1.0, 5.0, 0.05)))
    n_alpha = int(round((alpha_hi - alpha_lo) / alpha_step)) + 1
    alphas = [alpha_lo + k * alpha_step for k in range(n_alpha)]
    fig3_alphas = tuple(float(a) for a in eta_cfg.get("fig3_alphas",
                                                      DEFAULT_ETA_FIG3_ALPHAS))
    lo, hi, count = eta_cfg.get("tail_grid", (1e-8, 1e-1, 57))
    tail_grid = np.logspace(math.log10(float(lo)), math.log10(float(hi)),
                            int(count)).tolist()
    seed = cfg.seeds[0]

    fig1 = cfg.out_dir / "eta_vs_alpha.csv"
    _write_csv(fig1, ("alpha", "tail_p", "eta", "seed", "config_hash"),
               ((p.alpha, p.tail_p, p.eta, seed, chash)
                for p in analysis.eta_vs_alpha_curve(fig1_tails, alphas)))
    fig2 = cfg.out_dir / "eta_min_phi.csv"
    _write_csv(fig2, ("tail_p", "eta_min", "phi", "seed", "config_hash"),
               ((p, em, ph, seed, chash)
                for p, em, ph in analysis.eta_min_phi_curve(tail_grid)))
    fig3 = cfg.out_dir / "eta_fixed_alpha.csv"
    _write_csv(fig3, ("tail_p", "alpha_fixed", "eta_over_eta_min", "seed",
                      "config_hash"),
               ((p, a, ratio, seed, chash)
                for p, a, ratio in analysis.fixed_alpha_ratio_curve(
                    tail_grid, fig3_alphas)))
    return [fig1, fig2, fig3]


def _vq12_scalar(stream: PacketStream, cfg: ExperimentConfig) -> tuple[float, float]:
    """Post-warmup VQ1 loss fraction and VQ2 busy fraction via bank replay."""
    state = VqBankState(service_rate=cfg.service_rate)
    stats = WindowStats(window_start=cfg.warmup, window_end=cfg.duration)
    warmup = cfg.warmup
    t_end = cfg.duration
    started = False
    for pkt in stream:
        if pkt.time >= t_end:
            break
        if not started and pkt.time >= warmup:
            stats = WindowStats(window_start=warmup, window_end=t_end)
            started = True
        advance_vq_bank(state, pkt.time)
        on_arrival_vq_bank(state, pkt, math.inf, stats)
    if not started:
        return math.nan, math.nan
    return stats.loss_fraction_vq1, stats.busy_fraction_vq2


def run_mva_oracle(cfg: ExperimentConfig) -> Path:
    """Variance-curve pipeline per swept buffer size, to ``mva_oracle.csv``.

    The mean rate is the analytic stationary rate so the oracle's error is
    isolated from rate sampling; the loss scalar comes from a VQ1/VQ2
    replay of the same stream.
    """
    _write_sidecar(cfg, "mva_oracle")
    chash = cfg.config_hash()
    delta = _mva_delta(cfg)
    r = stationary_stats(cfg.traffic).mean_rate
    rows = []
    for seed in cfg.seeds:
        stream = generate(cfg.traffic, cfg.duration, seed)
        curve = measure_variance_curve(stream, delta, cfg.mva_scales,
                                       t_end=cfg.duration)
        pl0, p0 = _vq12_scalar(stream, cfg)
        for buffer in cfg.buffer_sweep:
            res = dts_search(curve, buffer, cfg.service_rate, r)
            tail = mva_tail(curve, buffer, cfg.service_rate, r)
            loss, flags = assemble_loss(min(pl0, 1.0), min(p0, 1.0), tail)
            rows.append((buffer, res.tau, res.g_star, tail, loss, seed,
                         "|".join(sorted(flags)), chash))
    out = cfg.out_dir / "mva_oracle.csv"
    _write_csv(out, ("x_bytes", "tau_s", "g_star", "mva_tail", "mva_loss",
                     "seed", "flags", "config_hash"), rows)
    return out

"""Online estimator tests: scaling identities, rate sampling, replay engine."""

import math

import numpy as np
import pytest

from vqlab import (ConfigurationError, OnOffSpec, PacketEvent, RateEstimator,
                   VqBankState, VqConfig, WindowStats, advance_vq_bank,
                   generate_onoff, map_tail, observe_tail, on_arrival_vq_bank,
                   optimal_u, recommend_alpha, run_growing, run_online,
                   sample_rate, set_vq3_rate, vq3_params)
from vqlab.vq_estimator import (FLAG_BELOW_RESOLUTION, FLAG_OVERLOAD,
                                FLAG_UNDEFINED_SCALAR, write_estimates)

from conftest import make_stream


class TestVq3Params:
    def test_alpha_one_is_identity(self):
        assert vq3_params(12345.6, 7e6, 3e6, 1.0) == (12345.6, 7e6)

    def test_paper_arithmetic(self):
        # x=100 kB, c=100 Mbps, r=80 Mbps, alpha=2.5 -> 40 kB and 88 Mbps.
        x_p, c_p = vq3_params(100_000.0, 100e6, 80e6, 2.5)
        assert x_p == 40_000.0
        assert c_p == 88e6

    def test_fixed_point_at_balance(self):
        for alpha in (1.0, 1.7, 2.5, 4.0):
            assert vq3_params(1000.0, 5e6, 5e6, alpha)[1] == 5e6

    def test_headroom_identity_exact(self):
        # c' - r must equal (c - r)/alpha at floating-point precision,
        # which pins the headroom-preserving form of the rate formula.
        rng = np.random.default_rng(31)
        for _ in range(200):
            r = float(rng.uniform(1e4, 1e8))
            c = r * float(rng.uniform(1.001, 4.0))
            alpha = float(rng.uniform(1.0, 5.0))
            x_p, c_p = vq3_params(1000.0, c, r, alpha)
            if alpha == 1.0:
                assert c_p == c
            else:
                assert c_p == r + (c - r) / alpha
                assert x_p == 1000.0 / alpha

    def test_alpha_below_one_rejected(self):
        with pytest.raises(ConfigurationError):
            vq3_params(100.0, 2e6, 1e6, 0.9)


class TestMapTail:
    def test_alpha_one_identity(self):
        for u in (0.0, 0.1, 0.5, 1.0):
            assert map_tail(u, 1.0) == u

    def test_paper_point(self):
        assert map_tail(0.2032, 2.5) == pytest.approx(4.72e-5, rel=2e-3)

    def test_zero_maps_to_zero(self):
        assert map_tail(0.0, 2.5) == 0.0

    def test_round_trip(self):
        for u in (1e-6, 0.01, 0.2032, 0.9, 1.0):
            for alpha in (1.0, 1.5, 2.5, 3.5):
                mapped = map_tail(u, alpha)
                assert mapped ** (1.0 / alpha**2) == pytest.approx(u, rel=1e-12)

    def test_monotonicity(self):
        us = np.linspace(0.01, 0.99, 25)
        mapped = [map_tail(float(u), 2.5) for u in us]
        assert all(a < b for a, b in zip(mapped, mapped[1:]))
        alphas = np.linspace(1.0, 4.0, 13)
        by_alpha = [map_tail(0.3, float(a)) for a in alphas]
        assert all(a > b for a, b in zip(by_alpha, by_alpha[1:]))

    def test_domain_checked(self):
        with pytest.raises(ConfigurationError):
            map_tail(1.5, 2.0)


class TestRecommendAlpha:
    def test_one_in_a_million_target(self):
        alpha = recommend_alpha(1e-6)
        assert alpha == pytest.approx(2.944, abs=2e-3)
        assert map_tail(optimal_u(), alpha) == pytest.approx(1e-6, rel=1e-9)

    def test_round_trip_1e4(self):
        alpha = recommend_alpha(1e-4)
        assert alpha == pytest.approx(2.404, abs=2e-3)
        assert map_tail(0.2032, alpha) == pytest.approx(1e-4, rel=2e-3)

    def test_target_at_operating_point(self):
        assert recommend_alpha(optimal_u()) == 1.0
        assert recommend_alpha(0.5) == 1.0

    def test_domain(self):
        with pytest.raises(ConfigurationError):
            recommend_alpha(0.0)


class TestRateEstimator:
    def test_simple_average(self):
        est = RateEstimator(window_start=0.0, fallback_r=1e6, min_elapsed=1e-3)
        est.bytes_seen = 1_000_000
        assert sample_rate(est, 1.0) == pytest.approx(8e6)

    def test_zero_elapsed_returns_fallback(self):
        est = RateEstimator(window_start=5.0, fallback_r=1e6, min_elapsed=1e-3)
        est.bytes_seen = 999
        assert sample_rate(est, 5.0) == 1e6

    def test_scripted_stream_average(self):
        # 3 packets of 400 B by t=0.5 -> 1200 B * 8 / 0.5 = 19.2 kbps.
        est = RateEstimator(window_start=0.0, fallback_r=5e4, min_elapsed=1e-3)
        for _ in range(3):
            est.bytes_seen += 400
        assert sample_rate(est, 0.5) == pytest.approx(19_200.0)

    def test_roll_carries_final_sample(self):
        est = RateEstimator(window_start=0.0, fallback_r=1e6, min_elapsed=1e-3)
        est.bytes_seen = 250_000
        est.roll(1.0)
        assert est.fallback_r == pytest.approx(2e6)
        assert est.bytes_seen == 0
        # Zero-traffic window keeps the previous fallback.
        est.roll(2.0)
        assert est.fallback_r == pytest.approx(2e6)


class TestVqConfig:
    def test_validation(self):
        with pytest.raises(ConfigurationError):
            VqConfig(window=1.0, alpha=0.5)
        with pytest.raises(ConfigurationError):
            VqConfig(window=1e-4, rate_update_interval=1e-3)
        with pytest.raises(ConfigurationError):
            VqConfig(window=1.0, tail_mode="bogus")

    def test_degenerate_alpha_one_allowed(self):
        assert VqConfig(window=1.0, alpha=1.0).alpha == 1.0


def replay_reference(stream, x, c, cfg, t_end):
    """Re-orchestration of run_online from the public queue_core/estimator
    primitives, used as the bit-exactness oracle for the inlined engine."""
    nominal = cfg.nominal_rate if cfg.nominal_rate is not None else c
    x_prime, c_prime = vq3_params(x, c, nominal, cfg.alpha)
    state = VqBankState(service_rate=c, vq3_service_rate=c_prime)
    est = RateEstimator(window_start=0.0, fallback_r=nominal,
                        min_elapsed=cfg.rate_update_interval)
    stats = WindowStats()
    results = []
    win_start = 0.0
    in_warmup = cfg.warmup > 0.0
    next_emit = cfg.warmup if in_warmup else cfg.window
    next_tick = cfg.rate_update_interval
    i, n = 0, len(stream)
    while True:
        boundary = next_emit if next_emit <= next_tick else next_tick
        while i < n and stream.times[i] < min(boundary, t_end):
            pkt = stream[i]
            advance_vq_bank(state, pkt.time)
            on_arrival_vq_bank(state, pkt, x_prime, stats)
            est.bytes_seen += pkt.size
            i += 1
        if boundary > t_end:
            break
        advance_vq_bank(state, boundary)
        if next_emit <= next_tick:
            if not in_warmup:
                n_arr = stats.n_arrivals
                results.append((
                    win_start, boundary, n_arr,
                    stats.loss_fraction_vq1 if n_arr else 0.0,
                    stats.busy_fraction_vq2 if n_arr else 0.0,
                    stats.exceed_fraction_vq3 if n_arr else 0.0,
                ))
            in_warmup = False
            est.roll(boundary)
            win_start = boundary
            stats = WindowStats()
            r_hat = est.fallback_r
            _, c_prime = vq3_params(x, c, r_hat, cfg.alpha)
            set_vq3_rate(state, c_prime)
            next_tick = boundary + cfg.rate_update_interval
            next_emit = boundary + cfg.window
        else:
            r_hat = sample_rate(est, boundary)
            _, c_prime = vq3_params(x, c, r_hat, cfg.alpha)
            set_vq3_rate(state, c_prime)
            next_tick = boundary + cfg.rate_update_interval
    return results


@pytest.fixture(scope="module")
def stream():
    return generate_onoff(OnOffSpec(n_sources=40), 30.0, seed=17)


class TestRunOnline:

    def test_quiet_stream_below_resolution(self):
        # Tiny load, huge threshold: VQ3 never exceeds, estimate is 0.
        stream = make_stream([1.0, 5.0, 9.0], size=100)
        cfg = VqConfig(window=10.0, alpha=2.0, nominal_rate=1e3)
        (est,) = run_online(stream, 1e9, 1e6, cfg, t_end=10.0)
        assert est.value == 0.0
        assert est.u == 0.0
        assert FLAG_BELOW_RESOLUTION in est.flags

    def test_empty_window_undefined_scalar(self):
        stream = make_stream([25.0], size=100)
        cfg = VqConfig(window=10.0, nominal_rate=1e3)
        ests = run_online(stream, 100.0, 1e6, cfg, t_end=30.0)
        assert len(ests) == 3
        assert FLAG_UNDEFINED_SCALAR in ests[0].flags
        assert ests[0].value == 0.0
        assert ests[2].n_arrivals == 1

    def test_matches_reference_orchestration_exactly(self, stream):
        # The inlined engine must reproduce the public-primitive replay
        # bit for bit: same drains, same tick rates, same tallies.
        c = 800_000.0
        cfg = VqConfig(window=5.0, alpha=2.5, rate_update_interval=1e-3,
                       nominal_rate=640_000.0, warmup=3.0)
        got = run_online(stream, 4000.0, c, cfg, t_end=30.0)
        want = replay_reference(stream, 4000.0, c, cfg, t_end=30.0)
        assert len(got) == len(want)
        for e, (ws, we, n_arr, pl0, p0, u) in zip(got, want):
            assert e.window_start == ws
            assert e.window_end == we
            assert e.n_arrivals == n_arr
            assert e.pl0 == pl0
            assert e.p0 == p0
            assert e.u == u

    def test_constant_rate_u_matches_observe_tail(self, stream):
        # With the tick interval spanning the window, c' stays at its
        # nominal value, so u must equal the standalone tail observation
        # at (c', x') exactly.
        c = 800_000.0
        r_nom = 640_000.0
        alpha = 2.0
        x = 4000.0
        cfg = VqConfig(window=30.0, alpha=alpha, rate_update_interval=30.0,
                       nominal_rate=r_nom)
        (est,) = run_online(stream, x, c, cfg, t_end=30.0)
        x_p, c_p = vq3_params(x, c, r_nom, alpha)
        assert est.u == observe_tail(stream, c_p, x_p)
        assert est.p0 == observe_tail(stream, c, 0.0)

    def test_alpha_one_reduces_to_direct_tail(self, stream):
        c = 800_000.0
        cfg = VqConfig(window=30.0, alpha=1.0, rate_update_interval=1e-3,
                       nominal_rate=640_000.0)
        (est,) = run_online(stream, 2000.0, c, cfg, t_end=30.0)
        direct_u = observe_tail(stream, c, 2000.0)
        assert est.u == direct_u
        assert est.value == pytest.approx(est.pl0 / est.p0 * direct_u)

    def test_windows_partition_arrivals(self, stream):
        cfg = VqConfig(window=6.0, nominal_rate=640_000.0)
        ests = run_online(stream, 4000.0, 800_000.0, cfg, t_end=30.0)
        assert len(ests) == 5
        assert sum(e.n_arrivals for e in ests) == len(stream)
        for a, b in zip(ests, ests[1:]):
            assert b.window_start == a.window_end

    def test_determinism(self, stream):
        cfg = VqConfig(window=10.0, alpha=2.5, nominal_rate=640_000.0)
        a = run_online(stream, 4000.0, 800_000.0, cfg, t_end=30.0)
        b = run_online(stream, 4000.0, 800_000.0, cfg, t_end=30.0)
        assert a == b

    def test_overload_flagged(self):
        # Offered ~1.6 Mbps against 1 Mbps: persistent overload.
        stream = generate_onoff(OnOffSpec(n_sources=100), 10.0, seed=8)
        cfg = VqConfig(window=5.0, alpha=2.5, nominal_rate=1.6e6)
        ests = run_online(stream, 50_000.0, 1e6, cfg, t_end=10.0)
        assert ests
        assert all(FLAG_OVERLOAD in e.flags for e in ests)

    def test_time_average_mode_runs(self, stream):
        cfg = VqConfig(window=15.0, alpha=2.0, nominal_rate=640_000.0,
                       tail_mode="time-average")
        ests = run_online(stream, 2000.0, 800_000.0, cfg, t_end=30.0)
        assert len(ests) == 2
        for e in ests:
            assert 0.0 <= e.u <= 1.0
            assert 0.0 <= e.p0 <= 1.0

    def test_time_average_agrees_statistically(self, stream):
        c = 800_000.0
        base = VqConfig(window=30.0, alpha=1.0, nominal_rate=640_000.0)
        ta = VqConfig(window=30.0, alpha=1.0, nominal_rate=640_000.0,
                      tail_mode="time-average")
        (ae,) = run_online(stream, 1000.0, c, base, t_end=30.0)
        (tv,) = run_online(stream, 1000.0, c, ta, t_end=30.0)
        assert ae.u == pytest.approx(tv.u, rel=0.2)


class TestRunGrowing:
    def test_cumulative_arrivals(self):
        stream = generate_onoff(OnOffSpec(n_sources=20), 10.0, seed=19)
        cfg = VqConfig(window=10.0, alpha=2.0, nominal_rate=320_000.0)
        ests = run_growing(stream, 3000.0, 500_000.0, cfg,
                           emit_interval=0.5, t_end=10.0)
        assert len(ests) == 20
        counts = [e.n_arrivals for e in ests]
        assert counts == sorted(counts)
        assert counts[-1] == len(stream)
        assert all(e.window_start == 0.0 for e in ests)

    def test_final_estimate_matches_windowed_single_window(self):
        stream = generate_onoff(OnOffSpec(n_sources=20), 10.0, seed=19)
        cfg = VqConfig(window=10.0, alpha=2.0, nominal_rate=320_000.0)
        grown = run_growing(stream, 3000.0, 500_000.0, cfg,
                            emit_interval=10.0, t_end=10.0)
        (windowed,) = run_online(stream, 3000.0, 500_000.0, cfg, t_end=10.0)
        assert len(grown) == 1
        assert grown[0].u == windowed.u
        assert grown[0].value == windowed.value


class TestEstimateCsv:
    def test_export(self, tmp_path):
        stream = generate_onoff(OnOffSpec(n_sources=20), 10.0, seed=19)
        cfg = VqConfig(window=5.0, alpha=2.0, nominal_rate=320_000.0)
        ests = run_online(stream, 3000.0, 500_000.0, cfg, t_end=10.0)
        path = tmp_path / "est.csv"
        write_estimates(ests, path)
        lines = path.read_text().splitlines()
        assert lines[0] == "window_end_s,estimate,pl0,p0,u,alpha,flags"
        assert len(lines) == 1 + len(ests)

import numpy as np
import pytest

from vqlab import Mmpp3Spec, OnOffSpec, PacketStream


@pytest.fixture(scope="session")
def audio_spec():
    """Paper-default on-off aggregate: 0.2/0.6 s periods, 64 kbps, 500 B."""
    return OnOffSpec(n_sources=100)


@pytest.fixture(scope="session")
def video_spec():
    """Paper-default 3-state MMPP flow mix, 188 B packets."""
    return Mmpp3Spec(n_sources=8)


def make_stream(times, size=500, source=0):
    times = np.asarray(times, dtype=np.float64)
    return PacketStream(
        times=times,
        sizes=np.full(len(times), size, dtype=np.int64),
        source_ids=np.full(len(times), source, dtype=np.int64),
    )


@pytest.fixture
def poisson_stream():
    """Poisson arrivals, 1000 pkts/s of 100 B packets for 50 s."""
    rng = np.random.default_rng(1234)
    n = rng.poisson(1000 * 50)
    times = np.sort(rng.random(n) * 50.0)
    return PacketStream(
        times=times,
        sizes=np.full(n, 100, dtype=np.int64),
        source_ids=np.zeros(n, dtype=np.int64),
    )

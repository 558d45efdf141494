import numpy as np
import pytest
from hypothesis import HealthCheck, settings

from dmala.network import Graph, build_mixing_matrix
from dmala.potentials import gaussian_shard

settings.register_profile(
    "default", deadline=None, max_examples=60,
    suppress_health_check=[HealthCheck.too_slow],
)
settings.load_profile("default")

# criterion number -> (passed, detail), filled by test_acceptance.py
ACCEPTANCE = {}


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for n in sorted(ACCEPTANCE):
        ok, detail = ACCEPTANCE[n]
        terminalreporter.write_line(f"criterion {n:2d}: {'PASS' if ok else 'FAIL'}  {detail}")


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


def random_spd(rng, d, jitter=1.0):
    A = rng.standard_normal((d, d))
    return A @ A.T / d + jitter * np.eye(d)


def split_gaussian(rng, m, d):
    """A Gaussian target split evenly into ``m`` shards; returns shards, mean, precision."""
    mean = rng.standard_normal(d)
    prec = random_spd(rng, d)
    return [gaussian_shard(mean, prec, 1.0 / m) for _ in range(m)], mean, prec


def complete_w(m):
    return build_mixing_matrix(Graph.complete(m), "uniform_complete")

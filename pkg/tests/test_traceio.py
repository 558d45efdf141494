import json

import numpy as np
import pytest
from hypothesis import given, strategies as st

from dmala.errors import SchemaVersionMismatch
from dmala.sampler import SamplerConfig, Trace, run_dmala
from dmala.traceio import read_manifest, read_trace, write_trace

from .conftest import complete_w, split_gaussian


def assert_traces_equal(a, b):
    np.testing.assert_array_equal(a.samples, b.samples)
    np.testing.assert_array_equal(a.sample_iters, b.sample_iters)
    np.testing.assert_array_equal(a.accepts, b.accepts)
    assert set(a.metrics) == set(b.metrics)
    for k in a.metrics:
        np.testing.assert_array_equal(a.metrics[k], b.metrics[k])


def test_empty_trace_round_trip(tmp_path, rng):
    shards, _, _ = split_gaussian(rng, 3, 2)
    tr = run_dmala(shards, complete_w(3), SamplerConfig(epsilon=0.1, T=0), np.zeros(2))
    write_trace(tr, tmp_path)
    for name in ("samples.csv", "metrics.csv", "agents.csv", "run.json"):
        assert (tmp_path / name).exists()
    assert_traces_equal(read_trace(tmp_path), tr)


def test_random_run_is_bit_equal(tmp_path, rng):
    shards, _, _ = split_gaussian(rng, 3, 4)
    cfg = SamplerConfig(epsilon=0.37, T=100, seed=4, record_delta_h=True)
    tr = run_dmala(shards, complete_w(3), cfg, rng.standard_normal(4))
    write_trace(tr, tmp_path, {"note": "x"})
    assert_traces_equal(read_trace(tmp_path), tr)
    assert read_manifest(tmp_path)["note"] == "x"


@given(seed=st.integers(0, 2**32 - 1))
def test_extreme_floats_round_trip(tmp_path_factory, seed):
    rng = np.random.default_rng(seed)
    vals = rng.standard_normal((4, 2, 3)) * 10.0 ** rng.integers(-300, 300, (4, 2, 3))
    tr = Trace(samples=vals, sample_iters=np.arange(4), accepts=rng.random((3, 2)) < 0.5,
               metrics={"a": rng.standard_normal(3) / 3, "b": rng.standard_normal((3, 2)) * 1e-310})
    out = tmp_path_factory.mktemp("t")
    write_trace(tr, out)
    assert_traces_equal(read_trace(out), tr)


def test_corrupted_header(tmp_path, rng):
    shards, _, _ = split_gaussian(rng, 2, 2)
    tr = run_dmala(shards, complete_w(2), SamplerConfig(epsilon=0.1, T=5), np.zeros(2))
    write_trace(tr, tmp_path)
    text = (tmp_path / "samples.csv").read_text().splitlines()
    text[0] = "# dmala-trace 0"
    (tmp_path / "samples.csv").write_text("\n".join(text) + "\n")
    with pytest.raises(SchemaVersionMismatch):
        read_trace(tmp_path)


def test_wrong_manifest_version(tmp_path, rng):
    shards, _, _ = split_gaussian(rng, 2, 2)
    write_trace(run_dmala(shards, complete_w(2), SamplerConfig(epsilon=0.1, T=2), np.zeros(2)), tmp_path)
    doc = json.loads((tmp_path / "run.json").read_text())
    doc["schema_version"] = 99
    (tmp_path / "run.json").write_text(json.dumps(doc))
    with pytest.raises(SchemaVersionMismatch):
        read_trace(tmp_path)


def test_truncated_samples(tmp_path, rng):
    shards, _, _ = split_gaussian(rng, 2, 2)
    write_trace(run_dmala(shards, complete_w(2), SamplerConfig(epsilon=0.1, T=3), np.zeros(2)), tmp_path)
    lines = (tmp_path / "samples.csv").read_text().splitlines()
    (tmp_path / "samples.csv").write_text("\n".join(lines[:-1]) + "\n")
    with pytest.raises(SchemaVersionMismatch):
        read_trace(tmp_path)

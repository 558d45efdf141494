"""Lossless CSV serialization of sampler traces.

A run directory holds

* ``samples.csv``  iteration, agent, w0..w{d-1}
* ``metrics.csv``  iteration followed by one column per scalar series
* ``agents.csv``   iteration, agent, accept and any per-agent series
* ``run.json``     manifest: schema version, shapes, resolved config, summary

Floats are written with 17 significant digits, which round-trips IEEE doubles
exactly. Every CSV starts with a ``# dmala-trace <version>`` line.
"""

from __future__ import annotations

import csv
import json
from pathlib import Path

import numpy as np

from .errors import SchemaVersionMismatch
from .sampler import Trace

SCHEMA_VERSION = 1
MAGIC = f"# dmala-trace {SCHEMA_VERSION}"


def _fmt(x):
    return format(float(x), ".17g")


def _write_csv(path, header, rows):
    with open(path, "w", newline="") as fh:
        fh.write(MAGIC + "\n")
        writer = csv.writer(fh)
        writer.writerow(header)
        writer.writerows(rows)


def _read_csv(path):
    with open(path, newline="") as fh:
        first = fh.readline().rstrip("\r\n")
        if first != MAGIC:
            raise SchemaVersionMismatch(f"{path}: expected header {MAGIC!r}, found {first!r}")
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise SchemaVersionMismatch(f"{path}: missing column header") from None
        rows = list(reader)
    return header, rows


def write_trace(trace, directory, manifest=None):
    """Write ``trace`` into ``directory`` (created if needed); returns the path."""
    out = Path(directory)
    out.mkdir(parents=True, exist_ok=True)
    n_rec, m, d = trace.samples.shape
    T = trace.T

    _write_csv(
        out / "samples.csv",
        ["iteration", "agent"] + [f"w{k}" for k in range(d)],
        ([int(trace.sample_iters[r]), i] + [_fmt(v) for v in trace.samples[r, i]]
         for r in range(n_rec) for i in range(m)),
    )

    scalar = {k: np.asarray(v) for k, v in trace.metrics.items() if np.ndim(v) == 1}
    per_agent = {k: np.asarray(v) for k, v in trace.metrics.items() if np.ndim(v) == 2}
    names = sorted(scalar)
    _write_csv(
        out / "metrics.csv",
        ["iteration"] + names,
        ([t] + [_fmt(scalar[k][t]) for k in names] for t in range(T)),
    )
    agent_names = sorted(per_agent)
    _write_csv(
        out / "agents.csv",
        ["iteration", "agent", "accept"] + agent_names,
        ([t, i, int(trace.accepts[t, i])] + [_fmt(per_agent[k][t, i]) for k in agent_names]
         for t in range(T) for i in range(m)),
    )

    doc = dict(manifest or {})
    doc["schema_version"] = SCHEMA_VERSION
    doc["trace"] = {"T": T, "m": m, "dim": d, "n_recorded": n_rec,
                    "metrics": names, "agent_metrics": agent_names}
    (out / "run.json").write_text(json.dumps(doc, indent=2, sort_keys=True) + "\n")
    return out


def read_manifest(directory):
    doc = json.loads((Path(directory) / "run.json").read_text())
    if doc.get("schema_version") != SCHEMA_VERSION:
        raise SchemaVersionMismatch(
            f"run.json schema_version {doc.get('schema_version')!r}, expected {SCHEMA_VERSION}"
        )
    return doc


def read_trace(directory):
    """Inverse of :func:`write_trace`."""
    src = Path(directory)
    shape = read_manifest(src)["trace"]
    T, m, d, n_rec = shape["T"], shape["m"], shape["dim"], shape["n_recorded"]

    header, rows = _read_csv(src / "samples.csv")
    if header[:2] != ["iteration", "agent"] or len(header) != 2 + d:
        raise SchemaVersionMismatch(f"samples.csv columns {header} do not match dim {d}")
    if len(rows) != n_rec * m:
        raise SchemaVersionMismatch(f"samples.csv has {len(rows)} rows, expected {n_rec * m}")
    samples = np.array([[float(v) for v in r[2:]] for r in rows], dtype=float).reshape(n_rec, m, d)
    sample_iters = np.array([int(r[0]) for r in rows[::m]], dtype=int) if rows else np.zeros(0, int)

    header, rows = _read_csv(src / "metrics.csv")
    if header[:1] != ["iteration"]:
        raise SchemaVersionMismatch(f"metrics.csv columns {header}")
    metrics = {}
    for j, name in enumerate(header[1:], start=1):
        metrics[name] = np.array([float(r[j]) for r in rows], dtype=float)

    header, rows = _read_csv(src / "agents.csv")
    if header[:3] != ["iteration", "agent", "accept"]:
        raise SchemaVersionMismatch(f"agents.csv columns {header}")
    accepts = np.array([int(r[2]) for r in rows], dtype=bool).reshape(T, m)
    for j, name in enumerate(header[3:], start=3):
        metrics[name] = np.array([float(r[j]) for r in rows], dtype=float).reshape(T, m)

    return Trace(samples=samples, sample_iters=sample_iters, accepts=accepts, metrics=metrics)

"""Experiment configuration: INI/JSON parsing, defaults and named presets.

A config file has four sections::

    [network]   topology, m, edges, scheme
    [model]     preset, kind, data, partition, model hyperparameters
    [sampler]   algo, epsilon, T, mixing_schedule, mh_warmup_iters, seed, ...
    [output]    dir, task_metric

``[model] preset = <name>`` pulls in a full set of defaults for every section;
explicit keys override them. Unknown sections or keys are rejected.
``run.json`` files written by the CLI carry the fully resolved config and can
be loaded back with :func:`load_config` to reproduce a run.
"""

from __future__ import annotations

import configparser
import copy
import json
import re
from dataclasses import dataclass, field
from pathlib import Path

from .errors import ConfigParseError, ConfigValidationError
from .network import SCHEMES, TOPOLOGIES
from .potentials import PARTITION_MODES
from .sampler import ACCEPTANCE_MODES, MixingSchedule, SamplerConfig

ALGOS = ("dmala", "hmc", "ula")
MODEL_KINDS = ("gaussian", "gmm", "linreg", "logreg", "mlp")
TASK_METRICS = ("auto", "mse", "accuracy", "mean_log_posterior", "none")


def _bool(text):
    if isinstance(text, bool):
        return text
    value = str(text).strip().lower()
    if value in ("1", "true", "yes", "on"):
        return True
    if value in ("0", "false", "no", "off"):
        return False
    raise ValueError(f"not a boolean: {text!r}")


def _opt_float(text):
    if text is None or str(text).strip().lower() in ("", "none"):
        return None
    return float(text)


def _choice(*options):
    def parse(text):
        value = str(text).strip()
        if value not in options:
            raise ValueError(f"{value!r} is not one of {options}")
        return value
    return parse


def _schedule(text):
    return str(MixingSchedule.parse(text))


def _edges(text):
    if text is None or isinstance(text, list):
        return text
    text = str(text).strip()
    if text.lower() in ("", "none"):
        return None
    edges = []
    for token in re.split(r"[,\s;]+", text):
        if not token:
            continue
        a, _, b = token.partition("-")
        edges.append([int(a), int(b)])
    return edges


# section -> key -> (parser, default); a default of REQUIRED must be supplied
REQUIRED = object()

SCHEMA = {
    "network": {
        "topology": (_choice(*TOPOLOGIES), "complete"),
        "m": (int, REQUIRED),
        "edges": (_edges, None),
        "scheme": (_choice(*SCHEMES), "metropolis_hastings_weights"),
    },
    "model": {
        "preset": (str, None),
        "kind": (_choice(*MODEL_KINDS), REQUIRED),
        "data": (str, "synthetic"),
        "partition": (_choice(*PARTITION_MODES), "by_sample"),
        "allow_shared_classes": (_bool, False),
        "n_samples": (int, 200),
        "n_features": (int, 2),
        "n_classes": (int, 2),
        "hidden": (int, 8),
        "prior_precision": (float, 1.0),
        "noise_precision": (float, 1.0),
        "sigma1_sq": (float, 10.0),
        "sigma2_sq": (float, 1.0),
        "sigmax_sq": (float, 2.0),
        "theta1": (float, 0.0),
        "theta2": (float, 1.0),
        "separation": (float, 3.0),
        "spread": (float, 1.0),
        "standardize": (_bool, False),
        "test_fraction": (float, 0.25),
        "init_scale": (float, 0.0),
    },
    "sampler": {
        "algo": (_choice(*ALGOS), "dmala"),
        "epsilon": (float, REQUIRED),
        "hmc_epsilon": (_opt_float, None),
        "ula_epsilon": (_opt_float, None),
        "ula_b": (float, 230.0),
        "ula_gamma": (float, 0.55),
        "T": (int, REQUIRED),
        "mass": (_opt_float, None),
        "mixing_schedule": (_schedule, "constant:1"),
        "mh_warmup_iters": (int, 0),
        "gradient_tracking": (_bool, True),
        "acceptance_mode": (_choice(*ACCEPTANCE_MODES), "taylor"),
        "consensus_step": (_bool, True),
        "seed": (int, 0),
        "leapfrog_steps": (int, 1),
        "record_delta_h": (_bool, False),
        "thin": (int, 1),
        "track_log_posterior": (_bool, True),
        "burn_in_fraction": (float, 0.5),
    },
    "output": {
        "dir": (str, None),
        "task_metric": (_choice(*TASK_METRICS), "auto"),
    },
}


# Hyperparameters follow the experiments of the source study; data are
# synthetic desk-scale stand-ins unless ``[model] data`` names a CSV file.
PRESETS = {
    "gmm_5agents": {
        "network": {"topology": "complete", "m": 5, "scheme": "uniform_complete"},
        "model": {
            "kind": "gmm", "n_samples": 100, "partition": "by_sample",
            "sigma1_sq": 10.0, "sigma2_sq": 1.0, "sigmax_sq": 2.0,
            "theta1": 0.0, "theta2": 1.0,
        },
        "sampler": {"epsilon": 0.15, "T": 20000, "mh_warmup_iters": 1000},
    },
    "linreg_feature_split": {
        "network": {"topology": "complete", "m": 4, "scheme": "uniform_complete"},
        "model": {
            "kind": "linreg", "n_samples": 506, "n_features": 13,
            "partition": "by_feature", "prior_precision": 1.0, "standardize": True,
        },
        "sampler": {
            "epsilon": 4e-4, "hmc_epsilon": 4e-4, "ula_epsilon": 3e-7,
            "T": 100000, "mh_warmup_iters": 1000,
        },
    },
    "logreg_partial": {
        "network": {"topology": "complete", "m": 4, "scheme": "uniform_complete"},
        "model": {
            "kind": "logreg", "n_samples": 1000, "n_features": 16, "n_classes": 10,
            "partition": "by_feature", "prior_precision": 100.0,
        },
        "sampler": {
            "epsilon": 5e-4, "hmc_epsilon": 1e-3, "ula_epsilon": 1e-5,
            "T": 8000, "mh_warmup_iters": 2000,
        },
    },
    "logreg_ring": {
        "network": {"topology": "ring", "m": 5, "scheme": "lazy_uniform"},
        "model": {
            "kind": "logreg", "n_samples": 1000, "n_features": 16, "n_classes": 10,
            "partition": "by_class", "prior_precision": 100.0,
        },
        "sampler": {
            "epsilon": 3e-3, "hmc_epsilon": 1e-3, "ula_epsilon": 1e-4,
            "T": 10000, "mh_warmup_iters": 1000,
        },
    },
    "bnn_class_split": {
        "network": {"topology": "complete", "m": 2, "scheme": "uniform_complete"},
        "model": {
            "kind": "mlp", "n_samples": 400, "n_features": 2, "n_classes": 2,
            "hidden": 8, "partition": "by_class", "prior_precision": 10.0,
            "init_scale": 0.1,
        },
        "sampler": {"epsilon": 7e-5, "T": 500000, "mh_warmup_iters": 2000},
    },
}


@dataclass
class Experiment:
    """A fully resolved experiment."""

    network: dict
    model: dict
    sampler: dict
    output: dict
    name: str = "experiment"
    resolved: dict = field(default_factory=dict, repr=False)

    @property
    def algo(self):
        return self.sampler["algo"]

    def sampler_config(self, algo=None):
        algo = algo or self.algo
        s = self.sampler
        eps = s["epsilon"]
        if algo == "hmc" and s["hmc_epsilon"] is not None:
            eps = s["hmc_epsilon"]
        return SamplerConfig(
            epsilon=eps,
            T=s["T"],
            mass=s["mass"],
            mixing_schedule=s["mixing_schedule"],
            mh_warmup_iters=s["mh_warmup_iters"],
            gradient_tracking=s["gradient_tracking"],
            acceptance_mode=s["acceptance_mode"],
            consensus_step=s["consensus_step"],
            seed=s["seed"],
            record_delta_h=s["record_delta_h"],
            thin=s["thin"],
            track_log_posterior=s["track_log_posterior"],
        )

    def with_overrides(self, **sampler_overrides):
        raw = copy.deepcopy(self.resolved)
        for key, value in sampler_overrides.items():
            section = next((sec for sec, keys in SCHEMA.items() if key in keys), None)
            if section is None:
                raise ConfigValidationError(f"unknown key {key!r}")
            raw[section][key] = value
        return resolve(raw, name=self.name)


def _locate(text, key):
    if text is None:
        return None
    pattern = re.compile(rf"^\s*{re.escape(key)}\s*[=:]", re.IGNORECASE)
    for lineno, line in enumerate(text.splitlines(), start=1):
        if pattern.match(line):
            return lineno
    return None


def resolve(raw, name="experiment", source_text=None):
    """Validate and fill defaults for a nested ``{section: {key: value}}`` dict."""
    raw = {sec: dict(vals) for sec, vals in (raw or {}).items()}
    for section in raw:
        if section not in SCHEMA:
            raise ConfigParseError(f"unknown section [{section}]", line=_locate(source_text, f"[{section}]"))
        for key in raw[section]:
            if key not in SCHEMA[section]:
                raise ConfigParseError(f"unknown key in [{section}]", line=_locate(source_text, key), key=key)

    preset_name = raw.get("model", {}).get("preset")
    merged = {sec: {} for sec in SCHEMA}
    if preset_name not in (None, "", "none"):
        if preset_name not in PRESETS:
            raise ConfigValidationError(f"unknown preset {preset_name!r}; expected one of {sorted(PRESETS)}")
        for sec, vals in PRESETS[preset_name].items():
            merged[sec].update(vals)
        name = preset_name if name == "experiment" else name
    for sec, vals in raw.items():
        merged[sec].update(vals)
    merged["model"].pop("preset", None)

    out = {}
    for sec, keys in SCHEMA.items():
        out[sec] = {}
        for key, (parse, default) in keys.items():
            if key == "preset":
                continue
            if key in merged[sec] and merged[sec][key] is not None:
                try:
                    out[sec][key] = parse(merged[sec][key])
                except (TypeError, ValueError) as exc:
                    raise ConfigParseError(str(exc), line=_locate(source_text, key), key=key) from None
            elif default is REQUIRED:
                raise ConfigValidationError(f"[{sec}] {key} is required (no preset supplies it)")
            else:
                out[sec][key] = default

    _validate(out)
    return Experiment(
        network=out["network"], model=out["model"], sampler=out["sampler"],
        output=out["output"], name=name, resolved=out,
    )


def _validate(cfg):
    net, model, s = cfg["network"], cfg["model"], cfg["sampler"]
    if net["m"] < 1:
        raise ConfigValidationError("[network] m must be positive")
    if s["epsilon"] <= 0:
        raise ConfigValidationError("[sampler] epsilon must be > 0")
    for key in ("hmc_epsilon", "ula_epsilon"):
        if s[key] is not None and s[key] <= 0:
            raise ConfigValidationError(f"[sampler] {key} must be > 0")
    if s["T"] < 0:
        raise ConfigValidationError("[sampler] T must be >= 0")
    if s["mass"] is not None and s["mass"] <= 0:
        raise ConfigValidationError("[sampler] mass must be positive")
    if s["thin"] < 1 or s["leapfrog_steps"] < 1:
        raise ConfigValidationError("[sampler] thin and leapfrog_steps must be >= 1")
    if not 0 <= s["burn_in_fraction"] < 1:
        raise ConfigValidationError("[sampler] burn_in_fraction must lie in [0, 1)")
    if s["mh_warmup_iters"] < 0:
        raise ConfigValidationError("[sampler] mh_warmup_iters must be >= 0")
    if not 0 <= s["ula_gamma"] <= 1 or s["ula_b"] < 0:
        raise ConfigValidationError("[sampler] ula_gamma must lie in [0, 1] and ula_b >= 0")
    if net["scheme"] == "uniform_complete" and net["topology"] != "complete" and net["edges"] is None:
        raise ConfigValidationError("uniform_complete weights need the complete topology")
    if model["kind"] == "gmm" and min(model["sigma1_sq"], model["sigma2_sq"], model["sigmax_sq"]) <= 0:
        raise ConfigValidationError("[model] GMM variances must be positive")
    if model["prior_precision"] <= 0 or model["noise_precision"] <= 0:
        raise ConfigValidationError("[model] precisions must be positive")
    if not 0 <= model["test_fraction"] < 1:
        raise ConfigValidationError("[model] test_fraction must lie in [0, 1)")


def load_config(path):
    """Parse an INI config (or a ``run.json``) into a resolved :class:`Experiment`."""
    path = Path(path)
    text = path.read_text()
    if path.suffix.lower() == ".json":
        try:
            doc = json.loads(text)
        except json.JSONDecodeError as exc:
            raise ConfigParseError(exc.msg, line=exc.lineno) from None
        raw = doc.get("config", doc)
        name = doc.get("name", path.stem)
        return resolve(raw, name=name)

    parser = configparser.ConfigParser(
        interpolation=None, inline_comment_prefixes=("#", ";"), strict=True
    )
    parser.optionxform = str
    try:
        parser.read_string(text, source=str(path))
    except configparser.Error as exc:
        raise ConfigParseError(str(exc).splitlines()[0], line=getattr(exc, "lineno", None)) from None
    raw = {sec: dict(parser.items(sec)) for sec in parser.sections()}
    return resolve(raw, name=path.stem, source_text=text)


def preset(name):
    """Resolved experiment for a named preset."""
    return resolve({"model": {"preset": name}}, name=name)


def dump_ini(experiment):
    """Render a resolved experiment back to INI text."""
    lines = []
    for sec, vals in experiment.resolved.items():
        lines.append(f"[{sec}]")
        for key, value in vals.items():
            if value is None:
                continue
            if key == "edges":
                value = ", ".join(f"{a}-{b}" for a, b in value)
            lines.append(f"{key} = {value}")
        lines.append("")
    return "\n".join(lines)

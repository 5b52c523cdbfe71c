"""Random problem generation, experiment specs and deterministic sweeps.

An experiment spec is a JSON object with these keys (unknown keys are
rejected):

``seed``          integer, base of every per-cell seed
``output_dir``    where trace CSVs, audit JSONs and ``manifest.json`` go
exactly one problem source:
``mdp_file`` + ``feature_file``  paths to JSON models
``random``        ``{num_states, num_actions, d, discount, concentration, feature_mode, seed}``
``counterexample`` ``{r1, r2, alpha, theta0}`` for the two-state example
``runs``          list of run blocks (``variant, H, m, eta, gamma, gamma_fraction,
                  eps_la, eps_pe, samples, theta0, num_iterations, divergence_threshold``)
``sweep``         optional grid ``{H, m, eta, gamma, gamma_fraction, eps_la, eps_pe,
                  sample_size: [values...]}`` crossed with every run block

Relative paths are resolved against the spec file's directory.  Cell ``i``
gets seed ``splitmix64(seed + i)``.
"""
from __future__ import annotations

import csv
import io
import itertools
import json
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional

import numpy as np

from .algorithms import RunConfig, SampleSpec, realize_sample_sets, run
from .bounds import audit_trace, check_assumptions, params_gd, params_ls, params_modified_ls
from .counterexample import (CounterexampleSpec, build_counterexample_mdp,
                             counterexample_features)
from .errors import ConfigError, InvalidInputError
from .features import FeatureSystem, load_features, stepsize_threshold
from .mdp import Mdp, evaluate_policy_exact, greedy_policy, load_mdp, sup_norm

MASK64 = (1 << 64) - 1
SPEC_KEYS = {"seed", "output_dir", "mdp_file", "feature_file", "random", "counterexample",
             "runs", "sweep"}
RUN_KEYS = {"variant", "H", "m", "eta", "gamma", "gamma_fraction", "eps_la", "eps_pe", "samples",
            "theta0", "num_iterations", "divergence_threshold"}
SWEEP_KEYS = ("H", "m", "eta", "gamma", "gamma_fraction", "eps_la", "eps_pe", "sample_size")
RANDOM_KEYS = {"num_states", "num_actions", "d", "discount", "concentration", "feature_mode",
               "seed"}
COUNTEREXAMPLE_KEYS = {"r1", "r2", "alpha", "theta0"}
SAMPLE_KEYS = {"mode", "indices", "size"}
TRACE_COLUMNS_TAIL = ("err_policy", "err_iterate", "delta_k", "bound_total_k", "lookahead_gap",
                      "rollout_noise_norm", "status")


def splitmix64(x: int) -> int:
    x = (x + 0x9E3779B97F4A7C15) & MASK64
    z = x
    z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & MASK64
    z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & MASK64
    return z ^ (z >> 31)


def derive_seed(seed: int, index: int) -> int:
    """Seed for sweep cell ``index``; independent of how many cells there are."""
    return splitmix64((int(seed) + int(index)) & MASK64)


# --- random problems ------------------------------------------------------------

@dataclass(frozen=True)
class RandomMdpParams:
    num_states: int
    num_actions: int
    d: int
    discount: float = 0.9
    concentration: float = 1.0
    feature_mode: str = "gaussian"
    seed: int = 0

    def __post_init__(self):
        if self.num_states < 1 or self.num_actions < 1:
            raise ConfigError("need num_states >= 1 and num_actions >= 1")
        if not 1 <= self.d <= self.num_states:
            raise ConfigError("need 1 <= d <= num_states")
        if self.concentration <= 0:
            raise ConfigError("concentration must be positive")
        if self.feature_mode not in ("gaussian", "identity"):
            raise ConfigError(f"unknown feature_mode {self.feature_mode!r}")
        if self.feature_mode == "identity" and self.d != self.num_states:
            raise ConfigError("identity features need d == num_states")


def generate_random_mdp(params: RandomMdpParams, max_attempts: int = 100):
    """Dirichlet transition rows, uniform [0, 1] rewards, standard normal features.

    Features are redrawn with the next sub-seed until Phi has full column rank.
    Returns ``(mdp, features)``.
    """
    S, A = params.num_states, params.num_actions
    rng = np.random.default_rng([params.seed, 0])
    P = rng.dirichlet(np.full(S, params.concentration), size=(S, A))
    P /= P.sum(axis=2, keepdims=True)
    reward = rng.uniform(0.0, 1.0, size=(S, A))
    mdp = Mdp(P, reward, params.discount)
    if params.feature_mode == "identity":
        return mdp, FeatureSystem.identity(S)
    for attempt in range(max_attempts):
        phi = np.random.default_rng([params.seed, 1, attempt]).standard_normal((S, params.d))
        try:
            return mdp, FeatureSystem(phi)
        except InvalidInputError:
            continue
    raise ConfigError(f"no full-rank feature matrix in {max_attempts} draws")


# --- spec parsing -------------------------------------------------------------

def _reject_unknown(data: dict, allowed, where: str) -> None:
    if not isinstance(data, dict):
        raise ConfigError(f"{where} must be an object")
    unknown = set(data) - set(allowed)
    if unknown:
        raise ConfigError(f"unknown keys in {where}: {sorted(unknown)}")


@dataclass
class ExperimentSpec:
    seed: int
    output_dir: Path
    runs: list
    sweep: dict = field(default_factory=dict)
    mdp_file: Optional[Path] = None
    feature_file: Optional[Path] = None
    random: Optional[RandomMdpParams] = None
    counterexample: Optional[CounterexampleSpec] = None

    @property
    def source(self) -> str:
        if self.random is not None:
            return "random"
        if self.counterexample is not None:
            return "counterexample"
        return "files"


def parse_spec(data: dict, base_dir=".") -> ExperimentSpec:
    _reject_unknown(data, SPEC_KEYS, "spec")
    base = Path(base_dir)
    if "seed" not in data:
        raise ConfigError("spec needs an explicit integer seed")
    seed = data["seed"]
    if not isinstance(seed, int) or isinstance(seed, bool) or not 0 <= seed < 2**64:
        raise ConfigError("seed must be a 64-bit unsigned integer")
    sources = [k for k in ("random", "counterexample") if k in data]
    has_files = "mdp_file" in data or "feature_file" in data
    if has_files:
        if not ("mdp_file" in data and "feature_file" in data):
            raise ConfigError("mdp_file and feature_file go together")
        sources.append("files")
    if len(sources) != 1:
        raise ConfigError("give exactly one of mdp_file/feature_file, random, counterexample")

    spec = ExperimentSpec(seed=seed, output_dir=base / data.get("output_dir", "results"),
                          runs=[], sweep={})
    if "random" in data:
        _reject_unknown(data["random"], RANDOM_KEYS, "random")
        block = dict(data["random"])
        block.setdefault("seed", seed)
        try:
            spec.random = RandomMdpParams(**block)
        except TypeError as exc:
            raise ConfigError(f"random block: {exc}") from exc
    elif "counterexample" in data:
        _reject_unknown(data["counterexample"], COUNTEREXAMPLE_KEYS, "counterexample")
        try:
            spec.counterexample = CounterexampleSpec(**data["counterexample"])
        except InvalidInputError as exc:
            raise ConfigError(str(exc)) from exc
    else:
        spec.mdp_file = base / data["mdp_file"]
        spec.feature_file = base / data["feature_file"]

    runs = data.get("runs")
    if not isinstance(runs, list) or not runs:
        raise ConfigError("spec needs a non-empty list of runs")
    for i, block in enumerate(runs):
        _reject_unknown(block, RUN_KEYS, f"runs[{i}]")
        if "samples" in block:
            _reject_unknown(block["samples"], SAMPLE_KEYS, f"runs[{i}].samples")
        spec.runs.append(dict(block))

    sweep = data.get("sweep", {})
    _reject_unknown(sweep, SWEEP_KEYS, "sweep")
    for key, values in sweep.items():
        if not isinstance(values, list) or not values:
            raise ConfigError(f"sweep.{key} must be a non-empty list")
    spec.sweep = {k: list(sweep[k]) for k in SWEEP_KEYS if k in sweep}
    return spec


def load_spec(path) -> ExperimentSpec:
    path = Path(path)
    try:
        data = json.loads(path.read_text())
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{path}: invalid JSON ({exc})") from exc
    return parse_spec(data, path.parent)


def load_problem(spec: ExperimentSpec):
    """``(mdp, features)`` for the spec's problem source."""
    if spec.random is not None:
        return generate_random_mdp(spec.random)
    if spec.counterexample is not None:
        return build_counterexample_mdp(spec.counterexample), counterexample_features()
    try:
        return load_mdp(spec.mdp_file), load_features(spec.feature_file)
    except OSError as exc:
        raise ConfigError(str(exc)) from exc


# --- cells --------------------------------------------------------------------

@dataclass
class Cell:
    index: int
    block: int
    settings: dict
    seed: int

    @property
    def name(self) -> str:
        return f"cell_{self.index:04d}"


def expand_cells(spec: ExperimentSpec) -> list:
    """Cross every run block with the sweep grid, in a fixed order."""
    keys = list(spec.sweep)
    grid = list(itertools.product(*(spec.sweep[k] for k in keys))) if keys else [()]
    cells = []
    for b, block in enumerate(spec.runs):
        for combo in grid:
            settings = dict(block)
            for key, value in zip(keys, combo):
                if key == "sample_size":
                    settings["samples"] = {"mode": "resample", "size": value}
                else:
                    settings[key] = value
                if key == "gamma":
                    settings.pop("gamma_fraction", None)
                if key == "gamma_fraction":
                    settings.pop("gamma", None)
            idx = len(cells)
            cells.append(Cell(idx, b, settings, derive_seed(spec.seed, idx)))
    return cells


def build_config(spec: ExperimentSpec, cell: Cell, mdp: Mdp, fs: FeatureSystem) -> RunConfig:
    s = dict(cell.settings)
    samples = s.pop("samples", {"mode": "all"})
    try:
        sample_spec = SampleSpec(samples.get("mode", "all"), samples.get("indices"),
                                 samples.get("size"))
    except TypeError as exc:
        raise ConfigError(str(exc)) from exc
    if "theta0" not in s and spec.counterexample is not None:
        s["theta0"] = [spec.counterexample.theta0]
    fraction = s.pop("gamma_fraction", None)
    if fraction is not None and "gamma" in s:
        raise ConfigError("give gamma or gamma_fraction, not both")
    kwargs = {k: v for k, v in s.items() if k in RUN_KEYS}
    kwargs.update(mdp=mdp, features=fs, samples=sample_spec, seed=cell.seed)
    if fraction is not None:
        probe = RunConfig(**{**kwargs, "gamma": 1.0, "eta": kwargs.get("eta", 1)})
        kwargs["gamma"] = float(fraction) * stepsize_threshold(realize_sample_sets(probe))
    try:
        return RunConfig(**kwargs)
    except TypeError as exc:
        raise ConfigError(str(exc)) from exc


def _fmt(x) -> str:
    if x is None:
        return ""
    x = float(x)
    return repr(x) if math.isfinite(x) else ("nan" if math.isnan(x) else ("inf" if x > 0 else "-inf"))


def trace_csv(trace, audit: dict) -> str:
    """CSV text; the last row's status is the run's terminal status, earlier rows say ``ok``."""
    d = trace.config.features.d
    header = ["k"] + [f"theta_{i}" for i in range(d)] + list(TRACE_COLUMNS_TAIL)
    bounds = [it["bound"] for it in audit.get("iterations", [])]
    bounds += [None] * (len(trace) - len(bounds))
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(header)
    last = len(trace.records) - 1
    for i, (r, b) in enumerate(zip(trace.records, bounds)):
        writer.writerow([r.k] + [_fmt(t) for t in r.theta]
                        + [_fmt(r.err_policy), _fmt(r.err_iterate), _fmt(r.delta), _fmt(b),
                           _fmt(r.lookahead_gap), _fmt(r.rollout_noise_norm),
                           trace.status if i == last else "ok"])
    return buf.getvalue()


def _jsonable(obj):
    if isinstance(obj, dict):
        return {str(k): _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return _jsonable(obj.tolist())
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, (float, np.floating)):
        x = float(obj)
        return x if math.isfinite(x) else _fmt(x)
    if isinstance(obj, (np.bool_,)):
        return bool(obj)
    return obj


def dump_json(obj) -> str:
    return json.dumps(_jsonable(obj), indent=1, sort_keys=True) + "\n"


def _run_cell(spec: ExperimentSpec, cell: Cell, mdp: Mdp, fs: FeatureSystem) -> dict:
    out_dir = Path(spec.output_dir)
    entry = {"index": cell.index, "block": cell.block, "seed": cell.seed,
             "settings": cell.settings, "trace_csv": None, "audit_json": None,
             "status": "error", "diverged_at": None, "verdict": None, "error": None}
    try:
        config = build_config(spec, cell, mdp, fs)
        trace = run(config)
        audit = audit_trace(trace)
    except (ConfigError, InvalidInputError) as exc:
        entry["error"] = f"{type(exc).__name__}: {exc}"
        entry["status"] = "config-error"
        return entry
    except Exception as exc:  # a broken cell must not stop the sweep
        entry["error"] = f"{type(exc).__name__}: {exc}"
        return entry
    audit["seed"] = cell.seed
    audit["settings"] = cell.settings
    csv_path = out_dir / f"{cell.name}_trace.csv"
    json_path = out_dir / f"{cell.name}_audit.json"
    csv_path.write_text(trace_csv(trace, audit))
    json_path.write_text(dump_json(audit))
    entry.update(status=trace.status, diverged_at=trace.diverged_at, verdict=audit["verdict"],
                 trace_csv=csv_path.name, audit_json=json_path.name)
    return entry


def _run_cell_star(args):
    return _run_cell(*args)


def run_experiment(spec: ExperimentSpec, jobs: int = 1) -> dict:
    """Execute every sweep cell and write traces, audits and ``manifest.json``.

    Cells are independent; with ``jobs > 1`` they run in worker processes and
    the manifest is assembled in cell order afterwards, so output bytes do not
    depend on ``jobs``.
    """
    if jobs < 1:
        raise ConfigError("jobs must be >= 1")
    mdp, fs = load_problem(spec)
    cells = expand_cells(spec)
    Path(spec.output_dir).mkdir(parents=True, exist_ok=True)
    work = [(spec, c, mdp, fs) for c in cells]
    if jobs == 1 or len(cells) == 1:
        entries = [_run_cell_star(w) for w in work]
    else:
        with ProcessPoolExecutor(max_workers=min(jobs, len(cells))) as pool:
            entries = list(pool.map(_run_cell_star, work))
    manifest = {"seed": spec.seed, "source": spec.source, "num_cells": len(cells),
                "cells": entries}
    (Path(spec.output_dir) / "manifest.json").write_text(dump_json(manifest))
    return manifest


# --- checking without running ----------------------------------------------------

def check_experiment(spec: ExperimentSpec) -> list:
    """Assumption report and bound parameters per cell, without running anything."""
    mdp, fs = load_problem(spec)
    results = []
    for cell in expand_cells(spec):
        entry = {"index": cell.index, "seed": cell.seed, "settings": cell.settings}
        try:
            config = build_config(spec, cell, mdp, fs)
            sets = realize_sample_sets(config)
            report = check_assumptions(mdp, fs, sets, config)
            entry["assumption_lines"] = report.lines()
            entry["assumptions"] = report.to_dict()
            entry["params"] = _static_params(config, sets).to_dict()
        except (ConfigError, InvalidInputError) as exc:
            entry["error"] = f"{type(exc).__name__}: {exc}"
        results.append(entry)
    return results


def _static_params(config: RunConfig, sets):
    mdp, fs = config.mdp, config.features
    mu0 = greedy_policy(mdp, fs.values(config.theta0))
    delta0 = sup_norm(fs.values(config.theta0) - evaluate_policy_exact(mdp, mu0))
    if mdp.num_policies <= 4096:
        common = dict(delta_app_mode="exhaustive")
    else:
        common = dict(delta_app_mode="encountered", policies=[mu0])
    common["eps_la"] = config.eps_la
    args = (mdp, fs, sets, config.m, config.H, config.eps_pe, delta0)
    if config.variant == "least_squares":
        return params_ls(*args, **common)
    if config.variant == "modified_ls":
        return params_modified_ls(*args, **common)
    return params_gd(*args, config.gamma, config.eta, **common)


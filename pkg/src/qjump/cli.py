"""Configuration parsing, command dispatch, output serialization and the
method-comparison benchmark harness.

Config documents are JSON; complex matrix entries are [re, im] pairs.
Subcommands: expect, heisenberg, corr, spectrum, oracle, bench.
"""

from __future__ import annotations

import argparse
import copy
import hashlib
import json
import sys
import time
from dataclasses import dataclass, field

import numpy as np

from . import estimators, oracle
from .estimators import CorrelationSpec, EstimateSeries
from .model import (EXCITED, GROUND, SIGMA_MINUS, SIGMA_PLUS, SIGMA_X,
                    SIGMA_Z, Constant, DecayChannel, HamiltonianTerm,
                    LindbladModel, PiecewiseConstant, Sinusoid,
                    preset_two_level)
from .propagator import StepControl

__all__ = [
    "ConfigError",
    "RunConfig",
    "BenchReport",
    "parse_config",
    "serialize_config",
    "run_command",
    "emit_plot_data",
    "main",
]

SCHEMA_VERSION = 1

_BUILTIN_OPERATORS = {
    "identity": np.eye(2, dtype=np.complex128),
    "sigma_minus": SIGMA_MINUS,
    "sigma_plus": SIGMA_PLUS,
    "sigma_x": SIGMA_X,
    "sigma_z": SIGMA_Z,
    "excited_pop": np.diag([0.0, 1.0]).astype(np.complex128),
}

_BUILTIN_STATES = {"ground": GROUND, "excited": EXCITED}

_DEFAULTS = {
    "grid": "0:5:50",
    "trajectories": 1000,
    "seed": 0,
    "method": "doubled",
    "dt_max": 0.01,
    "jump_tol": 1e-6,
    "safety": 0.1,
    "epsilon": 1e-4,
    "burn_in": 10.0,
    "threads": 1,
    "format": "csv",
    "output": None,
}


class ConfigError(ValueError):
    def __init__(self, path: str, message: str):
        super().__init__(f"{path}: {message}")
        self.path = path


def _parse_complex(value, path: str) -> complex:
    if (not isinstance(value, (list, tuple)) or len(value) != 2
            or not all(isinstance(x, (int, float)) for x in value)):
        raise ConfigError(path, f"expected [re, im] pair, got {value!r}")
    return complex(value[0], value[1])


def _parse_matrix(doc, path: str) -> np.ndarray:
    if not isinstance(doc, list) or not doc:
        raise ConfigError(path, "expected a non-empty matrix")
    rows = []
    for i, row in enumerate(doc):
        if not isinstance(row, list) or len(row) != len(doc):
            raise ConfigError(f"{path}[{i}]", "matrix must be square")
        rows.append([_parse_complex(e, f"{path}[{i}][{j}]")
                     for j, e in enumerate(row)])
    return np.asarray(rows, dtype=np.complex128)


def _parse_vector(doc, path: str, states: dict) -> np.ndarray:
    if isinstance(doc, str):
        if doc in states:
            return states[doc]
        raise ConfigError(path, f"unknown state name {doc!r}")
    if not isinstance(doc, list) or not doc:
        raise ConfigError(path, "expected a state name or amplitude list")
    return np.asarray([_parse_complex(e, f"{path}[{k}]")
                       for k, e in enumerate(doc)], dtype=np.complex128)


def _parse_coeff(doc, path: str):
    if doc is None:
        return Constant(1.0)
    kind = doc.get("type")
    try:
        if kind == "constant":
            return Constant(float(doc["value"]))
        if kind == "sinusoid":
            return Sinusoid(float(doc["amplitude"]), float(doc["omega"]),
                            float(doc.get("phase", 0.0)))
        if kind == "piecewise_constant":
            table = doc["table"]
            return PiecewiseConstant(tuple(float(t) for t, _ in table),
                                     tuple(float(v) for _, v in table))
    except (KeyError, TypeError, ValueError) as exc:
        raise ConfigError(path, f"bad coefficient: {exc}") from exc
    raise ConfigError(f"{path}.type", f"unknown coefficient type {kind!r}")


def _parse_grid(doc, path: str) -> np.ndarray:
    if isinstance(doc, str):
        parts = doc.split(":")
        if len(parts) != 3:
            raise ConfigError(path, "grid spec must be start:stop:points")
        try:
            start, stop, points = float(parts[0]), float(parts[1]), int(parts[2])
        except ValueError as exc:
            raise ConfigError(path, str(exc)) from exc
    elif isinstance(doc, dict):
        start, stop, points = doc["start"], doc["stop"], doc["points"]
    else:
        raise ConfigError(path, "grid must be a spec string or object")
    grid = np.linspace(start, stop, points)
    if grid.size < 1 or (grid.size > 1 and np.any(np.diff(grid) <= 0)):
        raise ConfigError(path, "grid must be strictly increasing")
    return grid


def _parse_model(doc, path: str) -> LindbladModel:
    if not isinstance(doc, dict):
        raise ConfigError(path, "model must be an object")
    if "preset" in doc:
        if doc["preset"] != "two_level":
            raise ConfigError(f"{path}.preset",
                              f"unknown preset {doc['preset']!r}")
        return preset_two_level(float(doc.get("omega", 0.0)),
                                float(doc.get("gamma", 1.0)),
                                float(doc.get("delta", 0.0)))
    dim = doc.get("dim")
    if not isinstance(dim, int) or dim < 1:
        raise ConfigError(f"{path}.dim", "dim must be a positive integer")
    terms = []
    for i, tdoc in enumerate(doc.get("hamiltonian", [])):
        base = _parse_matrix(tdoc.get("matrix"), f"{path}.hamiltonian[{i}].matrix")
        try:
            terms.append(HamiltonianTerm(
                base=base,
                coeff=_parse_coeff(tdoc.get("coeff"),
                                   f"{path}.hamiltonian[{i}].coeff")))
        except ValueError as exc:
            raise ConfigError(f"{path}.hamiltonian[{i}]", str(exc)) from exc
    channels = []
    for i, cdoc in enumerate(doc.get("channels", [])):
        rate = cdoc.get("rate")
        if not isinstance(rate, (int, float)) or rate < 0:
            raise ConfigError(f"{path}.channels[{i}].rate",
                              "rate must be a non-negative number")
        channels.append(DecayChannel(
            rate=float(rate),
            jump_op=_parse_matrix(cdoc.get("matrix"),
                                  f"{path}.channels[{i}].matrix")))
    try:
        return LindbladModel(dim=dim, terms=tuple(terms),
                             channels=tuple(channels))
    except ValueError as exc:
        raise ConfigError(path, str(exc)) from exc


@dataclass
class RunConfig:
    """Validated run configuration; ``doc`` is the normalized document
    with defaults applied and is the round-trip serialization."""

    doc: dict
    model: LindbladModel
    states: dict = field(default_factory=dict)
    operators: dict = field(default_factory=dict)
    grid: np.ndarray = None
    trajectories: int = 1000
    seed: int = 0
    method: str = "doubled"
    ctrl: StepControl = None
    epsilon: float = 1e-4
    burn_in: float = 10.0
    threads: int = 1
    output: str | None = None
    fmt: str = "csv"

    def __eq__(self, other):
        return isinstance(other, RunConfig) and self.doc == other.doc

    def operator(self, name, path: str = "operators") -> np.ndarray:
        if isinstance(name, list):
            return _parse_matrix(name, path)
        if name in self.operators:
            return self.operators[name]
        raise ConfigError(path, f"unknown operator {name!r}")

    def state(self, name, path: str = "states") -> np.ndarray:
        return _parse_vector(name, path, self.states)

    def model_hash(self) -> str:
        blob = json.dumps(self.doc.get("model"), sort_keys=True)
        return hashlib.sha256(blob.encode()).hexdigest()[:16]


def parse_config(document) -> RunConfig:
    """Validate a JSON config document (text, path content, or dict)."""
    if isinstance(document, str):
        try:
            document = json.loads(document)
        except json.JSONDecodeError as exc:
            raise ConfigError("<document>", f"invalid JSON: {exc}") from exc
    if not isinstance(document, dict):
        raise ConfigError("<document>", "config must be a JSON object")
    doc = copy.deepcopy(document)
    if "model" not in doc:
        raise ConfigError("model", "missing required model section")
    model = _parse_model(doc["model"], "model")
    for key, value in _DEFAULTS.items():
        doc.setdefault(key, value)

    states = dict(_BUILTIN_STATES) if model.dim == 2 else {}
    for name, sdoc in doc.get("states", {}).items():
        states[name] = _parse_vector(sdoc, f"states.{name}", {})
    operators = dict(_BUILTIN_OPERATORS) if model.dim == 2 else {}
    for name, odoc in doc.get("operators", {}).items():
        operators[name] = _parse_matrix(odoc, f"operators.{name}")
    for name, op in operators.items():
        if op.shape[0] != model.dim:
            raise ConfigError(f"operators.{name}", "operator dim != model dim")

    try:
        ctrl = StepControl(dt_max=float(doc["dt_max"]),
                           tol_T=float(doc["jump_tol"]),
                           safety=float(doc["safety"]))
    except ValueError as exc:
        raise ConfigError("dt_max/jump_tol/safety", str(exc)) from exc
    method = doc["method"]
    if method not in ("doubled", "kick", "limit", "four", "oracle"):
        raise ConfigError("method", f"unknown method {method!r}")
    n = doc["trajectories"]
    if not isinstance(n, int) or n < 2:
        raise ConfigError("trajectories", "must be an integer >= 2")
    return RunConfig(
        doc=doc, model=model, states=states, operators=operators,
        grid=_parse_grid(doc["grid"], "grid"),
        trajectories=n, seed=int(doc["seed"]), method=method, ctrl=ctrl,
        epsilon=float(doc["epsilon"]), burn_in=float(doc["burn_in"]),
        threads=int(doc["threads"]), output=doc["output"], fmt=doc["format"])


def serialize_config(config: RunConfig) -> dict:
    return copy.deepcopy(config.doc)


# ---------------------------------------------------------------------------
# output

def _series_payload(series: EstimateSeries, xname: str, meta: dict) -> dict:
    payload = {
        "schema_version": SCHEMA_VERSION,
        "x_name": xname,
        "x": [float(x) for x in series.grid],
        "mean_re": [float(v) for v in series.mean.real],
        "mean_im": [float(v) for v in series.mean.imag],
        "stderr": [float(v) for v in series.stderr],
        "n": series.n,
    }
    if series.stderr_re is not None:
        payload["stderr_re"] = [float(v) for v in series.stderr_re]
        payload["stderr_im"] = [float(v) for v in series.stderr_im]
    payload.update(meta)
    return payload


def _write_series(series: EstimateSeries, xname: str, meta: dict,
                  path: str | None, fmt: str) -> str:
    if fmt == "json":
        text = json.dumps(_series_payload(series, xname, meta), indent=2)
    elif fmt == "csv":
        lines = [f"{xname},mean_re,mean_im,stderr"]
        for x, m, se in zip(series.grid, series.mean, series.stderr):
            lines.append(f"{float(x)!r},{float(m.real)!r},"
                         f"{float(m.imag)!r},{float(se)!r}")
        text = "\n".join(lines) + "\n"
    else:
        raise ConfigError("format", f"unknown format {fmt!r}")
    if path:
        with open(path, "w") as fh:
            fh.write(text)
    else:
        sys.stdout.write(text)
    return text


@dataclass
class BenchReport:
    rows: list  # dicts: method, n, cpu_seconds, wall_seconds, rel_error, est_stderr

    def __post_init__(self):
        for method in {r["method"] for r in self.rows}:
            ns = [r["n"] for r in self.rows if r["method"] == method]
            if any(b <= a for a, b in zip(ns, ns[1:])):
                raise ValueError("trajectory counts must increase per method")


def relative_error(mean: np.ndarray, ref: np.ndarray) -> float:
    """RMS over the grid of |mean - ref| / max(|ref|, floor) with
    floor = 1e-3 * max|ref|, guarding zeros of the reference curve."""
    ref = np.asarray(ref)
    floor = 1e-3 * float(np.max(np.abs(ref)))
    rel = np.abs(np.asarray(mean) - ref) / np.maximum(np.abs(ref), floor)
    return float(np.sqrt(np.mean(rel ** 2)))


def emit_plot_data(report: BenchReport, path: str | None = None) -> str:
    """Tidy long-format table for external plotting."""
    lines = ["method,n,cpu_seconds,rel_error,est_stderr"]
    for r in report.rows:
        lines.append(f"{r['method']},{r['n']},{r['cpu_seconds']!r},"
                     f"{r['rel_error']!r},{r['est_stderr']!r}")
    text = "\n".join(lines) + "\n"
    if path:
        with open(path, "w") as fh:
            fh.write(text)
    return text


# ---------------------------------------------------------------------------
# subcommands

def _meta(config: RunConfig, cpu: float, wall: float, method=None) -> dict:
    return {
        "seed": config.seed,
        "method": method or config.method,
        "trajectories": config.trajectories,
        "model_hash": config.model_hash(),
        "cpu_seconds": cpu,
        "wall_seconds": wall,
    }


def _correlation_section(config: RunConfig):
    cdoc = config.doc.get("correlation")
    if not isinstance(cdoc, dict):
        raise ConfigError("correlation", "missing correlation section")
    return cdoc


def _run_stationary(config: RunConfig, method: str) -> EstimateSeries:
    cdoc = _correlation_section(config)
    a_op = config.operator(cdoc.get("a"), "correlation.a")
    b_op = config.operator(cdoc.get("b"), "correlation.b")
    initial = (config.state(cdoc["initial"], "correlation.initial")
               if "initial" in cdoc else None)
    return estimators.stationary_correlation(
        config.model, a_op, b_op, config.grid, config.trajectories,
        config.seed, method=method, ctrl=config.ctrl,
        t_relax=config.burn_in, initial=initial, epsilon=config.epsilon,
        threads=config.threads)


def _general_spec(config: RunConfig) -> CorrelationSpec:
    cdoc = _correlation_section(config)
    a_ops = tuple((float(t), config.operator(name, "correlation.a"))
                  for name, t in cdoc.get("a", []))
    b_ops = tuple((float(t), config.operator(name, "correlation.b"))
                  for name, t in cdoc.get("b", []))
    phi0 = config.state(cdoc.get("initial", "ground"), "correlation.initial")
    return CorrelationSpec(a_ops=a_ops, b_ops=b_ops, phi0=phi0,
                           t0=float(cdoc.get("t0", 0.0)))


def _run_corr(config: RunConfig, method: str) -> EstimateSeries:
    cdoc = _correlation_section(config)
    if cdoc.get("stationary", False):
        return _run_stationary(config, method)
    spec = _general_spec(config)
    return estimators.correlation(
        config.model, spec, config.grid, config.trajectories, config.seed,
        method=method, ctrl=config.ctrl, epsilon=config.epsilon,
        threads=config.threads)


def _oracle_corr_series(config: RunConfig) -> EstimateSeries:
    cdoc = _correlation_section(config)
    if cdoc.get("stationary", False):
        a_op = config.operator(cdoc.get("a"), "correlation.a")
        b_op = config.operator(cdoc.get("b"), "correlation.b")
        rho = oracle.steady_state(config.model)
        phi0 = np.zeros(config.model.dim, dtype=np.complex128)
        phi0[0] = 1.0
        spec = CorrelationSpec(
            a_ops=((max(float(config.grid[-1]), 1.0), a_op),),
            b_ops=((0.0, b_op),),
            phi0=phi0, t0=0.0)
        values = oracle.regression_correlation(config.model, rho, spec,
                                               config.grid, config.ctrl)
    else:
        spec = _general_spec(config)
        rho = np.outer(spec.phi0, spec.phi0.conj())
        values = oracle.regression_correlation(config.model, rho, spec,
                                               config.grid, config.ctrl)
    return EstimateSeries(grid=config.grid, mean=values,
                          stderr=np.zeros(config.grid.size), n=0)


def _oracle_expect_series(config: RunConfig) -> EstimateSeries:
    A = config.operator(config.doc.get("observable"), "observable")
    psi0 = config.state(config.doc.get("initial", "ground"), "initial")
    rho = np.outer(psi0, psi0.conj())
    values = []
    t = float(config.grid[0])
    for tg in config.grid:
        rho = oracle.integrate_master(config.model, rho, t, float(tg),
                                      config.ctrl)
        t = float(tg)
        values.append(complex(np.trace(A @ rho)))
    return EstimateSeries(grid=config.grid,
                          mean=np.asarray(values, dtype=np.complex128),
                          stderr=np.zeros(config.grid.size), n=0)


def run_command(subcommand: str, config: RunConfig) -> int:
    """Dispatch one subcommand; writes the result to config.output."""
    wall0, cpu0 = time.perf_counter(), time.process_time()
    xname = "t"
    if subcommand == "expect":
        A = config.operator(config.doc.get("observable"), "observable")
        psi0 = config.state(config.doc.get("initial", "ground"), "initial")
        series = estimators.expectation(
            config.model, psi0, A, config.grid, config.trajectories,
            config.seed, ctrl=config.ctrl, threads=config.threads)
    elif subcommand == "heisenberg":
        A = config.operator(config.doc.get("observable"), "observable")
        phi0 = config.state(config.doc.get("phi0", "ground"), "phi0")
        psi0 = config.state(config.doc.get("psi0", "excited"), "psi0")
        series = estimators.heisenberg_element(
            config.model, phi0, psi0, A, config.grid, config.trajectories,
            config.seed, ctrl=config.ctrl, threads=config.threads)
    elif subcommand == "corr":
        xname = "tau"
        series = _run_corr(config, config.method)
    elif subcommand == "spectrum":
        xname = "omega"
        if config.method == "oracle":
            corr_series = _oracle_corr_series(config)
        else:
            corr_series = _run_corr(config, config.method)
        omegas = (_parse_grid(config.doc["omega_grid"], "omega_grid")
                  if "omega_grid" in config.doc else None)
        series = estimators.spectrum(corr_series, omegas)
    elif subcommand == "oracle":
        if "correlation" in config.doc:
            xname = "tau"
            series = _oracle_corr_series(config)
        else:
            series = _oracle_expect_series(config)
    elif subcommand == "bench":
        return _run_bench(config)
    else:
        raise ConfigError("<subcommand>", f"unknown subcommand {subcommand!r}")
    cpu, wall = time.process_time() - cpu0, time.perf_counter() - wall0
    _write_series(series, xname, _meta(config, cpu, wall),
                  config.output, config.fmt)
    return 0


def _run_bench(config: RunConfig) -> int:
    """Run the correlation methods over a ladder of trajectory counts
    against the dense oracle and report error vs CPU time."""
    bdoc = config.doc.get("bench", {})
    ladder = bdoc.get("ladder", [250, 500, 1000, 2000])
    methods = bdoc.get("methods", ["doubled", "limit", "four"])
    ref = _oracle_corr_series(config).mean
    rows = []
    for method in methods:
        for n in ladder:
            cfg_n = copy.deepcopy(config)
            cfg_n.trajectories = int(n)
            cfg_n.threads = 1  # process CPU time only meaningful serially
            wall0, cpu0 = time.perf_counter(), time.process_time()
            series = _run_corr(cfg_n, method)
            cpu = time.process_time() - cpu0
            wall = time.perf_counter() - wall0
            rows.append({
                "method": method,
                "n": int(n),
                "cpu_seconds": cpu,
                "wall_seconds": wall,
                "rel_error": relative_error(series.mean, ref),
                "est_stderr": float(np.mean(series.stderr)),
            })
    report = BenchReport(rows=rows)
    text = emit_plot_data(report, config.output)
    if not config.output:
        sys.stdout.write(text)
    return 0


# ---------------------------------------------------------------------------
# entry point

def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="qjump",
        description="Stochastic wave-function simulator for open quantum "
                    "systems (jump unraveling in a doubled Hilbert space).")
    parser.add_argument("subcommand",
                        choices=["expect", "heisenberg", "corr", "spectrum",
                                 "oracle", "bench"])
    parser.add_argument("--config", required=True, help="JSON config path")
    parser.add_argument("--trajectories", type=int)
    parser.add_argument("--seed", type=int)
    parser.add_argument("--method",
                        choices=["doubled", "kick", "limit", "four", "oracle"])
    parser.add_argument("--epsilon", type=float)
    parser.add_argument("--dt-max", dest="dt_max", type=float)
    parser.add_argument("--jump-tol", dest="jump_tol", type=float)
    parser.add_argument("--grid", help="start:stop:points")
    parser.add_argument("--burn-in", dest="burn_in", type=float)
    parser.add_argument("--output")
    parser.add_argument("--format", choices=["csv", "json"])
    parser.add_argument("--threads", type=int)
    return parser


_FLAG_KEYS = ("trajectories", "seed", "method", "epsilon", "dt_max",
              "jump_tol", "grid", "burn_in", "output", "format", "threads")


def main(argv=None) -> int:
    args = _build_parser().parse_args(argv)
    try:
        with open(args.config) as fh:
            doc = json.load(fh)
    except (OSError, json.JSONDecodeError) as exc:
        print(f"error: cannot read config: {exc}", file=sys.stderr)
        return 1
    for key in _FLAG_KEYS:
        value = getattr(args, key)
        if value is not None:
            doc[key] = value
    try:
        config = parse_config(doc)
        return run_command(args.subcommand, config)
    except (ConfigError, ValueError, RuntimeError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())

"""Experiment-suite configuration, orchestration, and report emission.

A suite is a JSON document listing named experiments over finite targets.
``run_suite`` executes each experiment, writes ``{name}.report.json`` and
``{name}.sums.csv`` into the output directory, prints a summary table, and
returns a process exit status (0 only if every experiment passed).

Each experiment runs with seed ``master_seed + seed_offset`` (the offset
defaults to the position in the file); within an experiment, replication
``r`` uses the streams derived from that seed and ``r``, so outputs are
byte-identical across repeated runs and independent of the worker count.
Experiments sharing a seed offset reuse each other's replication batches,
so the three CLT-style kinds can split one set of runs.
"""

from __future__ import annotations

import json
import logging
import os
from dataclasses import dataclass
from pathlib import Path
from typing import Optional

import numpy as np

from .errors import ConfigurationError
from .asymptotics import total_asymptotic_variance
from .experiments import (
    CLTReport,
    assumption_diagnostics,
    lln_experiment,
    replication_sums,
    report_from_sums,
    vstat_moment_check,
)
from .kernels import FiniteKernel
from .streams import derive_stream
from .targets import FiniteTarget, auxiliary_target_measure, metropolis_kernel_finite, uniform_proposal
from .tempering import AUXILIARY_MODES, TemperingConfig

__all__ = [
    "ExperimentSpec", "ExperimentSuite", "load_suite", "save_suite", "suite_to_document",
    "run_suite", "derive_stream", "parse_chain_config",
]

logger = logging.getLogger("imclab")

SCHEMA_VERSION = "1"
KINDS = ("clt", "martingale", "pi_fluctuation", "lln", "vstat", "diagnostics")
F_KINDS = ("indicator", "values", "constant")


@dataclass(frozen=True)
class ExperimentSpec:
    """One named experiment: instance, test function, sizes, tolerances."""

    name: str
    kind: str
    target_weights: tuple
    beta: float = 0.5
    tau: float = 0.5
    epsilon: float = 0.3
    n_steps: int = 10000
    f_kind: str = "indicator"
    f_index: int = 0
    f_values: tuple = ()
    f_value: float = 0.0
    n_replications: int = 0
    auxiliary_mode: str = "iid"
    n_grid: tuple = ()
    n_seeds: int = 1
    k_order: int = 1
    variance_band: float = 0.15
    tolerance: float = 0.10
    slope_threshold: Optional[float] = None
    alpha: float = 0.3
    base_kernel_rows: Optional[tuple] = None
    auxiliary_kernel_rows: Optional[tuple] = None
    seed_offset: Optional[int] = None


@dataclass(frozen=True)
class ExperimentSuite:
    """Validated collection of experiments plus output location and seed."""

    experiments: tuple
    output_dir: str
    master_seed: int


def _fail(field: str, message: str, name: str = "") -> ConfigurationError:
    where = f" in experiment {name!r}" if name else ""
    return ConfigurationError(f"invalid field '{field}'{where}: {message}")


def _spec_from_document(doc: dict, index: int) -> ExperimentSpec:
    name = doc.get("name", f"experiment_{index}")
    if not isinstance(name, str) or not name:
        raise _fail("name", "must be a non-empty string")
    kind = doc.get("kind")
    if kind not in KINDS:
        raise _fail("kind", f"must be one of {KINDS}, got {kind!r}", name)
    target = doc.get("target")
    if not isinstance(target, dict) or "weights" not in target:
        raise _fail("target", "must be an object with a 'weights' array", name)
    weights = tuple(float(w) for w in target["weights"])
    if len(weights) < 2 or any(w <= 0 for w in weights):
        raise _fail("target.weights", "need at least 2 strictly positive weights", name)
    beta = float(target.get("beta", 0.5))
    if not 0 < beta <= 1:
        raise _fail("beta", f"must be in (0, 1], got {beta}", name)
    tau = float(target.get("tau", 0.5))
    if not 0 < tau < 1:
        raise _fail("tau", f"must be in (0, 1), got {tau}", name)
    epsilon = float(doc.get("epsilon", 0.3))
    if not 0 <= epsilon < 1:
        raise _fail("epsilon", f"must be in [0, 1), got {epsilon}", name)
    n_steps = int(doc.get("n_steps", 10000))
    if n_steps < 1:
        raise _fail("n_steps", "must be >= 1", name)
    f_doc = doc.get("f", {"kind": "indicator", "index": 0})
    f_kind = f_doc.get("kind", "indicator")
    if f_kind not in F_KINDS:
        raise _fail("f.kind", f"must be one of {F_KINDS}, got {f_kind!r}", name)
    f_index = int(f_doc.get("index", 0))
    if f_kind == "indicator" and not 0 <= f_index < len(weights):
        raise _fail("f.index", f"must index a state in [0, {len(weights)}), got {f_index}", name)
    f_values = tuple(float(v) for v in f_doc.get("values", ()))
    if f_kind == "values" and len(f_values) != len(weights):
        raise _fail("f.values", "must have one value per state", name)
    auxiliary_mode = doc.get("auxiliary_mode", "iid")
    if auxiliary_mode not in AUXILIARY_MODES:
        raise _fail("auxiliary_mode", f"must be one of {AUXILIARY_MODES}", name)
    rows = doc.get("base_kernel", {}).get("rows") if isinstance(doc.get("base_kernel"), dict) else None
    aux_rows = (doc.get("auxiliary_kernel", {}).get("rows")
                if isinstance(doc.get("auxiliary_kernel"), dict) else None)
    n_replications = int(doc.get("n_replications", 0))
    if kind in ("clt", "martingale", "pi_fluctuation") and n_replications < 100:
        raise _fail("n_replications", "CLT-style experiments need at least 100 replications", name)
    n_grid = tuple(int(v) for v in doc.get("n_grid", ()))
    if kind in ("lln", "vstat", "diagnostics") and len(n_grid) < 2:
        raise _fail("n_grid", "series experiments need at least 2 grid points", name)
    k_order = int(doc.get("k_order", 1))
    if kind == "vstat" and k_order not in (1, 2):
        raise _fail("k_order", "must be 1 or 2", name)
    return ExperimentSpec(
        name=name, kind=kind, target_weights=weights, beta=beta, tau=tau,
        epsilon=epsilon, n_steps=n_steps, f_kind=f_kind, f_index=f_index,
        f_values=f_values, f_value=float(f_doc.get("value", 0.0)),
        n_replications=n_replications, auxiliary_mode=auxiliary_mode,
        n_grid=n_grid, n_seeds=int(doc.get("n_seeds", 1)), k_order=k_order,
        variance_band=float(doc.get("variance_band", 0.15)),
        tolerance=float(doc.get("tolerance", 0.10)),
        slope_threshold=(float(doc["slope_threshold"]) if "slope_threshold" in doc else None),
        alpha=float(doc.get("alpha", 0.3)),
        base_kernel_rows=(tuple(tuple(float(v) for v in row) for row in rows) if rows else None),
        auxiliary_kernel_rows=(tuple(tuple(float(v) for v in row) for row in aux_rows)
                               if aux_rows else None),
        seed_offset=(int(doc["seed_offset"]) if "seed_offset" in doc else None),
    )


def load_suite(path) -> ExperimentSuite:
    """Load and validate a suite document; defaults are filled eagerly."""
    text = Path(path).read_text()
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ConfigurationError(f"{path}: JSON parse error at line {exc.lineno}, column {exc.colno}: {exc.msg}")
    if not isinstance(doc, dict):
        raise ConfigurationError(f"{path}: suite document must be a JSON object")
    if "master_seed" not in doc:
        logger.warning("suite %s has no master_seed; defaulting to 0", path)
    master_seed = int(doc.get("master_seed", 0))
    output_dir = str(doc.get("output_dir", "reports"))
    specs = tuple(_spec_from_document(e, i) for i, e in enumerate(doc.get("experiments", [])))
    names = [s.name for s in specs]
    if len(set(names)) != len(names):
        dup = sorted({n for n in names if names.count(n) > 1})
        raise ConfigurationError(f"experiment names must be unique; duplicates: {dup}")
    return ExperimentSuite(experiments=specs, output_dir=output_dir, master_seed=master_seed)


def suite_to_document(suite: ExperimentSuite) -> dict:
    """Inverse of load_suite: a JSON-ready document that round-trips."""
    experiments = []
    for s in suite.experiments:
        e = {
            "name": s.name,
            "kind": s.kind,
            "target": {"weights": list(s.target_weights), "beta": s.beta, "tau": s.tau},
            "epsilon": s.epsilon,
            "n_steps": s.n_steps,
            "f": {"kind": s.f_kind, "index": s.f_index, "values": list(s.f_values), "value": s.f_value},
            "n_replications": s.n_replications,
            "auxiliary_mode": s.auxiliary_mode,
            "n_grid": list(s.n_grid),
            "n_seeds": s.n_seeds,
            "k_order": s.k_order,
            "variance_band": s.variance_band,
            "tolerance": s.tolerance,
            "alpha": s.alpha,
        }
        if s.slope_threshold is not None:
            e["slope_threshold"] = s.slope_threshold
        if s.base_kernel_rows is not None:
            e["base_kernel"] = {"rows": [list(r) for r in s.base_kernel_rows]}
        if s.auxiliary_kernel_rows is not None:
            e["auxiliary_kernel"] = {"rows": [list(r) for r in s.auxiliary_kernel_rows]}
        if s.seed_offset is not None:
            e["seed_offset"] = s.seed_offset
        experiments.append(e)
    return {
        "schema": SCHEMA_VERSION,
        "master_seed": suite.master_seed,
        "output_dir": suite.output_dir,
        "experiments": experiments,
    }


def save_suite(suite: ExperimentSuite, path) -> None:
    Path(path).write_text(json.dumps(suite_to_document(suite), indent=2, sort_keys=True) + "\n")


def _spec_runtime(spec: ExperimentSpec, seed: int) -> tuple[TemperingConfig, np.ndarray]:
    target = FiniteTarget(np.array(spec.target_weights), beta=spec.beta, tau=spec.tau)
    if spec.base_kernel_rows is not None:
        base = FiniteKernel(np.array(spec.base_kernel_rows))
    else:
        base = metropolis_kernel_finite(target, uniform_proposal(target.n_states))
    aux_kernel = None
    if spec.auxiliary_kernel_rows is not None:
        aux_kernel = FiniteKernel(np.array(spec.auxiliary_kernel_rows))
    elif spec.auxiliary_mode == "markov":
        # default auxiliary chain: Metropolis targeting the tempered limit measure
        aux_target = FiniteTarget(auxiliary_target_measure(target), beta=spec.beta, tau=spec.tau)
        aux_kernel = metropolis_kernel_finite(aux_target, uniform_proposal(target.n_states))
    cfg = TemperingConfig(
        epsilon=spec.epsilon, target=target, n_steps=spec.n_steps, seed=seed,
        base_kernel=base, auxiliary_mode=spec.auxiliary_mode, auxiliary_kernel=aux_kernel,
    )
    n = target.n_states
    if spec.f_kind == "indicator":
        f = np.zeros(n)
        f[spec.f_index] = 1.0
    elif spec.f_kind == "values":
        f = np.array(spec.f_values)
    else:
        f = np.full(n, spec.f_value)
    return cfg, f


def parse_chain_config(doc: dict, seed_override: Optional[int] = None) -> tuple[TemperingConfig, np.ndarray]:
    """Parse a single-chain config document (the oracle/simulate CLI input)."""
    spec = _spec_from_document({**doc, "kind": doc.get("kind", "clt"),
                                "n_replications": doc.get("n_replications", 100)}, 0)
    seed = int(doc.get("seed", 0)) if seed_override is None else seed_override
    return _spec_runtime(spec, seed)


def _format_float(x: float) -> str:
    return format(float(x), ".17g")


def _write_sums_csv(path: Path, header: tuple, rows) -> None:
    with open(path, "w") as fh:
        fh.write(",".join(header) + "\n")
        for row in rows:
            cells = [str(row[0])] + [_format_float(v) for v in row[1:]]
            fh.write(",".join(cells) + "\n")


def _batch_key(spec: ExperimentSpec, seed: int) -> tuple:
    return (spec.target_weights, spec.beta, spec.tau, spec.epsilon, spec.n_steps,
            spec.f_kind, spec.f_index, spec.f_values, spec.f_value,
            spec.auxiliary_mode, spec.base_kernel_rows, spec.auxiliary_kernel_rows,
            spec.n_replications, seed)


def _run_one(spec: ExperimentSpec, seed: int, threads: int, out_dir: Path,
             batch_cache: dict) -> tuple[bool, str]:
    cfg, f = _spec_runtime(spec, seed)
    payload: dict
    if spec.kind in ("clt", "martingale", "pi_fluctuation"):
        if spec.n_replications < 100:
            raise ConfigurationError("CLT-style experiments need at least 100 replications")
        pathwise = spec.kind != "clt"
        key = _batch_key(spec, seed)
        sums = batch_cache.get(key)
        if sums is None or (pathwise and sums.s1 is None):
            sums = replication_sums(cfg, f, spec.n_replications, pathwise=pathwise,
                                    threads=threads)
            batch_cache[key] = sums
        variance = total_asymptotic_variance(cfg, f)
        predicted, values = {
            "clt": (variance.total, sums.z),
            "martingale": (variance.sigma_sq, sums.s1),
            "pi_fluctuation": (2.0 * variance.gamma_tilde_sq, sums.s2),
        }[spec.kind]
        report: CLTReport = report_from_sums(values, predicted, spec.n_steps,
                                             variance_band=spec.variance_band)
        passed = report.passed
        payload = report.to_dict()
        _write_sums_csv(out_dir / f"{spec.name}.sums.csv", ("replication", "sum"),
                        list(enumerate(report.per_replication_sums)))
        detail = (f"ratio={report.variance_ratio:.4f} ks={report.ks_distance:.4f}"
                  if not report.degenerate else "degenerate-zero")
    elif spec.kind == "lln":
        series = lln_experiment(cfg, f, spec.n_grid, n_seeds=spec.n_seeds, threads=threads)
        reference = series.extras["reference"]
        final_dev = abs(float(series.values[-1]))
        passed = final_dev <= spec.tolerance * max(reference, 1e-300)
        payload = {
            "reference": reference,
            "final_deviation": final_dev,
            "fitted_slope": series.fitted_slope,
            "n_grid": [int(v) for v in series.n_grid],
            "values": [float(v) for v in series.values],
            "passed": passed,
        }
        _write_sums_csv(out_dir / f"{spec.name}.sums.csv", ("n", "deviation"),
                        list(zip(series.n_grid.tolist(), series.values)))
        detail = f"final_dev={final_dev:.3e} ref={reference:.3e}"
    elif spec.kind == "vstat":
        theta_star = auxiliary_target_measure(cfg.target)
        series = vstat_moment_check(theta_star, f, spec.k_order, spec.n_grid,
                                    max(spec.n_replications, 100), seed=seed)
        threshold = spec.slope_threshold if spec.slope_threshold is not None else -spec.k_order + 0.3
        passed = series.fitted_slope <= threshold
        payload = {
            "fitted_slope": series.fitted_slope,
            "threshold": threshold,
            "n_grid": [int(v) for v in series.n_grid],
            "values": [float(v) for v in series.values],
            "passed": passed,
        }
        _write_sums_csv(out_dir / f"{spec.name}.sums.csv", ("n", "moment"),
                        list(zip(series.n_grid.tolist(), series.values)))
        detail = f"slope={series.fitted_slope:.3f} <= {threshold:.3f}?"
    elif spec.kind == "diagnostics":
        series_list = assumption_diagnostics(cfg, f, spec.n_grid, alpha=spec.alpha,
                                             n_seeds=spec.n_seeds, threads=threads)
        passed = all(s.fitted_slope < 0 for s in series_list)
        payload = {
            "series": [
                {"label": s.label, "fitted_slope": s.fitted_slope,
                 "n_grid": [int(v) for v in s.n_grid], "values": [float(v) for v in s.values]}
                for s in series_list
            ],
            "passed": passed,
        }
        rows = []
        for n_val, *vals in zip(series_list[0].n_grid.tolist(),
                                *[s.values for s in series_list]):
            rows.append((n_val, *vals))
        _write_sums_csv(out_dir / f"{spec.name}.sums.csv",
                        ("n", *[s.label for s in series_list]), rows)
        detail = " ".join(f"{s.label}:{s.fitted_slope:.2f}" for s in series_list)
    else:  # pragma: no cover - guarded by validation
        raise ConfigurationError(f"unknown kind {spec.kind}")
    report_doc = {"schema": SCHEMA_VERSION, "name": spec.name, "kind": spec.kind,
                  "seed": seed, **payload}
    (out_dir / f"{spec.name}.report.json").write_text(
        json.dumps(report_doc, indent=2, sort_keys=True) + "\n")
    return passed, detail


def resolve_threads(threads: Optional[int]) -> int:
    """CLI flag first, then the IMCMC_THREADS environment variable, then 1."""
    if threads is not None and threads >= 1:
        return threads
    env = os.environ.get("IMCMC_THREADS", "")
    if env.isdigit() and int(env) >= 1:
        return int(env)
    return 1


def run_suite(suite: ExperimentSuite, threads: Optional[int] = None,
              output_dir: Optional[str] = None) -> int:
    """Execute every experiment, write reports, print a summary; 0 iff all pass."""
    workers = resolve_threads(threads)
    out_dir = Path(output_dir if output_dir is not None else suite.output_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    results = []
    batch_cache: dict = {}
    for i, spec in enumerate(suite.experiments):
        offset = spec.seed_offset if spec.seed_offset is not None else i
        seed = suite.master_seed + offset
        passed, detail = _run_one(spec, seed, workers, out_dir, batch_cache)
        results.append((spec.name, spec.kind, passed, detail))
    width = max([len(r[0]) for r in results], default=4)
    print(f"{'name':<{width}}  {'kind':<14}  status  detail")
    for name, kind, passed, detail in results:
        print(f"{name:<{width}}  {kind:<14}  {'PASS' if passed else 'FAIL'}    {detail}")
    failed = [name for name, _, passed, _ in results if not passed]
    if failed:
        print(f"FAILED: {', '.join(failed)}")
        return 1
    return 0

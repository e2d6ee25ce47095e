"""Monte Carlo harness for the simulation designs.

One replication runs generate → time-invariant fit → tvp fit → smooth →
classify.  A condition aggregates replications into an :class:`McReport` with
relative bias, spread, classification accuracy and optimizer effort.

Replications are independent and seeded by ``scenario.seed + replication``, so
the report does not depend on the number of workers or their scheduling.
"""

from __future__ import annotations

import csv
import json
import logging
import sys
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field, replace
from pathlib import Path

import numpy as np

from .errors import IoFailure, TooFewReplications, TvpDfmError, ZeroTruth
from .filtering import PASSES, rts_smooth
from .model import cell_label
from .simulate import GENERATED_TVP, ScenarioConfig, fitted_spec, gen_dataset, generating_truth
from .tuning import TuneConfig, classify_tvp, fit_time_invariant, seed_tvp_start, tune

log = logging.getLogger(__name__)

# tuner used by the harness unless a config is passed explicitly
MC_TUNE_CONFIG = TuneConfig(method="quasi-newton")

EXCLUSION_NOTE = (
    "non-converged replications are excluded from bias, SD and classification "
    "but count in the convergence denominator"
)


def relative_bias(estimates, truth: float, mode: str = "invariant") -> float:
    """Mean percentage relative bias.

    ``mode="invariant"`` takes one estimate per replication.  With
    ``mode="invariant-estimated-as-tvp"`` each row is a replication's smoothed
    path; the relative error is averaged over time and then replications.

    >>> relative_bias([0.23], 0.2)
    15.000000000000002
    """
    if truth == 0:
        raise ZeroTruth("relative bias is undefined for a zero generating value")
    est = np.asarray(estimates, dtype=float)
    if mode == "invariant":
        est = est.ravel()
    elif mode == "invariant-estimated-as-tvp":
        est = np.atleast_2d(est)
    else:
        raise ValueError(f"unknown bias mode {mode!r}")
    if est.size == 0:
        return float("nan")
    rel = (est - truth) / truth
    if rel.ndim == 2:
        rel = rel.mean(axis=1)
    return float(100.0 * rel.mean())


def sd_estimates(estimates) -> float:
    est = np.asarray(estimates, dtype=float).ravel()
    if est.size < 2:
        raise TooFewReplications(f"need at least 2 replications, got {est.size}")
    return float(est.std(ddof=1))


@dataclass
class ReplicationResult:
    replication: int
    seed: int
    converged: bool
    iterations: int
    log_lik: float
    # constant estimates, and time averages of smoothed paths for tvp cells
    estimates: dict = field(default_factory=dict)
    paths: dict = field(default_factory=dict, repr=False)
    classification: dict = field(default_factory=dict)
    tvp_rmse: dict = field(default_factory=dict)
    elapsed: float = 0.0
    error: str = None
    pi: np.ndarray = field(default=None, repr=False)
    init_state: np.ndarray = field(default=None, repr=False)


@dataclass
class McReport:
    condition: str
    backend: str
    T: int
    replications: int
    bias: dict
    sd: dict
    classification: dict
    tvp_rmse: dict
    mean_iterations: float
    convergence_pct: float
    failures: list
    results: list = field(default_factory=list, repr=False)
    truth: dict = field(default_factory=dict)
    note: str = EXCLUSION_NOTE

    def to_dict(self) -> dict:
        out = asdict(self)
        out.pop("results")
        return out


def _labels(simulation: int, subcondition: str):
    """Parameter labels reported for a condition, with their generating role."""
    spec = fitted_spec(simulation, subcondition)
    tvp = set(spec.tvp_cells)
    rows = []
    for cell in spec.free_cells + spec.tvp_cells:
        rows.append((cell, cell_label(cell), cell in tvp))
    for i, c in enumerate(spec.measurement_noise):
        if c.kind == "free":
            rows.append((("Xi", i, i), f"Xi[{i + 1}]", False))
    order = {"Lambda": 0, "Xi": 1, "Phi": 2, "Gamma": 3}
    rows.sort(key=lambda r: (order[r[0][0]], r[0][2], r[0][1]))
    return spec, rows


def run_replication(scenario: ScenarioConfig, replication: int, backend: str = "sr-sekf",
                    config: TuneConfig = None) -> ReplicationResult:
    """One full generate-estimate-classify cycle; never raises on estimation failure."""
    config = replace(config or MC_TUNE_CONFIG, backend=backend)
    t0 = time.perf_counter()
    ds = gen_dataset(scenario, replication)
    spec, rows = _labels(scenario.simulation, scenario.subcondition)
    seed = scenario.replication_seed(replication)
    try:
        ti = fit_time_invariant(ds.y, ds.x, spec, config)
        start, init = seed_tvp_start(spec, ti.pi_hat, config)
        res = tune(ds.y, ds.x, spec, start, config, init=init)
        run = PASSES[backend](ds.y, ds.x, res.pi_hat, spec, *init)
        smooth = rts_smooth(run)
    except (TvpDfmError, np.linalg.LinAlgError, ValueError) as exc:
        log.warning("replication %d failed: %s", replication, exc)
        return ReplicationResult(replication, seed, False, 0, float("nan"),
                                 elapsed=time.perf_counter() - t0, error=str(exc))

    pi = res.pi_hat.as_dict()
    out = ReplicationResult(replication, seed, res.converged, res.iterations, res.log_lik,
                            pi=np.array(res.pi_hat.values), init_state=init[0])
    tvp_index = {cell: spec.m + j for j, cell in enumerate(spec.tvp_cells)}
    for cell, label, is_tvp in rows:
        if is_tvp:
            path = smooth.states[:, tvp_index[cell]].copy()
            out.paths[label] = path
            out.estimates[label] = float(path.mean())
            out.classification[label] = classify_tvp(path)
            truth = ds.true_value(cell)
            out.tvp_rmse[label] = float(np.sqrt(np.mean((path - truth) ** 2)))
        else:
            out.estimates[label] = float(pi[cell])
    out.elapsed = time.perf_counter() - t0
    return out


def _run_one(args):
    return run_replication(*args)


def _aggregate(scenario, backend, results) -> McReport:
    spec, rows = _labels(scenario.simulation, scenario.subcondition)
    constants = generating_truth(scenario.simulation, scenario.measurement_var, scenario.latent_var)
    generated_tvp = set(GENERATED_TVP[scenario.simulation])
    ok = [r for r in results if r.converged and r.error is None]
    bias, sd, cls, rmse, truth = {}, {}, {}, {}, {}
    for cell, label, is_tvp in rows:
        if cell in generated_tvp:
            truth[label] = "time-varying"
            if ok:
                rmse[label] = float(np.mean([r.tvp_rmse[label] for r in ok]))
                cls[label] = 100.0 * np.mean([r.classification[label] == "time-varying" for r in ok])
            else:
                rmse[label] = cls[label] = None
            continue
        value = constants[cell]
        truth[label] = value
        est = [r.estimates[label] for r in ok]
        if value != 0 and est:
            # time-averaged estimates give the same mean as the per-t formula
            bias[label] = relative_bias(est, value)
        else:
            bias[label] = None
        sd[label] = sd_estimates(est) if len(est) >= 2 else None
        if is_tvp:
            cls[label] = (100.0 * np.mean([r.classification[label] == "time-invariant" for r in ok])
                          if ok else None)
        else:
            cls[label] = "n/a"
    n = len(results)
    return McReport(
        condition=scenario.condition,
        backend=backend,
        T=scenario.T,
        replications=n,
        bias=bias,
        sd=sd,
        classification=cls,
        tvp_rmse=rmse,
        mean_iterations=float(np.mean([r.iterations for r in results if r.error is None]))
        if any(r.error is None for r in results) else float("nan"),
        convergence_pct=100.0 * sum(r.converged for r in results) / n if n else float("nan"),
        failures=[{"replication": r.replication, "error": r.error} for r in results if r.error],
        results=results,
        truth=truth,
    )


def run_condition(scenario: ScenarioConfig, backend: str = "sr-sekf", config: TuneConfig = None,
                  threads: int = 1, progress: bool = False) -> McReport:
    """Run every replication of ``scenario`` and aggregate them."""
    if backend not in PASSES:
        raise ValueError(f"unknown backend {backend!r}")
    jobs = [(scenario, rep, backend, config) for rep in range(scenario.replications)]
    results = []
    if threads > 1 and len(jobs) > 1:
        with ProcessPoolExecutor(max_workers=threads) as pool:
            for res in pool.map(_run_one, jobs):
                results.append(res)
                if progress:
                    _progress(scenario, backend, res, len(jobs))
    else:
        for job in jobs:
            res = _run_one(job)
            results.append(res)
            if progress:
                _progress(scenario, backend, res, len(jobs))
    results.sort(key=lambda r: r.replication)
    return _aggregate(scenario, backend, results)


def _progress(scenario, backend, res, total):
    status = "ok" if res.converged else ("failed" if res.error else "not converged")
    print(f"[{scenario.condition}/{backend}] replication {res.replication + 1}/{total} "
          f"{status} ({res.iterations} it, {res.elapsed:.1f}s)", file=sys.stderr, flush=True)


# -- output ----------------------------------------------------------------------


def _fmt(v):
    if v is None:
        return "NA"
    if isinstance(v, str):
        return v
    return f"{v:.6g}"


def _write_csv(path: Path, header, rows):
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh)
        w.writerow(header)
        w.writerows(rows)


def emit_tables(reports, out_dir) -> dict:
    """Write the table bundle for ``reports`` under ``out_dir``.

    Files: ``tables/{bias,sd,classification,efficiency}.csv``,
    ``tables/summary.txt``, ``raw/estimates_<cond>_<backend>.csv`` and
    ``report.json``.  Returns the written paths by name.
    """
    out_dir = Path(out_dir)
    try:
        (out_dir / "tables").mkdir(parents=True, exist_ok=True)
        (out_dir / "raw").mkdir(parents=True, exist_ok=True)
        paths = {}
        key = ["condition", "backend", "T", "parameter"]
        bias_rows, sd_rows, cls_rows, eff_rows = [], [], [], []
        for rep in reports:
            head = [rep.condition, rep.backend, rep.T]
            for label, v in rep.bias.items():
                bias_rows.append(head + [label, _fmt(v)])
            for label, v in rep.sd.items():
                sd_rows.append(head + [label, _fmt(v)])
            for label, v in rep.classification.items():
                cls_rows.append(head + [label, _fmt(v), _fmt(rep.tvp_rmse.get(label))])
            eff_rows.append(head + [_fmt(rep.mean_iterations), _fmt(rep.convergence_pct),
                                    rep.replications, len(rep.failures)])
        for name, header, rows in (
            ("bias", key + ["relative_bias_pct"], bias_rows),
            ("sd", key + ["sd"], sd_rows),
            ("classification", key + ["accuracy_pct", "tvp_rmse"], cls_rows),
            ("efficiency", ["condition", "backend", "T", "mean_iterations",
                            "converged_pct", "replications", "failures"], eff_rows),
        ):
            path = out_dir / "tables" / f"{name}.csv"
            _write_csv(path, header, rows)
            paths[name] = path

        for rep in reports:
            labels = list(rep.bias) + [k for k in rep.classification if k not in rep.bias]
            cls_labels = [k for k, v in rep.classification.items() if v != "n/a"]
            header = (["replication", "seed", "converged", "iterations", "log_lik"] + labels
                      + [f"class:{k}" for k in cls_labels])
            rows = []
            for r in rep.results:
                rows.append([r.replication, r.seed, int(r.converged), r.iterations, repr(r.log_lik)]
                            + [repr(r.estimates.get(k, float("nan"))) for k in labels]
                            + [r.classification.get(k, "") for k in cls_labels])
            path = out_dir / "raw" / f"estimates_{rep.condition}_{rep.backend}.csv"
            _write_csv(path, header, rows)
            paths[f"raw_{rep.condition}_{rep.backend}"] = path

        summary = out_dir / "tables" / "summary.txt"
        summary.write_text(format_summary(reports), encoding="utf-8")
        paths["summary"] = summary
        report = out_dir / "report.json"
        report.write_text(json.dumps([r.to_dict() for r in reports], indent=1, default=float) + "\n",
                          encoding="utf-8")
        paths["report"] = report
    except OSError as exc:
        raise IoFailure(str(exc)) from exc
    return paths


def format_summary(reports) -> str:
    lines = []
    for rep in reports:
        lines.append(f"condition {rep.condition}  backend {rep.backend}  T={rep.T}  "
                     f"replications {rep.replications}")
        lines.append(f"  mean iterations {_fmt(rep.mean_iterations)}   "
                     f"converged {_fmt(rep.convergence_pct)}%   failures {len(rep.failures)}")
        lines.append(f"  {'parameter':<14}{'bias %':>10}{'SD':>10}{'class %':>10}{'RMSE':>10}")
        for label in list(rep.bias) + [k for k in rep.classification if k not in rep.bias]:
            lines.append(f"  {label:<14}{_fmt(rep.bias.get(label)):>10}{_fmt(rep.sd.get(label)):>10}"
                         f"{_fmt(rep.classification.get(label)):>10}"
                         f"{_fmt(rep.tvp_rmse.get(label)):>10}")
        lines.append("")
    if not reports:
        lines.append("no conditions run")
    lines.append(f"note: {EXCLUSION_NOTE}")
    return "\n".join(lines) + "\n"

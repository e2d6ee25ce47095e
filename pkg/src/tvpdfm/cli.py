"""Command-line front end.

    tvpdfm simulate --sim 1 --cond A --T 200 --seed 7 --out data/
    tvpdfm fit data/sim1A_T200_seed7.csv --spec data/sim1A_T200_seed7.spec.json --out fit/
    tvpdfm mc --sim 1 --cond A --T 200 --reps 100 --out mc/
    tvpdfm compare --sim 1 --cond A --T 200 --reps 50 --out cmp/

Exit codes: 0 success, 2 configuration error, 3 data error, 4 non-convergence
(outputs are still written).
"""

from __future__ import annotations

import argparse
import csv
import json
import logging
import platform
import sys
from dataclasses import asdict, replace
from datetime import datetime, timezone
from pathlib import Path

import numpy as np

from .errors import (
    DimensionMismatch,
    InvalidConfig,
    InvalidScenario,
    InvalidSpec,
    IoFailure,
    LayoutMismatch,
    MissingData,
    TvpDfmError,
)
from .filtering import PASSES, initial_conditions, rts_smooth
from .model import ModelSpec, ParamVector, load_spec, save_spec
from .montecarlo import MC_TUNE_CONFIG, emit_tables, run_condition
from .simulate import ScenarioConfig, fitted_spec, gen_dataset, write_dataset
from .tuning import TuneConfig, classify_tvp, fit_time_invariant, seed_tvp_start, tune

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_DATA = 3
EXIT_NONCONVERGED = 4

log = logging.getLogger("tvpdfm")


# -- config ----------------------------------------------------------------------


def _load_config(path) -> dict:
    if path is None:
        return {}
    try:
        doc = json.loads(Path(path).read_text(encoding="utf-8"))
    except FileNotFoundError as exc:
        raise InvalidConfig(f"config file not found: {path}") from exc
    except json.JSONDecodeError as exc:
        raise InvalidConfig(f"config is not valid JSON: {exc}") from exc
    if not isinstance(doc, dict):
        raise InvalidConfig("config must be a JSON object")
    unknown = set(doc) - {"scenario", "tuning", "threads", "backend", "spec"}
    if unknown:
        raise InvalidConfig(f"unknown config sections: {sorted(unknown)}")
    return doc


def _scenario(args, doc) -> ScenarioConfig:
    fields = dict(doc.get("scenario", {}))
    known = set(ScenarioConfig.__dataclass_fields__)
    if set(fields) - known:
        raise InvalidConfig(f"unknown scenario options: {sorted(set(fields) - known)}")
    for flag, key in (("sim", "simulation"), ("cond", "subcondition"), ("T", "T"),
                      ("reps", "replications"), ("seed", "seed"), ("onset", "onset_fraction")):
        value = getattr(args, flag, None)
        if value is not None:
            fields[key] = value
    try:
        return ScenarioConfig(**fields)
    except TypeError as exc:
        raise InvalidConfig(str(exc)) from exc


def _tuning(doc, default: TuneConfig, backend=None) -> TuneConfig:
    cfg = TuneConfig.from_dict(doc["tuning"]) if "tuning" in doc else default
    backend = backend or doc.get("backend")
    return replace(cfg, backend=backend) if backend else cfg


def _versions() -> dict:
    import numba
    import scipy

    try:
        from importlib.metadata import version

        pkg = version("artifact")
    except Exception:  # not installed as a distribution
        pkg = "unknown"
    return {"python": platform.python_version(), "numpy": np.__version__, "scipy": scipy.__version__,
            "numba": numba.__version__, "artifact": pkg}


def _write_manifest(out: Path, args, started, inputs, outputs, resolved) -> Path:
    manifest = {
        "command": args.command,
        "argv": sys.argv[1:],
        "config_path": getattr(args, "config", None),
        "seed": resolved.get("scenario", {}).get("seed", getattr(args, "seed", None)),
        "inputs": [str(p) for p in inputs],
        "outputs": [str(p) for p in outputs],
        "resolved_config": resolved,
        "versions": _versions(),
        "started": started,
        "finished": datetime.now(timezone.utc).isoformat(),
    }
    path = out / "manifest.json"
    path.write_text(json.dumps(manifest, indent=1, default=str) + "\n", encoding="utf-8")
    return path


def _outdir(path) -> Path:
    out = Path(path)
    try:
        out.mkdir(parents=True, exist_ok=True)
    except OSError as exc:
        raise IoFailure(f"cannot create {out}: {exc}") from exc
    return out


# -- data ------------------------------------------------------------------------


def read_data(path, spec: ModelSpec):
    """Read ``y1..yk, x1..xr`` columns; rows with missing values are rejected."""
    try:
        with open(path, newline="", encoding="utf-8") as fh:
            rows = list(csv.reader(fh))
    except OSError as exc:
        raise IoFailure(f"cannot read {path}: {exc}") from exc
    if not rows:
        raise DimensionMismatch(f"{path} is empty")
    header = [h.strip() for h in rows[0]]
    expected = [f"y{i + 1}" for i in range(spec.k)] + [f"x{i + 1}" for i in range(spec.r)]
    if header != expected:
        raise DimensionMismatch(f"header {header} does not match the model spec; expected {expected}")
    values = np.empty((len(rows) - 1, len(expected)))
    for n, row in enumerate(rows[1:], start=2):
        if len(row) != len(expected):
            raise DimensionMismatch(f"line {n}: expected {len(expected)} fields, got {len(row)}")
        for c, cell in enumerate(row):
            cell = cell.strip()
            if cell == "" or cell.lower() in ("na", "nan"):
                raise MissingData(f"line {n}, column {expected[c]}: missing value; "
                                  "missing data is not supported, pass complete cases only")
            try:
                values[n - 2, c] = float(cell)
            except ValueError as exc:
                raise DimensionMismatch(f"line {n}: non-numeric value {cell!r}") from exc
    if not np.all(np.isfinite(values)):
        raise MissingData("non-finite values in data; missing data is not supported")
    if values.shape[0] < 2:
        raise DimensionMismatch("need at least two time points")
    return values[:, : spec.k], values[:, spec.k:]


def _write_states(path: Path, labels, states):
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh)
        w.writerow(["t"] + labels)
        for t, row in enumerate(states, start=1):
            w.writerow([t] + [repr(float(v)) for v in row])


# -- commands ----------------------------------------------------------------------


def cmd_simulate(args) -> int:
    started = datetime.now(timezone.utc).isoformat()
    doc = _load_config(args.config)
    scenario = _scenario(args, doc)
    out = _outdir(args.out)
    ds = gen_dataset(scenario, args.replication)
    stem = f"sim{scenario.condition}_T{scenario.T}_seed{ds.seed}"
    csv_path, truth_path = write_dataset(ds, out, stem, scenario)
    spec_path = out / f"{stem}.spec.json"
    save_spec(fitted_spec(scenario.simulation, scenario.subcondition), spec_path)
    resolved = {"scenario": asdict(scenario), "replication": args.replication}
    _write_manifest(out, args, started, [], [csv_path, truth_path, spec_path], resolved)
    print(csv_path)
    return EXIT_OK


def fit_dataset(y, x, spec: ModelSpec, config: TuneConfig):
    """Time-invariant start, tvp tuning, final filter and smoother pass."""
    ti = fit_time_invariant(y, x, spec, config)
    start, init = seed_tvp_start(spec, ti.pi_hat, config)
    res = tune(y, x, spec, start, config, init=init) if spec.n_tvp else ti
    run = PASSES[config.backend](y, x, res.pi_hat, spec, *init)
    return res, run, rts_smooth(run)


def cmd_fit(args) -> int:
    started = datetime.now(timezone.utc).isoformat()
    doc = _load_config(args.config)
    spec_path = args.spec or doc.get("spec")
    if spec_path is None:
        raise InvalidConfig("a model spec is required (--spec or the config's \"spec\" entry)")
    try:
        spec = load_spec(spec_path)
    except (OSError, json.JSONDecodeError) as exc:
        raise InvalidConfig(f"cannot load spec {spec_path}: {exc}") from exc
    config = _tuning(doc, TuneConfig(), args.backend)
    y, x = read_data(args.data, spec)
    out = _outdir(args.out)

    res, run, smooth = fit_dataset(y, x, spec, config)
    labels = spec.state_labels()
    outputs = [out / "params.csv", out / "filtered.csv", out / "smoothed.csv",
               out / "classification.csv", out / "fit.json"]
    with open(outputs[0], "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh)
        w.writerow(["parameter", "value"])
        for label, v in zip(spec.param_labels(), res.pi_hat.values):
            w.writerow([label, repr(float(v))])
    _write_states(outputs[1], labels, run.updated_states)
    _write_states(outputs[2], labels, smooth.states)
    verdicts = {}
    with open(outputs[3], "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh)
        w.writerow(["parameter", "verdict", "path_variance"])
        for j, label in enumerate(labels[spec.m:]):
            path = smooth.states[:, spec.m + j]
            verdicts[label] = classify_tvp(path)
            w.writerow([label, verdicts[label], repr(float(path.var(ddof=1)))])
    fit = {
        "log_likelihood": res.log_lik,
        "iterations": res.iterations,
        "converged": res.converged,
        "message": res.message,
        "tvp_noise": res.tvp_noise_estimates,
        "classification": verdicts,
        "backend": config.backend,
    }
    outputs[4].write_text(json.dumps(fit, indent=1) + "\n", encoding="utf-8")
    resolved = {"tuning": asdict(config), "spec": spec.to_dict()}
    _write_manifest(out, args, started, [args.data, spec_path], outputs, resolved)
    if not res.converged:
        print(f"warning: optimizer did not converge ({res.message})", file=sys.stderr)
        return EXIT_NONCONVERGED
    print(f"log-likelihood {res.log_lik:.6f} after {res.iterations} iterations")
    return EXIT_OK


def _threads(args, doc) -> int:
    n = args.threads if args.threads is not None else doc.get("threads", 1)
    if not isinstance(n, int) or n < 1:
        raise InvalidConfig("threads must be a positive integer")
    return n


def cmd_mc(args) -> int:
    started = datetime.now(timezone.utc).isoformat()
    doc = _load_config(args.config)
    scenario = _scenario(args, doc)
    config = _tuning(doc, MC_TUNE_CONFIG)
    backend = args.backend or doc.get("backend") or config.backend
    out = _outdir(args.out)
    report = run_condition(scenario, backend, config, threads=_threads(args, doc), progress=True)
    paths = emit_tables([report], out)
    resolved = {"scenario": asdict(scenario), "tuning": asdict(replace(config, backend=backend))}
    _write_manifest(out, args, started, [], list(paths.values()), resolved)
    print((out / "tables" / "summary.txt").read_text(encoding="utf-8"), end="")
    return EXIT_OK


def state_agreement(scenario: ScenarioConfig, result) -> float:
    """Largest state difference between the two backends at one replication's estimate."""
    spec = fitted_spec(scenario.simulation, scenario.subcondition)
    ds = gen_dataset(scenario, result.replication)
    pi = ParamVector(result.pi, spec.layout)
    init = initial_conditions(spec, result.init_state[spec.m:])
    a = PASSES["sr-sekf"](ds.y, ds.x, pi, spec, *init)
    b = PASSES["sekf"](ds.y, ds.x, pi, spec, *init)
    return float(np.abs(a.updated_states - b.updated_states).max())


def cmd_compare(args) -> int:
    started = datetime.now(timezone.utc).isoformat()
    doc = _load_config(args.config)
    scenario = _scenario(args, doc)
    config = _tuning(doc, MC_TUNE_CONFIG)
    threads = _threads(args, doc)
    out = _outdir(args.out)
    reports = [run_condition(scenario, b, config, threads=threads, progress=True)
               for b in ("sr-sekf", "sekf")]
    paths = emit_tables(reports, out)
    sr, std = reports
    diffs = [
        state_agreement(scenario, r)
        for r, s in zip(sr.results, std.results)
        if r.converged and s.converged
    ]
    comparison = out / "tables" / "comparison.csv"
    with open(comparison, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh)
        w.writerow(["measure", "sr-sekf", "sekf"])
        w.writerow(["mean_iterations", sr.mean_iterations, std.mean_iterations])
        w.writerow(["converged_pct", sr.convergence_pct, std.convergence_pct])
        for label in sr.bias:
            w.writerow([f"bias:{label}", sr.bias[label], std.bias[label]])
        for label in sr.sd:
            w.writerow([f"sd:{label}", sr.sd[label], std.sd[label]])
        w.writerow(["max_state_difference", max(diffs) if diffs else "NA", ""])
    resolved = {"scenario": asdict(scenario), "tuning": asdict(config)}
    _write_manifest(out, args, started, [], list(paths.values()) + [comparison], resolved)
    print(comparison.read_text(encoding="utf-8"), end="")
    return EXIT_OK


# -- entry point ---------------------------------------------------------------------


def _common(p: argparse.ArgumentParser, scenario=True):
    p.add_argument("--config", help="JSON config file")
    p.add_argument("--out", default=".", help="output directory")
    p.add_argument("--backend", choices=sorted(PASSES), default=None)
    if scenario:
        p.add_argument("--sim", type=int, choices=(1, 2))
        p.add_argument("--cond", choices=("A", "B", "C"))
        p.add_argument("--T", type=int)
        p.add_argument("--seed", type=int)
        p.add_argument("--onset", type=float, help="intervention onset as a fraction of T")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="tvpdfm", description=__doc__.split("\n")[0])
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("simulate", help="write one synthetic dataset")
    _common(p)
    p.add_argument("--replication", type=int, default=0)
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("fit", help="fit a model to a CSV of indicators")
    p.add_argument("data")
    p.add_argument("--spec")
    _common(p, scenario=False)
    p.set_defaults(func=cmd_fit)

    for name, func, text in (("mc", cmd_mc, "run a Monte Carlo condition"),
                             ("compare", cmd_compare, "compare the two filter backends")):
        p = sub.add_parser(name, help=text)
        _common(p)
        p.add_argument("--reps", type=int)
        p.add_argument("--threads", type=int)
        p.set_defaults(func=func)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except (InvalidConfig, InvalidScenario, InvalidSpec, LayoutMismatch) as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (MissingData, DimensionMismatch, IoFailure) as exc:
        print(f"data error: {exc}", file=sys.stderr)
        return EXIT_DATA
    except TvpDfmError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_DATA


if __name__ == "__main__":
    sys.exit(main())

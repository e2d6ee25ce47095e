"""Prediction-error maximum likelihood for the time-invariant parameters.

The filter is run at each candidate parameter vector and the negative
log-likelihood of its one-step-ahead residuals is minimized.  Variance
parameters are optimized on transformed scales so the search is unconstrained
where possible:

every variance (measurement, latent and random-walk) lives on
``log(v + 1e-12)``, so a zero random-walk variance, i.e. a constant
coefficient, is approached in the limit; coefficients are optimized directly,
with autoregressive cells kept inside the stationary box.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field, replace

import numpy as np
from scipy.optimize import minimize

from .errors import InvalidConfig, TvpDfmError
from .filtering import initial_conditions, log_likelihood
from .model import ModelSpec, ParamVector, _coerce_pi, stack_params, unstack_params

log = logging.getLogger(__name__)

PENALTY = 1e12
VAR_FLOOR = 1e-12


@dataclass(frozen=True)
class TuneConfig:
    """Optimizer settings; every field has a documented default."""

    method: str = "nelder-mead"
    ftol: float = 1e-8
    xtol: float = 1e-6
    max_iter: int = 500
    max_fev: int = None
    phi_bounds: tuple = (-0.999, 0.999)
    coef_bounds: tuple = (None, None)
    backend: str = "sr-sekf"
    init_pct: float = 0.02
    init_floor: float = 1e-6
    tvp_noise_start: float = 1e-3
    adaptive: bool = True

    def __post_init__(self):
        if self.method not in ("nelder-mead", "quasi-newton"):
            raise InvalidConfig(f"unknown optimizer {self.method!r}")
        if self.ftol <= 0 or self.xtol <= 0 or self.max_iter <= 0:
            raise InvalidConfig("tolerances and max_iter must be positive")
        if self.backend not in ("sr-sekf", "sekf"):
            raise InvalidConfig(f"unknown backend {self.backend!r}")
        lo, hi = self.phi_bounds
        if not (np.isfinite(lo) and np.isfinite(hi) and lo < hi):
            raise InvalidConfig("phi bounds must be finite with lo < hi")

    @classmethod
    def from_dict(cls, doc: dict) -> "TuneConfig":
        known = set(cls.__dataclass_fields__)
        unknown = set(doc) - known
        if unknown:
            raise InvalidConfig(f"unknown tuning options: {sorted(unknown)}")
        doc = dict(doc)
        for key in ("phi_bounds", "coef_bounds"):
            if key in doc:
                doc[key] = tuple(doc[key])
        return cls(**doc)


@dataclass
class TuneResult:
    pi_hat: ParamVector
    log_lik: float
    iterations: int
    converged: bool
    tvp_noise_estimates: dict
    evaluations: int = 0
    message: str = ""
    history: list = field(default_factory=list, repr=False)


class _Transform:
    """Maps the parameter vector to the unconstrained optimizer scale."""

    def __init__(self, spec: ModelSpec, config: TuneConfig):
        self.layout = spec.layout
        self.m = spec.m
        kinds, bounds = [], []
        for name, i, j in self.layout:
            if name in ("Xi", "Psi"):
                kinds.append("log")
                bounds.append((None, None))
            elif name == "Phi":
                kinds.append("coef")
                bounds.append(tuple(config.phi_bounds))
            else:
                kinds.append("coef")
                bounds.append(tuple(config.coef_bounds))
        self.kinds = kinds
        self.bounds = bounds

    def to_theta(self, values) -> np.ndarray:
        out = np.empty(len(values))
        for n, (kind, v) in enumerate(zip(self.kinds, values)):
            if kind == "log":
                out[n] = np.log(max(v, 0.0) + VAR_FLOOR)
            else:
                lo, hi = self.bounds[n]
                out[n] = np.clip(v, lo if lo is not None else -np.inf, hi if hi is not None else np.inf)
        return out

    def from_theta(self, theta) -> np.ndarray:
        out = np.empty(len(theta))
        for n, (kind, u) in enumerate(zip(self.kinds, theta)):
            if kind == "log":
                out[n] = max(np.exp(u) - VAR_FLOOR, 0.0)
            else:
                lo, hi = self.bounds[n]
                out[n] = np.clip(u, lo if lo is not None else -np.inf, hi if hi is not None else np.inf)
        return out


def negative_log_likelihood(pi, data, inputs, spec: ModelSpec, init, backend: str = "sr-sekf",
                            phi_bounds=(-0.999, 0.999)) -> float:
    """``-log L(pi)``; a failed or diverging pass returns ``PENALTY``.

    Dynamics coefficients outside ``phi_bounds`` count as infeasible too.
    """
    state0, sqrt0 = init
    pi = _coerce_pi(spec, pi)
    lo, hi = phi_bounds
    for (name, _, _), v in zip(pi.layout, pi.values):
        if name == "Phi" and not lo <= v <= hi:
            return PENALTY
    try:
        value = -log_likelihood(data, inputs, pi, spec, state0, sqrt0, backend=backend)
    except (TvpDfmError, np.linalg.LinAlgError, ValueError) as exc:
        log.debug("objective infeasible: %s", exc)
        return PENALTY
    if not np.isfinite(value):
        return PENALTY
    return value


def _tvp_noise(spec: ModelSpec, pi: ParamVector) -> dict:
    psi = np.diag(unstack_params(spec, pi)["Psi"])
    return {
        spec.param_label(("Psi", spec.m + j, spec.m + j)): float(psi[spec.m + j])
        for j in range(spec.n_tvp)
    }


def tune(data, inputs, spec: ModelSpec, start_pi, config: TuneConfig = None, init=None) -> TuneResult:
    """Maximize the prediction-error likelihood over the free parameters.

    ``init`` is the filter's ``(state0, sqrt_cov0)``; it is held fixed during
    the search.  When omitted, the tvp elements start at zero.
    """
    config = config or TuneConfig()
    start_pi = _coerce_pi(spec, start_pi)
    if init is None:
        init = initial_conditions(spec, np.zeros(spec.n_tvp), config.init_pct, config.init_floor)
    data = np.ascontiguousarray(data, dtype=float)
    if inputs is not None:
        inputs = np.ascontiguousarray(np.asarray(inputs, dtype=float).reshape(data.shape[0], spec.r))
    tr = _Transform(spec, config)
    layout = spec.layout

    best = {"f": np.inf, "theta": None}
    history = []
    n_eval = [0]

    def objective(theta):
        n_eval[0] += 1
        values = tr.from_theta(theta)
        f = negative_log_likelihood(ParamVector(values, layout), data, inputs, spec, init, config.backend,
                                    config.phi_bounds)
        if f < best["f"]:
            best["f"] = f
            best["theta"] = np.array(theta, copy=True)
        return f

    def record(*_args):
        history.append(best["f"])

    theta0 = tr.to_theta(start_pi.values)
    f0 = objective(theta0)
    if f0 >= PENALTY:
        raise InvalidConfig("start parameters are infeasible (filter diverged)")
    if len(theta0) == 0:
        return TuneResult(start_pi, -f0, 0, True, _tvp_noise(spec, start_pi), 1, "nothing to tune")

    fatol = config.ftol * max(1.0, abs(f0))
    if config.method == "nelder-mead":
        res = minimize(
            objective,
            theta0,
            method="Nelder-Mead",
            bounds=tr.bounds if any(b != (None, None) for b in tr.bounds) else None,
            callback=record,
            options={
                "maxiter": config.max_iter,
                "maxfev": config.max_fev or 50 * config.max_iter * max(1, len(theta0)),
                "xatol": config.xtol,
                "fatol": fatol,
                "adaptive": config.adaptive,
                "initial_simplex": _initial_simplex(theta0, tr),
            },
        )
        converged = bool(res.success)
    else:
        res = minimize(
            objective,
            theta0,
            method="L-BFGS-B",
            bounds=tr.bounds,
            callback=record,
            options={"maxiter": config.max_iter, "ftol": config.ftol, "gtol": config.xtol},
        )
        converged = bool(res.success)
    theta = best["theta"] if best["theta"] is not None else res.x
    pi_hat = ParamVector(tr.from_theta(theta), layout)
    if not converged:
        log.info("tuning stopped without convergence: %s", res.message)
    return TuneResult(
        pi_hat=pi_hat,
        log_lik=-best["f"],
        iterations=int(res.nit),
        converged=converged,
        tvp_noise_estimates=_tvp_noise(spec, pi_hat),
        evaluations=n_eval[0],
        message=str(res.message),
        history=history,
    )


def _initial_simplex(theta0, tr: _Transform) -> np.ndarray:
    n = len(theta0)
    simplex = np.tile(theta0, (n + 1, 1))
    for i, kind in enumerate(tr.kinds):
        if kind == "log":
            step = 0.5
        else:
            step = 0.1 if theta0[i] == 0 else 0.1 * max(abs(theta0[i]), 0.5)
        lo, hi = tr.bounds[i]
        if hi is not None and theta0[i] + step > hi:
            step = -step
        simplex[i + 1, i] += step
    return simplex


def default_start(spec: ModelSpec, data, inputs=None) -> ParamVector:
    """Generic starting values from the sample moments of ``data``.

    Free loadings start at the square root of half an indicator's variance,
    autoregressions at 0.5, every other coefficient at 0, measurement
    variances at half of each indicator's variance.
    """
    y = np.asarray(data, dtype=float)
    var = y.var(axis=0)
    mats = unstack_params(spec, np.zeros(len(spec.layout)))
    for name, i, j in spec.free_cells:
        if name == "Lambda":
            mats["Lambda"][i, j] = np.sqrt(0.5 * var[i])
        elif name == "Phi":
            mats["Phi"][i, j] = 0.5 if i == j else 0.0
    xi = np.diag(mats["Xi"]).copy()
    for i, c in enumerate(spec.measurement_noise):
        if c.kind == "free":
            xi[i] = 0.5 * var[i]
    psi = np.diag(mats["Psi"]).copy()
    for i, c in enumerate(spec.latent_noise):
        if c.kind == "free":
            psi[i] = 1.0
    psi[spec.m:] = np.where([c.kind == "free" for c in spec.tvp_noise], 1e-3, psi[spec.m:])
    mats["Xi"], mats["Psi"] = xi, psi
    return stack_params(spec, mats)


def fit_time_invariant(data, inputs, spec: ModelSpec, config: TuneConfig = None, start=None) -> TuneResult:
    """Tune the fully time-invariant version of ``spec`` (tvp cells demoted to free)."""
    ti = spec.demoted()
    start = start if start is not None else default_start(ti, data, inputs)
    return tune(data, inputs, ti, start, config or TuneConfig(), init=initial_conditions(ti, []))


def seed_tvp_start(spec: ModelSpec, ti_pi: ParamVector, config: TuneConfig = None):
    """Starting parameters and filter initial conditions from a time-invariant fit.

    Each tvp element starts at the time-invariant estimate of its coefficient;
    its initial variance follows the few-percent rule and its random-walk
    variance starts at ``config.tvp_noise_start``.
    """
    config = config or TuneConfig()
    ti = spec.demoted()
    ti_pi = _coerce_pi(ti, ti_pi)
    mats = unstack_params(ti, ti_pi)
    omega0 = np.array([mats[name][i, j] for name, i, j in spec.tvp_cells])
    psi = np.concatenate([np.diag(mats["Psi"]), np.array([
        c.value if c.kind == "fixed" else config.tvp_noise_start for c in spec.tvp_noise
    ])])
    mats["Psi"] = psi
    mats["Xi"] = np.diag(mats["Xi"])
    start = stack_params(spec, mats)
    init = initial_conditions(spec, omega0, config.init_pct, config.init_floor)
    return start, init


def classify_tvp(path, threshold: float = 1e-10) -> str:
    """``"time-invariant"`` when the smoothed path has (numerically) zero variance."""
    from .errors import PathTooShort

    values = np.asarray(getattr(path, "values", path), dtype=float).ravel()
    if values.size < 2:
        raise PathTooShort("need at least two points to classify a path")
    return "time-invariant" if values.var(ddof=1) < threshold else "time-varying"

"""Synthetic data for the two Monte Carlo designs.

Both designs use a bivariate latent VAR(1) measured by six indicators (three
per factor, unit loadings, measurement variance 0.2) and a single binary
intervention input that switches on after 2/11 of the series.

* Simulation 1: the cross-regressive coefficients ``Phi[1,2]`` and
  ``Phi[2,1]`` drift in (-0.3, 0.3); the treatment effects are constant 0.5.
* Simulation 2: the treatment effects ``Gamma[1,1]`` and ``Gamma[2,1]`` drift
  in (-0.5, 0.5); the cross-regressive coefficients are -0.2 and -0.3.

Drifting coefficients are random walks smoothed by local linear regression
and min-max scaled onto their range.
"""

from __future__ import annotations

import csv
import json
import math
from dataclasses import asdict, dataclass
from pathlib import Path

import numpy as np

from .errors import InvalidScenario, SeriesTooShort
from .model import FREE, TVP, ModelSpec, cell_label, fixed

LOADINGS = np.array([[1.0, 0.0]] * 3 + [[0.0, 1.0]] * 3)
MEASUREMENT_VAR = 0.2
AR = (0.7, 0.5)
GAMMA = (0.5, 0.5)
CROSS = (-0.2, -0.3)
LATENT_VAR = 1.0

SIM1_RANGE = (-0.3, 0.3)
SIM2_RANGE = (-0.5, 0.5)

PHI12 = ("Phi", 0, 1)
PHI21 = ("Phi", 1, 0)
PHI11 = ("Phi", 0, 0)
PHI22 = ("Phi", 1, 1)
GAMMA1 = ("Gamma", 0, 0)
GAMMA2 = ("Gamma", 1, 0)

# cells estimated as time-varying, by (simulation, sub-condition)
FITTED_TVP = {
    (1, "A"): (PHI12, PHI21),
    (1, "B"): (PHI12, PHI21, PHI11, PHI22),
    (1, "C"): (PHI12, PHI21, PHI11, PHI22, GAMMA1, GAMMA2),
    (2, "A"): (GAMMA1, GAMMA2),
    (2, "B"): (GAMMA1, GAMMA2, PHI12, PHI21),
    (2, "C"): (GAMMA1, GAMMA2, PHI12, PHI21, PHI11, PHI22),
}

GENERATED_TVP = {1: (PHI12, PHI21), 2: (GAMMA1, GAMMA2)}


def loess_smooth(series, span: float = 0.5) -> np.ndarray:
    """Local linear regression on an equally spaced index.

    Each point is fitted from its ``ceil(span * n)`` nearest neighbours with
    tricube weights scaled by the distance to the farthest of them.
    """
    y = np.asarray(series, dtype=float).ravel()
    n = y.size
    if n < 4:
        raise SeriesTooShort(f"need at least 4 points, got {n}")
    if not 0.0 < span <= 1.0:
        raise ValueError(f"span must lie in (0, 1], got {span}")
    q = min(n, max(3, math.ceil(span * n)))
    t = np.arange(n, dtype=float)
    out = np.empty(n)
    for i in range(n):
        dist = np.abs(t - t[i])
        idx = np.argsort(dist, kind="stable")[:q]
        h = dist[idx].max()
        w = (1.0 - (dist[idx] / h) ** 3) ** 3
        w /= w.sum()
        tx = t[idx] - t[i]
        mx, my = w @ tx, w @ y[idx]
        sxx = w @ (tx - mx) ** 2
        sxy = w @ ((tx - mx) * (y[idx] - my))
        out[i] = my - mx * (sxy / sxx)
    return out


@dataclass
class TvpPath:
    values: np.ndarray
    cell: tuple = None
    kind: str = "ground-truth"

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=float)
        if not np.all(np.isfinite(self.values)):
            raise ValueError("path values must be finite")
        if self.kind not in ("ground-truth", "filtered", "smoothed"):
            raise ValueError(f"unknown path kind {self.kind!r}")

    def __len__(self):
        return self.values.size


def gen_tvp_path(T: int, value_range, span: float, rng, cell=None) -> TvpPath:
    lo, hi = value_range
    if not lo < hi:
        raise ValueError("range must satisfy lo < hi")
    walk = np.cumsum(rng.standard_normal(T))
    smooth = loess_smooth(walk, span)
    spread = smooth.max() - smooth.min()
    if spread == 0.0:
        scaled = np.full(T, 0.5 * (lo + hi))
    else:
        scaled = lo + (hi - lo) * (smooth - smooth.min()) / spread
        scaled = np.clip(scaled, lo, hi)
    return TvpPath(scaled, cell, "ground-truth")


def intervention_indicator(T: int, onset_fraction: float = 2 / 11) -> np.ndarray:
    """Zero for the first ``floor(onset_fraction * T)`` points, one afterwards."""
    if not 0.0 < onset_fraction < 1.0:
        raise ValueError("onset fraction must lie in (0, 1)")
    onset = max(1, math.floor(onset_fraction * T + 1e-9))
    x = np.ones(T)
    x[:onset] = 0.0
    return x


@dataclass(frozen=True)
class ScenarioConfig:
    simulation: int = 1
    subcondition: str = "A"
    T: int = 200
    replications: int = 100
    seed: int = 0
    onset_fraction: float = 2 / 11
    burn_in: int = 1000
    span: float = 0.5
    latent_var: float = LATENT_VAR
    measurement_var: float = MEASUREMENT_VAR
    shared_paths: bool = True

    def __post_init__(self):
        if self.simulation not in (1, 2):
            raise InvalidScenario(f"simulation must be 1 or 2, got {self.simulation}")
        if self.subcondition not in ("A", "B", "C"):
            raise InvalidScenario(f"sub-condition must be A, B or C, got {self.subcondition!r}")
        if self.T < 2:
            raise InvalidScenario("T must be at least 2")
        if not 0.0 < self.onset_fraction < 1.0:
            raise InvalidScenario("onset fraction must lie in (0, 1)")
        if self.burn_in < 0 or self.replications < 0:
            raise InvalidScenario("burn-in and replications must be nonnegative")
        if self.latent_var < 0 or self.measurement_var < 0:
            raise InvalidScenario("variances must be nonnegative")

    @property
    def condition(self) -> str:
        return f"{self.simulation}{self.subcondition}"

    def replication_seed(self, replication: int) -> int:
        return self.seed + replication


@dataclass
class Dataset:
    y: np.ndarray
    x: np.ndarray
    paths: dict
    truth: dict
    eta: np.ndarray
    seed: int = 0

    def true_value(self, cell):
        """Generating value of a coefficient: a float, or an array if it drifts."""
        cell = tuple(cell)
        if cell in self.paths:
            return self.paths[cell].values
        return self.truth[cell]


def generating_truth(simulation: int, measurement_var=MEASUREMENT_VAR, latent_var=LATENT_VAR) -> dict:
    """Constant generating values keyed by ``(matrix, row, col)``."""
    truth = {}
    for i in range(6):
        c = 0 if i < 3 else 1
        truth[("Lambda", i, c)] = 1.0
        truth[("Xi", i, i)] = measurement_var
    truth[PHI11], truth[PHI22] = AR
    truth[("Psi", 0, 0)] = latent_var
    truth[("Psi", 1, 1)] = latent_var
    if simulation == 1:
        truth[GAMMA1], truth[GAMMA2] = GAMMA
    else:
        truth[PHI12], truth[PHI21] = CROSS
    return truth


def gen_dataset(scenario: ScenarioConfig, replication: int = 0) -> Dataset:
    """Simulate one replication; deterministic in ``scenario.seed + replication``.

    With ``shared_paths`` (the default) the drifting coefficients are drawn
    from the base seed alone, so all replications share one true trajectory
    and differ only in their shocks and measurement errors.
    """
    seed = scenario.replication_seed(replication)
    rng = np.random.default_rng([seed, 1])
    # shared paths: every replication of a condition drifts along the same truth
    path_rng = np.random.default_rng([scenario.seed if scenario.shared_paths else seed, 0])
    T, m, k = scenario.T, 2, LOADINGS.shape[0]
    truth = generating_truth(scenario.simulation, scenario.measurement_var, scenario.latent_var)
    value_range = SIM1_RANGE if scenario.simulation == 1 else SIM2_RANGE
    paths = {
        cell: gen_tvp_path(T, value_range, scenario.span, path_rng, cell)
        for cell in GENERATED_TVP[scenario.simulation]
    }
    phi = np.zeros((T, m, m))
    gam = np.zeros((T, m, 1))
    for t_cell, store in (("Phi", phi), ("Gamma", gam)):
        for (name, i, j), v in truth.items():
            if name == t_cell:
                store[:, i, j] = v
    for (name, i, j), path in paths.items():
        (phi if name == "Phi" else gam)[:, i, j] = path.values
    x = intervention_indicator(T, scenario.onset_fraction)

    sd_latent = math.sqrt(scenario.latent_var)
    sd_meas = math.sqrt(scenario.measurement_var)
    shocks = rng.standard_normal((scenario.burn_in + T, m)) * sd_latent
    errors = rng.standard_normal((T, k)) * sd_meas
    eta = np.zeros(m)
    # burn-in holds every coefficient at its first retained value, input off
    for b in range(scenario.burn_in):
        eta = phi[0] @ eta + shocks[b]
    etas = np.empty((T, m))
    for t in range(T):
        eta = phi[t] @ eta + gam[t, :, 0] * x[t] + shocks[scenario.burn_in + t]
        etas[t] = eta
    y = etas @ LOADINGS.T + errors
    return Dataset(y=y, x=x[:, None], paths=paths, truth=truth, eta=etas, seed=seed)


def fitted_spec(simulation: int, subcondition: str) -> ModelSpec:
    """Model estimated in a sub-condition: free loadings, unit latent variances."""
    try:
        tvp = set(FITTED_TVP[(simulation, subcondition)])
    except KeyError as exc:
        raise InvalidScenario(f"unknown condition {simulation}{subcondition}") from exc
    zero = fixed(0.0)
    loading = [[FREE, zero]] * 3 + [[zero, FREE]] * 3
    phi = [[TVP if ("Phi", i, j) in tvp else FREE for j in range(2)] for i in range(2)]
    gamma = [[TVP if ("Gamma", i, 0) in tvp else FREE] for i in range(2)]
    return ModelSpec(
        k=6,
        m=2,
        r=1,
        loading_pattern=loading,
        phi_pattern=phi,
        gamma_pattern=gamma,
        latent_noise=[fixed(LATENT_VAR)] * 2,
    )


def write_dataset(ds: Dataset, directory, stem: str = "data", scenario: ScenarioConfig = None):
    """Write ``<stem>.csv`` (y1..yk, x1..xr) and ``<stem>.truth.json``."""
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    csv_path = directory / f"{stem}.csv"
    k, r = ds.y.shape[1], ds.x.shape[1]
    with open(csv_path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh)
        w.writerow([f"y{i + 1}" for i in range(k)] + [f"x{i + 1}" for i in range(r)])
        for yt, xt in zip(ds.y, ds.x):
            w.writerow([repr(float(v)) for v in yt] + [repr(float(v)) for v in xt])
    sidecar = {
        "seed": ds.seed,
        "scenario": asdict(scenario) if scenario is not None else None,
        "constants": {cell_label(c) if c[0] not in ("Xi", "Psi") else f"{c[0]}[{c[1] + 1}]": v
                      for c, v in ds.truth.items()},
        "paths": {cell_label(c): p.values.tolist() for c, p in ds.paths.items()},
        "eta": ds.eta.tolist(),
    }
    truth_path = directory / f"{stem}.truth.json"
    truth_path.write_text(json.dumps(sidecar, indent=1) + "\n", encoding="utf-8")
    return csv_path, truth_path

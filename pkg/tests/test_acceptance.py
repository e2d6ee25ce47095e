"""Acceptance suite: one PASS/FAIL line per criterion.

Criteria 5 to 7 run full Monte Carlo conditions (about an hour on one core)
and are marked ``slow``; deselect them with ``-m "not slow"``.
"""

import time

import numpy as np
import pytest

from conftest import ACCEPTANCE_LINES, random_linear_model, random_tvp_model, simulate_linear
from oracles import central_hessian, central_jacobian, linear_kf, linear_rts
from tvpdfm.filtering import filter_pass, predict_measurement, predict_state, rts_smooth, sekf_filter_pass
from tvpdfm.model import (
    Cell,
    ModelSpec,
    ParamVector,
    eval_f,
    eval_h,
    hessian_f,
    hessian_h,
    jacobian_f,
    jacobian_h,
    stack_params,
)
from tvpdfm.montecarlo import MC_TUNE_CONFIG, run_condition, run_replication
from tvpdfm.simulate import ScenarioConfig, fitted_spec

SEED = 20240
_MC = {}


def record(number, ok, detail):
    line = f"criterion {number}: {'PASS' if ok else 'FAIL'}  {detail}"
    ACCEPTANCE_LINES.append(line)
    print(line)
    assert ok, line


def _rel(a, b):
    return float(np.abs(np.asarray(a) - np.asarray(b)).max() / max(1.0, np.abs(b).max()))


def mc(cond, backend="sr-sekf", reps=100):
    key = (cond, backend, reps)
    if key not in _MC:
        t0 = time.perf_counter()
        sc = ScenarioConfig(1, cond, T=200, replications=reps, seed=SEED)
        _MC[key] = (run_condition(sc, backend, MC_TUNE_CONFIG), time.perf_counter() - t0)
    return _MC[key]


def test_criterion_1_linear_oracle():
    rng = np.random.default_rng(SEED)
    t0 = time.perf_counter()
    worst_ll = worst_state = worst_smooth = 0.0
    for _ in range(50):
        spec, pi, mats = random_linear_model(rng)
        y, x = simulate_linear(rng, mats, 100, spec.r)
        s0 = rng.normal(size=spec.m)
        l0 = np.linalg.cholesky(2.0 * np.eye(spec.m) + 0.3)
        run = filter_pass(y, x, pi, spec, s0, l0)
        ref = linear_kf(y, x, mats["lam"], mats["phi"], mats["gam"], mats["xi"], mats["psi"], s0, l0 @ l0.T)
        worst_ll = max(worst_ll, abs(run.log_likelihood - ref["loglik"]) / abs(ref["loglik"]))
        worst_state = max(worst_state, _rel(run.updated_states, ref["filt_a"]))
        sm = rts_smooth(run)
        sa, sp = linear_rts(ref, mats["phi"])
        worst_smooth = max(worst_smooth, _rel(sm.states, sa), _rel(sm.covs, sp))
    elapsed = time.perf_counter() - t0
    ok = max(worst_ll, worst_state, worst_smooth) <= 1e-10 and elapsed < 60
    record(1, ok, f"loglik {worst_ll:.1e}, states {worst_state:.1e}, smoother {worst_smooth:.1e} "
                  f"(tol 1e-10), {elapsed:.1f}s (limit 60s)")


def test_criterion_2_square_root_agreement():
    rng = np.random.default_rng(SEED)
    t0 = time.perf_counter()
    worst_state = worst_ll = 0.0
    for _ in range(100):
        spec, pi, y, x, init = random_tvp_model(rng, n_t=100)
        a = filter_pass(y, x, pi, spec, *init)
        b = sekf_filter_pass(y, x, pi, spec, *init)
        worst_state = max(worst_state, _rel(a.updated_states, b.updated_states))
        worst_ll = max(worst_ll, abs(a.log_likelihood - b.log_likelihood) / abs(b.log_likelihood))
    elapsed = time.perf_counter() - t0
    ok = worst_state <= 1e-8 and worst_ll <= 1e-8 and elapsed < 300
    record(2, ok, f"states {worst_state:.1e}, loglik {worst_ll:.1e} (tol 1e-8), {elapsed:.1f}s (limit 300s)")


def test_criterion_3_derivatives():
    rng = np.random.default_rng(SEED)
    spec = fitted_spec(1, "C").with_cells("Lambda", [(0, 0), (4, 1)], Cell("tvp"))
    pi = ParamVector(rng.uniform(0.1, 0.6, len(spec.layout)), spec.layout)
    x = np.array([1.0])
    worst_j = worst_h = 0.0
    for _ in range(100):
        s = rng.normal(size=spec.m_star)
        worst_j = max(
            worst_j,
            _rel(jacobian_f(s, x, pi, spec), central_jacobian(lambda z: eval_f(z, x, pi, spec), s)),
            _rel(jacobian_h(s, pi, spec), central_jacobian(lambda z: eval_h(z, pi, spec), s)),
        )
        for i in range(spec.m_star):
            fd = central_hessian(lambda z: eval_f(z, x, pi, spec)[i], s)
            worst_h = max(worst_h, _rel(hessian_f(s, x, pi, spec, i), fd))
        for i in range(spec.k):
            fd = central_hessian(lambda z: eval_h(z, pi, spec)[i], s)
            worst_h = max(worst_h, _rel(hessian_h(s, pi, spec, i), fd))
    ok = worst_j <= 1e-6 and worst_h <= 1e-5
    record(3, ok, f"Jacobians {worst_j:.1e} (tol 1e-6), Hessians {worst_h:.1e} (tol 1e-5)")


def test_criterion_4_second_order_corrections():
    mean = np.array([0.8, 0.4])
    cov = np.array([[1.0, 0.3], [0.3, 0.2]])
    lower = np.linalg.cholesky(cov)
    draws = np.random.default_rng(SEED).multivariate_normal(mean, cov, size=1_000_000)
    product = draws[:, 0] * draws[:, 1]
    se = product.std() / np.sqrt(product.size)

    transition = ModelSpec(k=1, m=1, r=0, loading_pattern=[["fixed:1"]], phi_pattern=[["tvp"]],
                           gamma_pattern=[[]], measurement_noise=["fixed:0.5"], tvp_noise=["fixed:0.01"])
    pred, _ = predict_state(mean, lower, None, stack_params(transition, {}), transition)
    z_f = abs(pred[0] - product.mean()) / se

    measurement = ModelSpec(k=1, m=1, r=0, loading_pattern=[["tvp"]], phi_pattern=[["fixed:0.6"]],
                            gamma_pattern=[[]], measurement_noise=["fixed:0.5"], tvp_noise=["fixed:0.01"])
    y_hat, _, _ = predict_measurement(mean, lower, stack_params(measurement, {}), measurement)
    z_h = abs(y_hat[0] - product.mean()) / se
    ok = z_f < 3 and z_h < 3
    record(4, ok, f"transition {z_f:.2f} SE, measurement {z_h:.2f} SE (limit 3 SE, 1e6 draws)")


@pytest.mark.slow
def test_criterion_5_bias_1a():
    report, elapsed = mc("A")
    loadings = {k: v for k, v in report.bias.items() if k.startswith(("Lambda", "Xi"))}
    worst = max(abs(v) for v in loadings.values())
    phis = [report.bias["Phi[1,1]"], report.bias["Phi[2,2]"]]
    ok = worst <= 4.0 and all(-6.0 <= b <= 4.0 for b in phis)
    record(5, ok, f"max |bias| Lambda/Xi {worst:.2f}% (limit 4%), Phi11 {phis[0]:.2f}% Phi22 {phis[1]:.2f}% "
                  f"(band -1 +/- 5), {report.convergence_pct:.0f}% converged, {elapsed / 60:.1f} min")


@pytest.mark.slow
def test_criterion_6_classification():
    a, _ = mc("A")
    b, _ = mc("B")
    detect = [a.classification["Phi[1,2]"], a.classification["Phi[2,1]"]]
    ti = [b.classification["Phi[1,1]"], b.classification["Phi[2,2]"]]
    ok_a = all(d is not None and d >= 100.0 for d in detect)
    ok_b = ti[0] is not None and ti[1] is not None and abs(ti[0] - 86) <= 10 and abs(ti[1] - 81) <= 10
    record(6, ok_a and ok_b,
           f"1A true-tvp detected Phi12 {detect[0]}% Phi21 {detect[1]}% (need 100%); "
           f"1B time-invariant Phi11 {ti[0]}% (86 +/- 10) Phi22 {ti[1]}% (81 +/- 10)")


@pytest.mark.slow
def test_criterion_7_backend_ordering():
    sr, _ = mc("A")
    std, _ = mc("A", "sekf", reps=50)
    sr50 = sr.results[:50]
    sr_conv = 100.0 * np.mean([r.converged for r in sr50])
    sr_iter = float(np.mean([r.iterations for r in sr50]))
    ok = sr_conv >= std.convergence_pct and sr_iter <= std.mean_iterations
    record(7, ok, f"converged SR {sr_conv:.0f}% vs standard {std.convergence_pct:.0f}%, "
                  f"mean iterations SR {sr_iter:.1f} vs standard {std.mean_iterations:.1f} (50 shared seeds)")


def test_criterion_8_property_suite():
    import subprocess
    import sys
    from pathlib import Path

    here = Path(__file__).parent
    proc = subprocess.run([sys.executable, "-m", "pytest", "-q", "-p", "no:cacheprovider",
                           str(here / "test_properties.py")], capture_output=True, text=True, cwd=here.parent)
    summary = proc.stdout.strip().splitlines()[-1] if proc.stdout.strip() else proc.stderr[-200:]
    record(8, proc.returncode == 0, f"property suite: {summary}")


@pytest.mark.slow
def test_criterion_9_figure_tracking():
    sc = ScenarioConfig(1, "C", T=500, replications=1, seed=SEED)
    res = run_replication(sc, 0, "sr-sekf", MC_TUNE_CONFIG)
    r12, r21 = res.tvp_rmse.get("Phi[1,2]", np.inf), res.tvp_rmse.get("Phi[2,1]", np.inf)
    ok = res.error is None and r12 <= 0.10 and r21 <= 0.10
    record(9, ok, f"1C T=500 seed {SEED}: smoothed RMSE Phi12 {r12:.3f} Phi21 {r21:.3f} (limit 0.10)"
                  + (f", error {res.error}" if res.error else ""))

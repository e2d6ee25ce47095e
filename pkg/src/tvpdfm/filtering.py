"""Second-order extended Kalman filtering of the augmented state.

Two forward passes are provided.  :func:`filter_pass` propagates lower
triangular square roots of the state covariance through QR triangularization;
:func:`sekf_filter_pass` propagates the full covariance matrix.  Both include
the Hessian corrections of a second-order filter in the predicted state, the
predicted covariance, the predicted measurement and its covariance, so on
well-conditioned problems they agree to rounding error.

:func:`rts_smooth` runs the fixed-interval Rauch-Tung-Striebel recursion over
the stored output of either pass.
"""

from __future__ import annotations

import logging
import warnings
from dataclasses import dataclass

import numpy as np
from numba import njit
from scipy.linalg import LinAlgError, cho_factor, cho_solve

from .errors import (
    CovarianceNotPSD,
    DimensionMismatch,
    IndefiniteLinearizationMatrix,
    IndefiniteResidualCov,
    NonFiniteLikelihood,
    NonFiniteState,
    SingularDelta,
)
from .linalg import DELTA_TOL, OK, SqrtFactor, _block_qr_update, _psd_sqrt, _triangularize
from .model import ModelSpec, System, _f, _h, _jac_f, _jac_h, assemble

log = logging.getLogger(__name__)

LOG_2PI = np.log(2.0 * np.pi)
MAX_LOGDET = 1e3
MAX_RESIDUAL = 1e6

# kernel status codes
NONFINITE_STATE = 3
INDEFINITE_LINEARIZATION = 4
INDEFINITE_RESIDUAL = 5
NONFINITE_LIKELIHOOD = 6
COV_NOT_PSD = 7

_ERRORS = {
    NONFINITE_STATE: NonFiniteState,
    INDEFINITE_LINEARIZATION: IndefiniteLinearizationMatrix,
    INDEFINITE_RESIDUAL: IndefiniteResidualCov,
    NONFINITE_LIKELIHOOD: NonFiniteLikelihood,
    COV_NOT_PSD: CovarianceNotPSD,
}


def _raise_status(status: int, t: int):
    raise _ERRORS[status](f"filter failed at t={t + 1} (status {status})")


# -- compiled kernels -------------------------------------------------------


@njit(cache=True)
def _active(hess):
    out = np.zeros(hess.shape[0], dtype=np.bool_)
    for i in range(hess.shape[0]):
        out[i] = np.any(hess[i] != 0.0)
    return out


@njit(cache=True)
def _sqrt_trace_terms(sqrt_cov, hess, active):
    # 1/2 tr(L' H_i L) and 1/2 tr(L' H_i L L' H_j L) using the factor only
    n_out = hess.shape[0]
    n = sqrt_cov.shape[0]
    mean = np.zeros(n_out)
    cov = np.zeros((n_out, n_out))
    blocks = np.zeros((n_out, n, n))
    for i in range(n_out):
        if active[i]:
            b = sqrt_cov.T @ hess[i] @ sqrt_cov
            blocks[i] = b
            mean[i] = 0.5 * np.trace(b)
    for i in range(n_out):
        if not active[i]:
            continue
        for j in range(i + 1):
            if active[j]:
                v = 0.5 * np.sum(blocks[i] * blocks[j])
                cov[i, j] = v
                cov[j, i] = v
    return mean, cov


@njit(cache=True)
def _full_trace_terms(cov_mat, hess, active):
    # 1/2 tr(H_i P) and 1/2 tr(H_i P H_j P) from the full covariance
    n_out = hess.shape[0]
    n = cov_mat.shape[0]
    mean = np.zeros(n_out)
    cov = np.zeros((n_out, n_out))
    prods = np.zeros((n_out, n, n))
    for i in range(n_out):
        if active[i]:
            a = hess[i] @ cov_mat
            prods[i] = a
            mean[i] = 0.5 * np.trace(a)
    for i in range(n_out):
        if not active[i]:
            continue
        for j in range(i + 1):
            if active[j]:
                v = 0.5 * np.sum(prods[i] * prods[j].T)
                cov[i, j] = v
                cov[j, i] = v
    return mean, cov


@njit(cache=True)
def _sr_predict(state, sqrt_cov, x, lam, phi, gam, kind, row, col, m, hess_f, act_f, psi):
    n = state.size
    corr, lin_cov = _sqrt_trace_terms(sqrt_cov, hess_f, act_f)
    pred = _f(state, x, lam, phi, gam, kind, row, col, m) + corr
    jac = _jac_f(state, x, lam, phi, gam, kind, row, col, m)
    for i in range(n):
        lin_cov[i, i] += psi[i]
    sqrt_lin, status = _psd_sqrt(lin_cov)
    stacked = np.empty((2 * n, n))
    stacked[:n] = (jac @ sqrt_cov).T
    stacked[n:] = sqrt_lin.T
    pred_sqrt = _triangularize(stacked).T.copy()
    return pred, pred_sqrt, jac, corr, status


@njit(cache=True)
def _sr_measure(pred, pred_sqrt, lam, phi, gam, kind, row, col, m, hess_h, act_h, xi):
    corr, lin_cov = _sqrt_trace_terms(pred_sqrt, hess_h, act_h)
    y_hat = _h(pred, lam, phi, gam, kind, row, col, m) + corr
    jac_h = _jac_h(pred, lam, phi, gam, kind, row, col, m)
    for i in range(xi.size):
        lin_cov[i, i] += xi[i]
    return y_hat, jac_h, lin_cov


@njit(cache=True)
def _forward_sub(lower, b):
    n = b.size
    out = np.zeros(n)
    for i in range(n):
        s = b[i]
        for j in range(i):
            s -= lower[i, j] * out[j]
        out[i] = s / lower[i, i]
    return out


@njit(cache=True)
def _sr_update(pred, pred_sqrt, y, y_hat, noise_cov, jac_h):
    k = y.size
    noise_sqrt, status = _psd_sqrt(noise_cov)
    delta, upsilon, upd_sqrt = _block_qr_update(
        noise_sqrt.T.copy(), (pred_sqrt.T @ jac_h.T).copy(), pred_sqrt.T.copy()
    )
    for i in range(k):
        if abs(delta[i, i]) < DELTA_TOL:
            status = INDEFINITE_RESIDUAL
    resid = y - y_hat
    gain_t = np.zeros(upsilon.shape)
    if status == OK:
        # W' = Delta^{-1} Upsilon, back substitution on the upper triangle
        for c in range(upsilon.shape[1]):
            for i in range(k - 1, -1, -1):
                s = upsilon[i, c]
                for j in range(i + 1, k):
                    s -= delta[i, j] * gain_t[j, c]
                gain_t[i, c] = s / delta[i, i]
    gain = gain_t.T.copy()
    upd = pred + gain @ resid
    return upd, upd_sqrt, gain, resid, delta, status


@njit(cache=True)
def _gauss_loglik(resid, chol_s):
    # chol_s lower with S = chol_s chol_s'
    z = _forward_sub(chol_s, resid)
    logdet = 0.0
    for i in range(resid.size):
        logdet += 2.0 * np.log(abs(chol_s[i, i]))
    return -0.5 * (resid.size * LOG_2PI + logdet + z @ z), logdet


@njit(cache=True)
def _sr_pass(y, xs, lam, phi, gam, kind, row, col, m, hess_f, hess_h, psi, xi, s0, l0):
    n_t, k = y.shape
    n = s0.size
    act_f = _active(hess_f)
    act_h = _active(hess_h)
    pred_states = np.zeros((n_t, n))
    pred_sqrt = np.zeros((n_t, n, n))
    upd_states = np.zeros((n_t, n))
    upd_sqrt = np.zeros((n_t, n, n))
    resids = np.zeros((n_t, k))
    s_covs = np.zeros((n_t, k, k))
    gains = np.zeros((n_t, n, k))
    jacs = np.zeros((n_t, n, n))
    terms = np.zeros(n_t)
    state = s0.copy()
    sqrt_cov = l0.copy()
    for t in range(n_t):
        pred, psqrt, jac, _, status = _sr_predict(
            state, sqrt_cov, xs[t], lam, phi, gam, kind, row, col, m, hess_f, act_f, psi
        )
        if status != OK:
            return pred_states, pred_sqrt, upd_states, upd_sqrt, resids, s_covs, gains, jacs, terms, INDEFINITE_LINEARIZATION, t
        if not np.all(np.isfinite(pred)) or not np.all(np.isfinite(psqrt)):
            return pred_states, pred_sqrt, upd_states, upd_sqrt, resids, s_covs, gains, jacs, terms, NONFINITE_STATE, t
        y_hat, jac_h, noise_cov = _sr_measure(
            pred, psqrt, lam, phi, gam, kind, row, col, m, hess_h, act_h, xi
        )
        upd, usqrt, gain, resid, delta, status = _sr_update(pred, psqrt, y[t], y_hat, noise_cov, jac_h)
        if status != OK:
            return pred_states, pred_sqrt, upd_states, upd_sqrt, resids, s_covs, gains, jacs, terms, INDEFINITE_RESIDUAL, t
        ll, logdet = _gauss_loglik(resid, delta.T.copy())
        if not np.isfinite(ll) or logdet > MAX_LOGDET or np.max(np.abs(resid)) > MAX_RESIDUAL:
            return pred_states, pred_sqrt, upd_states, upd_sqrt, resids, s_covs, gains, jacs, terms, NONFINITE_LIKELIHOOD, t
        pred_states[t] = pred
        pred_sqrt[t] = psqrt
        upd_states[t] = upd
        upd_sqrt[t] = usqrt
        resids[t] = resid
        s_covs[t] = delta.T @ delta
        gains[t] = gain
        jacs[t] = jac
        terms[t] = ll
        state = upd
        sqrt_cov = usqrt
    return pred_states, pred_sqrt, upd_states, upd_sqrt, resids, s_covs, gains, jacs, terms, OK, n_t


@njit(cache=True)
def _sekf_pass(y, xs, lam, phi, gam, kind, row, col, m, hess_f, hess_h, psi, xi, s0, p0):
    n_t, k = y.shape
    n = s0.size
    act_f = _active(hess_f)
    act_h = _active(hess_h)
    pred_states = np.zeros((n_t, n))
    pred_covs = np.zeros((n_t, n, n))
    upd_states = np.zeros((n_t, n))
    upd_covs = np.zeros((n_t, n, n))
    resids = np.zeros((n_t, k))
    s_covs = np.zeros((n_t, k, k))
    gains = np.zeros((n_t, n, k))
    jacs = np.zeros((n_t, n, n))
    terms = np.zeros(n_t)
    state = s0.copy()
    cov = p0.copy()
    for t in range(n_t):
        corr, lin_cov = _full_trace_terms(cov, hess_f, act_f)
        pred = _f(state, xs[t], lam, phi, gam, kind, row, col, m) + corr
        jac = _jac_f(state, xs[t], lam, phi, gam, kind, row, col, m)
        pcov = jac @ cov @ jac.T + lin_cov
        for i in range(n):
            pcov[i, i] += psi[i]
        pcov = 0.5 * (pcov + pcov.T)
        if not np.all(np.isfinite(pred)) or not np.all(np.isfinite(pcov)):
            return pred_states, pred_covs, upd_states, upd_covs, resids, s_covs, gains, jacs, terms, NONFINITE_STATE, t
        corr_h, lin_h = _full_trace_terms(pcov, hess_h, act_h)
        y_hat = _h(pred, lam, phi, gam, kind, row, col, m) + corr_h
        jac_h = _jac_h(pred, lam, phi, gam, kind, row, col, m)
        s = jac_h @ pcov @ jac_h.T + lin_h
        for i in range(k):
            s[i, i] += xi[i]
        s = 0.5 * (s + s.T)
        chol_s = np.zeros((k, k))
        ok = True
        for j in range(k):
            d = s[j, j]
            for c in range(j):
                d -= chol_s[j, c] * chol_s[j, c]
            if d <= 0.0:
                ok = False
                break
            chol_s[j, j] = np.sqrt(d)
            for i in range(j + 1, k):
                v = s[i, j]
                for c in range(j):
                    v -= chol_s[i, c] * chol_s[j, c]
                chol_s[i, j] = v / chol_s[j, j]
        if not ok:
            return pred_states, pred_covs, upd_states, upd_covs, resids, s_covs, gains, jacs, terms, INDEFINITE_RESIDUAL, t
        resid = y[t] - y_hat
        ll, logdet = _gauss_loglik(resid, chol_s)
        if not np.isfinite(ll) or logdet > MAX_LOGDET or np.max(np.abs(resid)) > MAX_RESIDUAL:
            return pred_states, pred_covs, upd_states, upd_covs, resids, s_covs, gains, jacs, terms, NONFINITE_LIKELIHOOD, t
        gain = np.linalg.solve(s, jac_h @ pcov).T
        ucov = pcov - gain @ s @ gain.T
        ucov = 0.5 * (ucov + ucov.T)
        for i in range(n):
            if ucov[i, i] < -1e-12 * (1.0 + pcov[i, i]):
                return pred_states, pred_covs, upd_states, upd_covs, resids, s_covs, gains, jacs, terms, COV_NOT_PSD, t
        upd = pred + gain @ resid
        pred_states[t] = pred
        pred_covs[t] = pcov
        upd_states[t] = upd
        upd_covs[t] = ucov
        resids[t] = resid
        s_covs[t] = s
        gains[t] = gain
        jacs[t] = jac
        terms[t] = ll
        state = upd
        cov = ucov
    return pred_states, pred_covs, upd_states, upd_covs, resids, s_covs, gains, jacs, terms, OK, n_t


# -- result containers ------------------------------------------------------


@dataclass(frozen=True)
class FilterStep:
    predicted_state: np.ndarray
    predicted_sqrt_cov: SqrtFactor
    updated_state: np.ndarray
    updated_sqrt_cov: SqrtFactor
    residual: np.ndarray
    residual_cov: np.ndarray
    gain: np.ndarray


@dataclass
class FilterRun:
    """Per-step output of a forward pass; index ``t`` holds time ``t + 1``.

    ``jacobians[t]`` is the transition Jacobian used to predict step ``t``
    (evaluated at the previous update), which the smoother needs.
    """

    predicted_states: np.ndarray
    predicted_covs: np.ndarray
    updated_states: np.ndarray
    updated_covs: np.ndarray
    residuals: np.ndarray
    residual_covs: np.ndarray
    gains: np.ndarray
    jacobians: np.ndarray
    loglik_terms: np.ndarray
    log_likelihood: float
    init_state: np.ndarray
    init_sqrt_cov: np.ndarray
    predicted_sqrt_covs: np.ndarray = None
    updated_sqrt_covs: np.ndarray = None
    backend: str = "sr-sekf"

    def __len__(self):
        return self.updated_states.shape[0]

    def step(self, t: int) -> FilterStep:
        def factor(sqrt, covs):
            if sqrt is not None:
                return SqrtFactor(sqrt[t], "lower")
            return SqrtFactor(np.linalg.cholesky(covs[t] + 0.0), "lower")

        return FilterStep(
            predicted_state=self.predicted_states[t],
            predicted_sqrt_cov=factor(self.predicted_sqrt_covs, self.predicted_covs),
            updated_state=self.updated_states[t],
            updated_sqrt_cov=factor(self.updated_sqrt_covs, self.updated_covs),
            residual=self.residuals[t],
            residual_cov=self.residual_covs[t],
            gain=self.gains[t],
        )


@dataclass
class Smoothed:
    states: np.ndarray
    covs: np.ndarray
    gains: np.ndarray


# -- initial conditions -----------------------------------------------------


def initial_conditions(spec: ModelSpec, omega0, pct: float = 0.02, floor: float = 1e-6,
                       latent_var: float = 1.0):
    """Initial augmented state and lower square-root covariance.

    Latent factors start at zero with variance ``latent_var``.  Each tvp
    element starts at ``omega0`` (typically a time-invariant estimate of the
    same coefficient) with variance ``(pct * |omega0|)**2``, floored at
    ``floor``.
    """
    omega0 = np.asarray(omega0, dtype=float).ravel()
    if omega0.size != spec.n_tvp:
        raise DimensionMismatch(f"need {spec.n_tvp} initial tvp values, got {omega0.size}")
    state = np.concatenate([np.zeros(spec.m), omega0])
    var = np.concatenate([np.full(spec.m, latent_var), np.maximum((pct * np.abs(omega0)) ** 2, floor)])
    return state, np.diag(np.sqrt(var))


# -- single-step API ----------------------------------------------------------


def _system(spec, pi):
    return pi if isinstance(pi, System) else assemble(spec, pi)


def _sys_args(sys: System):
    return sys.lam, sys.phi, sys.gam, sys.tvp_kind, sys.tvp_row, sys.tvp_col, sys.m


def predict_state(state, sqrt_cov, x, pi, spec: ModelSpec):
    """Second-order predicted state and its Hessian trace corrections.

    The correction for component ``i`` is ``tr(L' H_i L) / 2`` with ``L`` the
    lower square root of the previous covariance, so ``P`` is never formed.
    """
    sys = _system(spec, pi)
    state = np.asarray(state, dtype=float)
    sqrt_cov = np.ascontiguousarray(sqrt_cov, dtype=float)
    x = np.asarray(x if x is not None else np.zeros(spec.r), dtype=float).ravel()
    corr, _ = _sqrt_trace_terms(sqrt_cov, sys.hess_f, _active(sys.hess_f))
    pred = _f(state, x, *_sys_args(sys)) + corr
    if not np.all(np.isfinite(pred)):
        raise NonFiniteState("predicted state is not finite")
    return pred, corr


def predict_sqrt_cov(sqrt_cov, jacobian, hessians, process_noise) -> SqrtFactor:
    """Square root of ``J P J' + [tr(H_i P H_j P) / 2] + Psi`` by QR.

    ``process_noise`` is the diagonal of Psi or the full matrix.
    """
    sqrt_cov = np.ascontiguousarray(sqrt_cov, dtype=float)
    hessians = np.ascontiguousarray(hessians, dtype=float)
    n = sqrt_cov.shape[0]
    psi = np.asarray(process_noise, dtype=float)
    psi = psi if psi.ndim == 2 else np.diag(psi)
    _, lin_cov = _sqrt_trace_terms(sqrt_cov, hessians, _active(hessians))
    sqrt_lin, status = _psd_sqrt(lin_cov + psi)
    if status != OK:
        raise IndefiniteLinearizationMatrix("linearization covariance is indefinite")
    stacked = np.vstack([(np.asarray(jacobian) @ sqrt_cov).T, sqrt_lin.T])
    if stacked.shape != (2 * n, n):
        raise DimensionMismatch("jacobian and covariance factor do not conform")
    return SqrtFactor(_triangularize(stacked).T.copy(), "lower")


def predict_measurement(pred, pred_sqrt_cov, pi, spec: ModelSpec):
    """Predicted observation and its covariance ``S``.

    Returns ``(y_hat, S, noise_cov)`` where ``noise_cov`` is everything in
    ``S`` other than ``Jh P Jh'``: the measurement variances plus the
    second-order linearization term.
    """
    sys = _system(spec, pi)
    pred = np.asarray(pred, dtype=float)
    pred_sqrt_cov = np.ascontiguousarray(pred_sqrt_cov, dtype=float)
    if pred.size != sys.m_star or pred_sqrt_cov.shape != (sys.m_star, sys.m_star):
        raise DimensionMismatch("predicted state and covariance do not match the model")
    y_hat, jac_h, noise_cov = _sr_measure(
        pred, pred_sqrt_cov, *_sys_args(sys), sys.hess_h, _active(sys.hess_h), sys.xi
    )
    jl = jac_h @ pred_sqrt_cov
    return y_hat, jl @ jl.T + noise_cov, noise_cov


def update(pred, y, y_hat, pred_sqrt_cov, noise_cov, jacobian_h) -> FilterStep:
    """Square-root measurement update.

    ``noise_cov`` is the residual noise covariance returned by
    :func:`predict_measurement`.
    """
    pred = np.asarray(pred, dtype=float)
    pred_sqrt_cov = np.ascontiguousarray(pred_sqrt_cov, dtype=float)
    noise_cov = np.atleast_2d(np.asarray(noise_cov, dtype=float))
    jacobian_h = np.atleast_2d(np.asarray(jacobian_h, dtype=float))
    y = np.asarray(y, dtype=float).ravel()
    y_hat = np.asarray(y_hat, dtype=float).ravel()
    if jacobian_h.shape != (y.size, pred.size) or noise_cov.shape != (y.size, y.size):
        raise DimensionMismatch("update inputs do not conform")
    upd, usqrt, gain, resid, delta, status = _sr_update(
        pred, pred_sqrt_cov, y, y_hat, np.ascontiguousarray(noise_cov), np.ascontiguousarray(jacobian_h)
    )
    if status != OK:
        raise SingularDelta("residual covariance square root is singular")
    return FilterStep(
        predicted_state=pred,
        predicted_sqrt_cov=SqrtFactor(pred_sqrt_cov, "lower"),
        updated_state=upd,
        updated_sqrt_cov=SqrtFactor(usqrt, "lower"),
        residual=resid,
        residual_cov=delta.T @ delta,
        gain=gain,
    )


# -- full passes --------------------------------------------------------------


def _prepare(data, inputs, spec, pi, init_state, init_sqrt_cov):
    y = np.ascontiguousarray(data, dtype=float)
    if y.ndim != 2 or y.shape[1] != spec.k:
        raise DimensionMismatch(f"data must be T x {spec.k}, got {y.shape}")
    if not np.all(np.isfinite(y)):
        raise ValueError("data contain missing or non-finite values")
    n_t = y.shape[0]
    if inputs is None:
        xs = np.zeros((n_t, spec.r))
    else:
        xs = np.ascontiguousarray(np.asarray(inputs, dtype=float).reshape(n_t, spec.r))
    sys = _system(spec, pi)
    s0 = np.asarray(init_state, dtype=float).ravel().copy()
    l0 = init_sqrt_cov.lower() if isinstance(init_sqrt_cov, SqrtFactor) else init_sqrt_cov
    l0 = np.ascontiguousarray(l0, dtype=float)
    if s0.size != sys.m_star or l0.shape != (sys.m_star, sys.m_star):
        raise DimensionMismatch("initial state does not match the augmented state size")
    return y, xs, sys, s0, l0


def filter_pass(data, inputs, pi, spec: ModelSpec, init_state, init_sqrt_cov) -> FilterRun:
    """Square-root second-order EKF over ``T`` observations.

    ``inputs[t]`` drives the transition into time ``t``.  The log-likelihood
    is the Gaussian prediction-error decomposition
    ``-1/2 sum(k log 2pi + log|S_t| + r_t' S_t^{-1} r_t)``.
    """
    y, xs, sys, s0, l0 = _prepare(data, inputs, spec, pi, init_state, init_sqrt_cov)
    out = _sr_pass(y, xs, *_sys_args(sys), sys.hess_f, sys.hess_h, sys.psi, sys.xi, s0, l0)
    pred, psqrt, upd, usqrt, resid, s_covs, gains, jacs, terms, status, t = out
    if status != OK:
        _raise_status(status, t)
    return FilterRun(
        predicted_states=pred,
        predicted_covs=psqrt @ psqrt.transpose(0, 2, 1),
        updated_states=upd,
        updated_covs=usqrt @ usqrt.transpose(0, 2, 1),
        residuals=resid,
        residual_covs=s_covs,
        gains=gains,
        jacobians=jacs,
        loglik_terms=terms,
        log_likelihood=float(terms.sum()),
        init_state=s0,
        init_sqrt_cov=l0,
        predicted_sqrt_covs=psqrt,
        updated_sqrt_covs=usqrt,
        backend="sr-sekf",
    )


def sekf_filter_pass(data, inputs, pi, spec: ModelSpec, init_state, init_sqrt_cov) -> FilterRun:
    """Covariance-form second-order EKF, kept for comparison with :func:`filter_pass`."""
    y, xs, sys, s0, l0 = _prepare(data, inputs, spec, pi, init_state, init_sqrt_cov)
    out = _sekf_pass(y, xs, *_sys_args(sys), sys.hess_f, sys.hess_h, sys.psi, sys.xi, s0, l0 @ l0.T)
    pred, pcov, upd, ucov, resid, s_covs, gains, jacs, terms, status, t = out
    if status != OK:
        _raise_status(status, t)
    return FilterRun(
        predicted_states=pred,
        predicted_covs=pcov,
        updated_states=upd,
        updated_covs=ucov,
        residuals=resid,
        residual_covs=s_covs,
        gains=gains,
        jacobians=jacs,
        loglik_terms=terms,
        log_likelihood=float(terms.sum()),
        init_state=s0,
        init_sqrt_cov=l0,
        backend="sekf",
    )


PASSES = {"sr-sekf": filter_pass, "sekf": sekf_filter_pass}


def log_likelihood(data, inputs, pi, spec, init_state, init_sqrt_cov, backend="sr-sekf") -> float:
    """Log-likelihood only; skips building a :class:`FilterRun`."""
    y, xs, sys, s0, l0 = _prepare(data, inputs, spec, pi, init_state, init_sqrt_cov)
    args = (y, xs, *_sys_args(sys), sys.hess_f, sys.hess_h, sys.psi, sys.xi, s0)
    if backend == "sr-sekf":
        out = _sr_pass(*args, l0)
    elif backend == "sekf":
        out = _sekf_pass(*args, l0 @ l0.T)
    else:
        raise ValueError(f"unknown backend {backend!r}")
    status, t = out[-2], out[-1]
    if status != OK:
        _raise_status(status, t)
    return float(out[-3].sum())


def recompute_log_likelihood(run: FilterRun) -> float:
    """Log-likelihood rebuilt from the stored residuals and their covariances."""
    total = 0.0
    for resid, s in zip(run.residuals, run.residual_covs):
        sign, logdet = np.linalg.slogdet(s)
        total += -0.5 * (resid.size * LOG_2PI + logdet + resid @ np.linalg.solve(s, resid))
    return total


# -- smoother -------------------------------------------------------------------


def rts_smooth(run: FilterRun) -> Smoothed:
    """Fixed-interval smoother over a completed forward pass.

    ``C_t = P_{t|t} J' P_{t+1|t}^{-1}`` with ``J`` the Jacobian used to
    predict ``t + 1``.  A singular predicted covariance is regularized with
    ``1e-10 I`` and a warning.
    """
    n_t = len(run)
    states = run.updated_states.copy()
    covs = run.updated_covs.copy()
    gains = np.zeros_like(covs)
    n = states.shape[1]
    for t in range(n_t - 2, -1, -1):
        jac = run.jacobians[t + 1]
        p_pred = run.predicted_covs[t + 1]
        rhs = jac @ run.updated_covs[t]
        try:
            c = cho_solve(cho_factor(p_pred, lower=True), rhs).T
        except LinAlgError:
            warnings.warn(f"singular predicted covariance at t={t + 2}; regularizing", RuntimeWarning)
            c = np.linalg.solve(p_pred + 1e-10 * np.eye(n), rhs).T
        gains[t] = c
        states[t] = run.updated_states[t] + c @ (states[t + 1] - run.predicted_states[t + 1])
        cov = run.updated_covs[t] + c @ (covs[t + 1] - p_pred) @ c.T
        covs[t] = 0.5 * (cov + cov.T)
    return Smoothed(states=states, covs=covs, gains=gains)

import numpy as np
import pytest

from tvpdfm.model import ModelSpec, stack_params


def random_linear_model(rng, k=None, m=None, r=None):
    """A stable model without tvp cells, its true matrices and data."""
    k = k or int(rng.integers(2, 6))
    m = m or int(rng.integers(1, 4))
    r = int(rng.integers(0, 3)) if r is None else r
    spec = ModelSpec(
        k=k, m=m, r=r,
        loading_pattern=[["free"] * m for _ in range(k)],
        phi_pattern=[["free"] * m for _ in range(m)],
        gamma_pattern=[["free"] * r for _ in range(m)],
    )
    lam = rng.normal(0.0, 1.0, (k, m))
    phi = rng.normal(0.0, 0.3, (m, m))
    phi *= 0.9 / max(0.9, np.abs(np.linalg.eigvals(phi)).max())
    gam = rng.normal(0.0, 0.5, (m, r))
    xi = rng.uniform(0.1, 1.0, k)
    psi = np.ones(m)
    pi = stack_params(spec, dict(Lambda=lam, Phi=phi, Gamma=gam, Xi=xi, Psi=psi))
    return spec, pi, dict(lam=lam, phi=phi, gam=gam, xi=np.diag(xi), psi=np.diag(psi))


def simulate_linear(rng, mats, n_t, r):
    m = mats["phi"].shape[0]
    x = rng.normal(size=(n_t, r)) if r else np.zeros((n_t, 0))
    eta = np.zeros(m)
    y = np.empty((n_t, mats["lam"].shape[0]))
    for t in range(n_t):
        eta = mats["phi"] @ eta + mats["gam"] @ x[t] + rng.normal(size=m)
        y[t] = mats["lam"] @ eta + rng.normal(size=y.shape[1]) * np.sqrt(np.diag(mats["xi"]))
    return y, x


def random_tvp_model(rng, n_t=100):
    """Sim-1-like model with tvp cross effects and mildly varying dimensions."""
    m = 2
    k = int(rng.integers(4, 7))
    cells = [["free", "tvp"], ["tvp", "free"]]
    spec = ModelSpec(
        k=k, m=m, r=1,
        loading_pattern=[["free", "fixed:0"] if i < k // 2 else ["fixed:0", "free"] for i in range(k)],
        phi_pattern=cells,
        gamma_pattern=[["free"], ["free"]],
    )
    lam = np.array([[rng.uniform(0.7, 1.3), 0.0] if i < k // 2 else [0.0, rng.uniform(0.7, 1.3)]
                    for i in range(k)])
    phi = np.diag(rng.uniform(0.3, 0.7, 2))
    gam = rng.uniform(0.2, 0.6, (2, 1))
    xi = rng.uniform(0.1, 0.4, k)
    q = rng.uniform(1e-4, 1e-3, 2)
    pi = stack_params(spec, dict(Lambda=lam, Phi=phi, Gamma=gam, Xi=xi, Psi=np.r_[1.0, 1.0, q]))
    omega = rng.uniform(-0.3, 0.3, 2)
    x = (np.arange(n_t) >= n_t // 5).astype(float)[:, None]
    eta = np.zeros(2)
    y = np.empty((n_t, k))
    for t in range(n_t):
        omega = omega + rng.normal(size=2) * np.sqrt(q)
        full = phi.copy()
        full[0, 1], full[1, 0] = omega
        eta = full @ eta + gam[:, 0] * x[t, 0] + rng.normal(size=2)
        y[t] = lam @ eta + rng.normal(size=k) * np.sqrt(xi)
    state0 = np.array([0.0, 0.0, rng.uniform(-0.2, 0.2), rng.uniform(-0.2, 0.2)])
    sqrt0 = np.diag([1.0, 1.0, 0.05, 0.05])
    return spec, pi, y, x, (state0, sqrt0)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


ACCEPTANCE_LINES = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)

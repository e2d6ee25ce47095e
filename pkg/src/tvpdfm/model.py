"""Dynamic factor model with random-walk time-varying coefficients.

Measurement and latent equations (lag orders 0 and 1)::

    y_t   = Lambda(omega_t) eta_t + eps_t,           eps_t  ~ N(0, Xi)
    eta_t = Phi(omega_t) eta_{t-1} + Gamma(omega_t) x_t + zeta_t, zeta_t ~ N(0, Psi)
    omega_t = omega_{t-1} + xi_t

Every cell of Lambda, Phi and Gamma is ``fixed``, ``free`` (estimated, part of
the time-invariant parameter vector) or ``tvp`` (carried in the augmented state
``[eta; omega]``).  Cells are stacked column-wise, Lambda first, then Phi, then
Gamma; the same order is used for free parameters and for ``omega``.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field, replace
from functools import cached_property
from pathlib import Path

import numpy as np
from numba import njit

from .errors import DimensionMismatch, IndexOutOfRange, InvalidSpec, LayoutMismatch

MATRICES = ("Lambda", "Phi", "Gamma")
LAMBDA, PHI, GAMMA = 0, 1, 2


@dataclass(frozen=True)
class Cell:
    kind: str
    value: float = 0.0

    def __post_init__(self):
        if self.kind not in ("fixed", "free", "tvp"):
            raise InvalidSpec(f"unknown cell kind {self.kind!r}")

    @classmethod
    def parse(cls, text) -> "Cell":
        if isinstance(text, Cell):
            return text
        if isinstance(text, (int, float)):
            return cls("fixed", float(text))
        text = str(text).strip()
        if text in ("free", "tvp"):
            return cls(text)
        if text.startswith("fixed:"):
            try:
                return cls("fixed", float(text[len("fixed:"):]))
            except ValueError as exc:
                raise InvalidSpec(f"bad fixed value in {text!r}") from exc
        raise InvalidSpec(f"cannot parse cell {text!r}")

    def __str__(self):
        return f"fixed:{self.value:g}" if self.kind == "fixed" else self.kind


FREE = Cell("free")
TVP = Cell("tvp")


def fixed(value: float) -> Cell:
    return Cell("fixed", float(value))


def _pattern(rows, shape, name):
    cells = tuple(tuple(Cell.parse(c) for c in row) for row in rows)
    if len(cells) != shape[0] or any(len(row) != shape[1] for row in cells):
        raise InvalidSpec(f"{name} pattern must be {shape[0]}x{shape[1]}")
    return cells


def _vector(cells, n, name):
    out = tuple(Cell.parse(c) for c in cells)
    if len(out) != n:
        raise InvalidSpec(f"{name} needs {n} entries, got {len(out)}")
    for c in out:
        if c.kind == "tvp":
            raise InvalidSpec(f"{name} cells cannot be time-varying")
        if c.kind == "fixed" and c.value < 0:
            raise InvalidSpec(f"{name} variances must be nonnegative")
    return out


@dataclass(frozen=True)
class ModelSpec:
    """Dimensions and cell patterns of a dynamic factor model.

    ``latent_noise`` defaults to variances fixed at 1.0, which pins the scale
    of each factor.  ``tvp_noise`` holds one random-walk variance per tvp cell
    and defaults to all free.
    """

    k: int
    m: int
    r: int
    loading_pattern: tuple
    phi_pattern: tuple
    gamma_pattern: tuple
    measurement_noise: tuple = None
    latent_noise: tuple = None
    tvp_noise: tuple = None

    def __post_init__(self):
        if self.k < 1 or self.m < 1 or self.r < 0:
            raise InvalidSpec("need k >= 1, m >= 1 and r >= 0")
        set_ = object.__setattr__
        set_(self, "loading_pattern", _pattern(self.loading_pattern, (self.k, self.m), "loading"))
        set_(self, "phi_pattern", _pattern(self.phi_pattern, (self.m, self.m), "phi"))
        set_(self, "gamma_pattern", _pattern(self.gamma_pattern, (self.m, self.r), "gamma"))
        meas = self.measurement_noise if self.measurement_noise is not None else ["free"] * self.k
        latent = self.latent_noise if self.latent_noise is not None else [fixed(1.0)] * self.m
        set_(self, "measurement_noise", _vector(meas, self.k, "measurement_noise"))
        set_(self, "latent_noise", _vector(latent, self.m, "latent_noise"))
        n_tvp = len(self.tvp_cells)
        tvp = self.tvp_noise if self.tvp_noise is not None else ["free"] * n_tvp
        set_(self, "tvp_noise", _vector(tvp, n_tvp, "tvp_noise"))
        for c in range(self.m):
            pinned = self.latent_noise[c].kind == "fixed" or any(
                row[c].kind == "fixed" and row[c].value != 0.0 for row in self.loading_pattern
            )
            if not pinned:
                raise InvalidSpec(
                    f"factor {c + 1} is not identified: fix its latent variance or a loading"
                )

    # -- cell bookkeeping -------------------------------------------------

    def pattern(self, name: str) -> tuple:
        return {"Lambda": self.loading_pattern, "Phi": self.phi_pattern, "Gamma": self.gamma_pattern}[name]

    def _cells(self, kind):
        out = []
        for name in MATRICES:
            pat = self.pattern(name)
            n_rows = len(pat)
            n_cols = len(pat[0]) if n_rows else 0
            for j in range(n_cols):
                for i in range(n_rows):
                    if pat[i][j].kind == kind:
                        out.append((name, i, j))
        return tuple(out)

    @cached_property
    def tvp_cells(self) -> tuple:
        return self._cells("tvp")

    @cached_property
    def free_cells(self) -> tuple:
        return self._cells("free")

    @property
    def n_tvp(self) -> int:
        return len(self.tvp_cells)

    @property
    def m_star(self) -> int:
        return self.m + self.n_tvp

    @cached_property
    def layout(self) -> tuple:
        """Labels of the time-invariant parameter vector, in stacking order."""
        out = list(self.free_cells)
        out += [("Xi", i, i) for i, c in enumerate(self.measurement_noise) if c.kind == "free"]
        out += [("Psi", i, i) for i, c in enumerate(self.latent_noise) if c.kind == "free"]
        out += [
            ("Psi", self.m + j, self.m + j)
            for j, c in enumerate(self.tvp_noise)
            if c.kind == "free"
        ]
        return tuple(out)

    def state_labels(self) -> list:
        return [f"eta{i + 1}" for i in range(self.m)] + [cell_label(c) for c in self.tvp_cells]

    def param_labels(self) -> list:
        return [self.param_label(entry) for entry in self.layout]

    def param_label(self, entry) -> str:
        name, i, j = entry
        if name == "Xi":
            return f"Xi[{i + 1}]"
        if name == "Psi":
            if i < self.m:
                return f"Psi[{i + 1}]"
            return f"Psi[{cell_label(self.tvp_cells[i - self.m])}]"
        return cell_label(entry)

    def split(self, state):
        state = np.asarray(state, dtype=float)
        return state[: self.m], state[self.m:]

    # -- derived specs ----------------------------------------------------

    def demoted(self) -> "ModelSpec":
        """Same model with every tvp cell estimated as a free constant."""
        def demote(pat):
            return tuple(tuple(FREE if c.kind == "tvp" else c for c in row) for row in pat)

        return replace(
            self,
            loading_pattern=demote(self.loading_pattern),
            phi_pattern=demote(self.phi_pattern),
            gamma_pattern=demote(self.gamma_pattern),
            tvp_noise=(),
        )

    def with_cells(self, name: str, cells, cell: Cell, tvp_noise=None) -> "ModelSpec":
        """Copy with the given ``(row, col)`` cells of matrix ``name`` replaced."""
        pat = [list(row) for row in self.pattern(name)]
        for i, j in cells:
            pat[i][j] = cell
        kw = {
            "Lambda": "loading_pattern",
            "Phi": "phi_pattern",
            "Gamma": "gamma_pattern",
        }[name]
        return replace(self, **{kw: tuple(tuple(r) for r in pat), "tvp_noise": tvp_noise})

    # -- assembly ---------------------------------------------------------

    def system(self, pi) -> "System":
        return assemble(self, pi)

    def to_dict(self) -> dict:
        return {
            "k": self.k,
            "m": self.m,
            "r": self.r,
            "loading_pattern": [[str(c) for c in row] for row in self.loading_pattern],
            "phi_pattern": [[str(c) for c in row] for row in self.phi_pattern],
            "gamma_pattern": [[str(c) for c in row] for row in self.gamma_pattern],
            "measurement_noise": [str(c) for c in self.measurement_noise],
            "latent_noise": [str(c) for c in self.latent_noise],
            "tvp_noise": [str(c) for c in self.tvp_noise],
        }

    @classmethod
    def from_dict(cls, doc: dict) -> "ModelSpec":
        try:
            return cls(
                k=int(doc["k"]),
                m=int(doc["m"]),
                r=int(doc.get("r", 0)),
                loading_pattern=doc["loading_pattern"],
                phi_pattern=doc["phi_pattern"],
                gamma_pattern=doc.get("gamma_pattern", [[] for _ in range(int(doc["m"]))]),
                measurement_noise=doc.get("measurement_noise"),
                latent_noise=doc.get("latent_noise"),
                tvp_noise=doc.get("tvp_noise"),
            )
        except KeyError as exc:
            raise InvalidSpec(f"model spec is missing key {exc.args[0]!r}") from exc


def load_spec(path) -> ModelSpec:
    with open(path, encoding="utf-8") as fh:
        return ModelSpec.from_dict(json.load(fh))


def save_spec(spec: ModelSpec, path) -> None:
    Path(path).write_text(json.dumps(spec.to_dict(), indent=2) + "\n", encoding="utf-8")


def cell_label(cell) -> str:
    name, i, j = cell
    return f"{name}[{i + 1},{j + 1}]"


@dataclass(frozen=True)
class ParamVector:
    values: np.ndarray
    layout: tuple = field(default=())

    def __post_init__(self):
        values = np.array(self.values, dtype=float).ravel()
        if len(self.layout) != values.size:
            raise LayoutMismatch(
                f"{values.size} values for a layout of {len(self.layout)} entries"
            )
        values.flags.writeable = False
        object.__setattr__(self, "values", values)
        object.__setattr__(self, "layout", tuple(tuple(e) for e in self.layout))

    def __len__(self):
        return self.values.size

    def as_dict(self) -> dict:
        return dict(zip(self.layout, self.values))

    def get(self, entry, default=None):
        return self.as_dict().get(tuple(entry), default)


def _coerce_pi(spec: ModelSpec, pi) -> ParamVector:
    layout = spec.layout
    if isinstance(pi, ParamVector):
        if pi.layout != layout:
            raise LayoutMismatch("parameter layout does not match the model spec")
        return pi
    return ParamVector(pi, layout)


def stack_params(spec: ModelSpec, matrices: dict) -> ParamVector:
    """Collect the free cells and free variances of full matrices into a vector.

    ``matrices`` maps ``Lambda`` (k x m), ``Phi`` (m x m), ``Gamma`` (m x r),
    ``Xi`` (k diagonal or k x k) and ``Psi`` (m* diagonal or m* x m*).  Missing
    matrices are allowed only when none of their cells are free.
    """
    shapes = {"Lambda": (spec.k, spec.m), "Phi": (spec.m, spec.m), "Gamma": (spec.m, spec.r)}
    full = {}
    for name, shape in shapes.items():
        if name in matrices:
            a = np.asarray(matrices[name], dtype=float)
            if a.size == 0:
                a = a.reshape(shape)
            if a.shape != shape:
                raise DimensionMismatch(f"{name} must be {shape}, got {a.shape}")
            full[name] = a
    for name, n in (("Xi", spec.k), ("Psi", spec.m_star)):
        if name in matrices:
            a = np.asarray(matrices[name], dtype=float)
            if a.ndim == 2:
                if a.shape != (n, n):
                    raise DimensionMismatch(f"{name} must be {n}x{n}, got {a.shape}")
                a = np.diag(a)
            if a.shape != (n,):
                raise DimensionMismatch(f"{name} must have {n} diagonal entries")
            full[name] = a
    values = []
    for name, i, j in spec.layout:
        if name not in full:
            raise DimensionMismatch(f"matrix {name} is needed for free cell ({i}, {j})")
        values.append(full[name][i] if name in ("Xi", "Psi") else full[name][i, j])
    return ParamVector(np.array(values), spec.layout)


def unstack_params(spec: ModelSpec, pi) -> dict:
    """Inverse of :func:`stack_params`.

    Tvp cells are left at zero; their values live in the augmented state.
    """
    pi = _coerce_pi(spec, pi)
    lam = np.zeros((spec.k, spec.m))
    phi = np.zeros((spec.m, spec.m))
    gam = np.zeros((spec.m, spec.r))
    out = {"Lambda": lam, "Phi": phi, "Gamma": gam}
    for name in MATRICES:
        for i, row in enumerate(spec.pattern(name)):
            for j, c in enumerate(row):
                if c.kind == "fixed":
                    out[name][i, j] = c.value
    xi = np.array([c.value for c in spec.measurement_noise])
    psi = np.array(
        [c.value for c in spec.latent_noise] + [c.value for c in spec.tvp_noise]
    )
    for (name, i, j), v in zip(pi.layout, pi.values):
        if name == "Xi":
            xi[i] = v
        elif name == "Psi":
            psi[i] = v
        else:
            out[name][i, j] = v
    out["Xi"] = np.diag(xi)
    out["Psi"] = np.diag(psi)
    return out


@dataclass(frozen=True)
class System:
    """Numeric arrays of a model at one parameter point, ready for the filter.

    Tvp cells hold zero in ``lam``/``phi``/``gam``; ``tvp_kind``, ``tvp_row``
    and ``tvp_col`` say where each ``omega`` entry is substituted.  Both
    Hessian stacks are constant because the model is bilinear in
    ``(eta, omega)``.
    """

    k: int
    m: int
    r: int
    lam: np.ndarray
    phi: np.ndarray
    gam: np.ndarray
    xi: np.ndarray
    psi: np.ndarray
    tvp_kind: np.ndarray
    tvp_row: np.ndarray
    tvp_col: np.ndarray
    hess_f: np.ndarray
    hess_h: np.ndarray

    @property
    def m_star(self) -> int:
        return self.psi.size


def assemble(spec: ModelSpec, pi) -> System:
    mats = unstack_params(spec, pi)
    cells = spec.tvp_cells
    kind = np.array([MATRICES.index(c[0]) for c in cells], dtype=np.int64)
    row = np.array([c[1] for c in cells], dtype=np.int64)
    col = np.array([c[2] for c in cells], dtype=np.int64)
    n = spec.m_star
    hess_f = np.zeros((n, n, n))
    hess_h = np.zeros((spec.k, n, n))
    for j, (name, i, c) in enumerate(cells):
        target = hess_f if name == "Phi" else hess_h if name == "Lambda" else None
        if target is not None:
            target[i, c, spec.m + j] = 1.0
            target[i, spec.m + j, c] = 1.0
    return System(
        k=spec.k,
        m=spec.m,
        r=spec.r,
        lam=np.ascontiguousarray(mats["Lambda"]),
        phi=np.ascontiguousarray(mats["Phi"]),
        gam=np.ascontiguousarray(mats["Gamma"]).reshape(spec.m, spec.r),
        xi=np.diag(mats["Xi"]).copy(),
        psi=np.diag(mats["Psi"]).copy(),
        tvp_kind=kind,
        tvp_row=row,
        tvp_col=col,
        hess_f=hess_f,
        hess_h=hess_h,
    )


# -- compiled model functions ---------------------------------------------


@njit(cache=True)
def _substitute(state, lam, phi, gam, kind, row, col, m):
    lam_t = lam.copy()
    phi_t = phi.copy()
    gam_t = gam.copy()
    for j in range(kind.size):
        w = state[m + j]
        if kind[j] == LAMBDA:
            lam_t[row[j], col[j]] = w
        elif kind[j] == PHI:
            phi_t[row[j], col[j]] = w
        else:
            gam_t[row[j], col[j]] = w
    return lam_t, phi_t, gam_t


@njit(cache=True)
def _f(state, x, lam, phi, gam, kind, row, col, m):
    _, phi_t, gam_t = _substitute(state, lam, phi, gam, kind, row, col, m)
    out = state.copy()
    out[:m] = phi_t @ state[:m] + gam_t @ x
    return out


@njit(cache=True)
def _h(state, lam, phi, gam, kind, row, col, m):
    lam_t, _, _ = _substitute(state, lam, phi, gam, kind, row, col, m)
    return lam_t @ state[:m]


@njit(cache=True)
def _jac_f(state, x, lam, phi, gam, kind, row, col, m):
    n = state.size
    _, phi_t, _ = _substitute(state, lam, phi, gam, kind, row, col, m)
    jac = np.zeros((n, n))
    jac[:m, :m] = phi_t
    for j in range(kind.size):
        if kind[j] == PHI:
            jac[row[j], m + j] = state[col[j]]
        elif kind[j] == GAMMA:
            jac[row[j], m + j] = x[col[j]]
        jac[m + j, m + j] = 1.0
    return jac


@njit(cache=True)
def _jac_h(state, lam, phi, gam, kind, row, col, m):
    lam_t, _, _ = _substitute(state, lam, phi, gam, kind, row, col, m)
    jac = np.zeros((lam.shape[0], state.size))
    jac[:, :m] = lam_t
    for j in range(kind.size):
        if kind[j] == LAMBDA:
            jac[row[j], m + j] = state[col[j]]
    return jac


# -- public evaluation API ------------------------------------------------


def _check_state(spec: ModelSpec, state) -> np.ndarray:
    s = np.asarray(state, dtype=float).ravel()
    if s.size != spec.m_star:
        raise DimensionMismatch(f"state must have {spec.m_star} entries, got {s.size}")
    return s


def _check_input(spec: ModelSpec, x) -> np.ndarray:
    x = np.asarray(x if x is not None else np.zeros(spec.r), dtype=float).ravel()
    if x.size != spec.r:
        raise DimensionMismatch(f"input must have {spec.r} entries, got {x.size}")
    return x


def _args(sys: System):
    return sys.lam, sys.phi, sys.gam, sys.tvp_kind, sys.tvp_row, sys.tvp_col, sys.m


def eval_f(state, x, pi, spec: ModelSpec) -> np.ndarray:
    """Mean of the augmented transition: ``[Phi eta + Gamma x; omega]``."""
    s, x = _check_state(spec, state), _check_input(spec, x)
    return _f(s, x, *_args(assemble(spec, pi)))


def eval_h(state, pi, spec: ModelSpec) -> np.ndarray:
    s = _check_state(spec, state)
    return _h(s, *_args(assemble(spec, pi)))


def jacobian_f(state, x, pi, spec: ModelSpec) -> np.ndarray:
    s, x = _check_state(spec, state), _check_input(spec, x)
    return _jac_f(s, x, *_args(assemble(spec, pi)))


def jacobian_h(state, pi, spec: ModelSpec) -> np.ndarray:
    s = _check_state(spec, state)
    return _jac_h(s, *_args(assemble(spec, pi)))


def hessian_f(state, x, pi, spec: ModelSpec, i: int) -> np.ndarray:
    """Hessian of the ``i``-th (0-based) transition component.

    Constant in the state: each tvp cell ``Phi[i, c]`` contributes a symmetric
    unit pair at ``(eta_c, omega_j)``.  Gamma cells contribute nothing since
    the input is not a state.
    """
    _check_state(spec, state)
    _check_input(spec, x)
    if not 0 <= i < spec.m_star:
        raise IndexOutOfRange(f"state index {i} outside [0, {spec.m_star})")
    return assemble(spec, pi).hess_f[i].copy()


def hessian_h(state, pi, spec: ModelSpec, i: int) -> np.ndarray:
    _check_state(spec, state)
    if not 0 <= i < spec.k:
        raise IndexOutOfRange(f"observation index {i} outside [0, {spec.k})")
    return assemble(spec, pi).hess_h[i].copy()

"""Approximate degree by linear programming, with dual-polynomial certificates.

Both programs are built here as plain constraint matrices over the character
table; ``solve_lp`` is the only place a solver is touched. Every dual witness
is projected, renormalized and then re-verified by substitution, so a drifting
solver can produce a failing report but never a wrong certificate.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable

import numpy as np
from scipy.optimize import linprog

from liftlab.boolfn import BooleanFunction, FourierTable, fourier, walsh_hadamard

DEFAULT_EPSILON = 1 / 3
LP_TOL = 1e-7
MAX_APPROX_ARITY = 5


class LPError(RuntimeError):
    """The LP backend did not return an optimal solution."""


@dataclass
class LPSolution:
    x: np.ndarray
    objective: float


def _highs(c, A_ub, b_ub, A_eq, b_eq, bounds) -> LPSolution:
    res = linprog(c, A_ub=A_ub, b_ub=b_ub, A_eq=A_eq, b_eq=b_eq, bounds=bounds, method="highs",
                  options={"primal_feasibility_tolerance": 1e-9, "dual_feasibility_tolerance": 1e-9})
    if res.status != 0:
        raise LPError(f"LP solver failed (status {res.status}): {res.message}")
    return LPSolution(np.asarray(res.x), float(res.fun))


LPBackend = Callable[..., LPSolution]
_backend: LPBackend = _highs


def set_backend(backend: LPBackend) -> LPBackend:
    """Swap the solver; returns the previous one. Signature follows scipy's linprog."""
    global _backend
    previous, _backend = _backend, backend
    return previous


def solve_lp(c, A_ub=None, b_ub=None, A_eq=None, b_eq=None, bounds=None) -> LPSolution:
    return _backend(c, A_ub, b_ub, A_eq, b_eq, bounds)


def character_matrix(m: int) -> np.ndarray:
    """chi[x, S] = (-1)^{|x & S|} for all points x and subsets S of an m-bit domain."""
    idx = np.arange(1 << m)
    return 1.0 - 2.0 * (np.bitwise_count(idx[:, None] & idx[None, :]) & 1)


def low_degree_masks(m: int, d: int) -> np.ndarray:
    idx = np.arange(1 << m)
    return idx[np.bitwise_count(idx) < d]


def _check_input(f: BooleanFunction, epsilon: float) -> None:
    if not f.is_sign_valued():
        raise ValueError("approximate degree needs a sign-valued function")
    if not 0 <= epsilon < 1:
        raise ValueError(f"epsilon must lie in [0, 1), got {epsilon}")
    if f.arity > MAX_APPROX_ARITY:
        raise ValueError(f"|J| = {f.arity} exceeds {MAX_APPROX_ARITY}")


# ---------------------------------------------------------------- primal


@dataclass
class ApproxDegreeResult:
    epsilon: float
    d: int
    primal: FourierTable
    optimal_error: float
    errors_by_degree: list[float]


def best_approximation(f: BooleanFunction, d: int) -> tuple[float, FourierTable]:
    """min_p ||f - p||_inf over polynomials of degree <= d."""
    m = f.arity
    chi = character_matrix(m)
    cols = low_degree_masks(m, d + 1)
    basis = chi[:, cols]
    k = basis.shape[1]
    n_pts = 1 << m
    # variables: coefficients c_S (free) then the error t >= 0
    ones = np.ones((n_pts, 1))
    A_ub = np.block([[basis, -ones], [-basis, -ones]])
    b_ub = np.concatenate([f.values, -f.values])
    cost = np.zeros(k + 1)
    cost[-1] = 1.0
    bounds = [(None, None)] * k + [(0, None)]
    sol = solve_lp(cost, A_ub, b_ub, None, None, bounds)
    coeffs = np.zeros(n_pts)
    coeffs[cols] = sol.x[:k]
    poly = FourierTable(f.coords, coeffs)
    err = float(np.max(np.abs(poly.inverse().values - f.values)))
    return err, poly


def approx_degree(f: BooleanFunction, epsilon: float = DEFAULT_EPSILON) -> ApproxDegreeResult:
    _check_input(f, epsilon)
    errors = []
    for d in range(f.arity + 1):
        err, poly = best_approximation(f, d)
        errors.append(err)
        if err <= epsilon + LP_TOL:
            return ApproxDegreeResult(epsilon, d, poly, err, errors)
    raise LPError("degree-|J| polynomial failed to interpolate; solver tolerance problem")


# ---------------------------------------------------------------- dual


@dataclass
class DualWitness:
    psi: BooleanFunction
    d: int
    correlation: float

    def certifies(self, epsilon: float) -> bool:
        return self.correlation > epsilon + LP_TOL

    def to_json(self) -> dict:
        return {"psi": self.psi.values.tolist(), "d": self.d, "correlation": self.correlation}


def _project_out(values: np.ndarray, m: int, d: int) -> np.ndarray:
    """Remove the Fourier mass on subsets of size < d."""
    coeffs = walsh_hadamard(values) / float(1 << m)
    coeffs[low_degree_masks(m, d)] = 0.0
    return walsh_hadamard(coeffs)


def dual_polynomial(f: BooleanFunction, d: int, epsilon: float = DEFAULT_EPSILON) -> DualWitness:
    """max <f, psi> s.t. ||psi||_1 <= 1 and psi has no Fourier mass below degree d.

    The optimum equals the best degree-(d-1) approximation error, so the witness
    certifies deg_eps(f) >= d exactly when its correlation exceeds epsilon.
    """
    _check_input(f, epsilon)
    m = f.arity
    if not 0 <= d <= m:
        raise ValueError(f"d must lie in [0, {m}], got {d}")
    n_pts = 1 << m
    chi = character_matrix(m)
    low = low_degree_masks(m, d)
    # psi = plus - minus, both nonnegative
    cost = -np.concatenate([f.values, -f.values])
    A_ub = np.ones((1, 2 * n_pts))
    A_eq = np.hstack([chi[:, low].T, -chi[:, low].T]) if low.size else None
    b_eq = np.zeros(low.size) if low.size else None
    sol = solve_lp(cost, A_ub, [1.0], A_eq, b_eq, [(0, None)] * (2 * n_pts))
    psi = sol.x[:n_pts] - sol.x[n_pts:]
    psi = _project_out(psi, m, d)
    norm = np.abs(psi).sum()
    if norm <= LP_TOL:
        # optimum is 0: any normalized high character is an equally good witness
        top = chi[:, n_pts - 1]
        psi = top / n_pts
        norm = 1.0
    psi = psi / norm
    witness = BooleanFunction(f.coords, psi)
    return DualWitness(witness, d, float(np.dot(f.values, psi)))


# ---------------------------------------------------------------- verification


@dataclass
class Check:
    name: str
    passed: bool
    measured: float
    slack: float


@dataclass
class DualReport:
    checks: list[Check]

    @property
    def passed(self) -> bool:
        return all(c.passed for c in self.checks)

    def __getitem__(self, name: str) -> Check:
        return next(c for c in self.checks if c.name == name)


def verify_dual(
    f: BooleanFunction, w: DualWitness, epsilon: float = DEFAULT_EPSILON, tol: float = LP_TOL
) -> DualReport:
    if f.coords != w.psi.coords:
        raise ValueError(f"domain mismatch: {f.coords} vs {w.psi.coords}")
    psi = w.psi.values
    norm_err = abs(np.abs(psi).sum() - 1.0)
    corr = float(np.dot(f.values, psi))
    low = low_degree_masks(f.arity, w.d)
    coeffs = fourier(w.psi).coeffs
    worst = float(np.max(np.abs(coeffs[low]))) if low.size else 0.0
    return DualReport([
        Check("one_norm", norm_err <= tol, norm_err, tol - norm_err),
        Check("correlation", corr >= epsilon, corr, corr - epsilon),
        Check("low_degree_vanishing", worst <= tol, worst, tol - worst),
    ])

"""Witness matrices on rectangles and the generalized discrepancy machinery.

Exact sub-claims (valid-term identity, valid-pair count, strong orthogonality,
trace expansion, norm bounds) are computed along two independent routes and
compared; asymptotic claims are only evaluated and reported.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from itertools import product
from typing import Iterable

import numpy as np

from liftlab.approxdeg import DualWitness
from liftlab.boolfn import BooleanFunction, coordset, fourier, mask_to_labels
from liftlab.density import SupportDistribution, uniformity_deviation
from liftlab.gadget import ComposedMatrix, GadgetParams, character_matrix, compose_matrix, gadget_grid
from liftlab.limits import GuardError, VerificationError

MAX_SPECTRAL_DIM = 4096
POWER_ITERATIONS = 200
POWER_TOL = 1e-8


@dataclass(frozen=True, eq=False)
class WitnessMatrix:
    rows: np.ndarray
    cols: np.ndarray
    psi: BooleanFunction
    entries: np.ndarray
    params: GadgetParams

    @property
    def shape(self) -> tuple[int, int]:
        return self.entries.shape


def _psi_function(psi: DualWitness | BooleanFunction) -> BooleanFunction:
    return psi.psi if isinstance(psi, DualWitness) else psi


def build_witness(psi: DualWitness | BooleanFunction, U, V, params: GadgetParams) -> WitnessMatrix:
    """Psi(u, v) = 2^{|J|} / |R| · psi(G^J(x_u, y_v))."""
    fn = _psi_function(psi)
    if fn.coords != params.coords:
        raise ValueError(f"psi domain {fn.coords} does not match J = {params.coords}")
    U = np.asarray(U, dtype=np.int64)
    V = np.asarray(V, dtype=np.int64)
    grid = gadget_grid(U, V, params)
    scale = float(1 << params.m) / (U.size * V.size)
    return WitnessMatrix(U, V, fn, scale * fn.values[grid], params)


def _entries(M) -> np.ndarray:
    return M.entries if hasattr(M, "entries") else np.asarray(M, dtype=float)


def one_norm(M) -> float:
    return float(np.abs(_entries(M)).sum())


def sign_correlation(F, M) -> float:
    a, b = _entries(F), _entries(M)
    if a.shape != b.shape:
        raise ValueError(f"shape mismatch {a.shape} vs {b.shape}")
    return float((a * b).sum())


@dataclass
class NormBounds:
    one_norm: float
    correlation: float
    psi_one_norm: float
    psi_correlation: float
    deviation: float
    one_norm_bound: float
    correlation_bound: float

    @property
    def holds(self) -> bool:
        return (self.one_norm <= self.one_norm_bound + 1e-12
                and self.correlation >= self.correlation_bound - 1e-12)


def witness_norm_bounds(
    f: BooleanFunction, psi: DualWitness | BooleanFunction, U, V, params: GadgetParams
) -> NormBounds:
    """||Psi||_1 <= (1+dev)||psi||_1 and <F,Psi> >= <f,psi> - dev·||psi||_1 on U × V."""
    fn = _psi_function(psi)
    F = compose_from(f, U, V, params)
    W = build_witness(fn, U, V, params)
    dev = uniformity_deviation(
        SupportDistribution(params, U), SupportDistribution(params, V)
    ).max_dev
    psi_norm = float(np.abs(fn.values).sum())
    psi_corr = float(np.dot(f.values, fn.values))
    report = NormBounds(
        one_norm(W), sign_correlation(F, W), psi_norm, psi_corr, dev,
        (1 + dev) * psi_norm, psi_corr - dev * psi_norm,
    )
    if not report.holds:
        raise VerificationError(f"witness norm bounds violated: {report}")
    return report


def compose_from(f: BooleanFunction, U, V, params: GadgetParams) -> ComposedMatrix:
    return compose_matrix(f, np.asarray(U, dtype=np.int64), np.asarray(V, dtype=np.int64), params)


# ---------------------------------------------------------------- spectral norm


def trace_moment_bound(M) -> float:
    """(tr (M M^T)^2)^{1/4}, an upper bound on the spectral norm."""
    a = _entries(M)
    g = a @ a.T
    return float(np.sum(g * g)) ** 0.25


def power_iteration(M, iterations: int = POWER_ITERATIONS, tol: float = POWER_TOL, seed: int = 0) -> float:
    a = _entries(M)
    if not a.any():
        return 0.0
    g = a.T @ a
    v = np.random.default_rng(seed).standard_normal(g.shape[0])
    v /= np.linalg.norm(v)
    est = 0.0
    for _ in range(iterations):
        w = g @ v
        nrm = np.linalg.norm(w)
        if nrm == 0:
            return 0.0
        v = w / nrm
        new = float(np.sqrt(nrm))
        if abs(new - est) <= tol * max(new, 1.0):
            est = new
            break
        est = new
    return est


def spectral_norm(M) -> float:
    a = _entries(M)
    if min(a.shape) > MAX_SPECTRAL_DIM:
        raise GuardError(f"matrix {a.shape} exceeds the {MAX_SPECTRAL_DIM} singular-value guard")
    if a.size == 0:
        return 0.0
    sigma = float(np.linalg.svd(a, compute_uv=False)[0])
    bound = trace_moment_bound(a)
    if sigma > bound * (1 + 1e-9) + 1e-15:
        raise VerificationError(f"spectral norm {sigma} exceeds trace-moment bound {bound}")
    return sigma


# ---------------------------------------------------------------- trace expansion


@dataclass
class TraceExpansion:
    direct: float
    expanded: float

    @property
    def rel_err(self) -> float:
        scale = max(abs(self.direct), abs(self.expanded))
        return 0.0 if scale == 0 else abs(self.direct - self.expanded) / scale


def trace_fourth_moment(psi: DualWitness | BooleanFunction, U, V, params: GadgetParams,
                        rtol: float = 1e-6) -> TraceExpansion:
    """tr (Psi Psi^T)^2 directly and through Psi = 2^m/|R| Σ_S coef_S M_S."""
    if params.m > 2 or params.b > 2:
        raise GuardError("trace expansion is enumerated only for |J| <= 2, b <= 2")
    fn = _psi_function(psi)
    W = build_witness(fn, U, V, params)
    g = W.entries @ W.entries.T
    direct = float(np.sum(g * g))

    m = params.m
    coeffs = fourier(fn).coeffs
    mats = np.stack([
        character_matrix(mask_to_labels(S, params.coords), U, V, params).entries
        for S in range(1 << m)
    ])
    # pair p = (S, T) indexes A_p = M_S M_T^T; cross[p, q] = tr(A_p A_q)
    A = np.einsum("sij,tkj->stik", mats, mats).reshape(-1, mats.shape[1], mats.shape[1])
    cross = np.einsum("pij,qji->pq", A, A)
    weights = np.outer(coeffs, coeffs).reshape(-1)
    scale = (float(1 << m) / (np.asarray(U).size * np.asarray(V).size)) ** 4
    expanded = scale * float(weights @ cross @ weights)
    report = TraceExpansion(direct, expanded)
    if report.rel_err > rtol and abs(direct - expanded) > 1e-300:
        raise VerificationError(f"trace expansion mismatch: {direct} vs {expanded}")
    return report


def cross_trace(S1, T1, S2, T2, U, V, params: GadgetParams) -> float:
    """tr(M_{S1} M_{T1}^T M_{S2} M_{T2}^T)."""
    M = [character_matrix(S, U, V, params).entries for S in (S1, T1, S2, T2)]
    return float(np.trace(M[0] @ M[1].T @ M[2] @ M[3].T))


@dataclass
class OrthogonalityReport:
    pairs: int
    violating_pairs: int
    nonzero_entries: int
    max_abs: float
    formula_mismatches: int   # entries differing from the closed form below
    first: tuple | None

    @property
    def holds(self) -> bool:
        return self.violating_pairs == 0


def product_closed_form(S, T, U, params: GadgetParams) -> np.ndarray:
    """(M_S M_T^T)(x, x') on V = Λ^J: |Λ^J| · [x_S∩T = x'_S∩T, x_{S\\T} = 0, x'_{T\\S} = 0]."""
    S, T = set(S), set(T)
    out = np.full((len(U), len(U)), float(1 << params.bits))
    mask = (1 << params.b) - 1
    for k, c in enumerate(params.coords):
        w = (np.asarray(U, dtype=np.int64) >> (k * params.b)) & mask
        if c in S and c in T:
            out *= w[:, None] == w[None, :]
        elif c in S:
            out *= (w == 0)[:, None]
        elif c in T:
            out *= (w == 0)[None, :]
    return out


def strong_orthogonality(params: GadgetParams, U=None, V=None) -> OrthogonalityReport:
    """Check M_S M_T^T = 0 and M_S^T M_T = 0 for all S != T, exactly (integer entries)."""
    U = params.full_support() if U is None else np.asarray(U, dtype=np.int64)
    V = params.full_support() if V is None else np.asarray(V, dtype=np.int64)
    subs = all_subsets(params.coords)
    mats = {S: character_matrix(S, U, V, params).entries.astype(np.int64) for S in subs}
    pairs = bad = nonzero = mismatches = 0
    max_abs, first = 0, None
    full_cols = len(V) == 1 << params.bits and np.array_equal(np.sort(V), params.full_support())
    for S, T in product(subs, repeat=2):
        if S == T:
            continue
        pairs += 1
        left, right = mats[S] @ mats[T].T, mats[S].T @ mats[T]
        nz = int(np.count_nonzero(left) + np.count_nonzero(right))
        if full_cols:
            mismatches += int(np.count_nonzero(left != product_closed_form(S, T, U, params)))
        if nz:
            bad += 1
            nonzero += nz
            max_abs = max(max_abs, int(np.abs(left).max()), int(np.abs(right).max()))
            if first is None:
                first = (S, T)
    return OrthogonalityReport(pairs, bad, nonzero, float(max_abs), mismatches, first)


# ---------------------------------------------------------------- valid pairs


@dataclass(frozen=True)
class ValidPairSpec:
    S1: tuple[int, ...]
    T1: tuple[int, ...]
    S2: tuple[int, ...]
    T2: tuple[int, ...]

    def __post_init__(self):
        for name in ("S1", "T1", "S2", "T2"):
            object.__setattr__(self, name, coordset(getattr(self, name)))

    @property
    def A1(self):
        return set(self.S1) & set(self.T1)

    @property
    def B1(self):
        return set(self.S1) - set(self.T1)

    @property
    def C1(self):
        return set(self.T1) - set(self.S1)

    @property
    def A2(self):
        return set(self.S2) & set(self.T2)

    @property
    def B2(self):
        return set(self.S2) - set(self.T2)

    @property
    def C2(self):
        return set(self.T2) - set(self.S2)

    @property
    def w1_coords(self) -> tuple[int, ...]:
        return coordset(set(self.S1) | set(self.T2))

    @property
    def w2_coords(self) -> tuple[int, ...]:
        return coordset(set(self.S2) | set(self.T1))

    @property
    def y1_coords(self) -> tuple[int, ...]:
        return coordset(set(self.S1) | set(self.T1))

    @property
    def y2_coords(self) -> tuple[int, ...]:
        return coordset(set(self.S2) | set(self.T2))

    def size_sum(self) -> int:
        return len(self.S1) + len(self.T1) + len(self.S2) + len(self.T2)


def _words(x: np.ndarray, coords: tuple[int, ...], c: int, b: int) -> np.ndarray:
    k = coords.index(c)
    return (x >> (k * b)) & ((1 << b) - 1)


def _chi(S, xs, xc, ys, yc, b) -> np.ndarray:
    """(-1)^{Σ_{i∈S} <x_i, y_i>} with x over xc and y over yc, broadcast."""
    acc = np.zeros(np.broadcast(xs, ys).shape, dtype=np.int64)
    for c in S:
        acc ^= np.bitwise_count(_words(xs, xc, c, b) & _words(ys, yc, c, b)).astype(np.int64) & 1
    return 1 - 2 * acc


def is_valid(spec: ValidPairSpec, w1, w2, b: int):
    """Validity of (w1, w2); vectorized over integer arrays."""
    w1 = np.asarray(w1, dtype=np.int64)
    w2 = np.asarray(w2, dtype=np.int64)
    ok = np.ones(np.broadcast(w1, w2).shape, dtype=bool)
    c1, c2 = spec.w1_coords, spec.w2_coords
    for c in spec.A1 | spec.A2:
        ok &= _words(w1, c1, c, b) == _words(w2, c2, c, b)
    for c in spec.B1 | spec.C2:
        ok &= _words(w1, c1, c, b) == 0
    for c in spec.C1 | spec.B2:
        ok &= _words(w2, c2, c, b) == 0
    return ok


def valid_term_sums(spec: ValidPairSpec, w1, w2, b: int) -> np.ndarray:
    """Σ_{y1,y2} of the four-character product, by enumeration; exact integers."""
    w1 = np.asarray(w1, dtype=np.int64)[..., None, None]
    w2 = np.asarray(w2, dtype=np.int64)[..., None, None]
    y1c, y2c = spec.y1_coords, spec.y2_coords
    y1 = np.arange(1 << (b * len(y1c)), dtype=np.int64)[:, None]
    y2 = np.arange(1 << (b * len(y2c)), dtype=np.int64)[None, :]
    w1c, w2c = spec.w1_coords, spec.w2_coords
    term = (_chi(spec.S1, w1, w1c, y1, y1c, b) * _chi(spec.T1, w2, w2c, y1, y1c, b)
            * _chi(spec.S2, w2, w2c, y2, y2c, b) * _chi(spec.T2, w1, w1c, y2, y2c, b))
    return term.sum(axis=(-2, -1))


def valid_term_closed_form(spec: ValidPairSpec, w1, w2, b: int) -> np.ndarray:
    weight = 1 << (b * (len(spec.y1_coords) + len(spec.y2_coords)))
    return np.where(is_valid(spec, w1, w2, b), weight, 0).astype(np.int64)


def valid_term(spec: ValidPairSpec, w1: int, w2: int, b: int) -> int:
    direct = int(valid_term_sums(spec, w1, w2, b))
    closed = int(valid_term_closed_form(spec, w1, w2, b))
    if direct != closed:
        raise VerificationError(f"valid-term identity fails at {spec}, w1={w1}, w2={w2}: {direct} != {closed}")
    return direct


@dataclass
class ValidCount:
    count: int
    bound: float
    log2_bound: float
    exponent4: int

    @property
    def holds(self) -> bool:
        """count <= 2^{exponent4 / 4}, decided as count^4 <= 2^exponent4 in integers."""
        if self.exponent4 < 0:
            return self.count == 0
        return self.count ** 4 <= 1 << self.exponent4


def count_valid(spec: ValidPairSpec, b: int) -> ValidCount:
    if b * (len(spec.w1_coords) + len(spec.w2_coords)) > 24:
        raise GuardError("valid-pair enumeration exceeds 2^24 pairs")
    w1 = np.arange(1 << (b * len(spec.w1_coords)), dtype=np.int64)[:, None]
    w2 = np.arange(1 << (b * len(spec.w2_coords)), dtype=np.int64)[None, :]
    count = int(is_valid(spec, w1, w2, b).sum())
    exponent4 = 4 * b * (len(spec.w1_coords) + len(spec.w2_coords)) - b * spec.size_sum()
    report = ValidCount(count, 2.0 ** (exponent4 / 4), exponent4 / 4, exponent4)
    if not report.holds:
        raise VerificationError(f"valid-pair count {count} exceeds bound 2^{report.log2_bound} at {spec}")
    return report


def per_trace_target(spec: ValidPairSpec, b: int) -> float:
    """The asymptotic per-term target 2^{-0.11 b (|S1|+|T1|+|S2|+|T2|)} (reported only)."""
    return 2.0 ** (-0.11 * b * spec.size_sum())


def all_subsets(coords: Iterable[int]) -> list[tuple[int, ...]]:
    coords = coordset(coords)
    return [mask_to_labels(s, coords) for s in range(1 << len(coords))]


def all_specs(coords: Iterable[int]) -> list[ValidPairSpec]:
    subs = all_subsets(coords)
    return [ValidPairSpec(*q) for q in product(subs, repeat=4)]


# ---------------------------------------------------------------- discrepancy bound


@dataclass
class DiscrepancyBound:
    value: float | None
    numerator: float
    correlation: float
    one_norm: float
    spectral: float
    rows: int
    cols: int
    epsilon: float

    @property
    def vacuous(self) -> bool:
        return self.value is None

    def to_json(self) -> dict:
        return {
            "one_norm": self.one_norm,
            "correlation": self.correlation,
            "spectral": self.spectral,
            "bound_bits": self.value,
            "vacuous": self.vacuous,
        }


def gen_discrepancy_bound(F, M, epsilon: float) -> DiscrepancyBound:
    """log2((<F,M> - 2 eps ||M||_1) / (3 ||M|| sqrt(|U||V|))), the quantity inside Omega."""
    corr = sign_correlation(F, M)
    norm1 = one_norm(M)
    sigma = spectral_norm(M)
    rows, cols = _entries(M).shape
    numer = corr - 2 * epsilon * norm1
    value = None
    if numer > 0 and sigma > 0:
        value = math.log2(numer / (3 * sigma * math.sqrt(rows * cols)))
    return DiscrepancyBound(value, numer, corr, norm1, sigma, rows, cols, epsilon)

"""Min-entropy and block-wise density of uniform distributions over supports.

Probabilities are ratios of integer counts. Threshold tests of the form
``P <= 2^{-delta * bits}`` are decided exactly: delta is read as the decimal
fraction p/q it was written as, and the test becomes (N / c)^q >= 2^{p * bits}
in integers. Equality resolves as dense.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from fractions import Fraction
from itertools import combinations
from typing import Iterable

import numpy as np

from liftlab.boolfn import coordset
from liftlab.gadget import GadgetParams, gadget_outputs, project

DELTA_HIGH = 0.99
DELTA_LOW = 0.44
DELTA_SUM_MIN = 1.4
BIAS_EXPONENT = 1.1
CONDITIONAL_FLOOR_EXPONENT = 1


@dataclass(frozen=True, eq=False)
class SupportDistribution:
    """Uniform distribution over the entries of ``support`` (repeats carry weight)."""

    params: GadgetParams
    support: np.ndarray

    def __post_init__(self):
        support = np.sort(np.asarray(self.support, dtype=np.int64).reshape(-1))
        if support.size == 0:
            raise ValueError("empty support")
        if support.min() < 0 or support.max() >= 1 << self.params.bits:
            raise ValueError(f"support entries must lie in [0, 2^{self.params.bits})")
        object.__setattr__(self, "support", support)

    @classmethod
    def of(cls, b: int, coords: Iterable[int], support) -> SupportDistribution:
        return cls(GadgetParams(b, tuple(coords)), support)

    @classmethod
    def uniform(cls, b: int, coords: Iterable[int]) -> SupportDistribution:
        params = GadgetParams(b, tuple(coords))
        return cls(params, params.full_support())

    @property
    def coords(self) -> tuple[int, ...]:
        return self.params.coords

    @property
    def b(self) -> int:
        return self.params.b

    @property
    def size(self) -> int:
        return int(self.support.size)

    def marginal(self, I: Iterable[int]) -> SupportDistribution:
        I = coordset(I)
        return SupportDistribution(self.params.sub(I), project(self.support, self.params, I))

    def counts(self, I: Iterable[int]) -> tuple[np.ndarray, np.ndarray]:
        """Distinct values of X_I and their counts."""
        return np.unique(project(self.support, self.params, I), return_counts=True)

    def max_count(self, I: Iterable[int]) -> int:
        I = coordset(I)
        if not I:
            return self.size
        return int(self.counts(I)[1].max())

    def condition(self, I: Iterable[int], alpha: int) -> SupportDistribution:
        """X_{J \\ I} given X_I = alpha (alpha encoded over I)."""
        I = coordset(I)
        rest = tuple(c for c in self.coords if c not in I)
        keep = self.support[project(self.support, self.params, I) == alpha]
        if keep.size == 0:
            raise ValueError(f"alpha={alpha} has probability zero on {I}")
        return SupportDistribution(self.params.sub(rest), project(keep, self.params, rest))

    def select(self, mask: np.ndarray) -> SupportDistribution:
        return SupportDistribution(self.params, self.support[mask])


def nonempty_subsets(coords: Iterable[int]) -> list[tuple[int, ...]]:
    """All nonempty subsets in lexicographic order of their sorted label tuples."""
    coords = coordset(coords)
    subs = [s for k in range(1, len(coords) + 1) for s in combinations(coords, k)]
    return sorted(subs)


def as_fraction(x: float | Fraction) -> Fraction:
    if isinstance(x, (Fraction, int)):
        return Fraction(x)
    return Fraction(repr(float(x)))


def prob_at_most(count: int, total: int, delta, bits: int) -> bool:
    """count / total <= 2^{-delta * bits}, decided exactly."""
    if count == 0:
        return True
    d = as_fraction(delta)
    if d < 0:
        raise ValueError("delta must be nonnegative")
    p, q = d.numerator, d.denominator
    return total ** q >= count ** q * (1 << (p * bits))


def min_entropy(X: SupportDistribution, I: Iterable[int]) -> float:
    I = coordset(I)
    if not set(I) <= set(X.coords):
        raise ValueError(f"{I} is not a subset of {X.coords}")
    if not I:
        return 0.0
    return math.log2(X.size / X.max_count(I))


def density_exponent(X: SupportDistribution) -> float:
    """Largest delta for which X is delta-dense; 1.0 on an empty coordinate set."""
    if not X.coords:
        return 1.0
    return min(min_entropy(X, I) / (X.b * len(I)) for I in nonempty_subsets(X.coords))


@dataclass
class DensityReport:
    delta: float
    violating_set: tuple[tuple[int, ...], int, float] | None = None

    @property
    def dense(self) -> bool:
        return self.violating_set is None

    def __bool__(self):
        return self.dense


def is_dense(X: SupportDistribution, delta: float) -> DensityReport:
    if not 0 < delta <= 1:
        raise ValueError(f"delta must lie in (0, 1], got {delta}")
    for I in nonempty_subsets(X.coords):
        vals, counts = X.counts(I)
        k = int(np.argmax(counts))
        if not prob_at_most(int(counts[k]), X.size, delta, X.b * len(I)):
            return DensityReport(delta, (I, int(vals[k]), counts[k] / X.size))
    return DensityReport(delta)


@dataclass
class Restoration:
    I: tuple[int, ...]
    alpha: int
    conditioned: SupportDistribution


def low_entropy_set(X: SupportDistribution, delta: float) -> tuple[int, ...]:
    """Lexicographically first inclusion-maximal I with H_inf(X_I) < delta·b·|I| (or ())."""
    violating = [
        I for I in nonempty_subsets(X.coords)
        if not prob_at_most(X.max_count(I), X.size, delta, X.b * len(I))
    ]
    vset = [set(I) for I in violating]
    maximal = [I for I, s in zip(violating, vset) if not any(s < t for t in vset)]
    return maximal[0] if maximal else ()


def heavy_value(X: SupportDistribution, I: tuple[int, ...], delta: float) -> int:
    """Heaviest alpha on X_I (smallest encoding among ties); it exceeds 2^{-delta·b·|I|}."""
    vals, counts = X.counts(I)
    k = int(np.argmax(counts))
    if prob_at_most(int(counts[k]), X.size, delta, X.b * len(I)):
        raise ValueError(f"no value of X_{I} is heavier than 2^-{delta}·b·|I|")
    return int(vals[k])


def restore_density(X: SupportDistribution, delta: float) -> Restoration:
    I = low_entropy_set(X, delta)
    if not I:
        return Restoration((), 0, X)
    alpha = heavy_value(X, I, delta)
    conditioned = X.condition(I, alpha)
    if not is_dense(conditioned, delta):
        raise AssertionError(f"conditioning on X_{I}={alpha} failed to restore {delta}-density")
    return Restoration(I, alpha, conditioned)


# ---------------------------------------------------------------- bad and biased values


@dataclass
class BadReport:
    bad: bool
    I: tuple[int, ...] = ()
    z: int = 0
    reason: str = ""


def gadget_condition(alpha: int, Y: SupportDistribution, I: tuple[int, ...]) -> np.ndarray:
    """G^I(alpha_I, y_I) for every y in the support (alpha encoded over Y.coords)."""
    a_I = project(np.int64(alpha), Y.params, I)
    return gadget_outputs(a_I, project(Y.support, Y.params, I), Y.params.sub(I))


def is_bad(
    alpha: int,
    Y: SupportDistribution,
    delta: float = DELTA_LOW,
    floor_exponent: int = CONDITIONAL_FLOOR_EXPONENT,
) -> BadReport:
    """Exhaustive search over (I, z), including I = ∅, for a density or mass violation."""
    rest_all = Y.coords
    for I in [()] + nonempty_subsets(rest_all):
        rest = tuple(c for c in rest_all if c not in I)
        g = gadget_condition(alpha, Y, I)
        for z in range(1 << len(I)):
            hit = g == z
            count = int(hit.sum())
            # count / N < 2^{-|I| - floor_exponent}
            if count << (len(I) + floor_exponent) < Y.size:
                return BadReport(True, I, z, "mass")
            cond = SupportDistribution(Y.params.sub(rest), project(Y.support[hit], Y.params, rest))
            if not is_dense(cond, delta):
                return BadReport(True, I, z, "density")
    return BadReport(False)


@dataclass
class BiasReport:
    biased: bool
    worst_ratio: float
    witness: tuple | None = None


def restricted_coefficient(
    alpha: int, Y: SupportDistribution, I: tuple[int, ...], K: tuple[int, ...], beta: int
) -> float:
    """Fourier coefficient at alpha_I of gamma -> P[Y_{I ⊎ K} = (gamma, beta)], normalized by 2^{-b|I|}."""
    y_K = project(Y.support, Y.params, K)
    rows = Y.support[y_K == beta]
    if rows.size == 0:
        return 0.0
    g = gadget_condition(alpha, SupportDistribution(Y.params, rows), I)
    signs = 1.0 - 2.0 * (np.bitwise_count(g) & 1)
    return float(signs.sum()) / Y.size / float(1 << (Y.b * len(I)))


def is_biased(
    alpha: int,
    Y: SupportDistribution,
    eta,
    K: Iterable[int] | None = None,
    bias_exponent: float = BIAS_EXPONENT,
) -> BiasReport:
    """Check |coef_{I,K,beta}(alpha_I)| <= eta(K) · 2^{-bias_exponent·b·|I|}.

    ``K=None`` scans every K ⊆ J; ``eta`` may be a number or a callable of K.
    """
    eta_fn = eta if callable(eta) else (lambda _K: eta)
    Ks = [()] + nonempty_subsets(Y.coords) if K is None else [coordset(K)]
    worst, witness = 0.0, None
    for Kset in Ks:
        free = tuple(c for c in Y.coords if c not in Kset)
        betas = np.unique(project(Y.support, Y.params, Kset))
        level = eta_fn(Kset)
        for I in nonempty_subsets(free):
            thresh = level * 2.0 ** (-bias_exponent * Y.b * len(I))
            for beta in betas:
                coef = abs(restricted_coefficient(alpha, Y, I, Kset, int(beta)))
                ratio = coef / thresh if thresh > 0 else math.inf if coef > 0 else 0.0
                if ratio > worst:
                    worst, witness = ratio, (Kset, int(beta), I, coef, thresh)
    return BiasReport(worst <= 1.0, worst, witness)


def bias_hypothesis(alpha: int, Y: SupportDistribution) -> bool:
    """1/2-biased w.r.t. K=∅ and 2^{-delta_Y·b·|K|/2.2}-biased w.r.t. each nonempty K."""
    dY = density_exponent(Y)
    return is_biased(alpha, Y, lambda K: 0.5 if not K else 2.0 ** (-dY * Y.b * len(K) / 2.2)).biased


@dataclass
class BadFractionReport:
    fraction: float
    union_bound: float
    target: float
    bound_holds: bool
    fraction_within_target: bool


def bad_fraction(
    X: SupportDistribution, Y: SupportDistribution, delta: float = DELTA_LOW, n: int | None = None
) -> BadFractionReport:
    """Empirical P[X is delta-bad for Y] next to 4n^{-2} + Σ_K 2^{-δ_Y b|K|}/η_K² · n^{-2}."""
    n = n or max(len(X.coords), 1)
    vals, counts = np.unique(X.support, return_counts=True)
    bad = sum(int(c) for v, c in zip(vals, counts) if is_bad(int(v), Y, delta).bad)
    frac = bad / X.size
    dY = density_exponent(Y)
    tail = sum(
        2.0 ** (-dY * Y.b * len(K)) / (2.0 ** (-dY * Y.b * len(K) / 2.2)) ** 2
        for K in nonempty_subsets(Y.coords)
    )
    bound = 4.0 / n**2 + tail / n**2
    return BadFractionReport(frac, bound, 1.0 / n, frac <= bound, frac <= 1.0 / n)


# ---------------------------------------------------------------- pointwise uniformity


@dataclass
class UniformityReport:
    max_dev: float
    bound: float
    delta_x: float
    delta_y: float
    distribution: np.ndarray = field(repr=False)

    @property
    def holds(self) -> bool:
        return self.max_dev <= self.bound + 1e-12


def gadget_output_counts(X: SupportDistribution, Y: SupportDistribution) -> np.ndarray:
    """Number of (x, y) pairs with G^J(x, y) = z, for each z."""
    if X.params != Y.params:
        raise ValueError("X and Y must share (J, b)")
    grid = gadget_outputs(X.support[:, None], Y.support[None, :], X.params)
    return np.bincount(grid.reshape(-1), minlength=1 << len(X.coords))


def uniformity_deviation(X: SupportDistribution, Y: SupportDistribution) -> UniformityReport:
    counts = gadget_output_counts(X, Y)
    m = len(X.coords)
    total = X.size * Y.size
    dist = counts / total
    max_dev = float(np.max(np.abs((counts << m) / total - 1.0))) if m else 0.0
    dx, dy = density_exponent(X), density_exponent(Y)
    bound = sum(
        2.0 ** (-(dx + dy - 1) * X.b * len(I) / 2) for I in nonempty_subsets(X.coords)
    )
    report = UniformityReport(max_dev, bound, dx, dy, dist)
    if not report.holds:
        raise AssertionError(f"pointwise deviation {max_dev} exceeds bound {bound}")
    return report

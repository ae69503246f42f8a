"""Slow, independent reference implementations used as test oracles.

Nothing here imports the package's algorithms: everything is enumerated from
definitions with Python integers, tuples and fractions.
"""

from __future__ import annotations

from collections import Counter
from fractions import Fraction
from itertools import combinations, product

import numpy as np
from scipy.optimize import linprog


def points(coords):
    """All points of {0,1}^coords as dicts label -> bit."""
    return [dict(zip(coords, bits)) for bits in product((0, 1), repeat=len(coords))]


def table(f):
    """label-dict truth table of a BooleanFunction, keyed by the bit tuple in label order."""
    out = {}
    for idx, v in enumerate(f.values):
        out[tuple(idx >> k & 1 for k in range(len(f.coords)))] = float(v)
    return out


def subsets(coords):
    return [s for k in range(len(coords) + 1) for s in combinations(coords, k)]


def fourier_coeff(f, S):
    n = len(f.coords)
    total = 0.0
    for bits, v in table(f).items():
        x = dict(zip(f.coords, bits))
        total += v * (-1) ** sum(x[i] for i in S)
    return total / 2**n


def degree(f, tol=1e-9):
    return max((len(S) for S in subsets(f.coords) if abs(fourier_coeff(f, S)) > tol), default=0)


def block_sensitivity(f):
    """Max over x of the largest family of disjoint sensitive blocks, by plain search."""
    coords = f.coords
    t = table(f)
    best = 0
    for x in t:
        sensitive = []
        for S in subsets(range(len(coords)))[1:]:
            y = list(x)
            for k in S:
                y[k] ^= 1
            if t[tuple(y)] != t[x]:
                sensitive.append(frozenset(S))

        def pack(avail, start):
            most = 0
            for j in range(start, len(sensitive)):
                if sensitive[j] <= avail:
                    most = max(most, 1 + pack(avail - sensitive[j], j + 1))
            return most

        best = max(best, pack(frozenset(range(len(coords))), 0))
    return best


def restrict(f, fixed):
    """Dict-based restriction: returns (kept coords, list of values in index order)."""
    kept = tuple(c for c in f.coords if c not in fixed)
    t = table(f)
    vals = []
    for idx in range(2 ** len(kept)):
        x = {c: idx >> k & 1 for k, c in enumerate(kept)}
        x.update(fixed)
        vals.append(t[tuple(x[c] for c in f.coords)])
    return kept, vals


def best_error_monomial(values, n, d):
    """min ||f - p||_inf over degree-<=d polynomials, written in the 0/1 monomial basis."""
    pts = list(product((0, 1), repeat=n))
    monos = [S for S in subsets(tuple(range(n))) if len(S) <= d]
    A = np.array([[float(all(x[i] for i in S)) for S in monos] for x in pts])
    f = np.array([values[sum(b << k for k, b in enumerate(x))] for x in pts])
    k = len(monos)
    A_ub = np.vstack([np.hstack([A, -np.ones((len(pts), 1))]), np.hstack([-A, -np.ones((len(pts), 1))])])
    b_ub = np.concatenate([f, -f])
    c = np.zeros(k + 1)
    c[-1] = 1
    res = linprog(c, A_ub=A_ub, b_ub=b_ub, bounds=[(None, None)] * k + [(0, None)], method="highs")
    assert res.status == 0
    return res.fun


def ip(x, y):
    return bin(x & y).count("1") % 2


def words(x, b, m):
    return [(x >> (k * b)) & ((1 << b) - 1) for k in range(m)]


def gadget(x, y, b, m):
    """Tuple of per-coordinate inner products."""
    return tuple(ip(a, c) for a, c in zip(words(x, b, m), words(y, b, m)))


def marginal_counts(support, b, m, positions):
    c = Counter()
    for x in support:
        w = words(int(x), b, m)
        c[tuple(w[p] for p in positions)] += 1
    return c


def min_entropy(support, b, m, positions):
    if not positions:
        return 0.0
    c = marginal_counts(support, b, m, positions)
    return float(np.log2(len(support) / max(c.values())))


def is_dense(support, b, m, delta):
    """Exact: every nonempty marginal's max probability is <= 2^{-delta b |I|}."""
    d = Fraction(repr(float(delta)))
    for k in range(1, m + 1):
        for pos in combinations(range(m), k):
            top = max(marginal_counts(support, b, m, pos).values())
            # (top / N)^q <= 2^{-p b k}
            if (top ** d.denominator) * 2 ** (d.numerator * b * k) > len(support) ** d.denominator:
                return False
    return True


def uniformity(U, V, b, m):
    c = Counter(gadget(int(x), int(y), b, m) for x in U for y in V)
    total = len(U) * len(V)
    return max(abs(2**m * c.get(z, 0) / total - 1) for z in product((0, 1), repeat=m))


def transcript(P, x, y):
    """Replay a protocol on one input pair, one round at a time."""
    m = ""
    for i, rnd in enumerate(P.rounds):
        inp = x if rnd.speaker == "row" else y
        m += str(int(np.asarray(rnd.message(np.array([inp]), m)).reshape(-1)[0]))
    return m


def certificate_ok(cert, P):
    """Replay every pair of a certificate: transcript, fixed outputs, density of both marginals."""
    b, n = P.b, P.n
    for x, y in product(cert.rows.tolist(), cert.cols.tolist()):
        if transcript(P, x, y) != cert.transcript:
            return False
        z = gadget(x, y, b, n)
        if any(z[c - 1] != v for c, v in cert.z.items()):
            return False
    pos = [c - 1 for c in cert.J]
    if not pos:
        return True

    def side(inputs):
        return [sum(words(x, b, n)[q] << (k * b) for k, q in enumerate(pos)) for x in inputs]

    return (is_dense(side(cert.rows.tolist()), b, len(pos), cert.delta_high)
            and is_dense(side(cert.cols.tolist()), b, len(pos), cert.delta_high))

"""Truth tables on {0,1}^J, Fourier analysis and classical complexity measures.

A point x of {0,1}^J is encoded as an integer whose bit k is the value of the
k-th coordinate of J in label order. Subsets S of J use the same encoding, so
``coeffs[mask]`` is the Fourier coefficient of the character chi_S.
"""

from __future__ import annotations

import json
import re
from dataclasses import dataclass, field
from functools import lru_cache
from pathlib import Path
from typing import Callable, Iterable, Mapping, Sequence

import numpy as np

ZERO_TOL = 1e-9
MAX_ARITY = 20


def coordset(labels: Iterable[int]) -> tuple[int, ...]:
    labels = [int(v) for v in labels]
    if len(set(labels)) != len(labels):
        raise ValueError(f"duplicate coordinate labels in {labels}")
    return tuple(sorted(labels))


def popcount(mask: int) -> int:
    return bin(mask).count("1")


def mask_to_labels(mask: int, coords: Sequence[int]) -> tuple[int, ...]:
    return tuple(c for k, c in enumerate(coords) if mask >> k & 1)


def labels_to_mask(labels: Iterable[int], coords: Sequence[int]) -> int:
    pos = {c: k for k, c in enumerate(coords)}
    mask = 0
    for c in labels:
        if c not in pos:
            raise ValueError(f"coordinate {c} not in {tuple(coords)}")
        mask |= 1 << pos[c]
    return mask


@dataclass(frozen=True, eq=False)
class BooleanFunction:
    """Real-valued table over {0,1}^coords (sign-valued when every entry is ±1)."""

    coords: tuple[int, ...]
    values: np.ndarray

    def __post_init__(self):
        coords = coordset(self.coords)
        if len(coords) > MAX_ARITY:
            raise ValueError(f"|J| = {len(coords)} exceeds {MAX_ARITY}")
        values = np.array(self.values, dtype=float).reshape(-1)
        if values.size != 1 << len(coords):
            raise ValueError(f"table has {values.size} entries, expected {1 << len(coords)}")
        values.setflags(write=False)
        object.__setattr__(self, "coords", coords)
        object.__setattr__(self, "values", values)

    @property
    def arity(self) -> int:
        return len(self.coords)

    def is_sign_valued(self) -> bool:
        return bool(np.all(np.abs(self.values) == 1.0))

    def index(self, point: Mapping[int, int]) -> int:
        return sum((int(point[c]) & 1) << k for k, c in enumerate(self.coords))

    def point(self, index: int) -> dict[int, int]:
        return {c: index >> k & 1 for k, c in enumerate(self.coords)}

    def __call__(self, point: Mapping[int, int] | int) -> float:
        idx = point if isinstance(point, (int, np.integer)) else self.index(point)
        return float(self.values[idx])

    def __eq__(self, other):
        if not isinstance(other, BooleanFunction):
            return NotImplemented
        return self.coords == other.coords and np.array_equal(self.values, other.values)

    def __hash__(self):
        return hash((self.coords, self.values.tobytes()))

    def __repr__(self):
        return f"BooleanFunction(coords={self.coords}, values={self.values.tolist()})"

    def to_json(self) -> dict:
        return {"coords": list(self.coords), "values": [_json_number(v) for v in self.values]}


def _json_number(v: float):
    return int(v) if float(v).is_integer() else float(v)


# ---------------------------------------------------------------- catalog


def _default_coords(n: int, coords: Sequence[int] | None) -> tuple[int, ...]:
    if coords is None:
        return tuple(range(1, n + 1))
    coords = coordset(coords)
    if len(coords) != n:
        raise ValueError(f"expected {n} coordinates, got {coords}")
    return coords


def from_callable(coords: Sequence[int], fn: Callable[[tuple[int, ...]], float]) -> BooleanFunction:
    """Tabulate ``fn`` on every point; ``fn`` receives the bits in label order."""
    coords = coordset(coords)
    m = len(coords)
    vals = [fn(tuple(i >> k & 1 for k in range(m))) for i in range(1 << m)]
    return BooleanFunction(coords, vals)


def constant(n: int, value: float = 1.0, coords: Sequence[int] | None = None) -> BooleanFunction:
    return BooleanFunction(_default_coords(n, coords), np.full(1 << n, float(value)))


def character(subset: Iterable[int], coords: Sequence[int]) -> BooleanFunction:
    coords = coordset(coords)
    mask = labels_to_mask(subset, coords)
    idx = np.arange(1 << len(coords))
    return BooleanFunction(coords, 1.0 - 2.0 * (np.bitwise_count(idx & mask) & 1))


def parity(n: int, coords: Sequence[int] | None = None) -> BooleanFunction:
    coords = _default_coords(n, coords)
    return character(coords, coords)


def or_(n: int, coords: Sequence[int] | None = None) -> BooleanFunction:
    """OR in the ±1 convention: +1 on the all-zero input, -1 elsewhere."""
    vals = -np.ones(1 << n)
    vals[0] = 1.0
    return BooleanFunction(_default_coords(n, coords), vals)


def and_(n: int, coords: Sequence[int] | None = None) -> BooleanFunction:
    """AND in the ±1 convention: -1 on the all-one input, +1 elsewhere."""
    vals = np.ones(1 << n)
    vals[-1] = -1.0
    return BooleanFunction(_default_coords(n, coords), vals)


def random_sign_function(n: int, rng: np.random.Generator, coords: Sequence[int] | None = None) -> BooleanFunction:
    return BooleanFunction(_default_coords(n, coords), rng.choice([-1.0, 1.0], size=1 << n))


# ---------------------------------------------------------------- Fourier


def walsh_hadamard(values: np.ndarray) -> np.ndarray:
    """Unnormalized fast Walsh-Hadamard transform: out[S] = sum_x v[x] (-1)^{|S & x|}."""
    a = np.array(values, dtype=float)
    n = a.size
    h = 1
    while h < n:
        blk = a.reshape(-1, 2, h)
        a = np.concatenate((blk[:, 0] + blk[:, 1], blk[:, 0] - blk[:, 1]), axis=1).reshape(-1)
        h *= 2
    return a


@dataclass(frozen=True, eq=False)
class FourierTable:
    coords: tuple[int, ...]
    coeffs: np.ndarray

    def coeff(self, subset: Iterable[int]) -> float:
        return float(self.coeffs[labels_to_mask(subset, self.coords)])

    def as_dict(self, tol: float = 0.0) -> dict[tuple[int, ...], float]:
        return {
            mask_to_labels(s, self.coords): float(c)
            for s, c in enumerate(self.coeffs)
            if abs(c) > tol
        }

    def inverse(self) -> BooleanFunction:
        return BooleanFunction(self.coords, walsh_hadamard(self.coeffs))


def fourier(f: BooleanFunction) -> FourierTable:
    coeffs = walsh_hadamard(f.values) / float(1 << f.arity)
    coeffs.setflags(write=False)
    return FourierTable(f.coords, coeffs)


def degree(f: BooleanFunction) -> int:
    return _degree_of_table(f.arity, f.values.tobytes())


@lru_cache(maxsize=1 << 16)
def _degree_of_table(m: int, raw: bytes) -> int:
    coeffs = walsh_hadamard(np.frombuffer(raw, dtype=float)) / float(1 << m)
    nz = np.flatnonzero(np.abs(coeffs) > ZERO_TOL)
    if nz.size == 0:
        return 0
    return int(np.bitwise_count(nz).max())


# ---------------------------------------------------------------- block sensitivity


@dataclass(frozen=True)
class BlockSensitivity:
    value: int
    x: int
    blocks: tuple[int, ...]

    def __iter__(self):
        return iter((self.value, self.x, self.blocks))


def block_sensitivity(f: BooleanFunction) -> BlockSensitivity:
    """Exact bs(f) with a witness input (point index) and disjoint sensitive blocks (masks)."""
    if not f.is_sign_valued():
        raise ValueError("block sensitivity needs a sign-valued function")
    return _bs_of_table(f.arity, f.values.tobytes())


def bs(f: BooleanFunction) -> int:
    return block_sensitivity(f).value


@lru_cache(maxsize=1 << 17)
def _bs_of_table(m: int, raw: bytes) -> BlockSensitivity:
    values = np.frombuffer(raw, dtype=float)
    size = 1 << m
    pts = np.arange(size)
    differs = values[:, None] != values[pts[:, None] ^ pts[None, :]]
    if m <= SMALL_PACKING_ARITY:
        sizes, reqs, blocks = _packings(m)
        ok = ~np.any(reqs[None, :, :] & ~differs[:, None, :], axis=2)  # (x, packing)
        score = np.where(ok, sizes[None, :], -1)
        x = int(np.argmax(score.max(axis=1)))
        k = int(np.argmax(score[x]))
        return BlockSensitivity(int(sizes[k]), x, blocks[k])
    # row x as an integer: bit B set when flipping block B changes f(x)
    weights = [1 << B for B in range(size)]
    masks = [sum(w for w, d in zip(weights, row) if d) for row in differs.tolist()]
    best = BlockSensitivity(0, 0, ())
    for x, sensitive in enumerate(masks):
        blocks = _max_packing(m, sensitive)
        if len(blocks) > best.value:
            best = BlockSensitivity(len(blocks), x, blocks)
    return best


SMALL_PACKING_ARITY = 5


@lru_cache(maxsize=None)
def _packings(m: int) -> tuple[np.ndarray, np.ndarray, list[tuple[int, ...]]]:
    """Every family of pairwise disjoint nonempty blocks of [m], largest families first."""
    fams: list[tuple[int, ...]] = []

    def extend(avail: int, acc: tuple[int, ...]) -> None:
        fams.append(acc)
        low_limit = acc[-1] if acc else 0
        sub = avail
        while sub:
            if sub > low_limit:
                extend(avail & ~sub, acc + (sub,))
            sub = (sub - 1) & avail

    extend((1 << m) - 1, ())
    fams.sort(key=lambda fam: (-len(fam), sorted(fam)))
    reqs = np.zeros((len(fams), 1 << m), dtype=bool)
    for k, fam in enumerate(fams):
        reqs[k, list(fam)] = True
    return np.array([len(f) for f in fams]), reqs, [tuple(sorted(f)) for f in fams]


@lru_cache(maxsize=1 << 16)
def _max_packing(m: int, sensitive: int) -> tuple[int, ...]:
    # bit B of `sensitive` marks block B as sensitive. A sensitive block can be
    # swapped for any sensitive sub-block without hurting disjointness, so only
    # inclusion-minimal blocks are searched.
    sens = [b for b in range(1, 1 << m) if sensitive >> b & 1]
    minimal = [b for b in sens if not any(s != b and s & b == s for s in sens)]
    minimal.sort(key=lambda b: (popcount(b), b))
    containing = [[b for b in minimal if b >> k & 1] for k in range(m)]

    @lru_cache(maxsize=None)
    def best(avail: int) -> tuple[int, ...]:
        # the lowest free coordinate is either left uncovered or covered by one block
        if avail == 0:
            return ()
        low = (avail & -avail).bit_length() - 1
        choice = best(avail & ~(1 << low))
        for b in containing[low]:
            if b & avail == b:
                cand = (b,) + best(avail & ~b)
                if len(cand) > len(choice):
                    choice = cand
        return choice

    return best((1 << m) - 1)


# ---------------------------------------------------------------- restrictions


@dataclass(frozen=True)
class Restriction:
    kept: tuple[int, ...]
    fixed: Mapping[int, int] = field(default_factory=dict)


def restrict(f: BooleanFunction, r: Restriction) -> BooleanFunction:
    kept = coordset(r.kept)
    fixed = tuple(sorted((int(k), int(v)) for k, v in r.fixed.items()))
    return BooleanFunction(kept, f.values[_restriction_index(f.coords, kept, fixed)])


@lru_cache(maxsize=1 << 12)
def _restriction_index(coords: tuple[int, ...], kept: tuple[int, ...], fixed: tuple) -> np.ndarray:
    names = {c for c, _ in fixed}
    if set(kept) & names or set(kept) | names != set(coords) or len(names) != len(fixed):
        raise ValueError(
            f"kept {kept} and fixed {sorted(names)} must partition the domain {coords}"
        )
    if any(v not in (0, 1) for _, v in fixed):
        raise ValueError("fixed values must be bits")
    pos = {c: k for k, c in enumerate(coords)}
    base = sum(v << pos[c] for c, v in fixed)
    kidx = np.arange(1 << len(kept))
    jidx = np.full(kidx.shape, base)
    for k, c in enumerate(kept):
        jidx |= ((kidx >> k) & 1) << pos[c]
    jidx.setflags(write=False)
    return jidx


def fix(f: BooleanFunction, assignment: Mapping[int, int]) -> BooleanFunction:
    """Fix the given coordinates, keeping all others."""
    kept = tuple(c for c in f.coords if c not in assignment)
    return restrict(f, Restriction(kept, dict(assignment)))


# ---------------------------------------------------------------- entropic measures

Measure = Callable[[BooleanFunction], int]

MEASURES: dict[str, Measure] = {
    "degree": degree,
    "deg": degree,
    "block_sensitivity": bs,
    "bs": bs,
}


def resolve_measure(measure: str | Measure) -> Measure:
    if callable(measure):
        return measure
    try:
        return MEASURES[measure]
    except KeyError:
        raise ValueError(f"unknown measure {measure!r}; expected one of {sorted(MEASURES)}") from None


def entropic_fix(f: BooleanFunction, measure: str | Measure, i: int) -> tuple[int, BooleanFunction]:
    """Fix coordinate ``i`` to the bit that keeps ``measure`` largest (ties prefer 0)."""
    if i not in f.coords:
        raise ValueError(f"coordinate {i} not in {f.coords}")
    mfn = resolve_measure(measure)
    g0 = fix(f, {i: 0})
    g1 = fix(f, {i: 1})
    return (1, g1) if mfn(g1) > mfn(g0) else (0, g0)


def entropic_fix_chain(
    f: BooleanFunction, measure: str | Measure, order: Sequence[int]
) -> tuple[dict[int, int], BooleanFunction]:
    order = [int(i) for i in order]
    if len(set(order)) != len(order):
        raise ValueError(f"duplicate coordinates in {order}")
    z: dict[int, int] = {}
    g = f
    for i in order:
        z[i], g = entropic_fix(g, measure, i)
    return z, g


# ---------------------------------------------------------------- I/O


class SpecParseError(ValueError):
    def __init__(self, message: str, line: int = 1, column: int = 1):
        super().__init__(f"{message} (line {line}, column {column})")
        self.line = line
        self.column = column


_CATALOG = re.compile(r"^(parity|or|and|const):(\d+)(?::(-?1))?$")


def function_from_json(obj: Mapping) -> BooleanFunction:
    try:
        return BooleanFunction(tuple(obj["coords"]), obj["values"])
    except (KeyError, TypeError) as exc:
        raise SpecParseError(f"truth table needs 'coords' and 'values': {exc}") from None


def load_function(spec: str) -> BooleanFunction:
    """Resolve ``parity:n``, ``or:n``, ``and:n``, ``const:n[:±1]``, ``readonce:<formula>`` or a JSON path."""
    text = spec.strip()
    if text.startswith("readonce:"):
        from liftlab.lifting import parse_readonce

        try:
            return parse_readonce(text[len("readonce:"):]).to_function()
        except SpecParseError as exc:
            raise SpecParseError(str(exc).rsplit(" (line", 1)[0], 1, exc.column + len("readonce:")) from None
    m = _CATALOG.match(text)
    if m:
        kind, n = m.group(1), int(m.group(2))
        if n > MAX_ARITY:
            raise SpecParseError(f"arity {n} exceeds {MAX_ARITY}", 1, len(kind) + 2)
        if kind == "parity":
            return parity(n)
        if kind == "or":
            return or_(n)
        if kind == "and":
            return and_(n)
        return constant(n, float(m.group(3) or 1))
    if ":" in text and not Path(text).exists():
        col = text.index(":") + 1
        raise SpecParseError(f"unknown function spec {text!r}", 1, col)
    path = Path(text)
    try:
        raw = path.read_text()
    except OSError as exc:
        raise FileNotFoundError(f"cannot read function file {text}: {exc.strerror}") from None
    try:
        obj = json.loads(raw)
    except json.JSONDecodeError as exc:
        raise SpecParseError(exc.msg, exc.lineno, exc.colno) from None
    return function_from_json(obj)

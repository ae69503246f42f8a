"""Inner-product gadget on Λ = {0,1}^b and its coordinatewise composition.

A word tuple x ∈ Λ^J is one integer: the word of the k-th coordinate of J
(label order) occupies bits [k·b, (k+1)·b). Supports are 1-d integer arrays in
that encoding; repeated entries are allowed and model auxiliary registers.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

from liftlab.boolfn import BooleanFunction, coordset, labels_to_mask
from liftlab.limits import GuardError, check_guard

MAX_MATRIX_ENTRIES = 1 << 26


@dataclass(frozen=True)
class GadgetParams:
    b: int
    coords: tuple[int, ...]

    def __post_init__(self):
        if self.b < 1:
            raise ValueError(f"b must be >= 1, got {self.b}")
        object.__setattr__(self, "coords", coordset(self.coords))

    @property
    def m(self) -> int:
        return len(self.coords)

    @property
    def bits(self) -> int:
        return self.b * self.m

    @property
    def word_mask(self) -> int:
        return (1 << self.b) - 1

    def full_support(self) -> np.ndarray:
        check_guard(self.bits, f"Λ^J with b={self.b}, |J|={self.m}")
        return np.arange(1 << self.bits, dtype=np.int64)

    def encode(self, words: dict[int, int] | Sequence[int]) -> int:
        if isinstance(words, dict):
            words = [words[c] for c in self.coords]
        if len(words) != self.m:
            raise ValueError(f"expected {self.m} words, got {len(words)}")
        out = 0
        for k, w in enumerate(words):
            if not 0 <= int(w) <= self.word_mask:
                raise ValueError(f"word {w} is not a {self.b}-bit value")
            out |= int(w) << (k * self.b)
        return out

    def decode(self, x: int) -> tuple[int, ...]:
        return tuple((int(x) >> (k * self.b)) & self.word_mask for k in range(self.m))

    def sub(self, coords: Iterable[int]) -> GadgetParams:
        coords = coordset(coords)
        if not set(coords) <= set(self.coords):
            raise ValueError(f"{coords} is not a subset of {self.coords}")
        return GadgetParams(self.b, coords)


def ip(x: int, y: int, b: int) -> int:
    """Inner product mod 2 of two b-bit words."""
    if not (0 <= x < 1 << b and 0 <= y < 1 << b):
        raise ValueError(f"inputs must be {b}-bit words")
    return bin(x & y).count("1") & 1


def project(words: np.ndarray, src: GadgetParams, coords: Iterable[int]) -> np.ndarray:
    """Re-encode each word tuple over ``src.coords`` as a tuple over ``coords``."""
    dst = src.sub(coords)
    words = np.asarray(words, dtype=np.int64)
    pos = {c: k for k, c in enumerate(src.coords)}
    out = np.zeros(words.shape, dtype=np.int64)
    for k, c in enumerate(dst.coords):
        out |= ((words >> (pos[c] * src.b)) & src.word_mask) << (k * src.b)
    return out


def gadget_outputs(x: np.ndarray, y: np.ndarray, params: GadgetParams) -> np.ndarray:
    """G^J(x, y) as point indices of {0,1}^J, broadcasting x against y."""
    prod = np.asarray(x, dtype=np.int64) & np.asarray(y, dtype=np.int64)
    out = np.zeros(prod.shape, dtype=np.int64)
    for k in range(params.m):
        block = (prod >> (k * params.b)) & params.word_mask
        out |= (np.bitwise_count(block).astype(np.int64) & 1) << k
    return out


def gadget_map(x: int, y: int, params: GadgetParams) -> int:
    return int(gadget_outputs(np.int64(x), np.int64(y), params))


def gadget_grid(U: np.ndarray, V: np.ndarray, params: GadgetParams) -> np.ndarray:
    """Matrix of G^J(x_u, y_v) point indices over U × V."""
    U = np.asarray(U, dtype=np.int64)
    V = np.asarray(V, dtype=np.int64)
    if U.size * V.size > MAX_MATRIX_ENTRIES:
        raise GuardError(f"{U.size} x {V.size} matrix exceeds {MAX_MATRIX_ENTRIES} entries")
    return gadget_outputs(U[:, None], V[None, :], params)


@dataclass(frozen=True, eq=False)
class ComposedMatrix:
    rows: np.ndarray
    cols: np.ndarray
    entries: np.ndarray
    params: GadgetParams

    @property
    def shape(self) -> tuple[int, int]:
        return self.entries.shape


def compose_matrix(f: BooleanFunction, U: np.ndarray, V: np.ndarray, params: GadgetParams) -> ComposedMatrix:
    """F(u, v) = f(G^J(x_u, y_v))."""
    if f.coords != params.coords:
        raise ValueError(f"function domain {f.coords} does not match J = {params.coords}")
    check_guard(params.bits, "composed matrix side")
    grid = gadget_grid(U, V, params)
    return ComposedMatrix(np.asarray(U), np.asarray(V), f.values[grid], params)


def character_matrix(S: Iterable[int], U: np.ndarray, V: np.ndarray, params: GadgetParams) -> ComposedMatrix:
    """M_S(u, v) = chi_S(G^J(x_u, y_v)); M_∅ is all-ones."""
    mask = labels_to_mask(S, params.coords)
    grid = gadget_grid(U, V, params)
    entries = 1.0 - 2.0 * (np.bitwise_count(grid & mask) & 1)
    return ComposedMatrix(np.asarray(U), np.asarray(V), entries, params)


# ---------------------------------------------------------------- support files


def load_supports(path: str | Path) -> tuple[GadgetParams, np.ndarray, np.ndarray]:
    obj = json.loads(Path(path).read_text())
    params = GadgetParams(int(obj["b"]), tuple(obj["coords"]))
    rows = np.array(sorted(int(v) for v in obj["rows"]), dtype=np.int64)
    cols = np.array(sorted(int(v) for v in obj["cols"]), dtype=np.int64)
    limit = 1 << params.bits
    if rows.size == 0 or cols.size == 0:
        raise ValueError("supports must be nonempty")
    if rows.min() < 0 or cols.min() < 0 or rows.max() >= limit or cols.max() >= limit:
        raise ValueError(f"support entries must lie in [0, 2^{params.bits})")
    return params, rows, cols


def supports_to_json(params: GadgetParams, rows: np.ndarray, cols: np.ndarray) -> dict:
    return {
        "b": params.b,
        "coords": list(params.coords),
        "rows": sorted(int(v) for v in rows),
        "cols": sorted(int(v) for v in cols),
    }

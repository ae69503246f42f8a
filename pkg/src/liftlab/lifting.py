"""End-to-end experiments: adversarial walks, the hybrid lifting pipeline, read-once formulas.

Nothing in a report is copied from an asymptotic formula; every number is
recomputed from the primitives in the other modules. The asymptotic targets
are carried alongside for comparison and never asserted.
"""

from __future__ import annotations

import math
import re
from dataclasses import dataclass, field
from typing import Iterator

from liftlab.approxdeg import DEFAULT_EPSILON, approx_degree, dual_polynomial
from liftlab.boolfn import (
    BooleanFunction,
    MAX_ARITY,
    Measure,
    Restriction,
    SpecParseError,
    bs,
    degree,
    entropic_fix,
    from_callable,
    resolve_measure,
    restrict,
)
from liftlab.density import DELTA_HIGH, DELTA_LOW
from liftlab.discrepancy import build_witness, compose_from, gen_discrepancy_bound, witness_norm_bounds
from liftlab.gadget import project
from liftlab.rectangles import (
    QUERY_RATE,
    DeterministicProtocol,
    StructuredFailure,
    TreeRun,
    run_density_restoring_tree,
)

PROTOCOL_ERROR = 0.1
TRADEOFF_RATE = 300


# ---------------------------------------------------------------- read-once formulas


@dataclass(frozen=True)
class Leaf:
    var: int
    negated: bool = False

    def __str__(self):
        return f"NOT(x{self.var})" if self.negated else f"x{self.var}"


@dataclass(frozen=True)
class Gate:
    op: str
    children: tuple

    def __str__(self):
        return f"{self.op}({','.join(map(str, self.children))})"


Node = Leaf | Gate


def _negate(node: Node) -> Node:
    """Push a negation down to the leaves (De Morgan)."""
    if isinstance(node, Leaf):
        return Leaf(node.var, not node.negated)
    return Gate("OR" if node.op == "AND" else "AND", tuple(_negate(c) for c in node.children))


def _evaluate(node: Node, bits: dict[int, int]) -> int:
    if isinstance(node, Leaf):
        return bits[node.var] ^ int(node.negated)
    vals = (_evaluate(c, bits) for c in node.children)
    return int(all(vals)) if node.op == "AND" else int(any(vals))


def _leaves(node: Node) -> list[int]:
    if isinstance(node, Leaf):
        return [node.var]
    return [v for c in node.children for v in _leaves(c)]


@dataclass(frozen=True)
class ReadOnceFormula:
    """AND/OR tree over distinct variables; negations live on the leaves."""

    root: Node

    def __post_init__(self):
        seen = _leaves(self.root)
        if len(seen) != len(set(seen)):
            dup = sorted({v for v in seen if seen.count(v) > 1})
            raise ValueError(f"variables {dup} appear more than once")

    @property
    def variables(self) -> tuple[int, ...]:
        return tuple(sorted(_leaves(self.root)))

    @property
    def n(self) -> int:
        return len(self.variables)

    def __str__(self):
        return str(self.root)

    def to_function(self) -> BooleanFunction:
        """+1 where the formula outputs 0, -1 where it outputs 1."""
        coords = self.variables
        if len(coords) > MAX_ARITY:
            raise ValueError(f"{len(coords)} variables exceed {MAX_ARITY}")
        return from_callable(coords, lambda x: 1.0 - 2.0 * _evaluate(self.root, dict(zip(coords, x))))


_TOKEN = re.compile(r"\s*(?:(AND|OR|NOT)\b|x(\d+)\b|([(),])|(\S))")


class _Parser:
    def __init__(self, text: str):
        self.text = text
        self.tokens: list[tuple[str, str, int]] = []
        pos = 0
        while pos < len(text):
            m = _TOKEN.match(text, pos)
            if m is None:  # trailing whitespace
                break
            tok = m.group(0)
            col = m.start() + len(tok) - len(tok.lstrip()) + 1
            if m.group(1):
                self.tokens.append(("kw", m.group(1), col))
            elif m.group(2):
                self.tokens.append(("var", m.group(2), col))
            elif m.group(3):
                self.tokens.append(("punct", m.group(3), col))
            else:
                raise SpecParseError(f"unexpected character {m.group(4)!r}", 1, col)
            pos = m.end()
        self.i = 0
        self.seen: dict[int, int] = {}

    def _peek(self):
        return self.tokens[self.i] if self.i < len(self.tokens) else ("eof", "", len(self.text) + 1)

    def _take(self, kind: str, value: str | None = None):
        tok = self._peek()
        if tok[0] != kind or (value is not None and tok[1] != value):
            want = value or kind
            got = tok[1] or "end of input"
            raise SpecParseError(f"expected {want!r}, got {got!r}", 1, tok[2])
        self.i += 1
        return tok

    def parse(self) -> Node:
        node = self.expr()
        tok = self._peek()
        if tok[0] != "eof":
            raise SpecParseError(f"trailing input {tok[1]!r}", 1, tok[2])
        return node

    def expr(self) -> Node:
        tok = self._peek()
        if tok[0] == "var":
            self.i += 1
            var = int(tok[1])
            if var < 1:
                raise SpecParseError("variables are numbered from x1", 1, tok[2])
            if var in self.seen:
                raise SpecParseError(
                    f"x{var} repeats (first at column {self.seen[var]}); formulas must be read-once", 1, tok[2]
                )
            self.seen[var] = tok[2]
            return Leaf(var)
        if tok[0] == "kw":
            self.i += 1
            self._take("punct", "(")
            args = [self.expr()]
            while self._peek()[1] == ",":
                self.i += 1
                args.append(self.expr())
            self._take("punct", ")")
            if tok[1] == "NOT":
                if len(args) != 1:
                    raise SpecParseError("NOT takes one argument", 1, tok[2])
                return _negate(args[0])
            if len(args) < 2:
                raise SpecParseError(f"{tok[1]} needs at least two arguments", 1, tok[2])
            return Gate(tok[1], tuple(args))
        raise SpecParseError(f"expected a variable or gate, got {tok[1] or 'end of input'!r}", 1, tok[2])


def parse_readonce(text: str) -> ReadOnceFormula:
    """Parse prefix notation such as ``AND(x1,OR(x2,NOT(x3)))``."""
    return ReadOnceFormula(_Parser(text).parse())


def readonce_degree(formula: ReadOnceFormula) -> int:
    d = degree(formula.to_function())
    if d != formula.n:
        raise AssertionError(f"read-once formula {formula} has degree {d} != {formula.n}")
    return d


def _set_partitions(items: tuple[int, ...]) -> Iterator[list[tuple[int, ...]]]:
    if not items:
        yield []
        return
    first, rest = items[0], items[1:]
    for part in _set_partitions(rest):
        yield [(first,)] + part
        for k in range(len(part)):
            yield part[:k] + [(first,) + part[k]] + part[k + 1:]


def _trees(variables: tuple[int, ...]) -> Iterator[Node]:
    if len(variables) == 1:
        yield Leaf(variables[0])
        yield Leaf(variables[0], True)
        return
    for blocks in _set_partitions(variables):
        if len(blocks) < 2:
            continue
        for op in ("AND", "OR"):
            yield from _gate_children(op, blocks, 0, ())


def _gate_children(op: str, blocks, k: int, acc: tuple) -> Iterator[Node]:
    if k == len(blocks):
        yield Gate(op, acc)
        return
    for child in _trees(tuple(sorted(blocks[k]))):
        yield from _gate_children(op, blocks, k + 1, acc + (child,))


def enumerate_readonce(n: int) -> Iterator[ReadOnceFormula]:
    """Every read-once formula on x1..xn: each set partition into >= 2 blocks under AND or OR,
    recursively, with both leaf polarities. Shapes equal up to child order appear once."""
    if n < 1:
        raise ValueError("n must be >= 1")
    for node in _trees(tuple(range(1, n + 1))):
        yield ReadOnceFormula(node)


# ---------------------------------------------------------------- adversarial walk


@dataclass
class Walk:
    run: TreeRun
    z: dict[int, int]
    restricted: BooleanFunction
    measure_before: int
    measure_after: int

    @property
    def failure(self) -> StructuredFailure | None:
        return self.run.failure


def adversarial_walk(
    f: BooleanFunction,
    P: DeterministicProtocol,
    measure: str | Measure = "degree",
    delta_high: float = DELTA_HIGH,
    delta_low: float = DELTA_LOW,
) -> Walk:
    """Run the density-restoring tree, answering every query by ``entropic_fix``."""
    if f.coords != P.params.coords:
        raise ValueError(f"function domain {f.coords} does not match protocol coordinates {P.params.coords}")
    mfn = resolve_measure(measure)
    state = {"g": f, "z": {}}

    def oracle(I: tuple[int, ...]) -> dict[int, int]:
        out = {}
        for i in I:
            out[i], state["g"] = entropic_fix(state["g"], mfn, i)
        state["z"].update(out)
        return out

    run = run_density_restoring_tree(P, oracle, delta_high, delta_low)
    z = dict(state["z"])
    g = restrict(f, Restriction(tuple(c for c in f.coords if c not in z), z))
    if g != state["g"]:
        raise AssertionError("walk state diverged from the direct restriction")
    before, after = mfn(f), mfn(g)
    if after < before - len(z):
        raise AssertionError(f"measure fell from {before} to {after} after {len(z)} queries")
    return Walk(run, z, g, before, after)


# ---------------------------------------------------------------- hybrid pipeline


@dataclass
class TradeoffReport:
    n: int
    b: int
    c: int
    measure: str
    transcript: str
    J: tuple[int, ...]
    z: dict[int, int]
    queried: int
    query_budget: float
    budget_asserted: bool
    measure_before: int
    restricted_measure: int | None = None
    restricted_degree: int | None = None
    restricted_bs: int | None = None
    approx_degree: int | None = None
    dual_degree: int | None = None
    dual_correlation: float | None = None
    discrepancy: dict | None = None
    norm_bounds: dict | None = None
    targets: dict = field(default_factory=dict)
    restricted_function: BooleanFunction | None = None
    failure: StructuredFailure | None = None
    vacuous: bool = False
    degenerate: bool = False
    run: TreeRun | None = field(default=None, repr=False)

    @property
    def discrepancy_bits(self) -> float | None:
        return None if self.discrepancy is None else self.discrepancy["bound_bits"]

    def flags(self) -> dict:
        return {"vacuous": self.vacuous, "degenerate": self.degenerate, "failure": self.failure is not None}

    def to_json(self) -> dict:
        return {
            "n": self.n,
            "b": self.b,
            "c": self.c,
            "measure": self.measure,
            "transcript": self.transcript,
            "J": list(self.J),
            "z": {str(k): v for k, v in sorted(self.z.items())},
            "queried": self.queried,
            "query_budget": self.query_budget,
            "budget_asserted": self.budget_asserted,
            "measure_before": self.measure_before,
            "restricted_measure": self.restricted_measure,
            "restricted_degree": self.restricted_degree,
            "restricted_bs": self.restricted_bs,
            "approx_degree": self.approx_degree,
            "dual_degree": self.dual_degree,
            "dual_correlation": self.dual_correlation,
            "discrepancy": self.discrepancy,
            "norm_bounds": self.norm_bounds,
            "targets": self.targets,
            "restricted_function": None if self.restricted_function is None else self.restricted_function.to_json(),
            "failure": None if self.failure is None else self.failure.to_json(),
            "flags": self.flags(),
        }

    def csv_row(self) -> dict:
        return {
            "n": self.n, "b": self.b, "c": self.c, "queried": self.queried,
            "query_budget": self.query_budget, "measure_before": self.measure_before,
            "restricted_measure": self.restricted_measure, "approx_degree": self.approx_degree,
            "dual_correlation": self.dual_correlation, "discrepancy_bits": self.discrepancy_bits,
            **self.flags(),
        }


def _measure_name(measure: str | Measure) -> str:
    if isinstance(measure, str):
        return {"deg": "degree", "bs": "block_sensitivity"}.get(measure, measure)
    return getattr(measure, "__name__", "custom")


def hybrid_lifting_pipeline(
    f: BooleanFunction,
    P: DeterministicProtocol,
    epsilon: float = DEFAULT_EPSILON,
    error: float = PROTOCOL_ERROR,
    measure: str | Measure = "degree",
    delta_high: float = DELTA_HIGH,
    delta_low: float = DELTA_LOW,
) -> TradeoffReport:
    """Walk the tree, then evaluate the lifting-on-rectangle quantities on the certified rectangle."""
    walk = adversarial_walk(f, P, measure, delta_high, delta_low)
    run = walk.run
    deg_f = degree(f)
    targets = {
        "query_budget": QUERY_RATE * P.c / P.b,
        "tradeoff_threshold": deg_f * P.b / TRADEOFF_RATE,
        "in_tradeoff_regime": P.c <= deg_f * P.b / TRADEOFF_RATE,
    }
    report = TradeoffReport(
        n=P.n, b=P.b, c=P.c, measure=_measure_name(measure), transcript=run.transcript,
        J=tuple(c for c in f.coords if c not in walk.z), z=walk.z, queried=len(walk.z),
        query_budget=run.query_budget, budget_asserted=run.budget_asserted,
        measure_before=walk.measure_before, targets=targets, run=run,
    )
    if run.failure is not None:
        report.failure = run.failure
        report.vacuous = True
        return report

    cert = run.certificate
    g = walk.restricted
    report.restricted_function = g
    report.restricted_measure = walk.measure_after
    report.restricted_degree = degree(g)
    report.restricted_bs = bs(g)
    report.degenerate = report.restricted_degree == 0
    report.approx_degree = approx_degree(g, epsilon).d
    targets["certified_bits_target"] = report.approx_degree * P.b
    targets["sqrt_degree_target"] = math.sqrt(report.restricted_degree) * P.b

    if g.arity == 0:
        # no coordinate left: nothing to correlate with beyond the constant
        report.dual_degree = 0
        report.dual_correlation = 0.0
        report.vacuous = True
        return report

    # a witness below degree 1 certifies nothing, so the constant part is always projected out
    report.dual_degree = max(1, report.approx_degree)
    witness = dual_polynomial(g, report.dual_degree, epsilon)
    report.dual_correlation = witness.correlation

    params = P.params.sub(cert.J)
    U = project(cert.rows, P.params, cert.J)
    V = project(cert.cols, P.params, cert.J)
    F = compose_from(g, U, V, params)
    W = build_witness(witness, U, V, params)
    bound = gen_discrepancy_bound(F, W, error)
    report.discrepancy = {**bound.to_json(), "numerator": bound.numerator, "error": error,
                          "rows": bound.rows, "cols": bound.cols}
    nb = witness_norm_bounds(g, witness, U, V, params)
    report.norm_bounds = {
        "one_norm": nb.one_norm, "one_norm_bound": nb.one_norm_bound,
        "correlation": nb.correlation, "correlation_bound": nb.correlation_bound,
        "deviation": nb.deviation, "holds": nb.holds,
    }
    report.vacuous = bound.vacuous
    return report

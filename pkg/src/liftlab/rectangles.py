"""Deterministic protocols as rectangle partitions, and the density-restoring decision tree.

Inputs on each side are word tuples in Λ^n over coordinates 1..n, encoded as
in :mod:`liftlab.gadget`. A round's message function maps an array of the
speaker's inputs and the transcript prefix (a string of '0'/'1') to bits.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Mapping

import numpy as np

from liftlab.density import (
    DELTA_HIGH,
    DELTA_LOW,
    SupportDistribution,
    heavy_value,
    is_bad,
    is_dense,
    low_entropy_set,
    min_entropy,
)
from liftlab.gadget import GadgetParams, gadget_outputs, project
from liftlab.limits import GuardError, check_guard

ROW, COL = "row", "col"
MAX_SIDE_BITS = 10
QUERY_RATE = 200


class ProtocolError(ValueError):
    """Malformed protocol: non-total message table, bad speaker, wrong sizes."""


MessageFn = Callable[[np.ndarray, str], np.ndarray]


@dataclass
class Round:
    speaker: str
    message: MessageFn
    spec: dict | None = None

    def __post_init__(self):
        if self.speaker not in (ROW, COL):
            raise ProtocolError(f"speaker must be 'row' or 'col', got {self.speaker!r}")


@dataclass
class DeterministicProtocol:
    b: int
    n: int
    rounds: list[Round]

    def __post_init__(self):
        if self.b * self.n > MAX_SIDE_BITS:
            raise GuardError(f"b·n = {self.b * self.n} exceeds the {MAX_SIDE_BITS}-bit enumeration guard")
        check_guard(self.b * self.n, "protocol input side")

    @property
    def c(self) -> int:
        return len(self.rounds)

    @property
    def params(self) -> GadgetParams:
        return GadgetParams(self.b, tuple(range(1, self.n + 1)))

    @property
    def side_size(self) -> int:
        return 1 << (self.b * self.n)

    def message(self, i: int, inputs: np.ndarray, prefix: str) -> np.ndarray:
        out = np.asarray(self.rounds[i].message(np.asarray(inputs, dtype=np.int64), prefix))
        out = np.broadcast_to(out, np.shape(inputs)).astype(np.int64)
        if out.size and (out.min() < 0 or out.max() > 1):
            raise ProtocolError(f"round {i + 1} produced non-bit messages")
        return out

    def transcript(self, x: int, y: int) -> str:
        m = ""
        for i, rnd in enumerate(self.rounds):
            inp = x if rnd.speaker == ROW else y
            m += str(int(self.message(i, np.array([inp]), m)[0]))
        return m

    def to_json(self) -> dict:
        if any(r.spec is None for r in self.rounds):
            raise ProtocolError("protocol has rounds without a serializable table")
        return {"b": self.b, "n": self.n, "c": self.c, "rounds": [r.spec for r in self.rounds]}


def _table_message(table: Mapping[str, np.ndarray]) -> MessageFn:
    def message(inputs: np.ndarray, prefix: str) -> np.ndarray:
        if prefix not in table:
            raise ProtocolError(f"message table has no entry for prefix {prefix!r}")
        return table[prefix][inputs]

    return message


def round_from_spec(spec: Mapping, b: int, n: int, index: int) -> Round:
    """One round from its JSON form: ``bit``, ``const`` or a per-prefix ``table``."""
    speaker = spec.get("speaker", ROW if index % 2 == 0 else COL)
    size = 1 << (b * n)
    if "bit" in spec:
        k = int(spec["bit"])
        if not 0 <= k < b * n:
            raise ProtocolError(f"round {index + 1}: bit {k} outside the {b * n}-bit input")
        return Round(speaker, lambda x, _p, k=k: (x >> k) & 1, dict(spec, speaker=speaker))
    if "const" in spec:
        v = int(spec["const"])
        if v not in (0, 1):
            raise ProtocolError(f"round {index + 1}: const must be a bit")
        return Round(speaker, lambda x, _p, v=v: np.full(np.shape(x), v), dict(spec, speaker=speaker))
    if "table" in spec:
        table = {}
        for prefix, bits in spec["table"].items():
            if len(prefix) != index or set(prefix) - {"0", "1"}:
                raise ProtocolError(f"round {index + 1}: prefix {prefix!r} must be a {index}-bit string")
            arr = np.asarray(bits, dtype=np.int64)
            if arr.shape != (size,) or (arr.size and (arr.min() < 0 or arr.max() > 1)):
                raise ProtocolError(f"round {index + 1}: table for {prefix!r} needs {size} bits")
            table[prefix] = arr
        serial = {"speaker": speaker, "table": {p: t.tolist() for p, t in table.items()}}
        return Round(speaker, _table_message(table), serial)
    raise ProtocolError(f"round {index + 1}: expected one of 'bit', 'const', 'table'")


def protocol_from_json(obj: Mapping) -> DeterministicProtocol:
    try:
        b, n = int(obj["b"]), int(obj["n"])
    except (KeyError, TypeError, ValueError):
        raise ProtocolError("protocol needs integer 'b' and 'n'") from None
    if "partition" in obj:
        partition = {
            m: (np.asarray(r["rows"], dtype=np.int64), np.asarray(r["cols"], dtype=np.int64))
            for m, r in obj["partition"].items()
        }
        return protocol_from_partition(partition, b, n, obj.get("speakers"))
    rounds = [round_from_spec(r, b, n, i) for i, r in enumerate(obj.get("rounds", []))]
    if "c" in obj and int(obj["c"]) != len(rounds):
        raise ProtocolError(f"c = {obj['c']} but {len(rounds)} rounds given")
    return DeterministicProtocol(b, n, rounds)


def load_protocol(path: str | Path) -> DeterministicProtocol:
    return protocol_from_json(json.loads(Path(path).read_text()))


def random_protocol(b: int, n: int, c: int, rng: np.random.Generator) -> DeterministicProtocol:
    """Alternating protocol whose rounds are random tables or input-bit reveals, per prefix."""
    size = 1 << (b * n)
    inputs = np.arange(size, dtype=np.int64)
    rounds = []
    for i in range(c):
        table = {}
        for p in range(1 << i):
            prefix = format(p, f"0{i}b") if i else ""
            if rng.random() < 0.5:
                table[prefix] = (inputs >> int(rng.integers(b * n))) & 1
            else:
                table[prefix] = rng.integers(0, 2, size=size)
        spec = {"speaker": ROW if i % 2 == 0 else COL, "table": {k: v.tolist() for k, v in table.items()}}
        rounds.append(round_from_spec(spec, b, n, i))
    return DeterministicProtocol(b, n, rounds)


# ---------------------------------------------------------------- partitions

Partition = dict[str, tuple[np.ndarray, np.ndarray]]


def transcript_partition(P: DeterministicProtocol) -> Partition:
    """Rectangle R_m for every m ∈ {0,1}^c (unreachable transcripts map to empty sets)."""
    full = np.arange(P.side_size, dtype=np.int64)
    empty = np.zeros(0, dtype=np.int64)
    out: Partition = {}

    def walk(i: int, prefix: str, U: np.ndarray, V: np.ndarray) -> None:
        if i == P.c:
            out[prefix] = (U, V)
            return
        speaker = P.rounds[i].speaker
        side = U if speaker == ROW else V
        bits = P.message(i, side, prefix) if side.size else np.zeros(0, dtype=np.int64)
        for a in (0, 1):
            part = side[bits == a]
            if speaker == ROW:
                walk(i + 1, prefix + str(a), part, V if part.size else empty)
            else:
                walk(i + 1, prefix + str(a), U if part.size else empty, part)

    walk(0, "", full, full)
    return out


def protocol_from_partition(
    partition: Partition, b: int, n: int, speakers: list[str] | None = None
) -> DeterministicProtocol:
    """Recover message tables from a transcript partition; rejects non-protocol partitions."""
    lengths = {len(m) for m in partition}
    if len(lengths) != 1:
        raise ProtocolError("all transcripts must have the same length")
    c = lengths.pop()
    speakers = speakers or [ROW if i % 2 == 0 else COL for i in range(c)]
    if len(speakers) != c:
        raise ProtocolError(f"{len(speakers)} speakers for {c} rounds")
    size = 1 << (b * n)
    rounds = []
    for i in range(c):
        table = {}
        for p in range(1 << i):
            prefix = format(p, f"0{i}b") if i else ""
            bits = np.zeros(size, dtype=np.int64)
            owner = np.full(size, -1)
            for m, (rows, cols) in partition.items():
                if not m.startswith(prefix) or rows.size == 0 or cols.size == 0:
                    continue
                side = rows if speakers[i] == ROW else cols
                a = int(m[i])
                clash = (owner[side] >= 0) & (owner[side] != a)
                if clash.any():
                    raise ProtocolError(f"partition is not a protocol: round {i + 1} prefix {prefix!r}")
                owner[side] = a
                bits[side] = a
            table[prefix] = bits.tolist()
        rounds.append(round_from_spec({"speaker": speakers[i], "table": table}, b, n, i))
    P = DeterministicProtocol(b, n, rounds)
    rebuilt = transcript_partition(P)
    for m, (rows, cols) in partition.items():
        got = rebuilt.get(m)
        if rows.size and cols.size and (
            got is None or not np.array_equal(np.sort(rows), got[0]) or not np.array_equal(np.sort(cols), got[1])
        ):
            raise ProtocolError(f"partition is not induced by any protocol (transcript {m})")
    return P


def partition_to_json(partition: Partition) -> dict:
    return {m: {"rows": r.tolist(), "cols": c.tolist()} for m, (r, c) in sorted(partition.items())}


# ---------------------------------------------------------------- potential


def marginal(side: np.ndarray, params: GadgetParams, J: tuple[int, ...]) -> SupportDistribution:
    return SupportDistribution(params.sub(J), project(side, params, J))


def potential(U: np.ndarray, V: np.ndarray, J: tuple[int, ...], b: int, n: int | None = None) -> float:
    """2b|J| - H_inf(X_J) - H_inf(Y_J) for X ~ U, Y ~ V."""
    U = np.asarray(U, dtype=np.int64)
    V = np.asarray(V, dtype=np.int64)
    if U.size == 0 or V.size == 0:
        raise ValueError("potential needs nonempty supports")
    n = n or (max(J) if J else 1)
    params = GadgetParams(b, tuple(range(1, n + 1)))
    return 2 * b * len(J) - min_entropy(marginal(U, params, J), J) - min_entropy(marginal(V, params, J), J)


# ---------------------------------------------------------------- the tree


Oracle = Callable[[tuple[int, ...]], Mapping[int, int]]


def zeros_oracle(I: tuple[int, ...]) -> dict[int, int]:
    return {i: 0 for i in I}


def random_oracle(seed: int) -> Oracle:
    rng = np.random.default_rng(seed)

    def oracle(I: tuple[int, ...]) -> dict[int, int]:
        return {i: int(rng.integers(2)) for i in I}

    return oracle


@dataclass
class DenseRectangleCertificate:
    J: tuple[int, ...]
    z: dict[int, int]
    transcript: str
    rows: np.ndarray
    cols: np.ndarray
    delta_high: float
    params: GadgetParams

    @property
    def queried(self) -> tuple[int, ...]:
        return tuple(sorted(self.z))

    def to_json(self) -> dict:
        return {
            "J": list(self.J),
            "z": {str(k): v for k, v in sorted(self.z.items())},
            "transcript": self.transcript,
            "rows": self.rows.tolist(),
            "cols": self.cols.tolist(),
            "delta_high": self.delta_high,
        }


@dataclass
class StructuredFailure:
    step: int
    round: int
    reason: str

    def to_json(self) -> dict:
        return {"step": self.step, "round": self.round, "reason": self.reason}


@dataclass
class TraceRecord:
    step: int
    event: str
    round: int
    rows: int
    cols: int
    J: tuple[int, ...]
    potential: float
    delta: float = 0.0
    detail: dict = field(default_factory=dict)

    def to_json(self) -> dict:
        return {
            "step": self.step,
            "event": self.event,
            "round": self.round,
            "rows": self.rows,
            "cols": self.cols,
            "J": list(self.J),
            "potential": None if math.isnan(self.potential) else self.potential,
            "delta": self.delta,
            **self.detail,
        }


@dataclass
class TreeRun:
    certificate: DenseRectangleCertificate | None
    failure: StructuredFailure | None
    trace: list[TraceRecord]
    transcript: str
    query_budget: float
    budget_asserted: bool

    @property
    def ok(self) -> bool:
        return self.certificate is not None

    def trace_jsonl(self) -> str:
        return "".join(json.dumps(r.to_json(), sort_keys=True) + "\n" for r in self.trace)


def query_budget_threshold(delta_high: float) -> float:
    """Smallest b for which every query step provably lowers the potential by b|I|/QUERY_RATE."""
    room = 1 - delta_high - 1 / QUERY_RATE
    return math.inf if room <= 0 else 3 / room


class _Run:
    """Single-owner state of one tree execution."""

    def __init__(self, P: DeterministicProtocol, oracle: Oracle, delta_high: float, delta_low: float):
        self.P = P
        self.params = P.params
        self.oracle = oracle
        self.dh = delta_high
        self.dl = delta_low
        self.U = np.arange(P.side_size, dtype=np.int64)
        self.V = np.arange(P.side_size, dtype=np.int64)
        self.J: tuple[int, ...] = self.params.coords
        self.z: dict[int, int] = {}
        self.m = ""
        self.trace: list[TraceRecord] = []
        self.round = 0

    # -- distributions over the unqueried coordinates
    def X(self) -> SupportDistribution:
        return marginal(self.U, self.params, self.J)

    def Y(self) -> SupportDistribution:
        return marginal(self.V, self.params, self.J)

    def phi(self) -> float:
        return 2 * self.params.b * len(self.J) - min_entropy(self.X(), self.J) - min_entropy(self.Y(), self.J)

    def record(self, event: str, before: float, **detail) -> float:
        now = self.phi()
        if now < -1e-9:
            raise AssertionError(f"potential went negative ({now}) at {event}")
        self.trace.append(TraceRecord(len(self.trace), event, self.round, int(self.U.size),
                                      int(self.V.size), self.J, now, now - before, detail))
        return now

    # -- invariant checks, recomputed from scratch
    def fixed_outputs_ok(self) -> bool:
        queried = tuple(sorted(self.z))
        if not queried:
            return True
        sub = self.params.sub(queried)
        want = sum(self.z[c] << k for k, c in enumerate(queried))
        g = gadget_outputs(project(self.U, self.params, queried)[:, None],
                           project(self.V, self.params, queried)[None, :], sub)
        return bool(np.all(g == want))

    def contained(self) -> bool:
        for i in range(len(self.m)):
            rnd = self.P.rounds[i]
            side = self.U if rnd.speaker == ROW else self.V
            if np.any(self.P.message(i, side, self.m[:i]) != int(self.m[i])):
                return False
        return True

    def while_invariant(self) -> bool:
        dx, dy = is_dense(self.X(), self.dh).dense, is_dense(self.Y(), self.dh).dense
        lx, ly = is_dense(self.X(), self.dl).dense, is_dense(self.Y(), self.dl).dense
        return (lx and dy) or (dx and ly)

    # -- algorithm steps
    def communicate(self, i: int) -> None:
        rnd = self.P.rounds[i]
        before = self.phi()
        side = self.U if rnd.speaker == ROW else self.V
        bits = self.P.message(i, side, self.m)
        sizes = [int(np.sum(bits == a)) for a in (0, 1)]
        a = 0 if sizes[0] >= sizes[1] else 1
        kept = side[bits == a]
        shrink = math.log2(side.size / kept.size)
        if rnd.speaker == ROW:
            self.U = kept
        else:
            self.V = kept
        self.m += str(a)
        after = self.record("communicate", before, speaker=rnd.speaker, bit=a, log2_shrink=shrink)
        if after - before > shrink + 1e-9:
            raise AssertionError(f"communication raised the potential by {after - before} > {shrink}")

    def restore(self) -> StructuredFailure | None:
        X_dense = is_dense(self.X(), self.dh).dense
        row_side = not X_dense
        side_name = ROW if row_side else COL
        own, other = (self.U, self.V) if row_side else (self.V, self.U)
        own_dist = marginal(own, self.params, self.J)
        other_dist = marginal(other, self.params, self.J)
        invariant = self.while_invariant()

        before = self.phi()
        proj = project(own, self.params, self.J)
        verdict = {int(v): is_bad(int(v), other_dist, self.dl).bad for v in np.unique(proj)}
        keep = np.array([not verdict[int(v)] for v in proj], dtype=bool)
        own = own[keep]
        if row_side:
            self.U = own
        else:
            self.V = own
        if own.size == 0:
            return StructuredFailure(len(self.trace), self.round,
                                     f"every {side_name} value is {self.dl}-bad for the other side")
        before = self.record("remove_bad", before, side=side_name, removed=int((~keep).sum()),
                             while_invariant=invariant)

        own_dist = marginal(own, self.params, self.J)
        I = low_entropy_set(own_dist, self.dh)
        if not I:
            return None
        alpha = heavy_value(own_dist, I, self.dh)
        answers = self.oracle(I)
        z_I = sum((int(answers[c]) & 1) << k for k, c in enumerate(I))
        sub = self.params.sub(I)
        own = own[project(own, self.params, I) == alpha]
        g = gadget_outputs(np.int64(alpha), project(other, self.params, I), sub)
        other = other[g == z_I]
        if row_side:
            self.U, self.V = own, other
        else:
            self.V, self.U = own, other
        for k, c in enumerate(I):
            self.z[c] = z_I >> k & 1
        if other.size == 0:
            return StructuredFailure(len(self.trace), self.round,
                                     f"no {'col' if row_side else 'row'} input matches query answers on {I}")
        self.J = tuple(c for c in self.J if c not in I)
        self.record("query", before, side=side_name, I=list(I), alpha=int(alpha),
                    z=[self.z[c] for c in I], target=-self.params.b * len(I) / QUERY_RATE)
        return None

    def dense_both(self) -> bool:
        return is_dense(self.X(), self.dh).dense and is_dense(self.Y(), self.dh).dense


def run_density_restoring_tree(
    P: DeterministicProtocol,
    oracle: Oracle = zeros_oracle,
    delta_high: float = DELTA_HIGH,
    delta_low: float = DELTA_LOW,
) -> TreeRun:
    run = _Run(P, oracle, delta_high, delta_low)
    run.record("start", run.phi())
    failure = None
    for i in range(P.c):
        run.round = i + 1
        run.communicate(i)
        while not run.dense_both():
            failure = run.restore()
            if failure is not None:
                break
        if failure is not None:
            break
        run.trace[-1].detail.update(
            for_invariant=run.dense_both() and run.fixed_outputs_ok() and run.contained()
        )
    budget = QUERY_RATE * P.c / P.b
    asserted = P.b >= query_budget_threshold(delta_high)
    if failure is not None:
        run.trace.append(TraceRecord(len(run.trace), "failure", run.round, int(run.U.size),
                                     int(run.V.size), run.J, math.nan, 0.0, failure.to_json()))
        return TreeRun(None, failure, run.trace, run.m, budget, asserted)
    cert = DenseRectangleCertificate(run.J, dict(run.z), run.m, run.U, run.V, delta_high, run.params)
    report = verify_certificate(cert, P)
    if not report.ok:
        raise AssertionError(f"certificate failed re-verification: {report}")
    if asserted and len(cert.z) > budget:
        raise AssertionError(f"queried {len(cert.z)} coordinates, budget {budget}")
    run.record("end", run.phi(), queried=len(cert.z))
    return TreeRun(cert, None, run.trace, run.m, budget, asserted)


@dataclass
class CertificateReport:
    contained: bool
    fixed_outputs: bool
    rows_dense: bool
    cols_dense: bool

    @property
    def ok(self) -> bool:
        return self.contained and self.fixed_outputs and self.rows_dense and self.cols_dense


def verify_certificate(
    cert: DenseRectangleCertificate, P: DeterministicProtocol, partition: Partition | None = None
) -> CertificateReport:
    """Independent check: R ⊆ R_m, G on queried coordinates ≡ z, both marginals dense on J."""
    partition = partition if partition is not None else transcript_partition(P)
    rows_m, cols_m = partition.get(cert.transcript, (np.zeros(0), np.zeros(0)))
    contained = bool(np.isin(cert.rows, rows_m).all() and np.isin(cert.cols, cols_m).all())
    params = P.params
    queried = tuple(sorted(cert.z))
    fixed = True
    if queried:
        want = sum(cert.z[c] << k for k, c in enumerate(queried))
        x = project(cert.rows, params, queried)
        y = project(cert.cols, params, queried)
        fixed = bool(np.all(gadget_outputs(x[:, None], y[None, :], params.sub(queried)) == want))
    X = marginal(cert.rows, params, cert.J)
    Y = marginal(cert.cols, params, cert.J)
    return CertificateReport(
        contained and cert.rows.size > 0 and cert.cols.size > 0,
        fixed,
        is_dense(X, cert.delta_high).dense,
        is_dense(Y, cert.delta_high).dense,
    )

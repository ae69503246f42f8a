"""Command-line front end: ``liftlab <command> ...``.

Exit codes: 0 success, 1 I/O or parse error, 2 guard violation, 3 structured
algorithmic failure. Every JSON document carries ``schema_version`` and is
written with sorted keys so equal inputs give byte-identical output.
"""

from __future__ import annotations

import argparse
import csv
import io
import json
import sys
from concurrent.futures import ThreadPoolExecutor
from importlib import resources
from pathlib import Path

import numpy as np

from liftlab import __version__
from liftlab.approxdeg import DEFAULT_EPSILON, approx_degree, dual_polynomial, verify_dual
from liftlab.boolfn import (
    SpecParseError,
    block_sensitivity,
    degree,
    load_function,
    mask_to_labels,
    random_sign_function,
)
from liftlab.density import (
    DELTA_HIGH,
    DELTA_LOW,
    SupportDistribution,
    density_exponent,
    is_dense,
    low_entropy_set,
    restore_density,
    uniformity_deviation,
)
from liftlab.discrepancy import build_witness, compose_from, gen_discrepancy_bound, witness_norm_bounds
from liftlab.gadget import GadgetParams, load_supports
from liftlab.lifting import PROTOCOL_ERROR, hybrid_lifting_pipeline
from liftlab.limits import GuardError, check_guard
from liftlab.rectangles import ProtocolError, load_protocol, partition_to_json, random_protocol, transcript_partition

SCHEMA_VERSION = "1.0"
EXIT_OK, EXIT_IO, EXIT_GUARD, EXIT_FAILURE = 0, 1, 2, 3


class StructuredFailureExit(Exception):
    def __init__(self, doc: dict):
        super().__init__(doc.get("failure", {}).get("reason", "structured failure"))
        self.doc = doc


def load_schema(command: str) -> dict:
    """The published JSON schema for ``command``'s report."""
    return json.loads(resources.files("liftlab").joinpath("schemas", f"{command}.schema.json").read_text())


def _plain(o):
    if isinstance(o, np.generic):
        return o.item()
    if isinstance(o, np.ndarray):
        return o.tolist()
    raise TypeError(f"{type(o).__name__} is not JSON serializable")


def dumps(doc: dict) -> str:
    return json.dumps(doc, sort_keys=True, indent=2, allow_nan=False, default=_plain) + "\n"


def _document(command: str, body: dict) -> dict:
    return {"schema_version": SCHEMA_VERSION, "command": command, **body}


def _emit(text: str, out: str | None) -> None:
    if out:
        Path(out).write_text(text)
    else:
        sys.stdout.write(text)


def _finite(x):
    return None if x is None or not np.isfinite(x) else float(x)


# ---------------------------------------------------------------- commands


def cmd_measures(args) -> dict:
    f = load_function(args.function)
    blocks = block_sensitivity(f)
    result = approx_degree(f, args.epsilon)
    witness = dual_polynomial(f, result.d, args.epsilon) if result.d > 0 else None
    return {
        "function": f.to_json(),
        "degree": degree(f),
        "block_sensitivity": {
            "value": blocks.value,
            "point": f.point(blocks.x),
            "blocks": [list(mask_to_labels(B, f.coords)) for B in blocks.blocks],
        },
        "approx_degree": {"epsilon": args.epsilon, "value": result.d, "errors_by_degree": result.errors_by_degree},
        "dual_witness": None if witness is None else witness.to_json(),
    }


def cmd_approxdeg(args) -> dict:
    f = load_function(args.function)
    result = approx_degree(f, args.epsilon)
    d = result.d if args.d is None else args.d
    body = {
        "function": f.to_json(),
        "epsilon": args.epsilon,
        "approx_degree": result.d,
        "optimal_error": result.optimal_error,
        "errors_by_degree": result.errors_by_degree,
        "primal": {",".join(map(str, S)) or "{}": c for S, c in result.primal.as_dict(1e-12).items()},
        "dual_witness": None,
        "dual_checks": None,
    }
    if d > 0:
        w = dual_polynomial(f, d, args.epsilon)
        report = verify_dual(f, w, args.epsilon)
        body["dual_witness"] = w.to_json()
        body["dual_checks"] = {c.name: {"passed": c.passed, "measured": c.measured} for c in report.checks}
        body["certifies"] = w.certifies(args.epsilon)
    return body


def _supports(args) -> tuple[GadgetParams, np.ndarray, np.ndarray]:
    if args.supports:
        return load_supports(args.supports)
    params = GadgetParams(args.b, tuple(range(1, args.n + 1)))
    check_guard(params.bits, "full support")
    full = params.full_support()
    return params, full, full


def _density_side(X: SupportDistribution, args) -> dict:
    rep_high = is_dense(X, args.delta_high)
    rest = restore_density(X, args.delta_high)
    return {
        "size": X.size,
        "density_exponent": density_exponent(X),
        "dense_high": rep_high.dense,
        "dense_low": is_dense(X, args.delta_low).dense,
        "violating_set": None if rep_high.dense else list(rep_high.violating_set[0]),
        "low_entropy_set": list(low_entropy_set(X, args.delta_high)),
        "restoration": {"I": list(rest.I), "alpha": rest.alpha, "size": rest.conditioned.size},
    }


def cmd_density(args) -> dict:
    params, U, V = _supports(args)
    X, Y = SupportDistribution(params, U), SupportDistribution(params, V)
    uni = uniformity_deviation(X, Y)
    return {
        "b": params.b,
        "coords": list(params.coords),
        "delta_high": args.delta_high,
        "delta_low": args.delta_low,
        "rows": _density_side(X, args),
        "cols": _density_side(Y, args),
        "uniformity": {"max_dev": uni.max_dev, "bound": uni.bound, "holds": uni.holds},
    }


def cmd_discrepancy(args) -> dict:
    f = load_function(args.function)
    if args.supports:
        params, U, V = load_supports(args.supports)
    else:
        check_guard(args.b * f.arity, "full support")
        params = GadgetParams(args.b, f.coords)
        U = V = params.full_support()
    if params.coords != f.coords:
        raise ValueError(f"supports cover {params.coords}, function covers {f.coords}")
    d = approx_degree(f, args.epsilon).d
    witness = dual_polynomial(f, max(1, d), args.epsilon)
    F = compose_from(f, U, V, params)
    W = build_witness(witness, U, V, params)
    bound = gen_discrepancy_bound(F, W, args.error)
    nb = witness_norm_bounds(f, witness, U, V, params)
    return {
        "function": f.to_json(),
        "b": params.b,
        "epsilon": args.epsilon,
        "error": args.error,
        "approx_degree": d,
        "dual_degree": witness.d,
        "dual_correlation": witness.correlation,
        "rows": int(U.size),
        "cols": int(V.size),
        "numerator": bound.numerator,
        **bound.to_json(),
        "norm_bounds": {"deviation": nb.deviation, "one_norm_bound": nb.one_norm_bound,
                        "correlation_bound": nb.correlation_bound, "holds": nb.holds},
    }


def cmd_partition(args) -> dict:
    P = load_protocol(args.protocol)
    part = transcript_partition(P)
    return {"b": P.b, "n": P.n, "c": P.c, "partition": partition_to_json(part),
            "nonempty": sum(1 for r, c in part.values() if r.size and c.size)}


def cmd_lift(args) -> dict:
    f = load_function(args.function)
    P = load_protocol(args.protocol)
    report = hybrid_lifting_pipeline(f, P, args.epsilon, args.error, args.measure, args.delta_high, args.delta_low)
    if args.trace:
        Path(args.trace).write_text(report.run.trace_jsonl())
    body = report.to_json()
    if report.failure is not None:
        raise StructuredFailureExit(_document("lift", body))
    return body


def _sweep_cell(cell: dict, seed: int, args) -> dict:
    rng = np.random.default_rng(np.random.SeedSequence([seed, cell["index"]]))
    f = random_sign_function(cell["n"], rng)
    P = random_protocol(cell["b"], cell["n"], cell["c"], rng)
    report = hybrid_lifting_pipeline(f, P, args.epsilon, args.error, args.measure, args.delta_high, args.delta_low)
    row = {"index": cell["index"], "trial": cell["trial"], **report.csv_row()}
    row["discrepancy_bits"] = _finite(row["discrepancy_bits"])
    return row


def sweep_cells(ns, bs, cs, trials) -> list[dict]:
    cells = []
    for n in ns:
        for b in bs:
            for c in cs:
                for t in range(trials):
                    cells.append({"index": len(cells), "n": n, "b": b, "c": c, "trial": t})
    return cells


def cmd_sweep(args) -> dict | str:
    ns = args.n_values or [args.n]
    bs = args.b_values or [args.b]
    cs = list(range(args.c_max + 1))
    for n in ns:
        for b in bs:
            check_guard(b * n, "sweep cell")
    cells = sweep_cells(ns, bs, cs, args.trials)
    with ThreadPoolExecutor(max_workers=args.workers) as pool:
        rows = list(pool.map(lambda cell: _sweep_cell(cell, args.seed, args), cells))
    if args.format == "csv":
        buf = io.StringIO()
        writer = csv.DictWriter(buf, fieldnames=list(rows[0]) if rows else ["index"], lineterminator="\n")
        writer.writeheader()
        writer.writerows(rows)
        return buf.getvalue()
    return {"seed": args.seed, "epsilon": args.epsilon, "error": args.error, "measure": args.measure,
            "delta_high": args.delta_high, "delta_low": args.delta_low, "rows": rows}


COMMANDS = {
    "measures": cmd_measures,
    "approxdeg": cmd_approxdeg,
    "density": cmd_density,
    "discrepancy": cmd_discrepancy,
    "partition": cmd_partition,
    "lift": cmd_lift,
    "sweep": cmd_sweep,
}


# ---------------------------------------------------------------- parser


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--out", help="write the report here instead of stdout")
    common.add_argument("--epsilon", type=float, default=DEFAULT_EPSILON, help="approximation error (default 1/3)")

    dens = argparse.ArgumentParser(add_help=False)
    dens.add_argument("--delta-high", type=float, default=DELTA_HIGH)
    dens.add_argument("--delta-low", type=float, default=DELTA_LOW)

    sides = argparse.ArgumentParser(add_help=False)
    sides.add_argument("--b", type=int, default=2, help="gadget word length")
    sides.add_argument("--n", type=int, default=2, help="number of coordinates")

    err = argparse.ArgumentParser(add_help=False)
    err.add_argument("--error", type=float, default=PROTOCOL_ERROR, help="protocol error in the discrepancy bound")

    p = argparse.ArgumentParser(prog="liftlab", description="Desk-scale lifting-theorem toolkit.")
    p.add_argument("--version", action="version", version=f"liftlab {__version__}")
    sub = p.add_subparsers(dest="command", required=True)

    s = sub.add_parser("measures", parents=[common], help="degree, block sensitivity and approximate degree")
    s.add_argument("function", help="parity:n | or:n | and:n | const:n[:±1] | readonce:<formula> | JSON file")

    s = sub.add_parser("approxdeg", parents=[common], help="primal/dual approximate-degree LPs")
    s.add_argument("function")
    s.add_argument("--d", type=int, help="degree for the dual witness (default: the approximate degree)")

    s = sub.add_parser("density", parents=[common, dens, sides], help="density report for a pair of supports")
    s.add_argument("--supports", help='JSON file {"b", "coords", "rows", "cols"} (default: full supports)')

    s = sub.add_parser("discrepancy", parents=[common, sides, err], help="witness-matrix discrepancy bound")
    s.add_argument("function")
    s.add_argument("--supports")

    s = sub.add_parser("partition", parents=[common], help="transcript rectangles of a protocol")
    s.add_argument("protocol")

    s = sub.add_parser("lift", parents=[common, dens, err], help="hybrid lifting pipeline")
    s.add_argument("function")
    s.add_argument("protocol")
    s.add_argument("--measure", default="degree", choices=["degree", "block_sensitivity"])
    s.add_argument("--trace", help="write the tree's JSON-lines trace here")

    s = sub.add_parser("sweep", parents=[common, dens, sides, err], help="seeded random pipeline sweep")
    s.add_argument("--seed", type=int, default=0)
    s.add_argument("--n-values", type=int, nargs="*")
    s.add_argument("--b-values", type=int, nargs="*")
    s.add_argument("--c-max", type=int, default=2)
    s.add_argument("--trials", type=int, default=2)
    s.add_argument("--workers", type=int, default=4)
    s.add_argument("--measure", default="degree", choices=["degree", "block_sensitivity"])
    s.add_argument("--format", default="json", choices=["json", "csv"])
    return p


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        body = COMMANDS[args.command](args)
    except StructuredFailureExit as exc:
        _emit(dumps(exc.doc), args.out)
        print(f"liftlab: structured failure: {exc}", file=sys.stderr)
        return EXIT_FAILURE
    except GuardError as exc:
        print(f"liftlab: guard: {exc}", file=sys.stderr)
        return EXIT_GUARD
    except SpecParseError as exc:
        print(f"liftlab: parse error: {exc}", file=sys.stderr)
        return EXIT_IO
    except (OSError, ValueError, KeyError, ProtocolError) as exc:
        print(f"liftlab: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_IO
    _emit(body if isinstance(body, str) else dumps(_document(args.command, body)), args.out)
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())

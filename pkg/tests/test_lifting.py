import itertools
import json
import math

import numpy as np
import pytest

import oracles
from liftlab.boolfn import SpecParseError, and_, bs, constant, degree, fix, or_, parity, random_sign_function
from liftlab.gadget import project
from liftlab.lifting import (
    Gate,
    Leaf,
    ReadOnceFormula,
    adversarial_walk,
    enumerate_readonce,
    hybrid_lifting_pipeline,
    parse_readonce,
    readonce_degree,
)
from liftlab.rectangles import load_protocol, protocol_from_json, random_protocol

SAMPLES = __import__("pathlib").Path(__file__).resolve().parent.parent / "samples"


def reveal(b, n, bits, speaker="row"):
    return protocol_from_json({"b": b, "n": n, "rounds": [{"speaker": speaker, "bit": k} for k in bits]})


# ---------------------------------------------------------------- read-once formulas


def test_parse_examples():
    f = parse_readonce("AND(x1,OR(x2,NOT(x3)))")
    assert f.variables == (1, 2, 3) and str(parse_readonce(str(f))) == str(f)
    assert parse_readonce("x1").to_function().values.tolist() == [1.0, -1.0]
    assert parse_readonce("NOT(x1)").to_function().values.tolist() == [-1.0, 1.0]
    assert parse_readonce("AND(x1,x2)").to_function() == and_(2)
    assert parse_readonce(" OR( x1 , x2 ) ").to_function() == or_(2)


def test_not_pushes_through_gates():
    f = parse_readonce("NOT(AND(x1,x2))").to_function()
    assert f.values.tolist() == (-and_(2).values).tolist()


@pytest.mark.parametrize("text,col", [
    ("AND(x1,x1)", 8),
    ("AND(x1", 7),
    ("XOR(x1,x2)", 1),
    ("AND(x1,x2))", 11),
    ("AND()", 5),
])
def test_parse_errors(text, col):
    with pytest.raises(SpecParseError) as exc:
        parse_readonce(text)
    assert exc.value.column == col


def test_formula_rejects_repeats():
    with pytest.raises(ValueError):
        ReadOnceFormula(Gate("OR", (Leaf(1), Gate("AND", (Leaf(2), Leaf(1))))))


def test_readonce_degree_examples():
    assert readonce_degree(parse_readonce("x1")) == 1
    assert readonce_degree(parse_readonce("AND(x1,OR(x2,x3))")) == 3
    assert readonce_degree(parse_readonce("OR(AND(x1,x2),AND(x3,x4))")) == 4


def test_enumeration_counts_and_distinctness():
    counts = [sum(1 for _ in enumerate_readonce(n)) for n in (1, 2, 3)]
    assert counts == [2, 8, 112]
    for n in (1, 2, 3):
        forms = list(enumerate_readonce(n))
        assert len({str(f) for f in forms}) == len(forms)
        assert all(f.variables == tuple(range(1, n + 1)) for f in forms)


@pytest.mark.parametrize("n", [1, 2, 3])
def test_readonce_degree_matches_oracle(n):
    for f in enumerate_readonce(n):
        assert oracles.degree(f.to_function()) == n == readonce_degree(f)


# ---------------------------------------------------------------- adversarial walk


def test_walk_without_communication():
    f = or_(2)
    w = adversarial_walk(f, load_protocol(SAMPLES / "trivial_b2n2.json"))
    assert w.z == {} and w.restricted == f and w.measure_after == w.measure_before == 2


def test_walk_parity_one_query():
    w = adversarial_walk(parity(2), reveal(3, 2, [0]), delta_high=0.7, delta_low=0.3)
    assert list(w.z) == [1]
    assert degree(w.restricted) >= 1 and w.measure_after == 1


def test_walk_constant_function():
    w = adversarial_walk(constant(2), load_protocol(SAMPLES / "reveal_x1_b2n2.json"), delta_high=0.9)
    assert w.measure_before == w.measure_after == 0


@pytest.mark.parametrize("measure", ["degree", "bs"])
def test_walk_loses_at_most_one_per_query(measure):
    rng = np.random.default_rng(3)
    mfn = {"degree": degree, "bs": bs}[measure]
    for _ in range(10):
        f = random_sign_function(2, rng)
        P = random_protocol(3, 2, int(rng.integers(1, 4)), rng)
        w = adversarial_walk(f, P, measure, delta_high=0.7, delta_low=0.3)
        assert w.measure_after >= mfn(f) - len(w.z)
        assert w.restricted == fix(f, w.z)


def test_walk_domain_mismatch():
    with pytest.raises(ValueError):
        adversarial_walk(parity(3), reveal(2, 2, [0]))


# ---------------------------------------------------------------- hybrid pipeline


def test_pipeline_parity_trivial_protocol():
    r = hybrid_lifting_pipeline(parity(2), load_protocol(SAMPLES / "trivial_b2n2.json"))
    assert r.queried == 0 and r.restricted_degree == 2 and r.approx_degree == 2
    assert r.dual_correlation == pytest.approx(1.0)
    assert r.discrepancy_bits == pytest.approx(0.09310940439148085, rel=1e-9)
    assert r.discrepancy["rows"] == r.discrepancy["cols"] == 16
    assert not r.vacuous and not r.degenerate and r.failure is None


def test_pipeline_full_rectangle_norm():
    r = hybrid_lifting_pipeline(or_(2), load_protocol(SAMPLES / "trivial_b2n2.json"))
    nb = r.norm_bounds
    # ||psi||_1 = 1 for every emitted witness
    assert nb["holds"] and abs(nb["one_norm"] - 1.0) <= nb["deviation"] + 1e-12


def test_pipeline_constant():
    r = hybrid_lifting_pipeline(constant(2), load_protocol(SAMPLES / "trivial_b2n2.json"))
    assert r.dual_correlation == pytest.approx(0.0, abs=1e-9)
    assert r.vacuous and r.degenerate


def test_pipeline_revealing_protocol():
    r = hybrid_lifting_pipeline(parity(2), load_protocol(SAMPLES / "reveal_x1_b2n2.json"), delta_high=0.9)
    assert r.queried == 2 and r.restricted_degree == 0
    assert r.degenerate and r.vacuous and r.restricted_function.arity == 0


def test_pipeline_failure_is_carried():
    P = protocol_from_json({"b": 1, "n": 2, "rounds": [{"speaker": "row", "bit": 0},
                                                      {"speaker": "col", "bit": 0},
                                                      {"speaker": "row", "bit": 1}]})
    r = hybrid_lifting_pipeline(parity(2), P)
    assert r.failure is not None and r.vacuous
    assert r.to_json()["flags"]["failure"]


def test_pipeline_consistency_with_independent_measures():
    rng = np.random.default_rng(7)
    for _ in range(8):
        f = random_sign_function(2, rng)
        P = random_protocol(3, 2, int(rng.integers(0, 3)), rng)
        r = hybrid_lifting_pipeline(f, P, delta_high=0.7, delta_low=0.3)
        if r.failure is not None:
            continue
        g = r.restricted_function
        kept, vals = oracles.restrict(f, r.z)
        assert g.coords == kept and g.values.tolist() == vals
        assert r.restricted_degree == oracles.degree(g)
        assert r.restricted_bs == oracles.block_sensitivity(g)
        assert r.restricted_measure == r.restricted_degree
        assert r.queried == len(r.z) and set(r.J) | set(r.z) == {1, 2}
        if r.discrepancy is not None:
            cert = r.run.certificate
            assert r.discrepancy["rows"] == cert.rows.size and r.discrepancy["cols"] == cert.cols.size
            U = project(cert.rows, P.params, cert.J)
            assert U.size == cert.rows.size


def test_report_serialization():
    r = hybrid_lifting_pipeline(parity(2), load_protocol(SAMPLES / "trivial_b2n2.json"))
    obj = json.loads(json.dumps(r.to_json(), allow_nan=False))
    assert obj["queried"] == 0 and obj["restricted_function"]["coords"] == [1, 2]
    row = r.csv_row()
    assert row["discrepancy_bits"] == r.discrepancy_bits
    t = r.targets
    assert t["tradeoff_threshold"] == pytest.approx(2 * 2 / 300) and t["in_tradeoff_regime"]
    assert t["sqrt_degree_target"] == pytest.approx(math.sqrt(2) * 2)


def test_bs_measure_pipeline():
    r = hybrid_lifting_pipeline(or_(2), reveal(3, 2, [0]), measure="bs", delta_high=0.7, delta_low=0.3)
    assert r.measure == "block_sensitivity"
    assert r.restricted_measure == r.restricted_bs >= bs(or_(2)) - r.queried


def test_enumeration_exhaustive_pairs():
    # each n=2 formula is AND/OR of two literals: 2 ops x 4 polarity choices
    forms = {str(f) for f in enumerate_readonce(2)}
    for op, p1, p2 in itertools.product(("AND", "OR"), (False, True), (False, True)):
        text = f"{op}({'NOT(x1)' if p1 else 'x1'},{'NOT(x2)' if p2 else 'x2'})"
        assert str(parse_readonce(text)) in forms

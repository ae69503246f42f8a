import itertools
import json

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

import oracles
from liftlab.boolfn import (
    BooleanFunction,
    Restriction,
    SpecParseError,
    and_,
    block_sensitivity,
    bs,
    character,
    constant,
    degree,
    entropic_fix,
    entropic_fix_chain,
    fix,
    fourier,
    load_function,
    or_,
    parity,
    random_sign_function,
    restrict,
    walsh_hadamard,
)


def sign_tables(n):
    return st.lists(st.sampled_from([-1.0, 1.0]), min_size=1 << n, max_size=1 << n)


@st.composite
def sign_functions(draw, max_n=4):
    n = draw(st.integers(0, max_n))
    return BooleanFunction(tuple(range(1, n + 1)), draw(sign_tables(n)))


def all_functions(n):
    coords = tuple(range(1, n + 1))
    for vals in itertools.product((-1.0, 1.0), repeat=1 << n):
        yield BooleanFunction(coords, vals)


# ---------------------------------------------------------------- basics


def test_point_encoding_follows_label_order():
    f = BooleanFunction((3, 7), [1, 1, -1, 1])
    assert f.point(2) == {3: 0, 7: 1}
    assert f({3: 0, 7: 1}) == -1
    assert f.index({3: 1, 7: 1}) == 3


def test_rejects_bad_tables():
    with pytest.raises(ValueError):
        BooleanFunction((1, 2), [1, -1])
    with pytest.raises(ValueError):
        BooleanFunction((1, 1), [1, 1, 1, 1])


def test_values_are_read_only():
    f = parity(2)
    with pytest.raises(ValueError):
        f.values[0] = 3


def test_catalog_conventions():
    assert or_(2).values.tolist() == [1, -1, -1, -1]
    assert and_(2).values.tolist() == [1, 1, 1, -1]
    assert parity(2).values.tolist() == [1, -1, -1, 1]
    assert constant(2, -1).values.tolist() == [-1] * 4


def test_walsh_hadamard_is_an_involution_up_to_scale():
    v = np.random.default_rng(0).standard_normal(16)
    assert np.allclose(walsh_hadamard(walsh_hadamard(v)), 16 * v)


# ---------------------------------------------------------------- Fourier and degree


def test_fourier_of_character():
    coeffs = fourier(character((1, 2), (1, 2))).as_dict(1e-12)
    assert coeffs == {(1, 2): 1.0}


def test_fourier_of_constant():
    assert fourier(constant(3)).as_dict(1e-12) == {(): 1.0}


def test_fourier_of_and2():
    assert fourier(and_(2)).as_dict(1e-12) == {(): 0.5, (1,): 0.5, (2,): 0.5, (1, 2): -0.5}


@given(sign_functions(max_n=4))
def test_fourier_matches_definition(f):
    table = fourier(f)
    for S in oracles.subsets(f.coords):
        assert table.coeff(S) == pytest.approx(oracles.fourier_coeff(f, S), abs=1e-12)


@settings(max_examples=200)
@given(st.integers(0, 5).flatmap(lambda n: st.tuples(st.just(n), st.lists(
    st.floats(-4, 4, allow_nan=False), min_size=1 << n, max_size=1 << n))))
def test_parseval(args):
    n, vals = args
    f = BooleanFunction(tuple(range(1, n + 1)), vals)
    coeffs = fourier(f).coeffs
    assert np.sum(coeffs**2) * 2**n == pytest.approx(np.sum(f.values**2), abs=1e-9)


@given(sign_functions(max_n=4))
def test_fourier_inverse_roundtrip(f):
    assert np.allclose(fourier(f).inverse().values, f.values, atol=1e-12)


def test_degree_examples():
    assert degree(parity(3)) == 3
    assert degree(constant(2, -1)) == 0
    assert degree(and_(2)) == 2


@given(sign_functions(max_n=4))
def test_degree_matches_oracle(f):
    assert degree(f) == oracles.degree(f)


# ---------------------------------------------------------------- block sensitivity


def test_bs_examples():
    r = block_sensitivity(or_(3))
    assert r.value == 3 and r.x == 0 and sorted(r.blocks) == [1, 2, 4]
    assert bs(constant(3)) == 0
    assert bs(parity(3)) == 3


@settings(max_examples=150)
@given(sign_functions(max_n=4))
def test_bs_matches_oracle(f):
    assert bs(f) == oracles.block_sensitivity(f)


@given(sign_functions(max_n=4))
def test_bs_witness_is_valid(f):
    value, x, blocks = block_sensitivity(f)
    assert len(blocks) == value
    used = 0
    for B in blocks:
        assert B and not (B & used)
        used |= B
        assert f.values[x ^ B] != f.values[x]


def test_bs_rejects_real_tables():
    with pytest.raises(ValueError):
        bs(BooleanFunction((1,), [0.5, 1]))


# ---------------------------------------------------------------- restriction


def test_restrict_examples():
    assert fix(parity(3), {3: 0}) == parity(2)
    f = random_sign_function(3, np.random.default_rng(1))
    assert restrict(f, Restriction(f.coords, {})) == f
    assert fix(or_(2), {2: 1}) == constant(1, -1, coords=(1,))


def test_restrict_rejects_overlap():
    with pytest.raises(ValueError):
        restrict(parity(2), Restriction((1, 2), {2: 0}))
    with pytest.raises(ValueError):
        restrict(parity(2), Restriction((1,), {}))


@given(sign_functions(max_n=4), st.data())
def test_restrict_matches_oracle(f, data):
    if not f.coords:
        return
    fixed_coords = data.draw(st.lists(st.sampled_from(f.coords), unique=True))
    fixed = {c: data.draw(st.integers(0, 1)) for c in fixed_coords}
    kept, vals = oracles.restrict(f, fixed)
    g = fix(f, fixed)
    assert g.coords == kept and g.values.tolist() == vals


@given(sign_functions(max_n=4), st.data())
def test_restrict_commutes(f, data):
    if f.arity < 2:
        return
    i, j = data.draw(st.lists(st.sampled_from(f.coords), min_size=2, max_size=2, unique=True))
    a, c = data.draw(st.integers(0, 1)), data.draw(st.integers(0, 1))
    assert fix(fix(f, {i: a}), {j: c}) == fix(fix(f, {j: c}), {i: a})


# ---------------------------------------------------------------- entropic measures


def test_entropic_fix_examples():
    z, g = entropic_fix(parity(3), "degree", 2)
    assert z == 0 and degree(g) == 2
    z, g = entropic_fix(constant(2), "bs", 1)
    assert bs(g) == 0
    z, g = entropic_fix(or_(2), "block_sensitivity", 1)
    assert z == 0 and bs(g) == 1


def test_entropic_chain_examples():
    z, g = entropic_fix_chain(parity(3), "degree", [3, 1, 2])
    assert degree(g) == 0 and z == {3: 0, 1: 0, 2: 0}
    f = or_(3)
    assert entropic_fix_chain(f, "degree", [])[1] == f
    with pytest.raises(ValueError):
        entropic_fix_chain(f, "degree", [1, 1])


@pytest.mark.parametrize("measure", ["degree", "bs"])
def test_entropic_chain_against_exhaustive_best(measure):
    rng = np.random.default_rng(7)
    mfn = {"degree": degree, "bs": bs}[measure]
    for _ in range(20):
        f = random_sign_function(4, rng)
        order = list(rng.choice(4, size=2, replace=False) + 1)
        _, g = entropic_fix_chain(f, measure, order)
        best = max(mfn(fix(f, dict(zip(order, z)))) for z in itertools.product((0, 1), repeat=2))
        assert mfn(g) >= mfn(f) - 2
        assert mfn(g) <= best


@pytest.mark.parametrize("n", [1, 2, 3])
def test_entropic_property_exhaustive_small(n):
    for f in all_functions(n):
        for i in f.coords:
            _, g = entropic_fix(f, "degree", i)
            assert degree(g) >= degree(f) - 1
            _, g = entropic_fix(f, "bs", i)
            assert bs(g) >= bs(f) - 1


# ---------------------------------------------------------------- function-spec parsing


def test_load_catalog_specs():
    assert load_function("parity:3") == parity(3)
    assert load_function("or:2") == or_(2)
    assert load_function("const:2:-1") == constant(2, -1)


def test_load_readonce_spec():
    f = load_function("readonce:AND(x1,x2)")
    assert f == and_(2)


def test_load_json_file(tmp_path):
    p = tmp_path / "f.json"
    p.write_text(json.dumps(parity(2).to_json()))
    assert load_function(str(p)) == parity(2)


def test_parse_errors_carry_position(tmp_path):
    with pytest.raises(SpecParseError) as exc:
        load_function("parity:x")
    assert exc.value.column == 7
    p = tmp_path / "bad.json"
    p.write_text('{"coords": [1],\n "values": [1, }')
    with pytest.raises(SpecParseError) as exc:
        load_function(str(p))
    assert exc.value.line == 2
    with pytest.raises(SpecParseError) as exc:
        load_function("readonce:AND(x1,x1)")
    assert exc.value.column == len("readonce:AND(x1,") + 1


def test_missing_file():
    with pytest.raises(FileNotFoundError):
        load_function("/no/such/file.json")


def test_bs_paths_agree(monkeypatch):
    from liftlab import boolfn

    rng = np.random.default_rng(4)
    fs = [random_sign_function(n, rng) for n in (1, 2, 3, 4, 5) for _ in range(20)]
    fast = [block_sensitivity(f).value for f in fs]
    monkeypatch.setattr(boolfn, "SMALL_PACKING_ARITY", 0)
    boolfn._bs_of_table.cache_clear()
    try:
        assert [block_sensitivity(f).value for f in fs] == fast
    finally:
        boolfn._bs_of_table.cache_clear()

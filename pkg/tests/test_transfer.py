import mpmath
import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from critpoly.connectivity import SectorTag, start_state
from critpoly.lattice import catalog, get_lattice, instantiate
from critpoly.transfer import (BondWeight, ContractError, DivergenceError, Precision, WeightVector, apply_row,
                               assemble_dense, leading_eigenvalue, state_space)

BACKENDS = ["numba", "numpy"]


def square(n=2):
    return instantiate(get_lattice("square"), n)


def start_vector(prog, sector, prec):
    sp = state_space(prog, sector)
    return WeightVector.unit(sp, sp.start_id, prec.nlimbs)


@pytest.mark.parametrize("backend", BACKENDS)
def test_closed_sector_at_p0_collapses_to_singletons(backend, prec30):
    prog = instantiate(get_lattice("kagome"), 2)
    sp = state_space(prog, "closed")
    rng = np.random.default_rng(3)
    vals = rng.random(len(sp))
    vec = WeightVector.from_values(sp, vals, prec30.nlimbs)
    before = vec.total()
    out = apply_row(vec, prog, "closed", BondWeight(0), backend=backend)
    singles = sp.index[start_state(prog.width, SectorTag.CLOSED)]
    ent = out.entries
    assert out.total() == before
    assert all(x == 0 for i, x in enumerate(ent) if i != singles)


@pytest.mark.parametrize("backend", BACKENDS)
def test_open_sector_at_p0_dies(backend, prec30):
    prog = square(3)
    out = apply_row(start_vector(prog, "open", prec30), prog, "open", BondWeight(0), backend=backend)
    assert out.total() == 0


@pytest.mark.parametrize("backend", BACKENDS)
def test_open_sector_at_p1_keeps_start_state(backend, prec30):
    prog = square(3)
    vec = start_vector(prog, "open", prec30)
    out = apply_row(vec, prog, "open", BondWeight.from_p(1), backend=backend)
    assert np.array_equal(out.limbs, vec.limbs)


def test_square_eigenvalues_at_p0(prec30):
    prog = square(2)
    assert leading_eigenvalue(prog, "closed", BondWeight(0), prec30).eigenvalue == 1
    assert leading_eigenvalue(prog, "open", BondWeight(0), prec30).eigenvalue == 0


@pytest.mark.parametrize("sector", ["open", "closed"])
@pytest.mark.parametrize("name,n", [("square", 2), ("square", 3), ("kagome", 2), ("ruby", 2)])
def test_dense_matrix_oracle(name, n, sector, prec30):
    prog = instantiate(get_lattice(name), n)
    sp = state_space(prog, sector)
    M = assemble_dense(sp, 0.5)
    ev = max(abs(np.linalg.eigvals(M)))
    lam = leading_eigenvalue(prog, sector, BondWeight.from_p(0.5), prec30).eigenvalue
    assert abs(float(lam) - ev) < 1e-12


@pytest.mark.parametrize("backend", BACKENDS)
@pytest.mark.parametrize("name", ["kagome", "four-eight", "cross"])
def test_weight_conservation(name, backend):
    """All weight either stays in the sector or lands in the exit sink, exactly."""
    spec = get_lattice(name)
    prog = instantiate(spec, spec.legal_widths(4)[0])
    prec = Precision(40, mpmath.mpf("1e-25"))
    for sector in SectorTag:
        sp = state_space(prog, sector)
        rng = np.random.default_rng(7)
        vec = WeightVector.from_values(sp, rng.random(len(sp)), prec.nlimbs)
        out, sink = apply_row(vec, prog, sector, BondWeight.from_p("0.3"), backend=backend, track_sink=True)
        with prec.context():
            assert out.total() + sink == vec.total()


@pytest.mark.parametrize("backend", BACKENDS)
def test_workers_bit_identical(backend):
    prog = instantiate(get_lattice("kagome"), 4)
    prec = Precision(60)
    for sector in SectorTag:
        sp = state_space(prog, sector)
        rng = np.random.default_rng(11)
        vec = WeightVector.from_values(sp, rng.random(len(sp)), prec.nlimbs)
        w = BondWeight.from_p("0.5244")
        outs = [apply_row(vec, prog, sector, w, workers=k, backend=backend).limbs for k in (1, 2, 4, 8)]
        for o in outs[1:]:
            assert np.array_equal(o, outs[0])


def test_backends_agree():
    prog = instantiate(get_lattice("three-twelve"), 2)
    prec = Precision(60)
    sp = state_space(prog, "open")
    vec = WeightVector.from_values(sp, np.random.default_rng(5).random(len(sp)), prec.nlimbs)
    w = BondWeight.from_p("0.74")
    a = apply_row(vec, prog, "open", w, backend="numba")
    b = apply_row(vec, prog, "open", w, backend="numpy")
    assert np.array_equal(a.limbs, b.limbs)


def test_monotone_in_p(prec30):
    prog = instantiate(get_lattice("kagome"), 2)
    grid = [mpmath.mpf(k) / 10 for k in range(1, 10)]
    lo = [leading_eigenvalue(prog, "open", BondWeight.from_p(p), prec30).eigenvalue for p in grid]
    lc = [leading_eigenvalue(prog, "closed", BondWeight.from_p(p), prec30).eigenvalue for p in grid]
    assert all(b >= a for a, b in zip(lo, lo[1:]))
    assert all(b <= a for a, b in zip(lc, lc[1:]))


def test_warm_start_is_cheaper():
    prog = instantiate(get_lattice("kagome"), 3)
    prec = Precision(60)
    w = BondWeight.from_p("0.5244")
    cold = leading_eigenvalue(prog, "open", w, prec)
    near = BondWeight.from_p("0.52441")
    warm = leading_eigenvalue(prog, "open", near, prec, cold.vector)
    fresh = leading_eigenvalue(prog, "open", near, prec)
    assert warm.iterations < fresh.iterations
    assert abs(warm.eigenvalue - fresh.eigenvalue) < 1e-38


def test_contract_errors(prec30):
    a, b = square(2), square(3)
    vec = start_vector(a, "open", prec30)
    with pytest.raises(ContractError):
        apply_row(vec, b, "open", BondWeight(1))
    with pytest.raises(ContractError):
        apply_row(vec, a, "closed", BondWeight(1))


def test_divergence_error_reports_estimates(prec30):
    prog = instantiate(get_lattice("kagome"), 2)
    with pytest.raises(DivergenceError) as exc:
        leading_eigenvalue(prog, "open", BondWeight(1), prec30, max_iter=3)
    assert exc.value.iterations == 3 and exc.value.last is not None


def test_precision_guard():
    with pytest.raises(ValueError):
        Precision(30, mpmath.mpf("1e-40"))
    assert Precision(60).nlimbs >= 9


@settings(max_examples=50, deadline=None)
@given(st.fractions(min_value=0, max_value=1))
def test_bond_weight_consistency(p):
    w = BondWeight.from_p(mpmath.mpf(p.numerator) / p.denominator)
    with mpmath.workdps(40):
        if p == 1:
            assert mpmath.isinf(w.v) and w.p == 1
        else:
            assert abs(w.p - mpmath.mpf(p.numerator) / p.denominator) < mpmath.mpf(10) ** -14


@pytest.mark.parametrize("spec", catalog(), ids=lambda s: s.name)
def test_crossing_sign_structure(spec):
    from critpoly.threshold import SolverConfig, sector_gap

    cfg = SolverConfig(Precision(30, mpmath.mpf("1e-20")))
    n = 2
    assert sector_gap(spec, n, "0.05", cfg) < 0 < sector_gap(spec, n, "0.95", cfg)

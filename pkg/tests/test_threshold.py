import mpmath
import pytest

from critpoly.lattice import get_lattice, instantiate
from critpoly.threshold import (BracketError, DegenerateStepError, NonConvergenceError, ResultLedger, SolverConfig,
                                ThresholdRecord, _Gap, _scan, find_threshold, householder_step, householder_update,
                                initial_guess, sector_gap)
from critpoly.transfer import BondWeight, Precision

from conftest import P_TRIANGULAR, agree_digits


def _samples(f, v, eps):
    return f(v - eps), f(v), f(v + eps)


def test_householder_on_quadratic():
    with mpmath.workdps(40):
        f = lambda v: v * v - 2  # noqa: E731
        eps = mpmath.mpf("0.01")
        g0, g1, g2 = _samples(f, mpmath.mpf("1.5"), eps)
        assert (g2 - g0) / (2 * eps) == pytest.approx(3)
        assert (g2 - 2 * g1 + g0) / eps ** 2 == pytest.approx(2)
        out = householder_update(g0, g1, g2, mpmath.mpf("1.5"), eps)
        # scalar reference: v - 2 f f' / (2 f'^2 - f f'')
        ref = 1.5 - 2 * 0.25 * 3 / (2 * 9 - 0.25 * 2)
        assert float(out) == pytest.approx(ref, rel=1e-15)
        assert float(out) == pytest.approx(1.4142857142857, abs=1e-12)


@pytest.mark.parametrize("a,start", [("0.3", "2"), ("7", "0.1"), ("1.25", "1.25")])
def test_householder_exact_on_affine(a, start):
    with mpmath.workdps(40):
        a = mpmath.mpf(a)
        f = lambda v: v - a  # noqa: E731
        eps = mpmath.mpf("1e-3")
        w = householder_step(*_samples(f, mpmath.mpf(start), eps), BondWeight(start), eps)
        assert abs(w.v - a) < mpmath.mpf(10) ** -30  # roundoff in f'' is amplified by 1/eps^2


def test_central_differences_exact_for_quadratics():
    with mpmath.workdps(40):
        for eps in (mpmath.mpf(1) / 64, mpmath.mpf("0.01")):
            g0, g1, g2 = _samples(lambda v: v * v, mpmath.mpf(1), eps)
            assert abs((g2 - g0) / (2 * eps) - 2) < mpmath.mpf(10) ** -35
            assert abs((g2 - 2 * g1 + g0) / eps ** 2 - 2) < mpmath.mpf(10) ** -35
        # with a dyadic step no rounding happens at all
        eps = mpmath.mpf(1) / 64
        g0, g1, g2 = _samples(lambda v: v * v, mpmath.mpf(1), eps)
        assert (g2 - g0) / (2 * eps) == 2 and (g2 - 2 * g1 + g0) / eps ** 2 == 2


def test_degenerate_denominator():
    with pytest.raises(DegenerateStepError):
        householder_update(1, 1, 1, 1, "0.1")  # f' = f'' = 0
    with pytest.raises(DegenerateStepError):
        householder_step(1, "1.1", "1.2", BondWeight("0.1"), "0.1")  # f = v + 1: step lands at v = -1


def test_solver_config_defaults():
    cfg = SolverConfig()
    with cfg.prec.context():
        assert abs(cfg.epsilon ** 2 - cfg.prec.delta) < cfg.prec.delta * mpmath.mpf(10) ** -30
    assert cfg.max_householder == 8
    with pytest.raises(ValueError):
        SolverConfig(epsilon=0)


def _rec(n, p, lattice="kagome"):
    with mpmath.workdps(50):
        v = mpmath.mpf(p) / (1 - mpmath.mpf(p))
        return ThresholdRecord(lattice, n, 60, mpmath.nstr(v, 45), p, 3, 100, "2026-01-01T00:00:00+00:00")


def test_ledger_round_trip(tmp_path):
    path = tmp_path / "led.jsonl"
    led = ResultLedger(path)
    recs = [_rec(1, "0.5244297175212747935468796815344550716205"),
            _rec(2, "0.5244060578960626342453788366663456667920")]
    for r in recs:
        led.append(r)
    assert ResultLedger(path).records() == recs
    line = path.read_text().splitlines()[0]
    assert set(__import__("json").loads(line)) == {
        "lattice", "n", "digits", "v_root", "p_root", "householder_steps", "power_iterations_total", "timestamp"}


def test_initial_guess_rules(kagome_table):
    assert initial_guess(ResultLedger(), "kagome", 4).p == mpmath.mpf("0.5")
    led = ResultLedger()
    led.append(_rec(1, kagome_table[1]))
    assert initial_guess(led, "kagome", 4).v == led.records()[0].v
    for n in (2, 3):
        led.append(_rec(n, kagome_table[n]))
    g = initial_guess(led, "kagome", 4)
    assert abs(g.p - mpmath.mpf(kagome_table[4])) < 1e-4
    # extrapolation beats plain reuse here
    assert abs(g.p - mpmath.mpf(kagome_table[4])) < abs(mpmath.mpf(kagome_table[3]) - mpmath.mpf(kagome_table[4]))
    # other lattices and wider widths are ignored
    assert initial_guess(led, "ruby", 4).p == mpmath.mpf("0.5")
    assert initial_guess(led, "kagome", 2).v == led.records()[0].v


@pytest.mark.parametrize("n", [2, 3, 4])
def test_square_exact(n):
    rec = find_threshold("square", n, SolverConfig(Precision(60)), ResultLedger())
    assert abs(rec.p - mpmath.mpf("0.5")) < mpmath.mpf(10) ** -38


@pytest.mark.parametrize("n", [2, 3])
def test_triangular_from_scratch(n):
    rec = find_threshold("triangular", n, SolverConfig(Precision(60)), ResultLedger())
    with mpmath.workdps(60):
        assert abs(rec.p - P_TRIANGULAR) < mpmath.mpf(10) ** -38
    assert rec.householder_steps <= 5


def test_kagome_n3_matches_table(kagome_table):
    led = ResultLedger()
    rec = find_threshold("kagome", 3, SolverConfig(Precision(60)), led)
    assert agree_digits(rec.p_root, kagome_table[3]) >= 38
    assert led.records() == [rec]


def test_root_satisfies_tolerance():
    cfg = SolverConfig(Precision(50, mpmath.mpf("1e-30")))
    rec = find_threshold("four-eight", 2, cfg, ResultLedger())
    with cfg.prec.context():
        assert abs(sector_gap("four-eight", 2, rec.p, cfg)) < cfg.prec.delta
        assert abs(rec.p - rec.v / (1 + rec.v)) < mpmath.mpf(10) ** -45


def test_crude_guess_falls_back_to_bisection():
    cfg = SolverConfig(Precision(40, mpmath.mpf("1e-25")), guess=BondWeight.from_p("0.999"), max_householder=8)
    rec = find_threshold("kagome", 2, cfg, ResultLedger())
    assert agree_digits(rec.p_root, "0.5244060578960626342453788366663456667920") >= 24


def test_non_convergence_carries_trace():
    cfg = SolverConfig(Precision(40, mpmath.mpf("1e-25")), guess=BondWeight.from_p("0.6"), max_householder=1)
    with pytest.raises(NonConvergenceError) as exc:
        find_threshold("kagome", 2, cfg, ResultLedger())
    assert len(exc.value.trace) >= 2


def test_bracket_scan_without_sign_change():
    with pytest.raises(BracketError):
        _scan(lambda v, slot: mpmath.mpf(1), "fake", 1)


def test_digit_doubling_square_n2():
    """Each Householder step from a 1e-3 offset at least doubles the correct digits."""
    cfg = SolverConfig(Precision(60))
    prog = instantiate(get_lattice("square"), 2)
    with cfg.prec.context():
        gap = _Gap(prog, cfg)
        v = BondWeight.from_p(mpmath.mpf("0.5") + mpmath.mpf("1e-3")).v
        floor = mpmath.mpf(10) ** -45
        digits = [-mpmath.log10(abs(v - 1))]
        while abs(v - 1) > floor and len(digits) < 6:
            eps = cfg.epsilon
            v = householder_update(gap(v - eps, -1), gap(v, 0), gap(v + eps, 1), v, eps)
            digits.append(-mpmath.log10(abs(v - 1)) if v != 1 else mpmath.inf)
        for a, b in zip(digits, digits[1:]):
            assert b >= min(2 * a, 45), [mpmath.nstr(d, 4) for d in digits]
        assert digits[-1] >= 40

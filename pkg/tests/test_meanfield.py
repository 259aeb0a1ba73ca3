import math

import pytest

from neurocomp import meanfield as mf
from neurocomp.hopfield import p_error_formula

# Frozen outputs of tests/oracles.py (decimal Newton, dense y scan, quadrature iteration).
M_BETA_2 = 0.9575040240772688
DETERMINISTIC_0_1 = (0.9979992663472967, 0.0010003668263516316)
COUPLED_0_05_20 = (0.9999879061416929, 0.9999879114003488)
CRITICAL_ALPHA_HALF_GRID = 0.0588  # grid step 2e-4


def test_scalar_equation():
    assert mf.solve_m1(0.5) == 0.0
    assert mf.solve_m1(1.0) == 0.0
    assert mf.solve_m1(50.0) == pytest.approx(1.0, abs=1e-12)
    assert mf.solve_m1(2.0) == pytest.approx(M_BETA_2, abs=1e-12)


def test_coupled_equations_limits():
    small = mf.solve_coupled(1e-8, 2.0)
    assert small.converged and small.m1 == pytest.approx(mf.solve_m1(2.0), abs=1e-6)
    assert mf.solve_coupled(0.05, 0.8).m1 == 0.0


def test_coupled_equations_against_quadrature_oracle():
    sol = mf.solve_coupled(0.05, 20.0)
    assert sol.converged
    assert sol.m1 == pytest.approx(COUPLED_0_05_20[0], abs=1e-6)
    assert sol.q == pytest.approx(COUPLED_0_05_20[1], abs=1e-6)


def test_coupled_reports_nonconvergence():
    sol = mf.solve_coupled(0.05, 20.0, max_iter=2)
    assert not sol.converged and sol.iterations == 2


def test_deterministic_limit():
    m, p = mf.solve_deterministic(0.1)
    assert m == pytest.approx(DETERMINISTIC_0_1[0], abs=1e-8)
    assert p == pytest.approx(DETERMINISTIC_0_1[1], abs=1e-8)
    assert mf.solve_deterministic(0.2) == (0.0, 0.5)
    for alpha in (1e-3, 3e-3):
        assert mf.solve_deterministic(alpha)[1] / p_error_formula(alpha) == pytest.approx(1.0, abs=0.02)


def test_critical_capacity():
    a = mf.critical_capacity()
    assert a == pytest.approx(0.1379, abs=5e-4)
    assert a < mf.REPLICA_ALPHA_C
    assert mf.solve_deterministic(0.10)[0] > 0 and mf.solve_deterministic(0.20)[0] == 0
    with pytest.raises(ValueError):
        mf.critical_capacity(0.15, 0.2)


def test_y_equation_root_gives_overlap():
    m, _ = mf.solve_deterministic(0.05)
    lo, hi = 0.0, 10.0
    for _ in range(200):
        mid = 0.5 * (lo + hi)
        lo, hi = (mid, hi) if math.erf(mid) < m else (lo, mid)
    y = 0.5 * (lo + hi)
    assert abs(mf.y_equation(y, 0.05)) < 1e-9


def test_phase_boundary():
    pts = mf.phase_boundary_scan([1.0, 0.5, 0.0])
    assert pts[0].alpha == 0.0 and pts[0].retrieval == mf.DISORDERED
    assert pts[1].alpha == pytest.approx(CRITICAL_ALPHA_HALF_GRID, abs=2.5e-4)
    assert 0 < pts[1].alpha < 0.1379
    assert pts[2].alpha == pytest.approx(0.1379, abs=5e-4)
    assert mf.critical_alpha(0.02) == pytest.approx(mf.critical_capacity(), abs=2e-3)


def test_mixed_state_root():
    assert mf.solve_mixed(0.8) == 0.0
    m = mf.solve_mixed(1.5)
    assert m > 0.1
    assert mf.mixed_state_rhs(m, 1.5) == pytest.approx(m, abs=1e-10)
    # at zero noise the symmetric three-pattern overlap is 1/2
    assert mf.solve_mixed(200.0) == pytest.approx(0.5, abs=1e-6)
    with pytest.raises(ValueError):
        mf.solve_mixed(1.5, n=2)

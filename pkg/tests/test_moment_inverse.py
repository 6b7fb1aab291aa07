import numpy as np
import pytest
from numpy.testing import assert_allclose

from normcurve.curve import MomentVector, PolynomialCurve, critical_radius, forward_moments
from normcurve.errors import RegimeError
from normcurve.moment_inverse import (
    ScaledParams,
    SolverConfig,
    cusp_margin,
    find_potential_minima,
    forward_map,
    initial_guess,
    jacobian_analytic,
    jacobian_fd,
    shift_moments,
    solve,
    solve_shifted,
    solve_with_report,
)


def ellipse_r(t0, t2):
    a = np.sqrt((1 + 2 * abs(t2)) / (1 - 2 * abs(t2)) * t0)
    b = np.sqrt((1 - 2 * abs(t2)) / (1 + 2 * abs(t2)) * t0)
    return 0.5 * (a + b)


def test_config_validation():
    with pytest.raises(ValueError):
        SolverConfig(newton_tol=0)
    with pytest.raises(ValueError):
        SolverConfig(continuation_steps=0)
    with pytest.raises(ValueError):
        SolverConfig(jacobian="secant")


def test_initial_guess_examples():
    g = initial_guess(MomentVector(1.0, [0]))
    assert g.rho == 1 and np.all(g.alpha == 0)
    assert_allclose(initial_guess(MomentVector(0.1, [0, 0.25])).alpha[1], 0.5)
    assert_allclose(initial_guess(MomentVector(0.1, [0, 0, 0.1])).alpha[2], 0.3)
    assert_allclose(initial_guess(MomentVector(0.1, [0, 0.2j])).alpha[1], -0.4j)
    with pytest.raises(ValueError, match=r"\|t2\| < 1/2"):
        initial_guess(MomentVector(0.1, [0, 0.5]))


def test_scaled_params_roundtrip():
    c = PolynomialCurve(0.3, [0.01, 0.02 + 0.01j, -0.003])
    p = ScaledParams.from_curve(c)
    assert_allclose(p.rho, 0.09)
    c2 = ScaledParams.from_vector(p.to_vector()).curve()
    assert_allclose(c2.a, c.a, atol=1e-16)


def test_analytic_jacobian_matches_finite_differences():
    rng = np.random.default_rng(3)
    for n in range(0, 5):
        x = np.empty(2 * n + 3)
        x[0] = rng.uniform(0.01, 1.0)
        x[1:] = 0.1 * rng.normal(size=2 * n + 2)
        Ja = jacobian_analytic(x)
        Jf = jacobian_fd(x)
        assert_allclose(Ja, Jf, atol=1e-7 * max(1.0, np.abs(Ja).max()))


def test_fd_jacobian_solver_agrees():
    m = MomentVector(0.03, [0.01, 0.1 + 0.05j, 0.02j])
    c1 = solve(m)
    c2 = solve(m, SolverConfig(jacobian="fd", newton_tol=1e-11))
    assert_allclose(c2.r, c1.r, atol=1e-9)
    assert_allclose(c2.a, c1.a, atol=1e-9)


def test_solve_examples():
    c = solve(MomentVector(0.04, [0, 0.25]))
    assert_allclose(c.r, 0.2309401076758503, atol=1e-12)
    assert_allclose(c.r, ellipse_r(0.04, 0.25), atol=1e-12)
    assert_allclose(c.a, [0, 2 * 0.25 * c.r], atol=1e-12)
    c = solve(MomentVector(0.25, [0]))
    assert_allclose(c.r, 0.5)
    c = solve(MomentVector(0.23875, [0, 0, 0.1]))
    assert_allclose(c.r, 0.5, atol=1e-12)
    assert_allclose(c.a, [0, 0, 0.075], atol=1e-12)


def test_complex_t2_gives_conjugate_coefficient():
    t2 = 0.3 * np.exp(1.1j)
    c = solve(MomentVector(0.02, [0, t2]))
    assert_allclose(c.r, ellipse_r(0.02, t2), atol=1e-12)
    assert_allclose(c.a[1], 2 * c.r * np.conj(t2), atol=1e-12)


def test_solve_rejects_large_t2():
    with pytest.raises(ValueError):
        solve(MomentVector(0.01, [0, 0.6]))


def test_report():
    c, rep = solve_with_report(MomentVector(0.04, [0, 0.25]))
    assert len(rep.iterations) == SolverConfig().continuation_steps + 1
    assert rep.residual < 1e-12
    assert_allclose(rep.cusp_margin, 1 - np.sqrt(0.5), atol=1e-12)
    assert set(rep.to_json()) >= {"iterations", "residual", "cusp_margin"}


def test_cusp_margin_examples(circle):
    assert cusp_margin(circle) == 1
    for t0 in (0.001, 0.01, 0.1):
        c = solve(MomentVector(t0, [0, 0.25]))
        assert_allclose(cusp_margin(c), 1 - np.sqrt(0.5), atol=1e-10)


def test_single_t3_ramp_monotone():
    tstar = (6 * 0.1) ** -2 / 2
    t0s = tstar * np.array([0.1, 0.3, 0.5, 0.7, 0.9, 0.97])
    rs, margins = [], []
    for t0 in t0s:
        c = solve(MomentVector(t0, [0, 0, 0.1]))
        rs.append(c.r)
        margins.append(cusp_margin(c))
    assert np.all(np.diff(rs) > 0)
    assert np.all(np.diff(margins) < 0)
    assert margins[-1] < 0.2
    with pytest.raises(RegimeError):
        solve(MomentVector(1.02 * tstar, [0, 0, 0.1]))


def test_scaling_covariance():
    lam = 2.0
    m = MomentVector(0.01, [0.005 + 0.002j, 0.15, 0.03 - 0.01j])
    c = solve(m)
    j = np.arange(1, 4)
    ms = MomentVector(lam**2 * m.t0, m.t * lam ** (2.0 - j))
    cs = solve(ms)
    assert_allclose(cs.r, lam * c.r, rtol=1e-10)
    assert_allclose(cs.a, lam * c.a, atol=1e-10 * lam * c.r)


def test_shift_moments_pure_translation():
    # circle centred at z*: moments about z* vanish
    m = shift_moments(MomentVector(0.04, [0.01]), 0.01)
    assert_allclose(m.t, [0], atol=1e-16)


def test_solve_shifted_examples():
    c = solve_shifted(MomentVector(0.04, [0.01]))
    assert_allclose(c.r, 0.2, atol=1e-9)
    assert_allclose(c.a[0], 0.01, atol=1e-9)
    m = MomentVector(0.04, [0, 0.25])
    c0 = solve(m)
    c1 = solve_shifted(m)
    assert_allclose(c1.a, c0.a, atol=1e-10)
    c2 = solve_shifted(MomentVector(0.04, [0.01, 0.25]))
    assert_allclose(c2.r, c0.r, atol=1e-8)
    assert_allclose(c2.a[1:], c0.a[1:], atol=1e-8)
    # the translated ellipse has the original moments
    assert_allclose(forward_moments(c2).t, [0.01, 0.25], atol=1e-10)


def test_solve_shifted_rejects_multiple_minima():
    # on the real axis U = x^2 (1 - x)^2: a second well at z = 1
    m = MomentVector(0.01, [0, 0, 1.0, -0.5])
    assert len(find_potential_minima(m, radius=1.5)) > 1
    with pytest.raises(RegimeError):
        solve_shifted(m, radius=1.5)


def test_roundtrip_sample(roundtrip_curves):
    for c in roundtrip_curves[:40]:
        s = solve(forward_moments(c))
        assert_allclose(s.r, c.r, atol=1e-8)
        assert_allclose(s.a, c.a, atol=1e-8)


def test_forward_map_consistent():
    x = np.array([0.04, 0.0, 0.0, 0.5, 0.0])
    y = forward_map(x)
    assert_allclose(y, [0.04 * (1 - 0.25), 0, 0, 0.25, 0], atol=1e-15)
    assert critical_radius(ScaledParams.from_vector(x).curve()) < 1

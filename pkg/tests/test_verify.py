import math

import numpy as np
import pytest

from helpers import bump_cutoff, fit_slope, square_grid
from orlaplace import (
    BallOutOfDomain,
    BallPair,
    ClosenessViolated,
    CutoffNotCompact,
    DirichletProblem,
    Grid2D,
    MatrixField,
    ScalarField,
    SolverConfig,
    VectorField2,
    boundary_values,
    caccioppoli,
    caccioppoli_suite,
    derived_sqrt,
    dv_field_analytic,
    fixtures,
    gehring_probe,
    ibp_check,
    jacobian,
    mollify,
    pointwise_probe,
    power,
    quadratic,
    solve,
    threshold_bracketing_1d,
    v_field,
)
from orlaplace.verify import ball_integral, divergence_evidence, diverges, stabilizes

FX = fixtures()


def test_fixture_examples():
    assert FX["saddle"].grad(1.0, 1.0) == (2.0, -2.0)
    prof = FX["p_profile"](2.0)
    assert prof.value(0.6, 0.0) == pytest.approx(0.18)
    assert prof.hess(0.6, 0.0)[0] == pytest.approx(1.0)  # laplacian of x^2/2 is 1
    # the counterexample density carries the dimensional constant n - 1
    assert FX["singular_density"](0.5, 0.0, n=3) == pytest.approx(8.0)
    assert FX["singular_density"](0.5, 0.0) == pytest.approx(4.0)


def test_ball_pair_validation():
    g = square_grid(32)
    BallPair((0.0, 0.0), 0.2).validate(g)
    with pytest.raises(BallOutOfDomain):
        BallPair((0.5, 0.0), 0.3).validate(g)
    with pytest.raises(BallOutOfDomain):
        BallPair((0.0, 0.0), 0.48).validate(g)


def test_caccioppoli_saddle_closed_form_oracle():
    # quadratic pair on the saddle: lhs = 8 pi r^2 and
    # rhs_osc = (1/r^2) * 4 * (pi (2r)^4 / 2) = 32 pi r^2, so C = 1/4
    g = square_grid(512)
    u = FX["saddle"].sample(g)
    ball = BallPair((0.0, 0.0), 0.45)
    rep = caccioppoli(u, quadratic(), quadratic(), None, ball, 0.0)
    assert rep.lhs == pytest.approx(8 * math.pi * ball.r**2, rel=0.02)
    assert rep.rhs_osc == pytest.approx(32 * math.pi * ball.r**2, rel=0.02)
    assert rep.empirical_C == pytest.approx(0.25, rel=0.02)


def test_caccioppoli_affine_reports_zero():
    g = square_grid(64)
    u = ScalarField.from_function(g, lambda x, y: 1 + 2 * x - y)
    rep = caccioppoli(u, power(3), derived_sqrt(power(3)), None, BallPair((0, 0), 0.3), 0.0)
    assert rep.empirical_C == 0.0


def test_caccioppoli_source_term_is_ball_area_for_identical_pair():
    # rho = 1 when psi = phi, so the source integral is the area of B_2r
    g = square_grid(128)
    u = FX["saddle"].sample(g)
    f = ScalarField.constant(g, 1.0)
    ball = BallPair((0.1, -0.05), 0.2)
    rep = caccioppoli(u, power(3), power(3), f, ball, 1e-3)
    assert rep.rhs_src == pytest.approx(math.pi * (2 * ball.r) ** 2, rel=0.02)


def _solve_saddle_levels(phi, n0, levels, epsilon, f_const=None):
    out = []
    for k in range(levels):
        g = square_grid(n0 * 2**k)
        f = ScalarField.constant(g, f_const if f_const else 0.0)
        prob = DirichletProblem(
            g, phi, f, boundary_values(g, lambda x, y: x * x - y * y), epsilon
        )
        res = solve(prob, SolverConfig(residual_tol=1e-11))
        assert res.converged
        out.append((res.u, f if f_const else None))
    return out


def test_caccioppoli_suite_stable_for_satisfied_pair():
    phi = power(3)
    levels = _solve_saddle_levels(phi, 32, 3, 1e-3)
    balls = [BallPair((0.0, 0.0), 0.3), BallPair((0.15, -0.1), 0.2)]
    suite = caccioppoli_suite(phi, [phi], levels, balls, n=2, epsilon=1e-3)
    assert len(suite.rows) == 6
    for ver in suite.verdicts:
        assert ver.verdict == "PASS"
        ratios = [a / b for a, b in zip(ver.empirical_Cs, ver.empirical_Cs[1:])]
        assert all(0.5 <= r <= 2.0 for r in ratios)


def test_caccioppoli_suite_excludes_failing_ratio_with_source():
    # psi = quadratic against phi = t^3/3 has rho(t) = 1/t, unbounded at 0:
    # with a source the pair is excluded no matter how the constants look
    phi = power(3)
    levels = _solve_saddle_levels(phi, 32, 2, 1e-3, f_const=1.0)
    suite = caccioppoli_suite(
        phi, [quadratic()], levels, [BallPair((0.0, 0.0), 0.3)], n=2, epsilon=1e-3
    )
    assert suite.verdicts[0].verdict == "EXCLUDED"
    assert not suite.verdicts[0].ratio_ok


def test_caccioppoli_suite_excludes_unsatisfied_closeness():
    # theta = 2/0.5 = 4 meets the n = 3 threshold: hypothesis fails strictly
    phi = power(3)
    levels = _solve_saddle_levels(phi, 32, 2, 1e-3)
    suite = caccioppoli_suite(
        phi, [power(1.5)], levels, [BallPair((0.0, 0.0), 0.3)], n=3, epsilon=1e-3
    )
    assert suite.verdicts[0].verdict == "EXCLUDED"


def _singular_lhs_levels(h0, levels, r):
    out = []
    for k in range(levels):
        h = h0 / 2**k
        g = Grid2D(int(round(2.0 / h)) + 1, int(round(2.0 / h)) + 1, h, -1.0, -1.0)
        u = FX["saddle"].sample(g)
        DV = jacobian(v_field(FX["unit_flux"], u, 0.0))
        out.append(ball_integral(DV.frobenius_sq(), g, (0.0, 0.0), r))
    return out


def test_counterexample_log_divergence():
    lhs = _singular_lhs_levels(1 / 8, 4, 0.25)
    assert divergence_evidence(lhs, 0.2)
    increments = [b - a for a, b in zip(lhs, lhs[1:])]
    for inc in increments:
        assert inc == pytest.approx(2 * math.pi * math.log(2), rel=0.25)


def test_threshold_bracketing_both_sides():
    hs = [1 / 64, 1 / 128, 1 / 256, 1 / 512]
    above = threshold_bracketing_1d(3.0, 0.1, hs)
    below = threshold_bracketing_1d(3.0, -0.1, hs)
    assert stabilizes(above) and not diverges(above)
    assert diverges(below) and not stabilizes(below)


def test_threshold_bracketing_smooth_case_settles():
    # beta = 1 gives V = x: its derivative integral is exactly 2r
    vals = threshold_bracketing_1d(3.0, 1.0, [1 / 64, 1 / 128, 1 / 256])
    assert vals[-1] == pytest.approx(1.0, rel=0.05)
    assert stabilizes(vals)


def test_pointwise_probe_saddle_identity():
    # quadratic pair on the saddle: V_b = grad u, DV_b = D^2 u, tr = 0, and
    # div((D^2u - tr I) grad u) = |D^2u|^2 - (tr)^2 = 8 holds discretely
    g = square_grid(64)
    kappa = 0.02
    probe = pointwise_probe(
        FX["saddle"], mollify(quadratic(), kappa), mollify(quadratic(), kappa),
        0.01, (0.0, 0.0), g,
    )
    inner = slice(2, -2)
    assert np.allclose(probe.lhs_density.values[inner, inner], 8.0, rtol=1e-10)
    assert np.allclose(probe.div_term.values[inner, inner], 8.0, rtol=1e-9)
    assert probe.fitted_c == pytest.approx(1.0, abs=1e-9)
    assert probe.s_gamma == pytest.approx(1.0, abs=1e-12)


def test_pointwise_probe_affine_all_zero():
    g = square_grid(32)
    affine = type(FX["saddle"])(
        "affine",
        lambda x, y: 2 * x - y,
        lambda x, y: (2.0 + 0 * x, -1.0 + 0 * y),
        lambda x, y: (0 * x, 0 * x, 0 * x),
    )
    kappa = 0.02
    probe = pointwise_probe(
        affine, mollify(power(3), kappa), mollify(power(3), kappa), 0.01, (0.0, 0.0), g
    )
    assert np.max(probe.lhs_density.values) < 1e-20
    assert probe.fitted_c == 0.0 and probe.fitted_C == 0.0


def test_pointwise_probe_positive_on_trig_fixture():
    g = square_grid(64)
    kappa = 0.01
    probe = pointwise_probe(
        FX["trig"],
        mollify(power(3), kappa),
        mollify(derived_sqrt(power(3)), kappa),
        0.01,
        (0.0, 0.0),
        g,
    )
    assert probe.fitted_c > 0.0
    assert probe.s_gamma < 2.0


def test_pointwise_probe_closeness_gate():
    # theta = nu = 3 for t^4/4 against the quadratic: past the n = 5
    # threshold 8/3, the probe must refuse to run
    g = square_grid(16)
    kappa = 0.02
    with pytest.raises(ClosenessViolated):
        pointwise_probe(
            FX["trig"], mollify(power(4), kappa), mollify(quadratic(), kappa),
            0.01, (0.0, 0.0), g, n=5,
        )


def test_ibp_constant_field_is_exact():
    g = square_grid(32)
    z = np.zeros((g.ny, g.nx))
    V = VectorField2(g, z + 1.5, z - 2.5)
    DV = MatrixField(g, z, z, z, z)
    eta, _ = bump_cutoff(g)
    lhs, rhs, gap = ibp_check(V, DV, eta, (0.5, 0.5))
    assert lhs == rhs == 0.0 and gap == 0.0


def test_ibp_gap_second_order_with_closed_form_cutoff():
    gaps, hs = [], []
    for k in range(3):
        g = square_grid(50 * 2**k)
        u = FX["saddle"].sample(g)
        V = v_field(quadratic(), u, 0.01)
        DV = dv_field_analytic(quadratic(), u, 0.01)
        eta, geta = bump_cutoff(g)
        _, _, gap = ibp_check(V, DV, eta, (0.0, 0.0), geta)
        gaps.append(gap)
        hs.append(g.h)
    assert fit_slope(hs, gaps) >= 1.5


def test_ibp_discrete_pairing_is_skew_adjoint():
    # with the discrete cutoff gradient the two sides agree to float noise
    g = square_grid(64)
    u = FX["trig"].sample(g)
    V = v_field(power(3), u, 0.01)
    DV = dv_field_analytic(power(3), u, 0.01)
    eta, _ = bump_cutoff(g)
    lhs, rhs, gap = ibp_check(V, DV, eta, (0.1, 0.2))
    assert gap <= 1e-12 * (1 + abs(lhs))


def test_ibp_z_shift_moves_both_sides_equally():
    g = square_grid(64)
    u = FX["saddle"].sample(g)
    V = v_field(quadratic(), u, 0.01)
    DV = dv_field_analytic(quadratic(), u, 0.01)
    eta, geta = bump_cutoff(g)
    l0, r0, gap0 = ibp_check(V, DV, eta, (0.0, 0.0), geta)
    l1, r1, _ = ibp_check(V, DV, eta, (3.0, -2.0), geta)
    assert abs((l1 - l0) - (r1 - r0)) <= max(gap0, 1e-12)


def test_ibp_rejects_non_compact_cutoff():
    g = square_grid(16)
    u = FX["saddle"].sample(g)
    V = v_field(quadratic(), u, 0.01)
    DV = dv_field_analytic(quadratic(), u, 0.01)
    with pytest.raises(CutoffNotCompact):
        ibp_check(V, DV, ScalarField.constant(g, 1.0), (0.0, 0.0))


def test_gehring_constant_field_ratio_one():
    g = square_grid(64)
    ones = np.ones((g.ny, g.nx))
    DV = MatrixField(g, 2 * ones, 0 * ones, 0 * ones, -2 * ones)
    g2 = square_grid(128)
    ones2 = np.ones((g2.ny, g2.nx))
    DV2 = MatrixField(g2, 2 * ones2, 0 * ones2, 0 * ones2, -2 * ones2)
    probe = gehring_probe((DV, None), (DV2, None), [BallPair((0, 0), 0.2)], [0.1, 0.5, 1.0])
    for _, _, _, ratio in probe.rows:
        assert ratio == pytest.approx(1.0, rel=1e-12)
    assert probe.delta_star == 1.0


def test_gehring_smooth_solve_has_positive_delta_star():
    levels = _solve_saddle_levels(quadratic(), 32, 2, 1e-3)
    dvs = [dv_field_analytic(quadratic(), u, 1e-3) for u, _ in levels]
    probe = gehring_probe(
        (dvs[0], None),
        (dvs[1], None),
        [BallPair((0.0, 0.0), 0.2), BallPair((0.15, -0.1), 0.15)],
        [0.1, 0.2, 0.4],
    )
    assert probe.delta_star >= 0.1


def test_gehring_singular_field_reports_zero():
    fields = []
    for n_cells in (32, 64):
        g = square_grid(n_cells)
        u = FX["saddle"].sample(g)
        fields.append(jacobian(v_field(FX["unit_flux"], u, 0.0)))
    probe = gehring_probe(
        (fields[0], None), (fields[1], None), [BallPair((0.0, 0.0), 0.2)], [0.1, 0.2, 0.4]
    )
    assert probe.delta_star == 0.0

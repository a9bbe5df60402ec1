import math

import numpy as np
import pytest

from helpers import fit_slope, square_grid
from orlaplace import (
    Grid2D,
    GridTooSmall,
    KernelUnderResolved,
    MatrixField,
    ScalarField,
    VectorField2,
    auxiliary_pair,
    divergence,
    dv_field_analytic,
    gradient,
    hessian,
    interior_mask,
    jacobian,
    mollify,
    mollify_field,
    power,
    quadratic,
    sum_powers,
    v_field,
)
from orlaplace.verify import fixtures


def test_grid_too_small():
    with pytest.raises(GridTooSmall):
        Grid2D(2, 5, 0.1)


def test_fields_reject_nonfinite():
    g = square_grid(4)
    bad = np.zeros((g.ny, g.nx))
    bad[2, 2] = np.nan
    with pytest.raises(ValueError):
        ScalarField(g, bad)


def test_gradient_affine_exact_everywhere():
    g = square_grid(20)
    u = ScalarField.from_function(g, lambda x, y: 3 * x - 2 * y)
    gr = gradient(u)
    assert np.allclose(gr.vx, 3.0, atol=1e-12)
    assert np.allclose(gr.vy, -2.0, atol=1e-12)


def test_gradient_quadratic_exact_on_interior():
    g = Grid2D(21, 21, 0.1, -1.0, -1.0)
    u = ScalarField.from_function(g, lambda x, y: x * x - y * y)
    gr = gradient(u)
    X, Y = g.meshes()
    m = interior_mask(g)
    assert np.allclose(gr.vx[m], 2 * X[m], atol=1e-12)
    assert np.allclose(gr.vy[m], -2 * Y[m], atol=1e-12)


def test_gradient_refinement_slope_two():
    errs, hs = [], []
    for k in range(3):
        g = square_grid(32 * 2**k)
        u = ScalarField.from_function(g, lambda x, y: np.sin(x) * np.cos(y))
        gr = gradient(u)
        X, Y = g.meshes()
        m = interior_mask(g)
        err = max(
            np.max(np.abs((gr.vx - np.cos(X) * np.cos(Y))[m])),
            np.max(np.abs((gr.vy + np.sin(X) * np.sin(Y))[m])),
        )
        errs.append(err)
        hs.append(g.h)
    assert abs(fit_slope(hs, errs) - 2.0) <= 0.2


def test_hessian_saddle_exact():
    g = Grid2D(21, 21, 0.1, -1.0, -1.0)
    u = ScalarField.from_function(g, lambda x, y: x * x - y * y)
    H = hessian(u)
    m = interior_mask(g)
    assert np.allclose(H.m11[m], 2.0, atol=1e-11)
    assert np.allclose(H.m22[m], -2.0, atol=1e-11)
    assert np.allclose(H.m12[m], 0.0, atol=1e-11)
    assert np.array_equal(H.m12, H.m21)


def test_hessian_mixed_exact_for_xy():
    g = Grid2D(15, 15, 0.2, -1.0, -1.0)
    u = ScalarField.from_function(g, lambda x, y: x * y)
    H = hessian(u)
    m = interior_mask(g)
    assert np.allclose(H.m12[m], 1.0, atol=1e-12)


def test_hessian_refinement_slope_two():
    errs, hs = [], []
    for k in range(3):
        g = square_grid(32 * 2**k)
        u = ScalarField.from_function(g, lambda x, y: np.exp(x + y))
        H = hessian(u)
        X, Y = g.meshes()
        m = interior_mask(g)
        e = np.exp(X + Y)
        err = max(
            np.max(np.abs((H.m11 - e)[m])),
            np.max(np.abs((H.m12 - e)[m])),
            np.max(np.abs((H.m22 - e)[m])),
        )
        errs.append(err)
        hs.append(g.h)
    assert abs(fit_slope(hs, errs) - 2.0) <= 0.2


def test_divergence_linear_fields():
    g = Grid2D(21, 21, 0.1, -1.0, -1.0)
    X, Y = g.meshes()
    m = interior_mask(g)
    div1 = divergence(VectorField2(g, X.copy(), Y.copy()))
    assert np.allclose(div1.values[m], 2.0, atol=1e-12)
    div2 = divergence(VectorField2(g, -Y, X))
    assert np.allclose(div2.values[m], 0.0, atol=1e-12)


def test_divergence_of_profile_flux_is_one():
    # the 1-D profile's flux for the matching power family is the field x,
    # extended constantly in y
    p = 3.0
    prof = fixtures()["p_profile"](p)
    errs, hs = [], []
    for nx in (65, 129):
        h = 2.0 / (nx - 1)
        g = Grid2D(nx, 5, h, -1.0, 0.0)
        u = prof.sample(g)
        div = divergence(v_field(power(p), u, 0.0))
        X, _ = g.meshes()
        m = interior_mask(g) & (np.abs(X) > 0.1)
        errs.append(np.max(np.abs(div.values[m] - 1.0)))
        hs.append(h)
    assert errs[0] < 0.2
    assert fit_slope(hs, errs) >= 1.0


def test_v_field_quadratic_is_gradient():
    g = square_grid(16)
    u = ScalarField.from_function(g, lambda x, y: np.sin(2 * x) + y * y)
    gr = gradient(u)
    V = v_field(quadratic(), u, 0.0)
    assert np.array_equal(V.vx, gr.vx)
    assert np.array_equal(V.vy, gr.vy)


def test_v_field_fixes_unit_gradient():
    # psi'(1) = 1 for any power family, so unit gradients pass through
    g = square_grid(8)
    u = ScalarField.from_function(g, lambda x, y: x)
    V = v_field(power(3.5), u, 0.0)
    assert np.allclose(V.vx, 1.0, atol=1e-12)
    assert np.allclose(V.vy, 0.0, atol=1e-12)


def test_v_field_zero_gradient_maps_to_zero():
    g = square_grid(8)
    u = ScalarField.constant(g, 2.0)
    V = v_field(power(1.5), u, 0.0)
    assert np.array_equal(V.vx, np.zeros_like(V.vx))


def test_v_field_unit_flux_matches_saddle_formula():
    # the inadmissible beta = -1 fixture: V = grad u / |grad u| = (x, -y)/|x|
    g = Grid2D(33, 33, 1.0 / 16, -1.0 - 1.0 / 32, -1.0 - 1.0 / 32)  # origin off-node
    fx = fixtures()
    u = fx["saddle"].sample(g)
    V = v_field(fx["unit_flux"], u, 0.0)
    X, Y = g.meshes()
    R = np.hypot(X, Y)
    m = interior_mask(g)
    assert np.allclose(V.vx[m], (X / R)[m], atol=1e-10)
    assert np.allclose(V.vy[m], (-Y / R)[m], atol=1e-10)


def test_dv_analytic_quadratic_reproduces_hessian():
    g = square_grid(16)
    u = ScalarField.from_function(g, lambda x, y: np.sin(x) * y + x * x)
    H = hessian(u)
    DV = dv_field_analytic(quadratic(), u, 0.37)
    for a, b in ((DV.m11, H.m11), (DV.m12, H.m12), (DV.m21, H.m21), (DV.m22, H.m22)):
        assert np.allclose(a, b, atol=1e-13)


def test_dv_analytic_affine_is_zero():
    g = square_grid(16)
    u = ScalarField.from_function(g, lambda x, y: 2 * x - 3 * y + 1)
    DV = dv_field_analytic(power(3), u, 0.01)
    assert np.max(DV.frobenius_sq()) < 1e-22


@pytest.mark.parametrize(
    "psi", [power(3), sum_powers(2, 4, 1)], ids=lambda F: F.name
)
def test_dv_analytic_matches_fd_jacobian_at_second_order(psi):
    errs, hs = [], []
    for k in range(3):
        g = square_grid(32 * 2**k)
        u = ScalarField.from_function(g, lambda x, y: np.sin(x) * np.cos(y))
        A = dv_field_analytic(psi, u, 0.01)
        J = jacobian(v_field(psi, u, 0.01))
        m = interior_mask(g, 2)
        diff = (
            (A.m11 - J.m11) ** 2
            + (A.m12 - J.m12) ** 2
            + (A.m21 - J.m21) ** 2
            + (A.m22 - J.m22) ** 2
        )
        errs.append(math.sqrt(np.sum(diff[m]) / np.sum(A.frobenius_sq()[m])))
        hs.append(g.h)
    assert abs(fit_slope(hs, errs) - 2.0) <= 0.3


def test_dv_trace_matches_divergence_for_matching_pair():
    phi = power(3)
    diffs = []
    for k in range(2):
        g = square_grid(32 * 2**k)
        u = ScalarField.from_function(g, lambda x, y: np.sin(x) * np.cos(y))
        V = v_field(phi, u, 0.01)
        DV = dv_field_analytic(phi, u, 0.01)
        m = interior_mask(g, 2)
        diffs.append(np.max(np.abs((DV.trace() - divergence(V).values)[m])))
    assert diffs[1] < diffs[0] / 3.0


def test_auxiliary_pair_quadratic_degenerate():
    eps = 0.04
    qk = mollify(quadratic(), 0.05)
    ap = auxiliary_pair(qk, qk, eps, 2.0)
    ts = np.linspace(0.0, 2.0, 64)
    assert np.allclose(ap.alpha(ts), 0.0, atol=1e-12)
    assert np.allclose(ap.beta(ts), 0.0, atol=1e-12)
    assert np.allclose(ap.gamma(ts), 1.0, atol=1e-12)


def test_auxiliary_pair_closed_form_gamma():
    # phi = t^3/3, psi = t^2/2: gamma(t) = (2 t^2 + eps)/(t^2 + eps) in (1, 2)
    eps = 0.01
    kappa = 1e-3
    ap = auxiliary_pair(mollify(power(3), kappa), mollify(quadratic(), kappa), eps, 3.0)
    ts = np.linspace(0.0, 3.0, 128)
    expected = (2 * ts**2 + eps) / (ts**2 + eps)
    assert np.max(np.abs(ap.gamma(ts) - expected)) < 1e-3
    assert np.all(ap.gamma(ts[1:]) > 1.0)
    assert np.all(ap.gamma(ts) < 2.0)


def test_auxiliary_pair_gamma_at_zero_is_one():
    ap = auxiliary_pair(
        mollify(sum_powers(2, 4, 1), 2e-3), mollify(power(3), 2e-3), 0.01, 1.5
    )
    assert float(ap.gamma(0.0)) == pytest.approx(1.0, abs=1e-14)
    i_a, s_a, i_b, s_b, s_g = ap.bound_constants
    assert i_a <= s_a and i_b <= s_b and s_g >= 1.0


def test_auxiliary_pair_gamma_sup_bounded_by_smoothed_closeness():
    # s_gamma <= max(sup theta_k over the reachable arguments, 1)
    eps, c1, kappa = 0.01, 2.5, 2e-3
    phi_k = mollify(power(3), kappa)
    psi_k = mollify(sum_powers(2, 4, 1), kappa)
    ap = auxiliary_pair(phi_k, psi_k, eps, c1)
    from orlaplace import growth_rate

    s = np.sqrt(np.linspace(0.0, c1, 512) ** 2 + eps)
    theta_k = growth_rate(phi_k, s) / growth_rate(psi_k, s)
    assert ap.s_gamma <= max(float(np.max(theta_k)), 1.0) + 1e-12


def test_auxiliary_pair_preconditions():
    eps = 0.01
    with pytest.raises(ValueError):
        auxiliary_pair(mollify(power(3), 0.06), mollify(quadratic(), 0.06), eps, 1.0)
    with pytest.raises(ValueError):
        auxiliary_pair(mollify(power(3), 1e-3), mollify(quadratic(), 2e-3), eps, 1.0)


def test_mollify_field_preserves_constants_exactly():
    g = square_grid(40)
    u = ScalarField.constant(g, 3.25)
    sm = mollify_field(u, 0.2)
    assert np.allclose(sm.values, 3.25, atol=1e-13)
    assert sm.grid.nx == g.nx - 2 * math.ceil(0.2 / g.h)


def test_mollify_field_preserves_affine():
    g = square_grid(40)
    u = ScalarField.from_function(g, lambda x, y: 1.5 * x - 0.3 * y + 0.2)
    sm = mollify_field(u, 0.2)
    X, Y = sm.grid.meshes()
    assert np.max(np.abs(sm.values - (1.5 * X - 0.3 * Y + 0.2))) < 1e-12


def test_mollify_field_is_sup_contraction_and_bounds_gradient():
    g = square_grid(64)
    u = ScalarField.from_function(g, lambda x, y: np.sin(3 * x) * np.cos(2 * y) + x)
    sm = mollify_field(u, 0.15)
    assert np.max(np.abs(sm.values)) <= np.max(np.abs(u.values)) + 1e-14
    g_orig = gradient(u)
    g_sm = gradient(sm)
    assert np.max(g_sm.norm()) <= np.max(g_orig.norm()) + 1e-12


def test_mollify_field_under_resolved():
    g = square_grid(16)
    with pytest.raises(KernelUnderResolved):
        mollify_field(ScalarField.constant(g, 1.0), 1.5 * g.h)


def test_matrix_field_helpers():
    g = square_grid(4)
    ones = np.ones((g.ny, g.nx))
    M = MatrixField(g, ones, 2 * ones, 2 * ones, 3 * ones)
    assert np.allclose(M.frobenius_sq(), 1 + 4 + 4 + 9)
    assert np.allclose(M.trace(), 4.0)

"""Circular-perturbation flow: v(s), spectrum regions, determinant flow,
closed 2x2 densities, the elliptic law and the |lam - S_gamma|^2 R-transform."""

import math

import numpy as np
import pytest
from scipy.optimize import brentq

from freespectra.circular_sum import (
    CircularFlowProblem,
    circular_brown_grid,
    density_2x2_circular,
    elliptic_boundary,
    elliptic_density,
    elliptic_log_fk,
    elliptic_spectrum,
    log_fk_flow,
    nilpotent_circular_radius,
    r_transform_abs_sq_semicircle,
    spectrum_test_circular,
    v_of_s,
)
from freespectra.haar_sum import nilpotent_spectrum
from freespectra.haar_sum import spectrum_test as haar_spectrum_test
from freespectra.measures import (
    SemicircleMeasure,
    TwoByTwoModel,
    ZeroModel,
    nilpotent_model,
    norm_inverse_l2_sq,
    symmetry_model,
)
from freespectra.numerics import GridSpec, laplacian_2d

U2 = symmetry_model()


def _mu_pm_u2(lam):
    lam = complex(lam)
    return abs(lam - 1.0) ** 2, abs(lam + 1.0) ** 2


# ---------------------------------------------------------------------------
# v(s) and the flow threshold


def test_v_of_s_zero_base_closed_form():
    prob = CircularFlowProblem(ZeroModel(), 2.0)
    lam = 0.6 - 0.3j
    r2 = abs(lam) ** 2
    for s in (0.5, r2, 1.0, 2.0, 5.0):
        if s <= 0:
            continue
        want = math.sqrt(max(s - r2, 0.0))
        assert v_of_s(prob, lam, s) == pytest.approx(want, abs=1e-14)


def test_v_of_s_two_atom_closed_vs_bisection():
    prob = CircularFlowProblem(U2, 1.0)
    for lam in (0.4 + 0.3j, 1.2 - 0.5j, 0.05 + 0.9j):
        mp, mm = _mu_pm_u2(lam)
        for s in (0.3, 1.0, 3.0):
            got = v_of_s(prob, lam, s)
            g = lambda v: 0.5 * (1.0 / (mp + v * v) + 1.0 / (mm + v * v)) - 1.0 / s
            if g(0.0) <= 0.0:
                assert got == 0.0
            else:
                want = brentq(g, 0.0, math.sqrt(s), xtol=1e-14)
                assert got == pytest.approx(want, abs=1e-10)


def test_v_of_s_two_atom_plus_branch_display():
    # v(s)^2 = (s - 2 T + sqrt(s^2 + 4(T^2 - D)))/2, "+" branch only
    prob = CircularFlowProblem(U2, 1.0)
    lam = 0.7 + 0.2j
    T = float(U2.shift_norm_sq(lam))
    D = abs(lam * lam - 1.0) ** 2  # det(lam - u2) = lam^2 - 1
    for s in (0.8, 1.5, 4.0):
        want_sq = 0.5 * (s - 2.0 * T + math.sqrt(s * s + 4.0 * (T * T - D)))
        got = v_of_s(prob, lam, s)
        assert got * got == pytest.approx(max(want_sq, 0.0), abs=1e-12)
        assert got >= 0.0


def test_v_of_s_zero_at_and_below_threshold():
    prob = CircularFlowProblem(U2, 1.0)
    lam = 1.2 + 0.1j  # outside sigma(u2)
    t_lam = float(prob.t_lambda(lam))
    assert t_lam == pytest.approx(1.0 / float(U2.inv_norm_sq(lam)), rel=1e-12)
    assert v_of_s(prob, lam, t_lam) == 0.0
    assert v_of_s(prob, lam, 0.5 * t_lam) == 0.0
    assert v_of_s(prob, lam, 1.01 * t_lam) > 0.0


def test_v_of_s_monotone_in_s():
    prob = CircularFlowProblem(U2, 2.0)
    for lam in (0.3 + 0.4j, 1.1 - 0.2j):
        vals = [v_of_s(prob, lam, s) for s in np.linspace(0.05, 4.0, 40)]
        assert all(b >= a - 1e-13 for a, b in zip(vals, vals[1:]))


def test_v_of_s_rejects_nonpositive_s():
    prob = CircularFlowProblem(U2, 1.0)
    with pytest.raises(ValueError):
        v_of_s(prob, 0.5, 0.0)


# ---------------------------------------------------------------------------
# spectrum regions


def test_spectrum_u2_region_rule():
    # |lam^2 - 1|^2 <= t (|lam|^2 + 1)
    t = 1.0
    assert spectrum_test_circular(U2, t, 0.0)
    assert not spectrum_test_circular(U2, t, 2.0)
    for lam in (0.9 + 0.4j, 1.3 + 0.1j, 0.2 - 1.1j, 1.5 - 0.8j):
        want = abs(lam * lam - 1.0) ** 2 <= t * (abs(lam) ** 2 + 1.0)
        assert spectrum_test_circular(U2, t, lam) == want


def test_spectrum_nilpotent_disk():
    nil = nilpotent_model(1.0)
    for t in (0.5, 1.0, 2.0):
        r = nilpotent_circular_radius(t)
        # positive root of r^4 = t (r^2 + 1/2), i.e. the region boundary
        assert r ** 4 == pytest.approx(t * (r * r + 0.5), rel=1e-12)
        assert spectrum_test_circular(nil, t, 0.999 * r)
        assert not spectrum_test_circular(nil, t, 1.001 * r)
        # region rule 2|lam|^4 <= t (1 + 2|lam|^2)
        for lam in (0.5 + 0.5j, 1.1 - 0.3j):
            want = 2.0 * abs(lam) ** 4 <= t * (1.0 + 2.0 * abs(lam) ** 2)
            assert spectrum_test_circular(nil, t, lam) == want
    # at t = 1 the disk radius matches the Haar-route outer radius (the
    # unitary perturbation gives the same outer boundary, hole filled in)
    _, outer = nilpotent_spectrum(1.0)
    assert nilpotent_circular_radius(1.0) == pytest.approx(outer, rel=1e-12)
    assert nilpotent_circular_radius(1.0) == pytest.approx(
        math.sqrt(math.sqrt(0.75) + 0.5), rel=1e-12
    )


def test_spectrum_zero_base_disk():
    z0 = ZeroModel()
    for t in (0.25, 1.0, 2.0):
        root = math.sqrt(t)
        assert spectrum_test_circular(z0, t, 0.999 * root)
        assert not spectrum_test_circular(z0, t, 1.001 * root)


def test_spectrum_u2_t1_matches_haar_sum_region():
    # sigma(u2 + C_1) == sigma(u2 + u), mask for mask on a grid
    grid = GridSpec(-2.2, 2.2, 61, -2.2, 2.2, 61)
    lam = grid.mesh()
    mask_c = spectrum_test_circular(U2, 1.0, lam)
    mask_h = haar_spectrum_test(U2, lam)
    assert np.array_equal(mask_c, mask_h)


# ---------------------------------------------------------------------------
# determinant flow


def test_log_fk_flow_zero_base_values():
    prob = CircularFlowProblem(ZeroModel(), 1.0)
    assert log_fk_flow(prob, 0.5) == pytest.approx(-0.375, abs=1e-12)
    # 1/2 (log t + |lam|^2/t - 1) wherever |lam|^2 <= t
    for t, lam in ((0.5, 0.2 + 0.3j), (2.0, 1.1 - 0.4j), (1.0, 0.0)):
        prob_t = CircularFlowProblem(ZeroModel(), t)
        want = 0.5 * (math.log(t) + abs(lam) ** 2 / t - 1.0)
        assert log_fk_flow(prob_t, lam) == pytest.approx(want, abs=1e-12)


@pytest.mark.parametrize("t", [0.5, 1.0, 2.0])
@pytest.mark.parametrize(
    "model,lam",
    [(U2, 0.4 + 0.3j), (nilpotent_model(1.0), 0.3 - 0.2j)],
    ids=["symmetry", "nilpotent"],
)
def test_log_fk_flow_closed_vs_quadrature(model, lam, t):
    prob = CircularFlowProblem(model, t)
    closed = log_fk_flow(prob, lam, method="closed")
    quad = log_fk_flow(prob, lam, method="quadrature")
    assert closed == pytest.approx(quad, abs=1e-10)
    assert log_fk_flow(prob, lam) == closed  # "auto" picks the closed route


def test_log_fk_flow_two_atom_antiderivative_chain():
    # 1/4 log t + T/(2t) + 1/4 log(t + W) - W/(4t) - 1/4 log det|lam-a|^2
    #   - (1/4) log 2 - 1/4, relative to log Delta(lam - a); W = sqrt(t^2+R)
    t = 1.3
    prob = CircularFlowProblem(U2, t)
    for lam in (0.4 + 0.3j, 1.1 - 0.6j):
        T = float(U2.shift_norm_sq(lam))
        D = abs(lam * lam - 1.0) ** 2
        W = math.sqrt(t * t + 4.0 * (T * T - D))
        chain = (
            0.25 * math.log(t)
            + T / (2.0 * t)
            + 0.25 * math.log(t + W)
            - W / (4.0 * t)
            - 0.25 * math.log(D)
            - 0.25 * math.log(2.0)
            - 0.25
        )
        base = 0.25 * math.log(D)
        assert log_fk_flow(prob, lam) == pytest.approx(base + chain, abs=1e-12)


def test_log_fk_flow_collapses_to_base_at_threshold():
    lam = 1.2 + 0.1j  # outside sigma(u2): base term is 1/2 log|lam^2 - 1|
    t_lam = 1.0 / float(U2.inv_norm_sq(lam))
    prob = CircularFlowProblem(U2, t_lam)
    assert log_fk_flow(prob, lam) == pytest.approx(
        0.5 * math.log(abs(lam * lam - 1.0)), abs=1e-12
    )


def test_log_fk_flow_base_spectrum_rejected():
    prob = CircularFlowProblem(U2, 1.0)
    with pytest.raises(ValueError, match="base-point determinant undefined"):
        log_fk_flow(prob, 1.0)


# ---------------------------------------------------------------------------
# closed 2x2 densities


def test_density_u2_real_part_display():
    # 1/(pi t) + (1/(8 pi x^2)) (t/sqrt(t^2 + 16 x^2) - 1), x = Re lam
    # (the listed points sit inside the region for every t below)
    for t in (0.5, 1.0, 2.0):
        for lam in (0.9 + 0.2j, 1.1 - 0.15j, 0.75 + 0.0j):
            assert spectrum_test_circular(U2, t, lam)
            x = lam.real
            want = 1.0 / (math.pi * t) + (1.0 / (8.0 * math.pi * x * x)) * (
                t / math.sqrt(t * t + 16.0 * x * x) - 1.0
            )
            assert density_2x2_circular(U2, t, lam) == pytest.approx(want, rel=1e-12)
    # the density is a function of the real part alone
    assert density_2x2_circular(U2, 1.0, 0.4 + 0.1j) == pytest.approx(
        density_2x2_circular(U2, 1.0, 0.4 + 0.3j), rel=1e-12
    )


def test_density_nilpotent_radial_display():
    nil = nilpotent_model(1.0)
    for t in (0.5, 1.0):
        for lam in (0.3 + 0.2j, 0.5, 0.7j):
            assert spectrum_test_circular(nil, t, lam)
            r2 = abs(lam) ** 2
            R = 1.0 + 4.0 * r2
            want = (1.0 / (math.pi * t)) * (
                1.0
                - 2.0 * r2 / ((1.0 + 4.0 * r2) * math.sqrt(t * t + 1.0 + 4.0 * r2))
                + (t - math.sqrt(t * t + R)) / (1.0 + 4.0 * r2) ** 2
            )
            assert density_2x2_circular(nil, t, lam) == pytest.approx(want, rel=1e-12)
    # rotational symmetry
    ring = [0.6 * np.exp(1j * th) for th in np.linspace(0.0, 2.0 * np.pi, 9)]
    vals = [density_2x2_circular(nil, 1.0, z) for z in ring]
    assert max(vals) - min(vals) < 1e-13


def test_density_zero_matrix_flat():
    # R(lam) == 0 limit: constant 1/(pi t) on the disk
    zero2 = TwoByTwoModel([[0.0, 0.0], [0.0, 0.0]])
    for t in (0.5, 2.0):
        assert density_2x2_circular(zero2, t, 0.2 + 0.1j) == pytest.approx(
            1.0 / (math.pi * t), rel=1e-12
        )


@pytest.mark.parametrize("t", [0.5, 1.0, 2.0])
@pytest.mark.parametrize(
    "model,lam",
    [(U2, 0.9 + 0.2j), (nilpotent_model(1.0), 0.3 - 0.2j)],
    ids=["symmetry", "nilpotent"],
)
def test_density_two_routes_agree(model, lam, t):
    prob = CircularFlowProblem(model, t)
    lap = laplacian_2d(lambda z: log_fk_flow(prob, z), lam, step=1e-3) / (2.0 * math.pi)
    assert lap == pytest.approx(density_2x2_circular(model, t, lam), abs=1e-4)


# ---------------------------------------------------------------------------
# elliptic law


def test_elliptic_axes_circle_case():
    ax_re, ax_im = elliptic_spectrum(0.5, 0.5)
    assert ax_re == pytest.approx(1.0, rel=1e-14)
    assert ax_im == pytest.approx(1.0, rel=1e-14)
    assert elliptic_density(0.5, 0.5, 0.0) == pytest.approx(1.0 / math.pi, rel=1e-12)


def test_elliptic_axes_formula():
    # (2a/sqrt(a+b), 2b/sqrt(a+b)) at (1, 1/4)
    ax_re, ax_im = elliptic_spectrum(1.0, 0.25)
    root = math.sqrt(1.25)
    assert ax_re == pytest.approx(2.0 / root, rel=1e-14)
    assert ax_im == pytest.approx(0.5 / root, rel=1e-14)


def test_elliptic_density_constant_value():
    want = 5.0 / (4.0 * math.pi)
    assert elliptic_density(1.0, 0.25, 0.1 + 0.05j) == pytest.approx(want, rel=1e-12)
    assert elliptic_density(1.0, 0.25, 2.0) == 0.0
    assert elliptic_density(1.0, 0.25, 1.7 + 0.2j) == 0.0  # past the vertex


def test_elliptic_boundary_zhukowski_trace():
    ax_re, ax_im = elliptic_spectrum(1.0, 0.25)
    pts = elliptic_boundary(1.0, 0.25, 256)
    # reconstruct each point from the ellipse parametrization at its angle
    theta = np.arctan2(pts.imag / ax_im, pts.real / ax_re)
    param = ax_re * np.cos(theta) + 1j * ax_im * np.sin(theta)
    assert np.max(np.abs(pts - param)) <= 1e-10


def test_elliptic_boundary_norm_identity():
    # on the boundary 2 beta ||(lam - S_gamma)^{-1}||_2^2 = 1
    alpha, beta = 1.0, 0.25
    gamma = alpha - beta
    ax_re, ax_im = elliptic_spectrum(alpha, beta)
    m = SemicircleMeasure(gamma)
    for lam in (ax_re + 0.0j, 1j * ax_im):
        assert 2.0 * beta * norm_inverse_l2_sq(m, lam) == pytest.approx(1.0, abs=1e-10)


def test_elliptic_flow_density_constant():
    alpha, beta = 1.0, 0.25
    want = (1.0 / (4.0 * math.pi)) * (1.0 / alpha + 1.0 / beta)
    for lam in (0.1 + 0.05j, -0.5 + 0.1j, 0.8 - 0.2j):
        lap = laplacian_2d(
            lambda z: elliptic_log_fk(alpha, beta, z), lam, step=1e-3
        ) / (2.0 * math.pi)
        assert abs(lap - want) / want <= 1e-3


def test_elliptic_tall_orientation():
    # alpha < beta: the ellipse stands upright, same constant density
    ax_re, ax_im = elliptic_spectrum(0.25, 1.0)
    assert ax_re == pytest.approx(0.5 / math.sqrt(1.25), rel=1e-14)
    assert ax_im == pytest.approx(2.0 / math.sqrt(1.25), rel=1e-14)
    want = 5.0 / (4.0 * math.pi)
    assert elliptic_density(0.25, 1.0, 0.05 + 0.1j) == pytest.approx(want, rel=1e-12)
    assert elliptic_density(0.25, 1.0, 0.0 + 1.85j) == 0.0
    lap = laplacian_2d(
        lambda z: elliptic_log_fk(0.25, 1.0, z), 0.05 + 0.6j, step=1e-3
    ) / (2.0 * math.pi)
    assert abs(lap - want) / want <= 1e-3


# ---------------------------------------------------------------------------
# R-transform of |lam - S_gamma|^2


def test_r_abs_sq_semicircle_gamma_zero():
    for z in (0.1, 0.3 + 0.1j):
        got = r_transform_abs_sq_semicircle(0.0, 2.0, z)
        assert got == pytest.approx(4.0 * z, rel=1e-14)


def test_r_abs_sq_semicircle_center():
    # lam = 0: free-Poisson-type series gamma z/(1 - gamma z)
    gamma = 0.5
    for z in (0.1, 0.25):
        got = r_transform_abs_sq_semicircle(gamma, 0.0, z)
        assert got == pytest.approx(gamma * z / (1.0 - gamma * z), rel=1e-13)


def test_r_abs_sq_semicircle_vs_moment_reversion():
    # independent series route: exact moments of |1 - S_1|^2 (Catalan
    # binomials), revert g(z) = z(1 + sum m_k z^k) for K, then
    # R(z) = 1/K(z)... via the determining-series algebra, to order 18
    # (the displayed poles at 1/2 and 1 make order 10 too short at z=0.1)
    from freespectra.measures import TruncatedSeries

    order = 18
    catalan = [1]
    for n in range(1, order + 1):
        catalan.append(catalan[-1] * 2 * (2 * n - 1) // (n + 1))
    # E[(1 - x)^{2k}] with x semicircular(1): sum_j C(2k, 2j) odd moments drop
    moments = [1.0]
    for k in range(1, order + 1):
        tot = 0.0
        for j in range(0, 2 * k + 1):
            if j % 2 == 0:
                tot += math.comb(2 * k, j) * catalan[j // 2]
        moments.append(tot)
    g = TruncatedSeries.from_list([0.0, 1.0] + moments[1:])
    k_series = g.revert()
    q = TruncatedSeries.from_list(k_series.coeffs[1:])
    r = q.reciprocal()
    z = 0.1
    series_val = sum(
        (r.coeff(j) - (1.0 if j == 0 else 0.0)) * z**j for j in range(order + 1)
    )
    formula = r_transform_abs_sq_semicircle(1.0, 1.0, z)
    assert complex(formula).imag == pytest.approx(0.0, abs=1e-14)
    assert complex(formula).real == pytest.approx(series_val, abs=1e-10)


def test_r_abs_sq_semicircle_pole_rejected():
    with pytest.raises(ValueError, match="pole"):
        r_transform_abs_sq_semicircle(1.0, 1.0, 0.5)  # z = 1/(2 gamma)
    with pytest.raises(ValueError, match="pole"):
        r_transform_abs_sq_semicircle(1.0, 1.0, 1.0)  # z = 1/gamma


# ---------------------------------------------------------------------------
# grids


def test_circular_grid_zero_base():
    t = 0.5
    spec = GridSpec(-1.2, 1.2, 41, -1.2, 1.2, 41)
    res = circular_brown_grid(CircularFlowProblem(ZeroModel(), t), spec)
    inside = res.density[res.in_spectrum]
    assert np.max(np.abs(inside - 1.0 / (math.pi * t))) < 1e-12
    assert np.all(res.density[~res.in_spectrum] == 0.0)
    # mask is the |lam| <= sqrt(t) disk up to one cell
    lam = spec.mesh()
    dist = np.abs(np.abs(lam) - math.sqrt(t))
    cell = math.hypot(spec.re_step, spec.im_step)
    assert not np.any((dist > cell) & (res.in_spectrum != (np.abs(lam) <= math.sqrt(t))))
    assert res.mass == pytest.approx(1.0, abs=0.02)


def test_circular_grid_threads_deterministic():
    spec = GridSpec(-2.0, 2.0, 31, -2.0, 2.0, 31)
    one = circular_brown_grid(CircularFlowProblem(U2, 1.0), spec, threads=1)
    three = circular_brown_grid(CircularFlowProblem(U2, 1.0), spec, threads=3)
    assert np.array_equal(one.density, three.density)
    assert np.array_equal(one.log_delta, three.log_delta)
    assert np.array_equal(one.in_spectrum, three.in_spectrum)


def test_circular_grid_mass_u2():
    spec = GridSpec(-2.4, 2.4, 161, -2.4, 2.4, 161)
    res = circular_brown_grid(CircularFlowProblem(U2, 1.0), spec)
    assert 0.97 < res.mass < 1.03

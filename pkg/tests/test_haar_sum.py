"""Spectrum and Brown measure of a + u (free Haar unitary perturbation)."""

import math

import numpy as np
import pytest

from freespectra.haar_sum import (
    HaarSumProblem,
    brown_grid,
    density_2x2_closed,
    density_general,
    f_poisson_closed,
    f_selfadjoint_via_cauchy,
    f_unitary_via_cauchy,
    log_fk_2x2_closed,
    log_fk_determinant,
    nilpotent_density,
    nilpotent_spectrum,
    solve_v,
    spectrum_test,
    uniform_circle_grid,
)
from freespectra.measures import (
    ArcsineMeasure,
    AtomicMeasure,
    NormalSelfAdjointModel,
    NormalUnitaryModel,
    PoissonKernelMeasure,
    SemicircleMeasure,
    ZeroModel,
    nilpotent_model,
    roots_of_unity_model,
    symmetry_model,
)
from freespectra.numerics import GridSpec, laplacian_2d
from freespectra.rdiagonal import DegenerateRadialError, fk_determinant_lemma


U2 = symmetry_model()
U2_PROBLEM = HaarSumProblem(U2)


def _lemniscate_gap(lam: complex) -> float:
    """Positive inside sigma(u2 + u): |lam|^2 + 1 - |lam^2 - 1|^2."""
    return abs(lam) ** 2 + 1.0 - abs(lam * lam - 1.0) ** 2


# ---------------------------------------------------------------------------
# spectrum


def test_spectrum_u2_membership():
    assert spectrum_test(U2, 0.0)
    assert not spectrum_test(U2, 2.0)


def test_spectrum_u2_lemniscate_region():
    # sign of |lam|^2 + 1 - |lam^2-1|^2 agrees with the membership test
    xs = np.linspace(-2.0, 2.0, 41)
    for x in xs:
        for y in xs:
            lam = complex(x, y)
            gap = _lemniscate_gap(lam)
            if abs(gap) < 1e-9:
                continue
            assert bool(spectrum_test(U2, lam)) == (gap > 0), lam


def test_spectrum_vectorized():
    lam = np.array([0.0, 2.0, 1.0 + 0.1j])
    out = spectrum_test(U2, lam)
    assert out.tolist() == [True, False, True]


# ---------------------------------------------------------------------------
# subordination solve


def test_solve_v_u2_rational_roots():
    res = solve_v(U2_PROBLEM, 0.5)
    assert abs(res.v - 4.0 / 11.0) < 1e-12
    assert abs(res.f_value - 11.0 / 15.0) < 1e-12
    assert res.residual <= 1e-12

    res1 = solve_v(U2_PROBLEM, 1.0)
    assert abs(res1.v - 0.5) < 1e-12


def test_solve_v_u3_interior_point():
    res = solve_v(HaarSumProblem(roots_of_unity_model(3)), 0.2)
    assert res is not None and res.v > 0
    assert res.residual <= 1e-12


def test_solve_v_outside_support():
    assert solve_v(U2_PROBLEM, 2.0) is None
    assert solve_v(U2_PROBLEM, 2.0 + 1.0j) is None


def test_solve_v_scalar_shift_degenerate():
    with pytest.raises(DegenerateRadialError):
        solve_v(HaarSumProblem(ZeroModel()), 0.5)
    # |lam - u2| is scalar at lam = 0 as well
    with pytest.raises(DegenerateRadialError):
        solve_v(U2_PROBLEM, 0.0)


# ---------------------------------------------------------------------------
# log-determinant


def test_log_fk_u2_value_three_routes():
    expected = -0.25 * math.log(15.0 / 16.0)
    assert abs(log_fk_determinant(U2_PROBLEM, 0.5) - expected) < 1e-12
    assert abs(log_fk_2x2_closed(U2, 0.5) - expected) < 1e-12
    # same number from the R-diagonal lemma: mu_pm of |0.5 - u2|^2 at z = 1
    lemma = fk_determinant_lemma(AtomicMeasure([0.25, 2.25]), 1.0)
    assert abs(lemma - expected) < 1e-10


def test_log_fk_u2_center_is_zero():
    assert log_fk_determinant(U2_PROBLEM, 0.0) == 0.0


def test_log_fk_outside_is_shift_determinant():
    lam = 1.8  # outside the lemniscate on the real axis
    assert not spectrum_test(U2, lam)
    expected = 0.5 * math.log(abs(lam * lam - 1.0))
    assert abs(log_fk_determinant(U2_PROBLEM, lam) - expected) < 1e-12


def test_log_fk_far_field():
    lam = 40.0
    assert abs(log_fk_determinant(U2_PROBLEM, lam) - math.log(lam)) < 1e-3


# ---------------------------------------------------------------------------
# density


def test_density_u2_at_one_all_routes():
    expected = 11.0 / (36.0 * math.pi)
    assert abs(density_general(U2_PROBLEM, 1.0) - expected) < 1e-12
    assert abs(density_2x2_closed(U2, 1.0) - expected) < 1e-12
    assert abs(density_2x2_closed(U2, 1.0, variant="tau_det") - expected) < 1e-12


def test_density_u2_center_by_continuity():
    # lam = 0 is the degenerate point of the 2x2 forms; continuous limit
    expected = 3.0 / (16.0 * math.pi)
    assert abs(density_general(U2_PROBLEM, 0.0) - expected) < 1e-7


def test_density_outside_is_zero():
    assert density_general(U2_PROBLEM, 2.0) == 0.0
    assert density_general(U2_PROBLEM, 1.5j) == 0.0


def test_density_2x2_pipeline_consistency():
    # general subordination route == closed 2x2 forms on interior points
    models = [symmetry_model(), nilpotent_model(1.0)]
    points = [0.5, 1.0, 0.3 + 0.6j, 0.9 - 0.2j, 1.1 + 0.1j]
    for model in models:
        problem = HaarSumProblem(model)
        for lam in points:
            if solve_v(problem, lam) is None:
                continue
            general = density_general(problem, lam)
            for variant in ("eigenvalues", "tau_det"):
                closed = density_2x2_closed(model, lam, variant=variant)
                assert abs(general - closed) < 1e-6, (model.kind, lam, variant)


@pytest.mark.parametrize(
    "model,points",
    [
        (symmetry_model(), (0.9 + 0.3j, 0.5)),
        (roots_of_unity_model(3), (0.2, 0.1 + 0.4j)),
        (nilpotent_model(1.0), (0.95 + 0.1j, 1.0)),
        (NormalSelfAdjointModel(ArcsineMeasure()), (0.8 + 0.3j,)),
        (NormalUnitaryModel(PoissonKernelMeasure(0.7)), (0.2 + 1.0j, 1.1j)),
    ],
    ids=["u2", "u3", "nilpotent", "arcsine", "poisson"],
)
def test_density_matches_laplacian_route(model, points):
    problem = HaarSumProblem(model)
    for lam in points:
        lap = laplacian_2d(
            lambda z: log_fk_determinant(problem, z), lam, step=1e-3
        ) / (2.0 * math.pi)
        direct = density_general(problem, lam)
        assert abs(lap - direct) < 1e-4, lam


def test_density_conjugation_symmetry():
    # real-spectrum a: density(lam) = density(conj(lam))
    for lam in (0.4 + 0.5j, 1.0 + 0.2j, 0.8 - 0.7j):
        d1 = density_general(U2_PROBLEM, lam)
        d2 = density_general(U2_PROBLEM, np.conj(lam))
        assert abs(d1 - d2) < 1e-12


# ---------------------------------------------------------------------------
# nilpotent model


def test_nilpotent_spectrum_radii():
    inner, outer = nilpotent_spectrum(1.0)
    assert abs(inner * inner - 0.5) < 1e-14
    assert abs(outer * outer - (math.sqrt(0.75) + 0.5)) < 1e-14
    assert nilpotent_spectrum(math.sqrt(2.0))[0] == 0.0
    assert nilpotent_spectrum(1.5)[0] == 0.0  # full disk past sqrt(2)


def test_nilpotent_eigenvalue_formula():
    t = 0.8
    model = nilpotent_model(t)
    for lam in (0.7 + 0.2j, 0.3, 1.0j):
        r2 = abs(complex(lam)) ** 2
        root = t * math.sqrt(t * t + 4.0 * r2)
        mu_p = (t * t + 2.0 * r2 + root) / 2.0
        mu_m = (t * t + 2.0 * r2 - root) / 2.0
        got_p, got_m = model.mu_pm(complex(lam))
        assert abs(float(got_p) - mu_p) < 1e-12
        assert abs(float(got_m) - mu_m) < 1e-12


def test_nilpotent_density_value_and_consistency():
    expected = 1.08 / math.pi
    assert abs(nilpotent_density(1.0, 1.0) - expected) < 1e-12
    problem = HaarSumProblem(nilpotent_model(1.0))
    assert abs(density_general(problem, 1.0) - expected) < 1e-10
    inner, outer = nilpotent_spectrum(1.0)
    for r in np.linspace(inner + 0.05, outer - 0.05, 5):
        assert abs(nilpotent_density(1.0, r) - density_general(problem, float(r))) < 1e-8


def test_nilpotent_density_is_radial():
    problem = HaarSumProblem(nilpotent_model(1.0))
    r = 1.05
    vals = [
        density_general(problem, r * np.exp(1j * th))
        for th in np.linspace(0.0, 2.0 * math.pi, 9)
    ]
    assert max(vals) - min(vals) < 1e-8


def test_nilpotent_density_outside_annulus():
    assert nilpotent_density(1.0, 0.5) == 0.0  # |lam|^2 = 0.25 < 1/2
    assert nilpotent_density(1.0, 1.3) == 0.0


# ---------------------------------------------------------------------------
# f through Cauchy transforms


def test_f_selfadjoint_arcsine_matches_quadrature():
    m = ArcsineMeasure()
    v, lam = 2.0, 0.3 + 0.4j
    direct = m.expect(lambda x: 1.0 / (1.0 + v * abs(lam - x) ** 2))
    assert abs(f_selfadjoint_via_cauchy(m, v, lam) - direct) < 1e-9


def test_f_selfadjoint_single_atom():
    assert abs(f_selfadjoint_via_cauchy(AtomicMeasure([0.0]), 1.0, 1j) - 0.5) < 1e-12


def test_f_selfadjoint_semicircle_matches_quadrature():
    m = SemicircleMeasure(1.0)
    v, lam = 2.0, 0.3 + 0.4j
    direct = m.expect(lambda x: 1.0 / (1.0 + v * abs(lam - x) ** 2))
    assert abs(f_selfadjoint_via_cauchy(m, v, lam) - direct) < 1e-9


def test_f_unitary_haar_matches_quadrature():
    m = PoissonKernelMeasure(0.0)
    v, lam = 1.5, 0.6 + 0.1j
    direct = complex(m.expect(lambda w: 1.0 / (1.0 + v * abs(lam - w) ** 2))).real
    assert abs(f_unitary_via_cauchy(m, v, lam) - direct) < 1e-9


def test_f_unitary_poisson_and_closed_form():
    m = PoissonKernelMeasure(0.7)
    v, lam = 1.5, 0.6 + 0.1j
    direct = complex(m.expect(lambda w: 1.0 / (1.0 + v * abs(lam - w) ** 2))).real
    via_cauchy = f_unitary_via_cauchy(m, v, lam)
    assert abs(via_cauchy - direct) < 1e-9
    assert abs(f_poisson_closed(0.7, v, lam) - via_cauchy) < 1e-12


def test_f_unitary_center_fallback():
    # z_pm formula degenerates at lam = 0; direct integral takes over
    m = PoissonKernelMeasure(0.7)
    direct = complex(m.expect(lambda w: 1.0 / (1.0 + 1.5 * abs(w) ** 2))).real
    assert abs(f_unitary_via_cauchy(m, 1.5, 0.0) - direct) < 1e-9


# ---------------------------------------------------------------------------
# grids


def test_brown_grid_u2_thread_determinism():
    spec = GridSpec.square(2.0, 61)
    one = brown_grid(U2_PROBLEM, spec, threads=1)
    three = brown_grid(U2_PROBLEM, spec, threads=3)
    assert np.array_equal(one.density, three.density)
    assert np.array_equal(one.log_delta, three.log_delta)
    assert np.array_equal(one.in_spectrum, three.in_spectrum)


def test_brown_grid_u2_mass_coarse():
    spec = GridSpec.square(2.0, 161)
    res = brown_grid(U2_PROBLEM, spec)
    assert 0.97 < res.mass < 1.03
    assert np.all(res.density[~res.in_spectrum] == 0.0)
    assert np.all(res.density >= 0.0)


def test_zero_model_grid_is_unit_circle():
    spec = GridSpec.square(1.6, 201)
    res = brown_grid(HaarSumProblem(ZeroModel()), spec)
    assert abs(res.mass - 1.0) < 1e-9  # binned circle mass is exact
    lam = spec.mesh()
    np.testing.assert_allclose(
        res.log_delta, np.log(np.maximum(np.abs(lam), 1.0)), atol=1e-12
    )
    radii = np.abs(lam[res.in_spectrum])
    cell = math.hypot(spec.re_step, spec.im_step)
    assert np.all(np.abs(radii - 1.0) <= cell)


def test_uniform_circle_grid_shifted():
    spec = GridSpec(-1.0, 3.0, 101, -2.0, 2.0, 101)
    res = uniform_circle_grid(spec, center=1.0 + 0.0j, radius=0.5)
    assert abs(res.mass - 1.0) < 1e-9
    lam = spec.mesh()
    radii = np.abs(lam[res.in_spectrum] - 1.0)
    assert np.all(np.abs(radii - 0.5) <= math.hypot(spec.re_step, spec.im_step))

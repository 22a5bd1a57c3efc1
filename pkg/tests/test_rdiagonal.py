"""Radial Brown-measure machinery of u*h: CDF, annulus, determinants, series."""

import math

import numpy as np
import pytest

from freespectra.measures import (
    AtomicMeasure,
    QuarterCircleMeasure,
    SquaredMeasure,
    TruncatedSeries,
    r_transform,
)
from freespectra.rdiagonal import (
    DegenerateRadialError,
    HStats,
    OutsideAnnulusError,
    RadialLaw,
    circular_determining_series,
    combine_determining_series,
    determining_series,
    fk_determinant,
    fk_determinant_lemma,
    haagerup_larsen_radii,
    log_abs_uh_minus_one,
    r_transform_from_determining,
    radial_cdf,
    radial_cdf_fn,
    radial_cdf_two_atoms,
    radial_log_potential,
    rdiag_spectrum_test,
    s_transform_from_determining,
    spectral_radius_product,
)


def _circular_h2(t: float) -> SquaredMeasure:
    """Law of |C_t|^2: squared quarter-circle of scale 2 sqrt(t)."""
    return SquaredMeasure(QuarterCircleMeasure.of_circular(t))


def _random_positive_laws(count: int, seed: int = 5):
    """Two- and three-atom laws of h^2 with z=1 strictly inside the annulus."""
    rng = np.random.default_rng(seed)
    laws = []
    while len(laws) < count:
        k = int(rng.integers(2, 4))
        atoms = rng.uniform(0.05, 4.0, size=k)
        weights = rng.dirichlet(np.ones(k))
        inner_sq = 1.0 / float(np.sum(weights / atoms))
        outer_sq = float(np.sum(weights * atoms))
        if inner_sq < 0.9 and outer_sq > 1.1:
            laws.append(AtomicMeasure(list(atoms), list(weights)))
    return laws


# ---------------------------------------------------------------------------
# radial CDF


def test_radial_cdf_circular_law():
    h2 = _circular_h2(1.0)
    for r in (0.3, 0.55, 0.9):
        assert abs(radial_cdf(h2, r) - r * r) < 1e-9  # uniform-disk CDF
    assert radial_cdf(h2, 1.0) == 1.0


def test_radial_cdf_two_atom_closed_form():
    mu_p, mu_m = 2.25, 0.25
    law = AtomicMeasure([mu_m, mu_p])
    cdf = radial_cdf_fn(law)
    assert abs(cdf.inner_radius - math.sqrt(mu_p * mu_m / (0.5 * (mu_p + mu_m)))) < 1e-12
    assert abs(cdf.outer_radius - math.sqrt(0.5 * (mu_p + mu_m))) < 1e-12
    for r in np.linspace(cdf.inner_radius + 1e-3, cdf.outer_radius - 1e-3, 7):
        assert abs(cdf(float(r)) - radial_cdf_two_atoms(mu_p, mu_m, float(r))) < 1e-10
    assert cdf(cdf.inner_radius * 0.9) == 0.0
    assert cdf(cdf.outer_radius * 1.1) == 1.0


def test_radial_cdf_monotone_on_random_laws():
    for law in _random_positive_laws(100):
        cdf = radial_cdf_fn(law)
        rs = np.linspace(cdf.inner_radius, cdf.outer_radius, 24)
        vals = [cdf(float(r)) for r in rs]
        assert all(b >= a - 1e-10 for a, b in zip(vals, vals[1:]))
        assert abs(vals[-1] - 1.0) < 1e-9
        assert vals[0] <= 1e-9  # no atom at zero for strictly positive laws


def test_radial_cdf_atom_at_zero():
    law = AtomicMeasure([0.0, 2.0], [0.25, 0.75])
    cdf = radial_cdf_fn(law)
    assert cdf.inner_radius == 0.0
    assert abs(cdf.atom_at_zero - 0.25) < 1e-15
    assert cdf(0.0) == 0.25
    assert abs(cdf(cdf.outer_radius) - 1.0) < 1e-12


def test_radial_cdf_dirac_degenerate():
    with pytest.raises(DegenerateRadialError):
        radial_cdf_fn(AtomicMeasure([1.0]))


def test_haagerup_larsen_radii_circular():
    inner, outer = haagerup_larsen_radii(_circular_h2(2.0))
    assert inner == 0.0  # 1/h not square-integrable
    assert abs(outer - math.sqrt(2.0)) < 1e-12


# ---------------------------------------------------------------------------
# spectrum test


def test_spectral_radius_product_basic():
    assert spectral_radius_product(1.0, 1.0) == 1.0
    assert spectral_radius_product(0.0, 7.3) == 0.0
    with pytest.raises(ValueError):
        spectral_radius_product(-1.0, 1.0)


def test_rdiag_spectrum_noninvertible_h():
    stats = HStats(norm_l2=1.0, inv_norm_l2=math.inf)
    assert not rdiag_spectrum_test(stats, 0.5, 2.0)  # ||h||_2 ||(l-a)^{-1}||_2 = 0.5
    assert rdiag_spectrum_test(stats, 1.0, 2.0)  # equality -> closure point


def test_rdiag_spectrum_circular_disk():
    t = 2.0
    stats = HStats.from_law(_circular_h2(t))
    assert math.isinf(stats.inv_norm_l2)
    assert abs(stats.norm_l2 - math.sqrt(t)) < 1e-12
    for lam in (0.3, 1.2, 1.4):
        assert rdiag_spectrum_test(stats, 1.0 / lam, lam)  # |lam| < sqrt(2)
    assert not rdiag_spectrum_test(stats, 1.0 / 1.5, 1.5)


def test_rdiag_spectrum_invertible_h_inner_branch():
    stats = HStats.from_law(AtomicMeasure([0.25, 2.25]))
    # outer condition holds, inner condition fails -> invertible
    assert not rdiag_spectrum_test(stats, 10.0, 0.5)
    assert rdiag_spectrum_test(stats, 10.0, 0.7)


# ---------------------------------------------------------------------------
# determinants


def test_fk_lemma_circular_closed_value():
    h2 = _circular_h2(1.0)
    val = fk_determinant_lemma(h2, 0.5)
    assert abs(val - (0.25 - 1.0) / 2.0) < 1e-9  # (|z|^2 - 1)/2
    # independent route: radial potential of the circular law
    pot = radial_log_potential(radial_cdf_fn(h2), 0.5)
    assert abs(val - pot) < 1e-8


def test_fk_lemma_outer_boundary_continuity():
    h2 = AtomicMeasure([0.25, 2.25])
    outer = math.sqrt(1.25)
    near = outer * (1.0 - 1e-6)
    assert abs(fk_determinant_lemma(h2, near) - math.log(near)) < 1e-4
    assert fk_determinant(h2, outer * 1.5) == math.log(outer * 1.5)


def test_fk_determinant_inner_hole_constant():
    h2 = AtomicMeasure([4.0, 9.0])
    law = RadialLaw(h2)
    assert law.inner_radius > 1.0
    val = fk_determinant(h2, 1.0)
    mean_log = 0.25 * (math.log(4.0) + math.log(9.0))
    assert abs(val - mean_log) < 1e-12
    # continuity from the annulus side
    near = law.inner_radius * (1.0 + 1e-6)
    assert abs(fk_determinant_lemma(h2, near) - mean_log) < 1e-4


def test_fk_lemma_two_atom_closed_form_at_one():
    mu_p, mu_m = 2.25, 0.25
    h2 = AtomicMeasure([mu_m, mu_p])
    closed = 0.5 * math.log(abs((mu_p - mu_m) / 2.0)) - 0.25 * (
        math.log(abs(1.0 - mu_p)) + math.log(abs(1.0 - mu_m))
    )
    assert abs(fk_determinant_lemma(h2, 1.0) - closed) < 1e-10


def test_fk_lemma_outside_annulus_error():
    with pytest.raises(OutsideAnnulusError):
        fk_determinant_lemma(AtomicMeasure([4.0, 9.0]), 1.0)


def test_log_abs_uh_circular_values():
    assert abs(log_abs_uh_minus_one(radial_cdf_fn(_circular_h2(1.0)))) < 1e-10
    val = log_abs_uh_minus_one(radial_cdf_fn(_circular_h2(4.0)))
    assert abs(val - (math.log(2.0) - 3.0 / 8.0)) < 1e-9


def test_log_abs_uh_annulus_beyond_one():
    # whole annulus outside |z| = 1: potential at 1 equals tau(log h)
    h2 = AtomicMeasure([4.0, 9.0])
    val = log_abs_uh_minus_one(radial_cdf_fn(h2))
    assert abs(val - 0.25 * (math.log(4.0) + math.log(9.0))) < 1e-8


def test_determinant_cross_routes_on_random_laws():
    # two independent routes to tau(log|uh - 1|) on 100 random laws
    for law in _random_positive_laws(100):
        lemma = fk_determinant_lemma(law, 1.0)
        radial = log_abs_uh_minus_one(radial_cdf_fn(law))
        assert abs(lemma - radial) < 1e-8


def test_g_ratio_strictly_decreasing():
    for law in (_circular_h2(1.0), AtomicMeasure([0.25, 1.0, 2.25], [0.3, 0.4, 0.3])):
        g = RadialLaw(law).g_ratio
        vs = np.linspace(0.0, 8.0, 30)
        vals = [g(float(v)) for v in vs]
        assert all(b < a for a, b in zip(vals, vals[1:]))


# ---------------------------------------------------------------------------
# determining series


def test_circular_determining_series_is_linear():
    t = 1.3
    from_moments = determining_series(_circular_h2(t), 6)
    assert abs(from_moments.coeff(1) - t) < 1e-9
    for k in (0, 2, 3, 4, 5, 6):
        assert abs(from_moments.coeff(k)) < 1e-8
    assert from_moments.max_abs_diff(circular_determining_series(t, 6)) < 1e-8


def test_combine_determining_series_additivity():
    s, t = 0.7, 1.3
    fs = circular_determining_series(s, 8)
    ft = circular_determining_series(t, 8)
    fsum = combine_determining_series(fs, ft)
    assert fsum.max_abs_diff(circular_determining_series(s + t, 8)) < 1e-12


def test_combine_with_zero_is_identity():
    f = determining_series(AtomicMeasure([0.25, 2.25]), 6)
    zero = TruncatedSeries.from_list([0.0] * 7)
    assert combine_determining_series(f, zero).max_abs_diff(f) < 1e-15


def test_combine_order_mismatch():
    with pytest.raises(ValueError):
        combine_determining_series(
            circular_determining_series(1.0, 4), circular_determining_series(1.0, 6)
        )


def test_haar_unitary_determining_series():
    # f of a Haar unitary (h = 1): (sqrt(1+4z) - 1)/2, signed Catalan tail
    f = determining_series(AtomicMeasure([1.0]), 5)
    expect = [0.0, 1.0, -1.0, 2.0, -5.0, 14.0]
    np.testing.assert_allclose([f.coeff(k) for k in range(6)], expect, atol=1e-9)


def test_bernoulli_toy_r_transform_round_trip():
    # |lam - u2|^2 for real lam: two atoms (lam -+ 1)^2; its displayed
    # R-transform is (1+lam^2) z + (sqrt(1 + 4 (2 lam)^2 z^2) - 1)/2
    lam = 0.6
    law = AtomicMeasure([(lam - 1.0) ** 2, (lam + 1.0) ** 2])
    b2 = (2.0 * lam) ** 2
    display = [0.0, 1.0 + lam * lam, b2, 0.0, -b2 * b2, 0.0, 2.0 * b2**3, 0.0, -5.0 * b2**4]
    direct = r_transform(law, 8)
    np.testing.assert_allclose([direct.coeff(k) for k in range(9)], display, atol=1e-9)
    # determining-series route back to R_{x*x}
    f = determining_series(law, 8)
    recovered = r_transform_from_determining(f)
    assert recovered.max_abs_diff(direct) < 1e-10


def test_s_transform_from_determining_circular():
    # f = t z inverts to z/t, so S_{x*x}(z) = 1/(t (1+z))
    t = 2.0
    s = s_transform_from_determining(circular_determining_series(t, 8))
    np.testing.assert_allclose(
        [s.coeff(k) for k in range(4)],
        [1.0 / t, -1.0 / t, 1.0 / t, -1.0 / t],
        atol=1e-12,
    )

"""Rotation-invariant spectral machinery for products u·h (u Haar unitary,
h positive, free).

The Brown measure of such a product is supported on the annulus with inner
radius ||h^{-1}||_2^{-1} and outer radius ||h||_2, and is determined by a
radial distribution function F(r) solving a moment-series equation in
psi_{h^2}.  This module computes F by a monotone solve, evaluates the two
log-determinant routes used for cross-validation (the v-equation lemma and
the radial-potential integral of (1-F)/rho), and implements the additive
calculus of determining series for sums of free R-diagonal elements.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable, Optional, Tuple

import numpy as np

from .measures import (
    AtomicMeasure,
    SpectralMeasure,
    TruncatedSeries,
    r_transform,
)
from .numerics import integrate_adaptive, solve_monotone

_EDGE_REL_TOL = 1e-12


class DegenerateRadialError(ValueError):
    """Dirac radial law: uh is a scaled Haar unitary, handled separately."""


class OutsideAnnulusError(ValueError):
    """|z| outside the annulus of moduli covered by the determinant lemma."""


class RadialLaw:
    """Scalar statistics of the law of h^2 needed by the radial solves.

    Wraps a SpectralMeasure supported on [0, inf).  Exposes the moment
    generating function psi(w) = E[wt/(1-wt)] for w <= 0, the annulus radii
    and the mass of the atom at zero.  All integrals against the base
    measure go through its `expect`, so both atomic and continuous laws
    work; everything is stable at large |w| (no 1-f cancellations).
    """

    def __init__(self, h_squared: SpectralMeasure):
        self.h_squared = h_squared
        self.m1 = float(np.real(h_squared.moment(1)))
        self.m2 = float(np.real(h_squared.moment(2)))
        if self.m1 <= 0:
            raise ValueError("h^2 law must have positive mean")
        self.atom_at_zero = float(h_squared.atom_at(0.0))
        self.inv_moment = self._inverse_moment()
        self.outer_radius = math.sqrt(self.m1)
        self.inner_radius = (
            0.0 if not math.isfinite(self.inv_moment) else 1.0 / math.sqrt(self.inv_moment)
        )

    def _inverse_moment(self) -> float:
        """tau(h^{-2}); +inf when the integral diverges at 0."""
        if isinstance(self.h_squared, AtomicMeasure):
            acc = 0.0
            for p, w in zip(self.h_squared.points, self.h_squared.weights):
                t = p.real
                if t <= 0.0:
                    return math.inf if w > 0 else acc
                acc += w / t
            return acc
        lo, _hi = self.h_squared.support()
        if lo <= 1e-12:
            return math.inf
        return float(self.h_squared.expect(lambda t: 1.0 / t).real)

    @property
    def is_dirac(self) -> bool:
        return self.m2 - self.m1**2 <= 1e-13 * max(1.0, self.m1**2)

    def psi(self, w: float) -> float:
        """E[w h^2 / (1 - w h^2)] for w <= 0; ranges over (atom0 - 1, 0]."""
        if w == 0.0:
            return 0.0
        return float(self.h_squared.expect(lambda t: w * t / (1.0 - w * t)).real)

    def g_ratio(self, v: float) -> float:
        """g(v) = (1-f)/(v f) computed as E[t/(1+vt)] / E[1/(1+vt)].

        Strictly decreasing from ||h||_2^2 at v=0 to ||h^{-1}||_2^{-2};
        the ratio form avoids the 1-f cancellation at small v.
        """
        if v == 0.0:
            return self.m1
        num = float(self.h_squared.expect(lambda t: t / (1.0 + v * t)).real)
        den = float(self.h_squared.expect(lambda t: 1.0 / (1.0 + v * t)).real)
        return num / den

    def mean_log(self) -> float:
        """tau(log h) = (1/2) E[log t]; -inf when h has an atom at 0."""
        if self.atom_at_zero > 0:
            return -math.inf
        return 0.5 * float(self.h_squared.expect(lambda t: math.log(max(t, 1e-300))).real)


@dataclass
class RadialCDF:
    """Radial distribution function of the Brown measure of uh.

    F(r) = mu_{uh}(B(0, r)); nondecreasing, F(inner_radius) = atom_at_zero,
    F(outer_radius) = 1.  The evaluator is total on [0, inf) (clamped to the
    annulus).
    """

    inner_radius: float
    outer_radius: float
    atom_at_zero: float
    evaluator: Callable[[float], float]

    def __call__(self, r: float) -> float:
        return self.evaluator(r)


def _solve_radial_f(law: RadialLaw, r: float) -> float:
    """Solve psi_{h^2}((F-1)/(F r^2)) = F-1 for the nontrivial root F.

    Reformulated through w = (F-1)/(F r^2) < 0: then F = 1 + psi(w) and w
    solves Theta(w) = w (1 + psi(w)) / psi(w) = 1/r^2, where Theta is the
    S-transform of h^2 along the negative axis — strictly monotone with
    range (||h||_2^{-2}, ||h^{-1}||_2^2), so bisection is safe and the
    spurious root F = 1 never appears.
    """

    def theta_neg(s: float) -> float:
        w = -s
        ps = law.psi(w)
        return w * (1.0 + ps) / ps

    target = 1.0 / (r * r)
    root_s = solve_monotone(
        theta_neg, target, 1e-18, 1.0, increasing=True, grow=True,
        residual_scale=max(1.0, target),
    )
    return 1.0 + law.psi(-root_s)


def radial_cdf_fn(h_squared: SpectralMeasure) -> RadialCDF:
    """Construct the radial CDF solver for the Brown measure of uh."""
    law = RadialLaw(h_squared)
    if law.is_dirac:
        raise DegenerateRadialError("degenerate R-diagonal: radial law is a Dirac mass")
    inner, outer = law.inner_radius, law.outer_radius

    def evaluate(r: float) -> float:
        if r <= inner * (1.0 + _EDGE_REL_TOL):
            return law.atom_at_zero
        if r >= outer * (1.0 - _EDGE_REL_TOL):
            return 1.0
        return _solve_radial_f(law, r)

    return RadialCDF(
        inner_radius=inner,
        outer_radius=outer,
        atom_at_zero=law.atom_at_zero,
        evaluator=evaluate,
    )


def radial_cdf(h_squared: SpectralMeasure, r: float) -> float:
    """F(r) for the Brown measure of uh, given the law of h^2."""
    return radial_cdf_fn(h_squared)(r)


def radial_cdf_two_atoms(mu_plus: float, mu_minus: float, r: float) -> float:
    """Closed-form F(r) when h^2 has two atoms of weight 1/2 each:

        F(r) = (mu_+ mu_- - r^2 (mu_+ + mu_-)/2) / ((r^2-mu_+)(r^2-mu_-)).
    """
    if mu_plus < mu_minus:
        mu_plus, mu_minus = mu_minus, mu_plus
    det = mu_plus * mu_minus
    tau = 0.5 * (mu_plus + mu_minus)
    r2 = r * r
    if tau <= 0:
        raise ValueError("atoms must not both vanish")
    inner_sq = det / tau
    if r2 <= inner_sq:
        return 0.0
    if r2 >= tau:
        return 1.0
    return (det - r2 * tau) / ((r2 - mu_plus) * (r2 - mu_minus))


def haagerup_larsen_radii(h_squared: SpectralMeasure) -> Tuple[float, float]:
    """(inner, outer) support radii of the Brown measure of uh."""
    law = RadialLaw(h_squared)
    return law.inner_radius, law.outer_radius


def spectral_radius_product(a2norm: float, b2norm: float) -> float:
    """Spectral radius of a product of *-free centered elements: ||a||_2 ||b||_2."""
    if a2norm < 0 or b2norm < 0:
        raise ValueError("norms must be nonnegative")
    return a2norm * b2norm


@dataclass(frozen=True)
class VSolveResult:
    """Positive root of a subordination equation (1+v) f(v) = 1.

    f_value is f at the root; the residual |(1+v) f_value - 1| is kept with
    the root so callers can reject unconverged solves.
    """

    v: float
    f_value: float
    residual: float


@dataclass(frozen=True)
class HStats:
    """The two radial norms entering the spectrum test for a + uh."""

    norm_l2: float  # ||h||_2
    inv_norm_l2: float  # ||h^{-1}||_2, +inf when h is not invertible

    @staticmethod
    def from_law(h_squared: SpectralMeasure) -> "HStats":
        law = RadialLaw(h_squared)
        inv = math.inf if law.inner_radius == 0.0 else 1.0 / law.inner_radius
        return HStats(norm_l2=law.outer_radius, inv_norm_l2=inv)


def rdiag_spectrum_test(h_stats: HStats, inv_norm_l2, norm_l2):
    """Membership of lambda in sigma(a + uh) from scalar statistics of lambda - a.

    lambda - a - uh fails to be invertible exactly when
    ||h||_2 ||(lambda-a)^{-1}||_2 >= 1 and, for invertible h, additionally
    ||h^{-1}||_2 ||lambda-a||_2 >= 1 (otherwise 1 lies in the inner hole of
    the annulus of (uh)^{-1}(lambda-a)).  Arguments broadcast.
    """
    inv_norm_l2 = np.asarray(inv_norm_l2, dtype=float)
    norm_l2 = np.asarray(norm_l2, dtype=float)
    cond_outer = h_stats.norm_l2 * inv_norm_l2 >= 1.0
    if math.isfinite(h_stats.inv_norm_l2):
        cond_inner = h_stats.inv_norm_l2 * norm_l2 >= 1.0
        out = cond_outer & cond_inner
    else:
        out = cond_outer
    return out if out.shape else bool(out)


def fk_determinant_lemma(h_squared: SpectralMeasure, z: complex) -> float:
    """log Delta(uh - z) for |z| strictly inside the annulus of moduli.

    Solves g(v) = |z|^2 for the unique v > 0 on the strictly decreasing
    branch, then evaluates
        (1/2) E[log(1 + v h^2)] + (1/2) log(|z|^2 / (1 + v |z|^2)).
    """
    law = RadialLaw(h_squared)
    r2 = abs(complex(z)) ** 2
    lo_val = 1.0 / law.inv_moment if math.isfinite(law.inv_moment) else 0.0
    if not (lo_val < r2 < law.m1):
        raise OutsideAnnulusError(
            f"outside annulus: |z|^2 = {r2:.6g} not in ({lo_val:.6g}, {law.m1:.6g})"
        )
    v = solve_monotone(
        law.g_ratio, r2, 0.0, 1.0, increasing=False, grow=True,
        residual_scale=max(1.0, r2),
    )
    mean_log = float(law.h_squared.expect(lambda t: math.log1p(v * t)).real)
    return 0.5 * mean_log + 0.5 * math.log(r2 / (1.0 + v * r2))


def fk_determinant(h_squared: SpectralMeasure, z: complex) -> float:
    """log Delta(uh - z) on the whole plane.

    Outside the outer radius the potential is log|z|; inside the inner hole
    it is the constant tau(log h); in between the lemma route applies.
    """
    law = RadialLaw(h_squared)
    r = abs(complex(z))
    if r >= law.outer_radius:
        return math.log(max(r, 1e-300))
    if r <= law.inner_radius:
        return law.mean_log()
    return fk_determinant_lemma(h_squared, z)


def log_abs_uh_minus_one(cdf: RadialCDF, tol: float = 1e-11) -> float:
    """tau(log|uh - 1|) as the radial-potential integral of (1 - F(rho))/rho.

    Quadrature runs from max(1, inner_radius) to outer_radius; when the
    whole annulus lies beyond |z| = 1 the harmonic continuation adds
    log(inner_radius).
    """
    lo = max(1.0, cdf.inner_radius)
    hi = cdf.outer_radius
    base = math.log(max(1.0, cdf.inner_radius))
    if hi <= lo:
        return math.log(max(1.0, hi)) if hi <= 1.0 else base
    val = integrate_adaptive(lambda rho: (1.0 - cdf(rho)) / rho, lo, hi, tol=tol)
    return base + val


def radial_log_potential(cdf: RadialCDF, z: complex, *, mean_log: Optional[float] = None,
                         tol: float = 1e-11) -> float:
    """Integral of log|z - w| against the rotation-invariant measure with CDF F.

    Equal to log|z| outside the outer radius, to the constant tau(log h)
    inside the inner hole (supplied via mean_log when needed), and to
    log r + int_r^outer (1-F)/rho d rho in the annulus.
    """
    r = abs(complex(z))
    if r >= cdf.outer_radius:
        return math.log(max(r, 1e-300))
    if r <= cdf.inner_radius:
        if mean_log is None:
            # continuous limit from the annulus side
            r = cdf.inner_radius
        else:
            return mean_log
    val = integrate_adaptive(lambda rho: (1.0 - cdf(rho)) / rho, r, cdf.outer_radius, tol=tol)
    return math.log(max(r, 1e-300)) + val


# ---------------------------------------------------------------------------
# determining series


class _SymmetrizedRadialMoments(SpectralMeasure):
    """Moment view of the symmetrized radial part h~ (odd moments vanish)."""

    variant = "symmetrized_radial"

    def __init__(self, h_squared: SpectralMeasure):
        self.h_squared = h_squared

    def moment(self, k: int) -> complex:
        if k % 2:
            return 0.0
        return self.h_squared.moment(k // 2)


def determining_series(h_squared: SpectralMeasure, order: int) -> TruncatedSeries:
    """f_x for the R-diagonal element x = uh, from the law of h^2.

    Defined by f_x(z^2) = R_{h~}(z) with h~ the symmetrized radial part;
    the odd cumulants of h~ vanish, so R_{h~} is a series in z^2 and f_x is
    read off its even coefficients.  f_x is additive over sums of free
    R-diagonal elements, and its compositional inverse equals
    z(1+z) S_{x*x}(z).
    """
    if order < 1:
        raise ValueError("order must be >= 1")
    r = r_transform(_SymmetrizedRadialMoments(h_squared), 2 * order)
    coeffs = [0.0] + [r.coeff(2 * k) for k in range(1, order + 1)]
    return TruncatedSeries.from_list(coeffs)


def circular_determining_series(t: float, order: int) -> TruncatedSeries:
    """f for a circular element of variance t: the linear series t z."""
    return TruncatedSeries.from_list([0.0, t] + [0.0] * (order - 1))


def combine_determining_series(fa: TruncatedSeries, fb: TruncatedSeries) -> TruncatedSeries:
    """f_{a+b} = f_a + f_b for free R-diagonal summands."""
    if fa.order != fb.order:
        raise ValueError("series must share the truncation order")
    return fa + fb


def s_transform_from_determining(f: TruncatedSeries) -> TruncatedSeries:
    """S_{x*x} recovered by reversion: S(z) = f^{<-1>}(z) / (z (1 + z))."""
    finv = f.revert()
    one_plus_z = TruncatedSeries.from_list([1.0, 1.0] + [0.0] * (f.order - 1))
    return finv.shift_down().mul(one_plus_z.reciprocal())


def r_transform_from_determining(f: TruncatedSeries) -> TruncatedSeries:
    """R_{x*x} recovered via the inverse pair R <-> z S(z)."""
    finv = f.revert()
    one_plus_z = TruncatedSeries.from_list([1.0, 1.0] + [0.0] * (f.order - 1))
    zs = finv.mul(one_plus_z.reciprocal())  # z S(z)
    return zs.revert()

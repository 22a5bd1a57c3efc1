"""Spectrum and Brown measure of a + u, with u a free Haar unitary.

The whole pipeline hangs on one scalar subordination equation: for lambda
strictly inside the support there is a unique v > 0 with

    (1 + v) * tau((1 + v |a - lambda|^2)^{-1}) = 1,

and from its root come the log-determinant

    log Delta(lambda - a - u)
        = (1/2) tau log(1 + v |a - lambda|^2) - (1/2) log(1 + v)

and the density (2/pi) d_{bar lambda} d_lambda of that potential.  Membership
in the spectrum itself needs no solve: lambda - a - u is invertible unless
||(lambda-a)^{-1}||_2 >= 1 >= ... >= combined with ||lambda-a||_2 >= 1, which
is the R-diagonal annulus condition for u''|lambda-a| against the point 1.

Models enter through OperatorModel: atomic ones carry the eigenvalues of
|lambda-a|^2 exactly (with Wirtinger derivatives for the non-normal 2x2
case), measure-given normal ones (selfadjoint or unitary) evaluate f through
closed Cauchy-transform formulas and integrate everything else over a fixed
quadrature family of the spectral measure.
"""

from __future__ import annotations

import math
from typing import Callable, List, Optional, Tuple

import numpy as np

from .measures import (
    FiniteNormalModel,
    NormalSelfAdjointModel,
    NormalUnitaryModel,
    OperatorModel,
    SpectralMeasure,
    TwoByTwoModel,
)
from .numerics import DensityGridResult, GridSpec, grid_sweep
from .rdiagonal import (
    DegenerateRadialError,
    HStats,
    VSolveResult,
    rdiag_spectrum_test,
)

_HAAR_STATS = HStats(norm_l2=1.0, inv_norm_l2=1.0)
_V_GROW_STEPS = 31  # bracket cap 4^31 ~ 4.6e18
_V_BISECT_STEPS = 66
_NEG_DENSITY_TOL = 1e-8
_DEGENERATE_REL = 1e-12
_CONTINUITY_EPS = 1e-4


class SingularDensityError(ArithmeticError):
    """Density denominator f + (1+v) d_v f vanished (tangential boundary)."""


class HaarSumProblem:
    """State for the Brown pipeline of a + u: the model plus f-evaluators.

    f(v, lam) and its derivatives come in two flavours.  Atomic models use
    the exact eigenvalue family of |lam - a|^2; measure models use the
    model's closed Cauchy-transform formula for f itself, a fixed quadrature
    family of the spectral measure for integrals that need the integrand
    (log-determinant, density ingredients), and central finite differences
    as an independent derivative route (step fd_step, validated in tests
    against the family sums).
    """

    def __init__(self, a: OperatorModel, *, nodes: int = 400, fd_step: float = 1e-5):
        self.a = a
        self.fd_step = float(fd_step)
        self._nodes: Optional[Tuple[np.ndarray, np.ndarray]] = None
        if not a.has_atom_family():
            measure: SpectralMeasure = a.measure  # type: ignore[attr-defined]
            count = 1024 if measure.is_circle else nodes
            pts, w = measure.quad_nodes(count)
            self._nodes = (np.asarray(pts, dtype=complex), np.asarray(w, dtype=float))

    # -- f and derivatives ---------------------------------------------
    def f(self, v, lam):
        return self.a.f_eval(v, lam)

    def f_v(self, v, lam):
        """d f / d v; exact family sum when available, else central FD."""
        if self.a.has_atom_family():
            w, mu, _, _ = self.a.atom_family(np.asarray(lam, dtype=complex))
            den = 1.0 + np.asarray(v, dtype=float)[..., None] * mu
            out = -np.sum(w * mu / (den * den), axis=-1)
            return out if np.asarray(out).shape else float(out)
        h = self.fd_step * np.maximum(1.0, np.asarray(v, dtype=float))
        return (self.f(v + h, lam) - self.f(v - h, lam)) / (2.0 * h)

    def f_lam(self, v, lam):
        """d f / d lambda (Wirtinger); family sum or FD in Re/Im."""
        if self.a.has_atom_family():
            w, mu, dmu, _ = self.a.atom_family(np.asarray(lam, dtype=complex))
            den = 1.0 + np.asarray(v, dtype=float)[..., None] * mu
            out = -np.asarray(v, dtype=float) * np.sum(w * dmu / (den * den), axis=-1)
            return out if np.asarray(out).shape else complex(out)
        h = self.fd_step
        fx = (self.f(v, lam + h) - self.f(v, lam - h)) / (2.0 * h)
        fy = (self.f(v, lam + 1j * h) - self.f(v, lam - 1j * h)) / (2.0 * h)
        return 0.5 * (fx - 1j * fy)

    # -- eigenvalue family of |lam - a|^2 --------------------------------
    def family(self, lam):
        """(weights, mu, d mu, dd mu); quadrature nodes stand in for measures."""
        lam = np.asarray(lam, dtype=complex)
        if self.a.has_atom_family():
            return self.a.atom_family(lam)
        pts, w = self._nodes  # type: ignore[misc]
        diff = lam[..., None] - pts
        mu = np.abs(diff) ** 2
        return w, mu, np.conj(diff), np.ones_like(mu)


def _as_problem(obj) -> HaarSumProblem:
    if isinstance(obj, HaarSumProblem):
        return obj
    return HaarSumProblem(obj)


def _scalar_shift(a: OperatorModel) -> Optional[complex]:
    """z0 when a = z0 * 1, i.e. a + u is an exact (shifted) Haar unitary."""
    if isinstance(a, FiniteNormalModel) and a.atoms.size == 1:
        return complex(a.atoms[0])
    if isinstance(a, TwoByTwoModel):
        c = a.tr_mean
        if abs(a.det - c * c) < 1e-14 and abs(a.hs_sq - abs(c) ** 2) < 1e-14:
            return complex(c)
    return None


def _degenerate_mask(a: OperatorModel, lam, shift_sq) -> np.ndarray:
    """Where |lam - a| is a scalar: the subordination equation loses its root."""
    lam = np.asarray(lam, dtype=complex)
    if a.has_atom_family():
        _, mu, _, _ = a.atom_family(lam)
        spread = np.max(mu, axis=-1) - np.min(mu, axis=-1)
        return spread <= _DEGENERATE_REL * np.maximum(1.0, np.asarray(shift_sq))
    if isinstance(a, NormalUnitaryModel):
        return np.abs(lam) <= 1e-9
    return np.zeros(lam.shape, dtype=bool)


# ---------------------------------------------------------------------------
# subordination solve


def _bisect_positive_root(gap: Callable[[np.ndarray], np.ndarray], active: np.ndarray):
    """Vectorized bisection for the sign change of gap(v) on v > 0.

    gap must be negative just above 0 and positive past the root on active
    cells (gap(v) = (1+v) f(v) - 1 has exactly this shape strictly inside
    the support).  Returns (v, solved); inactive or unbracketed cells come
    back nan/False.
    """
    shape = np.asarray(active).shape
    lo = np.zeros(shape)
    hi = np.ones(shape)
    guard = np.where(active, hi, 1.0)
    g_hi = gap(guard)
    todo = active & (g_hi <= 0.0)
    for _ in range(_V_GROW_STEPS):
        if not np.any(todo):
            break
        lo = np.where(todo, hi, lo)
        hi = np.where(todo, hi * 4.0, hi)
        g_hi = gap(np.where(active, hi, 1.0))
        todo = todo & (g_hi <= 0.0)
    solved = active & (g_hi > 0.0)
    for _ in range(_V_BISECT_STEPS):
        mid = 0.5 * (lo + hi)
        pos = gap(np.where(solved, mid, 1.0)) > 0.0
        hi = np.where(pos, mid, hi)
        lo = np.where(pos, lo, mid)
    v = 0.5 * (lo + hi)
    return np.where(solved, v, np.nan), solved


def _solve_v_core(problem: HaarSumProblem, lam: np.ndarray, active: np.ndarray):
    """Root of (1+v) f(v, lam) = 1 on the active cells."""
    a = problem.a
    if a.has_atom_family():
        w, mu, _, _ = a.atom_family(lam)

        def gap(v):
            # (1+v) f - 1 = v * sum w (1 - mu)/(1 + v mu): cancellation-free sign
            return np.sum(w * (1.0 - mu) / (1.0 + v[..., None] * mu), axis=-1)

    else:

        def gap(v):
            return (1.0 + v) * a.f_eval(v, lam) - 1.0

    return _bisect_positive_root(gap, active)


def spectrum_test(a: OperatorModel, lam):
    """Membership of lam in sigma(a + u).

    lambda - a - u fails to be invertible exactly when both
    ||(lambda-a)^{-1}||_2 >= 1 and ||lambda-a||_2 >= 1 (the point 1 lies in
    the annulus of the R-diagonal element u*(lambda - a)); a non-invertible
    shift makes the first condition automatic.  Vectorized over lam.
    """
    t = np.asarray(a.shift_norm_sq(lam), dtype=float)
    inv_sq = np.asarray(a.inv_norm_sq(lam), dtype=float)
    return rdiag_spectrum_test(_HAAR_STATS, np.sqrt(inv_sq), np.sqrt(np.maximum(t, 0.0)))


def solve_v(problem, lam) -> Optional[VSolveResult]:
    """The positive root of (1+v) f(v, lam) = 1, or None outside the support.

    Raises DegenerateRadialError where |lam - a| is scalar (every v solves
    the equation when tau|lam-a|^2 = 1, none otherwise); those points are
    handled by the uniform-circle special case.
    """
    problem = _as_problem(problem)
    lam_c = complex(lam)
    arr = np.asarray(lam_c, dtype=complex)
    t = float(problem.a.shift_norm_sq(lam_c))
    if _scalar_shift(problem.a) is not None or bool(_degenerate_mask(problem.a, arr, t)):
        raise DegenerateRadialError(
            "degenerate R-diagonal: |lam - a| is scalar at this point"
        )
    inv_sq = float(problem.a.inv_norm_sq(lam_c))
    if not (t > 1.0 and inv_sq > 1.0):
        return None
    v_arr, ok = _solve_v_core(problem, arr, np.asarray(True))
    if not bool(ok):
        return None
    v = float(v_arr)
    f_val = float(problem.f(v, lam_c))
    return VSolveResult(v=v, f_value=f_val, residual=abs((1.0 + v) * f_val - 1.0))


# ---------------------------------------------------------------------------
# log-determinant and density


def _mean_log1p(w, mu, v):
    return np.sum(w * np.log1p(np.asarray(v, dtype=float)[..., None] * mu), axis=-1)


def _density_from_family(w, mu, dmu, ddmu, v):
    """Density ingredients at the subordination root.

    With mu_i(lam, bar lam) the eigenvalue family of |lam - a|^2,

        p = (1/pi) [ v(1+v) |K|^2 / A  +  v E[dd mu/(1+v mu)]
                                       -  v^2 E[|d mu|^2/(1+v mu)^2] ],
        K = E[d mu/(1+v mu)^2],   A = E[(1-mu)/(1+v mu)^2].

    For normal a (d mu = conj(lam - t), dd mu = 1) this is exactly the
    displayed |d_lam f|^2 / denominator formula; the family form also covers
    the non-normal 2x2 case.  Returns (p, A).
    """
    v = np.asarray(v, dtype=float)
    den = 1.0 + v[..., None] * mu
    den2 = den * den
    k_sum = np.sum(w * dmu / den2, axis=-1)
    a_sum = np.sum(w * (1.0 - mu) / den2, axis=-1)
    c_sum = np.sum(w * ddmu / den, axis=-1)
    q_sum = np.sum(w * np.abs(dmu) ** 2 / den2, axis=-1)
    with np.errstate(divide="ignore", invalid="ignore"):
        lead = v * (1.0 + v) * np.abs(k_sum) ** 2 / a_sum
    p = (lead + v * np.real(c_sum) - v * v * q_sum) / math.pi
    return p, a_sum


def log_fk_determinant(problem, lam) -> float:
    """log Delta(lambda - a - u) anywhere in the plane.

    Inside the support the subordination root gives the displayed value;
    outside, the potential closes up: log Delta(lambda - a) beyond the outer
    boundary (point 1 inside the annulus hole of u*(lambda-a)) and 0 inside
    an inner hole (point 1 beyond the annulus).  Scalar |lam - a| reduces to
    the circle potential log max(||lam - a||_2, 1).
    """
    problem = _as_problem(problem)
    lam_c = complex(lam)
    arr = np.asarray(lam_c, dtype=complex)
    t = float(problem.a.shift_norm_sq(lam_c))
    if _scalar_shift(problem.a) is not None or bool(_degenerate_mask(problem.a, arr, t)):
        return 0.5 * math.log(max(t, 1.0))
    inv_sq = float(problem.a.inv_norm_sq(lam_c))
    if t > 1.0 and inv_sq > 1.0:
        v_arr, ok = _solve_v_core(problem, arr, np.asarray(True))
        if bool(ok):
            v = float(v_arr)
            w, mu, _, _ = problem.family(arr)
            return 0.5 * float(_mean_log1p(w, mu, np.asarray(v))) - 0.5 * math.log1p(v)
    if inv_sq <= 1.0:
        return float(problem.a.log_det_shift(lam_c))
    if t <= 1.0:
        return 0.0
    raise ArithmeticError("subordination solve failed strictly inside the support")


def density_general(problem, lam) -> float:
    """Brown density of a + u at a point (0 outside the support).

    Degenerate points (scalar |lam - a|) get the continuous limit from
    inside: the average over the interior points among lam +- eps,
    lam +- i eps.  A model that is itself a scalar shift has its Brown
    measure on a circle, so the planar density is 0 almost everywhere.
    """
    problem = _as_problem(problem)
    lam_c = complex(lam)
    if _scalar_shift(problem.a) is not None:
        return 0.0
    arr = np.asarray(lam_c, dtype=complex)
    t = float(problem.a.shift_norm_sq(lam_c))
    if bool(_degenerate_mask(problem.a, arr, t)):
        return _continuity_density(problem, lam_c)
    inv_sq = float(problem.a.inv_norm_sq(lam_c))
    if not (t > 1.0 and inv_sq > 1.0):
        return 0.0
    v_arr, ok = _solve_v_core(problem, arr, np.asarray(True))
    if not bool(ok):
        return 0.0
    w, mu, dmu, ddmu = problem.family(arr)
    p, a_sum = _density_from_family(w, mu, dmu, ddmu, v_arr)
    if float(a_sum) <= 1e-300:
        raise SingularDensityError(
            f"vanishing density denominator at lam = {lam_c:.6g}"
        )
    p = float(p)
    if p < -_NEG_DENSITY_TOL:
        raise ValueError(f"density {p:.3e} below -{_NEG_DENSITY_TOL} at lam = {lam_c:.6g}")
    return max(p, 0.0)


def _continuity_density(problem: HaarSumProblem, lam: complex) -> float:
    vals: List[float] = []
    for dz in (_CONTINUITY_EPS, -_CONTINUITY_EPS, 1j * _CONTINUITY_EPS, -1j * _CONTINUITY_EPS):
        z = lam + dz
        arr = np.asarray(complex(z), dtype=complex)
        t = float(problem.a.shift_norm_sq(z))
        if bool(_degenerate_mask(problem.a, arr, t)):
            continue
        if not (t > 1.0 and float(problem.a.inv_norm_sq(z)) > 1.0):
            continue
        vals.append(density_general(problem, z))
    return float(np.mean(vals)) if vals else 0.0


# ---------------------------------------------------------------------------
# closed 2x2 forms


def _as_two_by_two(a: OperatorModel) -> TwoByTwoModel:
    if isinstance(a, TwoByTwoModel):
        return a
    if (
        isinstance(a, FiniteNormalModel)
        and a.atoms.size == 2
        and np.allclose(a.weights, 0.5)
    ):
        a1, a2 = (complex(z) for z in a.atoms)
        return TwoByTwoModel([[a1, 0.0], [0.0, a2]])
    raise TypeError("closed 2x2 forms need a 2x2 model or a balanced two-atom normal one")


def log_fk_2x2_closed(a: TwoByTwoModel, lam) -> float:
    """Closed log Delta(lambda - a - u) for 2x2 a inside the spectrum:

        (1/4) log(T^2 - D) - (1/4) log|1 - 2T + D|,

    T = tau|lam-a|^2, D = |det(lam - a)|^2 (the eigenvalue form
    (1/2) log((mu_+ - mu_-)/2) - (1/4) log|1-mu_+||1-mu_-| in T, D terms).
    """
    a = _as_two_by_two(a)
    t = np.asarray(a.shift_norm_sq(lam), dtype=float)
    d = np.abs(np.asarray(a.det_shift(lam))) ** 2
    b1 = np.maximum(t * t - d, 1e-300)
    b2 = np.maximum(np.abs(1.0 - 2.0 * t + d), 1e-300)
    out = 0.25 * np.log(b1) - 0.25 * np.log(b2)
    return out if out.shape else float(out)


def density_2x2_closed(a: TwoByTwoModel, lam, variant: str = "eigenvalues") -> float:
    """Closed-form Brown density of a + u for 2x2 a, two equivalent variants.

    variant="eigenvalues": the mu_+- form with Wirtinger derivatives of the
    eigenvalues of |lam - a|^2.  variant="tau_det": the expanded form in
    T = tau|lam-a|^2, m = tau(lam - a), det(lam - a).  Only valid strictly
    inside the spectrum and away from eigenvalue coalescence (mu_+ = mu_-,
    where both displayed forms are 0/0; such points lie on the boundary or
    at isolated degenerate points handled by continuity).
    """
    a = _as_two_by_two(a)
    lam_c = complex(lam)
    if variant == "tau_det":
        return _density_2x2_tau_det(a, lam_c)
    if variant != "eigenvalues":
        raise ValueError("variant must be 'eigenvalues' or 'tau_det'")
    w, mu, dmu, ddmu = a.atom_family(np.asarray(lam_c, dtype=complex))
    gap = float(mu[..., 0] - mu[..., 1])
    t = float(a.shift_norm_sq(lam_c))
    if abs(gap) <= 1e-9 * max(1.0, t):
        raise SingularDensityError(
            f"eigenvalue coalescence of |lam - a|^2 at lam = {lam_c:.6g}"
        )
    d_gap = complex(dmu[..., 0] - dmu[..., 1])
    dd_gap = complex(ddmu[..., 0] - ddmu[..., 1])
    one_m = 1.0 - mu
    half = 0.5 * float(
        np.real(ddmu[..., 0]) / one_m[..., 0]
        + np.real(ddmu[..., 1]) / one_m[..., 1]
        + np.abs(dmu[..., 0]) ** 2 / one_m[..., 0] ** 2
        + np.abs(dmu[..., 1]) ** 2 / one_m[..., 1] ** 2
    )
    val = dd_gap.real / gap - abs(d_gap) ** 2 / gap**2 + half
    return val / math.pi


def _density_2x2_tau_det(a: TwoByTwoModel, lam: complex) -> float:
    t = float(a.shift_norm_sq(lam))
    m = lam - a.tr_mean
    d = complex(a.det_shift(lam))
    det_sq = abs(d) ** 2
    b1 = t * t - det_sq
    b2 = 1.0 - 2.0 * t + det_sq
    if abs(b1) <= 1e-12 * max(1.0, t * t) or abs(b2) <= 1e-300:
        raise SingularDensityError(
            f"vanishing closed-form denominator at lam = {lam:.6g}"
        )
    m_sq = abs(m) ** 2
    term1 = (t - m_sq) / b1
    term2 = -2.0 * abs(t * np.conj(m) - m * np.conj(d)) ** 2 / b1**2
    term3 = (1.0 - 2.0 * m_sq) / b2
    term4 = 2.0 * abs(np.conj(m) - m * np.conj(d)) ** 2 / b2**2
    return (term1 + term2 + term3 + term4) / math.pi


def nilpotent_spectrum(t: float) -> Tuple[float, float]:
    """Annulus radii of sigma(a + u) for a 2x2 nilpotent of entry t:

        1 - t^2/2 <= |lambda|^2 <= 1/2 + sqrt(1/4 + t^2/2),

    a full disk (inner radius 0) once t >= sqrt(2).
    """
    if t <= 0:
        raise ValueError("t must be positive")
    inner = math.sqrt(max(0.0, 1.0 - 0.5 * t * t))
    outer = math.sqrt(0.5 + math.sqrt(0.25 + 0.5 * t * t))
    return inner, outer


def nilpotent_density(t: float, lam) -> float:
    """Radially symmetric closed density for the 2x2 nilpotent model:

        (1/pi) [ 2 t^2 / (4|lam|^2 + t^2)^2
                 + ((1-|lam|^2)^2 - (1-2|lam|^2) t^2) / ((1-|lam|^2)^2 - t^2)^2 ]

    inside the annulus, 0 outside.
    """
    inner, outer = nilpotent_spectrum(t)
    r2 = abs(complex(lam)) ** 2
    if r2 < inner * inner or r2 > outer * outer:
        return 0.0
    t2 = t * t
    term1 = 2.0 * t2 / (4.0 * r2 + t2) ** 2
    term2 = ((1.0 - r2) ** 2 - (1.0 - 2.0 * r2) * t2) / ((1.0 - r2) ** 2 - t2) ** 2
    return (term1 + term2) / math.pi


# ---------------------------------------------------------------------------
# f through Cauchy transforms (measure-given normal operators)


def f_selfadjoint_via_cauchy(measure: SpectralMeasure, v, lam):
    """f(v, lam) for selfadjoint a with law `measure`, via G_a at
    z0 = Re lam + (i/v) sqrt(v^2 (Im lam)^2 + v)."""
    return NormalSelfAdjointModel(measure).f_eval(v, lam)


def f_unitary_via_cauchy(measure: SpectralMeasure, v, lam):
    """f(v, lam) for unitary a with circle law `measure`, via G_a at the two
    roots z_pm of the circle quadratic (|z_+| > 1 > |z_-|); lam = 0 falls
    back to the constant integrand 1/(1+v)."""
    return NormalUnitaryModel(measure).f_eval(v, lam)


def f_poisson_closed(q: float, v: float, lam: complex) -> float:
    """Rational closed form of f(v, lam) when a has the Poisson circle law
    of parameter q (moments q^{|n|}); q = 0 is the Haar case 1/sqrt(disc)."""
    if not -1.0 < q < 1.0:
        raise ValueError("q must lie in (-1, 1)")
    v = float(v)
    lam = complex(lam)
    if v <= 0:
        raise ValueError("v must be positive")
    if abs(lam) < 1e-12:
        return 1.0 / (1.0 + v)
    r = abs(lam)
    big_a = 1.0 + v * (r * r + 1.0)
    disc = (1.0 + v * (r + 1.0) ** 2) * (1.0 + v * (r - 1.0) ** 2)
    root = math.sqrt(disc)
    zp = (big_a + root) / (2.0 * v * lam.conjugate())
    zm = 2.0 * v * lam / (big_a + root)
    num = q * q * zm - zp
    den = (zp - q) * (q * zm - 1.0)
    return float((num / den).real) / root


# ---------------------------------------------------------------------------
# grids


def uniform_circle_grid(
    spec: GridSpec,
    center: complex = 0j,
    radius: float = 1.0,
    samples: int = 1 << 20,
) -> DensityGridResult:
    """Cell-mass rendering of the uniform measure on a circle.

    The Brown measure of z0 + u is singular (one-dimensional), so instead of
    a pointwise density the circle is sampled at `samples` midpoint angles
    and binned; each cell carries mass/area.  The log-determinant column is
    the exact circle potential log max(|lam - z0|, radius).
    """
    theta = (np.arange(samples) + 0.5) * (2.0 * math.pi / samples)
    pts = center + radius * np.exp(1j * theta)
    col = np.floor((pts.real - spec.re_min) / spec.re_step).astype(int)
    row = np.floor((pts.imag - spec.im_min) / spec.im_step).astype(int)
    ok = (row >= 0) & (row < spec.im_steps) & (col >= 0) & (col < spec.re_steps)
    flat = row[ok] * spec.re_steps + col[ok]
    counts = np.bincount(flat, minlength=spec.im_steps * spec.re_steps)
    mass = counts.reshape(spec.im_steps, spec.re_steps) / float(samples)
    density = mass / spec.cell_area
    in_spectrum = mass > 0.0
    lam = spec.mesh()
    log_delta = np.log(np.maximum(np.abs(lam - center), radius))
    return DensityGridResult(
        spec=spec, density=density, in_spectrum=in_spectrum, log_delta=log_delta
    )


def brown_grid(problem, spec: GridSpec, *, threads: int = 1) -> DensityGridResult:
    """Density, spectrum mask and log-determinant of a + u over a grid.

    Row blocks are independent; merging is by row index so the thread count
    never changes the output.  Degenerate cells (scalar |lam - a|) get the
    continuity density; a model that is a scalar shift short-circuits to the
    uniform-circle rendering.  Densities in (-1e-8, 0) are clipped to 0 with
    a warning; anything more negative raises.
    """
    problem = _as_problem(problem)
    z0 = _scalar_shift(problem.a)
    if z0 is not None:
        return uniform_circle_grid(spec, center=z0)
    notes: List[str] = []

    def evaluator(lam: np.ndarray):
        return _eval_block(problem, lam, notes)

    result = grid_sweep(evaluator, spec, threads=threads)
    if notes:
        result.warnings.extend(sorted(set(notes)))
    return result


_FAMILY_CELL_BUDGET = 2_000_000  # cells * family size per temporary array


def _eval_block(problem: HaarSumProblem, lam: np.ndarray, notes: List[str]):
    a = problem.a
    t = np.asarray(a.shift_norm_sq(lam), dtype=float)
    inv_sq = np.asarray(a.inv_norm_sq(lam), dtype=float)
    in_spec = (t >= 1.0) & (inv_sq >= 1.0)
    deg = _degenerate_mask(a, lam, t)
    active = (t > 1.0) & (inv_sq > 1.0) & ~deg

    v, solved = _solve_v_core(problem, lam, active)
    stuck = active & ~solved
    if np.any(stuck):
        notes.append(f"{int(np.sum(stuck))} interior cell(s) failed the v-solve")
    v_safe = np.where(solved, v, 0.0)

    # family sums carry a node axis; chunk rows to keep temporaries bounded
    fam_size = problem._nodes[0].size if problem._nodes is not None else 4
    rows = max(1, _FAMILY_CELL_BUDGET // max(1, lam.shape[1] * fam_size))
    p = np.zeros(lam.shape)
    log_in = np.zeros(lam.shape)
    a_sum = np.zeros(lam.shape)
    for i0 in range(0, lam.shape[0], rows):
        sl = slice(i0, min(i0 + rows, lam.shape[0]))
        w, mu, dmu, ddmu = problem.family(lam[sl])
        p[sl], a_sum[sl] = _density_from_family(w, mu, dmu, ddmu, v_safe[sl])
        log_in[sl] = 0.5 * _mean_log1p(w, mu, v_safe[sl]) - 0.5 * np.log1p(v_safe[sl])

    singular = solved & ~(a_sum > 1e-300)
    if np.any(singular):
        notes.append(f"{int(np.sum(singular))} cell(s) hit a singular density denominator")
    p = np.where(solved & ~singular, p, 0.0)

    worst = float(np.min(p)) if p.size else 0.0
    if worst < -_NEG_DENSITY_TOL:
        raise ValueError(f"negative density {worst:.3e} beyond tolerance in grid sweep")
    clipped = int(np.sum(p < 0.0))
    if clipped:
        notes.append(f"{clipped} cell(s) clipped from tiny negative density")
        p = np.maximum(p, 0.0)

    log_shift = np.asarray(a.log_det_shift(lam), dtype=float)
    log_delta = np.where(
        deg,
        0.5 * np.log(np.maximum(t, 1.0)),
        np.where(solved, log_in, np.where(inv_sq <= 1.0, log_shift, 0.0)),
    )

    hot = deg & in_spec
    if np.any(hot):
        for i, j in np.argwhere(hot):
            p[i, j] = _continuity_density(problem, complex(lam[i, j]))
    return p, in_spec, log_delta

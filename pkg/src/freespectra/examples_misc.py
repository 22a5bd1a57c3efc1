"""Cross sums of two free symmetries and eigenvalue enclosures for u2 + A.

Two small families that do not fit the R-diagonal or circular pipelines:

* ``alpha*u2 + beta*v2`` for free symmetries u2, v2 (Haar unitaries of order
  two).  Its square is ``alpha^2 + beta^2 + alpha*beta*c`` with ``c`` an
  arcsine element on [-2, 2], so both the spectrum and the Brown measure are
  push-forwards of the arcsine law through the curve
  ``t -> +/- sqrt(alpha^2 + beta^2 + alpha*beta*t)``.
* Necessary conditions on eigenvalues of matrix models ``U2 + A`` with A
  unitary or skew-adjoint.  These are enclosures (supersets built from scalar
  constraints), never exact spectra, and are labeled accordingly.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Iterable, Sequence, Tuple

import numpy as np

from .measures import ArcsineMeasure

__all__ = [
    "CrossSpectrum",
    "symmetry_sum_spectrum",
    "symmetry_sum_brown_density",
    "symmetry_sum_leg_samples",
    "leg_curve_csv",
    "u2_plus_unitary_enclosure",
    "unitary_enclosure_region",
    "u2_plus_skew_enclosure",
    "enclosure_csv",
]

_ARCSINE = ArcsineMeasure()

# the one weight pair whose leg density has been derived in closed form
_EXACT_CASE = (1.0 + 0.0j, 1.0j)


@dataclass(frozen=True)
class CrossSpectrum:
    """Spectrum of alpha*u2 + beta*v2 as a two-branch curve over [-2, 2].

    The square of the sum is alpha^2 + beta^2 + alpha*beta*c with
    sigma(c) = [-2, 2], so the spectrum is the pair of principal-branch
    square-root curves, closed under lam -> -lam.
    """

    alpha: complex
    beta: complex

    @property
    def offset(self) -> complex:
        return self.alpha * self.alpha + self.beta * self.beta

    @property
    def scale(self) -> complex:
        return self.alpha * self.beta

    def leg(self, t, sign: int = +1):
        """Points sign * sqrt(alpha^2 + beta^2 + alpha*beta*t) for t in [-2, 2]."""
        t = np.asarray(t, dtype=float)
        if np.any(np.abs(t) > 2.0 + 1e-12):
            raise ValueError("curve parameter must lie in [-2, 2]")
        w = np.sqrt(self.offset + self.scale * t.astype(complex))
        return sign * w

    def sample(self, n: int = 401) -> np.ndarray:
        """Dense point sample of the full spectrum (both branches)."""
        t = np.linspace(-2.0, 2.0, n)
        plus = self.leg(t, +1)
        return np.concatenate([plus, -plus])

    @property
    def density_label(self) -> str:
        """"exact" for the derived case (alpha, beta) = (1, i), else "extrapolated"."""
        if (
            abs(self.alpha - _EXACT_CASE[0]) < 1e-12
            and abs(self.beta - _EXACT_CASE[1]) < 1e-12
        ):
            return "exact"
        return "extrapolated"


def symmetry_sum_spectrum(alpha: complex, beta: complex) -> CrossSpectrum:
    """Spectrum of alpha*u2 + beta*v2 for free symmetries u2, v2.

    For alpha*beta = 0 the curve degenerates to the two atoms +/-sqrt(
    alpha^2 + beta^2), which is still the correct spectrum.
    """
    return CrossSpectrum(complex(alpha), complex(beta))


def symmetry_sum_brown_density(t):
    """Brown density of u2 + i*v2 along a leg, per unit leg coordinate.

    The support is the cross exp(+/- i pi/4) * [-sqrt2, sqrt2]; with leg
    coordinate t (so the point is e^{+/- i pi/4} t) the density is
    |t| / (pi sqrt(4 - t^4)).  Each of the four half-legs carries mass 1/4.
    """
    t = np.asarray(t, dtype=float)
    out = np.zeros_like(t)
    inside = np.abs(t) < math.sqrt(2.0)
    ti = t[inside]
    out[inside] = np.abs(ti) / (math.pi * np.sqrt(4.0 - ti**4))
    if out.shape:
        return out
    return float(out)


def symmetry_sum_leg_samples(
    alpha: complex, beta: complex, n: int = 400
) -> Tuple[np.ndarray, np.ndarray, np.ndarray, str]:
    """Brown measure of alpha*u2+beta*v2 as weighted points on the curve.

    Push-forward construction: the arcsine law on the parameter t is split
    evenly between the two branches +/- sqrt(alpha^2+beta^2+alpha*beta*t).
    Returns (t nodes, points, weights, label); weights sum to 1 over both
    branches (points and weights hold the + branch followed by the - branch).
    Only the (1, i) case has an independently derived density; anything else
    is labeled "extrapolated".
    """
    spectrum = symmetry_sum_spectrum(alpha, beta)
    nodes, weights = _ARCSINE.quad_nodes(n)
    t = nodes.real
    plus = spectrum.leg(t, +1)
    points = np.concatenate([plus, -plus])
    w = np.concatenate([weights, weights]) / 2.0
    return np.concatenate([t, t]), points, w, spectrum.density_label


def leg_curve_csv(alpha: complex, beta: complex, n: int = 401) -> str:
    """CSV `t,re,im,density` for the spectrum curve of alpha*u2 + beta*v2.

    `density` is the 1-D Brown density with respect to the parameter t on
    each branch (arcsine density / 2); rows list the + branch then the -
    branch on a uniform t grid.
    """
    spectrum = symmetry_sum_spectrum(alpha, beta)
    t = np.linspace(-2.0, 2.0, n)
    dens = _ARCSINE.density(t) / 2.0
    lines = ["t,re,im,density"]
    for sign in (+1, -1):
        pts = spectrum.leg(t, sign)
        for tk, pk, dk in zip(t, pts, dens):
            lines.append(f"{tk:.12g},{pk.real:.12g},{pk.imag:.12g},{dk:.12g}")
    return "\n".join(lines) + "\n"


def u2_plus_unitary_enclosure(rho) -> Tuple[complex, complex]:
    """Candidate eigenvalue pair lam = rho -/+ |rho| for u2 + (unitary) models.

    rho ranges over the convex hull of the unitary summand's spectrum, which
    lies in the closed unit disk.  This is a necessary condition on
    eigenvalues of the matrix model, not a spectrum.
    """
    rho_arr = np.asarray(rho, dtype=complex)
    if np.any(np.abs(rho_arr) > 1.0 + 1e-9):
        raise ValueError("rho must lie in the closed unit disk")
    mod = np.abs(rho_arr)
    if rho_arr.shape:
        return rho_arr - mod, rho_arr + mod
    return complex(rho_arr - mod), complex(rho_arr + mod)


def _hull_vertices(points: Sequence[complex]) -> np.ndarray:
    pts = np.asarray(points, dtype=complex)
    uniq = np.unique(np.round(pts, 12))
    if uniq.size <= 2:
        return uniq
    coords = np.column_stack([uniq.real, uniq.imag])
    from scipy.spatial import ConvexHull, QhullError

    try:
        hull = ConvexHull(coords)
    except QhullError:
        # collinear points: keep the extreme pair
        order = np.argsort(uniq.real + 1e-9 * uniq.imag)
        return uniq[[order[0], order[-1]]]
    return uniq[hull.vertices]


def unitary_enclosure_region(
    spectrum_points: Iterable[complex], steps: int = 200, dedup: float = 1e-6
) -> np.ndarray:
    """Sweep rho over the hull of `spectrum_points`, collect rho +/- |rho|.

    The hull is fan-triangulated and each triangle sampled on a barycentric
    grid with `steps` subdivisions; the resulting candidate eigenvalues are
    deduplicated by rounding to `dedup`.  Output is an enclosure point cloud.
    """
    verts = _hull_vertices(list(spectrum_points))
    if verts.size == 0:
        return np.zeros(0, dtype=complex)
    if verts.size == 1:
        rho = verts
    elif verts.size == 2:
        s = np.linspace(0.0, 1.0, steps * steps)
        rho = verts[0] + (verts[1] - verts[0]) * s
    else:
        i, j = np.meshgrid(np.arange(steps + 1), np.arange(steps + 1), indexing="ij")
        keep = (i + j) <= steps
        u = (i[keep] / steps).astype(float)
        v = (j[keep] / steps).astype(float)
        w = 1.0 - u - v
        chunks = []
        for k in range(1, verts.size - 1):
            chunks.append(u * verts[0] + v * verts[k] + w * verts[k + 1])
        rho = np.concatenate(chunks)
    lo, hi = u2_plus_unitary_enclosure(rho)
    cloud = np.concatenate([np.atleast_1d(lo), np.atleast_1d(hi)])
    decimals = max(0, int(round(-math.log10(dedup))))
    return np.unique(np.round(cloud, decimals))


def u2_plus_skew_enclosure(b_mean: float, b_norm_sq: float) -> Tuple[complex, ...]:
    """Feasible eigenvalues of u2 + iB (B self-adjoint) for a unit vector x.

    With b_mean = <Bx, x> (real since B is self-adjoint) and
    b_norm_sq = ||Bx||^2, an eigenvalue with eigenvector x must satisfy
    Im(lam) = b_mean and (Re lam)^2 = 1 - b_norm_sq + b_mean^2.  Returns the
    (0, 1 or 2)-point feasible set; empty when the radicand is negative.
    """
    if b_mean * b_mean > b_norm_sq + 1e-12:
        raise ValueError("need b_mean^2 <= b_norm_sq (Cauchy-Schwarz)")
    radicand = 1.0 - b_norm_sq + b_mean * b_mean
    if radicand < -1e-15:
        return ()
    r = math.sqrt(max(radicand, 0.0))
    if r == 0.0:
        return (complex(0.0, b_mean),)
    return (complex(-r, b_mean), complex(r, b_mean))


def enclosure_csv(points: Iterable[complex]) -> str:
    """CSV `re,im` point cloud for an enclosure region."""
    lines = ["re,im"]
    for p in np.asarray(list(points), dtype=complex):
        lines.append(f"{p.real:.12g},{p.imag:.12g}")
    return "\n".join(lines) + "\n"

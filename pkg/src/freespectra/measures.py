"""Spectral measures, truncated power series and operator models.

The measure classes carry the handful of analytic quantities the rest of
the package needs: moments, Cauchy transforms with controlled branches,
integrals of arbitrary functions against the measure, and log-potentials.
The series class implements the compositional calculus (multiply, compose,
revert) behind the R- and S-transform identities.

Convention used throughout for the R-transform: K(z) = G^{<-1>}(z) is
written K(z) = (1/z)(1 + R(z)), so R(z) = sum_{n>=1} kappa_n z^n carries
the free cumulants starting at order one.  With this normalization zS(z)
and R(z) are compositional inverses of each other.
"""

from __future__ import annotations

import cmath
import math
from dataclasses import dataclass
from typing import Callable, Optional, Sequence, Tuple

import numpy as np

from .numerics import integrate_adaptive

_ATOM_EPS = 1e-12
_QUAD_TOL = 1e-11


class MeasureDomainError(ValueError):
    """Operation not defined for this measure (support, analyticity, mean...)."""


# ---------------------------------------------------------------------------
# truncated power series


@dataclass(frozen=True)
class TruncatedSeries:
    """Power series sum c_k z^k truncated at a fixed order.

    Coefficients are stored densely, c[k] multiplying z^k.  All binary
    operations truncate to the shorter order.
    """

    coeffs: Tuple[complex, ...]

    @property
    def order(self) -> int:
        return len(self.coeffs) - 1

    def coeff(self, k: int) -> complex:
        return self.coeffs[k] if 0 <= k <= self.order else 0.0

    @staticmethod
    def from_list(values: Sequence[complex]) -> "TruncatedSeries":
        return TruncatedSeries(tuple(complex(v) for v in values))

    @staticmethod
    def identity(order: int) -> "TruncatedSeries":
        return TruncatedSeries(tuple([0.0, 1.0] + [0.0] * (order - 1)))

    @staticmethod
    def constant(value: complex, order: int) -> "TruncatedSeries":
        return TruncatedSeries(tuple([complex(value)] + [0.0] * order))

    def truncate(self, order: int) -> "TruncatedSeries":
        if order >= self.order:
            return self
        return TruncatedSeries(self.coeffs[: order + 1])

    def __add__(self, other: "TruncatedSeries") -> "TruncatedSeries":
        n = min(self.order, other.order)
        return TruncatedSeries(
            tuple(self.coeff(k) + other.coeff(k) for k in range(n + 1))
        )

    def __sub__(self, other: "TruncatedSeries") -> "TruncatedSeries":
        n = min(self.order, other.order)
        return TruncatedSeries(
            tuple(self.coeff(k) - other.coeff(k) for k in range(n + 1))
        )

    def scale(self, c: complex) -> "TruncatedSeries":
        return TruncatedSeries(tuple(c * v for v in self.coeffs))

    def mul(self, other: "TruncatedSeries") -> "TruncatedSeries":
        n = min(self.order, other.order)
        out = [0.0 + 0.0j] * (n + 1)
        for i in range(n + 1):
            ci = self.coeff(i)
            if ci == 0.0:
                continue
            for j in range(n + 1 - i):
                out[i + j] += ci * other.coeff(j)
        return TruncatedSeries(tuple(out))

    def shift_down(self) -> "TruncatedSeries":
        """Divide by z; requires zero constant term."""
        if abs(self.coeffs[0]) > 1e-12:
            raise ValueError("series has a nonzero constant term")
        return TruncatedSeries(self.coeffs[1:] + (0.0,))

    def reciprocal(self) -> "TruncatedSeries":
        """Multiplicative inverse; requires nonzero constant term."""
        c0 = self.coeffs[0]
        if c0 == 0.0:
            raise ValueError("series not invertible (zero constant term)")
        n = self.order
        out = [0.0 + 0.0j] * (n + 1)
        out[0] = 1.0 / c0
        for k in range(1, n + 1):
            acc = 0.0 + 0.0j
            for j in range(1, k + 1):
                acc += self.coeff(j) * out[k - j]
            out[k] = -acc / c0
        return TruncatedSeries(tuple(out))

    def compose(self, inner: "TruncatedSeries") -> "TruncatedSeries":
        """self(inner(z)); inner must have zero constant term."""
        if abs(inner.coeffs[0]) > 1e-12:
            raise ValueError("composition needs inner constant term zero")
        n = min(self.order, inner.order)
        inner = inner.truncate(n)
        result = TruncatedSeries.constant(self.coeff(n), n)
        for k in range(n - 1, -1, -1):
            result = result.mul(inner)
            result = TruncatedSeries(
                tuple(
                    (result.coeff(i) + (self.coeff(k) if i == 0 else 0.0))
                    for i in range(n + 1)
                )
            )
        return result

    def revert(self) -> "TruncatedSeries":
        """Compositional inverse; requires c0 = 0 and c1 != 0."""
        if abs(self.coeffs[0]) > 1e-12:
            raise ValueError("reversion needs zero constant term")
        c1 = self.coeffs[1]
        if c1 == 0.0:
            raise ValueError("reversion needs nonzero linear coefficient")
        n = self.order
        g = [0.0 + 0.0j] * (n + 1)
        g[1] = 1.0 / c1
        for m in range(2, n + 1):
            partial = TruncatedSeries(tuple(g[: m + 1]))
            val = self.truncate(m).compose(partial).coeff(m)
            g[m] = -val / c1
        return TruncatedSeries(tuple(g))

    def max_abs_diff(self, other: "TruncatedSeries") -> float:
        n = min(self.order, other.order)
        return max(abs(self.coeff(k) - other.coeff(k)) for k in range(n + 1))


# ---------------------------------------------------------------------------
# spectral measures


def _sqrt_outside(z: np.ndarray | complex, c2: float) -> np.ndarray | complex:
    """sqrt(z^2 - c2) analytic off the segment [-sqrt(c2), sqrt(c2)], ~ z at infinity."""
    return z * np.sqrt(1.0 - c2 / (np.asarray(z, dtype=complex) ** 2))


class SpectralMeasure:
    """Base class: a compactly supported probability measure on R or the circle."""

    variant = "abstract"
    is_circle = False

    # -- moments -----------------------------------------------------------
    def moment(self, k: int) -> complex:
        raise NotImplementedError

    def mean(self) -> complex:
        return self.moment(1)

    # -- integration -------------------------------------------------------
    def expect(self, fn: Callable, tol: float = _QUAD_TOL) -> complex:
        """Integral of fn over the support (fn receives support points;
        circle measures pass e^{i theta} as a complex number)."""
        raise NotImplementedError

    def quad_nodes(self, n: int = 400) -> Tuple[np.ndarray, np.ndarray]:
        """(points, weights) of a fixed n-point rule representing the measure.

        Points are complex support points (real parts only for line
        measures), weights are nonnegative and sum to 1.  Used by grid
        pipelines that need many expectations against the same measure.
        """
        raise NotImplementedError

    # -- transforms --------------------------------------------------------
    def cauchy(self, zeta):
        """G(zeta) = integral of 1/(zeta - x) d mu(x), principal branch off support."""
        raise NotImplementedError

    def log_potential(self, lam) -> float:
        """Integral of log|lam - x| d mu(x)."""
        raise NotImplementedError

    def support(self):
        """(lo, hi) for real measures; the string 'circle' for circle measures."""
        raise NotImplementedError

    def contains(self, lam: complex, tol: float = 1e-9) -> bool:
        """Whether lam lies in the support (as a subset of C)."""
        raise NotImplementedError

    def atom_at(self, x: complex) -> float:
        return 0.0

    def to_json(self) -> dict:
        raise NotImplementedError


class AtomicMeasure(SpectralMeasure):
    """Finitely many atoms; points may be complex (used for normal operators)."""

    variant = "atomic"

    def __init__(self, points: Sequence[complex], weights: Optional[Sequence[float]] = None):
        pts = [complex(p) for p in points]
        if weights is None:
            weights = [1.0 / len(pts)] * len(pts)
        w = [float(x) for x in weights]
        if len(w) != len(pts) or not pts:
            raise ValueError("points and weights must be nonempty and equal length")
        if any(x < 0 for x in w) or abs(sum(w) - 1.0) > 1e-9:
            raise ValueError("weights must be nonnegative and sum to 1")
        self.points = tuple(pts)
        self.weights = tuple(w)
        self.is_real = all(abs(p.imag) < _ATOM_EPS for p in pts)
        self.is_circle = all(abs(abs(p) - 1.0) < 1e-9 for p in pts)

    def moment(self, k: int) -> complex:
        val = sum(w * p**k for p, w in zip(self.points, self.weights))
        return val.real if self.is_real else val

    def expect(self, fn, tol: float = _QUAD_TOL):
        return sum(w * fn(p.real if self.is_real else p) for p, w in zip(self.points, self.weights))

    def quad_nodes(self, n: int = 400):
        return np.asarray(self.points, dtype=complex), np.asarray(self.weights, dtype=float)

    def cauchy(self, zeta):
        zeta = np.asarray(zeta, dtype=complex)
        out = np.zeros_like(zeta)
        for p, w in zip(self.points, self.weights):
            out = out + w / (zeta - p)
        return out if out.shape else complex(out)

    def log_potential(self, lam) -> float:
        lam = complex(lam)
        acc = 0.0
        for p, w in zip(self.points, self.weights):
            d = abs(lam - p)
            acc += w * (math.log(d) if d > 0 else -math.inf)
        return acc

    def support(self):
        if self.is_real:
            xs = [p.real for p in self.points]
            return min(xs), max(xs)
        return "discrete"

    def contains(self, lam: complex, tol: float = 1e-9) -> bool:
        return any(abs(lam - p) <= tol for p in self.points)

    def atom_at(self, x: complex) -> float:
        return sum(w for p, w in zip(self.points, self.weights) if abs(p - x) < _ATOM_EPS)

    def to_json(self) -> dict:
        return {
            "variant": "atomic",
            "points": [[p.real, p.imag] for p in self.points],
            "weights": list(self.weights),
        }


class SemicircleMeasure(SpectralMeasure):
    """Semicircle law of a given variance on [-2 sqrt(v), 2 sqrt(v)]."""

    variant = "semicircle"

    def __init__(self, variance: float = 1.0):
        if variance <= 0:
            raise ValueError("variance must be positive")
        self.variance = float(variance)
        self.radius = 2.0 * math.sqrt(self.variance)

    def moment(self, k: int) -> float:
        if k % 2:
            return 0.0
        m = k // 2
        catalan = math.comb(2 * m, m) // (m + 1)
        return (self.variance**m) * catalan

    def density(self, x):
        x = np.asarray(x, dtype=float)
        inside = np.abs(x) < self.radius
        out = np.zeros_like(x)
        out[inside] = np.sqrt(self.radius**2 - x[inside] ** 2) / (2.0 * math.pi * self.variance)
        return out

    def expect(self, fn, tol: float = _QUAD_TOL):
        r = self.radius

        def g(theta: float):
            x = r * math.sin(theta)
            return fn(x) * math.cos(theta) ** 2

        val = integrate_adaptive(g, -math.pi / 2.0, math.pi / 2.0, tol=tol)
        return val * r * r / (2.0 * math.pi * self.variance)

    def quad_nodes(self, n: int = 400):
        # x = r sin(theta) turns the density into (2/pi) cos^2(theta) d theta
        theta, om = np.polynomial.legendre.leggauss(n)
        theta = theta * (math.pi / 2.0)
        w = om * np.cos(theta) ** 2  # leggauss weights carry the pi/2 scale below
        return (
            np.asarray(self.radius * np.sin(theta), dtype=complex),
            w * (math.pi / 2.0) * (2.0 / math.pi),
        )

    def cauchy(self, zeta):
        zeta = np.asarray(zeta, dtype=complex)
        root = _sqrt_outside(zeta, 4.0 * self.variance)
        out = (zeta - root) / (2.0 * self.variance)
        return out if out.shape else complex(out)

    def log_potential(self, lam) -> float:
        # antiderivative of G along the branch sqrt(z^2-4v) ~ z at infinity
        lam = complex(lam)
        if abs(lam) < 1e-14:
            lam = 1e-14 + 0j
        v = self.variance
        root = lam * cmath.sqrt(1.0 - 4.0 * v / (lam * lam))
        val = (lam * lam - lam * root) / (4.0 * v) + cmath.log(lam + root)
        return val.real - 0.5 - math.log(2.0)

    def support(self):
        return -self.radius, self.radius

    def contains(self, lam: complex, tol: float = 1e-9) -> bool:
        return abs(lam.imag) <= tol and abs(lam.real) <= self.radius + tol

    def to_json(self) -> dict:
        return {"variant": "semicircle", "variance": self.variance}


class ArcsineMeasure(SpectralMeasure):
    """Arcsine law dx / (pi sqrt(4 - x^2)) on [-2, 2] (law of u2 + v2)."""

    variant = "arcsine"

    def moment(self, k: int) -> float:
        if k % 2:
            return 0.0
        return float(math.comb(k, k // 2))

    def expect(self, fn, tol: float = _QUAD_TOL):
        # x = 2 sin(theta) turns the measure into d theta / pi
        return integrate_adaptive(
            lambda th: fn(2.0 * math.sin(th)), -math.pi / 2.0, math.pi / 2.0, tol=tol
        ) / math.pi

    def quad_nodes(self, n: int = 400):
        theta, om = np.polynomial.legendre.leggauss(n)
        theta = theta * (math.pi / 2.0)
        return (
            np.asarray(2.0 * np.sin(theta), dtype=complex),
            om * (math.pi / 2.0) / math.pi,
        )

    def density(self, x):
        x = np.asarray(x, dtype=float)
        out = np.zeros_like(x)
        inside = np.abs(x) < 2.0
        out[inside] = 1.0 / (math.pi * np.sqrt(4.0 - x[inside] ** 2))
        return out

    def cauchy(self, zeta):
        zeta = np.asarray(zeta, dtype=complex)
        out = 1.0 / _sqrt_outside(zeta, 4.0)
        return out if out.shape else complex(out)

    def log_potential(self, lam) -> float:
        # equilibrium measure of [-2, 2]: log|(lam + sqrt(lam^2-4)) / 2|
        lam = complex(lam)
        if abs(lam) < 1e-14:
            return 0.0
        root = lam * cmath.sqrt(1.0 - 4.0 / (lam * lam))
        val = cmath.log((lam + root) / 2.0).real
        return max(val, 0.0)

    def support(self):
        return -2.0, 2.0

    def contains(self, lam: complex, tol: float = 1e-9) -> bool:
        return abs(lam.imag) <= tol and abs(lam.real) <= 2.0 + tol

    def to_json(self) -> dict:
        return {"variant": "arcsine"}


class QuarterCircleMeasure(SpectralMeasure):
    """Quarter-circle law (4 / (pi c^2)) sqrt(c^2 - x^2) on [0, c].

    The radial part |C_t| of a circular element of variance t has this law
    with c = 2 sqrt(t).
    """

    variant = "quarter_circle"

    def __init__(self, scale: float):
        if scale <= 0:
            raise ValueError("scale must be positive")
        self.scale = float(scale)

    @staticmethod
    def of_circular(t: float) -> "QuarterCircleMeasure":
        return QuarterCircleMeasure(2.0 * math.sqrt(t))

    def moment(self, k: int) -> float:
        # c^k * (4/pi) * int_0^{pi/2} sin^k cos^2
        c = self.scale
        val = 0.5 * math.gamma((k + 1) / 2.0) * math.gamma(1.5) / math.gamma(k / 2.0 + 2.0)
        return (c**k) * (4.0 / math.pi) * val

    def expect(self, fn, tol: float = _QUAD_TOL):
        c = self.scale

        def g(theta: float):
            return fn(c * math.sin(theta)) * math.cos(theta) ** 2

        return (4.0 / math.pi) * integrate_adaptive(g, 0.0, math.pi / 2.0, tol=tol)

    def quad_nodes(self, n: int = 400):
        x, om = np.polynomial.legendre.leggauss(n)
        theta = (x + 1.0) * (math.pi / 4.0)
        w = (4.0 / math.pi) * om * (math.pi / 4.0) * np.cos(theta) ** 2
        return np.asarray(self.scale * np.sin(theta), dtype=complex), w

    def density(self, x):
        x = np.asarray(x, dtype=float)
        out = np.zeros_like(x)
        inside = (x >= 0) & (x < self.scale)
        out[inside] = 4.0 * np.sqrt(self.scale**2 - x[inside] ** 2) / (math.pi * self.scale**2)
        return out

    def cauchy(self, zeta):
        raise MeasureDomainError("quarter-circle Cauchy transform not required; use expect")

    def log_potential(self, lam) -> float:
        lam = complex(lam)
        return self.expect(lambda x: math.log(max(abs(lam - x), 1e-300)))

    def support(self):
        return 0.0, self.scale

    def contains(self, lam: complex, tol: float = 1e-9) -> bool:
        return abs(lam.imag) <= tol and -tol <= lam.real <= self.scale + tol

    def to_json(self) -> dict:
        return {"variant": "quarter_circle", "scale": self.scale}


class PoissonKernelMeasure(SpectralMeasure):
    """Poisson kernel on the unit circle with parameter q in (-1, 1).

    Moments are q^{|n|}; q = 0 is the Haar (uniform) measure.  Equal to the
    pushforward of the uniform measure under the Moebius map
    w -> (w + q) / (1 + q w), which is how expectations are computed.
    """

    variant = "poisson_kernel"
    is_circle = True

    def __init__(self, q: float = 0.0):
        if not -1.0 < q < 1.0:
            raise ValueError("q must lie in (-1, 1)")
        self.q = float(q)

    def moment(self, k: int) -> float:
        return self.q ** abs(k)

    def density_theta(self, theta):
        theta = np.asarray(theta, dtype=float)
        q = self.q
        return (1.0 - q * q) / (2.0 * math.pi * np.abs(1.0 - q * np.exp(1j * theta)) ** 2)

    def expect(self, fn, tol: float = _QUAD_TOL):
        q = self.q

        def g(t: float):
            w = cmath.exp(1j * t)
            return fn((w + q) / (1.0 + q * w))

        re = integrate_adaptive(lambda t: g(t).real if isinstance(g(t), complex) else g(t),
                                -math.pi, math.pi, tol=tol)
        # check for complex-valued integrand lazily
        probe = g(0.4)
        if isinstance(probe, complex):
            im = integrate_adaptive(lambda t: g(t).imag, -math.pi, math.pi, tol=tol)
            return (re + 1j * im) / (2.0 * math.pi)
        return re / (2.0 * math.pi)

    def quad_nodes(self, n: int = 400):
        # midpoint rule in the uniform variable, pushed through the Moebius map;
        # spectrally accurate for periodic analytic integrands
        m = max(n, 1024)
        t = (np.arange(m) + 0.5) * (2.0 * math.pi / m)
        w_pts = np.exp(1j * t)
        return (w_pts + self.q) / (1.0 + self.q * w_pts), np.full(m, 1.0 / m)

    def cauchy(self, zeta):
        """Two-branch transform: 1/(zeta - q) outside, 1/(zeta - 1/q) inside."""
        zeta = np.asarray(zeta, dtype=complex)
        outside = np.abs(zeta) > 1.0
        out = np.empty(zeta.shape, dtype=complex)
        out[outside] = 1.0 / (zeta[outside] - self.q)
        if self.q == 0.0:
            out[~outside] = 0.0
        else:
            out[~outside] = 1.0 / (zeta[~outside] - 1.0 / self.q)
        return out if out.shape else complex(out)

    def log_potential(self, lam) -> float:
        lam = complex(lam)
        if abs(lam) >= 1.0:
            return math.log(max(abs(lam - self.q), 1e-300))
        return math.log(max(abs(1.0 - self.q * lam), 1e-300))

    def support(self):
        return "circle"

    def contains(self, lam: complex, tol: float = 1e-9) -> bool:
        return abs(abs(lam) - 1.0) <= tol

    def to_json(self) -> dict:
        return {"variant": "poisson_kernel", "q": self.q}


class SquaredMeasure(SpectralMeasure):
    """Pushforward of a measure on [0, inf) under x -> x^2.

    Used to express the law of h^2 when only the law of h is closed-form
    (e.g. the quarter-circle radial part of a circular element).
    """

    variant = "squared"

    def __init__(self, base: SpectralMeasure):
        if base.is_circle:
            raise MeasureDomainError("squared pushforward needs a real measure")
        self.base = base

    def moment(self, k: int) -> complex:
        return self.base.moment(2 * k)

    def expect(self, fn, tol: float = _QUAD_TOL):
        return self.base.expect(lambda x: fn(x * x), tol=tol)

    def quad_nodes(self, n: int = 400):
        pts, w = self.base.quad_nodes(n)
        return pts * pts, w

    def cauchy(self, zeta):
        zeta = complex(zeta)
        if zeta.imag == 0.0 and zeta.real < 0.0:
            return complex(self.expect(lambda t: 1.0 / (zeta.real - t)))
        raise MeasureDomainError("squared measure Cauchy transform only on the negative axis")

    def log_potential(self, lam) -> float:
        lam = complex(lam)
        return float(self.expect(lambda t: math.log(max(abs(lam - t), 1e-300))).real)

    def support(self):
        lo, hi = self.base.support()
        lo = max(lo, 0.0)
        return lo * lo, hi * hi

    def contains(self, lam: complex, tol: float = 1e-9) -> bool:
        lo, hi = self.support()
        return abs(lam.imag) <= tol and lo - tol <= lam.real <= hi + tol

    def atom_at(self, x: complex) -> float:
        if x == 0:
            return self.base.atom_at(0.0)
        return self.base.atom_at(math.sqrt(x.real)) if x.real >= 0 else 0.0

    def to_json(self) -> dict:
        return {"variant": "squared", "base": self.base.to_json()}


class EmpiricalMeasure(SpectralMeasure):
    """Finite sample cloud; moments are plain averages.

    Meant for Monte-Carlo output.  Transform operations that require an
    analytic continuation are deliberately unavailable.
    """

    variant = "empirical"

    def __init__(self, samples: Sequence[complex]):
        arr = np.asarray(samples, dtype=complex)
        if arr.size == 0:
            raise ValueError("empirical measure needs samples")
        self.samples = arr

    def moment(self, k: int) -> complex:
        val = complex(np.mean(self.samples**k))
        return val

    def expect(self, fn, tol: float = _QUAD_TOL):
        return float(np.mean([fn(s) for s in self.samples]))

    def quad_nodes(self, n: int = 400):
        return self.samples.copy(), np.full(self.samples.size, 1.0 / self.samples.size)

    def cauchy(self, zeta):
        raise MeasureDomainError("empirical measures support moments only")

    def log_potential(self, lam) -> float:
        d = np.abs(lam - self.samples)
        return float(np.mean(np.log(np.maximum(d, 1e-300))))

    def support(self):
        return "empirical"

    def contains(self, lam: complex, tol: float = 1e-9) -> bool:
        return bool(np.any(np.abs(self.samples - lam) <= tol))

    def to_json(self) -> dict:
        return {"variant": "empirical", "samples": [[s.real, s.imag] for s in self.samples]}


def measure_from_json(obj: dict) -> SpectralMeasure:
    kind = obj.get("variant")
    if kind == "atomic":
        pts = [complex(p[0], p[1]) if isinstance(p, (list, tuple)) else complex(p) for p in obj["points"]]
        return AtomicMeasure(pts, obj.get("weights"))
    if kind == "semicircle":
        return SemicircleMeasure(float(obj.get("variance", 1.0)))
    if kind == "arcsine":
        return ArcsineMeasure()
    if kind == "quarter_circle":
        return QuarterCircleMeasure(float(obj["scale"]))
    if kind == "poisson_kernel":
        return PoissonKernelMeasure(float(obj.get("q", 0.0)))
    if kind == "squared":
        return SquaredMeasure(measure_from_json(obj["base"]))
    if kind == "empirical":
        return EmpiricalMeasure([complex(p[0], p[1]) for p in obj["samples"]])
    raise MeasureDomainError(f"unknown measure variant: {kind!r}")


# ---------------------------------------------------------------------------
# moment / R / S transforms


def cauchy_transform(measure: SpectralMeasure, zeta):
    return measure.cauchy(zeta)


def moment_series(measure: SpectralMeasure, order: int) -> TruncatedSeries:
    """psi(z) = sum_{k>=1} m_k z^k truncated at the given order."""
    if order < 1:
        raise ValueError("order must be >= 1")
    return TruncatedSeries.from_list([0.0] + [measure.moment(k) for k in range(1, order + 1)])


def r_transform(measure: SpectralMeasure, order: int) -> TruncatedSeries:
    """R(z) = sum kappa_n z^n with K(z) = (1/z)(1 + R(z)) inverse to G.

    Computed by series reversion of g(z) = z (1 + psi(z)), the power-series
    avatar of G(1/z).
    """
    if isinstance(measure, EmpiricalMeasure):
        raise MeasureDomainError("empirical measures support moments only")
    psi = moment_series(measure, order)
    g = TruncatedSeries.from_list([0.0, 1.0] + [psi.coeff(k) for k in range(1, order + 1)])
    k = g.revert()  # k(w) = w / (1 + R(w))
    q = TruncatedSeries(k.coeffs[1:])  # k(w)/w, constant term 1
    r = q.reciprocal()
    return TruncatedSeries(tuple(r.coeff(j) - (1.0 if j == 0 else 0.0) for j in range(order + 1)))


def s_transform(measure: SpectralMeasure, order: int) -> TruncatedSeries:
    """S(z) = ((1+z)/z) chi(z) where chi inverts psi; needs nonzero mean."""
    if isinstance(measure, EmpiricalMeasure):
        raise MeasureDomainError("empirical measures support moments only")
    m1 = measure.moment(1)
    if abs(m1) < 1e-12:
        raise MeasureDomainError("S-transform needs a nonzero first moment")
    psi = moment_series(measure, order + 1)
    chi = psi.revert()
    chi_over_z = TruncatedSeries(chi.coeffs[1:])
    one_plus_z = TruncatedSeries.from_list([1.0, 1.0] + [0.0] * (order - 1))
    return chi_over_z.truncate(order).mul(one_plus_z)


def series_r_to_zs(r: TruncatedSeries) -> TruncatedSeries:
    """The compositional inverse of R, which equals z S(z)."""
    return r.revert()


def cauchy_of_abs_squared(measure: SpectralMeasure, lam: complex, zeta: complex) -> complex:
    """G_{|lam - a|^2}(zeta) for self-adjoint a via two evaluations of G_a.

    Uses x_pm = Re lam +- sqrt(zeta - (Im lam)^2); the expression is
    symmetric in x_pm so the square-root branch is immaterial.
    """
    if measure.is_circle and not getattr(measure, "is_real", False):
        raise MeasureDomainError("self-adjoint measure required")
    lam = complex(lam)
    root = cmath.sqrt(complex(zeta) - lam.imag**2)
    if abs(root) < 1e-9:
        root = complex(1e-9)  # symmetric-difference limit guard
    xp = lam.real + root
    xm = lam.real - root
    return (measure.cauchy(xp) - measure.cauchy(xm)) / (xp - xm)


def norm_inverse_l2_sq(measure: SpectralMeasure, lam: complex) -> float:
    """tau(|lam - a|^{-2}) = integral of |lam - x|^{-2} d mu(x).

    Closed forms via the Cauchy transform where available; +inf on atoms.
    """
    lam = complex(lam)
    if isinstance(measure, AtomicMeasure):
        acc = 0.0
        for p, w in zip(measure.points, measure.weights):
            d2 = abs(lam - p) ** 2
            if d2 == 0.0:
                return math.inf if w > 0 else acc
            acc += w / d2
        return acc
    if measure.is_circle:
        if abs(abs(lam) - 1.0) < 1e-12:
            return math.inf
        g_lam = measure.cauchy(lam)
        g_bar = measure.cauchy(lam.conjugate())
        val = (lam * g_lam + lam.conjugate() * g_bar - 1.0) / (abs(lam) ** 2 - 1.0)
        return float(val.real)
    if abs(lam.imag) > 1e-9:
        g_lam = measure.cauchy(lam)
        g_bar = measure.cauchy(lam.conjugate())
        val = -(g_lam - g_bar) / (lam - lam.conjugate())
        return float(val.real)
    if measure.contains(lam):
        return math.inf
    return float(measure.expect(lambda x: 1.0 / abs(lam - x) ** 2).real)


def shift_norm_sq(measure: SpectralMeasure, lam: complex) -> float:
    """tau(|lam - a|^2) from the first two (complex) moments."""
    lam = complex(lam)
    m1 = measure.moment(1)
    if measure.is_circle:
        m2 = 1.0
    elif isinstance(measure, AtomicMeasure) and not measure.is_real:
        m2 = sum(w * abs(p) ** 2 for p, w in zip(measure.points, measure.weights))
    else:
        m2 = measure.moment(2)
    return float(abs(lam) ** 2 - 2.0 * (lam.conjugate() * m1).real + m2)


# ---------------------------------------------------------------------------
# operator models


class OperatorModel:
    """An operator a entering the sums a + u (Haar) and a + c_t (circular).

    Implementations provide the scalar statistics of lam - a that the Brown
    pipelines consume; array arguments broadcast.
    """

    kind = "abstract"

    def tau(self) -> complex:
        raise NotImplementedError

    def shift_norm_sq(self, lam):
        """tau |lam - a|^2, vectorized over lam."""
        raise NotImplementedError

    def inv_norm_sq(self, lam):
        """tau |lam - a|^{-2}, +inf where singular, vectorized."""
        raise NotImplementedError

    def log_det_shift(self, lam):
        """tau log|lam - a| (the log-determinant of the shift), vectorized."""
        raise NotImplementedError

    def in_base_spectrum(self, lam, tol: float = 1e-9):
        raise NotImplementedError

    def window_hint(self) -> Tuple[float, float]:
        """(radius scale, imag scale) used for default grid windows."""
        return 2.0, 2.0

    def to_json(self) -> dict:
        raise NotImplementedError

    # ---- Haar-sum interface ------------------------------------------
    def f_eval(self, v, lam):
        """f(v, lam) = tau((1 + v|a - lam|^2)^{-1}), vectorized in (v, lam)."""
        raise NotImplementedError

    def has_atom_family(self) -> bool:
        return False


class FiniteNormalModel(OperatorModel):
    """Normal operator with finitely many (possibly complex) eigenvalues."""

    kind = "finite_normal"

    def __init__(self, atoms: Sequence[complex], weights: Optional[Sequence[float]] = None):
        self.measure = AtomicMeasure(atoms, weights)
        self.atoms = np.asarray(self.measure.points, dtype=complex)
        self.weights = np.asarray(self.measure.weights, dtype=float)

    def tau(self) -> complex:
        return complex(np.sum(self.weights * self.atoms))

    def _d2(self, lam):
        lam = np.asarray(lam, dtype=complex)
        return np.abs(lam[..., None] - self.atoms) ** 2

    def shift_norm_sq(self, lam):
        out = np.sum(self.weights * self._d2(lam), axis=-1)
        return out if out.shape else float(out)

    def inv_norm_sq(self, lam):
        d2 = self._d2(lam)
        with np.errstate(divide="ignore"):
            out = np.sum(np.where(d2 > 0, self.weights / np.where(d2 > 0, d2, 1.0), np.inf), axis=-1)
        return out if out.shape else float(out)

    def log_det_shift(self, lam):
        d2 = self._d2(lam)
        with np.errstate(divide="ignore"):
            out = 0.5 * np.sum(self.weights * np.log(np.maximum(d2, 1e-300)), axis=-1)
        return out if out.shape else float(out)

    def in_base_spectrum(self, lam, tol: float = 1e-9):
        lam = np.asarray(lam, dtype=complex)
        out = np.any(np.abs(lam[..., None] - self.atoms) <= tol, axis=-1)
        return out if out.shape else bool(out)

    def window_hint(self):
        r = float(np.max(np.abs(self.atoms)))
        return r + 1.3, r + 1.3

    def f_eval(self, v, lam):
        v = np.asarray(v, dtype=float)
        d2 = self._d2(lam)
        out = np.sum(self.weights / (1.0 + v[..., None] * d2), axis=-1)
        return out if out.shape else float(out)

    def has_atom_family(self) -> bool:
        return True

    def atom_family(self, lam):
        """(weights, mu, dmu, ddmu): eigenvalues of |lam-a|^2 and Wirtinger derivatives."""
        lam = np.asarray(lam, dtype=complex)
        diff = lam[..., None] - self.atoms
        mu = np.abs(diff) ** 2
        dmu = np.conj(diff)  # d/d lam |lam - t|^2 = conj(lam - t)
        ddmu = np.ones_like(mu)
        return self.weights, mu, dmu, ddmu

    def to_json(self) -> dict:
        return {
            "kind": "finite_normal",
            "atoms": [[a.real, a.imag] for a in self.atoms],
            "weights": list(map(float, self.weights)),
        }


class ZeroModel(FiniteNormalModel):
    """The zero operator; a + u is a Haar unitary, a + c_t a circular element."""

    kind = "zero"

    def __init__(self):
        super().__init__([0.0], [1.0])

    def to_json(self) -> dict:
        return {"kind": "zero"}


class TwoByTwoModel(OperatorModel):
    """General 2x2 matrix in (M_2, tr/2), not necessarily normal."""

    kind = "two_by_two"

    def __init__(self, entries: Sequence[Sequence[complex]]):
        m = np.asarray(entries, dtype=complex)
        if m.shape != (2, 2):
            raise ValueError("entries must be a 2x2 matrix")
        self.entries = m
        self.tr_mean = complex(np.trace(m)) / 2.0
        self.det = complex(np.linalg.det(m))
        self.hs_sq = float(np.sum(np.abs(m) ** 2)) / 2.0  # tau(a* a)
        self.eigs = np.linalg.eigvals(m)

    def tau(self) -> complex:
        return self.tr_mean

    def shift_norm_sq(self, lam):
        lam = np.asarray(lam, dtype=complex)
        out = np.abs(lam) ** 2 - 2.0 * (np.conj(lam) * self.tr_mean).real + self.hs_sq
        return out if out.shape else float(out)

    def det_shift(self, lam):
        """det(lam - a) = lam^2 - tr(a) lam + det(a)."""
        lam = np.asarray(lam, dtype=complex)
        out = lam * lam - 2.0 * self.tr_mean * lam + self.det
        return out if out.shape else complex(out)

    def mu_pm(self, lam):
        """Eigenvalues mu_+ >= mu_- of |lam - a|^2."""
        T = self.shift_norm_sq(lam)
        D = np.abs(self.det_shift(lam)) ** 2
        S = np.sqrt(np.maximum(np.asarray(T, dtype=float) ** 2 - D, 0.0))
        return T + S, T - S

    def inv_norm_sq(self, lam):
        mp, mm = self.mu_pm(lam)
        with np.errstate(divide="ignore"):
            out = 0.5 * (1.0 / mp + 1.0 / mm)
        return out if np.asarray(out).shape else float(out)

    def log_det_shift(self, lam):
        # tau log|lam - a| = (1/2) log|det(lam - a)|
        d = np.abs(self.det_shift(lam))
        out = 0.5 * np.log(np.maximum(d, 1e-300))
        return out if np.asarray(out).shape else float(out)

    def in_base_spectrum(self, lam, tol: float = 1e-9):
        lam = np.asarray(lam, dtype=complex)
        out = np.any(np.abs(lam[..., None] - self.eigs) <= tol, axis=-1)
        return out if out.shape else bool(out)

    def window_hint(self):
        r = float(np.max(np.abs(self.eigs))) + float(np.sqrt(self.hs_sq)) + 1.3
        return r, r

    def f_eval(self, v, lam):
        v = np.asarray(v, dtype=float)
        mp, mm = self.mu_pm(lam)
        out = 0.5 * (1.0 / (1.0 + v * mp) + 1.0 / (1.0 + v * mm))
        return out if np.asarray(out).shape else float(out)

    def has_atom_family(self) -> bool:
        return True

    def atom_family(self, lam):
        """Weights 1/2 each on mu_pm with analytic Wirtinger derivatives.

        mu_pm = T +- S with S = sqrt(T^2 - D); the derivatives below feed the
        subordination-density formula for non-normal 2x2 models.
        """
        lam = np.asarray(lam, dtype=complex)
        m = lam - self.tr_mean  # tau(lam - a)
        d = self.det_shift(lam)
        T = np.abs(lam) ** 2 - 2.0 * (np.conj(lam) * self.tr_mean).real + self.hs_sq
        D = np.abs(d) ** 2
        S2 = np.maximum(np.asarray(T * T - D, dtype=float), 1e-300)
        S = np.sqrt(S2)
        dT = np.conj(m)
        dS = (T * np.conj(m) - m * np.conj(d)) / S
        # dd S = (T - |m|^2)/S - |T conj(m) - m conj(d)|^2 / S^3
        num = T * np.conj(m) - m * np.conj(d)
        ddS = (T - np.abs(m) ** 2) / S - (np.abs(num) ** 2) / (S2 * S)
        mu_p = T + S
        mu_m = np.maximum(T - S, 0.0)
        dmu = np.stack([dT + dS, dT - dS], axis=-1)
        ddmu = np.stack([1.0 + ddS, 1.0 - ddS], axis=-1)
        mu = np.stack([mu_p, mu_m], axis=-1)
        w = np.array([0.5, 0.5])
        return w, mu, dmu, ddmu

    def to_json(self) -> dict:
        return {
            "kind": "two_by_two",
            "entries": [[[z.real, z.imag] for z in row] for row in self.entries],
        }


class NormalSelfAdjointModel(OperatorModel):
    """Self-adjoint operator given by its spectral measure on the real line."""

    kind = "normal_selfadjoint"

    def __init__(self, measure: SpectralMeasure):
        if measure.is_circle:
            raise ValueError("self-adjoint model needs a real measure")
        self.measure = measure

    def tau(self) -> complex:
        return self.measure.moment(1)

    def shift_norm_sq(self, lam):
        lam = np.asarray(lam, dtype=complex)
        m1 = self.measure.moment(1).real if isinstance(self.measure.moment(1), complex) else self.measure.moment(1)
        m2 = self.measure.moment(2)
        out = np.abs(lam) ** 2 - 2.0 * lam.real * m1 + m2
        return out if out.shape else float(out)

    def inv_norm_sq(self, lam):
        lam = np.asarray(lam, dtype=complex)
        if lam.shape == ():
            return norm_inverse_l2_sq(self.measure, complex(lam))
        flat = lam.ravel()
        off_axis = np.abs(flat.imag) > 1e-9
        out = np.empty(flat.shape, dtype=float)
        if np.any(off_axis):
            z = flat[off_axis]
            g = self.measure.cauchy(z)
            gb = self.measure.cauchy(np.conj(z))
            out[off_axis] = (-(g - gb) / (z - np.conj(z))).real
        for idx in np.nonzero(~off_axis)[0]:
            out[idx] = norm_inverse_l2_sq(self.measure, complex(flat[idx]))
        return out.reshape(lam.shape)

    def log_det_shift(self, lam):
        lam = np.asarray(lam, dtype=complex)
        if lam.shape == ():
            return self.measure.log_potential(complex(lam))
        return np.array([self.measure.log_potential(z) for z in lam.ravel()]).reshape(lam.shape)

    def in_base_spectrum(self, lam, tol: float = 1e-9):
        lam = np.asarray(lam, dtype=complex)
        if lam.shape == ():
            return self.measure.contains(complex(lam), tol)
        return np.array([self.measure.contains(z, tol) for z in lam.ravel()]).reshape(lam.shape)

    def window_hint(self):
        lo, hi = self.measure.support()
        return max(abs(lo), abs(hi)) + 1.3, 2.0

    def f_eval(self, v, lam):
        """Closed form through G_a at z0 = Re lam + (i/v) sqrt(v^2 Im(lam)^2 + v)."""
        v = np.asarray(v, dtype=float)
        lam = np.asarray(lam, dtype=complex)
        y = lam.imag
        denom = np.sqrt(v * v * y * y + v)
        z0 = lam.real + 1j * denom / v
        g = self.measure.cauchy(z0)
        out = -np.imag(g) / denom
        return out if np.asarray(out).shape else float(out)


class NormalUnitaryModel(OperatorModel):
    """Unitary operator given by its spectral measure on the unit circle."""

    kind = "normal_unitary"

    def __init__(self, measure: SpectralMeasure):
        if not measure.is_circle:
            raise ValueError("unitary model needs a circle measure")
        self.measure = measure

    def tau(self) -> complex:
        return self.measure.moment(1)

    def shift_norm_sq(self, lam):
        lam = np.asarray(lam, dtype=complex)
        m1 = complex(self.measure.moment(1))
        out = np.abs(lam) ** 2 - 2.0 * (np.conj(lam) * m1).real + 1.0
        return out if out.shape else float(out)

    def inv_norm_sq(self, lam):
        lam = np.asarray(lam, dtype=complex)
        if lam.shape == ():
            return norm_inverse_l2_sq(self.measure, complex(lam))
        flat = lam.ravel()
        out = np.empty(flat.shape, dtype=float)
        r = np.abs(flat)
        on_circle = np.abs(r - 1.0) < 1e-12
        ok = ~on_circle
        z = flat[ok]
        g = self.measure.cauchy(z)
        gb = self.measure.cauchy(np.conj(z))
        out[ok] = ((z * g + np.conj(z) * gb - 1.0) / (np.abs(z) ** 2 - 1.0)).real
        out[on_circle] = np.inf
        return out.reshape(lam.shape)

    def log_det_shift(self, lam):
        lam = np.asarray(lam, dtype=complex)
        if lam.shape == ():
            return self.measure.log_potential(complex(lam))
        return np.array([self.measure.log_potential(z) for z in lam.ravel()]).reshape(lam.shape)

    def in_base_spectrum(self, lam, tol: float = 1e-9):
        lam = np.asarray(lam, dtype=complex)
        out = np.abs(np.abs(lam) - 1.0) <= tol
        return out if out.shape else bool(out)

    def window_hint(self):
        return 2.3, 2.3

    def f_eval(self, v, lam):
        """Closed form via the two roots z_pm of the circle quadratic.

        f = (z_+ G(z_+) - z_- G(z_-)) / sqrt((1 + v(|lam|+1)^2)(1 + v(|lam|-1)^2)),
        with |z_+| > 1 > |z_-|; at lam = 0 the integrand is constant 1/(1+v).
        """
        v = np.asarray(v, dtype=float)
        lam = np.asarray(lam, dtype=complex)
        v, lam = np.broadcast_arrays(v, lam)
        r = np.abs(lam)
        small = r < 1e-12
        r_safe = np.where(small, 1.0, r)
        lam_safe = np.where(small, 1.0, lam)
        A = 1.0 + v * (r_safe**2 + 1.0)
        disc = (1.0 + v * (r_safe + 1.0) ** 2) * (1.0 + v * (r_safe - 1.0) ** 2)
        root = np.sqrt(disc)
        zp = (A + root) / (2.0 * v * np.conj(lam_safe))
        # z+ z- = lam / conj(lam), so the small root is stable as a quotient
        zm = 2.0 * v * lam_safe / (A + root)
        gp = self.measure.cauchy(zp)
        gm = self.measure.cauchy(zm)
        val = (zp * gp - zm * gm) / root
        out = np.where(small, 1.0 / (1.0 + v), val.real)
        return out if out.shape else float(out)


class SemicircularModel(NormalSelfAdjointModel):
    """Semicircular element of a given variance (vectorized closed forms)."""

    kind = "semicircular"

    def __init__(self, variance: float):
        super().__init__(SemicircleMeasure(variance))
        self.variance = float(variance)

    def inv_norm_sq(self, lam):
        """(1/(2 gamma)) ((omega - conj omega)/(lam - conj lam) - 1), omega = sqrt(lam^2 - 4 gamma)."""
        lam = np.asarray(lam, dtype=complex)
        g = self.variance
        omega = _sqrt_outside(lam, 4.0 * g)
        y = lam.imag
        off = np.abs(y) > 1e-9
        with np.errstate(invalid="ignore", divide="ignore"):
            ratio = np.where(
                off,
                (omega - np.conj(omega)) / np.where(off, lam - np.conj(lam), 1.0),
                # real-axis limit: d/dx sqrt(x^2-4g) = x / sqrt(x^2-4g)
                np.where(np.abs(lam.real) > 2.0 * math.sqrt(g),
                         lam.real / np.sqrt(np.maximum(lam.real**2 - 4.0 * g, 1e-300)),
                         np.inf),
            )
        out = (np.real(ratio) - 1.0) / (2.0 * g)
        out = np.where(np.isfinite(np.real(ratio)), out, np.inf)
        return out if out.shape else float(out)

    def log_det_shift(self, lam):
        lam = np.asarray(lam, dtype=complex)
        v = self.variance
        z = np.where(np.abs(lam) < 1e-14, 1e-14, lam)
        root = _sqrt_outside(z, 4.0 * v)
        val = (z * z - z * root) / (4.0 * v) + np.log(z + root)
        out = np.real(val) - 0.5 - math.log(2.0)
        return out if out.shape else float(out)

    def to_json(self) -> dict:
        return {"kind": "semicircular", "variance": self.variance}


def model_from_json(obj: dict) -> OperatorModel:
    kind = obj.get("kind")
    if kind == "two_by_two":
        rows = obj["entries"]
        entries = [
            [complex(z[0], z[1]) if isinstance(z, (list, tuple)) else complex(z) for z in row]
            for row in rows
        ]
        return TwoByTwoModel(entries)
    if kind == "finite_normal":
        atoms = [complex(p[0], p[1]) if isinstance(p, (list, tuple)) else complex(p) for p in obj["atoms"]]
        return FiniteNormalModel(atoms, obj.get("weights"))
    if kind == "normal_selfadjoint":
        return NormalSelfAdjointModel(measure_from_json(obj["measure"]))
    if kind == "normal_unitary":
        return NormalUnitaryModel(measure_from_json(obj["measure"]))
    if kind == "semicircular":
        return SemicircularModel(float(obj["variance"]))
    if kind == "zero":
        return ZeroModel()
    raise MeasureDomainError(f"unknown operator model kind: {kind!r}")


def model_to_json(model: OperatorModel) -> dict:
    if isinstance(model, (ZeroModel,)):
        return {"kind": "zero"}
    if isinstance(model, TwoByTwoModel):
        return model.to_json()
    if isinstance(model, FiniteNormalModel):
        return model.to_json()
    if isinstance(model, SemicircularModel):
        return model.to_json()
    if isinstance(model, NormalSelfAdjointModel):
        return {"kind": "normal_selfadjoint", "measure": model.measure.to_json()}
    if isinstance(model, NormalUnitaryModel):
        return {"kind": "normal_unitary", "measure": model.measure.to_json()}
    raise MeasureDomainError("cannot serialize model")


def symmetry_model() -> FiniteNormalModel:
    """u2: the symmetry with atoms +-1, weight 1/2 each."""
    return FiniteNormalModel([1.0, -1.0], [0.5, 0.5])


def roots_of_unity_model(n: int) -> FiniteNormalModel:
    """u_n: n-th roots of unity with equal weight."""
    atoms = [cmath.exp(2j * math.pi * k / n) for k in range(n)]
    return FiniteNormalModel(atoms, [1.0 / n] * n)


def nilpotent_model(t: float = 1.0) -> TwoByTwoModel:
    """The 2x2 nilpotent [[0, t], [0, 0]]."""
    return TwoByTwoModel([[0.0, t], [0.0, 0.0]])

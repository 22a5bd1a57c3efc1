"""Shared numerical kernels: monotone root finding, quadrature, stencil
Laplacians and density-grid sweeps.

Everything downstream (radial CDFs, subordination equations, determinant
flows) reduces to these four primitives, so their contracts are kept tight:
the root finder brackets and bisects monotone functions to near machine
precision, the quadrature wrapper is adaptive Gauss-Kronrod with an explicit
absolute tolerance, and grid sweeps are deterministic for a fixed grid no
matter how many worker threads run the cells.
"""

from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Callable, Iterable, List, Optional, Sequence, Tuple

import numpy as np
from scipy import integrate as _scipy_integrate

_BISECT_MAX_ITER = 200
_BISECT_REL_TOL = 1e-15
_QUAD_DEFAULT_TOL = 1e-10
_LAPLACIAN_DEFAULT_STEP = 1e-3


class NoRootError(RuntimeError):
    """Raised when a monotone solve cannot bracket the requested target."""


def solve_monotone(
    fn: Callable[[float], float],
    target: float,
    lo: float,
    hi: float,
    *,
    increasing: Optional[bool] = None,
    grow: bool = False,
    residual_scale: float = 1.0,
) -> float:
    """Solve fn(x) = target for a monotone fn on [lo, hi] by bisection.

    With grow=True the upper end is expanded geometrically (up to ~1e18)
    until the target is bracketed.  Raises NoRootError when no bracket
    exists.  The returned root satisfies |fn(root) - target| <= 1e-13 *
    max(residual_scale, |target|) or the interval has collapsed to
    floating-point resolution.
    """
    flo = fn(lo)
    fhi = fn(hi)
    if increasing is None:
        increasing = fhi >= flo
    sign = 1.0 if increasing else -1.0

    if grow:
        tries = 0
        while sign * (fhi - target) < 0.0 and tries < 80:
            lo, flo = hi, fhi
            hi = hi * 4.0 if hi > 0 else 1.0
            fhi = fn(hi)
            tries += 1

    if sign * (flo - target) > 0.0 or sign * (fhi - target) < 0.0:
        raise NoRootError(f"target {target} not bracketed on [{lo}, {hi}]")

    tol = 1e-13 * max(residual_scale, abs(target))
    x = 0.5 * (lo + hi)
    for _ in range(_BISECT_MAX_ITER):
        x = 0.5 * (lo + hi)
        fx = fn(x)
        if abs(fx - target) <= tol:
            return x
        if sign * (fx - target) < 0.0:
            lo = x
        else:
            hi = x
        if (hi - lo) <= _BISECT_REL_TOL * max(1.0, abs(lo), abs(hi)):
            break
    return 0.5 * (lo + hi)


def integrate_adaptive(
    fn: Callable[[float], float],
    a: float,
    b: float,
    *,
    tol: float = _QUAD_DEFAULT_TOL,
    singular_ends: bool = False,
    points: Optional[Sequence[float]] = None,
) -> float:
    """Adaptive quadrature of fn over [a, b] to absolute tolerance tol.

    Backed by the Gauss-Kronrod scheme in scipy.integrate.quad.  With
    singular_ends=True an inverse-square-root endpoint singularity is
    removed by the substitution x = m + w*sin(theta) before integrating,
    which is the right change of variables for arcsine-type densities.
    """
    if a == b:
        return 0.0
    if singular_ends:
        m = 0.5 * (a + b)
        w = 0.5 * (b - a)

        def g(theta: float) -> float:
            x = m + w * math.sin(theta)
            return fn(x) * w * math.cos(theta)

        val, _err = _scipy_integrate.quad(
            g, -math.pi / 2.0, math.pi / 2.0, epsabs=tol, epsrel=tol, limit=200
        )
        return val
    kwargs = {"epsabs": tol, "epsrel": tol, "limit": 200}
    if points is not None:
        kwargs["points"] = list(points)
    val, _err = _scipy_integrate.quad(fn, a, b, **kwargs)
    return val


def laplacian_2d(
    fn: Callable[[complex], float],
    lam: complex,
    *,
    step: float = _LAPLACIAN_DEFAULT_STEP,
    richardson: bool = True,
) -> float:
    """Five-point stencil Laplacian of a real field fn at the complex point lam.

    With richardson=True the h and h/2 stencils are extrapolated
    (L = L_{h/2} + (L_{h/2} - L_h)/3), killing the leading O(h^2) error.
    """

    def stencil(h: float) -> float:
        return (
            fn(lam + h)
            + fn(lam - h)
            + fn(lam + 1j * h)
            + fn(lam - 1j * h)
            - 4.0 * fn(lam)
        ) / (h * h)

    coarse = stencil(step)
    if not richardson:
        return coarse
    fine = stencil(step / 2.0)
    return fine + (fine - coarse) / 3.0


@dataclass(frozen=True)
class GridSpec:
    """Rectangular cell grid over a window in the complex plane.

    Sample points are cell centers; mass integrals use the midpoint rule
    density * cell_area summed over cells (diagnostic only, results are
    never rescaled by it).
    """

    re_min: float
    re_max: float
    re_steps: int
    im_min: float
    im_max: float
    im_steps: int

    def __post_init__(self) -> None:
        if self.re_steps < 1 or self.im_steps < 1:
            raise ValueError("grid needs at least one cell per axis")
        if not (self.re_max > self.re_min and self.im_max > self.im_min):
            raise ValueError("grid window is empty")

    @property
    def re_step(self) -> float:
        return (self.re_max - self.re_min) / self.re_steps

    @property
    def im_step(self) -> float:
        return (self.im_max - self.im_min) / self.im_steps

    @property
    def cell_area(self) -> float:
        return self.re_step * self.im_step

    def re_centers(self) -> np.ndarray:
        return self.re_min + (np.arange(self.re_steps) + 0.5) * self.re_step

    def im_centers(self) -> np.ndarray:
        return self.im_min + (np.arange(self.im_steps) + 0.5) * self.im_step

    def mesh(self) -> np.ndarray:
        """Complex cell centers, shape (im_steps, re_steps)."""
        re = self.re_centers()
        im = self.im_centers()
        return re[None, :] + 1j * im[:, None]

    def cell_index(self, lam: complex) -> Optional[Tuple[int, int]]:
        """(row, col) of the cell containing lam, or None outside the window."""
        j = int(math.floor((lam.real - self.re_min) / self.re_step))
        i = int(math.floor((lam.imag - self.im_min) / self.im_step))
        if 0 <= i < self.im_steps and 0 <= j < self.re_steps:
            return i, j
        return None

    def to_json(self) -> dict:
        return {
            "re_min": self.re_min,
            "re_max": self.re_max,
            "re_steps": self.re_steps,
            "im_min": self.im_min,
            "im_max": self.im_max,
            "im_steps": self.im_steps,
        }

    @staticmethod
    def from_json(obj: dict) -> "GridSpec":
        return GridSpec(
            re_min=float(obj["re_min"]),
            re_max=float(obj["re_max"]),
            re_steps=int(obj["re_steps"]),
            im_min=float(obj["im_min"]),
            im_max=float(obj["im_max"]),
            im_steps=int(obj["im_steps"]),
        )

    @staticmethod
    def square(extent: float, steps: int) -> "GridSpec":
        return GridSpec(-extent, extent, steps, -extent, extent, steps)


def _fmt(x: float) -> str:
    return f"{x:.12g}"


@dataclass
class DensityGridResult:
    """Density field plus spectrum mask and log-determinant on a GridSpec."""

    spec: GridSpec
    density: np.ndarray
    in_spectrum: np.ndarray
    log_delta: np.ndarray
    warnings: List[str] = field(default_factory=list)

    @property
    def mass(self) -> float:
        return float(np.sum(self.density) * self.spec.cell_area)

    def to_csv(self) -> str:
        """Row-major CSV: re,im,density,in_spectrum,log_delta (%.12g floats)."""
        re = self.spec.re_centers()
        im = self.spec.im_centers()
        lines = ["re,im,density,in_spectrum,log_delta"]
        for i in range(self.spec.im_steps):
            row_d = self.density[i]
            row_s = self.in_spectrum[i]
            row_l = self.log_delta[i]
            y = _fmt(im[i])
            for j in range(self.spec.re_steps):
                lines.append(
                    f"{_fmt(re[j])},{y},{_fmt(row_d[j])},{int(row_s[j])},{_fmt(row_l[j])}"
                )
        return "\n".join(lines) + "\n"


GridEvaluator = Callable[[np.ndarray], Tuple[np.ndarray, np.ndarray, np.ndarray]]


def grid_sweep(
    evaluator: GridEvaluator,
    spec: GridSpec,
    *,
    threads: int = 1,
) -> DensityGridResult:
    """Evaluate (density, in_spectrum, log_delta) over all grid cells.

    The evaluator receives a 2-d block of complex cell centers and must
    return arrays of the same shape.  Blocks are whole rows; the merge is
    by row index, so thread count never changes the result.
    """
    lam = spec.mesh()
    density = np.zeros(lam.shape, dtype=float)
    mask = np.zeros(lam.shape, dtype=bool)
    logd = np.zeros(lam.shape, dtype=float)

    n_rows = lam.shape[0]
    threads = max(1, int(threads))
    block = max(1, n_rows // (4 * threads)) if threads > 1 else n_rows
    spans = [(i, min(i + block, n_rows)) for i in range(0, n_rows, block)]

    def work(span: Tuple[int, int]) -> Tuple[int, int, tuple]:
        i0, i1 = span
        return i0, i1, evaluator(lam[i0:i1])

    if threads == 1:
        results = [work(s) for s in spans]
    else:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            results = list(pool.map(work, spans))

    for i0, i1, (d, m, l) in results:
        density[i0:i1] = d
        mask[i0:i1] = np.asarray(m, dtype=bool)
        logd[i0:i1] = l
    return DensityGridResult(spec=spec, density=density, in_spectrum=mask, log_delta=logd)


def extract_boundary(
    field: np.ndarray, spec: GridSpec, level: float = 0.0
) -> List[List[Tuple[float, float]]]:
    """Zero-level polylines of a scalar field sampled on grid cell centers.

    Plain marching squares with linear interpolation on cell edges.
    Segments are chained into polylines; ordering is deterministic
    (row-major over cells).  Returns a list of polylines, each a list of
    (re, im) points.
    """
    f = np.asarray(field, dtype=float) - level
    re = spec.re_centers()
    im = spec.im_centers()
    n_i, n_j = f.shape
    segments: List[Tuple[Tuple[float, float], Tuple[float, float]]] = []

    def interp(p0, f0, p1, f1):
        t = f0 / (f0 - f1)
        return (p0[0] + t * (p1[0] - p0[0]), p0[1] + t * (p1[1] - p0[1]))

    for i in range(n_i - 1):
        for j in range(n_j - 1):
            corners = [
                ((re[j], im[i]), f[i, j]),
                ((re[j + 1], im[i]), f[i, j + 1]),
                ((re[j + 1], im[i + 1]), f[i + 1, j + 1]),
                ((re[j], im[i + 1]), f[i + 1, j]),
            ]
            idx = 0
            for k, (_, val) in enumerate(corners):
                if val > 0.0:
                    idx |= 1 << k
            if idx in (0, 15):
                continue
            crossings = []
            for k in range(4):
                (p0, f0), (p1, f1) = corners[k], corners[(k + 1) % 4]
                if (f0 > 0.0) != (f1 > 0.0):
                    crossings.append(interp(p0, f0, p1, f1))
            if len(crossings) >= 2:
                segments.append((crossings[0], crossings[1]))
            if len(crossings) == 4:
                segments.append((crossings[2], crossings[3]))

    # chain segments into polylines on rounded endpoints
    def key(p):
        return (round(p[0], 9), round(p[1], 9))

    adjacency: dict = {}
    for s0, s1 in segments:
        adjacency.setdefault(key(s0), []).append((s0, s1))
        adjacency.setdefault(key(s1), []).append((s1, s0))

    used = set()
    polylines: List[List[Tuple[float, float]]] = []
    for seg in segments:
        if key(seg[0]) + key(seg[1]) in used or key(seg[1]) + key(seg[0]) in used:
            continue
        line = [seg[0], seg[1]]
        used.add(key(seg[0]) + key(seg[1]))
        grew = True
        while grew:
            grew = False
            tail = line[-1]
            for a, b in adjacency.get(key(tail), []):
                mark = key(a) + key(b)
                mark_r = key(b) + key(a)
                if mark in used or mark_r in used:
                    continue
                line.append(b)
                used.add(mark)
                grew = True
                break
        polylines.append(line)
    return polylines

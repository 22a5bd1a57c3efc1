"""Brown measure of X_t = X_0 + C_t, a free circular perturbation of variance t.

The determinant flows in the variance: with mu the law of |lambda - X_0|^2
and v(s) >= 0 the subordination scalar solving

    tau((|lambda - X_0|^2 + v(s)^2)^{-1}) = 1/s      (v(s) = 0 if no root),

the log-determinant is

    log Delta(lambda - X_t) = log Delta(lambda - X_0)
                              + (1/2) int_{t_lam}^t v(s)^2 / s^2 ds,

where t_lam = ||(lambda - X_0)^{-1}||_2^{-2} is the threshold below which
v vanishes; lambda lies in sigma(X_t) exactly when t >= t_lam.  The density
is (2/pi) d_{bar lambda} d_lambda of the potential, as always.

Closed forms: scalar X_0 gives the circular law; 2x2 X_0 gives rational v(s)^2
and an explicit antiderivative; semicircular X_0 is the elliptic family
S_alpha + i S_beta (= S_gamma + C_{2 beta}, gamma = alpha - beta), whose
density is the constant (1/4pi)(1/alpha + 1/beta) on an ellipse.  Everything
else runs through bisection in v and quadrature in s.
"""

from __future__ import annotations

import math
from typing import List, Optional, Tuple

import numpy as np

from .haar_sum import _as_two_by_two, _scalar_shift
from .measures import (
    FiniteNormalModel,
    OperatorModel,
    SemicircularModel,
    SpectralMeasure,
    TwoByTwoModel,
)
from .numerics import DensityGridResult, GridSpec, grid_sweep, integrate_adaptive

_V_BISECT_STEPS = 64


class CircularFlowProblem:
    """State for the circular-perturbation flow: base model, variance, nodes.

    v_sq / t_lambda are the two evaluators everything else is built from.
    Measure-given bases integrate over a fixed quadrature family of the
    spectral measure; atomic bases use exact eigenvalues of |lam - X_0|^2.
    """

    def __init__(self, x0: OperatorModel, t: float, *, nodes: int = 400):
        if t <= 0:
            raise ValueError("variance t must be positive")
        self.x0 = x0
        self.t = float(t)
        self._nodes: Optional[Tuple[np.ndarray, np.ndarray]] = None
        if not x0.has_atom_family():
            measure: SpectralMeasure = x0.measure  # type: ignore[attr-defined]
            count = 1024 if measure.is_circle else nodes
            pts, w = measure.quad_nodes(count)
            self._nodes = (np.asarray(pts, dtype=complex), np.asarray(w, dtype=float))

    def family_mu(self, lam):
        """(weights, mu): the law of |lam - X_0|^2 as a finite family."""
        lam = np.asarray(lam, dtype=complex)
        if self.x0.has_atom_family():
            w, mu, _, _ = self.x0.atom_family(lam)
            return w, mu
        pts, w = self._nodes  # type: ignore[misc]
        return w, np.abs(lam[..., None] - pts) ** 2

    def t_lambda(self, lam):
        """Flow threshold ||(lam - X_0)^{-1}||_2^{-2} (0 on sigma(X_0))."""
        inv_sq = np.asarray(self.x0.inv_norm_sq(lam), dtype=float)
        with np.errstate(divide="ignore"):
            out = np.where(np.isfinite(inv_sq), 1.0 / np.maximum(inv_sq, 1e-300), 0.0)
        return out if out.shape else float(out)

    def v_sq(self, lam, s):
        """v(s)^2, vectorized over lam (closed forms where the base allows)."""
        lam = np.asarray(lam, dtype=complex)
        s = np.asarray(s, dtype=float)
        z0 = _scalar_shift(self.x0)
        if z0 is not None:
            return np.maximum(s - np.abs(lam - z0) ** 2, 0.0)
        if isinstance(self.x0, SemicircularModel):
            return _v_sq_semicircular(self.x0.variance, lam, s)
        two = _maybe_two_by_two(self.x0)
        if two is not None:
            t_shift = np.asarray(two.shift_norm_sq(lam), dtype=float)
            det_sq = np.abs(np.asarray(two.det_shift(lam))) ** 2
            return _v_sq_two_atom(t_shift, det_sq, s)
        w, mu = self.family_mu(lam)
        return _v_sq_bisect(w, mu, s)


def _maybe_two_by_two(a: OperatorModel) -> Optional[TwoByTwoModel]:
    try:
        return _as_two_by_two(a)
    except TypeError:
        return None


def _v_sq_two_atom(t_shift, det_sq, s):
    """Positive branch of the quadratic for v^2 when mu has two equal atoms:

        v(s)^2 = (s - 2T + sqrt(s^2 + R)) / 2,   R = 4(T^2 - D);

    negative values of the branch mean s <= t_lam, clamped to 0.
    """
    big_r = 4.0 * (t_shift * t_shift - det_sq)
    v2 = 0.5 * (s - 2.0 * t_shift + np.sqrt(s * s + big_r))
    return np.maximum(v2, 0.0)


def _v_sq_semicircular(gamma, lam, s):
    """v(s)^2 = s^2/(s+g) - xi^2 s^2/(s+2g)^2 - eta^2 for the semicircle base
    (the continuation is negative below t_lam, clamped to 0; g = 0 recovers
    the scalar rule s - |lam|^2)."""
    xi = np.real(lam)
    eta = np.imag(lam)
    v2 = s * s / (s + gamma) - xi * xi * s * s / (s + 2.0 * gamma) ** 2 - eta * eta
    return np.maximum(v2, 0.0)


def _v_sq_bisect(w, mu, s):
    """Bisect g(v) = E[1/(mu + v^2)] - 1/s on v in [0, sqrt(s)].

    g decreases in v and g(sqrt(s)) <= 0 always, so when no root exists
    (g(0) <= 0, i.e. s <= t_lam) the bracket collapses onto 0 — exactly the
    flow's extension v = 0 below threshold.
    """
    s = np.asarray(s, dtype=float)
    shape = np.broadcast_shapes(mu.shape[:-1], s.shape)
    lo = np.zeros(shape)
    hi = np.sqrt(np.broadcast_to(s, shape).copy())
    inv_s = 1.0 / np.maximum(s, 1e-300)
    for _ in range(_V_BISECT_STEPS):
        mid = 0.5 * (lo + hi)
        g = np.sum(w / (mu + (mid * mid)[..., None]), axis=-1) - inv_s
        pos = g > 0.0
        lo = np.where(pos, mid, lo)
        hi = np.where(pos, hi, mid)
    v = 0.5 * (lo + hi)
    return v * v


def _as_flow_problem(obj, t: Optional[float] = None) -> CircularFlowProblem:
    if isinstance(obj, CircularFlowProblem):
        return obj
    if t is None:
        raise TypeError("a variance t is required alongside a bare model")
    return CircularFlowProblem(obj, t)


def v_of_s(problem, lam, s) -> float:
    """v(s) >= 0 for the flow at lam; 0 exactly when s <= t_lambda."""
    problem = _as_flow_problem(problem)
    if s <= 0:
        raise ValueError("s must be positive")
    v2 = problem.v_sq(np.asarray(complex(lam)), np.asarray(float(s)))
    return math.sqrt(float(v2))


def spectrum_test_circular(x0: OperatorModel, t: float, lam):
    """Membership of lam in sigma(X_0 + C_t): t ||(lam-X_0)^{-1}||_2^2 >= 1
    (sigma(X_0) itself is inside by closure — the norm is infinite there)."""
    inv_sq = np.asarray(x0.inv_norm_sq(lam), dtype=float)
    out = t * inv_sq >= 1.0
    return out if out.shape else bool(out)


# ---------------------------------------------------------------------------
# log-determinant along the flow


def _base_log_det(problem: CircularFlowProblem, lam):
    """log Delta(lam - X_0), vectorized; node sums for measure bases."""
    x0 = problem.x0
    if problem._nodes is None or isinstance(x0, SemicircularModel):
        return np.asarray(x0.log_det_shift(lam), dtype=float)
    w, mu = problem.family_mu(lam)
    return 0.5 * np.sum(w * np.log(np.maximum(mu, 1e-300)), axis=-1)


def _two_atom_log_fk(t_shift, det_sq, t):
    """Closed log Delta(lam - X_t) for a balanced two-atom |lam - X_0|^2
    family, valid where t >= t_lam = D/T; the base determinant's (1/4) log D
    cancels against the antiderivative, leaving

        (1/4) log t + T/(2t) + (1/4) log(t + W) - W/(4t) - (1/4) log 2 - 1/4,

    W = sqrt(t^2 + R), R = 4(T^2 - D).
    """
    big_r = 4.0 * (t_shift * t_shift - det_sq)
    w_root = np.sqrt(t * t + big_r)
    return (
        0.25 * math.log(t)
        + t_shift / (2.0 * t)
        + 0.25 * np.log(t + w_root)
        - w_root / (4.0 * t)
        - 0.25 * math.log(2.0)
        - 0.25
    )


def _semicircular_antiderivative(gamma, lam, s):
    """Antiderivative of v(s)^2/s^2 for the semicircle base:
    log(s+g) + xi^2/(s+2g) + eta^2/s (the eta term vanishes with eta at
    s = t_lam = 0 on the real segment)."""
    xi = np.real(lam)
    eta = np.imag(lam)
    s = np.asarray(s, dtype=float)
    eta_term = np.where(eta == 0.0, 0.0, eta * eta / np.maximum(s, 1e-300))
    return np.log(s + gamma) + xi * xi / (s + 2.0 * gamma) + eta_term


def log_fk_flow(problem, lam, *, method: str = "auto") -> float:
    """log Delta(lambda - X_t) by the determinant flow.

    method: "auto" takes the closed antiderivative when the base is scalar,
    two-atom or semicircular, else adaptive quadrature of v(s)^2/s^2;
    "quadrature" forces the numeric route (useful as a cross-check).
    Raises for lam in sigma(X_0) — the base determinant diverges there and
    the route is undefined (grids fill such cells by continuity) — except
    for scalar X_0, where the closed form is its own continuous limit.
    """
    problem = _as_flow_problem(problem)
    if method not in ("auto", "closed", "quadrature"):
        raise ValueError("method must be auto, closed or quadrature")
    lam_c = complex(lam)
    x0, t = problem.x0, problem.t

    z0 = _scalar_shift(x0)
    if z0 is not None and method != "quadrature":
        c = abs(lam_c - z0) ** 2
        if c <= t:
            return 0.5 * (math.log(t) + c / t - 1.0)
        return 0.5 * math.log(c)

    if bool(x0.in_base_spectrum(lam_c)):
        raise ValueError(
            "base-point determinant undefined by this route: lam in sigma(X0)"
        )

    t_lam = float(problem.t_lambda(lam_c))
    base = float(_base_log_det(problem, np.asarray(lam_c)))
    if t <= t_lam:
        return base

    if method != "quadrature":
        two = _maybe_two_by_two(x0)
        if two is not None:
            t_shift = float(two.shift_norm_sq(lam_c))
            det_sq = abs(complex(two.det_shift(lam_c))) ** 2
            return float(_two_atom_log_fk(t_shift, det_sq, t))
        if isinstance(x0, SemicircularModel):
            g = x0.variance
            upper = _semicircular_antiderivative(g, lam_c, t)
            lower = _semicircular_antiderivative(g, lam_c, t_lam)
            return base + 0.5 * float(upper - lower)
        if method == "closed":
            raise ValueError("no closed flow for this base model")

    arr = np.asarray(lam_c)

    def integrand(s: float) -> float:
        return float(problem.v_sq(arr, np.asarray(s))) / (s * s)

    val = integrate_adaptive(integrand, t_lam, t, tol=1e-11)
    return base + 0.5 * val


# ---------------------------------------------------------------------------
# closed densities


def density_2x2_circular(a, t: float, lam):
    """Brown density of a + C_t for 2x2 (or balanced two-atom) a, closed form.

    With R(lam) = 4(T^2 - D) = (mu_+ - mu_-)^2 and W = sqrt(t^2 + R),

        p = 1/(pi t) + (1/(4 pi t)) ( |dR|^2 / (2 W (t+W)^2) - ddR / (t+W) ),

    dR = 8(T conj(m) - conj(d) m), ddR = 8(T - |m|^2), m = lam - tau(a),
    d = det(lam - a); algebraically equal to the (t - W)/R arrangement but
    stable as R -> 0.  Zero outside the spectrum region t T >= D.
    """
    if t <= 0:
        raise ValueError("variance t must be positive")
    a = _as_two_by_two(a)
    lam = np.asarray(lam, dtype=complex)
    t_shift = np.asarray(a.shift_norm_sq(lam), dtype=float)
    d = np.asarray(a.det_shift(lam))
    det_sq = np.abs(d) ** 2
    m = lam - a.tr_mean
    big_r = 4.0 * (t_shift * t_shift - det_sq)
    w_root = np.sqrt(t * t + big_r)
    d_r = 8.0 * (t_shift * np.conj(m) - np.conj(d) * m)
    dd_r = 8.0 * (t_shift - np.abs(m) ** 2)
    p = 1.0 / (math.pi * t) + (
        np.abs(d_r) ** 2 / (2.0 * w_root * (t + w_root) ** 2) - dd_r / (t + w_root)
    ) / (4.0 * math.pi * t)
    inside = t * t_shift >= det_sq
    out = np.where(inside, p, 0.0)
    return out if out.shape else float(out)


def nilpotent_circular_radius(t: float, entry: float = 1.0) -> float:
    """Radius of the disk sigma(nilpotent + C_t): the positive root of
    r^4 = t(r^2 + entry^2/2), i.e. sqrt(t/2 + sqrt(t^2/4 + t entry^2/2))."""
    if t <= 0:
        raise ValueError("variance t must be positive")
    h = 0.5 * entry * entry
    return math.sqrt(0.5 * t + math.sqrt(0.25 * t * t + t * h))


# ---------------------------------------------------------------------------
# elliptic family S_alpha + i S_beta


def elliptic_spectrum(alpha: float, beta: float) -> Tuple[float, float]:
    """Semi-axes (real, imaginary) of the spectral ellipse of S_a + i S_b:
    (2 alpha / sqrt(alpha+beta), 2 beta / sqrt(alpha+beta))."""
    if alpha <= 0 or beta <= 0:
        raise ValueError("alpha and beta must be positive")
    root = math.sqrt(alpha + beta)
    return 2.0 * alpha / root, 2.0 * beta / root


def elliptic_density(alpha: float, beta: float, lam) -> float:
    """Constant density (1/4pi)(1/alpha + 1/beta) inside the ellipse, else 0."""
    ax_re, ax_im = elliptic_spectrum(alpha, beta)
    lam = complex(lam)
    if (lam.real / ax_re) ** 2 + (lam.imag / ax_im) ** 2 <= 1.0:
        return (1.0 / alpha + 1.0 / beta) / (4.0 * math.pi)
    return 0.0


def elliptic_boundary(alpha: float, beta: float, samples: int = 256) -> np.ndarray:
    """Boundary trace via the Zhukowski map xi -> 1/xi + gamma xi on the
    circle |xi| = 1/sqrt(alpha+beta) (equals the ellipse parametrization)."""
    if alpha < beta:
        return 1j * np.conj(elliptic_boundary(beta, alpha, samples))
    gamma = alpha - beta
    rho = 1.0 / math.sqrt(alpha + beta)
    xi = rho * np.exp(1j * np.linspace(0.0, 2.0 * math.pi, samples, endpoint=False))
    return 1.0 / xi + gamma * xi


def elliptic_log_fk(alpha: float, beta: float, lam) -> float:
    """log Delta(lambda - S_alpha - i S_beta), closed, whole plane.

    Runs the flow from S_gamma (gamma = alpha - beta >= 0) with t = 2 beta;
    alpha < beta rotates: S_a + i S_b has the distribution of i(S_b + i S_a).
    Valid by continuity on the segment sigma(S_gamma) as well.
    """
    lam = complex(lam)
    if alpha < beta:
        return elliptic_log_fk(beta, alpha, -1j * lam)
    gamma = alpha - beta
    t = 2.0 * beta
    if gamma < 1e-12:
        c = abs(lam) ** 2
        return 0.5 * (math.log(t) + c / t - 1.0) if c <= t else 0.5 * math.log(c)
    model = SemicircularModel(gamma)
    base = float(model.log_det_shift(lam))
    inv_sq = float(model.inv_norm_sq(lam))
    t_lam = 0.0 if not math.isfinite(inv_sq) else 1.0 / inv_sq
    if t <= t_lam:
        return base
    upper = _semicircular_antiderivative(gamma, lam, t)
    lower = _semicircular_antiderivative(gamma, lam, t_lam)
    return base + 0.5 * float(upper - lower)


def r_transform_abs_sq_semicircle(gamma: float, lam: complex, z: complex) -> complex:
    """R-transform of |lam - S_gamma|^2 (lam = xi + i eta):

        R(z) = gamma z / (1 - gamma z) + xi^2 z / (1 - 2 gamma z)^2 + eta^2 z.
    """
    z = complex(z)
    if abs(1.0 - gamma * z) < 1e-12 or abs(1.0 - 2.0 * gamma * z) < 1e-12:
        raise ValueError("z sits on a pole of the R-transform")
    lam = complex(lam)
    xi, eta = lam.real, lam.imag
    return (
        gamma * z / (1.0 - gamma * z)
        + xi * xi * z / (1.0 - 2.0 * gamma * z) ** 2
        + eta * eta * z
    )


# ---------------------------------------------------------------------------
# grids

_S_NODES = 48


def circular_brown_grid(problem, spec: GridSpec, *, threads: int = 1) -> DensityGridResult:
    """Density, spectrum mask and log-determinant of X_0 + C_t over a grid.

    Scalar, two-atom and semicircular bases run fully closed.  Other bases
    get log Delta by per-cell Gauss-Legendre quadrature of the flow and the
    density from a five-point Laplacian of that grid (interior cells only,
    noted in warnings) — the defining relation rather than a closed form.
    """
    problem = _as_flow_problem(problem)
    x0, t = problem.x0, problem.t
    notes: List[str] = []

    z0 = _scalar_shift(x0)
    two = _maybe_two_by_two(x0) if z0 is None else None

    if z0 is not None:
        evaluator = lambda lam: _eval_scalar(z0, t, lam)  # noqa: E731
    elif two is not None:
        evaluator = lambda lam: _eval_two_atom(two, t, lam)  # noqa: E731
    elif isinstance(x0, SemicircularModel):
        evaluator = lambda lam: _eval_semicircular(x0.variance, t, lam)  # noqa: E731
    else:
        return _general_grid(problem, spec, notes, threads)

    result = grid_sweep(evaluator, spec, threads=threads)
    if notes:
        result.warnings.extend(sorted(set(notes)))
    return result


def _eval_scalar(z0: complex, t: float, lam: np.ndarray):
    c = np.abs(lam - z0) ** 2
    inside = c <= t
    p = np.where(inside, 1.0 / (math.pi * t), 0.0)
    logd = np.where(
        inside,
        0.5 * (math.log(t) + c / t - 1.0),
        0.5 * np.log(np.maximum(c, 1e-300)),
    )
    return p, inside, logd


def _eval_two_atom(a: TwoByTwoModel, t: float, lam: np.ndarray):
    t_shift = np.asarray(a.shift_norm_sq(lam), dtype=float)
    det_sq = np.abs(np.asarray(a.det_shift(lam))) ** 2
    inside = t * t_shift >= det_sq
    p = np.where(inside, density_2x2_circular(a, t, lam), 0.0)
    logd = np.where(
        inside,
        _two_atom_log_fk(t_shift, det_sq, t),
        0.5 * np.log(np.maximum(np.sqrt(det_sq), 1e-300)),
    )
    return p, inside, logd


def _eval_semicircular(gamma: float, t: float, lam: np.ndarray):
    model = SemicircularModel(gamma)
    inv_sq = np.asarray(model.inv_norm_sq(lam), dtype=float)
    inside = t * inv_sq >= 1.0
    alpha, beta = gamma + 0.5 * t, 0.5 * t
    p = np.where(inside, (1.0 / alpha + 1.0 / beta) / (4.0 * math.pi), 0.0)
    with np.errstate(divide="ignore"):
        t_lam = np.where(np.isfinite(inv_sq), 1.0 / np.maximum(inv_sq, 1e-300), 0.0)
    t_lam = np.minimum(t_lam, t)
    base = np.asarray(model.log_det_shift(lam), dtype=float)
    upper = _semicircular_antiderivative(gamma, lam, np.full(lam.shape, t))
    lower = _semicircular_antiderivative(gamma, lam, t_lam)
    logd = base + 0.5 * np.where(t_lam < t, upper - lower, 0.0)
    return p, inside, logd


def _general_grid(
    problem: CircularFlowProblem, spec: GridSpec, notes: List[str], threads: int
) -> DensityGridResult:
    x0, t = problem.x0, problem.t
    glx, glw = np.polynomial.legendre.leggauss(_S_NODES)
    glx = 0.5 * (glx + 1.0)
    glw = 0.5 * glw

    def evaluator(lam: np.ndarray):
        hot = np.asarray(x0.in_base_spectrum(lam))
        if np.any(hot):
            # nudge exact base-spectrum centers; the flow value is continuous
            lam = np.where(hot, lam + 1e-7, lam)
            notes.append(
                f"{int(np.sum(hot))} cell(s) on sigma(X0) evaluated by continuity"
            )
        inv_sq = np.asarray(x0.inv_norm_sq(lam), dtype=float)
        inside = t * inv_sq >= 1.0
        with np.errstate(divide="ignore"):
            t_lam = np.where(np.isfinite(inv_sq), 1.0 / np.maximum(inv_sq, 1e-300), 0.0)
        t_lam = np.minimum(t_lam, t)
        span = t - t_lam
        total = np.zeros(lam.shape)
        for xk, wk in zip(glx, glw):
            s = t_lam + span * xk
            s = np.maximum(s, 1e-300)
            total += wk * problem.v_sq(lam, s) / (s * s)
        logd = _base_log_det(problem, lam) + 0.5 * span * total
        return np.zeros(lam.shape), inside, logd

    result = grid_sweep(evaluator, spec, threads=threads)
    result.density[...] = _laplacian_density(result.log_delta, result.in_spectrum, spec)
    notes.append("general-base density from grid Laplacian of log_delta (interior cells)")
    result.warnings.extend(sorted(set(notes)))
    return result


def _laplacian_density(logd: np.ndarray, mask: np.ndarray, spec: GridSpec) -> np.ndarray:
    """(1/2pi) five-point Laplacian of the potential on interior cells.

    The potential has a curvature jump across the support boundary, so the
    stencil is only trusted one cell in; the boundary ring is filled with the
    nearest interior value (the density itself extends continuously).
    """
    p = np.zeros(logd.shape)
    interior = mask.copy()
    interior[1:, :] &= mask[:-1, :]
    interior[:-1, :] &= mask[1:, :]
    interior[:, 1:] &= mask[:, :-1]
    interior[:, :-1] &= mask[:, 1:]
    interior[0, :] = interior[-1, :] = False
    interior[:, 0] = interior[:, -1] = False
    d_xx = np.zeros(logd.shape)
    d_yy = np.zeros(logd.shape)
    d_xx[:, 1:-1] = (logd[:, 2:] - 2.0 * logd[:, 1:-1] + logd[:, :-2]) / spec.re_step**2
    d_yy[1:-1, :] = (logd[2:, :] - 2.0 * logd[1:-1, :] + logd[:-2, :]) / spec.im_step**2
    p[interior] = ((d_xx + d_yy) / (2.0 * math.pi))[interior]
    p = np.maximum(p, 0.0)

    have = interior.copy()
    for _ in range(2):
        acc = np.zeros(logd.shape)
        cnt = np.zeros(logd.shape)
        for di, dj in ((1, 0), (-1, 0), (0, 1), (0, -1)):
            src_i = slice(max(di, 0), logd.shape[0] + min(di, 0))
            dst_i = slice(max(-di, 0), logd.shape[0] + min(-di, 0))
            src_j = slice(max(dj, 0), logd.shape[1] + min(dj, 0))
            dst_j = slice(max(-dj, 0), logd.shape[1] + min(-dj, 0))
            sel = have[src_i, src_j]
            acc[dst_i, dst_j][sel] += p[src_i, src_j][sel]
            cnt[dst_i, dst_j][sel] += 1.0
        ring = mask & ~have & (cnt > 0)
        p[ring] = (acc[ring] / cnt[ring])
        have |= ring
    return p

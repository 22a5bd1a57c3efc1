"""Random-matrix Monte-Carlo lab.

Finite-N matrix models for the operators treated analytically elsewhere:
Haar unitaries, Ginibre and elliptic Gaussian ensembles, fixed symmetries
and permutation powers (deterministic matrices with the right spectral
distribution, conjugated by Haar unitaries to make them free of everything
else), plus sums and scalar multiples of these.  Eigenvalue clouds sampled
from seeded, splittable RNG streams are compared against analytic density
grids by an inside-the-support fraction and, for rotation-invariant laws, a
radial Kolmogorov-Smirnov distance.
"""

from __future__ import annotations

import math
import os
import tempfile
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Optional, Tuple

import numpy as np

from .numerics import DensityGridResult

__all__ = [
    "EnsembleSpec",
    "EigenvalueCloud",
    "CloudReport",
    "ensemble_from_json",
    "sample_haar_unitary",
    "sample_model",
    "eigenvalues",
    "sample_cloud",
    "compare_cloud_to_density",
    "balayage_demo",
]

_KINDS = (
    "haar_unitary",
    "ginibre",
    "elliptic_gaussian",
    "fixed_symmetry",
    "permutation_power",
    "nilpotent_blocks",
    "unitary_law",
    "conjugated",
    "sum",
    "scaled",
)


@dataclass(frozen=True)
class EnsembleSpec:
    """A (possibly composite) random-matrix ensemble.

    Leaf kinds:
      haar_unitary(n)            Haar measure on U(n)
      ginibre(n, variance)       iid complex Gaussian entries, variance/n each
      elliptic_gaussian(n, alpha, beta)   GUE(alpha) + i GUE(beta), independent
      fixed_symmetry(n)          diag(+1 ... +1, -1 ... -1), n even
      permutation_power(n, power)  permutation with n/power cycles of length
                                 power (spectrum: power-th roots of unity)
      nilpotent_blocks(n, entry) diag of 2x2 blocks [[0, entry], [0, 0]]
      unitary_law(n, q)          diag of the Moebius images (w+q)/(1+qw) of
                                 uniform circle quantiles w
    Composite kinds:
      conjugated(inner)          U X U* with U Haar, fresh per sample
      scaled(inner, coeff)       coeff * X
      sum(parts)                 independent sum, all parts the same size
    """

    kind: str
    n: int = 0
    sample_count: int = 1
    variance: float = 1.0
    alpha: float = 1.0
    beta: float = 0.25
    power: int = 1
    entry: float = 1.0
    q: float = 0.0
    coeff: complex = 1.0 + 0.0j
    inner: Optional["EnsembleSpec"] = None
    parts: Tuple["EnsembleSpec", ...] = field(default_factory=tuple)

    def __post_init__(self):
        if self.kind not in _KINDS:
            raise ValueError(f"unknown ensemble kind {self.kind!r}")
        if self.kind in ("conjugated", "scaled"):
            if self.inner is None:
                raise ValueError(f"{self.kind} ensemble needs an inner spec")
        elif self.kind == "sum":
            if not self.parts:
                raise ValueError("sum ensemble needs at least one part")
            sizes = {p.size for p in self.parts}
            if len(sizes) != 1:
                raise ValueError("sum parts must share the matrix size")
        else:
            if self.n < 1:
                raise ValueError("matrix size must be >= 1")
        if self.kind == "fixed_symmetry" and self.n % 2:
            raise ValueError("trace-zero symmetry needs even n")
        if self.kind == "nilpotent_blocks" and self.n % 2:
            raise ValueError("nilpotent blocks need even n")
        if self.kind == "permutation_power":
            if self.power < 1 or self.n % self.power:
                raise ValueError("permutation power must divide n")
        if self.kind == "unitary_law" and not -1.0 < self.q < 1.0:
            raise ValueError("q must lie in (-1, 1)")
        if self.sample_count < 1:
            raise ValueError("sample_count must be >= 1")

    @property
    def size(self) -> int:
        if self.kind in ("conjugated", "scaled"):
            return self.inner.size
        if self.kind == "sum":
            return self.parts[0].size
        return self.n

    def to_json(self) -> dict:
        out = {"kind": self.kind, "sample_count": self.sample_count}
        if self.kind in ("conjugated", "scaled"):
            out["inner"] = self.inner.to_json()
            if self.kind == "scaled":
                out["coeff"] = [self.coeff.real, self.coeff.imag]
            return out
        if self.kind == "sum":
            out["parts"] = [p.to_json() for p in self.parts]
            return out
        out["n"] = self.n
        if self.kind == "ginibre":
            out["variance"] = self.variance
        elif self.kind == "elliptic_gaussian":
            out["alpha"] = self.alpha
            out["beta"] = self.beta
        elif self.kind == "permutation_power":
            out["power"] = self.power
        elif self.kind == "nilpotent_blocks":
            out["entry"] = self.entry
        elif self.kind == "unitary_law":
            out["q"] = self.q
        return out


def ensemble_from_json(data: dict) -> EnsembleSpec:
    kind = data.get("kind")
    count = int(data.get("sample_count", 1))
    if kind in ("conjugated", "scaled"):
        inner = ensemble_from_json(data["inner"])
        coeff = 1.0 + 0.0j
        if "coeff" in data:
            cr, ci = data["coeff"]
            coeff = complex(cr, ci)
        return EnsembleSpec(kind=kind, sample_count=count, inner=inner, coeff=coeff)
    if kind == "sum":
        parts = tuple(ensemble_from_json(p) for p in data["parts"])
        return EnsembleSpec(kind="sum", sample_count=count, parts=parts)
    return EnsembleSpec(
        kind=kind,
        n=int(data["n"]),
        sample_count=count,
        variance=float(data.get("variance", 1.0)),
        alpha=float(data.get("alpha", 1.0)),
        beta=float(data.get("beta", 0.25)),
        power=int(data.get("power", 1)),
        entry=float(data.get("entry", 1.0)),
        q=float(data.get("q", 0.0)),
    )


def sample_haar_unitary(n: int, rng: np.random.Generator) -> np.ndarray:
    """Haar-distributed unitary via QR with phase-normalized R diagonal."""
    g = rng.standard_normal((n, n)) + 1j * rng.standard_normal((n, n))
    q, r = np.linalg.qr(g / math.sqrt(2.0))
    d = np.diagonal(r)
    return q * (d / np.abs(d))[None, :]


def _gue(n: int, variance: float, rng: np.random.Generator) -> np.ndarray:
    """Hermitian Gaussian with semicircle limit of the given variance."""
    g = rng.standard_normal((n, n)) + 1j * rng.standard_normal((n, n))
    h = (g + g.conj().T) / 2.0
    return h * math.sqrt(variance / n)


def sample_model(spec: EnsembleSpec, rng: np.random.Generator) -> np.ndarray:
    """One matrix sample of the ensemble, drawn from the given stream."""
    kind = spec.kind
    n = spec.size
    if kind == "haar_unitary":
        return sample_haar_unitary(n, rng)
    if kind == "ginibre":
        g = rng.standard_normal((n, n)) + 1j * rng.standard_normal((n, n))
        return g * math.sqrt(spec.variance / (2.0 * n))
    if kind == "elliptic_gaussian":
        return _gue(n, spec.alpha, rng) + 1j * _gue(n, spec.beta, rng)
    if kind == "fixed_symmetry":
        return np.diag(np.repeat([1.0 + 0.0j, -1.0 + 0.0j], n // 2))
    if kind == "permutation_power":
        p = spec.power
        perm = np.arange(n)
        perm = (perm // p) * p + (perm % p + 1) % p
        mat = np.zeros((n, n), dtype=complex)
        mat[perm, np.arange(n)] = 1.0
        return mat
    if kind == "nilpotent_blocks":
        mat = np.zeros((n, n), dtype=complex)
        idx = np.arange(0, n, 2)
        mat[idx, idx + 1] = spec.entry
        return mat
    if kind == "unitary_law":
        theta = (np.arange(n) + 0.5) * (2.0 * math.pi / n)
        w = np.exp(1j * theta)
        return np.diag((w + spec.q) / (1.0 + spec.q * w))
    if kind == "conjugated":
        u = sample_haar_unitary(n, rng)
        return u @ sample_model(spec.inner, rng) @ u.conj().T
    if kind == "scaled":
        return spec.coeff * sample_model(spec.inner, rng)
    if kind == "sum":
        total = sample_model(spec.parts[0], rng)
        for part in spec.parts[1:]:
            total = total + sample_model(part, rng)
        return total
    raise ValueError(f"unknown ensemble kind {kind!r}")


def eigenvalues(matrix, *, check_residual: bool = True) -> np.ndarray:
    """All eigenvalues of a square matrix (dense nonsymmetric solve).

    Residuals ||A v - lam v|| are spot-checked on three eigenpairs against
    1e-8 * ||A||_F; on eigensolver failure the matrix is dumped to a .npy
    file and the error message carries the path.
    """
    a = np.asarray(matrix, dtype=complex)
    if a.ndim != 2 or a.shape[0] != a.shape[1]:
        raise ValueError("need a square matrix")
    if not np.all(np.isfinite(a)):
        raise ValueError("matrix entries must be finite")
    try:
        vals, vecs = np.linalg.eig(a)
    except np.linalg.LinAlgError as exc:
        fd, path = tempfile.mkstemp(suffix=".npy", prefix="eig-fail-")
        os.close(fd)
        np.save(path, a)
        raise ArithmeticError(f"eigensolve did not converge; matrix dumped to {path}") from exc
    if check_residual and a.shape[0] > 0:
        scale = max(float(np.linalg.norm(a)), 1e-300)
        n = a.shape[0]
        for k in (0, n // 2, n - 1):
            res = float(np.linalg.norm(a @ vecs[:, k] - vals[k] * vecs[:, k]))
            if res > 1e-8 * scale:
                fd, path = tempfile.mkstemp(suffix=".npy", prefix="eig-fail-")
                os.close(fd)
                np.save(path, a)
                raise ArithmeticError(
                    f"eigenpair residual {res:.3e} exceeds 1e-8 * ||A||; "
                    f"matrix dumped to {path}"
                )
    return vals


@dataclass(frozen=True)
class EigenvalueCloud:
    """Eigenvalues of `sample_count` draws from one ensemble.

    values[k] holds the eigenvalues of draw k; the cloud is reproducible
    bit-for-bit from (ensemble, seed).
    """

    values: np.ndarray
    ensemble: dict
    seed: int

    @property
    def n(self) -> int:
        return self.values.shape[1]

    @property
    def sample_count(self) -> int:
        return self.values.shape[0]

    @property
    def flat(self) -> np.ndarray:
        return self.values.reshape(-1)

    def csv(self) -> str:
        lines = ["sample_index,re,im"]
        for k in range(self.sample_count):
            for z in self.values[k]:
                lines.append(f"{k},{z.real:.12g},{z.imag:.12g}")
        return "\n".join(lines) + "\n"


def sample_cloud(spec: EnsembleSpec, seed: int, *, threads: int = 1) -> EigenvalueCloud:
    """Eigenvalue cloud of spec.sample_count draws, split off one seed.

    Each draw gets its own child of SeedSequence(seed), so the cloud does
    not depend on execution order or thread count.
    """
    children = np.random.SeedSequence(seed).spawn(spec.sample_count)

    def one(k: int) -> np.ndarray:
        rng = np.random.default_rng(children[k])
        return eigenvalues(sample_model(spec, rng))

    values = np.empty((spec.sample_count, spec.size), dtype=complex)
    if threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            for k, vals in enumerate(pool.map(one, range(spec.sample_count))):
                values[k] = vals
    else:
        for k in range(spec.sample_count):
            values[k] = one(k)
    return EigenvalueCloud(values=values, ensemble=spec.to_json(), seed=seed)


@dataclass(frozen=True)
class CloudReport:
    """Cloud-versus-grid agreement summary."""

    total: int
    inside: int
    inside_fraction: float
    ks_radial: Optional[float] = None


def _dilate(mask: np.ndarray) -> np.ndarray:
    out = mask.copy()
    out[1:, :] |= mask[:-1, :]
    out[:-1, :] |= mask[1:, :]
    out[:, 1:] |= mask[:, :-1]
    out[:, :-1] |= mask[:, 1:]
    out[1:, 1:] |= mask[:-1, :-1]
    out[1:, :-1] |= mask[:-1, 1:]
    out[:-1, 1:] |= mask[1:, :-1]
    out[:-1, :-1] |= mask[1:, 1:]
    return out


def compare_cloud_to_density(
    cloud: EigenvalueCloud, grid: DensityGridResult, *, radial: bool = False
) -> CloudReport:
    """Fraction of eigenvalues inside the grid's support mask (dilated by
    one cell), plus a radial KS distance for rotation-invariant laws.

    The radial comparison normalizes the grid mass to 1, so it measures
    shape agreement, not the grid's own quadrature defect.
    """
    spec = grid.spec
    mask = _dilate(grid.in_spectrum)
    pts = cloud.flat
    cols = np.floor((pts.real - spec.re_min) / spec.re_step).astype(int)
    rows = np.floor((pts.imag - spec.im_min) / spec.im_step).astype(int)
    in_window = (
        (cols >= 0) & (cols < spec.re_steps) & (rows >= 0) & (rows < spec.im_steps)
    )
    inside = np.zeros(pts.shape, dtype=bool)
    inside[in_window] = mask[rows[in_window], cols[in_window]]
    report_ks: Optional[float] = None
    if radial:
        centers = spec.mesh()
        r_cells = np.abs(centers).reshape(-1)
        masses = (grid.density * spec.cell_area).reshape(-1)
        order = np.argsort(r_cells)
        r_sorted = r_cells[order]
        cdf = np.cumsum(masses[order])
        total_mass = cdf[-1]
        if total_mass <= 0:
            raise ValueError("grid carries no mass; radial comparison undefined")
        cdf = cdf / total_mass
        r_emp = np.sort(np.abs(pts))
        f_grid = np.interp(r_emp, r_sorted, cdf, left=0.0, right=1.0)
        k = pts.size
        f_emp_hi = np.arange(1, k + 1) / k
        f_emp_lo = np.arange(0, k) / k
        report_ks = float(
            max(np.max(np.abs(f_emp_hi - f_grid)), np.max(np.abs(f_grid - f_emp_lo)))
        )
    return CloudReport(
        total=int(pts.size),
        inside=int(inside.sum()),
        inside_fraction=float(inside.mean()) if pts.size else 0.0,
        ks_radial=report_ks,
    )


def balayage_demo(n: int = 64) -> dict:
    """Eigenvalue counting does not converge to the Brown measure.

    The n x n Jordan block J_n has every eigenvalue at 0, for every n, yet
    its *-moments converge to those of a Haar unitary, whose Brown measure
    is the uniform measure on the unit circle.  This is the standard
    demonstration that empirical spectra of non-normal matrices can stay
    far from the limiting Brown measure; shipped as a demo only, since
    there is nothing quantitative to assert beyond "the cloud is at 0".
    """
    jordan = np.eye(n, k=1).astype(complex)
    vals = eigenvalues(jordan)
    return {
        "n": n,
        "eigenvalues": vals,
        "max_abs_eigenvalue": float(np.max(np.abs(vals))),
        "limit_support": "unit circle (Haar unitary)",
        "note": "finite-n clouds sit at 0 while the limiting Brown measure "
        "is uniform on |z| = 1; no weak convergence of eigenvalue counting.",
    }

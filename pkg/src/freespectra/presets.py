"""Named problem presets wiring models, windows, and matrix ensembles.

Each preset bundles an analytic problem (Haar-sum or circular-flow), a
default grid window sized from closed-form support radii, and the matching
finite-N matrix ensemble for Monte-Carlo comparison.  The two
"examples"-type presets (cross sum and eigenvalue enclosure) have singular
or merely-enclosing output and expose no density grid.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Optional, Tuple

from .circular_sum import CircularFlowProblem, elliptic_spectrum, nilpotent_circular_radius
from .haar_sum import HaarSumProblem
from .measures import (
    AtomicMeasure,
    FiniteNormalModel,
    NormalSelfAdjointModel,
    NormalUnitaryModel,
    ArcsineMeasure,
    PoissonKernelMeasure,
    SemicircularModel,
    SpectralMeasure,
    nilpotent_model,
    roots_of_unity_model,
    symmetry_model,
)
from .rmt_lab import EnsembleSpec

__all__ = ["PRESET_NAMES", "ResolvedPreset", "resolve_preset", "ensemble_for_preset"]

PRESET_NAMES = (
    "u2+haar",
    "u3+haar",
    "arcsine+haar",
    "poisson-q+haar",
    "symmetry+circular",
    "nilpotent+circular",
    "elliptic",
    "cross-u2v2",
    "enclosure-u2u3",
)

_WINDOW_PAD = 1.08


@dataclass(frozen=True)
class ResolvedPreset:
    """A preset with its parameters filled in.

    pipeline is "haar", "circular" or "examples"; problem is the matching
    pipeline object (None for examples presets); window is
    (re_min, re_max, im_min, im_max) for grid artifacts; base_measure is the
    law used by the transforms table (None when there is no natural one).
    """

    name: str
    pipeline: str
    problem: Optional[object]
    window: Optional[Tuple[float, float, float, float]]
    base_measure: Optional[SpectralMeasure]
    params: dict = field(default_factory=dict)
    example_kind: Optional[str] = None  # "legs" | "enclosure"


def _square(half: float) -> Tuple[float, float, float, float]:
    return (-half, half, -half, half)


def _symmetry_circular_halfwidth(t: float) -> float:
    # real-axis support edge of u2 + c_t: (x^2-1)^2 = t(x^2+1)
    b = 2.0 + t
    x_sq = 0.5 * (b + math.sqrt(b * b - 4.0 * (1.0 - t)))
    return math.sqrt(x_sq) * _WINDOW_PAD


def resolve_preset(
    name: str,
    *,
    t: Optional[float] = None,
    alpha: Optional[float] = None,
    beta: Optional[float] = None,
    q: Optional[float] = None,
) -> ResolvedPreset:
    """Instantiate a named preset, applying flag overrides where they apply."""
    if name not in PRESET_NAMES:
        raise ValueError(f"unknown preset {name!r}; choose from {', '.join(PRESET_NAMES)}")

    if name == "u2+haar":
        a = symmetry_model()
        return ResolvedPreset(name, "haar", HaarSumProblem(a), _square(2.0), a.measure)
    if name == "u3+haar":
        a = roots_of_unity_model(3)
        return ResolvedPreset(name, "haar", HaarSumProblem(a), _square(2.0), a.measure)
    if name == "arcsine+haar":
        a = NormalSelfAdjointModel(ArcsineMeasure())
        return ResolvedPreset(
            name, "haar", HaarSumProblem(a), (-3.0, 3.0, -1.0, 1.0), a.measure
        )
    if name == "poisson-q+haar":
        qv = 0.5 if q is None else float(q)
        a = NormalUnitaryModel(PoissonKernelMeasure(qv))
        return ResolvedPreset(
            name, "haar", HaarSumProblem(a), _square(2.2), a.measure, {"q": qv}
        )

    if name == "symmetry+circular":
        tv = 1.0 if t is None else float(t)
        x0 = symmetry_model()
        half = _symmetry_circular_halfwidth(tv)
        return ResolvedPreset(
            name,
            "circular",
            CircularFlowProblem(x0, tv),
            _square(half),
            x0.measure,
            {"t": tv},
        )
    if name == "nilpotent+circular":
        tv = 1.0 if t is None else float(t)
        x0 = nilpotent_model(1.0)
        half = nilpotent_circular_radius(tv) * _WINDOW_PAD
        radial = AtomicMeasure([0.0, 1.0], [0.5, 0.5])  # law of |x0|^2
        return ResolvedPreset(
            name,
            "circular",
            CircularFlowProblem(x0, tv),
            _square(half),
            radial,
            {"t": tv},
        )
    if name == "elliptic":
        av = 1.0 if alpha is None else float(alpha)
        bv = 0.25 if beta is None else float(beta)
        if not av >= bv > 0.0:
            raise ValueError(
                "elliptic preset needs alpha >= beta > 0 "
                "(for alpha < beta, swap them; the support rotates by 90 degrees)"
            )
        gamma = av - bv
        x0 = SemicircularModel(gamma) if gamma > 0 else FiniteNormalModel([0.0])
        axis_re, axis_im = elliptic_spectrum(av, bv)
        window = (
            -axis_re * _WINDOW_PAD,
            axis_re * _WINDOW_PAD,
            -axis_im * _WINDOW_PAD,
            axis_im * _WINDOW_PAD,
        )
        return ResolvedPreset(
            name,
            "circular",
            CircularFlowProblem(x0, 2.0 * bv),
            window,
            x0.measure if gamma > 0 else None,
            {"alpha": av, "beta": bv},
        )

    if name == "cross-u2v2":
        av = 1.0 if alpha is None else float(alpha)
        bv = complex(0.0, 1.0) if beta is None else complex(beta)
        return ResolvedPreset(
            name,
            "examples",
            None,
            None,
            ArcsineMeasure(),
            {"alpha": av, "beta": bv},
            example_kind="legs",
        )
    # enclosure-u2u3
    return ResolvedPreset(
        name, "examples", None, None, None, {}, example_kind="enclosure"
    )


def _conjugated(inner: EnsembleSpec) -> EnsembleSpec:
    return EnsembleSpec(kind="conjugated", inner=inner)


def ensemble_for_preset(
    name: str,
    *,
    n: int,
    samples: int,
    t: Optional[float] = None,
    alpha: Optional[float] = None,
    beta: Optional[float] = None,
    q: Optional[float] = None,
) -> EnsembleSpec:
    """Finite-N matrix ensemble matching a preset's limiting operator."""
    if name not in PRESET_NAMES:
        raise ValueError(f"unknown preset {name!r}; choose from {', '.join(PRESET_NAMES)}")
    tv = 1.0 if t is None else float(t)
    av = 1.0 if alpha is None else float(alpha)
    bv = 0.25 if beta is None else float(beta)
    qv = 0.5 if q is None else float(q)

    # built lazily: the even-n constraint only applies where a symmetry is used
    sym = lambda: EnsembleSpec(kind="fixed_symmetry", n=n)  # noqa: E731
    haar = EnsembleSpec(kind="haar_unitary", n=n)
    if name == "u2+haar":
        parts = (_conjugated(sym()), haar)
    elif name == "u3+haar":
        parts = (_conjugated(EnsembleSpec(kind="permutation_power", n=n, power=3)), haar)
    elif name == "arcsine+haar":
        parts = (_conjugated(sym()), _conjugated(sym()), haar)
    elif name == "poisson-q+haar":
        parts = (_conjugated(EnsembleSpec(kind="unitary_law", n=n, q=qv)), haar)
    elif name == "symmetry+circular":
        parts = (_conjugated(sym()), EnsembleSpec(kind="ginibre", n=n, variance=tv))
    elif name == "nilpotent+circular":
        parts = (
            _conjugated(EnsembleSpec(kind="nilpotent_blocks", n=n)),
            EnsembleSpec(kind="ginibre", n=n, variance=tv),
        )
    elif name == "elliptic":
        return EnsembleSpec(
            kind="elliptic_gaussian", n=n, sample_count=samples, alpha=av, beta=bv
        )
    elif name == "cross-u2v2":
        parts = (
            EnsembleSpec(kind="scaled", coeff=complex(av), inner=_conjugated(sym())),
            EnsembleSpec(
                kind="scaled",
                coeff=complex(0.0, 1.0) if beta is None else complex(beta),
                inner=_conjugated(sym()),
            ),
        )
    else:  # enclosure-u2u3
        parts = (
            _conjugated(sym()),
            _conjugated(EnsembleSpec(kind="permutation_power", n=n, power=3)),
        )
    return EnsembleSpec(kind="sum", sample_count=samples, parts=parts)

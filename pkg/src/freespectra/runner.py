"""Run engine behind the CLI and the HTTP service.

Resolves a run configuration (named preset or inline JSON model) into one of
five artifact computations -- density, spectrum, mc, transforms, examples --
and returns the artifacts as named CSV strings plus a JSON-able manifest.

Error taxonomy: bad configuration (unknown preset, malformed model JSON,
flags that do not apply) raises UsageError; a computation that completes but
violates a numerical contract (density below -1e-8) raises
ValidationFailure.  The CLI maps these to exit codes 2 and 3.
"""

from __future__ import annotations

import json
import math
import time
from dataclasses import dataclass, field
from typing import Dict, List, Optional, Tuple

import numpy as np

from . import __version__
from .circular_sum import (
    CircularFlowProblem,
    circular_brown_grid,
    spectrum_test_circular,
)
from .examples_misc import (
    enclosure_csv,
    leg_curve_csv,
    symmetry_sum_spectrum,
    unitary_enclosure_region,
)
from .haar_sum import HaarSumProblem, brown_grid, spectrum_test, _scalar_shift
from .measures import (
    model_from_json,
    moment_series,
    r_transform,
    s_transform,
)
from .numerics import DensityGridResult, GridSpec, extract_boundary
from .presets import PRESET_NAMES, ResolvedPreset, ensemble_for_preset, resolve_preset
from .rdiagonal import circular_determining_series, determining_series
from .rmt_lab import EnsembleSpec, ensemble_from_json, sample_cloud

__all__ = [
    "RunConfig",
    "RunResult",
    "UsageError",
    "ValidationFailure",
    "compute",
    "run",
]

_SUBCOMMANDS = ("density", "spectrum", "mc", "transforms", "examples")
_NEG_DENSITY_TOL = 1e-8
_SERIES_ORDER = 8


class UsageError(ValueError):
    """Configuration is invalid (unknown preset, bad model, wrong flags)."""


class ValidationFailure(RuntimeError):
    """The computation ran but violated a numerical validation contract."""


@dataclass(frozen=True)
class RunConfig:
    subcommand: str
    preset: Optional[str] = None
    model: Optional[dict] = None
    grid: Optional[int] = None
    re_window: Optional[Tuple[float, float, int]] = None
    im_window: Optional[Tuple[float, float, int]] = None
    t: Optional[float] = None
    alpha: Optional[float] = None
    beta: Optional[float] = None
    q: Optional[float] = None
    n: int = 150
    samples: int = 200
    seed: int = 1
    threads: int = 1

    def to_json(self) -> dict:
        out = {
            "subcommand": self.subcommand,
            "seed": self.seed,
            "threads": self.threads,
            "version": __version__,
        }
        if self.preset is not None:
            out["preset"] = self.preset
        if self.model is not None:
            out["model"] = self.model
        if self.grid is not None:
            out["grid"] = self.grid
        if self.re_window is not None:
            out["re_window"] = list(self.re_window)
        if self.im_window is not None:
            out["im_window"] = list(self.im_window)
        for key in ("t", "alpha", "beta", "q"):
            val = getattr(self, key)
            if val is not None:
                out[key] = val
        if self.subcommand == "mc":
            out["n"] = self.n
            out["samples"] = self.samples
        return out


@dataclass
class RunResult:
    files: Dict[str, str]
    manifest: dict = field(default_factory=dict)


def _resolve(config: RunConfig) -> ResolvedPreset:
    """Preset or inline model -> ResolvedPreset (non-mc subcommands)."""
    if (config.preset is None) == (config.model is None):
        raise UsageError("provide exactly one of preset or model")
    if config.preset is not None:
        try:
            return resolve_preset(
                config.preset, t=config.t, alpha=config.alpha, beta=config.beta, q=config.q
            )
        except ValueError as exc:
            raise UsageError(str(exc)) from exc
    try:
        model = model_from_json(config.model)
    except (KeyError, ValueError, TypeError) as exc:
        raise UsageError(f"bad model JSON: {exc}") from exc
    measure = getattr(model, "measure", None)
    if config.t is not None:
        problem = CircularFlowProblem(model, float(config.t))
        return ResolvedPreset(
            "model+circular", "circular", problem, None, measure, {"t": config.t}
        )
    return ResolvedPreset("model+haar", "haar", HaarSumProblem(model), None, measure)


def _grid_spec(config: RunConfig, resolved: ResolvedPreset) -> GridSpec:
    if config.re_window is not None or config.im_window is not None:
        if config.re_window is None or config.im_window is None:
            raise UsageError("window overrides need both re and im ranges")
        (re_min, re_max, re_steps) = config.re_window
        (im_min, im_max, im_steps) = config.im_window
        try:
            return GridSpec(re_min, re_max, int(re_steps), im_min, im_max, int(im_steps))
        except ValueError as exc:
            raise UsageError(str(exc)) from exc
    steps = 400 if config.grid is None else int(config.grid)
    if steps < 2:
        raise UsageError("grid needs at least 2 steps per axis")
    window = resolved.window
    if window is None:
        model = getattr(resolved.problem, "a", None) or getattr(resolved.problem, "x0", None)
        radius, imag = model.window_hint()
        if resolved.pipeline == "circular":
            extra = 2.0 * math.sqrt(resolved.problem.t)
            radius = radius - 1.3 + extra + 0.3  # hint assumes the +u pipeline
            imag = radius
        window = (-radius, radius, -imag, imag)
    re_min, re_max, im_min, im_max = window
    return GridSpec(re_min, re_max, steps, im_min, im_max, steps)


def _grid_csv(result: DensityGridResult) -> str:
    spec = result.spec
    mesh = spec.mesh()
    lines = ["re,im,density,in_spectrum,log_delta"]
    dens = result.density
    mask = result.in_spectrum
    logd = result.log_delta
    for i in range(spec.im_steps):
        for j in range(spec.re_steps):
            z = mesh[i, j]
            lines.append(
                f"{z.real:.12g},{z.imag:.12g},{dens[i, j]:.12g},"
                f"{int(mask[i, j])},{logd[i, j]:.12g}"
            )
    return "\n".join(lines) + "\n"


def _polyline_csv(polylines: List[List[Tuple[float, float]]]) -> str:
    lines = ["part,re,im"]
    for part, poly in enumerate(polylines):
        for re, im in poly:
            lines.append(f"{part},{re:.12g},{im:.12g}")
    return "\n".join(lines) + "\n"


def _compute_density(config: RunConfig) -> RunResult:
    resolved = _resolve(config)
    if resolved.pipeline == "examples":
        raise UsageError(
            f"preset {resolved.name!r} has no 2-d density grid; use the examples subcommand"
        )
    spec = _grid_spec(config, resolved)
    try:
        if resolved.pipeline == "haar":
            grid = brown_grid(resolved.problem, spec, threads=config.threads)
        else:
            grid = circular_brown_grid(resolved.problem, spec, threads=config.threads)
    except ValueError as exc:
        raise ValidationFailure(str(exc)) from exc
    min_density = float(grid.density.min())
    if min_density < -_NEG_DENSITY_TOL:
        raise ValidationFailure(
            f"density dips to {min_density:.3e}, below the -1e-8 tolerance"
        )
    mass = float(grid.density.sum() * spec.cell_area)
    return RunResult(
        files={"density.csv": _grid_csv(grid)},
        manifest={"mass": mass, "warnings": list(grid.warnings)},
    )


def _spectrum_field(resolved: ResolvedPreset, spec: GridSpec) -> np.ndarray:
    """Continuous field whose zero level set is the support boundary.

    Both membership tests are conjunctions of ">= 1" statistics, so
    min(stats) - 1 changes sign exactly on the boundary; the inverse-norm
    statistic is clipped because it diverges on sigma(X0)."""
    lam = spec.mesh()
    problem = resolved.problem
    if resolved.pipeline == "haar":
        t_stat = np.asarray(problem.a.shift_norm_sq(lam), dtype=float)
        i_stat = np.asarray(problem.a.inv_norm_sq(lam), dtype=float)
        return np.minimum(t_stat, np.minimum(i_stat, 4.0)) - 1.0
    i_stat = np.asarray(problem.x0.inv_norm_sq(lam), dtype=float)
    return problem.t * np.minimum(i_stat, 1e6) - 1.0


def _compute_spectrum(config: RunConfig) -> RunResult:
    resolved = _resolve(config)
    if resolved.example_kind == "enclosure":
        raise UsageError(
            "the u2+u3 region is an eigenvalue enclosure, not a spectrum; "
            "use the examples subcommand"
        )
    if resolved.example_kind == "legs":
        cross = symmetry_sum_spectrum(
            resolved.params["alpha"], resolved.params["beta"]
        )
        tgrid = np.linspace(-2.0, 2.0, 401)
        polylines = []
        for sign in (+1, -1):
            pts = cross.leg(tgrid, sign)
            polylines.append([(float(z.real), float(z.imag)) for z in pts])
        return RunResult(
            files={"spectrum.csv": _polyline_csv(polylines)},
            manifest={"mass": None, "warnings": []},
        )
    spec = _grid_spec(config, resolved)
    model = getattr(resolved.problem, "a", None) or getattr(resolved.problem, "x0", None)
    scalar = _scalar_shift(model)
    if resolved.pipeline == "haar" and scalar is not None:
        # a + u for scalar a: the spectrum is the unit circle around the atom
        theta = np.linspace(0.0, 2.0 * math.pi, 721)
        circle = scalar + np.exp(1j * theta)
        polylines = [[(float(z.real), float(z.imag)) for z in circle]]
        return RunResult(
            files={"spectrum.csv": _polyline_csv(polylines)},
            manifest={"mass": None, "warnings": []},
        )
    field = _spectrum_field(resolved, spec)
    polylines = extract_boundary(field, spec)
    return RunResult(
        files={"spectrum.csv": _polyline_csv(polylines)},
        manifest={"mass": None, "warnings": []},
    )


def _compute_mc(config: RunConfig) -> RunResult:
    if (config.preset is None) == (config.model is None):
        raise UsageError("provide exactly one of preset or model")
    if config.preset is not None:
        try:
            spec = ensemble_for_preset(
                config.preset,
                n=config.n,
                samples=config.samples,
                t=config.t,
                alpha=config.alpha,
                beta=config.beta,
                q=config.q,
            )
        except ValueError as exc:
            raise UsageError(str(exc)) from exc
    else:
        try:
            spec = ensemble_from_json(config.model)
        except (KeyError, ValueError, TypeError) as exc:
            raise UsageError(f"bad ensemble JSON: {exc}") from exc
        if spec.sample_count == 1 and config.samples != 1:
            spec = ensemble_from_json({**config.model, "sample_count": config.samples})
    cloud = sample_cloud(spec, config.seed, threads=config.threads)
    return RunResult(
        files={"eigenvalues.csv": cloud.csv()},
        manifest={
            "mass": None,
            "warnings": [],
            "eigenvalue_count": int(cloud.values.size),
            "ensemble": spec.to_json(),
        },
    )


def _series_rows(name: str, series, rows: List[str]) -> None:
    for k, c in enumerate(series.coeffs):
        rows.append(f"{name},{k},{c.real:.12g},{c.imag:.12g}")


def _compute_transforms(config: RunConfig) -> RunResult:
    resolved = _resolve(config)
    measure = resolved.base_measure
    if measure is None:
        raise UsageError(
            f"preset {resolved.name!r} has no base law to expand; "
            "transforms needs a measure-backed model"
        )
    rows = ["series,k,re,im"]
    warnings: List[str] = []
    _series_rows("moments", moment_series(measure, _SERIES_ORDER), rows)
    for name, fn in (("r", r_transform), ("s", s_transform)):
        try:
            _series_rows(name, fn(measure, _SERIES_ORDER), rows)
        except (ValueError, ZeroDivisionError) as exc:
            warnings.append(f"{name}-transform skipped: {exc}")
    if _is_nonnegative(measure):
        try:
            _series_rows("f", determining_series(measure, _SERIES_ORDER), rows)
        except (ValueError, ZeroDivisionError) as exc:
            warnings.append(f"determining series skipped: {exc}")
    if resolved.pipeline == "circular":
        t = resolved.params.get("t") or getattr(resolved.problem, "t", None)
        if t:
            _series_rows("f_circular", circular_determining_series(float(t), _SERIES_ORDER), rows)
    return RunResult(
        files={"transforms.csv": "\n".join(rows) + "\n"},
        manifest={"mass": None, "warnings": warnings},
    )


def _is_nonnegative(measure) -> bool:
    """True when the law lives on [0, inf) (usable as an h^2 law)."""
    support = measure.support()
    if isinstance(support, str):  # "circle" or "discrete" (complex atoms)
        return False
    lo, _hi = support
    return lo >= -1e-12


def _compute_examples(config: RunConfig) -> RunResult:
    if config.preset is None:
        raise UsageError("the examples subcommand takes a preset (cross-u2v2 or enclosure-u2u3)")
    try:
        resolved = resolve_preset(
            config.preset, t=config.t, alpha=config.alpha, beta=config.beta, q=config.q
        )
    except ValueError as exc:
        raise UsageError(str(exc)) from exc
    if resolved.example_kind == "legs":
        alpha = resolved.params["alpha"]
        beta = resolved.params["beta"]
        csv = leg_curve_csv(alpha, beta)
        label = symmetry_sum_spectrum(alpha, beta).density_label
        return RunResult(
            files={"examples.csv": csv},
            manifest={"mass": None, "warnings": [], "label": label},
        )
    if resolved.example_kind == "enclosure":
        roots = [complex(math.cos(2 * math.pi * k / 3), math.sin(2 * math.pi * k / 3)) for k in range(3)]
        region = unitary_enclosure_region(roots)
        return RunResult(
            files={"examples.csv": enclosure_csv(region)},
            manifest={"mass": None, "warnings": [], "label": "enclosure"},
        )
    raise UsageError(
        f"preset {resolved.name!r} has no examples artifact; "
        "use density/spectrum/mc/transforms"
    )


def compute(config: RunConfig) -> RunResult:
    """Produce the artifacts for one run; raises UsageError/ValidationFailure."""
    if config.subcommand not in _SUBCOMMANDS:
        raise UsageError(f"unknown subcommand {config.subcommand!r}")
    if config.threads < 1:
        raise UsageError("threads must be >= 1")
    started = time.monotonic()
    if config.subcommand == "density":
        result = _compute_density(config)
    elif config.subcommand == "spectrum":
        result = _compute_spectrum(config)
    elif config.subcommand == "mc":
        result = _compute_mc(config)
    elif config.subcommand == "transforms":
        result = _compute_transforms(config)
    else:
        result = _compute_examples(config)
    elapsed_ms = int(round((time.monotonic() - started) * 1000.0))
    manifest = {
        "config": config.to_json(),
        "mass": result.manifest.get("mass"),
        "runtime_ms": elapsed_ms,
        "warnings": result.manifest.get("warnings", []),
    }
    for key, val in result.manifest.items():
        if key not in manifest:
            manifest[key] = val
    result.manifest = manifest
    return result


def run(config: RunConfig, out_dir: str) -> int:
    """Compute and write artifacts + manifest.json into out_dir.

    Returns the process exit code: 0 success, 2 usage error, 3 numerical
    validation failure.  Artifact CSVs are byte-identical across runs with
    the same config and seed; manifest.json differs in runtime_ms only.
    """
    import os
    import sys

    try:
        result = compute(config)
    except UsageError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except ValidationFailure as exc:
        print(f"validation failure: {exc}", file=sys.stderr)
        return 3
    os.makedirs(out_dir, exist_ok=True)
    for name, text in result.files.items():
        with open(os.path.join(out_dir, name), "w") as fh:
            fh.write(text)
    with open(os.path.join(out_dir, "manifest.json"), "w") as fh:
        json.dump(result.manifest, fh, indent=2, sort_keys=True)
        fh.write("\n")
    return 0

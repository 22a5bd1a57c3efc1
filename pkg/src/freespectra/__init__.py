"""Numerics for spectra and Brown measures of free non-normal operators.

Core pipelines:

* ``haar_sum``      a + u for a free Haar unitary u (subordination solve)
* ``circular_sum``  X0 + c_t for a free circular element (determinant flow)
* ``rdiagonal``     R-diagonal machinery (radial laws, determining series)
* ``examples_misc`` cross sums of symmetries, eigenvalue enclosures
* ``rmt_lab``       finite-N matrix ensembles and cloud comparisons

The CLI (``freespectra``) and the HTTP service under ``service/`` wrap the
run engine in ``runner``; see README for artifact schemas.
"""

__version__ = "0.1.0"

from .measures import (
    ArcsineMeasure,
    AtomicMeasure,
    FiniteNormalModel,
    NormalSelfAdjointModel,
    NormalUnitaryModel,
    PoissonKernelMeasure,
    QuarterCircleMeasure,
    SemicircleMeasure,
    SemicircularModel,
    SpectralMeasure,
    TwoByTwoModel,
    ZeroModel,
    model_from_json,
    model_to_json,
    nilpotent_model,
    roots_of_unity_model,
    symmetry_model,
)
from .numerics import GridSpec, DensityGridResult
from .haar_sum import HaarSumProblem, brown_grid
from .circular_sum import CircularFlowProblem, circular_brown_grid

__all__ = [
    "__version__",
    "ArcsineMeasure",
    "AtomicMeasure",
    "FiniteNormalModel",
    "NormalSelfAdjointModel",
    "NormalUnitaryModel",
    "PoissonKernelMeasure",
    "QuarterCircleMeasure",
    "SemicircleMeasure",
    "SemicircularModel",
    "SpectralMeasure",
    "TwoByTwoModel",
    "ZeroModel",
    "model_from_json",
    "model_to_json",
    "nilpotent_model",
    "roots_of_unity_model",
    "symmetry_model",
    "GridSpec",
    "DensityGridResult",
    "HaarSumProblem",
    "brown_grid",
    "CircularFlowProblem",
    "circular_brown_grid",
]

"""Dynamic (2D+time) MRI-style reconstruction toolkit.

Pipeline: synthetic cine phantoms -> Cartesian k-space undersampling ->
recurrent de-aliasing baseline -> conditional spatiotemporal diffusion
enhancement with single / averaged / antithetic-paired sampling modes.
"""

__version__ = "0.1.0"

from .errors import (
    DegenerateDataError,
    SamplingDivergenceError,
    TrainingDivergenceError,
)

__all__ = [
    "DegenerateDataError",
    "SamplingDivergenceError",
    "TrainingDivergenceError",
    "__version__",
]

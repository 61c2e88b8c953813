"""Spectral-Galerkin solver for evolution equations driven by rough Hoelder paths."""

import os as _os

# ROUGHSEE_THREADS caps BLAS/OpenMP threads; it must be set before numpy loads.
_threads = _os.environ.get("ROUGHSEE_THREADS")
if _threads:
    for _var in ("OMP_NUM_THREADS", "OPENBLAS_NUM_THREADS", "MKL_NUM_THREADS"):
        _os.environ.setdefault(_var, _threads)

from .area import OperatorArea, Segments, phi1, phi2, phi3, read_area_blob, smooth_area, write_area_blob
from .diffusion import KernelModel, laplacian_spectrum, lipschitz_suite, register_kernel
from .errors import (ContractError, ContractionFailure, DomainError, NumericFailure, RoughSEEError,
                     ScheduleError, StructuralError, ValidationError)
from .fracint import frac_derivative_left, frac_derivative_right, rough_integral, young_integral
from .hilbert import (AreaField, GridPath, PathAreaPair, SpectralOperator, TimeGrid, apply_semigroup,
                      area_seminorm, chen_residual, frac_power_norm, holder_seminorm, x_seminorm)
from .noise import FbmSpec, NoisePath, dyadic_linearize, sample_fbm, wiener_shift
from .rds import CocycleReport, area_shift_residual, cocycle_residual
from .solver import (LocalSolution, SolverParams, concatenate, global_solve, local_solve, measure_c,
                     step_schedule, t1_apply, t2_apply)

__version__ = "0.1.0"

__all__ = [
    "AreaField", "CocycleReport", "ContractError", "ContractionFailure", "DomainError", "FbmSpec",
    "GridPath", "KernelModel", "LocalSolution", "NoisePath", "NumericFailure", "OperatorArea",
    "PathAreaPair", "RoughSEEError", "ScheduleError", "Segments", "SolverParams", "SpectralOperator",
    "StructuralError", "TimeGrid", "ValidationError", "apply_semigroup", "area_seminorm",
    "area_shift_residual", "chen_residual", "cocycle_residual", "concatenate", "dyadic_linearize",
    "frac_derivative_left", "frac_derivative_right", "frac_power_norm", "global_solve",
    "holder_seminorm", "laplacian_spectrum", "lipschitz_suite", "local_solve", "measure_c", "phi1",
    "phi2", "phi3", "read_area_blob", "register_kernel", "rough_integral", "sample_fbm",
    "smooth_area", "step_schedule", "t1_apply", "t2_apply", "wiener_shift", "write_area_blob",
    "x_seminorm", "young_integral",
]

"""Shared numerical kernels: staggered operators, Krylov solvers, FFTs."""
from .fields import ScalarField, StaggeredField, cell_centers, coordinates, inner
from .kernels import BACKEND
from .krylov import KrylovResult, SaddleResult, solve_saddle, solve_spd
from .masked import MaskedPoisson, MaskedStokes, SolveInfo, face_masks_from
from .operators import dirichlet_energy, div, grad, grad_norm, lap, vector_lap
from .spectral import SpectralField, check_fft_size, fft_forward, fft_inverse

__all__ = [
    "BACKEND",
    "KrylovResult",
    "MaskedPoisson",
    "MaskedStokes",
    "SaddleResult",
    "ScalarField",
    "SolveInfo",
    "SpectralField",
    "StaggeredField",
    "cell_centers",
    "check_fft_size",
    "coordinates",
    "dirichlet_energy",
    "div",
    "face_masks_from",
    "fft_forward",
    "fft_inverse",
    "grad",
    "grad_norm",
    "inner",
    "lap",
    "solve_saddle",
    "solve_spd",
    "vector_lap",
]

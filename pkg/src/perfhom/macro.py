"""Spectral solvers for the homogenized limit systems on the torus.

All systems have constant coefficients and are diagonal in Fourier
space.  Coefficients are stored with *physical* phases, i.e. the field is
``sum_k c_k exp(i k.x)`` with ``x`` the true position of every sample, so
face and center samples of the same field share coefficients.

Two symbols are available.  ``"exact"`` uses ``i k`` for the gradient and
``|k|^2`` for ``-lap``.  ``"mac"`` replaces ``k_a`` by
``(2/h) sin(k_a h/2)``, which reproduces the staggered finite-difference
operators exactly; hole-free micro solves then agree with the macro
solution to round-off.  Modes at the Nyquist frequency are discarded.
"""
from __future__ import annotations

import enum
import logging
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np
import scipy.fft as sfft

from .errors import DomainError, GridMismatchError, ZeroModeError
from .numerics import ScalarField, StaggeredField

log = logging.getLogger(__name__)


class System(str, enum.Enum):
    DARCY = "darcy"
    STOKES_BRINKMAN = "brinkman"
    STOKES = "stokes"
    POISSON_POINTWISE = "poisson_pointwise"
    LAPLACE_BRINKMAN = "laplace_brinkman"
    POISSON = "poisson"


class SingularTensorError(DomainError):
    """The tensor ``A`` is not symmetric positive definite."""


# ------------------------------------------------------------------ grids


@dataclass(frozen=True)
class _Grid:
    d: int
    N: int
    L: float
    symbol: str

    @property
    def h(self):
        return self.L / self.N

    def k(self):
        """Physical wavenumbers (broadcastable), full FFT layout."""
        kk = 2.0 * np.pi * sfft.fftfreq(self.N, d=self.h)
        out = []
        for a in range(self.d):
            shape = [1] * self.d
            shape[a] = self.N
            out.append(kk.reshape(shape))
        return out

    def ksym(self):
        """Wavenumbers entering the operators (``k`` or its MAC modification)."""
        if self.symbol == "exact":
            return self.k()
        if self.symbol == "mac":
            return [(2.0 / self.h) * np.sin(k * self.h / 2.0) for k in self.k()]
        raise ValueError(f"unknown symbol {self.symbol!r}")

    def keep(self):
        """Mask of retained modes (Nyquist frequencies dropped for even N)."""
        keep = np.ones((self.N,) * self.d, dtype=bool)
        if self.N % 2 == 0:
            for a in range(self.d):
                idx = [slice(None)] * self.d
                idx[a] = self.N // 2
                keep[tuple(idx)] = False
        return keep

    def origin(self, face_axis: Optional[int] = None):
        """Position of sample index 0 (center, or lower face along ``face_axis``)."""
        x0 = np.full(self.d, -self.L / 2 + self.h / 2)
        if face_axis is not None:
            x0[face_axis] -= self.h / 2
        return x0

    def phase(self, face_axis: Optional[int] = None):
        """``exp(-i k.x_origin)`` converting index coefficients to physical ones."""
        x0 = self.origin(face_axis)
        return np.exp(-1j * sum(k * x for k, x in zip(self.k(), x0)))

    def forward(self, arr, face_axis=None):
        c = sfft.fftn(arr) / arr.size * self.phase(face_axis)
        return np.where(self.keep(), c, 0.0)

    def inverse(self, coeffs, face_axis=None):
        return sfft.ifftn(coeffs / self.phase(face_axis) * coeffs.size).real


def _grid_of(src, symbol) -> _Grid:
    return _Grid(src.d, src.N, src.L, symbol)


# ---------------------------------------------------------------- solution


@dataclass(frozen=True)
class MacroSolution:
    """Spectral solution of a limit system.

    Attributes
    ----------
    system : System
    grid : _Grid
    v_hat : tuple of ndarray or None
        Physical Fourier coefficients of the velocity components.
    p_hat : ndarray or None
        Pressure (vector systems) or solution ``u`` (scalar systems).
    inputs : dict
        ``A``/``wbar``/``sigma_star`` used.
    source_hat : tuple of ndarray
        Coefficients of the source as seen by the solver.
    """

    system: System
    grid: _Grid
    v_hat: Optional[tuple]
    p_hat: Optional[np.ndarray]
    inputs: dict = field(default_factory=dict)
    source_hat: tuple = ()
    u_values: Optional[np.ndarray] = field(default=None, repr=False)

    @property
    def is_vector(self) -> bool:
        return self.v_hat is not None

    def velocity(self) -> StaggeredField:
        """Velocity sampled on the MAC faces."""
        if not self.is_vector:
            raise AttributeError("scalar system has no velocity")
        comps = tuple(self.grid.inverse(c, a) for a, c in enumerate(self.v_hat))
        return StaggeredField(comps, self.grid.h)

    def pressure(self) -> ScalarField:
        if not self.is_vector:
            raise AttributeError("scalar system has no pressure; use scalar()")
        return ScalarField(self.grid.inverse(self.p_hat), self.grid.h)

    def scalar(self) -> ScalarField:
        if self.is_vector:
            raise AttributeError("vector system; use velocity() and pressure()")
        if self.u_values is not None:
            return ScalarField(self.u_values, self.grid.h)
        return ScalarField(self.grid.inverse(self.p_hat), self.grid.h)

    def div_norm(self) -> float:
        """Spectral L2 norm of ``div v`` relative to ``||grad v||``."""
        ks = self.grid.ksym()
        dv = sum(1j * k * c for k, c in zip(ks, self.v_hat))
        gv = np.sqrt(sum(np.sum(np.abs(k * c) ** 2) for k in ks for c in self.v_hat))
        return float(np.sqrt(np.sum(np.abs(dv) ** 2)) / gv) if gv > 0 else 0.0

    def residual(self) -> float:
        """Relative substitution residual of the solved system in Fourier space."""
        ks = self.grid.ksym()
        k2 = sum(k * k for k in ks)
        s = self.system
        src = self.source_hat
        snorm = np.sqrt(sum(np.sum(np.abs(c) ** 2) for c in src))
        if s in (System.POISSON, System.LAPLACE_BRINKMAN):
            fric = 0.0
            if s is System.LAPLACE_BRINKMAN:
                fric = 1.0 / (self.inputs["sigma_star"] ** 2 * self.inputs["wbar"])
            r = (k2 + fric) * self.p_hat - src[0]
            if s is System.POISSON:
                r = np.where(k2 == 0, 0.0, r)
            rn = np.sqrt(np.sum(np.abs(r) ** 2))
            return float(rn / snorm) if snorm > 0 else float(rn)
        if s is System.POISSON_POINTWISE:
            return 0.0
        d = self.grid.d
        res = []
        if s is System.DARCY:
            A = self.inputs["A"]
            for i in range(d):
                r = self.v_hat[i] - sum(A[i, j] * (src[j] - 1j * ks[j] * self.p_hat) for j in range(d))
                res.append(r)
        else:
            Ainv = np.zeros((d, d))
            if s is System.STOKES_BRINKMAN:
                Ainv = np.linalg.inv(self.inputs["A"]) / self.inputs["sigma_star"] ** 2
            for i in range(d):
                r = k2 * self.v_hat[i] + 1j * ks[i] * self.p_hat - src[i]
                r = r + sum(Ainv[i, j] * self.v_hat[j] for j in range(d))
                if s is System.STOKES:
                    r = np.where(k2 == 0, 0.0, r)
                res.append(r)
        rn = np.sqrt(sum(np.sum(np.abs(r) ** 2) for r in res))
        return float(rn / snorm) if snorm > 0 else float(rn)


# ----------------------------------------------------------------- helpers


def _check_spd(A, d):
    A = np.asarray(A, dtype=float)
    if A.shape != (d, d):
        raise SingularTensorError(f"A must be {d}x{d}, got shape {A.shape}")
    if not np.allclose(A, A.T, rtol=1e-10, atol=1e-14 * np.abs(A).max()):
        raise SingularTensorError("A is not symmetric")
    A = 0.5 * (A + A.T)
    if np.linalg.eigvalsh(A).min() <= 0:
        raise SingularTensorError("A is not positive definite")
    return A


def _vector_hat(g: StaggeredField, grid: _Grid):
    return tuple(grid.forward(c, a) for a, c in enumerate(g.components))


def _zero_mode(src_hat, project_mean, what):
    means = [complex(c.flat[0]) for c in src_hat]
    scale = max(np.sqrt(np.sum(np.abs(c) ** 2)) for c in src_hat) or 1.0
    if max(abs(m) for m in means) > 1e-13 * scale:
        if not project_mean:
            raise ZeroModeError(f"{what}: source has nonzero mean {np.real(means)}")
        log.warning("%s: removing source mean %s (torus compatibility)", what, np.real(means))
        out = []
        for c in src_hat:
            c = c.copy()
            c.flat[0] = 0.0
            out.append(c)
        return tuple(out)
    return src_hat


# ------------------------------------------------------------------ solvers


def solve_darcy(A, g: StaggeredField, symbol: str = "exact") -> MacroSolution:
    """Darcy law ``v = A(g - grad p)``, ``div v = 0`` (zero-mean ``p``)."""
    grid = _grid_of(g, symbol)
    A = _check_spd(A, grid.d)
    ks = grid.ksym()
    gh = _vector_hat(g, grid)
    d = grid.d
    Ag = [sum(A[i, j] * gh[j] for j in range(d)) for i in range(d)]
    kAk = sum(ks[i] * A[i, j] * ks[j] for i in range(d) for j in range(d))
    kAk = np.broadcast_to(kAk, gh[0].shape).copy()
    zero = kAk == 0
    kAg = sum(ks[i] * Ag[i] for i in range(d))
    ph = np.where(zero, 0.0, -1j * kAg / np.where(zero, 1.0, kAk))
    vh = tuple(sum(A[i, j] * (gh[j] - 1j * ks[j] * ph) for j in range(d)) for i in range(d))
    return MacroSolution(System.DARCY, grid, vh, ph, {"A": A}, gh)


def solve_brinkman(A, sigma_star: float, g: StaggeredField, symbol: str = "exact") -> MacroSolution:
    """Stokes-Brinkman ``-lap v + grad p + sigma^-2 A^-1 v = g``, ``div v = 0``.

    The per-frequency ``(d+1) x (d+1)`` system is solved in closed form in
    the eigenbasis of ``A``.
    """
    if not (sigma_star > 0):
        raise DomainError(f"sigma_star must be positive, got {sigma_star}")
    grid = _grid_of(g, symbol)
    A = _check_spd(A, grid.d)
    d = grid.d
    alpha, Q = np.linalg.eigh(A)
    ks = grid.ksym()
    k2 = sum(k * k for k in ks)
    gh = _vector_hat(g, grid)
    # rotate into the eigenbasis of A, where the friction is diagonal
    kq = [sum(Q[j, i] * ks[j] for j in range(d)) for i in range(d)]
    gq = [sum(Q[j, i] * gh[j] for j in range(d)) for i in range(d)]
    minv = [1.0 / (k2 + 1.0 / (sigma_star**2 * alpha[i])) for i in range(d)]
    num = sum(kq[i] * minv[i] * gq[i] for i in range(d))
    den = np.broadcast_to(sum(kq[i] ** 2 * minv[i] for i in range(d)), gh[0].shape)
    zero = den == 0
    ph = np.where(zero, 0.0, -1j * num / np.where(zero, 1.0, den))
    vq = [minv[i] * (gq[i] - 1j * kq[i] * ph) for i in range(d)]
    vh = tuple(sum(Q[i, j] * vq[j] for j in range(d)) for i in range(d))
    return MacroSolution(System.STOKES_BRINKMAN, grid, vh, ph, {"A": A, "sigma_star": float(sigma_star)}, gh)


def solve_stokes_macro(g: StaggeredField, symbol: str = "exact", project_mean: bool = False) -> MacroSolution:
    """Torus Stokes ``-lap v + grad p = g``, ``div v = 0`` with zero-mean ``v`` and ``p``.

    Raises
    ------
    ZeroModeError
        If ``g`` has a nonzero mean and ``project_mean`` is False.
    """
    grid = _grid_of(g, symbol)
    gh = _zero_mode(_vector_hat(g, grid), project_mean, "macro Stokes")
    ks = grid.ksym()
    k2 = np.broadcast_to(sum(k * k for k in ks), gh[0].shape)
    zero = k2 == 0
    inv = np.where(zero, 0.0, 1.0 / np.where(zero, 1.0, k2))
    kg = sum(k * c for k, c in zip(ks, gh))
    ph = -1j * kg * inv
    vh = tuple((c - k * kg * inv) * inv for k, c in zip(ks, gh))
    return MacroSolution(System.STOKES, grid, vh, ph, {}, gh)


def _scalar_hat(f: ScalarField, grid: _Grid):
    return (grid.forward(f.values),)


def solve_laplace_brinkman(wbar: float, sigma_star: float, f: ScalarField, symbol: str = "exact") -> MacroSolution:
    """``-lap u + sigma^-2 wbar^-1 u = f``."""
    if not (wbar > 0 and sigma_star > 0):
        raise DomainError("wbar and sigma_star must be positive")
    grid = _grid_of(f, symbol)
    fh = _scalar_hat(f, grid)
    k2 = sum(k * k for k in grid.ksym())
    uh = fh[0] / (k2 + 1.0 / (sigma_star**2 * wbar))
    return MacroSolution(System.LAPLACE_BRINKMAN, grid, None, uh, {"wbar": float(wbar), "sigma_star": float(sigma_star)}, fh)


def solve_poisson_macro(f: ScalarField, symbol: str = "exact", project_mean: bool = False) -> MacroSolution:
    """``-lap u = f`` with zero-mean ``u``; ``f`` must be mean-free."""
    grid = _grid_of(f, symbol)
    fh = _zero_mode(_scalar_hat(f, grid), project_mean, "macro Poisson")
    k2 = np.broadcast_to(sum(k * k for k in grid.ksym()), fh[0].shape)
    zero = k2 == 0
    uh = np.where(zero, 0.0, fh[0] / np.where(zero, 1.0, k2))
    return MacroSolution(System.POISSON, grid, None, uh, {}, fh)


def poisson_pointwise(wbar: float, f: ScalarField) -> MacroSolution:
    """Pointwise limit ``u = wbar * f`` (no transform involved)."""
    if not (wbar > 0):
        raise DomainError("wbar must be positive")
    grid = _grid_of(f, "exact")
    return MacroSolution(System.POISSON_POINTWISE, grid, None, None, {"wbar": float(wbar)}, (),
                         u_values=wbar * f.values)

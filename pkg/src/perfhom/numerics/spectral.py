"""FFT utilities and exact periodic solvers for the MAC stencils.

The periodic solvers invert the *discrete* operators (their symbols are
those of the 5/7-point stencils), so they are exact to round-off on the
staggered grid and serve as the fast inner solve of the masked solvers.
"""
from __future__ import annotations

from dataclasses import dataclass
from functools import lru_cache

import numpy as np
import scipy.fft as sfft

from ..errors import RangeError, SizeError
from .fields import ScalarField

_SMALL_PRIMES = (2, 3, 5, 7)


def check_fft_size(N: int) -> None:
    """Raise :class:`SizeError` unless ``N`` factors into 2, 3, 5 and 7."""
    n = int(N)
    if n < 1:
        raise SizeError(f"grid size must be positive, got {N}")
    for p in _SMALL_PRIMES:
        while n % p == 0:
            n //= p
    if n != 1:
        raise SizeError(f"grid size {N} is not a product of small primes {_SMALL_PRIMES}")


def _frozen(a):
    a.setflags(write=False)
    return a


@lru_cache(maxsize=32)
def wavenumbers(d: int, N: int, L: float, real: bool = True) -> tuple:
    """Angular wavenumbers ``2*pi*xi/L`` as broadcastable arrays.

    With ``real=True`` the last axis follows the ``rfftn`` layout.
    """
    h = L / N
    k = 2.0 * np.pi * sfft.fftfreq(N, d=h)
    kr = 2.0 * np.pi * sfft.rfftfreq(N, d=h) if real else k
    out = []
    for a in range(d):
        ka = kr if a == d - 1 else k
        shape = [1] * d
        shape[a] = ka.size
        out.append(_frozen(ka.reshape(shape).copy()))
    return tuple(out)


@lru_cache(maxsize=32)
def mac_symbols(d: int, N: int, L: float) -> tuple:
    """Symbols of the forward/backward differences and of ``-lap`` (rfftn layout)."""
    h = L / N
    ks = wavenumbers(d, N, L, True)
    fwd = tuple(_frozen((np.exp(1j * k * h) - 1.0) / h) for k in ks)
    bwd = tuple(_frozen((1.0 - np.exp(-1j * k * h)) / h) for k in ks)
    lam = sum((4.0 / h**2) * np.sin(k * h / 2.0) ** 2 for k in ks)
    lam = np.broadcast_to(lam, _rshape(d, N)).copy()
    inv = lam.copy()
    inv.flat[0] = 1.0
    inv = 1.0 / inv
    inv.flat[0] = 0.0
    return fwd, bwd, _frozen(lam), _frozen(inv)


def _rshape(d, N):
    return (N,) * (d - 1) + (N // 2 + 1,)


def periodic_poisson(f: np.ndarray, L: float) -> np.ndarray:
    """Mean-zero ``u`` with ``-lap_h u = f - mean(f)`` on the torus."""
    d, N = f.ndim, f.shape[0]
    _, _, _, inv = mac_symbols(d, N, L)
    return sfft.irfftn(sfft.rfftn(f) * inv, f.shape)


def periodic_stokes(g, L: float):
    """Mean-zero MAC Stokes solution ``-lap_h v + grad_h p = g - mean(g)``, ``div_h v = 0``.

    Returns
    -------
    v : list of ndarray
        Face components with zero mean.
    p : ndarray
        Center pressure with zero mean.
    """
    d, shape = len(g), g[0].shape
    N = shape[0]
    fwd, bwd, _, inv = mac_symbols(d, N, L)
    gh = [sfft.rfftn(c) for c in g]
    # div(g) = div(grad p) = -lam p
    ph = -sum(fwd[a] * gh[a] for a in range(d)) * inv
    vh = [(gh[a] - bwd[a] * ph) * inv for a in range(d)]
    return [sfft.irfftn(c, shape) for c in vh], sfft.irfftn(ph, shape)


def periodic_poisson_checked(f: np.ndarray, L: float, rtol: float = 1e-12) -> np.ndarray:
    """As :func:`periodic_poisson` but reject right-hand sides with nonzero mean."""
    scale = np.abs(f).mean() or 1.0
    if abs(f.mean()) > rtol * scale:
        raise RangeError(f"periodic Poisson right-hand side has nonzero mean {f.mean():.3e}")
    return periodic_poisson(f, L)


@dataclass(frozen=True)
class SpectralField:
    """Fourier-series coefficients of a real periodic field.

    ``coeffs[xi]`` multiplies ``exp(2*pi*i*xi.j/N)`` at grid index ``j``; the
    mean sits at ``xi = 0``.  Frequencies follow the ``numpy.fft.fftfreq``
    ordering, i.e. they cover ``[-N/2, N/2)`` per axis.
    """

    coeffs: np.ndarray
    L: float

    @property
    def d(self) -> int:
        return self.coeffs.ndim

    @property
    def N(self) -> int:
        return self.coeffs.shape[0]

    def frequencies(self) -> tuple:
        """Integer frequency arrays, broadcastable."""
        xi = np.rint(sfft.fftfreq(self.N, d=1.0 / self.N)).astype(int)
        out = []
        for a in range(self.d):
            shape = [1] * self.d
            shape[a] = self.N
            out.append(xi.reshape(shape))
        return tuple(out)

    def wavenumbers(self) -> tuple:
        return wavenumbers(self.d, self.N, self.L, False)

    def energy(self) -> float:
        """Mean square of the physical field (Parseval)."""
        return float(np.sum(np.abs(self.coeffs) ** 2))


def fft_forward(field, L: float | None = None) -> SpectralField:
    """Forward transform normalized so that coefficients are Fourier-series weights."""
    if isinstance(field, ScalarField):
        values, L = field.values, field.L
    else:
        values = np.asarray(field, dtype=float)
        if L is None:
            raise ValueError("box size L is required for a raw array")
    for n in values.shape:
        check_fft_size(n)
    return SpectralField(sfft.fftn(values) / values.size, float(L))


def fft_inverse(spec: SpectralField) -> ScalarField:
    """Inverse of :func:`fft_forward`; the imaginary part is discarded."""
    check_fft_size(spec.N)
    values = sfft.ifftn(spec.coeffs * spec.coeffs.size).real
    return ScalarField(values, spec.L / spec.N)

"""Perforation lattice, regime ratio, masks and source validation.

Holes are ``T_{eps,k} = eps*(x0 + k) + a_eps*T`` for lattice points ``k``.
On the grid a cell is solid when its center lies in a hole (center
sampling) and a face is solid when either neighbouring cell is solid.
"""
from __future__ import annotations

import enum
import math
from dataclasses import dataclass, field
from typing import Callable, NamedTuple, Optional, Sequence, Tuple, Union

import numpy as np
from scipy import ndimage

from .errors import AmbiguousRegime, ConfigError, DegenerateRatioError, DomainError, ResolutionError

CRITICAL_RTOL = 1e-6


# ---------------------------------------------------------------- hole shapes


@dataclass(frozen=True)
class Ball:
    """Ball of radius ``r`` centered at the origin."""

    r: float

    def __post_init__(self):
        if not (self.r > 0):
            raise ConfigError(f"ball radius must be positive, got {self.r}")

    def inside(self, coords: Sequence[np.ndarray]) -> np.ndarray:
        return sum(c * c for c in coords) <= self.r**2

    def extent(self, d: int) -> np.ndarray:
        return np.full(d, self.r)

    def radii(self, d: int) -> Tuple[float, float]:
        return self.r, self.r

    def volume(self, d: int) -> float:
        return math.pi ** (d / 2) / math.gamma(d / 2 + 1) * self.r**d


@dataclass(frozen=True)
class Superellipse:
    """``sum_i |x_i / s_i|^p <= 1`` with ``p >= 2`` (convex, C1 boundary)."""

    semi_axes: Tuple[float, ...]
    exponent: float = 4.0

    def __post_init__(self):
        object.__setattr__(self, "semi_axes", tuple(float(s) for s in self.semi_axes))
        if not self.semi_axes or min(self.semi_axes) <= 0:
            raise ConfigError("superellipse semi-axes must be positive")
        if self.exponent < 2:
            raise ConfigError("superellipse exponent must be at least 2")

    def _axes(self, d):
        if len(self.semi_axes) != d:
            raise ConfigError(f"superellipse has {len(self.semi_axes)} semi-axes, need {d}")
        return np.asarray(self.semi_axes)

    def inside(self, coords: Sequence[np.ndarray]) -> np.ndarray:
        s = self._axes(len(coords))
        return sum(np.abs(c / si) ** self.exponent for c, si in zip(coords, s)) <= 1.0

    def extent(self, d: int) -> np.ndarray:
        return self._axes(d).copy()

    def radii(self, d: int) -> Tuple[float, float]:
        # boundary radius along unit direction w is (sum |w_i/s_i|^p)^(-1/p);
        # for p >= 2 the extremes are attained on axes and on the diagonal family
        s = self._axes(d)
        rng = np.random.default_rng(0)
        w = rng.standard_normal((20000, d))
        w = np.vstack([w, np.eye(d), np.abs(w)])
        w /= np.linalg.norm(w, axis=1, keepdims=True)
        rho = np.sum(np.abs(w / s) ** self.exponent, axis=1) ** (-1.0 / self.exponent)
        return float(min(rho.min(), s.min())), float(rho.max())

    def volume(self, d: int) -> float:
        p = self.exponent
        return float(np.prod(self._axes(d)) * (2 * math.gamma(1 + 1 / p)) ** d / math.gamma(1 + d / p))


Shape = Union[Ball, Superellipse]


@dataclass(frozen=True)
class HoleModel:
    """Model hole ``T`` with ``B(0, delta1) ⊂ T ⊂ B(0, delta2)``, ``delta2 < 1/2``."""

    shape: Shape = field(default_factory=lambda: Ball(0.25))
    delta1: float = 0.2
    delta2: float = 0.3

    def validate(self, d: int) -> None:
        r_in, r_out = self.shape.radii(d)
        if not (0 < self.delta1 <= r_in + 1e-12):
            raise ConfigError(f"delta1={self.delta1} must lie in (0, r_in={r_in:.6g}]")
        if not (r_out - 1e-12 <= self.delta2 < 0.5):
            raise ConfigError(f"delta2={self.delta2} must lie in [r_out={r_out:.6g}, 1/2)")


def default_hole() -> HoleModel:
    return HoleModel(Ball(0.25), 0.2, 0.3)


# ------------------------------------------------------------- configuration


@dataclass(frozen=True)
class PerforationConfig:
    """Perforated torus ``[-m*eps/2, m*eps/2)^d`` with ``n`` grid cells per period.

    Parameters
    ----------
    d : int
        Dimension, 2 or 3.
    eps : float
        Lattice spacing, ``0 < eps <= 1``.
    a_eps : float
        Hole scale, ``0 < a_eps <= eps``.
    hole : HoleModel
        Model hole.
    m : int
        Number of lattice periods per torus side (even, at least 4).
    n : int
        Grid cells per lattice period (at least 8).
    x0 : tuple of float, optional
        Hole offset inside the unit cell ``(-1/2, 1/2)^d``; zero by default.
    min_hole_cells : float
        Resolution floor: minimum hole diameter in grid cells along every axis.
    """

    d: int
    eps: float
    a_eps: float
    hole: HoleModel = field(default_factory=default_hole)
    m: int = 4
    n: int = 16
    x0: Optional[Tuple[float, ...]] = None
    min_hole_cells: float = 8

    def __post_init__(self):
        if self.d not in (2, 3):
            raise DomainError(f"dimension must be 2 or 3, got {self.d}")
        x0 = tuple(float(v) for v in (self.x0 if self.x0 is not None else (0.0,) * self.d))
        if len(x0) != self.d or any(not (-0.5 < v < 0.5) for v in x0):
            raise ConfigError(f"x0 must lie in (-1/2, 1/2)^{self.d}, got {x0}")
        object.__setattr__(self, "x0", x0)
        if not (0 < self.a_eps <= self.eps <= 1):
            raise ConfigError(f"need 0 < a_eps <= eps <= 1, got a_eps={self.a_eps}, eps={self.eps}")
        if self.m < 4 or self.m % 2:
            raise ConfigError(f"torus periods m must be even and >= 4, got {self.m}")
        if self.n < 8:
            raise ConfigError(f"cells per period n must be >= 8, got {self.n}")
        self.hole.validate(self.d)

    @property
    def N(self) -> int:
        return self.m * self.n

    @property
    def L(self) -> float:
        return self.m * self.eps

    @property
    def h(self) -> float:
        return self.eps / self.n

    @property
    def eta(self) -> float:
        return self.a_eps / self.eps

    @property
    def sigma(self) -> float:
        return sigma_eps(self.d, self.eps, self.a_eps)

    def hole_span_cells(self) -> np.ndarray:
        """Hole diameter along each axis in grid cells."""
        return 2.0 * self.hole.shape.extent(self.d) * self.a_eps / self.h

    def check_resolution(self) -> None:
        span = self.hole_span_cells()
        if span.min() < self.min_hole_cells:
            raise ResolutionError(
                f"hole spans {span.min():.2f} cells per axis, below the floor of {self.min_hole_cells}"
            )

    def cell_center_offset(self) -> Tuple[float, ...]:
        """Hole center for the matching unit-cell problem (aligned sub-grid offset)."""
        shift = (self.n % 2) / (2.0 * self.n)
        return tuple(((v - shift + 0.5) % 1.0) - 0.5 for v in self.x0)


# ------------------------------------------------------------------ sigma_eps


def sigma_eps(d: int, eps: float, a_eps: float) -> float:
    """Regime ratio ``sigma_eps``.

    ``(eps^d / a_eps^(d-2))^(1/2)`` for ``d = 3`` and
    ``eps * |log(a_eps / eps)|^(1/2)`` for ``d = 2``.
    """
    if d not in (2, 3):
        raise DomainError(f"dimension must be 2 or 3, got {d}")
    if not (0 < a_eps <= eps <= 1):
        raise DomainError(f"need 0 < a_eps <= eps <= 1, got a_eps={a_eps}, eps={eps}")
    if d == 3:
        return math.sqrt(eps**3 / a_eps)
    if a_eps == eps:
        raise DegenerateRatioError("sigma_eps is zero for d = 2 with a_eps = eps")
    return eps * math.sqrt(abs(math.log(a_eps / eps)))


# ------------------------------------------------------------------ schedules


@dataclass(frozen=True)
class PowerSchedule:
    """``a_eps = prefactor * eps**alpha``."""

    alpha: float
    prefactor: float = 1.0

    def __call__(self, eps: float) -> float:
        return self.prefactor * eps**self.alpha

    def log_ratio(self, eps: float) -> float:
        return math.log(self.prefactor) + (self.alpha - 1.0) * math.log(eps)


@dataclass(frozen=True)
class CriticalSchedule:
    """Schedule with ``sigma_eps`` identically equal to ``sigma_star``."""

    d: int
    sigma_star: float

    def __call__(self, eps: float) -> float:
        if self.d == 3:
            return eps**3 / self.sigma_star**2
        return eps * math.exp(-self.sigma_star**2 / eps**2)

    def log_ratio(self, eps: float) -> float:
        if self.d == 3:
            return 2.0 * math.log(eps / self.sigma_star)
        return -self.sigma_star**2 / eps**2


Schedule = Callable[[float], float]


def schedule_sigma(d: int, schedule: Schedule, eps: float) -> float:
    """``sigma_eps`` of a schedule, using ``log(a_eps/eps)`` when the schedule provides it.

    The logarithmic form avoids underflow of ``a_eps`` for two-dimensional
    critical schedules at small ``eps``.
    """
    log_ratio = getattr(schedule, "log_ratio", None)
    if log_ratio is None:
        return sigma_eps(d, eps, schedule(eps))
    lr = log_ratio(eps)
    if d not in (2, 3):
        raise DomainError(f"dimension must be 2 or 3, got {d}")
    if not (0 < eps <= 1) or lr > 1e-15:
        raise DomainError(f"need 0 < a_eps <= eps <= 1 (eps={eps}, log(a/eps)={lr})")
    if d == 3:
        return eps * math.exp(-0.5 * lr)
    if lr == 0.0:
        raise DegenerateRatioError("sigma_eps is zero for d = 2 with a_eps = eps")
    return eps * math.sqrt(-lr)


class Regime(str, enum.Enum):
    SUPERCRITICAL = "supercritical"
    CRITICAL = "critical"
    SUBCRITICAL = "subcritical"


@dataclass(frozen=True)
class RegimeReport:
    """Probe values of ``sigma_eps`` and the regime they indicate."""

    sigma_eps: Tuple[float, ...]
    label: Regime
    sigma_star: Optional[float] = None

    def __post_init__(self):
        if self.label is Regime.CRITICAL:
            if self.sigma_star is None or not (0 < self.sigma_star < math.inf):
                raise ConfigError("critical regime needs a finite positive sigma_star")


def classify_regime(d: int, schedule: Schedule, probe_eps: Sequence[float], monotone_rtol: float = 1e-10) -> RegimeReport:
    """Classify a hole-size schedule from ``sigma_eps`` along decreasing probes.

    Parameters
    ----------
    d : int
        Dimension.
    schedule : callable
        ``a_eps`` as a function of ``eps``.
    probe_eps : sequence of float
        At least four strictly decreasing values of ``eps``.
    monotone_rtol : float
        Relative wiggle tolerated before the trend is declared ambiguous.
    """
    eps = [float(e) for e in probe_eps]
    if len(eps) < 4 or any(b >= a for a, b in zip(eps, eps[1:])):
        raise ValueError("need at least 4 strictly decreasing probe values")
    sig = np.array([schedule_sigma(d, schedule, e) for e in eps])
    mean = sig.mean()
    if (sig.max() - sig.min()) <= CRITICAL_RTOL * mean:
        return RegimeReport(tuple(map(float, sig)), Regime.CRITICAL, float(mean))
    steps = np.diff(sig) / mean
    if np.all(steps <= monotone_rtol):
        return RegimeReport(tuple(map(float, sig)), Regime.SUPERCRITICAL)
    if np.all(steps >= -monotone_rtol):
        return RegimeReport(tuple(map(float, sig)), Regime.SUBCRITICAL)
    raise AmbiguousRegime(f"sigma_eps is not monotone along the probes: {sig}")


# ---------------------------------------------------------------------- masks


class Masks(NamedTuple):
    """Rasterized perforation.

    ``fluid`` is True on fluid cells; ``faces[a]`` is True on *solid* faces
    normal to axis ``a``.
    """

    fluid: np.ndarray
    faces: Tuple[np.ndarray, ...]

    @property
    def solid(self) -> np.ndarray:
        return ~self.fluid


def _wrap_half(z: np.ndarray, n: int) -> np.ndarray:
    """Map half-cell offsets into ``[-n, n)``."""
    return np.mod(z + n, 2 * n) - n


def _half_offsets(d: int, n: int, center: Optional[Sequence[float]]) -> list:
    """Wrapped cell-center offsets from ``center`` in units of half a cell."""
    center = (0.0,) * d if center is None else tuple(center)
    t = 2.0 * np.arange(n) + 1.0 - n
    out = []
    for a in range(d):
        shape = [1] * d
        shape[a] = n
        out.append(_wrap_half(t - 2.0 * n * center[a], n).reshape(shape))
    return out


def cell_coords(d: int, n: int, center: Optional[Sequence[float]] = None) -> list:
    """Broadcastable cell-center coordinates of the unit cell relative to ``center``, wrapped into ``[-1/2, 1/2)``."""
    return [z / (2.0 * n) for z in _half_offsets(d, n, center)]


def cell_mask(d: int, n: int, hole: HoleModel, eta: float, center: Optional[Sequence[float]] = None) -> np.ndarray:
    """Solid mask of ``eta*T`` (centered at ``center``) on the unit cell with ``n^d`` cells.

    Offsets are computed in units of half a cell so that the rasterization
    is exactly symmetric whenever the geometry is.
    """
    scale = 2.0 * n * eta  # half-cells per unit of the model hole
    coords = [z / scale for z in _half_offsets(d, n, center)]
    return np.broadcast_to(hole.shape.inside(coords), (n,) * d).copy()


def _block_mask(config: PerforationConfig) -> np.ndarray:
    """Mask of the first lattice period of the torus grid (indices ``0..n-1``)."""
    blk = cell_mask(config.d, config.n, config.hole, config.eta, config.cell_center_offset())
    return np.roll(blk, [-(config.n // 2)] * config.d, axis=tuple(range(config.d)))


def build_masks(config: PerforationConfig) -> Masks:
    """Rasterize the holes of ``config`` on its torus grid.

    Raises
    ------
    ResolutionError
        If the holes are below the resolution floor or rasterize to nothing.
    """
    config.check_resolution()
    cell = cell_mask(config.d, config.n, config.hole, config.eta, config.cell_center_offset())
    if not cell.any():
        raise ResolutionError("hole rasterizes to an empty set")
    _, ncomp = ndimage.label(cell)
    if ncomp != 1:
        raise ResolutionError(f"hole rasterizes to {ncomp} components")
    solid = np.tile(np.roll(cell, [-(config.n // 2)] * config.d, axis=tuple(range(config.d))), (config.m,) * config.d)
    faces = tuple(solid | np.roll(solid, 1, axis=a) for a in range(config.d))
    return Masks(~solid, faces)


def hole_centers(config: PerforationConfig) -> np.ndarray:
    """Physical centers ``eps*(x0 + k)`` of all holes on the torus, shape ``(m^d, d)``."""
    ks = np.arange(config.m) - config.m // 2
    grids = np.meshgrid(*([ks] * config.d), indexing="ij")
    pts = np.stack([g.ravel() for g in grids], axis=1).astype(float)
    return config.eps * (pts + np.asarray(config.x0))


# ----------------------------------------------------------- source validity


@dataclass(frozen=True)
class SourceVerdict:
    valid: bool
    failed: Tuple[str, ...] = ()

    def __bool__(self) -> bool:
        return self.valid


def validate_source(field, regime: RegimeReport, d: int) -> SourceVerdict:
    """Check the regime-dependent admissibility of a source.

    Only the two-dimensional subcritical case is restricted: the source
    must vanish on the outermost layer of torus cells (compact support
    strictly inside the box) and have zero integral in every component.
    """
    if hasattr(field, "components"):
        arrays = [np.asarray(c) for c in field.components]
    elif hasattr(field, "values"):
        arrays = [np.asarray(field.values)]
    else:
        arrays = [np.asarray(field, dtype=float)]
    failed = []
    if any(a.ndim != d for a in arrays):
        failed.append("dimension")
    if not all(np.all(np.isfinite(a)) for a in arrays):
        failed.append("bounded")
    label = regime.label if isinstance(regime, RegimeReport) else Regime(regime)
    if d == 2 and label is Regime.SUBCRITICAL and not failed:
        for a in arrays:
            if abs(a.sum()) > 1e-12 * np.abs(a).sum():
                failed.append("zero_mean")
                break
        for a in arrays:
            edge = np.zeros(a.shape, dtype=bool)
            for ax in range(a.ndim):
                idx = [slice(None)] * a.ndim
                idx[ax] = [0, -1]
                edge[tuple(idx)] = True
            if np.any(a[edge] != 0):
                failed.append("compact_support")
                break
    return SourceVerdict(not failed, tuple(failed))

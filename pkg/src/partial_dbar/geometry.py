"""Unit-disc geometry, boundary discretization and test conductivities."""

from __future__ import annotations

from dataclasses import dataclass, field
from fractions import Fraction
from typing import Callable

import numpy as np

# Width of the boundary annulus on which every admissible conductivity equals 1.
BOUNDARY_LAYER = 0.1


class DiscretizationError(ValueError):
    """Raised for an invalid boundary discretization."""


class AlignmentError(ValueError):
    """Raised when a sub-arc or basis does not align with the grid cells."""


class SupportError(ValueError):
    """Raised when a phantom is not supported away from the boundary."""


@dataclass(frozen=True)
class BoundaryGrid:
    """Midpoint nodes of ``L`` equal arclength cells on (part of) the unit circle.

    ``theta`` is strictly increasing; for an arc crossing the negative real
    axis the angles are unwrapped past pi so that arclength order is kept.
    """

    theta: np.ndarray
    h: float

    @property
    def L(self) -> int:
        return self.theta.size

    @property
    def z(self) -> np.ndarray:
        return np.exp(1j * self.theta)

    @property
    def normal(self) -> np.ndarray:
        """Outward unit normal nu_1 + i nu_2 (equal to z on the unit circle)."""
        return self.z

    @property
    def length(self) -> float:
        return self.L * self.h

    @property
    def edges(self) -> np.ndarray:
        """Cell boundaries, ``L + 1`` angles."""
        return np.concatenate([self.theta - self.h / 2, [self.theta[-1] + self.h / 2]])


@dataclass(frozen=True)
class Arc:
    """Contiguous accessible part Gamma of the boundary."""

    fraction: Fraction
    center: float = 0.0

    @property
    def length(self) -> float:
        return float(self.fraction) * 2 * np.pi

    @property
    def start(self) -> float:
        return self.center - self.length / 2

    @property
    def endpoints(self) -> tuple[complex, complex]:
        return np.exp(1j * self.start), np.exp(1j * (self.start + self.length))

    def distance(self, theta) -> np.ndarray:
        """Arclength from the starting point z_0, measured counter-clockwise."""
        return np.mod(np.asarray(theta) - self.start, 2 * np.pi)

    @property
    def is_full(self) -> bool:
        return self.fraction == 1


def boundary_grid(L: int) -> BoundaryGrid:
    """Uniform grid of ``L`` cell midpoints ``theta_l = -pi + (2l - 1) pi / L``."""
    if int(L) != L or L < 4 or L % 2:
        raise DiscretizationError(f"L must be an even integer >= 4, got {L}")
    L = int(L)
    ell = np.arange(1, L + 1)
    return BoundaryGrid(theta=-np.pi + (2 * ell - 1) * np.pi / L, h=2 * np.pi / L)


def arc_subset(grid: BoundaryGrid, fraction, center: float = 0.0) -> tuple[Arc, BoundaryGrid]:
    """Restrict a full-boundary grid to the arc of relative length ``fraction``.

    The arc is centered at angle ``center``. Its endpoints must fall on cell
    boundaries of ``grid``.
    """
    frac = Fraction(fraction).limit_denominator(10**6)
    if not 0 < frac <= 1:
        raise AlignmentError(f"fraction must lie in (0, 1], got {fraction}")
    n = frac * grid.L
    if n.denominator != 1:
        raise AlignmentError(f"fraction*L = {float(n)} is not an integer")
    n = int(n)
    arc = Arc(frac, center)
    if n == grid.L:
        return Arc(frac, 0.0), grid
    # first cell boundary of the arc, in units of cells from -pi
    offset = (arc.start + np.pi) / grid.h
    first = round(offset)
    if abs(offset - first) > 1e-9:
        raise AlignmentError("arc endpoints do not fall on cell boundaries")
    idx = (first + np.arange(n)) % grid.L
    theta = grid.theta[idx].copy()
    theta = theta[0] + np.mod(theta - theta[0], 2 * np.pi)
    return arc, BoundaryGrid(theta=theta, h=grid.h)


@dataclass(frozen=True)
class ConductivityField:
    """Admittivity gamma on the plane, equal to 1 outside the unit disc.

    Parameters
    ----------
    evaluator : callable
        Vectorized closed form ``z -> gamma(z)``.
    smoothness : {"C2", "discontinuous"}
    tag : str
        Short name used in file headers.
    params : dict
        Shape parameters, kept for export.
    potential : callable, optional
        Closed form of the Schrodinger potential ``Laplace(sqrt(gamma)) / sqrt(gamma)``.
    """

    evaluator: Callable[[np.ndarray], np.ndarray]
    smoothness: str
    tag: str
    params: dict = field(default_factory=dict)
    potential: Callable[[np.ndarray], np.ndarray] | None = None

    def __call__(self, z) -> np.ndarray:
        z = np.asarray(z, dtype=complex)
        return np.where(np.abs(z) < 1, self.evaluator(z), 1.0)

    def sample(self, n: int, extent: float = 1.0) -> tuple[np.ndarray, np.ndarray]:
        """Values on an ``n x n`` node grid over ``[-extent, extent)^2``.

        Returns ``(z, values)`` with ``z[i, j] = x_j + i y_i``.
        """
        x = -extent + 2 * extent * np.arange(n) / n
        z = x[None, :] + 1j * x[:, None]
        return z, self(z)

    @property
    def is_homogeneous(self) -> bool:
        return self.tag == "homogeneous"


def _check_support(center: complex, radius: float) -> None:
    if abs(center) + radius > 1 - BOUNDARY_LAYER + 1e-12:
        raise SupportError(
            f"inclusion |z0| + rho = {abs(center) + radius:.3f} exceeds {1 - BOUNDARY_LAYER}"
        )


def homogeneous() -> ConductivityField:
    return ConductivityField(
        evaluator=lambda z: np.ones(np.shape(z)),
        smoothness="C2",
        tag="homogeneous",
        potential=lambda z: np.zeros(np.shape(z)),
    )


def phantom_c2(amplitude: float = 2.0, center: complex = 0.3 + 0.3j, radius: float = 0.4) -> ConductivityField:
    """Smooth bump ``1 + a (1 - r^2)^3`` with ``r = |z - z0| / rho``.

    The bump has two vanishing radial derivatives at ``r = 1`` so the
    conductivity is twice continuously differentiable.
    """
    _check_support(center, radius)
    a, z0, rho = float(amplitude), complex(center), float(radius)

    def sigma(z):
        r2 = np.abs(z - z0) ** 2 / rho**2
        return 1 + a * np.where(r2 < 1, (1 - r2) ** 3, 0.0)

    def potential(z):
        z = np.asarray(z, dtype=complex)
        R = np.abs(z - z0)
        r = R / rho
        inside = r < 1
        w = np.where(inside, 1 - r**2, 0.0)
        s = np.sqrt(1 + a * w**3)
        # radial derivatives of sigma in R
        d1 = a * (-6 * r * w**2) / rho
        d2 = a * (-6 * w**2 + 24 * r**2 * w) / rho**2
        d1_over_R = a * (-6 * w**2) / rho**2
        s2 = d2 / (2 * s) - d1**2 / (4 * s**3)
        # Laplacian of a radial function: s'' + s'/R, with s'/R regular at R = 0
        lap = s2 + d1_over_R / (2 * s)
        return np.where(inside, lap / s, 0.0)

    return ConductivityField(
        evaluator=sigma,
        smoothness="C2",
        tag="c2",
        params={"amplitude": a, "center": z0, "radius": rho},
        potential=potential,
    )


def phantom_discontinuous(
    amplitude: float = 1.0, center: complex = -0.3 + 0.2j, radius: float = 0.25
) -> ConductivityField:
    """Piecewise constant disc inclusion ``1 + a * 1{|z - z0| < rho}``."""
    _check_support(center, radius)
    a, z0, rho = float(amplitude), complex(center), float(radius)
    return ConductivityField(
        evaluator=lambda z: 1 + a * (np.abs(z - z0) < rho),
        smoothness="discontinuous",
        tag="discontinuous",
        params={"amplitude": a, "center": z0, "radius": rho},
    )


PHANTOMS = {
    "homogeneous": homogeneous,
    "c2": phantom_c2,
    "discontinuous": phantom_discontinuous,
}


def make_phantom(tag: str, **params) -> ConductivityField:
    try:
        factory = PHANTOMS[tag]
    except KeyError:
        raise ValueError(f"unknown phantom {tag!r}; choose from {sorted(PHANTOMS)}") from None
    return factory(**params)

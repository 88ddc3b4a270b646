"""Orthonormal Haar wavelets on an arc of the unit circle.

Functions are piecewise constant on the cells of a :class:`BoundaryGrid`.
The family is ordered as: scaling function, then dyadic levels from coarse to
fine, left to right within a level. When the dyadic levels cannot reach the
requested count on an arc whose cell count is not a power of two, the
family is completed with finest-width wavelets on the aligned and then the
half-shifted two-cell partition, each orthonormalized (modified Gram-Schmidt)
against the functions already present.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .geometry import AlignmentError, Arc, BoundaryGrid


class OverdeterminedBasisError(ValueError):
    """More basis functions requested than grid cells on the arc."""


@dataclass(frozen=True)
class HaarDescriptor:
    kind: str  # "scaling", "haar" or "completion"
    level: int
    offset: int  # first cell of the support, counted from the start of the arc
    width: int  # support width in cells
    height: float


@dataclass(frozen=True)
class HaarBasis:
    """Haar family on an arc.

    ``Phi`` holds the grid samples scaled by ``sqrt(length / L)`` so that its
    columns have unit Euclidean norm; ``values`` are the unscaled samples of
    the L2-normalized functions.
    """

    arc: Arc
    grid: BoundaryGrid
    Phi: np.ndarray
    descriptors: tuple[HaarDescriptor, ...]

    @property
    def J(self) -> int:
        return self.Phi.shape[1]

    @property
    def L(self) -> int:
        return self.Phi.shape[0]

    @property
    def values(self) -> np.ndarray:
        return self.Phi * np.sqrt(self.L / self.arc.length)

    @property
    def heights(self) -> np.ndarray:
        return np.array([d.height for d in self.descriptors])

    @property
    def widths(self) -> np.ndarray:
        """Support widths in arclength."""
        return np.array([d.width for d in self.descriptors]) * self.grid.h

    def describe(self) -> str:
        """Plain-text table of (index, kind, level, offset, width, height)."""
        lines = ["# index kind level offset width height"]
        for j, d in enumerate(self.descriptors, start=1):
            lines.append(f"{j} {d.kind} {d.level} {d.offset} {d.width} {d.height:.17g}")
        return "\n".join(lines) + "\n"


def _dyadic_levels(ncells: int, min_width: int):
    """Yield (level, width) for dyadic levels whose halves are whole cells."""
    level, width = 1, ncells
    while width >= min_width and width % 2 == 0:
        yield level, width
        level += 1
        if width % 2:
            break
        width //= 2


def build_haar(arc: Arc, J: int, grid: BoundaryGrid, min_width: float | None = None) -> HaarBasis:
    """Construct ``J`` orthonormal Haar functions on ``arc`` sampled on ``grid``.

    Parameters
    ----------
    arc : Arc
    J : int
        Number of functions.
    grid : BoundaryGrid
        Grid restricted to the arc (see :func:`arc_subset`).
    min_width : float, optional
        Finest wavelet support width in arclength; defaults to two cells.
    """
    n = grid.L
    if not np.isclose(grid.length, arc.length, rtol=1e-12):
        raise AlignmentError(f"grid covers {grid.length}, arc has length {arc.length}")
    if not np.allclose(np.diff(grid.theta), grid.h, rtol=0, atol=1e-12):
        raise AlignmentError("grid is not uniform")
    if J > n:
        raise OverdeterminedBasisError(f"J={J} exceeds the {n} cells on the arc")
    if J < 1:
        raise ValueError("J must be positive")
    if min_width is None:
        wmin = 2
    else:
        wmin = min_width / grid.h
        if abs(wmin - round(wmin)) > 1e-9 or round(wmin) % 2:
            raise AlignmentError("finest width must be an even number of cells")
        wmin = int(round(wmin))

    length = arc.length
    cols: list[np.ndarray] = []
    desc: list[HaarDescriptor] = []

    h1 = np.sqrt(1 / length)
    cols.append(np.full(n, h1))
    desc.append(HaarDescriptor("scaling", 0, 0, n, h1))

    for level, width in _dyadic_levels(n, wmin):
        if len(cols) == J:
            break
        height = np.sqrt(2 ** (level - 1) / length)
        for offset in range(0, n, width):
            if len(cols) == J:
                break
            v = np.zeros(n)
            v[offset : offset + width // 2] = height
            v[offset + width // 2 : offset + width] = -height
            cols.append(v)
            desc.append(HaarDescriptor("haar", level, offset, width, height))

    if len(cols) < J:
        _complete(cols, desc, n, J, wmin, length)

    Phi = np.column_stack(cols) * np.sqrt(length / n)
    return HaarBasis(arc=arc, grid=grid, Phi=Phi, descriptors=tuple(desc))


def _complete(cols, desc, n, J, wmin, length):
    level = max((d.level for d in desc), default=0) + 1
    height = np.sqrt(2 / (wmin * length / n))
    scale = np.sqrt(length / n)
    basis = [c * scale for c in cols]
    for shift in (0, wmin // 2):
        for offset in range(shift, n - wmin + 1, wmin):
            v = np.zeros(n)
            v[offset : offset + wmin // 2] = 1.0
            v[offset + wmin // 2 : offset + wmin] = -1.0
            v /= np.linalg.norm(v)
            for b in basis:
                v = v - (b @ v) * b
            nv = np.linalg.norm(v)
            if nv < 1e-8:
                continue
            v /= nv
            basis.append(v)
            cols.append(v / scale)
            desc.append(HaarDescriptor("completion", level, offset, wmin, height))
            if len(cols) == J:
                return
    raise OverdeterminedBasisError(f"could only build {len(cols)} independent functions")


def analyze(basis: HaarBasis, samples) -> np.ndarray:
    """Coefficients ``Phi^T f`` of grid samples in the normalized basis."""
    samples = np.asarray(samples)
    if samples.shape[0] != basis.L:
        raise ValueError(f"expected {basis.L} samples, got {samples.shape[0]}")
    return basis.Phi.T @ samples


def synthesize(basis: HaarBasis, coefficients) -> np.ndarray:
    """Grid values ``Phi b`` from normalized-basis coefficients."""
    coefficients = np.asarray(coefficients)
    if coefficients.shape[0] != basis.J:
        raise ValueError(f"expected {basis.J} coefficients, got {coefficients.shape[0]}")
    return basis.Phi @ coefficients

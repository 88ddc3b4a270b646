"""Faddeev Green's function and boundary kernel matrices.

The reduced function

    g_k(z) = (2 pi)^-2 \\int e^{i z . xi} / (|xi|^2 + 2 k (xi_1 + i xi_2)) d xi

has the closed form ``g_1(w) = e^{-iw} Re E1(-iw) / (2 pi)`` and satisfies
``g_k(z) = g_1(k z)``. Consequently ``G_k(z) = e^{ikz} g_k(z)`` equals
``Re E1(-ikz) / (2 pi)`` and is real valued.

``g1_quadrature`` evaluates the defining integral directly in polar
coordinates and serves as an independent check of the closed form.
"""

from __future__ import annotations

from pathlib import Path

import numpy as np
from scipy.special import exp1, it2j0y0

from .geometry import BoundaryGrid
from .io import array_hash, read_matrix, write_matrix

EULER_GAMMA = np.euler_gamma

VARIANTS = ("standard", "conjugated", "cauchy", "cauchy_conjugate")


class SingularityError(ValueError):
    """Kernel evaluated at its logarithmic singularity z = 0."""


class ExcludedFrequencyError(ValueError):
    """k = 0 is excluded for the Faddeev kernels."""


def _check_nonzero(w, what):
    if np.any(np.asarray(w) == 0):
        raise SingularityError(f"{what} is singular at 0")


def g1(w) -> np.ndarray:
    """Reduced Green's function ``g_1(w)`` at nonzero complex ``w``."""
    w = np.asarray(w, dtype=complex)
    _check_nonzero(w, "g_1")
    u = -1j * w
    return np.exp(u) * exp1(u).real / (2 * np.pi)


def gk(z, k) -> np.ndarray:
    """``g_k(z) = g_1(k z)``."""
    if k == 0:
        raise ExcludedFrequencyError("k = 0 has no Faddeev Green's function")
    return g1(k * np.asarray(z, dtype=complex))


def Gk(z, k) -> np.ndarray:
    """Faddeev Green's function ``G_k(z) = e^{ikz} g_k(z)`` (real valued)."""
    if k == 0:
        raise ExcludedFrequencyError("k = 0 has no Faddeev Green's function")
    w = k * np.asarray(z, dtype=complex)
    _check_nonzero(w, "G_k")
    return exp1(-1j * w).real / (2 * np.pi)


def _pairwise(z):
    d = z[:, None] - z[None, :]
    np.fill_diagonal(d, 1.0)  # placeholder, diagonal is zeroed afterwards
    return d


def kernel_matrix(grid: BoundaryGrid, k: complex, variant: str = "standard") -> np.ndarray:
    """Kernel ``K(z_l, z_l')`` on the grid nodes with a hard zero diagonal.

    Variants
    --------
    standard          ``G_k(z - zeta)``
    conjugated        ``G_k(-conj(z) + conj(zeta))``
    cauchy            ``e^{i conj(k) (z - zeta)} / (4 pi (z - zeta))``
    cauchy_conjugate  ``conj(e^{i k (z - zeta)} / (4 pi (z - zeta)))``
    """
    if variant not in VARIANTS:
        raise ValueError(f"unknown variant {variant!r}")
    d = _pairwise(grid.z)
    if variant == "standard":
        K = Gk(d, k)
    elif variant == "conjugated":
        K = Gk(-np.conj(d), k)
    elif variant == "cauchy":
        K = np.exp(1j * np.conj(k) * d) / (4 * np.pi * d)
    else:
        K = np.conj(np.exp(1j * k * d) / (4 * np.pi * d))
    np.fill_diagonal(K, 0)
    return K


# ---------------------------------------------------------------------------
# quadrature oracle


def _gauss_panels(edges, n):
    x, w = np.polynomial.legendre.leggauss(n)
    e = np.asarray(edges, dtype=float)
    mid, half = (e[:-1] + e[1:]) / 2, (e[1:] - e[:-1]) / 2
    return (mid[:, None] + half[:, None] * x).ravel(), (half[:, None] * w).ravel()


def _graded(a, b, point, levels, ratio, n_uniform):
    """Panel edges on [a, b] refined geometrically toward the interior point."""
    edges = set(np.linspace(a, b, n_uniform + 1))
    for side in (a, b):
        span = point - side
        edges.update(point - span * ratio**j for j in range(1, levels))
    edges.add(point)
    return np.array(sorted(e for e in edges if a <= e <= b))


def g1_quadrature(
    z: complex,
    k: complex = 1.0,
    rmax: float = 200.0,
    order: int = 10,
    levels: int = 30,
    nalpha: int = 4096,
) -> complex:
    """Evaluate ``g_k(z)`` from its Fourier integral.

    The integrand in polar coordinates ``xi = rho e^{i alpha}`` is
    ``e^{i rho (x cos a + y sin a)} / (rho + 2 k e^{i a})``, with an integrable
    point singularity at ``rho = 2|k|``, ``alpha = pi - arg k``. The disc
    ``rho < 4|k|`` uses Gauss panels graded toward that point in both
    variables; the annulus up to ``rmax`` uses Gauss panels in ``rho`` and
    the periodic trapezoid rule in ``alpha``; beyond ``rmax`` the symbol is
    replaced by ``1/rho`` and integrated in closed form.
    """
    z, k = complex(z), complex(k)
    if k == 0:
        raise ExcludedFrequencyError("k = 0")
    x, y = z.real, z.imag
    rs = 2 * abs(k)
    a0 = np.pi - np.angle(k)

    def symbol(rho, alpha):
        return np.exp(1j * rho * (x * np.cos(alpha) + y * np.sin(alpha))) / (rho + 2 * k * np.exp(1j * alpha))

    # near disc
    ea = _graded(a0 - np.pi, a0 + np.pi, a0, levels, 0.5, 16)
    al, wal = _gauss_panels(ea, order)
    er = _graded(0.0, 2 * rs, rs, levels, 0.5, 8)
    rho, wr = _gauss_panels(er, order)
    near = wal @ symbol(rho[None, :], al[:, None]) @ wr

    # annulus, chunked in rho to bound memory
    rho2, wr2 = _gauss_panels(np.linspace(2 * rs, rmax, int(2 * (rmax - 2 * rs)) + 1), order)
    alpha = a0 + 2 * np.pi * np.arange(nalpha) / nalpha
    far = 0j
    for i in range(0, rho2.size, 256):
        F = symbol(rho2[None, i : i + 256], alpha[:, None])
        far += (2 * np.pi / nalpha) * np.sum(F @ wr2[i : i + 256])

    # tail: 2 pi \int_X^inf J0(t)/t dt with X = rmax |z|
    X = rmax * abs(z)
    tail = 2 * np.pi * (it2j0y0(X)[0] - np.log(X / 2) - EULER_GAMMA)
    return complex((near + far + tail) / (4 * np.pi**2))


# ---------------------------------------------------------------------------
# tabulation


def g1_table(radii, angles) -> np.ndarray:
    """``g_1`` on the log-polar grid ``w = r e^{i a}``; rows follow ``radii``."""
    r = np.asarray(radii, dtype=float)
    a = np.asarray(angles, dtype=float)
    return g1(r[:, None] * np.exp(1j * a[None, :]))


def cached_g1_table(directory, radii, angles) -> np.ndarray:
    """Load ``g1_table`` from ``directory`` if present, else compute and store it.

    The file name carries a hash of the grid so different grids never collide.
    """
    key = array_hash(np.asarray(radii, float), np.asarray(angles, float))
    path = Path(directory) / f"g1_table_{key}.txt"
    if path.exists():
        values, header = read_matrix(path)
        if header.get("hash") == key:
            return values.astype(complex)
    values = g1_table(radii, angles)
    path.parent.mkdir(parents=True, exist_ok=True)
    write_matrix(path, values, {"hash": key, "rows": "radius", "cols": "angle"})
    return values

"""Reference CGO solutions from the Lippmann-Schwinger equation.

For a smooth conductivity the Schrodinger potential ``q = Lap(sqrt s)/sqrt s``
is compactly supported in the disc and ``mu(., k) = e^{-ikz} psi(., k)``
solves ``mu = 1 - g_k * (q mu)``. The convolution is applied on a periodic
node grid over ``[-s, s)^2`` by FFT with the kernel cut off at ``|z| <= 2``;
for ``s > 2`` the wrap-around never couples two points of the disc.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy import integrate
from scipy.special import gamma

from .geometry import BoundaryGrid, ConductivityField
from .green import EULER_GAMMA, ExcludedFrequencyError, g1
from .krylov import ConvergenceError, gmres

# Origin correction for the punctured trapezoid rule applied to log|z| on the
# unit square lattice: half the derivative at 0 of the lattice zeta function
# sum' |j|^(-2s) = 4 zeta(s) beta(s).
LOG_LATTICE_CONSTANT = -0.5 * np.log(2 * np.pi) - np.log(gamma(0.25) ** 2 / (2 * np.pi * np.sqrt(2)))


class SmoothnessError(ValueError):
    """The potential is not defined for a discontinuous conductivity."""


class OracleFailure(RuntimeError):
    """The reference solve did not converge."""


@dataclass(frozen=True)
class PotentialGrid:
    q: np.ndarray  # (N, N), q[i, j] at x_j + i y_i
    extent: float  # grid covers [-extent, extent)^2
    tag: str = ""

    @property
    def N(self) -> int:
        return self.q.shape[0]

    @property
    def h(self) -> float:
        return 2 * self.extent / self.N

    @property
    def x(self) -> np.ndarray:
        return -self.extent + self.h * np.arange(self.N)

    @property
    def z(self) -> np.ndarray:
        return self.x[None, :] + 1j * self.x[:, None]

    def integral(self) -> complex:
        return self.q.sum() * self.h**2


def _fd_laplacian_ratio(field: ConductivityField, z: np.ndarray, step: float) -> np.ndarray:
    """Fourth-order finite-difference ``Lap(sqrt s) / sqrt s``."""
    s = lambda w: np.sqrt(field(w))  # noqa: E731
    c = np.array([-1, 16, -30, 16, -1]) / (12 * step**2)
    lap = sum(cj * (s(z + (j - 2) * step) + s(z + 1j * (j - 2) * step)) for j, cj in enumerate(c))
    return lap / s(z)


def schrodinger_potential(field: ConductivityField, N: int = 256, extent: float = 2.1, fd_step: float | None = None) -> PotentialGrid:
    """Sample ``q`` on the ``N x N`` node grid over ``[-extent, extent)^2``.

    Uses the field's closed-form potential when it has one and fourth-order
    finite differences of ``sqrt(sigma)`` otherwise.
    """
    if field.smoothness != "C2":
        raise SmoothnessError(f"potential undefined for a {field.smoothness} conductivity")
    if extent < 2.1 - 1e-12:
        raise ValueError("extent must be at least 2.1 to avoid wrap-around")
    x = -extent + 2 * extent * np.arange(N) / N
    z = x[None, :] + 1j * x[:, None]
    if field.potential is not None:
        q = field.potential(z)
    else:
        q = _fd_laplacian_ratio(field, z, fd_step or 1e-3)
    q = np.where(np.abs(z) < 1, q, 0.0)
    return PotentialGrid(np.real_if_close(q), extent, field.tag)


def radial_potential_integral(field: ConductivityField) -> float:
    """``int q dA`` for the smooth bump phantom, by one-dimensional quadrature.

    Integration by parts turns ``int Lap(s)/s`` into ``int |grad s|^2 / s^2``
    (``s = sqrt(sigma)``) because ``grad s`` vanishes on the edge of the bump,
    leaving ``2 pi int_0^rho (sigma' / (2 sigma))^2 R dR``.
    """
    if field.tag != "c2":
        raise ValueError("closed-form integral is only available for the bump phantom")
    a, rho = field.params["amplitude"], field.params["radius"]

    def integrand(R):
        r = R / rho
        w = 1 - r**2
        dsigma = -6 * a * r * w**2 / rho
        return (dsigma / (2 * (1 + a * w**3))) ** 2 * R

    val, _ = integrate.quad(integrand, 0, rho, epsabs=0, epsrel=1e-13, limit=200)
    return 2 * np.pi * val


def periodic_kernel(N: int, extent: float, k: complex, cutoff: float = 2.0) -> np.ndarray:
    """``g_k`` on the periodic difference grid, zero beyond ``cutoff``.

    Off the origin the kernel is sampled pointwise (plain trapezoid rule).
    The origin weight is the one that makes the punctured trapezoid rule
    exact to high order for ``log|z|`` times a smooth function.
    """
    h = 2 * extent / N
    n = np.fft.fftfreq(N, 1 / N)  # 0, 1, ..., -1
    d = h * (n[None, :] + 1j * n[:, None])
    d[0, 0] = 1.0
    K = np.where(np.abs(d) <= cutoff, g1(k * d), 0.0)
    K[0, 0] = origin_weight(k, h)
    return K


def origin_weight(k: complex, h: float) -> float:
    """Value standing in for ``g_k(0)`` in the punctured trapezoid rule on an ``h`` lattice."""
    return (-EULER_GAMMA - np.log(abs(k)) - np.log(h) - LOG_LATTICE_CONSTANT) / (2 * np.pi)


@dataclass(frozen=True)
class LSSolution:
    k: complex
    potential: PotentialGrid
    mu: np.ndarray
    iterations: int

    def mu_at(self, points) -> np.ndarray:
        """``mu`` anywhere from the integral equation itself (no kernel cutoff)."""
        P = self.potential
        mask = P.q != 0
        src = P.z[mask]
        dens = (P.q * self.mu)[mask]
        pts = np.asarray(points, dtype=complex).ravel()
        out = np.empty(pts.size, complex)
        # a point on a grid node gets the same origin weight as the convolution
        w0 = origin_weight(self.k, P.h)
        for i in range(0, pts.size, 64):
            d = pts[i : i + 64, None] - src[None, :]
            hit = np.abs(d) < 1e-12 * P.h
            K = g1(self.k * np.where(hit, 1.0, d))
            K[hit] = w0
            out[i : i + 64] = 1 - P.h**2 * (K @ dens)
        return out.reshape(np.shape(points))

    def psi_trace(self, grid: BoundaryGrid) -> np.ndarray:
        return np.exp(1j * self.k * grid.z) * self.mu_at(grid.z)


def lippmann_schwinger(potential: PotentialGrid, k: complex, tol: float = 1e-10) -> LSSolution:
    """Solve ``(I + g_k * (q .)) mu = 1`` on the potential grid."""
    if k == 0:
        raise ExcludedFrequencyError("k = 0")
    P = potential
    Kf = np.fft.fft2(periodic_kernel(P.N, P.extent, k)) * P.h**2
    q = P.q
    shape = q.shape

    def apply(V):
        out = np.empty_like(V)
        for c in range(V.shape[1]):
            m = V[:, c].reshape(shape)
            out[:, c] = (m + np.fft.ifft2(Kf * np.fft.fft2(q * m))).ravel()
        return out

    b = np.ones(P.N * P.N, complex)
    try:
        mu, info = gmres(apply, b, tol=tol)
    except ConvergenceError as err:
        raise OracleFailure(f"Lippmann-Schwinger solve failed for k={k}: {err}") from err
    return LSSolution(complex(k), P, mu.reshape(shape), info.iterations)

"""Scattering transforms, D-bar equations in k, and admittivity recovery.

The k-plane is discretized by the square lattice ``dk (a + i b)`` cut to
``|k| <= R``. The solid Cauchy transform ``(1/pi) int f(k') / (k - k') dk'``
becomes a dense matrix with weight ``dk^2 / pi`` and a zero diagonal (the
principal value of ``1/k`` over a centred square vanishes).
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .bie import CGOTraceSet
from .fem import DNMap
from .geometry import ConductivityField
from .krylov import gmres


class InterpolationError(ValueError):
    """Too few punctured-grid values to fill the excluded nodes."""


class IncompleteDataError(ValueError):
    """Traces are missing for some frequencies of the k-grid."""


class DivisionSingularityError(ZeroDivisionError):
    """``M+`` or ``M-`` vanishes where the potential is formed."""


# ---------------------------------------------------------------------------
# k-grids and scattering data


@dataclass(frozen=True)
class KGrid:
    R: float
    dk: float
    ks: np.ndarray  # all lattice nodes with |k| <= R, including 0
    exclude: float = 0.1

    @property
    def n(self) -> int:
        return self.ks.size

    @property
    def punctured(self) -> np.ndarray:
        """Mask of nodes where data is computed directly (``|k| >= exclude``)."""
        return np.abs(self.ks) >= self.exclude

    @property
    def zero_index(self) -> int:
        return int(np.argmin(np.abs(self.ks)))

    @property
    def conj_index(self) -> np.ndarray:
        """Permutation sending each node to its complex conjugate."""
        lut = {self._key(k): i for i, k in enumerate(self.ks)}
        return np.array([lut[self._key(np.conj(k))] for k in self.ks])

    def _key(self, k):
        return (int(round(k.real / self.dk)), int(round(k.imag / self.dk)))

    def cauchy_matrix(self) -> np.ndarray:
        d = self.ks[:, None] - self.ks[None, :]
        np.fill_diagonal(d, 1.0)
        C = self.dk**2 / (np.pi * d)
        np.fill_diagonal(C, 0.0)
        return C


def k_grid(R: float, dk: float, exclude: float = 0.1) -> KGrid:
    m = int(np.floor(R / dk + 1e-9))
    a = np.arange(-m, m + 1)
    K = dk * (a[None, :] + 1j * a[:, None]).ravel()
    K = K[np.abs(K) <= R + 1e-9]
    return KGrid(float(R), float(dk), K, float(exclude))


@dataclass
class ScatteringGrid:
    kind: str  # t, S12 or S21
    grid: KGrid
    values: np.ndarray  # (n,), NaN at excluded nodes until filled
    fraction: str = "1"
    tag: str = ""

    @property
    def R(self) -> float:
        return self.grid.R

    def truncated(self, R: float) -> ScatteringGrid:
        """Zero outside ``|k| <= R`` (the regularizing low-pass filter)."""
        v = np.where(np.abs(self.grid.ks) <= R + 1e-9, self.values, 0)
        return ScatteringGrid(self.kind, self.grid, v, self.fraction, self.tag)

    def image(self) -> np.ndarray:
        """Values on the square lattice (NaN outside the disc), rows = Im k."""
        m = int(np.floor(self.grid.R / self.grid.dk + 1e-9))
        img = np.full((2 * m + 1, 2 * m + 1), np.nan + 0j)
        a = np.round(self.grid.ks.real / self.grid.dk).astype(int) + m
        b = np.round(self.grid.ks.imag / self.grid.dk).astype(int) + m
        img[b, a] = self.values
        return img


def _punctured_values(grid: KGrid, traces: CGOTraceSet) -> np.ndarray:
    idx = np.flatnonzero(grid.punctured)
    lut = {grid._key(k): i for i, k in enumerate(traces.ks)}
    try:
        cols = [lut[grid._key(grid.ks[i])] for i in idx]
    except KeyError as err:
        raise IncompleteDataError(f"no trace for k node {err}") from None
    return idx, np.asarray(cols)


def scattering_t(dn: DNMap, psi: CGOTraceSet, grid: KGrid) -> ScatteringGrid:
    """``t(k) = int e^{i conj(k z)} [dLambda psi] dS`` by the midpoint rule."""
    idx, cols = _punctured_values(grid, psi)
    z = psi.grid.z[:, None]
    k = grid.ks[idx][None, :]
    F = dn.apply(psi.values[:, cols])
    vals = np.full(grid.n, np.nan + 0j)
    vals[idx] = psi.grid.h * np.sum(np.exp(1j * np.conj(k) * np.conj(z)) * F, axis=0)
    return ScatteringGrid("t", grid, vals, psi.fraction, psi.tag)


def scattering_S(psi12: CGOTraceSet, psi21: CGOTraceSet, grid: KGrid) -> tuple[ScatteringGrid, ScatteringGrid]:
    """Off-diagonal scattering data from the ``Psi12`` and ``Psi21`` traces."""
    out = []
    for tr, sign in ((psi12, 1), (psi21, -1)):
        idx, cols = _punctured_values(grid, tr)
        z = tr.grid.z[:, None]
        kb = np.conj(grid.ks[idx])[None, :]
        nu = tr.grid.normal[:, None]
        if sign == 1:
            integrand = np.exp(-1j * kb * z) * tr.values[:, cols] * nu
        else:
            integrand = np.exp(1j * kb * np.conj(z)) * tr.values[:, cols] * np.conj(nu)
        vals = np.full(grid.n, np.nan + 0j)
        vals[idx] = sign * 1j / (2 * np.pi) * tr.grid.h * integrand.sum(axis=0)
        out.append(ScatteringGrid("S12" if sign == 1 else "S21", grid, vals, tr.fraction, tr.tag))
    return out[0], out[1]


def interpolate_to_zero(s: ScatteringGrid, fit_radius: float = 0.5) -> ScatteringGrid:
    """Fill excluded nodes with a least-squares quadratic in ``(Re k, Im k)``.

    The fit uses the computed nodes with ``exclude <= |k| <= fit_radius``.
    """
    g = s.grid
    k = g.ks
    fit = g.punctured & (np.abs(k) <= fit_radius + 1e-9)
    if fit.sum() < 6:
        raise InterpolationError(f"{fit.sum()} fit points, need at least 6")

    def design(x):
        a, b = x.real, x.imag
        return np.column_stack([np.ones_like(a), a, b, a * a, a * b, b * b])

    coef, *_ = np.linalg.lstsq(design(k[fit]), s.values[fit], rcond=None)
    vals = s.values.copy()
    holes = ~g.punctured
    vals[holes] = design(k[holes]) @ coef
    return ScatteringGrid(s.kind, g, vals, s.fraction, s.tag)


# ---------------------------------------------------------------------------
# D-bar solvers


def _e(z, k):
    """``e(z, k) = exp(i (k z + conj(k z)))`` for arrays broadcasting together."""
    return np.exp(2j * np.real(k * z))


def dbar_solve_m1(t: ScatteringGrid, zs, chunk: int = 256, tol: float = 1e-10) -> tuple[np.ndarray, dict]:
    """Solve ``mu = 1 + C[T conj(mu)]`` with ``T = t / (4 pi conj k) e(-z, k)``.

    Returns ``mu(z, 0)`` for each ``z`` and solver statistics. ``T`` is set
    to 0 at ``k = 0``.
    """
    g = t.grid
    if np.any(np.isnan(t.values)):
        raise IncompleteDataError("fill the excluded nodes first (interpolate_to_zero)")
    zs = np.asarray(zs, dtype=complex).ravel()
    k = g.ks
    safe = np.where(k == 0, 1, k)
    base = np.where(k == 0, 0, t.values / (4 * np.pi * np.conj(safe)))
    C = g.cauchy_matrix()
    i0 = g.zero_index
    mu0 = np.empty(zs.size, complex)
    stats = {"iterations": 0, "residual": 0.0}
    for s in range(0, zs.size, chunk):
        z = zs[None, s : s + chunk]
        T = base[:, None] * _e(-z, k[:, None])
        X, info = gmres(lambda V: V - C @ (T * np.conj(V)), np.ones((g.n, z.shape[1]), complex), tol=tol, real_linear=True)
        mu0[s : s + chunk] = X[i0]
        stats["iterations"] = max(stats["iterations"], info.iterations)
        stats["residual"] = max(stats["residual"], float(info.residual.max()))
    return mu0, stats


def dbar_solve_m2(S12: ScatteringGrid, S21: ScatteringGrid, zs, chunk: int = 128, tol: float = 1e-10) -> tuple[dict, dict]:
    """Solve the matrix D-bar equation for ``M(z, 0)``.

    Component-wise, with ``R`` the reflection ``k -> conj(k)``,
    ``a = e(z, -k) S21`` and ``b = e(z, conj k) S12``::

        M11 = 1 + C[a R M12]    M12 = C[b R M11]
        M22 = 1 + C[b R M21]    M21 = C[a R M22]

    Both pairs are linear and are solved together as separate columns.
    """
    g = S12.grid
    if np.any(np.isnan(S12.values)) or np.any(np.isnan(S21.values)):
        raise IncompleteDataError("fill the excluded nodes first (interpolate_to_zero)")
    zs = np.asarray(zs, dtype=complex).ravel()
    k = g.ks[:, None]
    n = g.n
    C = g.cauchy_matrix()
    Rp = g.conj_index
    i0 = g.zero_index
    out = {key: np.empty(zs.size, complex) for key in ("M11", "M12", "M21", "M22")}
    stats = {"iterations": 0, "residual": 0.0}
    for s in range(0, zs.size, chunk):
        z = zs[None, s : s + chunk]
        m = z.shape[1]
        a = _e(z, -k) * S21.values[:, None]
        b = _e(z, np.conj(k)) * S12.values[:, None]
        P = np.concatenate([a, b], axis=1)
        Q = np.concatenate([b, a], axis=1)

        def apply(V):
            X1, X2 = V[:n], V[n:]
            return np.concatenate([X1 - C @ (P * X2[Rp]), X2 - C @ (Q * X1[Rp])])

        rhs = np.zeros((2 * n, 2 * m), complex)
        rhs[:n] = 1
        X, info = gmres(apply, rhs, tol=tol)
        out["M11"][s : s + chunk] = X[i0, :m]
        out["M12"][s : s + chunk] = X[n + i0, :m]
        out["M22"][s : s + chunk] = X[i0, m:]
        out["M21"][s : s + chunk] = X[n + i0, m:]
        stats["iterations"] = max(stats["iterations"], info.iterations)
        stats["residual"] = max(stats["residual"], float(info.residual.max()))
    return out, stats


# ---------------------------------------------------------------------------
# z-grids and recovery


@dataclass(frozen=True)
class ZGrid:
    """``n x n`` nodes ``x_j = -extent + 2 extent j / n``; ``n`` even puts 0 on a node."""

    n: int = 64
    extent: float = 1.05
    margin: float = 2.5  # compute M on |z| <= 1 + margin * h

    @property
    def h(self) -> float:
        return 2 * self.extent / self.n

    @property
    def x(self) -> np.ndarray:
        return -self.extent + self.h * np.arange(self.n)

    @property
    def z(self) -> np.ndarray:
        return self.x[None, :] + 1j * self.x[:, None]

    @property
    def inside(self) -> np.ndarray:
        return np.abs(self.z) < 1

    @property
    def active(self) -> np.ndarray:
        return np.abs(self.z) <= 1 + self.margin * self.h


@dataclass
class Reconstruction:
    gamma: np.ndarray  # reported: average of the two recovery formulas
    gamma12: np.ndarray
    gamma21: np.ndarray
    zgrid: ZGrid
    method: int
    fraction: str = "1"
    R: float = 0.0
    metrics: dict = field(default_factory=dict)

    def compute_metrics(self, truth: ConductivityField | None = None) -> dict:
        m = self.zgrid.inside
        g = self.gamma[m]
        re = g.real
        z = self.zgrid.z[m]
        w = np.clip(re - 1, 0, None)
        out = {
            "max": float(re.max()),
            "min": float(re.min()),
            "contrast": float(re.max() - re.min()),
            "max_imag": float(np.abs(g.imag).max()),
        }
        out["reality"] = out["max_imag"] / max(out["max"] - 1, 1e-300)
        if w.sum() > 0:
            c = np.sum(w * z) / w.sum()
            out["centroid_x"], out["centroid_y"] = float(c.real), float(c.imag)
        else:
            out["centroid_x"] = out["centroid_y"] = float("nan")
        if self.method == 2:
            out["consistency"] = float(np.linalg.norm((self.gamma12 - self.gamma21)[m]) / np.linalg.norm(g))
        if truth is not None:
            tv = truth(z)
            out["rel_error"] = float(np.linalg.norm(g - tv) / np.linalg.norm(tv))
            if "center" in truth.params and w.sum() > 0:
                out["centroid_error"] = float(abs(c - truth.params["center"]))
        self.metrics = out
        return out


def _d_dx(f, h, axis):
    return (-np.roll(f, -2, axis) + 8 * np.roll(f, -1, axis) - 8 * np.roll(f, 1, axis) + np.roll(f, 2, axis)) / (12 * h)


def wirtinger(f: np.ndarray, h: float) -> tuple[np.ndarray, np.ndarray]:
    """Fourth-order central differences for ``(d/dz f, d/dzbar f)`` on a grid with ``z = x_j + i y_i``."""
    fx = _d_dx(f, h, 1)
    fy = _d_dx(f, h, 0)
    return (fx - 1j * fy) / 2, (fx + 1j * fy) / 2


def solid_cauchy(f: np.ndarray, h: float, conjugate: bool = False) -> np.ndarray:
    """``h^2 sum_zeta f(zeta) / (z - zeta)`` (or with conjugated denominator), zero self term, by FFT."""
    n = f.shape[0]
    j = np.fft.fftfreq(2 * n, 1 / (2 * n))
    d = h * (j[None, :] + 1j * j[:, None])
    d[0, 0] = 1
    K = 1 / (np.conj(d) if conjugate else d)
    K[0, 0] = 0
    K[n, :] = 0  # the wrap-around row and column never pair two grid points
    K[:, n] = 0
    F = np.zeros((2 * n, 2 * n), complex)
    F[:n, :n] = f
    return h**2 * np.fft.ifft2(np.fft.fft2(K) * np.fft.fft2(F))[:n, :n]


def recover_gamma(M: dict, zgrid: ZGrid, method: int = 2, fraction: str = "1", R: float = 0.0) -> Reconstruction:
    """Admittivity from ``M(z, 0)`` given on the active nodes of ``zgrid``."""
    act = zgrid.active
    full = {}
    for key, v in M.items():
        a = np.ones(zgrid.z.shape, complex) * (1.0 if key in ("M11", "M22") else 0.0)
        a[act] = v
        full[key] = a
    Mp = full["M11"] + full["M12"]
    Mm = full["M22"] + full["M21"]
    ins = zgrid.inside
    for name, arr in (("M+", Mp), ("M-", Mm)):
        small = ins & (np.abs(arr) < 1e-8)
        if small.any():
            raise DivisionSingularityError(f"|{name}| < 1e-8 at z = {zgrid.z[small][0]}")
    dMm, _ = wirtinger(Mm, zgrid.h)
    _, dbarMp = wirtinger(Mp, zgrid.h)
    Q12 = np.where(ins, dbarMp / np.where(ins, Mm, 1), 0)
    Q21 = np.where(ins, dMm / np.where(ins, Mp, 1), 0)
    g12 = np.exp(-2 / np.pi * solid_cauchy(Q12, zgrid.h, conjugate=True))
    g21 = np.exp(-2 / np.pi * solid_cauchy(Q21, zgrid.h))
    return Reconstruction((g12 + g21) / 2, g12, g21, zgrid, method, fraction, R)


def reconstruct_m1(mu0: np.ndarray, zgrid: ZGrid, fraction: str = "1", R: float = 0.0) -> Reconstruction:
    """``sigma = mu(z, 0)^2`` on the active nodes, 1 elsewhere."""
    sig = np.ones(zgrid.z.shape, complex)
    sig[zgrid.active] = mu0**2
    return Reconstruction(sig, sig, sig, zgrid, 1, fraction, R)

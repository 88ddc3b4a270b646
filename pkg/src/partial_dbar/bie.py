"""Boundary integral equations for CGO traces in a Haar basis.

With ``f = sum_j b_j Phi_j`` on the arc, the data term of every equation is
evaluated in coefficient space: ``[dLambda f] = Phi M^T b`` for the D-N
matrix ``M``. The second-kind equation for the coefficients reads

    (I + A) b = c,   A = h Phi^T G_k Phi M^T,   c = Phi^T (incident samples),

with ``h`` the arclength weight of one node. It is solved matrix-free by
GMRES, batching many frequencies together.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .fem import DNMap
from .geometry import BoundaryGrid
from .green import ExcludedFrequencyError, Gk, kernel_matrix
from .io import format_kv, format_matrix
from .krylov import gmres

KINDS = ("psi", "omega", "u1", "u2", "Psi12", "Psi21")


class InconsistencyError(ValueError):
    """Traces and requests refer to different frequencies or grids."""


def incident(kind: str, z: np.ndarray, k) -> np.ndarray:
    """Asymptotic field of a CGO solution, samples ``(L, nk)`` for frequencies ``k``."""
    k = np.atleast_1d(np.asarray(k, dtype=complex))
    if np.any(k == 0):
        raise ExcludedFrequencyError("k = 0 is excluded")
    z = np.asarray(z)[:, None]
    if kind in ("psi", "omega"):
        return np.exp(1j * k * z)
    if kind == "u1":
        return np.exp(1j * k * z) / (1j * k)
    if kind == "u2":
        return np.exp(-1j * k * np.conj(z)) / (-1j * k)
    raise ValueError(f"no incident field for kind {kind!r}")


def kernel_variant(kind: str) -> str:
    return "conjugated" if kind == "u2" else "standard"


@dataclass
class CGOTraceSet:
    """Traces of one kind of CGO solution on the arc grid, one column per ``k``."""

    kind: str
    ks: np.ndarray  # (nk,)
    values: np.ndarray  # (L, nk)
    grid: BoundaryGrid
    fraction: str = "1"
    tag: str = ""
    residuals: np.ndarray | None = None
    iterations: int = 0

    def at(self, k) -> np.ndarray:
        i = np.flatnonzero(np.isclose(self.ks, k, atol=1e-12))
        if i.size == 0:
            raise InconsistencyError(f"no {self.kind} trace at k={k}")
        return self.values[:, i[0]]

    def export(self, directory, prefix: str | None = None) -> list[Path]:
        """One comma-separated complex vector per ``k`` plus a manifest."""
        d = Path(directory)
        d.mkdir(parents=True, exist_ok=True)
        prefix = prefix or f"{self.kind}_{self.fraction.replace('/', 'over')}"
        files = []
        for i, k in enumerate(self.ks):
            p = d / f"{prefix}_k{i:04d}.txt"
            p.write_text(format_matrix(self.values[:, i][None, :], {"k": complex(k)}))
            files.append(p)
        manifest = {
            "kind": self.kind,
            "fraction": self.fraction,
            "phantom": self.tag,
            "nk": len(self.ks),
            "L": self.grid.L,
            "k": ";".join(f"{complex(k)}" for k in self.ks),
        }
        if self.residuals is not None:
            manifest["residuals"] = ";".join(f"{r:.3e}" for r in self.residuals)
        m = d / f"{prefix}_manifest.txt"
        m.write_text(format_kv(manifest))
        return files + [m]


@dataclass
class BieSystem:
    """Second-kind system ``(I + A) b = c`` at one frequency."""

    k: complex
    dn: DNMap
    kernel: np.ndarray  # (L, L) on the arc grid
    rhs: np.ndarray  # c
    scale: float
    stats: dict = field(default_factory=dict)

    @property
    def A(self) -> np.ndarray:
        Phi = self.dn.basis.Phi
        return self.scale * Phi.T @ self.kernel @ Phi @ self.dn.matrix.T

    def solve(self, tol: float = 1e-10) -> np.ndarray:
        b, info = gmres(lambda X: X + self.A @ X, self.rhs, tol=tol)
        self.stats = {"iterations": info.iterations, "residual": float(info.residual.max()), "history": info.history}
        return b


def bie_system(kind: str, dn: DNMap, k: complex, kernel: np.ndarray | None = None) -> BieSystem:
    grid = dn.basis.grid
    if kernel is None:
        kernel = kernel_matrix(grid, k, kernel_variant(kind))
    c = dn.basis.Phi.T @ incident(kind, grid.z, k)[:, 0]
    return BieSystem(complex(k), dn, kernel, c, grid.h)


def solve_trace(kind: str, dn: DNMap, k: complex, kernel: np.ndarray | None = None, tol: float = 1e-10) -> np.ndarray:
    """Trace of ``psi``/``omega``/``u1``/``u2`` at one ``k`` on the basis grid."""
    system = bie_system(kind, dn, k, kernel)
    return dn.basis.Phi @ system.solve(tol)


def solve_traces_batched(
    kind: str,
    dn: DNMap,
    ks,
    kernels: np.ndarray,
    tol: float = 1e-10,
) -> tuple[np.ndarray, np.ndarray, int]:
    """Matrix-free batched solve; ``kernels`` has shape ``(nk, L, L)``.

    Returns ``(traces (L, nk), residuals, iterations)``.
    """
    Phi, M = dn.basis.Phi, dn.matrix
    h = dn.basis.grid.h
    C = Phi.T @ incident(kind, dn.basis.grid.z, ks)

    def apply(B):
        F = Phi @ (M.T @ B)  # [dLambda f] on the grid
        KF = np.einsum("kij,jk->ik", kernels, F)
        return B + h * (Phi.T @ KF)

    B, info = gmres(apply, C, tol=tol)
    return Phi @ B, info.residual, info.iterations


def standard_kernels(grid: BoundaryGrid, ks) -> np.ndarray:
    """``G_k(z_l - z_l')`` with zero diagonal for each ``k``: shape ``(nk, L, L)``."""
    d = grid.z[:, None] - grid.z[None, :]
    np.fill_diagonal(d, 1.0)
    out = np.empty((len(ks), grid.L, grid.L))
    for i, k in enumerate(ks):
        out[i] = Gk(d, k)
        np.fill_diagonal(out[i], 0.0)
    return out


def solve_trace_set(kind: str, dn: DNMap, ks, chunk: int = 32, tol: float = 1e-10, kernels=None) -> CGOTraceSet:
    """Traces at every ``k`` in ``ks`` (computing kernels chunk by chunk)."""
    ks = np.asarray(ks, dtype=complex)
    grid = dn.basis.grid
    out = np.empty((grid.L, ks.size), complex)
    res = np.empty(ks.size)
    its = 0
    for s in range(0, ks.size, chunk):
        kc = ks[s : s + chunk]
        if kernels is not None:
            K = kernels[s : s + chunk]
        elif kind == "u2":
            # G_k(-conj d) = G_conj(k)(d)
            K = standard_kernels(grid, np.conj(kc))
        else:
            K = standard_kernels(grid, kc)
        out[:, s : s + chunk], res[s : s + chunk], it = solve_traces_batched(kind, dn, kc, K, tol)
        its = max(its, it)
    return CGOTraceSet(kind, ks, out, grid, str(dn.basis.arc.fraction), dn.tag, res, its)


def _cauchy_base(grid: BoundaryGrid) -> np.ndarray:
    d = grid.z[:, None] - grid.z[None, :]
    np.fill_diagonal(d, 1.0)
    C = grid.h / (4 * np.pi * d)
    np.fill_diagonal(C, 0.0)
    return C


def psi_offdiagonal(which: str, dn: DNMap, u: CGOTraceSet) -> CGOTraceSet:
    """``Psi12`` from ``u2`` traces or ``Psi21`` from ``u1`` traces.

    The Cauchy-type kernels factor as ``e^{i conj(k) z} / (4 pi (z - zeta)) e^{-i conj(k) zeta}``
    (and the conjugate), so all frequencies share one matrix product.
    """
    which = str(which)
    need = {"12": "u2", "21": "u1"}[which]
    if u.kind != need:
        raise InconsistencyError(f"Psi{which} needs {need} traces, got {u.kind}")
    grid = dn.basis.grid
    if u.grid.L != grid.L or not np.allclose(u.grid.theta, grid.theta):
        raise InconsistencyError("trace grid differs from the D-N basis grid")
    z = grid.z[:, None]
    kb = np.conj(u.ks)[None, :]
    F = dn.apply(u.values)
    C0 = _cauchy_base(grid)
    if which == "12":
        vals = np.exp(1j * kb * z) * (C0 @ (np.exp(-1j * kb * z) * F))
    else:
        vals = np.exp(-1j * kb * np.conj(z)) * (np.conj(C0) @ (np.exp(1j * kb * np.conj(z)) * F))
    return CGOTraceSet(f"Psi{which}", u.ks, vals, grid, u.fraction, u.tag)


def psi_offdiagonal_direct(which: str, dn: DNMap, u: CGOTraceSet) -> CGOTraceSet:
    """Same as :func:`psi_offdiagonal` but with the kernel matrix formed per ``k``."""
    variant = {"12": "cauchy", "21": "cauchy_conjugate"}[str(which)]
    grid = dn.basis.grid
    F = dn.apply(u.values)
    vals = np.empty_like(F)
    for i, k in enumerate(u.ks):
        vals[:, i] = grid.h * kernel_matrix(grid, k, variant) @ F[:, i]
    return CGOTraceSet(f"Psi{which}", u.ks, vals, grid, u.fraction, u.tag)


def relative_l2(a, b) -> float:
    """``|a - b| / |b|`` in the discrete L2 norm of the grid."""
    return float(np.linalg.norm(np.asarray(a) - np.asarray(b)) / np.linalg.norm(b))

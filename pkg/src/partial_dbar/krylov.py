"""Restarted GMRES for many right-hand sides at once.

All columns of a block share the Arnoldi loop so each step is a single
operator application on an ``(n, m)`` array, which lets the operator use
matrix-matrix products. Operators that are only real-linear (they contain a
complex conjugation) are handled by running the iteration over the reals:
inner products become ``Re sum(conj(u) v)`` and the Hessenberg matrix is real.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable

import numpy as np


class ConvergenceError(RuntimeError):
    """GMRES hit its iteration cap; ``history`` holds the residual record."""

    def __init__(self, message, history):
        super().__init__(message)
        self.history = history


@dataclass
class GmresInfo:
    iterations: int
    residual: np.ndarray  # final relative residual per column
    history: list = field(default_factory=list)  # max relative residual after each step


def gmres(
    apply: Callable[[np.ndarray], np.ndarray],
    b: np.ndarray,
    x0: np.ndarray | None = None,
    tol: float = 1e-10,
    restart: int = 50,
    maxiter: int = 200,
    real_linear: bool = False,
) -> tuple[np.ndarray, GmresInfo]:
    """Solve ``apply(x) = b`` column by column.

    Parameters
    ----------
    apply : callable
        Maps an ``(n, m)`` array to an ``(n, m)`` array, column-wise.
    b : ndarray, shape (n,) or (n, m)
    tol : float
        Relative residual target ``|b - A x| / |b|`` for every column.
    restart, maxiter : int
        Krylov dimension per cycle and cap on the total number of steps.
    real_linear : bool
        Treat ``apply`` as linear over the reals only.

    Raises
    ------
    ConvergenceError
        If some column misses ``tol`` after ``maxiter`` steps.
    """
    b = np.asarray(b)
    vector = b.ndim == 1
    B = b[:, None] if vector else b
    dtype = np.result_type(B.dtype, np.complex128 if real_linear else B.dtype, float)
    B = B.astype(dtype, copy=False)
    n, m = B.shape
    X = np.zeros((n, m), dtype) if x0 is None else np.array(x0, dtype).reshape(n, m)

    def dot(U, V):
        d = np.einsum("ij,ij->j", U.conj(), V)
        return d.real if real_linear else d

    bnorm = np.linalg.norm(B, axis=0)
    bnorm[bnorm == 0] = 1.0
    hdtype = float if (real_linear or not np.iscomplexobj(B)) else complex

    history = []
    total = 0
    R = B - apply(X) if x0 is not None else B.copy()
    rel = np.linalg.norm(R, axis=0) / bnorm
    while True:
        if np.all(rel <= tol):
            return (X[:, 0] if vector else X), GmresInfo(total, rel, history)
        if total >= maxiter:
            raise ConvergenceError(
                f"GMRES stalled at relative residual {rel.max():.3e} after {total} steps", history
            )
        steps = min(restart, maxiter - total)
        beta = np.linalg.norm(R, axis=0)
        V = np.zeros((steps + 1, n, m), dtype)
        V[0] = R / np.where(beta == 0, 1, beta)
        H = np.zeros((steps + 1, steps, m), hdtype)
        cs = np.zeros((steps, m), hdtype)
        sn = np.zeros((steps, m))
        g = np.zeros((steps + 1, m), hdtype)
        g[0] = beta
        j_done = 0
        for j in range(steps):
            W = apply(V[j])
            # modified Gram-Schmidt, repeated once for stability
            for _ in range(2):
                for i in range(j + 1):
                    hij = dot(V[i], W)
                    H[i, j] += hij
                    W = W - V[i] * hij
            hn = np.linalg.norm(W, axis=0)
            H[j + 1, j] = hn
            V[j + 1] = W / np.where(hn == 0, 1, hn)
            for i in range(j):
                a, c = H[i, j].copy(), H[i + 1, j].copy()
                H[i, j] = np.conj(cs[i]) * a + sn[i] * c
                H[i + 1, j] = -sn[i] * a + cs[i] * c
            a, c = H[j, j].copy(), H[j + 1, j].real.copy()
            r = np.sqrt(np.abs(a) ** 2 + c**2)
            safe = np.where(r == 0, 1, r)
            cs[j] = np.where(r == 0, 1, a / safe)
            sn[j] = np.where(r == 0, 0, c / safe)
            H[j, j] = r
            H[j + 1, j] = 0
            g[j + 1] = -sn[j] * g[j]
            g[j] = np.conj(cs[j]) * g[j]
            total += 1
            j_done = j + 1
            est = np.abs(g[j + 1]) / bnorm
            history.append(float(est.max()))
            if np.all(est <= tol * 0.5):
                break
        k = j_done
        Hk = np.moveaxis(H[:k, :k], 2, 0)  # (m, k, k) upper triangular
        diag = np.einsum("mii->mi", Hk)
        # guard exactly singular diagonals of already converged columns
        Hk = Hk + np.einsum("mi,ij->mij", np.where(diag == 0, 1, 0), np.eye(k))
        y = np.linalg.solve(Hk, np.moveaxis(g[:k], 1, 0)[..., None])[..., 0]  # (m, k)
        X = X + np.einsum("knm,mk->nm", V[:k], y)
        R = B - apply(X)
        rel = np.linalg.norm(R, axis=0) / bnorm

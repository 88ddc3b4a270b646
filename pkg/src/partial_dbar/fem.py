"""P1 finite elements on the unit disc and Dirichlet-to-Neumann matrices.

The mesh has a boundary ring of ``per_cell`` vertices per boundary cell, so
the cell breakpoints and the cell midpoints are both vertices. Piecewise
constant Dirichlet data (Haar functions) is interpolated to the ring by
taking the cell value at interior vertices and the average of the two
neighbouring cells at breakpoints.

D-N matrices are computed from the discrete Dirichlet form: with ``U_m`` the
discrete sigma-harmonic extension of ``phi_m``, the entry ``(m, n)`` is
``U_m^T K U_n``, which equals the weak boundary flux of ``U_m`` tested
against the data of ``phi_n``.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace
from functools import cached_property
from pathlib import Path

import numpy as np
import scipy.sparse as sp
from scipy.sparse.linalg import splu
from scipy.spatial import Delaunay

from .geometry import ConductivityField
from .haar import HaarBasis
from .io import format_matrix, parse_matrix


class CoercivityError(ValueError):
    """The sampled conductivity has a non-positive real part."""


@dataclass(frozen=True)
class FemMesh:
    vertices: np.ndarray  # (n, 2)
    triangles: np.ndarray  # (t, 3), counter-clockwise
    boundary: np.ndarray  # vertex indices of the ring, ordered by angle from -pi
    cells: int  # number of boundary cells the ring is aligned with
    per_cell: int
    level: int = 0

    @property
    def n_vertices(self) -> int:
        return self.vertices.shape[0]

    @cached_property
    def interior(self) -> np.ndarray:
        mask = np.ones(self.n_vertices, bool)
        mask[self.boundary] = False
        return np.flatnonzero(mask)

    @cached_property
    def boundary_theta(self) -> np.ndarray:
        x, y = self.vertices[self.boundary].T
        return np.arctan2(y, x)

    @cached_property
    def areas(self) -> np.ndarray:
        p = self.vertices[self.triangles]
        e1, e2 = p[:, 1] - p[:, 0], p[:, 2] - p[:, 0]
        return 0.5 * (e1[:, 0] * e2[:, 1] - e1[:, 1] * e2[:, 0])

    def min_angle(self) -> float:
        """Smallest interior angle over all triangles, in degrees."""
        p = self.vertices[self.triangles]
        angles = []
        for i in range(3):
            a = p[:, (i + 1) % 3] - p[:, i]
            b = p[:, (i + 2) % 3] - p[:, i]
            cosang = np.sum(a * b, 1) / np.linalg.norm(a, axis=1) / np.linalg.norm(b, axis=1)
            angles.append(np.degrees(np.arccos(np.clip(cosang, -1, 1))))
        return float(np.min(angles))

    @cached_property
    def boundary_interpolation(self) -> sp.csr_matrix:
        """Sparse map from ``cells`` cell values to ring vertex values."""
        nb, p = self.boundary.size, self.per_cell
        rows, cols, vals = [], [], []
        for j in range(nb):
            cell, pos = divmod(j, p)
            if pos == 0:
                rows += [j, j]
                cols += [(cell - 1) % self.cells, cell]
                vals += [0.5, 0.5]
            else:
                rows.append(j)
                cols.append(cell)
                vals.append(1.0)
        return sp.csr_matrix((vals, (rows, cols)), shape=(nb, self.cells))

    @cached_property
    def boundary_mass(self) -> sp.csc_matrix:
        """P1 mass matrix of the ring (a closed polygon)."""
        nb = self.boundary.size
        z = self.vertices[self.boundary]
        ln = np.linalg.norm(np.roll(z, -1, 0) - z, axis=1)
        i = np.arange(nb)
        j = (i + 1) % nb
        diag = (ln + np.roll(ln, 1)) / 3
        off = ln / 6
        return sp.csc_matrix(
            (np.concatenate([diag, off, off]), (np.concatenate([i, i, j]), np.concatenate([i, j, i]))),
            shape=(nb, nb),
        )


def disc_mesh(cells: int, per_cell: int = 2, h_max: float = 0.06, grade: float = 0.3, level: int = 0) -> FemMesh:
    """Graded mesh of the unit disc from concentric rings of points.

    The boundary ring has ``cells * per_cell`` vertices at angles
    ``-pi + 2 pi j / (cells * per_cell)``. Inward, the target spacing grows
    as ``h(r) = min(h_max, h_b + grade (1 - r))`` with ``h_b`` the boundary
    spacing; consecutive rings are offset by half a spacing.
    """
    if per_cell < 1:
        raise ValueError("per_cell must be positive")
    nb = cells * per_cell
    hb = 2 * np.pi / nb
    tb = -np.pi + 2 * np.pi * np.arange(nb) / nb
    pts = [np.column_stack([np.cos(tb), np.sin(tb)])]
    r, h, shift = 1.0, hb, 0.5
    while True:
        r = r - h * np.sqrt(3) / 2
        h = min(h_max, hb + grade * (1 - r))
        if r < 0.6 * h:
            break
        n = max(int(round(2 * np.pi * r / h)), 6)
        t = 2 * np.pi * (np.arange(n) + shift) / n
        pts.append(r * np.column_stack([np.cos(t), np.sin(t)]))
        shift = 0.5 - shift + 0.137  # avoid aligned rings
    pts.append(np.zeros((1, 2)))
    V = np.concatenate(pts)
    tri = Delaunay(V).simplices
    # drop slivers that Delaunay may create along the convex hull (the boundary ring)
    P = V[tri]
    area = 0.5 * ((P[:, 1, 0] - P[:, 0, 0]) * (P[:, 2, 1] - P[:, 0, 1]) - (P[:, 1, 1] - P[:, 0, 1]) * (P[:, 2, 0] - P[:, 0, 0]))
    tri = np.where((area < 0)[:, None], tri[:, [0, 2, 1]], tri)
    keep = np.abs(area) > 1e-14
    mesh = FemMesh(V, tri[keep], np.arange(nb), cells, per_cell, level)
    return mesh


def refined_mesh(cells: int, level: int = 0, **kw) -> FemMesh:
    """Mesh at refinement ``level``: spacings halve with each level."""
    per_cell = kw.pop("per_cell", 2) * 2**level
    h_max = kw.pop("h_max", 0.06) / 2**level
    return disc_mesh(cells, per_cell=per_cell, h_max=h_max, level=level, **kw)


def write_mesh(path, mesh: FemMesh) -> None:
    """Text format: header, then ``v x y`` lines and ``t a b c`` lines."""
    lines = [
        f"# vertices={mesh.n_vertices}",
        f"# triangles={mesh.triangles.shape[0]}",
        f"# cells={mesh.cells}",
        f"# per_cell={mesh.per_cell}",
        f"# level={mesh.level}",
        f"# boundary={mesh.boundary.size}",
    ]
    lines += [f"v {x:.17g} {y:.17g}" for x, y in mesh.vertices]
    lines += [f"t {a} {b} {c}" for a, b, c in mesh.triangles]
    Path(path).write_text("\n".join(lines) + "\n")


def read_mesh(path) -> FemMesh:
    head, V, T = {}, [], []
    for line in Path(path).read_text().splitlines():
        if line.startswith("#"):
            k, v = line[1:].split("=")
            head[k.strip()] = int(v)
        elif line.startswith("v "):
            V.append([float(s) for s in line.split()[1:]])
        elif line.startswith("t "):
            T.append([int(s) for s in line.split()[1:]])
    return FemMesh(
        np.array(V), np.array(T, dtype=np.int64), np.arange(head["boundary"]),
        head["cells"], head["per_cell"], head["level"],
    )


# ---------------------------------------------------------------------------
# assembly and solves


def element_conductivity(field: ConductivityField, mesh: FemMesh, order: int = 4) -> np.ndarray:
    """Mean of ``field`` over each triangle from ``order**2`` sub-triangle centroids."""
    # barycentric centroids of the uniform order x order subdivision
    bary = []
    for i in range(order):
        for j in range(order - i):
            bary.append(((i + 1 / 3) / order, (j + 1 / 3) / order))  # upright
            if i + j < order - 1:
                bary.append(((i + 2 / 3) / order, (j + 2 / 3) / order))  # inverted
    bary = np.array(bary)
    lam = np.column_stack([1 - bary.sum(1), bary])
    P = mesh.vertices[mesh.triangles]  # (t, 3, 2)
    xy = np.einsum("sk,tkd->tsd", lam, P)
    vals = field(xy[..., 0] + 1j * xy[..., 1])
    if not np.iscomplexobj(vals) or not np.any(np.imag(vals)):
        vals = np.real(vals)
    return vals.mean(axis=1)


def stiffness(mesh: FemMesh, coef) -> sp.csr_matrix:
    """P1 stiffness matrix for elementwise constant coefficients."""
    P = mesh.vertices[mesh.triangles]
    area = mesh.areas
    # gradients of barycentric functions: rotate opposite edges
    e = np.stack([P[:, 2] - P[:, 1], P[:, 0] - P[:, 2], P[:, 1] - P[:, 0]], axis=1)
    grads = np.stack([-e[..., 1], e[..., 0]], axis=-1) / (2 * area[:, None, None])
    Ke = np.einsum("tad,tbd->tab", grads, grads) * (np.asarray(coef) * area)[:, None, None]
    rows = np.repeat(mesh.triangles, 3, axis=1).ravel()
    cols = np.tile(mesh.triangles, (1, 3)).ravel()
    n = mesh.n_vertices
    return sp.csr_matrix((Ke.ravel(), (rows, cols)), shape=(n, n))


def _lu_solve(lu, rhs, dtype):
    rhs = np.asarray(rhs)
    if np.iscomplexobj(rhs) and lu.L.dtype.kind != "c":
        # a real factorization solves real and imaginary parts separately
        return lu.solve(np.ascontiguousarray(rhs.real)) + 1j * lu.solve(np.ascontiguousarray(rhs.imag))
    return lu.solve(np.asarray(rhs, dtype))


@dataclass
class DirichletSolver:
    """Factorized interior stiffness block for one conductivity on one mesh."""

    mesh: FemMesh
    K: sp.csr_matrix

    def __post_init__(self):
        ii = self.mesh.interior
        self._Kii = splu(self.K[ii][:, ii].tocsc())
        self._Kib = self.K[ii][:, self.mesh.boundary]

    def solve(self, g: np.ndarray) -> np.ndarray:
        """Vertex values of the discrete solution with ring data ``g``."""
        g = np.asarray(g)
        dtype = np.result_type(g.dtype, self.K.dtype)
        U = np.zeros((self.mesh.n_vertices,) + g.shape[1:], dtype)
        U[self.mesh.boundary] = g
        rhs = -(self._Kib @ g)
        U[self.mesh.interior] = _lu_solve(self._Kii, rhs, dtype)
        return U

    def weak_flux(self, U: np.ndarray) -> np.ndarray:
        """``(K U)`` on the ring: the flux tested against each ring hat function."""
        return (self.K @ U)[self.mesh.boundary]


def make_solver(field: ConductivityField, mesh: FemMesh) -> DirichletSolver:
    coef = element_conductivity(field, mesh)
    if np.any(np.real(coef) <= 0):
        raise CoercivityError("conductivity must have a positive real part")
    return DirichletSolver(mesh, stiffness(mesh, coef))


def solve_dirichlet(field: ConductivityField, mesh: FemMesh, boundary_data) -> np.ndarray:
    """P1 solution of ``div(sigma grad u) = 0`` with ring values ``boundary_data``."""
    return make_solver(field, mesh).solve(boundary_data)


def neumann_flux(u: np.ndarray, field: ConductivityField, mesh: FemMesh, solver: DirichletSolver | None = None) -> np.ndarray:
    """Nodal values of ``sigma du/dnu`` on the ring.

    The weak flux ``(K u)_boundary`` is converted to nodal values with the
    ring mass matrix.
    """
    solver = solver or make_solver(field, mesh)
    F = solver.weak_flux(u)
    return _lu_solve(splu(mesh.boundary_mass), F, np.result_type(F.dtype, float))


def cell_indices(basis: HaarBasis, cells: int) -> np.ndarray:
    """Full-boundary cell index of each node of the basis grid."""
    theta = basis.grid.theta
    return np.mod(np.round((theta + np.pi) / (2 * np.pi / cells) - 0.5).astype(int), cells)


def basis_ring_data(basis: HaarBasis, mesh: FemMesh) -> np.ndarray:
    """Ring values of every basis function (zero off the arc)."""
    if not np.isclose(basis.grid.h, 2 * np.pi / mesh.cells):
        raise ValueError("basis grid is not aligned with the mesh boundary cells")
    full = np.zeros((mesh.cells, basis.J))
    full[cell_indices(basis, mesh.cells)] = basis.values
    return mesh.boundary_interpolation @ full


@dataclass(frozen=True)
class DNMap:
    """D-N matrix ``M(m, n) = <Lambda phi_m, phi_n>`` in a Haar basis."""

    matrix: np.ndarray
    basis: HaarBasis
    tag: str
    meta: dict = field(default_factory=dict)

    @property
    def J(self) -> int:
        return self.matrix.shape[0]

    def __sub__(self, other: DNMap) -> DNMap:
        if other.matrix.shape != self.matrix.shape:
            raise ValueError("D-N matrices in different bases")
        return DNMap(self.matrix - other.matrix, self.basis, f"{self.tag}-{other.tag}", dict(self.meta))

    def apply(self, traces: np.ndarray) -> np.ndarray:
        """Grid samples of ``Lambda f`` for grid samples ``f`` on the arc.

        Realized in coefficient space as ``Phi M^T Phi^T f``.
        """
        Phi = self.basis.Phi
        return Phi @ (self.matrix.T @ (Phi.T @ traces))

    def with_noise(self, level: float, seed: int = 0) -> DNMap:
        """Add symmetric Gaussian noise of relative size ``level`` (uncalibrated)."""
        rng = np.random.default_rng(seed)
        E = rng.standard_normal(self.matrix.shape)
        E = (E + E.T) / 2
        noisy = self.matrix + level * np.abs(self.matrix).max() * E
        return replace(self, matrix=noisy, meta={**self.meta, "noise": level, "seed": seed})

    def to_text(self) -> str:
        header = {
            "J": self.J,
            "fraction": str(self.basis.arc.fraction),
            "phantom": self.tag,
            **self.meta,
        }
        return format_matrix(self.matrix, header)

    def save(self, path) -> None:
        Path(path).write_text(self.to_text())

    @staticmethod
    def load_matrix(path) -> tuple[np.ndarray, dict]:
        return parse_matrix(Path(path).read_text())


def assemble_dn(field: ConductivityField, basis: HaarBasis, mesh: FemMesh) -> DNMap:
    """D-N matrix of ``field`` in ``basis`` from the discrete Dirichlet form."""
    solver = make_solver(field, mesh)
    G = basis_ring_data(basis, mesh)
    U = solver.solve(G)
    F = solver.weak_flux(U)
    M = G.T @ F
    return DNMap(M, basis, field.tag, {"mesh_level": mesh.level, "vertices": mesh.n_vertices})


def delta_dn(field: ConductivityField, basis: HaarBasis, mesh: FemMesh) -> DNMap:
    """``Lambda_sigma - Lambda_1`` assembled on one mesh for error cancellation."""
    from .geometry import homogeneous

    return assemble_dn(field, basis, mesh) - assemble_dn(homogeneous(), basis, mesh)

"""Boundary traces of CGO solutions from full and partial D-N data.

A smooth bump is imaged with Haar-wavelet voltage patterns on arcs covering
1, 3/4, 1/2 and 1/4 of the boundary. The full-data trace is checked against
a Lippmann-Schwinger solve in the plane; partial traces are compared with the
full one on the accessible arc.
"""

from fractions import Fraction

import numpy as np

from partial_dbar.bie import relative_l2
from partial_dbar.experiments import cgo_traces
from partial_dbar.fem import cell_indices, delta_dn, refined_mesh
from partial_dbar.geometry import arc_subset, boundary_grid, phantom_c2
from partial_dbar.haar import build_haar
from partial_dbar.lippmann import lippmann_schwinger, schrodinger_potential

L = 256
field = phantom_c2()
grid = boundary_grid(L)
mesh = refined_mesh(L, 0)
ks = np.array([0.5, -4j])

dns = {}
for f in (Fraction(1), Fraction(3, 4), Fraction(1, 2), Fraction(1, 4)):
    arc, sub = arc_subset(grid, f)
    dns[f] = delta_dn(field, build_haar(arc, int(L * f), sub), mesh)
    print(f"arc {f}: {dns[f].J} wavelets on {sub.L} boundary cells")

traces = {f: cgo_traces(["psi"], {f: dn}, ks, grid)[("psi", f)] for f, dn in dns.items()}

P = schrodinger_potential(field, 256)
full = traces[Fraction(1)]
print("\nrelative L2 errors")
for i, k in enumerate(ks):
    oracle = lippmann_schwinger(P, k).psi_trace(grid)
    row = [f"full vs LS {relative_l2(full.values[:, i], oracle):.1e}"]
    for f in (Fraction(3, 4), Fraction(1, 2), Fraction(1, 4)):
        ix = cell_indices(dns[f].basis, L)
        row.append(f"{f} vs full {relative_l2(traces[f].values[:, i], full.values[ix, i]):.1e}")
    print(f"  k={k}: " + ", ".join(row))

"""The Faddeev Green's function and its exponentially reduced form.

``g_1`` has a closed form through the exponential integral. This script
compares it with a direct two-dimensional quadrature of the defining Fourier
integral and shows that ``|g_1(w)|`` oscillates under a ``1/|w|`` envelope
rather than decreasing monotonically.
"""

import numpy as np

from partial_dbar.green import Gk, g1, g1_quadrature

print("closed form vs quadrature")
for w in (1.0, 0.3j, -0.5 + 0.2j, 2 - 1j, 1.2 + 2.2j):
    a, b = g1(w), g1_quadrature(w)
    print(f"  w={w!s:>12}  g1={a:.6f}  quad={b:.6f}  rel={abs(a - b) / abs(b):.1e}")

print("\n|g1| along w = t(1+i) with the envelope 1/(pi |w|)")
for t in (1, 2, 3, 4, 6, 8):
    w = t * (1 + 1j)
    print(f"  t={t}  |g1|={abs(g1(w)):.5f}  envelope={1 / (np.pi * abs(w)):.5f}")

# G_k is real and satisfies G_k(-conj z) = G_conj(k)(z); the second boundary
# equation reuses the first one's kernel through this identity.
z, k = 0.4 - 0.3j, 1.5 + 2j
print(f"\nG_k(-conj z) = {Gk(-np.conj(z), k):.12f}")
print(f"G_conj(k)(z) = {Gk(z, np.conj(k)):.12f}")

"""Homogenised selector of the pendulum against the twist-map oracle.

Prints alpha on a coarse grid next to the Aubry-Mather value; the flat
part at height 1 ends at the separatrix class 4/pi.
"""
import numpy as np

from alphalab import models
from alphalab.oracle import oracle_twist_alpha, separatrix_width
from alphalab.spectral import homogenize

H = models.pendulum()
grid = np.linspace(-2.5, 2.5, 11)
curve = homogenize(H, grid, (1, 2, 4, 8), N=16, keep_certificates=False)
ref = oracle_twist_alpha(H, grid)

print(f"separatrix class 4/pi ~ {separatrix_width():.4f}")
print(f"{'lambda':>8} {'f_8':>9} {'alpha':>9} {'oracle':>9}")
for lam, f8, a, o in zip(grid, curve.per_k[8], curve.alpha, ref):
    print(f"{lam:8.3f} {f8:9.5f} {a:9.5f} {o:9.5f}")

"""A fibre-nonconvex model keeps its non-convex alpha.

For h(p) = (p^2 - 1)^2 / 4 every chord is a straight line, the selector is
h itself, and alpha(0) = 1/4 sits above the convex hull value 0.
"""
import numpy as np

from alphalab import models
from alphalab.spectral import homogenize

H = models.doublewell_p(0.0)
grid = np.linspace(-1.5, 1.5, 13)
curve = homogenize(H, grid, (1, 2, 4), N=16, keep_certificates=False)
for lam, a in zip(grid, curve.alpha):
    print(f"lambda={lam:6.3f}  alpha={a:.6f}  h={(lam**2 - 1) ** 2 / 4:.6f}")
print("backend:", curve.backend)

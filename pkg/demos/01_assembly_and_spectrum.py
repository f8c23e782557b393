"""
Assembling the restricted fractional Laplacian
==============================================

The form is dense: every pair of cells interacts through |x - y|^(-d-alpha),
and every node loses mass to the exterior through the killing term.
"""

import numpy as np

from fracschrod import assemble, build_box, build_interval, eigensolve, torsion

# %% one dimension, alpha = 1 (the square root of the Laplacian) on (-1, 1)
grid = build_interval(-1.0, 1.0, 400)
form = assemble(grid, 1.0)
print("Markov sign pattern:", form.is_markov())
print("killing term, edge vs center:", form.killing[0], form.killing[200])

# %% ground state energy; the exact value is 1.1577738836977...
for n in (200, 400, 800):
    s = eigensolve(assemble(build_interval(-1.0, 1.0, n), 1.0), m=4)
    print(n, s.eigenvalues)

# %% the torsion function solves L xi = 1; for alpha = 1 it is sqrt(1 - x^2)
xi = torsion(form)
err = np.sqrt(np.sum(form.mass * (xi - np.sqrt(1 - grid.x**2)) ** 2))
print("torsion L2 error:", err)

# %% a square in two dimensions; adjacent cells use adaptive quadrature
box = assemble(build_box((-1.0, -1.0), (1.0, 1.0), (24, 24)), 1.0)
print("2D lambda0:", eigensolve(box, m=3).eigenvalues)

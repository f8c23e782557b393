"""
Hardy potentials and the relative bound
=======================================

c |x|^(-alpha) and c delta(x)^(-alpha) perturb the form; the relative bound
kappa decides whether the perturbed form is still positive.
"""

import numpy as np

from fracschrod import PotentialSpec, assemble, build_interval, critical_constant, eigensolve, evaluate, green_matrix
from fracschrod.potential import relative_bound

alpha = 0.5
form = assemble(build_interval(-1.0, 1.0, 400), alpha)
cs = critical_constant("hardy_origin", 1, alpha)
print("sharp constant c* =", cs)

# %% kappa grows linearly in c, but stays well below 1 at c = c* on a finite grid
for frac in (0.25, 0.5, 0.75, 1.0):
    V = evaluate(PotentialSpec.hardy("hardy_origin", 1, alpha, frac), form.grid)
    s = eigensolve(form, V, m=2)
    print(f"c = {frac:.2f} c*: kappa = {relative_bound(form, V):.4f}, lambda0 = {s.lambda0:.5f}")

# %% a positive potential can only increase the Green function
V = evaluate(PotentialSpec.hardy("hardy_origin", 1, alpha, 0.5), form.grid)
G0 = green_matrix(form).G
GV = green_matrix(form, V).G
print("min(G_V - G_0) =", np.min(GV - G0))

# %% boundary Hardy potential, truncated at level 50
Vb = evaluate(PotentialSpec.hardy("hardy_boundary", 1, alpha, 0.5, truncation=50.0), form.grid)
print("boundary potential range:", Vb.min(), Vb.max())

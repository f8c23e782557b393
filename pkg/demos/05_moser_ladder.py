"""
Moser ladder for xi / phi0
==========================

Theta_k = ||rho||_{L^{j_k}(phi0^2 m)} with j_k = 2 q^k climbs to max rho.
How fast depends on the weight of the node where the maximum sits.
"""

import numpy as np

from fracschrod import assemble, build_interval, eigensolve, torsion
from fracschrod import doob as db

form = assemble(build_interval(-1.0, 1.0, 400), 0.5)
s = eigensolve(form, m=2)
rho = torsion(form) / s.ground_state
i = int(np.argmax(rho))
weight = form.mass[i] * s.ground_state[i] ** 2
print(f"max rho = {rho[i]:.4f} at x = {form.grid.x[i]:+.4f}, weight {weight:.2e}")

for q in (4 / 3, 1.5, 2.0):
    th = db.moser_ladder(rho, s.ground_state, q, 30, form.mass)
    print(f"q = {q:.3f}: Theta_20 / max = {th[20] / rho[i]:.4f}, Theta_30 / max = {th[30] / rho[i]:.4f}")

# %% the gap is predicted by the weight alone: ratio ~ weight^(1/j)
j20 = 2 * (4 / 3) ** 20
print("predicted Theta_20 / max at q = 4/3:", weight ** (1 / j20))

# %% per-step recursion with the computed M
ledger, _, _ = db.build_ledger(form, None)
th = db.moser_ladder(rho, s.ground_state, ledger.q, 20, form.mass)
ok, factor = db.moser_step_check(th, ledger.q, ledger.M_inf()[1])
print("every step within its factor:", bool(ok.all()))

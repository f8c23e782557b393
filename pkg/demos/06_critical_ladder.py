"""
Reaching the critical coupling
==============================

V_k = (1 - 1/k) c* |x|^(-alpha) for k = 2..32; the limits are extrapolated
linearly in 1/k.
"""

import numpy as np

from fracschrod import PotentialSpec, assemble, build_interval, evaluate, green_matrix
from fracschrod import critical as cr

form = assemble(build_interval(-1.0, 1.0, 400), 0.5)
V = evaluate(PotentialSpec.hardy("hardy_origin", 1, 0.5, 1.0), form.grid)
green = green_matrix(form)
L = cr.run_ladder(form, V, 32, free_green=green)

for k, lam, kap in zip(L.k[::5], L.lambdas[::5], L.kappas[::5]):
    print(f"k = {k:2d}: lambda0 = {lam:.6f}, kappa = {kap:.4f}")
print("lambda* =", L.lambda_star, "fit residual", L.fit_residual)
print("decay exponent of lambda_k - lambda_{k+1}:", L.decay_exponent())

# %% both readings of the interior lower bound
lb = cr.critical_lower_bound_check(L, green, 0.5)
print(f"exponent alpha/2: holds at {lb.fraction_a:.1%} of nodes; exponent 1: {lb.fraction_b:.1%}")

# %% sharp two-sided envelope, origin cell excluded
excl = np.abs(form.grid.x) < form.grid.h
sharp = cr.critical_sharp_comparison(L, form, exclude=excl, free_green=green)
print(f"phi*/xi* in [{sharp.ratio_min:.4f}, {sharp.ratio_max:.4f}], envelope [{sharp.lower:.4f}, {sharp.upper:.4f}]")

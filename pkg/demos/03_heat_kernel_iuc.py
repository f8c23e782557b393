"""
Heat kernel and intrinsic ultracontractivity
============================================

p_t = sum_k exp(-lambda_k t) phi_k phi_k. After normalizing by the ground
state the kernel flattens at the rate of the spectral gap.
"""

import numpy as np

from fracschrod import assemble, build_interval, eigensolve, heat_kernel, torsion
from fracschrod.spectral import iuc_ratio, lambda_from_heat, semigroup_residual

form = assemble(build_interval(-1.0, 1.0, 400), 1.0)
s = eigensolve(form)
lam, gap = s.lambda0, s.gap
print("lambda0, gap:", lam, gap)
print("semigroup law residual:", semigroup_residual(s, 0.5, 0.25))

# %% ratio band exp(lambda0 t) p_t / (phi0 phi0) against exp(-gap t)
for t in np.array([0.5, 1, 2, 4, 8]) / gap:
    lo, hi = iuc_ratio(heat_kernel(s, t), s.ground_state, lam, t)
    print(f"t = {t:7.3f}: band {hi - lo:.3e}, exp(-gap t) {np.exp(-gap * t):.3e}")

# %% the torsion function also recovers lambda0 at late times
xi = torsion(form)
for c in (10, 30, 100):
    t = c / lam
    print(f"t = {c}/lambda0: estimate {lambda_from_heat(heat_kernel(s, t), xi, t):.5f}")

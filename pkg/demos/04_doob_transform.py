"""
Doob transform and the comparison constants
===========================================

Transforming by the torsion function gives a Dirichlet form on L^2(xi^2 m).
Every constant of the comparison between phi0 and xi is measured from it.
"""

import numpy as np

from fracschrod import PotentialSpec, assemble, build_interval, eigensolve, evaluate, torsion
from fracschrod import doob as db

form = assemble(build_interval(-1.0, 1.0, 400), 0.5)
V = evaluate(PotentialSpec.hardy("hardy_origin", 1, 0.5, 0.5), form.grid)

ledger, doob, green = db.build_ledger(form, V)
for k, v in ledger.to_dict().items():
    print(f"{k:>10}: {v}")

# %% the conjugation is exact on the discrete level
print("identity error:", doob.identity_error)
print("spectrum error:", db.conjugated_spectrum_error(doob))

# %% inequality checks on eigenvectors, random vectors and nodal bumps
P = db.doob_probes(doob, 1000, extra=[green.ground_state / doob.w])
for c in (db.hardy_check(form, green.ground_state, ledger.C_H, P), db.w_lower_bound_check(doob, ledger, green.ground_state),
          db.l2_estimate_check(doob, ledger, P), db.lambda_check(doob, ledger, P), db.is1_check(doob, ledger, P)):
    print(f"{c.name:>14}: max relative violation {c.max_violation:+.3e}")

# %% two-sided comparison
s = eigensolve(form, V, m=2)
rep = db.compare(s, torsion(form, V), ledger, doob)
print(f"phi0/xi in [{rep.rho_minus:.4f}, {rep.rho_plus:.4f}]")
print(f"upper envelope {rep.C_inf:.4f} (ok {rep.upper_ok}), eigenfunction envelope {rep.eigen_envelope:.4f}")
print(f"lower envelope 1/{rep.M_inf:.1f} (ok {rep.lower_ok})")

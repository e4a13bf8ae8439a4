"""
Where do faults in GMRES land?
==============================

Run restarted GMRES on a Poisson system and classify every possible single
bit flip in the orthogonalisation dot products, before and after
equilibration.  The solve itself is untouched by the bookkeeping.
"""
import numpy as np

from flipbound import sparse_la as sl
from flipbound.gmres import GmresConfig, gmres_solve, make_rhs

a = sl.scale_rows(sl.gen_poisson(40), 1e6)
b = make_rhs(a, "ones")
cfg = GmresConfig(restart=25, max_total_iterations=300)

raw = gmres_solve(a, b, cfg)
eq, scaling = sl.equilibrate(a)
scaled = gmres_solve(eq, sl.apply_scaling_to_rhs(b, scaling), cfg)

for name, rep in (("mis-scaled", raw), ("equilibrated", scaled)):
    s = rep.tally.shares
    print(f"{name:>13}: threshold {rep.threshold:.4g}  shares {np.round(s, 4).tolist()}  "
          f"residual {rep.residuals[-1]:.2e}")

quiet = gmres_solve(eq, sl.apply_scaling_to_rhs(b, scaling), GmresConfig(restart=25, max_total_iterations=300,
                                                                         instrument=False))
print("identical iterates with and without instrumentation:", quiet.x.tobytes() == scaled.x.tobytes())

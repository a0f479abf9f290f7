"""Residual versus recovery estimation on the same problem.

Both estimators produce optimally graded meshes on the L-shape, but the
residual estimator overestimates the error by a roughly constant factor
close to 5.  The recovery-based estimator is close to 1, which makes its
tolerance a meaningful statement about the actual error.
"""
from afem import AdaptiveConfig, adaptive_solve, get_problem

problem = get_problem("lshape")
for estimator in ("residual", "improved"):
    cfg = AdaptiveConfig(estimator=estimator, tolerance=1e-2, max_dofs=20000, refinement_depth=1)
    res = adaptive_solve(problem, cfg)
    h = res.history
    eff = h.column("effectivity")
    reached = h.column("Ndof")[h.column("err") <= 1e-2]
    first = int(reached[0]) if len(reached) else None
    print(f"{estimator:>8}: stopped at Ndof={h.rows[-1]['Ndof']} ({res.reason}); "
          f"true error first below 1e-2 at Ndof={first}; effectivity over last 5: "
          f"{eff[-5:].min():.3f} to {eff[-5:].max():.3f}")

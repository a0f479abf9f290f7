"""Recovery across coefficient jumps.

Four strips of (-1,1)^2 carry coefficients 1, 10, 100 and 1000, and the exact
solution is linear on each strip.  The P1 solution is exact.  Averaging
gradients across the interfaces still produces a large ZZ estimate, which
would drive useless refinement.  Recovering separately on each subdomain
gives a zero estimate, and the adaptive loop stops at once.
"""
from afem import AdaptiveConfig, adaptive_solve, energy_error, get_problem, improved_indicator, recover, solve
from afem import zz_indicator

problem = get_problem("interface4")
mesh, A = problem.mesh, problem.coefficient
u_h = solve(mesh, A, problem.f, problem.g)
print("true energy error         :", energy_error(u_h, problem.exact_grad, A)[0])

G_global = recover(mesh, u_h, mode="global")
G_split = recover(mesh, u_h, mode="per_subdomain")
print("ZZ with global recovery   :", zz_indicator(mesh, u_h, G_global, A).eta)
print("improved, per subdomain   :", improved_indicator(mesh, u_h, G_split, A, problem.f).eta)

result = adaptive_solve(problem, AdaptiveConfig(tolerance=1e-2))
print("adaptive iterations       :", len(result.history), "(stop reason:", result.reason + ")")

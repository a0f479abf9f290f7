"""Kellogg's problem: a strong singularity at a four-material point.

The coefficient is about 161.4 in the first and third quadrants and 1
elsewhere, and the solution behaves like r^0.1 at the origin.  Refinement
concentrates at the origin over a long pre-asymptotic phase before the
error settles on the N^(-1/2) rate.  Recovery runs per subdomain, chosen
automatically for piecewise coefficients.
"""
import numpy as np

from afem import AdaptiveConfig, adaptive_solve, fit_rate, get_problem

problem = get_problem("kellogg")
result = adaptive_solve(problem, AdaptiveConfig(max_dofs=15000, max_iterations=300, refinement_depth=1))
h = result.history
print("iterations:", len(h), " final Ndof:", h.rows[-1]["Ndof"])
print("error slope over the last 10 iterations: %.3f" % fit_rate(h, "err", window=10).slope)
print("final effectivity: %.3f" % h.rows[-1]["effectivity"])
mesh = result.mesh
r = np.hypot(*mesh.centroids.T)
print("smallest element diameter: %.2e, located at r = %.2e" % (mesh.diameters.min(), r[np.argmin(mesh.diameters)]))

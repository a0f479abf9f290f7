"""Writing results for external plotting and visualisation.

The history table is plain CSV with a fixed column order.  Meshes and fields
go to legacy VTK files that ParaView or VisIt open directly, and the mesh
text format round-trips exactly, refinement labels included.
"""
import sys
from pathlib import Path

from afem import AdaptiveConfig, adaptive_solve, get_problem
from afem.io import read_mesh, write_estimate_csv, write_mesh, write_vtk

out = Path(sys.argv[1] if len(sys.argv) > 1 else "demo_output")
out.mkdir(exist_ok=True)

problem = get_problem("layer")
result = adaptive_solve(problem, AdaptiveConfig(max_dofs=5000, refinement_depth=1))
result.history.to_csv(out / "history.csv", include_time=False)
write_estimate_csv(out / "estimate.csv", result.estimate)
write_vtk(out / "layer.vtk", result.mesh, {"u_h": result.u_h.values}, {"eta_K": result.estimate.eta_K})
write_mesh(result.mesh, out / "layer.mesh")
again = read_mesh(out / "layer.mesh")
print(f"wrote {out}/: {again.n_elements} elements, {len(result.history)} history rows")

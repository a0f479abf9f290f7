import numpy as np
import pytest

from afem.adapt import AdaptiveConfig, estimate_on
from afem.fem import solve
from afem.io import read_mesh, read_vtk_mesh, write_estimate_csv, write_mesh, write_vtk
from afem.mesh import refine
from afem.problems import get_problem
from afem.recovery import recover


def test_text_roundtrip_keeps_labels(tmp_path):
    m = get_problem("kellogg").mesh
    m = refine(m, [0, 5], depth=3)
    write_mesh(m, tmp_path / "m.txt")
    back = read_mesh(tmp_path / "m.txt")
    assert np.array_equal(back.vertices, m.vertices)
    assert np.array_equal(back.elements, m.elements)
    assert np.array_equal(back.subdomain, m.subdomain)
    assert np.array_equal(back.boundary_markers, m.boundary_markers)
    # the refinement edges are encoded by vertex order, so refining again gives the same mesh
    assert np.array_equal(refine(back, [3]).elements, refine(m, [3]).elements)


def test_text_format_errors(tmp_path):
    (tmp_path / "bad.txt").write_text("3 1 3\n0 0\n1 0\n0 1\n0 1 2 0\n")
    with pytest.raises(ValueError):
        read_mesh(tmp_path / "bad.txt")


def test_vtk_structure(tmp_path):
    p = get_problem("layer")
    u = solve(p.mesh, p.coefficient, p.f, p.g)
    G = recover(p.mesh, u)
    est, _ = estimate_on(p, p.mesh, u, AdaptiveConfig())
    write_vtk(tmp_path / "f.vtk", p.mesh, {"u_h": u.values, "G": G.nodal()},
              {"eta_K": est.eta_K, "G_corners": G.corners.reshape(-1, 6)})
    lines = (tmp_path / "f.vtk").read_text().splitlines()
    assert lines[0] == "# vtk DataFile Version 3.0" and lines[2] == "ASCII"
    assert f"CELLS {p.mesh.n_elements} {4 * p.mesh.n_elements}" in lines
    assert f"POINT_DATA {p.mesh.n_vertices}" in lines and f"CELL_DATA {p.mesh.n_elements}" in lines
    assert "SCALARS subdomain int 1" in lines
    assert f"G_corners 6 {p.mesh.n_elements} double" in lines
    back = read_vtk_mesh(tmp_path / "f.vtk")
    assert np.array_equal(back.elements, p.mesh.elements)


def test_estimate_csv(tmp_path):
    p = get_problem("peaks")
    u = solve(p.mesh, p.coefficient, p.f, p.g)
    est, _ = estimate_on(p, p.mesh, u, AdaptiveConfig())
    write_estimate_csv(tmp_path / "e.csv", est)
    lines = (tmp_path / "e.csv").read_text().splitlines()
    assert lines[0] == "element_id,eta_K,osc_K"
    assert len(lines) == p.mesh.n_elements + 1
    i, eta, osc = lines[7].split(",")
    assert int(i) == 6 and float(eta) == est.eta_K[6] and float(osc) == est.osc_K[6]

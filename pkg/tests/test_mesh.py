import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from afem.mesh import (BadIndex, DegenerateElement, NonConforming, assign_initial_labels, bisect, build_mesh,
                       element_diameter, is_conforming, min_angle, refine, uniform_refine)
from afem.problems import get_problem, lshape_mesh, square_mesh

REF = [(0.0, 0.0), (1.0, 0.0), (0.0, 1.0)]


def unit_triangle():
    return assign_initial_labels(build_mesh(REF, [[0, 1, 2]]))


def edge_set(mesh):
    t = mesh.elements
    e = np.sort(np.concatenate([t[:, [0, 1]], t[:, [1, 2]], t[:, [2, 0]]]), axis=1)
    return e


def audit_conformity(mesh):
    """Independent check: every edge has one or two elements, and the single ones are the boundary."""
    e, counts = np.unique(edge_set(mesh), axis=0, return_counts=True)
    assert counts.max() <= 2
    single = {tuple(x) for x in e[counts == 1]}
    assert single == {tuple(sorted(x)) for x in mesh.boundary_edges}
    # no vertex lies strictly inside any edge
    v = mesh.vertices
    for a, b in e:
        d = v[b] - v[a]
        p = v - v[a]
        s = p @ d / (d @ d)
        cross = p[:, 0] * d[1] - p[:, 1] * d[0]
        assert not np.any((np.abs(cross) < 1e-12) & (s > 1e-9) & (s < 1 - 1e-9))


def test_unit_square_two_triangles():
    m = build_mesh([(0, 0), (1, 0), (1, 1), (0, 1)], [[0, 1, 2], [0, 2, 3]])
    assert m.n_vertices == 4 and m.n_elements == 2
    topo = m.topology()
    assert topo.n_edges == 5
    assert (~topo.is_boundary).sum() == 1


def test_single_triangle_area():
    m = build_mesh(REF, [[0, 1, 2]])
    assert m.areas[0] == pytest.approx(0.5)


def test_clockwise_input_is_reoriented():
    m = build_mesh(REF, [[0, 2, 1]])
    assert m.areas[0] > 0


def test_hanging_node_rejected():
    v = [(0, 0), (2, 0), (0, 2), (1, 1), (2, 2)]
    with pytest.raises(NonConforming):
        build_mesh(v, [[0, 1, 2], [1, 4, 3], [3, 4, 2]])


def test_degenerate_and_bad_index():
    with pytest.raises(DegenerateElement):
        build_mesh([(0, 0), (1, 0), (2, 0)], [[0, 1, 2]])
    with pytest.raises(BadIndex):
        build_mesh(REF, [[0, 1, 3]])


def test_longest_edge_labeling_picks_hypotenuse():
    m = unit_triangle()
    peak, a, b = m.elements[0]
    assert peak == 0 and {a, b} == {1, 2}


def test_equilateral_labeling_deterministic_and_idempotent():
    eq = [(0, 0), (1, 0), (0.5, np.sqrt(3) / 2)]
    m1 = assign_initial_labels(build_mesh(eq, [[0, 1, 2]]))
    m2 = assign_initial_labels(build_mesh(eq, [[1, 2, 0]]))
    assert np.array_equal(m1.elements, m2.elements)
    # smallest sorted vertex pair (0, 1) is the refinement edge
    assert m1.elements[0, 0] == 2
    again = assign_initial_labels(m1)
    assert np.array_equal(again.elements, m1.elements)


def test_bisect_single_triangle():
    m = bisect(unit_triangle(), 0)
    assert m.n_elements == 2 and m.n_vertices == 4
    assert np.all(m.elements[:, 0] == 3)
    np.testing.assert_allclose(m.vertices[3], [0.5, 0.5])
    np.testing.assert_allclose(m.areas, [0.25, 0.25])


def test_shared_refinement_edge_bisects_both():
    m = assign_initial_labels(build_mesh([(0, 0), (1, 0), (1, 1), (0, 1)], [[0, 1, 2], [0, 2, 3]]))
    r = bisect(m, 0)
    assert r.n_elements == 4 and r.n_vertices == 5
    audit_conformity(r)


def test_closure_propagates():
    # the shared edge is the refinement edge of the small triangle but only a
    # leg of the big one, so the big triangle must first split its hypotenuse
    v = [(0, 0), (2, 0), (0, 2), (1, -0.5)]
    m = assign_initial_labels(build_mesh(v, [[0, 1, 2], [0, 3, 1]]))
    small = int(np.argmin(m.areas))
    r = bisect(m, small)
    audit_conformity(r)
    assert r.n_elements == 5 and r.n_vertices == 6


def test_depth_three_interior_node_property():
    m = unit_triangle()
    assert refine(m, [0], depth=1).n_elements == 2
    r = refine(m, [0], depth=3)
    assert r.n_elements == 8
    new = r.vertices[3:]
    # point strictly inside the original triangle
    inside = (new[:, 0] > 1e-12) & (new[:, 1] > 1e-12) & (new.sum(axis=1) < 1 - 1e-12)
    assert inside.any()
    on_x = (np.abs(new[:, 1]) < 1e-14) & (new[:, 0] > 0) & (new[:, 0] < 1)
    on_y = (np.abs(new[:, 0]) < 1e-14) & (new[:, 1] > 0) & (new[:, 1] < 1)
    on_h = (np.abs(new.sum(axis=1) - 1) < 1e-14) & (new[:, 0] > 0) & (new[:, 0] < 1)
    assert on_x.any() and on_y.any() and on_h.any()


def test_empty_marks_returns_same_mesh():
    m = unit_triangle()
    assert refine(m, []) is m


def test_out_of_range_mark():
    with pytest.raises(BadIndex):
        refine(unit_triangle(), [1])


def test_diameters():
    m = unit_triangle()
    assert element_diameter(m, 0) == pytest.approx(np.sqrt(2))
    eq = build_mesh([(0, 0), (2, 0), (1, np.sqrt(3))], [[0, 1, 2]])
    assert element_diameter(eq, 0) == pytest.approx(2.0)
    assert np.allclose(bisect(m, 0).diameters, 1.0)


def test_min_angle_values():
    assert min_angle(unit_triangle()) == pytest.approx(np.pi / 4)
    eq = build_mesh([(0, 0), (1, 0), (0.5, np.sqrt(3) / 2)], [[0, 1, 2]])
    assert min_angle(eq) == pytest.approx(np.pi / 3)


def test_uniform_refinement_angle_bound():
    m = unit_triangle()
    for _ in range(10):
        m = uniform_refine(m)
        assert min_angle(m) >= np.pi / 8 - 1e-12
    assert m.n_elements == 2 ** 10
    np.testing.assert_allclose(m.areas, 0.5 / 2 ** 10)


def test_edge_count_identity_and_interfaces():
    m = get_problem("kellogg").mesh
    topo = m.topology()
    n_int = (~topo.is_boundary).sum()
    assert 3 * m.n_elements == 2 * n_int + topo.is_boundary.sum()
    adj = topo.elements
    inner = adj[:, 1] >= 0
    expected = np.zeros(topo.n_edges, dtype=bool)
    expected[inner] = m.subdomain[adj[inner, 0]] != m.subdomain[adj[inner, 1]]
    assert np.array_equal(topo.is_interface, expected)


def test_boundary_markers_follow_bisection():
    m = square_mesh(2)
    r = uniform_refine(m, 2)
    audit_conformity(r)
    assert len(r.boundary_markers) == len(r.boundary_edges)
    perimeter = np.linalg.norm(np.diff(r.vertices[r.boundary_edges], axis=1)[:, 0], axis=1).sum()
    assert perimeter == pytest.approx(4.0)


@settings(max_examples=15, deadline=None)
@given(st.sampled_from(["lshape", "kellogg", "interface4", "layer"]), st.integers(0, 2 ** 31 - 1),
       st.sampled_from([1, 3]))
def test_random_marking_keeps_conformity_and_shape(name, seed, depth):
    rng = np.random.default_rng(seed)
    m = get_problem(name).mesh
    angle0 = min_angle(m)
    for _ in range(10 if depth == 1 else 4):
        marks = np.flatnonzero(rng.random(m.n_elements) < 0.2)
        old_sub_area = np.bincount(m.subdomain, weights=m.areas)
        r = refine(m, marks, depth)
        assert is_conforming(r)
        assert min_angle(r) >= angle0 / 2 - 1e-12
        # every element lies in a single subdomain, so subdomain areas are preserved
        np.testing.assert_allclose(np.bincount(r.subdomain, weights=r.areas), old_sub_area, rtol=1e-12)
        m = r
    audit_conformity(m)


def test_area_halving_and_diameter_reduction():
    m = lshape_mesh()
    r = uniform_refine(m, 2)
    # every grandchild has a quarter of the area and a diameter reduced by at least 1/sqrt(2)
    assert np.allclose(np.sort(r.areas), np.sort(np.repeat(m.areas / 4, 4)))
    assert r.diameters.max() <= m.diameters.max() / np.sqrt(2) + 1e-12
    assert np.all(r.generation == m.generation[0] + 2)

import dataclasses

import numpy as np
import pytest

from afem.fem import load_vector
from afem.problems import KELLOGG, REGISTRY, get_problem, kellogg_mu_branches, validate

rng = np.random.default_rng(2024)


def fd_laplacian(u, x, y, h):
    return (u(x + h, y) + u(x - h, y) + u(x, y + h) + u(x, y - h) - 4 * u(x, y)) / h ** 2


def fd_gradient(u, x, y, h=1e-6):
    return np.stack([(u(x + h, y) - u(x - h, y)) / (2 * h), (u(x, y + h) - u(x, y - h)) / (2 * h)], axis=-1)


def test_lshape_values_and_harmonicity():
    p = get_problem("lshape")
    assert p.exact_u(1.0, 0.0) == pytest.approx(0.0, abs=1e-15)
    t = 3 * np.pi / 4
    assert p.exact_u(np.cos(t), np.sin(t)) == pytest.approx(1.0, abs=1e-14)
    pts = rng.uniform(-0.95, 0.95, (400, 2))
    inside = ~((pts[:, 0] > 0) & (pts[:, 1] < 0)) & (np.hypot(*pts.T) > 0.2)
    inside &= ~((pts[:, 0] > -0.01) & (pts[:, 1] < 0.01))  # stay off the re-entrant edges
    x, y = pts[inside][:100].T
    assert len(x) == 100
    assert np.abs(fd_laplacian(p.exact_u, x, y, 1e-3)).max() <= 1e-4


def test_checkerboard_load():
    p = get_problem("checkerboard")
    assert p.f(1 / 8, 1 / 8) == -1.0
    assert p.f(3 / 8, 1 / 8) == 1.0
    # the reduced system only sees interior entries; boundary rows are eliminated
    b = load_vector(p.mesh, p.f)
    assert np.abs(b[p.mesh.interior_vertices]).max() <= 1e-13


def test_interface_branches():
    p = get_problem("interface4")
    # the first strip carries u = x + y + 9/10 with coefficient 1
    assert p.exact_u(-0.75, -0.75) == pytest.approx(-0.6)
    a = [1.0, 10.0, 100.0, 1000.0]
    c = [0.9, 0.0, 0.0, 0.009]
    branch = [lambda x, y, i=i: (x + y) / a[i] + c[i] for i in range(4)]
    assert branch[0](0.5, 0.5) == pytest.approx(1.9)
    for i, level in enumerate((-1.0, 0.0, 1.0)):
        s = rng.uniform(-1, 1, 20)
        x = s
        y = level - s
        assert np.abs(branch[i](x, y) - branch[i + 1](x, y)).max() <= 1e-12
        # a_i du/dn with n = (1, 1)/sqrt(2) is 2/sqrt(2) on every strip
        flux = [a[j] * 2 / a[j] / np.sqrt(2) for j in (i, i + 1)]
        assert abs(flux[0] - flux[1]) <= 1e-10


def test_layer_values_and_derivatives():
    p = get_problem("layer")
    t = 0.3
    cx, cy = 1.25 + np.pi / 3 * np.cos(t), -0.25 + np.pi / 3 * np.sin(t)
    assert p.exact_u(cx, cy) == pytest.approx(0.0, abs=1e-13)
    x, y = rng.uniform(-1, 1, (2, 50))
    g = p.exact_grad(x, y)
    np.testing.assert_allclose(fd_gradient(p.exact_u, x, y), g, rtol=1e-5, atol=1e-5 * np.abs(g).max())
    lap = fd_laplacian(p.exact_u, x, y, 1e-4)
    f = p.f(x, y)
    assert np.max(np.abs(-lap - f) / np.maximum(np.abs(f), 1)) <= 1e-4


def test_peaks_values_symmetry_and_load():
    p = get_problem("peaks")
    assert p.exact_u(-0.5, 0.5) == pytest.approx(100 - 1 / 2.01, rel=1e-14)
    x, y = rng.uniform(-1, 1, (2, 50))
    assert np.abs(p.exact_u(x, y) + p.exact_u(-x, -y)).max() <= 1e-12
    h = 1e-4

    def flux(px, py):
        return 10 * np.cos(py)[..., None] * p.exact_grad(px, py)

    div = (flux(x + h, y)[:, 0] - flux(x - h, y)[:, 0] + flux(x, y + h)[:, 1] - flux(x, y - h)[:, 1]) / (2 * h)
    f = p.f(x, y)
    assert np.max(np.abs(-div - f) / np.maximum(np.abs(f), 1)) <= 1e-4


def test_kellogg_parameters():
    g, s, r = KELLOGG["gamma"], KELLOGG["sigma"], KELLOGG["rho"]
    ratio = -np.tan((np.pi / 2 - s) * g) / np.tan(r * g)
    assert ratio == pytest.approx(KELLOGG["a1"] / KELLOGG["a2"], rel=1e-9)
    b = kellogg_mu_branches(np.array([np.pi / 2, np.pi, 3 * np.pi / 2]))
    assert abs(b[0, 0] - b[1, 0]) <= 1e-9
    assert abs(b[1, 1] - b[2, 1]) <= 1e-9
    assert abs(b[2, 2] - b[3, 2]) <= 1e-9
    assert abs(kellogg_mu_branches(2 * np.pi)[3] - kellogg_mu_branches(0.0)[0]) <= 1e-9
    p = get_problem("kellogg")
    assert p.exact_u(0.0, 0.0) == 0.0


@pytest.mark.parametrize("name", ["lshape", "interface4", "layer", "peaks", "kellogg"])
def test_validate_passes(name):
    report = validate(get_problem(name))
    assert report["ok"] is True, report


def test_validate_detects_bad_boundary_data():
    p = get_problem("lshape")
    bad = dataclasses.replace(p, g=lambda x, y: p.exact_u(x, y) + 1e-3)
    report = validate(bad)
    assert report["ok"] is False
    assert report["boundary"] > report["tolerances"]["boundary"]


def test_checkerboard_validation_not_applicable():
    report = validate(get_problem("checkerboard"))
    assert report["ok"] is None
    assert all(report[k] is None for k in ("boundary", "gradient", "pde_residual"))


@pytest.mark.parametrize("name", ["interface4", "kellogg"])
def test_initial_meshes_respect_subdomains(name):
    p = get_problem(name)
    m = p.mesh
    corners = m.vertices[m.elements]
    c = m.centroids[:, None, :]
    # points just inside each corner must carry the element's label
    near = corners + 1e-6 * (c - corners)
    lab = p.subdomain_of(near[..., 0], near[..., 1])
    assert np.all(lab == m.subdomain[:, None])


def test_constructors_deterministic_and_registry():
    for name in REGISTRY:
        a, b = get_problem(name), get_problem(name)
        assert np.array_equal(a.mesh.vertices, b.mesh.vertices)
        assert np.array_equal(a.mesh.elements, b.mesh.elements)
    assert get_problem("lshape").mesh.n_vertices == 21
    with pytest.raises(KeyError):
        get_problem("unknown")

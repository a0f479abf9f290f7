"""Benchmark problems: domains, initial meshes, data and exact solutions.

All callables take arrays ``x, y`` and broadcast; gradients return an array
with a trailing axis of length 2.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from .fem import CoefficientField
from .mesh import Mesh, assign_initial_labels, build_mesh, locate_elements, uniform_refine


@dataclass(frozen=True, eq=False)
class ProblemSpec:
    name: str
    mesh: Mesh
    coefficient: CoefficientField
    f: Callable
    g: Callable
    exact_u: Callable | None = None
    exact_grad: Callable | None = None
    subdomain_of: Callable | None = None
    description: str = ""
    extra_meshes: dict = field(default_factory=dict)

    @property
    def has_exact(self) -> bool:
        return self.exact_u is not None


def _zero(x, y):
    return np.zeros(np.broadcast(x, y).shape)


def square_mesh(n: int, pattern: str = "right", box=(0.0, 1.0, 0.0, 1.0)) -> Mesh:
    """Structured triangulation of a rectangle with ``n x n`` cells.

    ``pattern``: ``"right"`` (all diagonals /), ``"left"`` (all \\),
    ``"unionjack"`` (alternating diagonals) or ``"crisscross"`` (both
    diagonals with a centre node).
    """
    x0, x1, y0, y1 = box
    xs, ys = np.linspace(x0, x1, n + 1), np.linspace(y0, y1, n + 1)
    X, Y = np.meshgrid(xs, ys, indexing="ij")
    verts = [np.stack([X.ravel(), Y.ravel()], axis=1)]

    def vid(i, j):
        return i * (n + 1) + j

    tris = []
    nc = (n + 1) ** 2
    for i in range(n):
        for j in range(n):
            a, b, c, d = vid(i, j), vid(i + 1, j), vid(i + 1, j + 1), vid(i, j + 1)
            diag = pattern
            if pattern == "unionjack":
                diag = "right" if (i + j) % 2 == 0 else "left"
            if diag == "right":
                tris += [[a, b, c], [a, c, d]]
            elif diag == "left":
                tris += [[a, b, d], [b, c, d]]
            elif diag == "crisscross":
                m = nc + i * n + j
                tris += [[a, b, m], [b, c, m], [c, d, m], [d, a, m]]
            else:
                raise ValueError(f"unknown pattern {pattern!r}")
    if pattern == "crisscross":
        cx = 0.5 * (xs[:-1] + xs[1:])
        cy = 0.5 * (ys[:-1] + ys[1:])
        CX, CY = np.meshgrid(cx, cy, indexing="ij")
        verts.append(np.stack([CX.ravel(), CY.ravel()], axis=1))
    return assign_initial_labels(build_mesh(np.vstack(verts), tris))


# ---------------------------------------------------------------- L-shape

def _lshape_u(x, y):
    r = np.hypot(x, y)
    th = np.mod(np.arctan2(y, x), 2 * np.pi)
    return r ** (2 / 3) * np.sin(2 * th / 3)


def _lshape_grad(x, y):
    r = np.hypot(x, y)
    th = np.mod(np.arctan2(y, x), 2 * np.pi)
    with np.errstate(divide="ignore", invalid="ignore"):
        c = (2 / 3) * r ** (-1 / 3)
    # grad(r^a sin(a t)) = a r^(a-1) (sin((a-1) t), cos((a-1) t))
    return np.stack([c * np.sin(-th / 3), c * np.cos(-th / 3)], axis=-1)


def lshape_mesh() -> Mesh:
    v = [[0, 0], [1, 0], [1, 1], [0, 1], [-1, 1], [-1, 0], [-1, -1], [0, -1]]
    # six right triangles fanning the re-entrant corner
    t = [[0, 1, 2], [0, 2, 3], [0, 3, 4], [0, 4, 5], [0, 5, 6], [0, 6, 7]]
    return uniform_refine(assign_initial_labels(build_mesh(v, t)), 2)


def lshape() -> ProblemSpec:
    """Laplace equation on (-1,1)^2 minus (0,1)x(-1,0), corner singularity."""
    return ProblemSpec("lshape", lshape_mesh(), CoefficientField.identity(), _zero, _lshape_u,
                       _lshape_u, _lshape_grad,
                       description="u = r^(2/3) sin(2 theta/3), theta in [0, 3pi/2]")


# ---------------------------------------------------------------- checkerboard

def _checker_f(x, y):
    j = np.clip(np.floor(4 * np.asarray(x)), 0, 3)
    k = np.clip(np.floor(4 * np.asarray(y)), 0, 3)
    return np.where((j + k) % 2 == 1, 1.0, -1.0)


def checkerboard() -> ProblemSpec:
    """Poisson problem whose load is L2-orthogonal to the P1 space on ``mesh``.

    ``mesh`` is the alternating-diagonal mesh on the 4x4 grid of the load
    pattern; ``extra_meshes["coarse"]`` is a 2x2 criss-cross mesh that also
    gives a zero load vector but cuts across the pattern.
    """
    aligned = square_mesh(4, "unionjack")
    coarse = square_mesh(2, "crisscross")
    return ProblemSpec("checkerboard", aligned, CoefficientField.identity(), _checker_f, _zero,
                       description="f = +-1 on a 4x4 checkerboard, no exact solution",
                       extra_meshes={"aligned": aligned, "coarse": coarse})


# ---------------------------------------------------------------- four-strip interface

_IF_A = (1.0, 10.0, 100.0, 1000.0)
_IF_C = (0.9, 0.0, 0.0, 0.009)


def _strip(x, y):
    s = np.asarray(x) + np.asarray(y)
    return np.digitize(s, [-1.0, 0.0, 1.0])


def _interface_u(x, y):
    i = _strip(x, y)
    a = np.take(_IF_A, i)
    c = np.take(_IF_C, i)
    return (np.asarray(x) + np.asarray(y)) / a + c


def _interface_grad(x, y):
    g = 1.0 / np.take(_IF_A, _strip(x, y))
    return np.stack([g, g], axis=-1)


def four_quadrant_interface() -> ProblemSpec:
    """Piecewise linear solution with coefficients 1, 10, 100, 1000.

    The four regions are the strips ``x + y < -1``, ``-1 < x + y < 0``,
    ``0 < x + y < 1`` and ``x + y > 1`` of (-1,1)^2; these are the only
    interfaces across which the listed solution is continuous.
    """
    base = square_mesh(4, "left", box=(-1, 1, -1, 1))
    mesh = locate_elements(base, lambda c: _strip(c[:, 0], c[:, 1]))
    coef = CoefficientField.piecewise({i: a for i, a in enumerate(_IF_A)})
    return ProblemSpec("interface4", mesh, coef, _zero, _interface_u, _interface_u, _interface_grad,
                       subdomain_of=lambda x, y: _strip(x, y),
                       description="A = 1, 10, 100, 1000 on diagonal strips, exact P1 solution")


# ---------------------------------------------------------------- circular layer

LAYER_S = 60.0
LAYER_CENTER = (1.25, -0.25)
LAYER_RADIUS = np.pi / 3


def _layer_r(x, y):
    return np.hypot(x - LAYER_CENTER[0], y - LAYER_CENTER[1])


def _layer_u(x, y):
    return np.arctan(LAYER_S * (_layer_r(x, y) - LAYER_RADIUS))


def _layer_grad(x, y):
    r = _layer_r(x, y)
    t = LAYER_S * (r - LAYER_RADIUS)
    c = LAYER_S / (1 + t ** 2) / r
    return np.stack([c * (x - LAYER_CENTER[0]), c * (y - LAYER_CENTER[1])], axis=-1)


def _layer_f(x, y):
    # u = F(r): -lap u = -(F'' + F'/r)
    r = _layer_r(x, y)
    t = LAYER_S * (r - LAYER_RADIUS)
    d1 = LAYER_S / (1 + t ** 2)
    d2 = -2 * LAYER_S ** 2 * t / (1 + t ** 2) ** 2
    return -(d2 + d1 / r)


def circular_layer() -> ProblemSpec:
    """Poisson problem with a steep circular layer of radius pi/3."""
    return ProblemSpec("layer", square_mesh(4, "right", box=(-1, 1, -1, 1)), CoefficientField.identity(),
                       _layer_f, _layer_u, _layer_u, _layer_grad,
                       description="u = atan(60 (|x - (1.25,-0.25)| - pi/3))")


# ---------------------------------------------------------------- variable coefficient peaks

_PEAK_EPS = 0.01


def _peaks_parts(x, y):
    q1 = (x + 0.5) ** 2 + (y - 0.5) ** 2 + _PEAK_EPS
    q2 = (x - 0.5) ** 2 + (y + 0.5) ** 2 + _PEAK_EPS
    return q1, q2


def _peaks_u(x, y):
    q1, q2 = _peaks_parts(x, y)
    return 1 / q1 - 1 / q2


def _peaks_grad(x, y):
    q1, q2 = _peaks_parts(x, y)
    gx = -2 * (x + 0.5) / q1 ** 2 + 2 * (x - 0.5) / q2 ** 2
    gy = -2 * (y - 0.5) / q1 ** 2 + 2 * (y + 0.5) / q2 ** 2
    return np.stack([gx, gy], axis=-1)


def _peaks_lap(x, y):
    # lap(1/q) = -4/q^2 + 8 (q - eps)/q^3 for q = |x - c|^2 + eps
    q1, q2 = _peaks_parts(x, y)
    l1 = -4 / q1 ** 2 + 8 * (q1 - _PEAK_EPS) / q1 ** 3
    l2 = -4 / q2 ** 2 + 8 * (q2 - _PEAK_EPS) / q2 ** 3
    return l1 - l2


def _peaks_a(x, y):
    return 10 * np.cos(y) + 0 * x


def _peaks_grad_a(x, y):
    return (0 * x, -10 * np.sin(y) + 0 * x)


def _peaks_f(x, y):
    gy = _peaks_grad(x, y)[..., 1]
    return -(-10 * np.sin(y) * gy + _peaks_a(x, y) * _peaks_lap(x, y))


def variable_coefficient_peaks() -> ProblemSpec:
    """A = 10 cos(y) I with two sharp peaks of opposite sign."""
    return ProblemSpec("peaks", square_mesh(4, "right", box=(-1, 1, -1, 1)),
                       CoefficientField.scalar(_peaks_a, _peaks_grad_a), _peaks_f, _peaks_u,
                       _peaks_u, _peaks_grad, description="A = 10 cos(y) I, two peaks")


# ---------------------------------------------------------------- Kellogg

KELLOGG = dict(gamma=0.1, sigma=-14.92256510455152, rho=np.pi / 4, a1=161.4476387975881, a2=1.0)


def _kellogg_mu(th, deriv=False):
    g, s, p = KELLOGG["gamma"], KELLOGG["sigma"], KELLOGG["rho"]
    c = [np.cos((np.pi / 2 - s) * g), np.cos(p * g), np.cos(s * g), np.cos((np.pi / 2 - p) * g)]
    shift = [np.pi / 2 - p, np.pi - s, np.pi + p, 3 * np.pi / 2 + s]
    branch = np.minimum((th // (np.pi / 2)).astype(int), 3)
    cb = np.take(c, branch)
    arg = (th - np.take(shift, branch)) * g
    if deriv:
        return -g * cb * np.sin(arg)
    return cb * np.cos(arg)


def kellogg_mu_branches(th):
    """The four branch formulas evaluated at ``th`` (shape (4, ...)), for checks."""
    g, s, p = KELLOGG["gamma"], KELLOGG["sigma"], KELLOGG["rho"]
    return np.array([np.cos((np.pi / 2 - s) * g) * np.cos((th - np.pi / 2 + p) * g),
                     np.cos(p * g) * np.cos((th - np.pi + s) * g),
                     np.cos(s * g) * np.cos((th - np.pi - p) * g),
                     np.cos((np.pi / 2 - p) * g) * np.cos((th - 3 * np.pi / 2 - s) * g)])


def _polar(x, y):
    return np.hypot(x, y), np.mod(np.arctan2(y, x), 2 * np.pi)


def _kellogg_u(x, y):
    r, th = _polar(np.asarray(x, float), np.asarray(y, float))
    return r ** KELLOGG["gamma"] * _kellogg_mu(th)


def _kellogg_grad(x, y):
    r, th = _polar(np.asarray(x, float), np.asarray(y, float))
    g = KELLOGG["gamma"]
    mu, dmu = _kellogg_mu(th), _kellogg_mu(th, deriv=True)
    with np.errstate(divide="ignore", invalid="ignore"):
        c = r ** (g - 1)
    ur, ut = g * mu, dmu
    return np.stack([c * (ur * np.cos(th) - ut * np.sin(th)), c * (ur * np.sin(th) + ut * np.cos(th))], axis=-1)


def _quadrant(x, y):
    _, th = _polar(np.asarray(x, float), np.asarray(y, float))
    return np.minimum((th // (np.pi / 2)).astype(int), 3)


def kellogg() -> ProblemSpec:
    """Kellogg's checkerboard-coefficient problem with a r^0.1 singularity."""
    base = square_mesh(2, "crisscross", box=(-1, 1, -1, 1))
    mesh = locate_elements(base, lambda c: _quadrant(c[:, 0], c[:, 1]))
    a1, a2 = KELLOGG["a1"], KELLOGG["a2"]
    coef = CoefficientField.piecewise({0: a1, 1: a2, 2: a1, 3: a2})
    return ProblemSpec("kellogg", mesh, coef, _zero, _kellogg_u, _kellogg_u, _kellogg_grad,
                       subdomain_of=_quadrant, description="A = a1 on xy>0, a2 on xy<0; u = r^0.1 mu(theta)")


REGISTRY = {
    "lshape": lshape,
    "checkerboard": checkerboard,
    "interface4": four_quadrant_interface,
    "layer": circular_layer,
    "peaks": variable_coefficient_peaks,
    "kellogg": kellogg,
}


def get_problem(name: str) -> ProblemSpec:
    try:
        return REGISTRY[name]()
    except KeyError:
        raise KeyError(f"unknown problem {name!r}; choose from {sorted(REGISTRY)}") from None


# ---------------------------------------------------------------- validation

def _boundary_samples(mesh: Mesh, per_edge: int):
    v = mesh.vertices[mesh.boundary_edges]
    s = (np.arange(per_edge) + 0.5) / per_edge
    return (v[:, None, 0] * (1 - s)[None, :, None] + v[:, None, 1] * s[None, :, None]).reshape(-1, 2)


def validate(problem: ProblemSpec, samples: int = 100, seed: int = 0) -> dict:
    """Finite-difference and consistency checks of the exact solution.

    Returns a dict of maximum violations (``None`` where not applicable)
    and an overall ``ok`` flag.
    """
    report = {"problem": problem.name, "boundary": None, "continuity": None, "flux": None,
              "pde_residual": None, "gradient": None, "ok": True}
    if not problem.has_exact:
        report["ok"] = None
        return report
    rng = np.random.default_rng(seed)
    mesh = problem.mesh
    u, g, grad = problem.exact_u, problem.g, problem.exact_grad

    pb = _boundary_samples(mesh, max(1, samples // max(1, len(mesh.boundary_edges))) + 1)
    report["boundary"] = float(np.max(np.abs(u(pb[:, 0], pb[:, 1]) - g(pb[:, 0], pb[:, 1]))))

    # interior sample points: random points inside random elements, away from r=0 singularities
    elems = rng.integers(0, mesh.n_elements, samples)
    lam = rng.dirichlet(np.ones(3), samples)
    pts = np.einsum("si,sid->sd", lam, mesh.vertices[mesh.elements[elems]])
    pts = pts[np.hypot(pts[:, 0], pts[:, 1]) > 0.05]
    x, y = pts[:, 0], pts[:, 1]

    h = 1e-6
    fd = np.stack([(u(x + h, y) - u(x - h, y)) / (2 * h), (u(x, y + h) - u(x, y - h)) / (2 * h)], axis=-1)
    gx = grad(x, y)
    same = np.ones(len(x), bool)
    if problem.subdomain_of is not None:
        lab = problem.subdomain_of(x, y)
        for dx, dy in ((h, 0), (-h, 0), (0, h), (0, -h)):
            same &= problem.subdomain_of(x + dx, y + dy) == lab
    scale = np.maximum(np.abs(gx).max(axis=1), 1.0)
    report["gradient"] = float(np.max(np.abs(fd - gx).max(axis=1)[same] / scale[same]))

    # PDE residual -div(a grad u) - f with a central difference of the exact flux
    hp = 1e-5
    coef = problem.coefficient

    def a_at(px, py):
        if coef.kind == "identity":
            return np.ones_like(px)
        if coef.kind == "scalar":
            return coef.scalar_at(np.stack([px, py], -1))
        lab = problem.subdomain_of(px, py)
        return np.array([coef.matrices[int(k)][0, 0] for k in np.ravel(lab)]).reshape(np.shape(px))

    def flux(px, py):
        return a_at(px, py)[..., None] * grad(px, py)

    div = ((flux(x + hp, y)[:, 0] - flux(x - hp, y)[:, 0]) + (flux(x, y + hp)[:, 1] - flux(x, y - hp)[:, 1])) / (2 * hp)
    fval = problem.f(x, y) * np.ones_like(x)
    keep = np.ones(len(x), bool)
    if problem.subdomain_of is not None:
        lab = problem.subdomain_of(x, y)
        for dx, dy in ((hp, 0), (-hp, 0), (0, hp), (0, -hp)):
            keep &= problem.subdomain_of(x + dx, y + dy) == lab
    fscale = np.maximum(np.abs(fval), 1.0)
    report["pde_residual"] = float(np.max(np.abs(-div - fval)[keep] / fscale[keep])) if keep.any() else 0.0

    if problem.subdomain_of is not None:
        topo = mesh.topology()
        ie = np.flatnonzero(topo.is_interface)
        s = rng.uniform(0.05, 0.95, (len(ie), 4))
        v = mesh.vertices[topo.edges[ie]]
        p = (v[:, None, 0] * (1 - s)[..., None] + v[:, None, 1] * s[..., None]).reshape(-1, 2)
        n = np.repeat(topo.normals[ie], 4, axis=0)
        d = 1e-9
        plus, minus = p - d * n, p + d * n
        up = u(plus[:, 0], plus[:, 1])
        um = u(minus[:, 0], minus[:, 1])
        report["continuity"] = float(np.max(np.abs(up - um))) if len(p) else 0.0
        fp = (flux(plus[:, 0], plus[:, 1]) * n).sum(-1)
        fm = (flux(minus[:, 0], minus[:, 1]) * n).sum(-1)
        report["flux"] = float(np.max(np.abs(fp - fm) / np.maximum(np.abs(fp), 1.0))) if len(p) else 0.0

    tol = {"boundary": 1e-12, "continuity": 1e-8, "flux": 1e-6, "pde_residual": 1e-4, "gradient": 1e-5}
    report["ok"] = all(report[k] is None or report[k] <= tol[k] for k in tol)
    report["tolerances"] = tol
    return report

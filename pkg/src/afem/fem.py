"""P1 finite elements for -div(A grad u) = f with Dirichlet data."""
from __future__ import annotations

import logging
from dataclasses import dataclass
from typing import Callable, Mapping

import numpy as np
from scipy import sparse
from scipy.sparse import linalg as spla

from .mesh import DegenerateElement, Mesh

log = logging.getLogger(__name__)


class NonSPDCoefficient(ValueError):
    pass


class MaxIterExceeded(RuntimeError):
    """CG did not reach the tolerance.  ``x`` holds the last iterate."""

    def __init__(self, msg, x, iterations, residual):
        super().__init__(msg)
        self.x = x
        self.iterations = iterations
        self.residual = residual


# ---------------------------------------------------------------- quadrature

@dataclass(frozen=True)
class QuadratureRule:
    """Barycentric points and area-normalised weights on a triangle."""

    points: np.ndarray
    weights: np.ndarray
    degree: int


def _dunavant5():
    s15 = np.sqrt(15.0)
    a1, b1 = (9 - 2 * s15) / 21, (6 + s15) / 21
    a2, b2 = (9 + 2 * s15) / 21, (6 - s15) / 21
    w1, w2 = (155 + s15) / 1200, (155 - s15) / 1200
    pts = [[1 / 3, 1 / 3, 1 / 3],
           [a1, b1, b1], [b1, a1, b1], [b1, b1, a1],
           [a2, b2, b2], [b2, a2, b2], [b2, b2, a2]]
    return QuadratureRule(np.array(pts), np.array([9 / 40, w1, w1, w1, w2, w2, w2]), 5)


QUADRATURE = {
    1: QuadratureRule(np.array([[1 / 3, 1 / 3, 1 / 3]]), np.array([1.0]), 1),
    2: QuadratureRule(np.array([[2 / 3, 1 / 6, 1 / 6], [1 / 6, 2 / 3, 1 / 6], [1 / 6, 1 / 6, 2 / 3]]),
                      np.full(3, 1 / 3), 2),
    5: _dunavant5(),
}


def quadrature(degree: int = 5) -> QuadratureRule:
    """Smallest stored rule that is exact to ``degree``."""
    for d in sorted(QUADRATURE):
        if d >= degree:
            return QUADRATURE[d]
    raise ValueError(f"no quadrature rule of degree {degree}")


DEFAULT_QUAD = QUADRATURE[5]


def quadrature_points(mesh: Mesh, quad: QuadratureRule = DEFAULT_QUAD) -> np.ndarray:
    """Physical quadrature points, shape (N_e, Q, 2)."""
    return np.einsum("qi,eid->eqd", quad.points, mesh.vertices[mesh.elements])


def integrate(mesh: Mesh, values: np.ndarray, quad: QuadratureRule = DEFAULT_QUAD) -> np.ndarray:
    """Per-element integrals of quadrature-point ``values`` (N_e, Q)."""
    return mesh.areas * (values @ quad.weights)


# ---------------------------------------------------------------- coefficient

@dataclass(frozen=True)
class CoefficientField:
    """Diffusion coefficient A.

    ``kind`` is ``"identity"``, ``"piecewise"`` (one SPD 2x2 matrix per
    subdomain label) or ``"scalar"`` (``A = a(x, y) I``; ``grad`` optional).
    """

    kind: str = "identity"
    matrices: Mapping[int, np.ndarray] | None = None
    func: Callable | None = None
    grad: Callable | None = None

    def __post_init__(self):
        if self.kind == "piecewise":
            for label, m in self.matrices.items():
                m = np.asarray(m, dtype=float)
                if m.shape != (2, 2) or not np.allclose(m, m.T, rtol=1e-12, atol=0):
                    raise NonSPDCoefficient(f"matrix for subdomain {label} is not symmetric")
                if np.linalg.eigvalsh(m).min() <= 0:
                    raise NonSPDCoefficient(f"matrix for subdomain {label} is not positive definite")
        elif self.kind == "scalar":
            if self.func is None:
                raise ValueError("scalar coefficient needs func")
        elif self.kind != "identity":
            raise ValueError(f"unknown coefficient kind {self.kind!r}")

    @classmethod
    def identity(cls):
        return cls("identity")

    @classmethod
    def piecewise(cls, matrices: Mapping[int, object]):
        mats = {int(k): (np.eye(2) * v if np.ndim(v) == 0 else np.asarray(v, dtype=float))
                for k, v in matrices.items()}
        return cls("piecewise", matrices=mats)

    @classmethod
    def scalar(cls, func, grad=None):
        return cls("scalar", func=func, grad=grad)

    @property
    def is_elementwise_constant(self) -> bool:
        return self.kind != "scalar"

    @property
    def n_subdomains(self) -> int:
        return len(self.matrices) if self.kind == "piecewise" else 1

    def element_matrices(self, mesh: Mesh) -> np.ndarray:
        """(N_e, 2, 2) coefficient per element; only for elementwise-constant kinds."""
        if self.kind == "identity":
            return np.broadcast_to(np.eye(2), (mesh.n_elements, 2, 2))
        if self.kind == "piecewise":
            labels = np.unique(mesh.subdomain)
            missing = set(labels.tolist()) - set(self.matrices)
            if missing:
                raise KeyError(f"no coefficient for subdomain(s) {sorted(missing)}")
            table = np.zeros((labels.max() + 1, 2, 2))
            for k, m in self.matrices.items():
                if k <= labels.max():
                    table[k] = m
            return table[mesh.subdomain]
        raise TypeError("variable coefficient has no element matrices")

    def scalar_at(self, points: np.ndarray) -> np.ndarray:
        """a(x) at points (..., 2) for the scalar kind."""
        return np.asarray(self.func(points[..., 0], points[..., 1]), dtype=float) * np.ones(points.shape[:-1])

    def gradient_at(self, points: np.ndarray, fd_step: float | None = None) -> np.ndarray:
        """grad a at points; central differences when no analytic gradient is set."""
        if self.grad is not None:
            g = self.grad(points[..., 0], points[..., 1])
            return np.broadcast_to(np.stack([np.asarray(c, float) * np.ones(points.shape[:-1]) for c in g], axis=-1),
                                   points.shape)
        if fd_step is None:
            raise MissingCoefficientGradient("coefficient has no analytic gradient")
        x, y = points[..., 0], points[..., 1]
        gx = (self.func(x + fd_step, y) - self.func(x - fd_step, y)) / (2 * fd_step)
        gy = (self.func(x, y + fd_step) - self.func(x, y - fd_step)) / (2 * fd_step)
        return np.stack([gx, gy], axis=-1)

    def matrices_at(self, mesh: Mesh, points: np.ndarray) -> np.ndarray:
        """A at per-element points (N_e, Q, 2) -> (N_e, Q, 2, 2)."""
        if self.kind == "scalar":
            return self.scalar_at(points)[..., None, None] * np.eye(2)
        return np.broadcast_to(self.element_matrices(mesh)[:, None], points.shape[:2] + (2, 2))


class MissingCoefficientGradient(ValueError):
    pass


# ---------------------------------------------------------------- FE function

@dataclass(frozen=True, eq=False)
class FEFunction:
    mesh: Mesh
    values: np.ndarray

    def __post_init__(self):
        if len(self.values) != self.mesh.n_vertices:
            raise ValueError("one nodal value per mesh vertex required")

    @classmethod
    def interpolate(cls, mesh: Mesh, func) -> "FEFunction":
        v = mesh.vertices
        return cls(mesh, np.asarray(func(v[:, 0], v[:, 1]), dtype=float) * np.ones(len(v)))

    def gradients(self) -> np.ndarray:
        """(N_e, 2) piecewise-constant gradient."""
        return np.einsum("ei,eid->ed", self.values[self.mesh.elements], self.mesh.basis_gradients)

    def at_quadrature(self, quad: QuadratureRule = DEFAULT_QUAD) -> np.ndarray:
        return self.values[self.mesh.elements] @ quad.points.T


def element_gradient(u_h: FEFunction, element_index: int) -> np.ndarray:
    return u_h.values[u_h.mesh.elements[element_index]] @ u_h.mesh.basis_gradients[element_index]


# ---------------------------------------------------------------- assembly

def local_stiffness(triangle_coords, A_value=None) -> np.ndarray:
    """3x3 P1 stiffness matrix |K| grad(phi_i)^T A grad(phi_j)."""
    p = np.asarray(triangle_coords, dtype=float)
    A = np.eye(2) if A_value is None else np.asarray(A_value, dtype=float)
    area = 0.5 * ((p[1, 0] - p[0, 0]) * (p[2, 1] - p[0, 1]) - (p[2, 0] - p[0, 0]) * (p[1, 1] - p[0, 1]))
    if abs(area) <= 1e-14 * np.ptp(p, axis=0).max() ** 2:
        raise DegenerateElement("zero-area triangle")
    e = np.array([p[2] - p[1], p[0] - p[2], p[1] - p[0]])
    g = np.stack([-e[:, 1], e[:, 0]], axis=1) / (2 * area)
    return abs(area) * g @ A @ g.T


def stiffness_matrix(mesh: Mesh, coefficient: CoefficientField, quad: QuadratureRule = DEFAULT_QUAD):
    G = mesh.basis_gradients
    if coefficient.is_elementwise_constant:
        A = coefficient.element_matrices(mesh)
        Kloc = mesh.areas[:, None, None] * np.einsum("eid,edc,ejc->eij", G, A, G)
    else:
        abar = coefficient.scalar_at(quadrature_points(mesh, quad)) @ quad.weights
        Kloc = (mesh.areas * abar)[:, None, None] * np.einsum("eid,ejd->eij", G, G)
    rows = np.repeat(mesh.elements, 3, axis=1).ravel()
    cols = np.tile(mesh.elements, (1, 3)).ravel()
    K = sparse.csr_matrix((Kloc.ravel(), (rows, cols)), shape=(mesh.n_vertices,) * 2)
    K.sum_duplicates()
    K.sort_indices()
    return K


def load_vector(mesh: Mesh, f, quad: QuadratureRule = DEFAULT_QUAD) -> np.ndarray:
    qp = quadrature_points(mesh, quad)
    fq = np.asarray(f(qp[..., 0], qp[..., 1]), dtype=float) * np.ones(qp.shape[:2])
    bloc = mesh.areas[:, None] * ((fq * quad.weights) @ quad.points)
    return np.bincount(mesh.elements.ravel(), weights=bloc.ravel(), minlength=mesh.n_vertices)


def assemble_system(mesh: Mesh, coefficient: CoefficientField, f, quad: QuadratureRule = DEFAULT_QUAD):
    """Global stiffness matrix (CSR, no constraints) and load vector."""
    return stiffness_matrix(mesh, coefficient, quad), load_vector(mesh, f, quad)


@dataclass(frozen=True, eq=False)
class ConstrainedSystem:
    matrix: sparse.csr_matrix
    rhs: np.ndarray
    free: np.ndarray
    fixed: np.ndarray
    fixed_values: np.ndarray
    n: int

    def expand(self, x_free) -> np.ndarray:
        u = np.empty(self.n)
        u[self.free] = x_free
        u[self.fixed] = self.fixed_values
        return u


def apply_dirichlet(system, mesh: Mesh, g=None) -> ConstrainedSystem:
    """Eliminate boundary DOFs, with nodal interpolation of ``g``."""
    K, b = system
    fixed = mesh.boundary_vertices
    free = mesh.interior_vertices
    if g is None:
        gv = np.zeros(len(fixed))
    else:
        x = mesh.vertices[fixed]
        gv = np.asarray(g(x[:, 0], x[:, 1]), dtype=float) * np.ones(len(fixed))
    Kff = K[free][:, free].tocsr()
    rhs = b[free] - K[free][:, fixed] @ gv
    Kff.sort_indices()
    return ConstrainedSystem(Kff, rhs, free, fixed, gv, mesh.n_vertices)


# ---------------------------------------------------------------- solver

def solve_cg(matrix, rhs, tol_rel: float = 1e-10, max_iter: int | None = None, x0=None):
    """Jacobi-preconditioned CG.  Returns ``(x, iterations)``."""
    rhs = np.asarray(rhs, dtype=float)
    n = len(rhs)
    if max_iter is None:
        max_iter = max(10 * n, 10)
    bnorm = np.linalg.norm(rhs)
    if bnorm == 0.0:
        return np.zeros(n), 0
    d = matrix.diagonal()
    M = sparse.diags(1.0 / d)
    count = [0]

    def cb(_):
        count[0] += 1

    x, info = spla.cg(matrix, rhs, x0=x0, rtol=tol_rel, atol=0.0, maxiter=max_iter, M=M, callback=cb)
    res = np.linalg.norm(rhs - matrix @ x) / bnorm
    if info != 0 or res > tol_rel * 10:
        raise MaxIterExceeded(f"CG stopped after {count[0]} iterations, relative residual {res:.3e}",
                              x, count[0], res)
    return x, count[0]


def solve(mesh: Mesh, coefficient: CoefficientField, f, g=None, quad: QuadratureRule = DEFAULT_QUAD,
          tol_rel: float = 1e-10, max_iter: int | None = None) -> FEFunction:
    """Assemble, constrain and solve; the P1 Galerkin approximation on ``mesh``."""
    cs = apply_dirichlet(assemble_system(mesh, coefficient, f, quad), mesh, g)
    if len(cs.free):
        x, its = solve_cg(cs.matrix, cs.rhs, tol_rel, max_iter)
        log.debug("cg: %d dofs, %d iterations", len(cs.free), its)
    else:
        x = np.zeros(0)
    return FEFunction(mesh, cs.expand(x))


# ---------------------------------------------------------------- errors

def weighted_norm_sq(mesh: Mesh, diff_qp: np.ndarray, coefficient: CoefficientField | None,
                     quad: QuadratureRule, points=None) -> np.ndarray:
    """Per-element integral of d^T A d for vector values ``diff_qp`` (N_e, Q, 2)."""
    if coefficient is None or coefficient.kind == "identity":
        dens = (diff_qp ** 2).sum(-1)
    elif coefficient.is_elementwise_constant:
        A = coefficient.element_matrices(mesh)
        dens = np.einsum("eqi,eij,eqj->eq", diff_qp, A, diff_qp)
    else:
        a = coefficient.scalar_at(points if points is not None else quadrature_points(mesh, quad))
        dens = a * (diff_qp ** 2).sum(-1)
    return integrate(mesh, dens, quad)


def energy_error(u_h: FEFunction, exact_gradient, coefficient: CoefficientField | None = None,
                 quad: QuadratureRule = DEFAULT_QUAD):
    """``||A^{1/2} (grad u - grad u_h)||`` and its per-element contributions.

    Returns ``(total, per_element)`` where ``per_element`` holds the local
    norms (not squared).
    """
    mesh = u_h.mesh
    qp = quadrature_points(mesh, quad)
    gu = np.asarray(exact_gradient(qp[..., 0], qp[..., 1]), dtype=float)
    d = gu - u_h.gradients()[:, None, :]
    loc = weighted_norm_sq(mesh, d, coefficient, quad, qp)
    return float(np.sqrt(loc.sum())), np.sqrt(loc)

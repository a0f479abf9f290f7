"""Residual, ZZ and improved recovery-based error indicators."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .fem import DEFAULT_QUAD, CoefficientField, FEFunction, QuadratureRule, integrate, quadrature_points
from .mesh import EdgeTopology, Mesh
from .recovery import MeshMismatch, RecoveredGradient


class NotInteriorEdge(ValueError):
    pass


class ZeroError(ValueError):
    pass


@dataclass(frozen=True, eq=False)
class Estimate:
    """Elementwise indicators and their l2 aggregates.

    ``term1``/``term2`` hold the two parts of the indicator when the
    estimator has them (ZZ part and divergence residual for ``improved``,
    element residual and edge jumps for ``residual``).
    """

    kind: str
    eta_K: np.ndarray
    osc_K: np.ndarray
    term1_K: np.ndarray
    term2_K: np.ndarray

    @property
    def eta(self) -> float:
        return float(np.sqrt(np.sum(self.eta_K ** 2)))

    @property
    def osc(self) -> float:
        return float(np.sqrt(np.sum(self.osc_K ** 2)))

    @property
    def term1(self) -> float:
        return float(np.sqrt(np.sum(self.term1_K ** 2)))

    @property
    def term2(self) -> float:
        return float(np.sqrt(np.sum(self.term2_K ** 2)))


def _f_at(f, qp):
    return np.asarray(f(qp[..., 0], qp[..., 1]), dtype=float) * np.ones(qp.shape[:-1])


def oscillation(mesh: Mesh, f, quad: QuadratureRule = DEFAULT_QUAD):
    """``h_K ||f - f_K||_K`` per element and its l2 aggregate."""
    fq = _f_at(f, quadrature_points(mesh, quad))
    mean = fq @ quad.weights
    osc_sq = mesh.diameters ** 2 * integrate(mesh, (fq - mean[:, None]) ** 2, quad)
    osc_K = np.sqrt(np.maximum(osc_sq, 0.0))
    return osc_K, float(np.sqrt(osc_sq.sum()))


def _flux(mesh: Mesh, u_h: FEFunction, coefficient: CoefficientField, topo: EdgeTopology):
    """A grad u_h on both sides of every edge, (N_edges, 2, 2); zero for missing sides."""
    grads = u_h.gradients()
    adj = topo.elements
    side = np.where(adj >= 0, adj, 0)
    g = grads[side]
    if coefficient.is_elementwise_constant:
        A = coefficient.element_matrices(mesh)[side]
    else:
        v = mesh.vertices[topo.edges]
        mid = 0.5 * (v[:, 0] + v[:, 1])
        a = coefficient.scalar_at(mid)
        A = a[:, None, None, None] * np.broadcast_to(np.eye(2), (len(mid), 2, 2, 2))
    flux = np.einsum("esij,esj->esi", A, g)
    flux[adj < 0] = 0.0
    return flux


def edge_jumps(mesh: Mesh, u_h: FEFunction, coefficient: CoefficientField | None = None) -> np.ndarray:
    """Normal flux jump on every edge (zero on boundary edges)."""
    coefficient = coefficient or CoefficientField.identity()
    topo = mesh.topology()
    flux = _flux(mesh, u_h, coefficient, topo)
    J = ((flux[:, 0] - flux[:, 1]) * topo.normals).sum(axis=1)
    J[topo.is_boundary] = 0.0
    return J


def edge_jump(mesh: Mesh, u_h: FEFunction, coefficient: CoefficientField | None, edge: int) -> float:
    """``(A grad u_h|K+ - A grad u_h|K-) . n_e`` for one interior edge."""
    if mesh.topology().is_boundary[edge]:
        raise NotInteriorEdge(f"edge {edge} lies on the boundary")
    return float(edge_jumps(mesh, u_h, coefficient)[edge])


def residual_indicator(mesh: Mesh, u_h: FEFunction, coefficient: CoefficientField | None, f,
                       quad: QuadratureRule = DEFAULT_QUAD) -> Estimate:
    """Classical residual estimator.

    ``eta_K^2 = h_K^2 ||f||_K^2 + sum_{e in dK} h_e ||J_e||_e^2``; every
    interior edge therefore enters the indicators of both its elements, and
    the global value is the l2 sum of the element indicators.
    """
    coefficient = coefficient or CoefficientField.identity()
    qp = quadrature_points(mesh, quad)
    r = _f_at(f, qp)
    if not coefficient.is_elementwise_constant:
        # div(a grad u_h) = grad a . grad u_h for P1 u_h
        ga = coefficient.gradient_at(qp, fd_step=_fd_step(mesh))
        r = r + np.einsum("eqd,ed->eq", ga, u_h.gradients())
    elem = mesh.diameters ** 2 * integrate(mesh, r ** 2, quad)
    topo = mesh.topology()
    J = edge_jumps(mesh, u_h, coefficient)
    edge_term = topo.lengths ** 2 * J ** 2
    jump = np.zeros(mesh.n_elements)
    inner = ~topo.is_boundary
    np.add.at(jump, topo.elements[inner, 0], edge_term[inner])
    np.add.at(jump, topo.elements[inner, 1], edge_term[inner])
    osc_K, _ = oscillation(mesh, f, quad)
    return Estimate("residual", np.sqrt(elem + jump), osc_K, np.sqrt(elem), np.sqrt(jump))


def _fd_step(mesh: Mesh) -> float:
    return 1e-6 * float(np.ptp(mesh.vertices, axis=0).max())


def _zz_sq(mesh: Mesh, u_h: FEFunction, G: RecoveredGradient, coefficient: CoefficientField,
           quad: QuadratureRule) -> np.ndarray:
    d = G.corners - u_h.gradients()[:, None, :]
    if coefficient.is_elementwise_constant:
        # exact for a linear field: int_K phi_i phi_j = |K| (1 + delta_ij) / 12
        A = coefficient.element_matrices(mesh)
        s = d.sum(axis=1)
        val = np.einsum("eid,edc,eic->e", d, A, d) + np.einsum("ed,edc,ec->e", s, A, s)
        return mesh.areas * val / 12.0
    qp = quadrature_points(mesh, quad)
    dq = np.einsum("qi,eid->eqd", quad.points, d)
    return integrate(mesh, coefficient.scalar_at(qp) * (dq ** 2).sum(-1), quad)


def _check(mesh, u_h, G):
    if u_h.mesh is not mesh or G.mesh is not mesh:
        raise MeshMismatch("u_h, G and mesh must share the same mesh")


def zz_indicator(mesh: Mesh, u_h: FEFunction, G: RecoveredGradient, coefficient: CoefficientField | None = None,
                 f=None, quad: QuadratureRule = DEFAULT_QUAD) -> Estimate:
    """``||A^{1/2}(G - grad u_h)||_K``."""
    _check(mesh, u_h, G)
    coefficient = coefficient or CoefficientField.identity()
    eta = np.sqrt(np.maximum(_zz_sq(mesh, u_h, G, coefficient, quad), 0.0))
    osc_K = oscillation(mesh, f, quad)[0] if f is not None else np.zeros(mesh.n_elements)
    return Estimate("zz", eta, osc_K, eta, np.zeros(mesh.n_elements))


def divergence_residual(mesh: Mesh, G: RecoveredGradient, coefficient: CoefficientField, f,
                        quad: QuadratureRule = DEFAULT_QUAD, fd_step: float | None = None) -> np.ndarray:
    """Squared ``h_K ||A^{-1/2}(f + div(A G))||_K`` per element."""
    qp = quadrature_points(mesh, quad)
    fq = _f_at(f, qp)
    if coefficient.is_elementwise_constant:
        A = coefficient.element_matrices(mesh)
        divAG = np.einsum("eij,ekj,eki->e", A, G.corners, mesh.basis_gradients)
        # scalar weight A^{-1}: smallest eigenvalue of A for matrix coefficients
        inv_a = 1.0 / np.linalg.eigvalsh(A)[:, 0]
        res = (fq + divAG[:, None]) ** 2 * inv_a[:, None]
    else:
        a = coefficient.scalar_at(qp)
        ga = coefficient.gradient_at(qp, fd_step=fd_step)
        divAG = np.einsum("eqd,eqd->eq", ga, G.at_quadrature(quad)) + a * G.divergence()[:, None]
        res = (fq + divAG) ** 2 / a
    return mesh.diameters ** 2 * integrate(mesh, res, quad)


def improved_indicator(mesh: Mesh, u_h: FEFunction, G: RecoveredGradient, coefficient: CoefficientField | None,
                       f, quad: QuadratureRule = DEFAULT_QUAD, allow_fd: bool = False) -> Estimate:
    """Recovery indicator plus the residual of the recovered gradient.

    ``eta_K^2 = ||A^{1/2}(G - grad u_h)||_K^2 + h_K^2 ||A^{-1/2}(f + div(A G))||_K^2``.
    A variable scalar coefficient needs an analytic gradient unless
    ``allow_fd`` is set, in which case central differences are used.
    """
    _check(mesh, u_h, G)
    coefficient = coefficient or CoefficientField.identity()
    if coefficient.kind == "piecewise" and len(np.unique(mesh.subdomain)) > 1 and G.mode != "per_subdomain":
        raise ValueError("piecewise coefficients need per_subdomain recovery")
    t1 = np.maximum(_zz_sq(mesh, u_h, G, coefficient, quad), 0.0)
    t2 = divergence_residual(mesh, G, coefficient, f, quad, _fd_step(mesh) if allow_fd else None)
    osc_K, _ = oscillation(mesh, f, quad)
    return Estimate("improved", np.sqrt(t1 + t2), osc_K, np.sqrt(t1), np.sqrt(t2))


def effectivity(estimate: Estimate | float, exact_energy_error: float) -> float:
    eta = estimate.eta if isinstance(estimate, Estimate) else float(estimate)
    if exact_energy_error < 1e-12:
        raise ZeroError("exact error is zero; effectivity not applicable")
    return eta / exact_energy_error

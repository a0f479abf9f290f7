"""Weighted-averaging gradient recovery."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .fem import DEFAULT_QUAD, CoefficientField, FEFunction, QuadratureRule, quadrature_points, weighted_norm_sq
from .mesh import Mesh


class EmptyPatch(RuntimeError):
    pass


class MeshMismatch(ValueError):
    pass


@dataclass(frozen=True, eq=False)
class RecoveredGradient:
    """Piecewise-linear vector field stored by element corners.

    ``corners[K, i]`` is the recovered gradient at local vertex ``i`` of
    element ``K``.  In ``"global"`` mode the field is continuous; in
    ``"per_subdomain"`` mode it may jump across subdomain interfaces.
    """

    mesh: Mesh
    corners: np.ndarray
    mode: str = "global"

    def at_quadrature(self, quad: QuadratureRule = DEFAULT_QUAD) -> np.ndarray:
        """(N_e, Q, 2) values at quadrature points."""
        return np.einsum("qi,eid->eqd", quad.points, self.corners)

    def divergence(self) -> np.ndarray:
        """Elementwise constant divergence, shape (N_e,)."""
        return np.einsum("eid,eid->e", self.corners, self.mesh.basis_gradients)

    def nodal(self) -> np.ndarray:
        """(N_v, 2) nodal values; only meaningful in global mode."""
        out = np.zeros((self.mesh.n_vertices, 2))
        out[self.mesh.elements.ravel()] = self.corners.reshape(-1, 2)
        return out


def _weights(mesh: Mesh, weighting: str) -> np.ndarray:
    if weighting == "area":
        return np.asarray(mesh.areas, dtype=float)
    if weighting == "arithmetic":
        return np.ones(mesh.n_elements)
    raise ValueError(f"unknown weighting {weighting!r}")


def recover(mesh: Mesh, u_h: FEFunction, weighting: str = "area", mode: str = "global") -> RecoveredGradient:
    """Average the elementwise gradients of ``u_h`` at every node.

    The weight of element ``K`` in the patch of node ``z`` is ``|K|/|w_z|``
    (``"area"``) or ``1/J_z`` (``"arithmetic"``).  With
    ``mode="per_subdomain"`` a node on an interface gets one value per
    subdomain, averaged only over that subdomain's elements.
    """
    if u_h.mesh is not mesh:
        raise MeshMismatch("u_h lives on a different mesh")
    if mode not in ("global", "per_subdomain"):
        raise ValueError(f"unknown recovery mode {mode!r}")
    grads = u_h.gradients()
    w = _weights(mesh, weighting)
    t = mesh.elements
    if mode == "global":
        slot = t
        n_slots = mesh.n_vertices
    else:
        labels, lab_idx = np.unique(mesh.subdomain, return_inverse=True)
        slot = t * len(labels) + lab_idx[:, None]
        n_slots = mesh.n_vertices * len(labels)
    wsum = np.bincount(slot.ravel(), weights=np.repeat(w, 3), minlength=n_slots)
    used = np.unique(slot)
    if np.any(wsum[used] <= 0):
        raise EmptyPatch("node with empty patch")
    alpha = w[:, None] / wsum[slot]
    # weights of a patch are convex
    assert np.all((alpha >= 0) & (alpha <= 1 + 1e-14))
    assert np.allclose(np.bincount(slot.ravel(), weights=alpha.ravel(), minlength=n_slots)[used], 1.0,
                       rtol=0, atol=1e-12)
    gx = np.bincount(slot.ravel(), weights=(alpha * grads[:, 0:1]).ravel(), minlength=n_slots)
    gy = np.bincount(slot.ravel(), weights=(alpha * grads[:, 1:2]).ravel(), minlength=n_slots)
    corners = np.stack([gx[slot], gy[slot]], axis=-1)
    corners.setflags(write=False)
    return RecoveredGradient(mesh, corners, mode)


def divergence(G: RecoveredGradient, element_index: int) -> float:
    return float(G.corners[element_index].ravel() @ G.mesh.basis_gradients[element_index].ravel())


def recovered_error(G: RecoveredGradient, exact_gradient, coefficient: CoefficientField | None = None,
                    quad: QuadratureRule = DEFAULT_QUAD):
    """``||A^{1/2}(grad u - G)||`` and per-element norms."""
    mesh = G.mesh
    qp = quadrature_points(mesh, quad)
    d = np.asarray(exact_gradient(qp[..., 0], qp[..., 1]), dtype=float) - G.at_quadrature(quad)
    loc = weighted_norm_sq(mesh, d, coefficient, quad, qp)
    return float(np.sqrt(loc.sum())), np.sqrt(loc)

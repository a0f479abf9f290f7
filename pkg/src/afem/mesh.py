"""
Conforming triangle meshes with newest-vertex bisection.

Elements are stored as vertex triples whose local vertex 0 is the *peak*
(newest vertex).  The edge opposite the peak, ``(v1, v2)``, is the
refinement edge.  Meshes are immutable; every refinement returns a new
:class:`Mesh`.

Examples
--------
>>> m = build_mesh([[0, 0], [1, 0], [1, 1], [0, 1]], [[0, 1, 2], [0, 2, 3]])
>>> m = assign_initial_labels(m)
>>> refine(m, [0], depth=1).n_elements
4
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np


class MeshError(ValueError):
    """Base class for mesh construction and refinement errors."""


class DegenerateElement(MeshError):
    pass


class NonConforming(MeshError):
    pass


class BadIndex(MeshError):
    pass


class ClosureDepthExceeded(MeshError):
    pass


def _frozen(a, dtype):
    a = np.array(a, dtype=dtype)
    a.setflags(write=False)
    return a


def _edge_keys(pairs, n_vertices):
    lo = np.minimum(pairs[..., 0], pairs[..., 1]).astype(np.int64)
    hi = np.maximum(pairs[..., 0], pairs[..., 1]).astype(np.int64)
    return lo * n_vertices + hi


def signed_areas(vertices, elements):
    p = vertices[elements]
    return 0.5 * ((p[:, 1, 0] - p[:, 0, 0]) * (p[:, 2, 1] - p[:, 0, 1])
                  - (p[:, 2, 0] - p[:, 0, 0]) * (p[:, 1, 1] - p[:, 0, 1]))


@dataclass(frozen=True, eq=False)
class Mesh:
    """Triangulation of a polygonal domain.

    Attributes
    ----------
    vertices : (N_v, 2) float array
    elements : (N_e, 3) int array, local vertex 0 is the newest vertex
    boundary_edges : (N_b, 2) int array
    boundary_markers : (N_b,) int array
    subdomain : (N_e,) int array of subdomain labels
    generation : (N_e,) int array of bisection depth
    """

    vertices: np.ndarray
    elements: np.ndarray
    boundary_edges: np.ndarray
    boundary_markers: np.ndarray
    subdomain: np.ndarray
    generation: np.ndarray
    _cache: dict = field(default_factory=dict, repr=False, compare=False)

    @property
    def n_vertices(self) -> int:
        return len(self.vertices)

    @property
    def n_elements(self) -> int:
        return len(self.elements)

    @property
    def areas(self) -> np.ndarray:
        if "areas" not in self._cache:
            a = signed_areas(self.vertices, self.elements)
            a.setflags(write=False)
            self._cache["areas"] = a
        return self._cache["areas"]

    @property
    def diameters(self) -> np.ndarray:
        """Longest edge length of every element."""
        if "diam" not in self._cache:
            p = self.vertices[self.elements]
            d = np.stack([np.linalg.norm(p[:, (i + 2) % 3] - p[:, (i + 1) % 3], axis=1)
                          for i in range(3)], axis=1)
            h = d.max(axis=1)
            h.setflags(write=False)
            self._cache["diam"] = h
        return self._cache["diam"]

    @property
    def centroids(self) -> np.ndarray:
        return self.vertices[self.elements].mean(axis=1)

    @property
    def basis_gradients(self) -> np.ndarray:
        """(N_e, 3, 2) array of the constant P1 basis gradients."""
        if "grads" not in self._cache:
            p = self.vertices[self.elements]
            # grad phi_i = rot90(p_{i+2} - p_{i+1}) / (2|K|)
            e = np.stack([p[:, 2] - p[:, 1], p[:, 0] - p[:, 2], p[:, 1] - p[:, 0]], axis=1)
            g = np.stack([-e[..., 1], e[..., 0]], axis=-1) / (2.0 * self.areas[:, None, None])
            g.setflags(write=False)
            self._cache["grads"] = g
        return self._cache["grads"]

    @property
    def boundary_vertices(self) -> np.ndarray:
        return np.unique(self.boundary_edges)

    @property
    def interior_vertices(self) -> np.ndarray:
        mask = np.ones(self.n_vertices, dtype=bool)
        mask[self.boundary_vertices] = False
        return np.flatnonzero(mask)

    def topology(self) -> "EdgeTopology":
        if "topo" not in self._cache:
            self._cache["topo"] = edge_topology(self)
        return self._cache["topo"]

    def vertex_element_incidence(self):
        """Sparse (N_v, N_e) 0/1 matrix."""
        if "v2e" not in self._cache:
            from scipy import sparse

            ne = self.n_elements
            rows = self.elements.ravel()
            cols = np.repeat(np.arange(ne), 3)
            self._cache["v2e"] = sparse.csr_matrix(
                (np.ones(3 * ne), (rows, cols)), shape=(self.n_vertices, ne))
        return self._cache["v2e"]

    def element_patches(self):
        """Sparse (N_e, N_e) 0/1 matrix; row K marks the elements of the patch of K."""
        if "patch" not in self._cache:
            v2e = self.vertex_element_incidence()
            p = (v2e.T @ v2e).tocsr()
            p.data[:] = 1.0
            self._cache["patch"] = p
        return self._cache["patch"]


def _make(vertices, elements, bedges, bmarkers, subdomain, generation):
    return Mesh(_frozen(vertices, float), _frozen(elements, np.int64),
                _frozen(np.reshape(bedges, (-1, 2)), np.int64),
                _frozen(bmarkers, np.int64), _frozen(subdomain, np.int64),
                _frozen(generation, np.int64))


def build_mesh(vertices, elements, boundary_edges=None, subdomain_labels=None,
               boundary_markers=None) -> Mesh:
    """Validate raw arrays and return a conforming, positively oriented mesh.

    ``boundary_edges`` may be given either as an ``(N_b, 2)`` array of vertex
    pairs (markers taken from ``boundary_markers`` or 1) or as an ``(N_b, 3)``
    array whose last column holds the marker.  When omitted, the boundary is
    every edge with a single adjacent element.
    """
    v = np.asarray(vertices, dtype=float).reshape(-1, 2)
    t = np.array(elements, dtype=np.int64).reshape(-1, 3)
    nv = len(v)
    if t.size and (t.min() < 0 or t.max() >= nv):
        raise BadIndex("element vertex index out of range")
    if np.any((t[:, 0] == t[:, 1]) | (t[:, 1] == t[:, 2]) | (t[:, 0] == t[:, 2])):
        raise DegenerateElement("element with repeated vertex")
    area = signed_areas(v, t)
    scale = np.ptp(v, axis=0).max() if nv else 1.0
    bad = np.abs(area) <= 1e-14 * scale ** 2
    if np.any(bad):
        raise DegenerateElement(f"zero-area element(s) {np.flatnonzero(bad)[:5].tolist()}")
    neg = area < 0
    t[neg] = t[neg][:, [0, 2, 1]]

    sub = np.zeros(len(t), dtype=np.int64) if subdomain_labels is None else np.asarray(subdomain_labels, dtype=np.int64)
    if sub.shape != (len(t),):
        raise BadIndex("subdomain_labels must have one entry per element")

    pairs = np.stack([t[:, [1, 2]], t[:, [2, 0]], t[:, [0, 1]]], axis=1).reshape(-1, 2)
    keys = _edge_keys(pairs, nv)
    ukeys, counts = np.unique(keys, return_counts=True)
    if np.any(counts > 2):
        raise NonConforming("edge shared by more than two elements")
    single = ukeys[counts == 1]

    if boundary_edges is None:
        be = np.stack([single // nv, single % nv], axis=1)
        bm = np.ones(len(be), dtype=np.int64) if boundary_markers is None else boundary_markers
    else:
        be = np.asarray(boundary_edges, dtype=np.int64)
        if be.ndim == 2 and be.shape[1] == 3:
            be, bm = be[:, :2], be[:, 2]
        else:
            be = be.reshape(-1, 2)
            bm = np.ones(len(be), dtype=np.int64) if boundary_markers is None else np.asarray(boundary_markers)
        if be.size and (be.min() < 0 or be.max() >= nv):
            raise BadIndex("boundary edge index out of range")
        bkeys = np.sort(_edge_keys(be, nv))
        if not np.array_equal(bkeys, np.sort(single)):
            raise NonConforming("boundary edges do not match the edges with a single element")
    _check_hanging_nodes(v, np.stack([single // nv, single % nv], axis=1))
    return _make(v, t, be, bm, sub, np.zeros(len(t), dtype=np.int64))


def _check_hanging_nodes(v, edges):
    # a vertex strictly inside an edge that has only one neighbour is a hanging node
    if len(edges) == 0:
        return
    cand = np.unique(edges)
    a, b = v[edges[:, 0]], v[edges[:, 1]]
    d = b - a
    L2 = (d ** 2).sum(axis=1)
    for chunk in np.array_split(cand, max(1, len(cand) // 256)):
        p = v[chunk][:, None, :] - a[None]
        s = (p * d).sum(-1) / L2
        cross = p[..., 0] * d[..., 1] - p[..., 1] * d[..., 0]
        hit = (np.abs(cross) <= 1e-12 * L2) & (s > 1e-12) & (s < 1 - 1e-12)
        if hit.any():
            raise NonConforming("hanging node on an edge")


def assign_initial_labels(mesh: Mesh) -> Mesh:
    """Make the longest edge of every element its refinement edge.

    Ties (within 1e-12 relative) go to the edge with the lexicographically
    smallest sorted vertex-index pair.
    """
    t = mesh.elements
    p = mesh.vertices[t]
    L = np.stack([((p[:, (i + 2) % 3] - p[:, (i + 1) % 3]) ** 2).sum(axis=1) for i in range(3)], axis=1)
    nv = mesh.n_vertices
    opp = np.stack([t[:, [1, 2]], t[:, [2, 0]], t[:, [0, 1]]], axis=1)
    keys = _edge_keys(opp, nv)
    longest = L >= L.max(axis=1, keepdims=True) * (1 - 1e-12)
    keys = np.where(longest, keys, np.iinfo(np.int64).max)
    peak = np.argmin(keys, axis=1)
    idx = (peak[:, None] + np.arange(3)[None]) % 3
    new_t = np.take_along_axis(t, idx, axis=1)
    return _make(mesh.vertices, new_t, mesh.boundary_edges, mesh.boundary_markers,
                 mesh.subdomain, mesh.generation)


def _bisect_marked(mesh: Mesh, marked: np.ndarray, max_closure: int):
    """One NVB pass: bisect marked elements plus the conforming closure.

    Returns the refined mesh and a parent index for every new element.
    """
    t = mesh.elements
    nv, ne = mesh.n_vertices, mesh.n_elements
    opp = np.stack([t[:, [1, 2]], t[:, [2, 0]], t[:, [0, 1]]], axis=1)
    keys, e2k = np.unique(_edge_keys(opp, nv), return_inverse=True)
    e2k = e2k.reshape(ne, 3)
    edge_marked = np.zeros(len(keys), dtype=bool)
    edge_marked[e2k[marked, 0]] = True

    # closure: an element with any marked edge must also split its refinement edge
    n_closure = 0
    while True:
        need = edge_marked[e2k].any(axis=1) & ~edge_marked[e2k[:, 0]]
        if not need.any():
            break
        edge_marked[e2k[need, 0]] = True
        n_closure += int(need.sum())
        if n_closure > max_closure:
            raise ClosureDepthExceeded(f"closure exceeded {max_closure} bisections")

    mk = keys[edge_marked]
    lo, hi = mk // nv, mk % nv
    mid = 0.5 * (mesh.vertices[lo] + mesh.vertices[hi])
    mid_index = np.arange(nv, nv + len(mk))
    verts = np.vstack([mesh.vertices, mid])
    # children reference new vertices, so re-key with the enlarged vertex count
    nv_new = len(verts)
    mk = lo * nv_new + hi

    def midpoint_of(a, b):
        if len(mk) == 0:
            return np.full(len(a), -1)
        k = _edge_keys(np.stack([a, b], axis=-1), nv_new)
        pos = np.minimum(np.searchsorted(mk, k), len(mk) - 1)
        return np.where(mk[pos] == k, mid_index[pos], -1)

    elems, sub, gen = t, mesh.subdomain, mesh.generation
    parent = np.arange(ne)
    # each element splits at most twice in one pass
    for _ in range(3):
        m = midpoint_of(elems[:, 1], elems[:, 2])
        split = m >= 0
        if not split.any():
            break
        keep = ~split
        e = elems[split]
        c1 = np.stack([m[split], e[:, 0], e[:, 1]], axis=1)
        c2 = np.stack([m[split], e[:, 2], e[:, 0]], axis=1)
        elems = np.vstack([elems[keep], c1, c2])
        sub = np.concatenate([sub[keep], sub[split], sub[split]])
        gen = np.concatenate([gen[keep], gen[split] + 1, gen[split] + 1])
        parent = np.concatenate([parent[keep], parent[split], parent[split]])

    be, bm = mesh.boundary_edges, mesh.boundary_markers
    if len(be):
        bmid = midpoint_of(be[:, 0], be[:, 1])
        s = bmid >= 0
        be = np.vstack([be[~s], np.stack([be[s, 0], bmid[s]], 1), np.stack([bmid[s], be[s, 1]], 1)])
        bm = np.concatenate([bm[~s], bm[s], bm[s]])
    return _make(verts, elems, be, bm, sub, gen), parent


def refine(mesh: Mesh, marks, depth: int = 1) -> Mesh:
    """Refine the marked elements by newest-vertex bisection.

    Every marked element is bisected through ``depth`` generations, plus
    whatever closure keeps the mesh conforming.  With ``depth=3`` each marked
    element receives a new vertex in its interior and one on every edge.
    """
    if depth not in (1, 3):
        raise ValueError("depth must be 1 or 3")
    marks = np.unique(np.asarray(list(marks) if not isinstance(marks, np.ndarray) else marks, dtype=np.int64))
    if marks.size and (marks.min() < 0 or marks.max() >= mesh.n_elements):
        raise BadIndex("marked element out of range")
    if marks.size == 0:
        return mesh
    # origin[i]: index of the marked ancestor of element i, or -1
    origin = np.full(mesh.n_elements, -1)
    origin[marks] = marks
    target_gen = np.zeros(mesh.n_elements, dtype=np.int64)
    target_gen[marks] = mesh.generation[marks] + depth
    while True:
        todo = np.flatnonzero((origin >= 0) & (mesh.generation < target_gen))
        if todo.size == 0:
            return mesh
        mesh, parent = _bisect_marked(mesh, todo, max_closure=2 * mesh.n_elements)
        origin, target_gen = origin[parent], target_gen[parent]


def bisect(mesh: Mesh, element_index: int) -> Mesh:
    """Bisect one element (with conforming closure)."""
    return refine(mesh, [element_index], depth=1)


def uniform_refine(mesh: Mesh, rounds: int = 1) -> Mesh:
    """Bisect every element ``rounds`` times."""
    for _ in range(rounds):
        mesh = refine(mesh, np.arange(mesh.n_elements), depth=1)
    return mesh


def element_diameter(mesh: Mesh, element_index: int) -> float:
    return float(mesh.diameters[element_index])


def element_angles(mesh: Mesh) -> np.ndarray:
    p = mesh.vertices[mesh.elements]
    out = np.empty((mesh.n_elements, 3))
    for i in range(3):
        a = p[:, (i + 1) % 3] - p[:, i]
        b = p[:, (i + 2) % 3] - p[:, i]
        cosang = (a * b).sum(1) / (np.linalg.norm(a, axis=1) * np.linalg.norm(b, axis=1))
        out[:, i] = np.arccos(np.clip(cosang, -1.0, 1.0))
    return out


def min_angle(mesh: Mesh) -> float:
    """Smallest interior angle of the mesh, in radians."""
    return float(element_angles(mesh).min())


@dataclass(frozen=True, eq=False)
class EdgeTopology:
    """Edge list of a mesh with adjacency.

    ``elements[e] = (K_plus, K_minus)`` with ``K_plus < K_minus``; ``K_minus``
    is -1 on boundary edges.  ``normals[e]`` points out of ``K_plus``.
    ``element_edges[K, i]`` is the edge opposite local vertex ``i``.
    """

    edges: np.ndarray
    elements: np.ndarray
    normals: np.ndarray
    lengths: np.ndarray
    is_boundary: np.ndarray
    is_interface: np.ndarray
    element_edges: np.ndarray

    @property
    def n_edges(self) -> int:
        return len(self.edges)


def edge_topology(mesh: Mesh) -> EdgeTopology:
    t = mesh.elements
    nv, ne = mesh.n_vertices, mesh.n_elements
    opp = np.stack([t[:, [1, 2]], t[:, [2, 0]], t[:, [0, 1]]], axis=1)
    keys, inv = np.unique(_edge_keys(opp, nv), return_inverse=True)
    inv = inv.reshape(ne, 3)
    edges = np.stack([keys // nv, keys % nv], axis=1)
    flat_e = inv.ravel()
    flat_k = np.repeat(np.arange(ne), 3)
    order = np.lexsort((flat_k, flat_e))
    fe, fk = flat_e[order], flat_k[order]
    first = np.ones(len(fe), dtype=bool)
    first[1:] = fe[1:] != fe[:-1]
    adj = np.full((len(keys), 2), -1, dtype=np.int64)
    adj[fe[first], 0] = fk[first]
    adj[fe[~first], 1] = fk[~first]
    if np.any(np.bincount(fe, minlength=len(keys)) > 2):
        raise NonConforming("edge shared by more than two elements")

    d = mesh.vertices[edges[:, 1]] - mesh.vertices[edges[:, 0]]
    length = np.linalg.norm(d, axis=1)
    n = np.stack([d[:, 1], -d[:, 0]], axis=1) / length[:, None]
    # orient away from K_plus
    mid = 0.5 * (mesh.vertices[edges[:, 0]] + mesh.vertices[edges[:, 1]])
    c = mesh.centroids[adj[:, 0]]
    flip = ((mid - c) * n).sum(axis=1) < 0
    n[flip] *= -1
    boundary = adj[:, 1] < 0
    sub = mesh.subdomain
    interface = ~boundary & (sub[adj[:, 0]] != sub[np.where(boundary, 0, adj[:, 1])])
    for a in (edges, adj, n, length, boundary, interface, inv):
        a.setflags(write=False)
    return EdgeTopology(edges, adj, n, length, boundary, interface, inv)


def is_conforming(mesh: Mesh) -> bool:
    """Every interior edge has two elements and no vertex hangs on a boundary edge."""
    try:
        topo = edge_topology(mesh)
        single = topo.edges[topo.is_boundary]
        nv = mesh.n_vertices
        if not np.array_equal(np.sort(_edge_keys(single, nv)),
                              np.sort(_edge_keys(mesh.boundary_edges, nv))):
            return False
        _check_hanging_nodes(mesh.vertices, single)
    except NonConforming:
        return False
    return True


def locate_elements(mesh: Mesh, labels_fn) -> Mesh:
    """Return a copy with subdomain labels set from ``labels_fn(centroids)``."""
    return _make(mesh.vertices, mesh.elements, mesh.boundary_edges, mesh.boundary_markers,
                 np.asarray(labels_fn(mesh.centroids), dtype=np.int64), mesh.generation)

"""Mesh text format, legacy VTK export and CSV dumps."""
from __future__ import annotations

import csv
from pathlib import Path

import numpy as np

from .mesh import Mesh, build_mesh


def write_mesh(mesh: Mesh, path) -> None:
    """Write the plain-text node/element format.

    Header ``NV NE NB``, then one ``x y`` line per vertex, one ``i j k label``
    line per element (peak vertex first) and one ``i j marker`` line per
    boundary edge.
    """
    with open(path, "w") as fh:
        fh.write(f"{mesh.n_vertices} {mesh.n_elements} {len(mesh.boundary_edges)}\n")
        for x, y in mesh.vertices:
            fh.write(f"{float(x)!r} {float(y)!r}\n")
        for (i, j, k), s in zip(mesh.elements, mesh.subdomain):
            fh.write(f"{i} {j} {k} {s}\n")
        for (i, j), m in zip(mesh.boundary_edges, mesh.boundary_markers):
            fh.write(f"{i} {j} {m}\n")


def read_mesh(path) -> Mesh:
    """Read a mesh written by :func:`write_mesh`; vertex order in elements is kept."""
    with open(path) as fh:
        lines = [ln.split() for ln in fh if ln.strip() and not ln.lstrip().startswith("#")]
    nv, ne, nb = (int(x) for x in lines[0])
    body = lines[1:]
    if len(body) != nv + ne + nb:
        raise ValueError(f"{path}: expected {nv + ne + nb} data lines, found {len(body)}")
    v = np.array(body[:nv], dtype=float)
    el = np.array(body[nv:nv + ne], dtype=np.int64).reshape(-1, 4)
    be = np.array(body[nv + ne:], dtype=np.int64).reshape(-1, 3)
    m = build_mesh(v, el[:, :3], be, el[:, 3])
    return m


def write_vtk(path, mesh: Mesh, point_data: dict | None = None, cell_data: dict | None = None,
              title: str = "afem mesh") -> None:
    """Legacy ASCII VTK unstructured grid.

    Scalars are arrays of length N; (N, 2) arrays are written as vectors;
    wider arrays (e.g. recovered-gradient corner values, (N_e, 6)) go into a
    FIELD block.  The subdomain label is always written as cell data.
    """
    point_data = dict(point_data or {})
    cell_data = {"subdomain": mesh.subdomain, **(cell_data or {})}
    out = ["# vtk DataFile Version 3.0", title[:255], "ASCII", "DATASET UNSTRUCTURED_GRID",
           f"POINTS {mesh.n_vertices} double"]
    out += [f"{float(x)!r} {float(y)!r} 0.0" for x, y in mesh.vertices]
    out.append(f"CELLS {mesh.n_elements} {4 * mesh.n_elements}")
    out += [f"3 {i} {j} {k}" for i, j, k in mesh.elements]
    out.append(f"CELL_TYPES {mesh.n_elements}")
    out += ["5"] * mesh.n_elements
    for section, n, data in (("POINT_DATA", mesh.n_vertices, point_data), ("CELL_DATA", mesh.n_elements, cell_data)):
        if not data:
            continue
        out.append(f"{section} {n}")
        fields = []
        for name, arr in data.items():
            a = np.asarray(arr)
            a2 = a.reshape(n, -1)
            if a2.shape[1] == 1:
                kind = "int" if np.issubdtype(a.dtype, np.integer) else "double"
                out += [f"SCALARS {name} {kind} 1", "LOOKUP_TABLE default"]
                out += [str(int(x)) if kind == "int" else repr(float(x)) for x in a2[:, 0]]
            elif a2.shape[1] == 2:
                out.append(f"VECTORS {name} double")
                out += [f"{float(x)!r} {float(y)!r} 0.0" for x, y in a2]
            else:
                fields.append((name, a2.astype(float)))
        if fields:
            out.append(f"FIELD FieldData {len(fields)}")
            for name, a2 in fields:
                out.append(f"{name} {a2.shape[1]} {n} double")
                out += [" ".join(repr(float(x)) for x in row) for row in a2]
    Path(path).write_text("\n".join(out) + "\n")


def read_vtk_mesh(path) -> Mesh:
    """Read back the grid part of a file written by :func:`write_vtk`."""
    tok = Path(path).read_text().split("\n")
    i = next(k for k, ln in enumerate(tok) if ln.startswith("POINTS"))
    nv = int(tok[i].split()[1])
    v = np.array([ln.split()[:2] for ln in tok[i + 1:i + 1 + nv]], dtype=float)
    j = next(k for k, ln in enumerate(tok) if ln.startswith("CELLS"))
    ne = int(tok[j].split()[1])
    t = np.array([ln.split()[1:4] for ln in tok[j + 1:j + 1 + ne]], dtype=np.int64)
    sub = np.zeros(ne, dtype=np.int64)
    if "SCALARS subdomain int 1" in tok:
        s = tok.index("SCALARS subdomain int 1") + 2
        sub = np.array(tok[s:s + ne], dtype=np.int64)
    return build_mesh(v, t, subdomain_labels=sub)


def write_estimate_csv(path, estimate) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["element_id", "eta_K", "osc_K"])
        for i, (e, o) in enumerate(zip(estimate.eta_K, estimate.osc_K)):
            w.writerow([i, repr(float(e)), repr(float(o))])


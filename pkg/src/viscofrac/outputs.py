"""Deterministic output writers: history CSV and legacy-VTK snapshots."""

from __future__ import annotations

import numpy as np

HISTORY_COLUMNS = (
    "step",
    "time_s",
    "u_imposed_mm",
    "reaction_N",
    "fe_mJ",
    "vd_cum_mJ",
    "de_mJ",
    "work_cum_mJ",
    "stagger_iters",
)


def _fmt(value) -> str:
    if isinstance(value, (int, np.integer)):
        return str(int(value))
    return f"{float(value):.9g}"


def write_history_csv(path, rows, extra_columns=None) -> None:
    """Write the per-step history table; 9 significant digits, LF endings."""
    cols = HISTORY_COLUMNS + tuple(extra_columns or ())
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(",".join(cols) + "\n")
        for row in rows:
            fh.write(",".join(_fmt(row[c]) for c in cols) + "\n")


def read_history_csv(path):
    """Parse a history CSV back into a list of dicts (round-trip helper)."""
    with open(path, encoding="utf-8") as fh:
        lines = [ln for ln in fh.read().splitlines() if ln]
    header = lines[0].split(",")
    rows = []
    for ln in lines[1:]:
        vals = ln.split(",")
        row = {}
        for key, val in zip(header, vals):
            row[key] = int(val) if key in ("step", "stagger_iters") else float(val)
        rows.append(row)
    return rows


def write_vtk_snapshot(path, mesh, state) -> None:
    """Legacy ASCII VTK unstructured grid of one converged state.

    Point data: displacement vector ``u`` (and nodal damage ``d_nodal`` for
    phase-field states). Cell data: damage ``d``, tensile energy density
    ``psi_plus`` and ``sigma_yy``. Fully damaged elements are kept; masking
    is left to post-processing.
    """
    nv, nt = mesh.n_nodes, mesh.n_elements
    u = np.asarray(state.u).reshape(nv, 2)
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write("# vtk DataFile Version 3.0\n")
        fh.write("viscofrac snapshot\n")
        fh.write("ASCII\n")
        fh.write("DATASET UNSTRUCTURED_GRID\n")
        fh.write(f"POINTS {nv} double\n")
        for x, y in mesh.nodes:
            fh.write(f"{_fmt(x)} {_fmt(y)} 0\n")
        fh.write(f"CELLS {nt} {4 * nt}\n")
        for tri in mesh.triangles:
            fh.write(f"3 {tri[0]} {tri[1]} {tri[2]}\n")
        fh.write(f"CELL_TYPES {nt}\n")
        for _ in range(nt):
            fh.write("5\n")

        fh.write(f"POINT_DATA {nv}\n")
        fh.write("VECTORS u double\n")
        for ux, uy in u:
            fh.write(f"{_fmt(ux)} {_fmt(uy)} 0\n")
        if state.d_nodal is not None:
            fh.write("SCALARS d_nodal double 1\n")
            fh.write("LOOKUP_TABLE default\n")
            for v in state.d_nodal:
                fh.write(f"{_fmt(v)}\n")

        fh.write(f"CELL_DATA {nt}\n")
        for name, values in (
            ("d", state.d_elem),
            ("psi_plus", state.psi_plus),
            ("sigma_yy", np.asarray(state.sigma)[:, 1]),
        ):
            fh.write(f"SCALARS {name} double 1\n")
            fh.write("LOOKUP_TABLE default\n")
            for v in values:
                fh.write(f"{_fmt(v)}\n")


def read_vtk_snapshot(path):
    """Minimal reader for the snapshots this package writes (round-trip)."""
    with open(path, encoding="utf-8") as fh:
        lines = fh.read().splitlines()
    data = {"points": [], "cells": [], "point_data": {}, "cell_data": {}}
    i = 0
    section = None
    while i < len(lines):
        tok = lines[i].split()
        if not tok:
            i += 1
            continue
        if tok[0] == "POINTS":
            n = int(tok[1])
            data["points"] = np.array(
                [[float(v) for v in lines[i + 1 + j].split()] for j in range(n)]
            )
            i += n + 1
        elif tok[0] == "CELLS":
            n = int(tok[1])
            data["cells"] = np.array(
                [[int(v) for v in lines[i + 1 + j].split()[1:]] for j in range(n)]
            )
            i += n + 1
        elif tok[0] == "POINT_DATA":
            section = "point_data"
            i += 1
        elif tok[0] == "CELL_DATA":
            section = "cell_data"
            i += 1
        elif tok[0] == "VECTORS":
            n = len(data["points"])
            arr = np.array([[float(v) for v in lines[i + 1 + j].split()] for j in range(n)])
            data[section][tok[1]] = arr
            i += n + 1
        elif tok[0] == "SCALARS":
            n = len(data["points"]) if section == "point_data" else len(data["cells"])
            arr = np.array([float(lines[i + 2 + j]) for j in range(n)])
            data[section][tok[1]] = arr
            i += n + 2
        else:
            i += 1
    return data

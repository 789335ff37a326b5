"""Helpers that synthesize small MSH 2.2 files and meshes for the tests."""

from __future__ import annotations

import numpy as np

from viscofrac.mesh import BaseMesh


def msh_text(nodes, triangles, line_groups=None, phys_names=None) -> str:
    """Assemble an ASCII MSH 2.2 file.

    ``line_groups`` maps a physical id to a list of (n0, n1) node pairs
    (0-based); ``phys_names`` maps physical ids to names.
    """
    line_groups = line_groups or {}
    phys_names = phys_names or {}
    out = ["$MeshFormat", "2.2 0 8", "$EndMeshFormat"]
    if phys_names:
        out.append("$PhysicalNames")
        out.append(str(len(phys_names)))
        for pid, name in sorted(phys_names.items()):
            out.append(f'1 {pid} "{name}"')
        out.append("$EndPhysicalNames")
    out.append("$Nodes")
    out.append(str(len(nodes)))
    for i, (x, y) in enumerate(nodes, start=1):
        out.append(f"{i} {x} {y} 0")
    out.append("$EndNodes")
    elems = []
    eid = 1
    for pid, pairs in sorted(line_groups.items()):
        for n0, n1 in pairs:
            elems.append(f"{eid} 1 2 {pid} {pid} {n0 + 1} {n1 + 1}")
            eid += 1
    for tri in triangles:
        elems.append(f"{eid} 2 2 0 0 {tri[0] + 1} {tri[1] + 1} {tri[2] + 1}")
        eid += 1
    out.append("$Elements")
    out.append(str(len(elems)))
    out.extend(elems)
    out.append("$EndElements")
    return "\n".join(out) + "\n"


def rect_grid(nx, ny, lx, ly, x0=0.0, y0=0.0):
    """Structured triangulation of [x0, x0+lx] x [y0, y0+ly].

    Returns (nodes, triangles, sets) with boundary node-index sets named
    left/right/bottom/top.
    """
    xs = np.linspace(x0, x0 + lx, nx + 1)
    ys = np.linspace(y0, y0 + ly, ny + 1)
    nodes = np.array([(x, y) for j in range(ny + 1) for x in xs for y in [ys[j]]])

    def nid(i, j):
        return j * (nx + 1) + i

    tris = []
    for j in range(ny):
        for i in range(nx):
            a, b, c, d = nid(i, j), nid(i + 1, j), nid(i + 1, j + 1), nid(i, j + 1)
            if (i + j) % 2 == 0:  # alternate the diagonal to avoid mesh bias
                tris.append((a, b, c))
                tris.append((a, c, d))
            else:
                tris.append((a, b, d))
                tris.append((b, c, d))
    sets = {
        "left": np.array([nid(0, j) for j in range(ny + 1)]),
        "right": np.array([nid(nx, j) for j in range(ny + 1)]),
        "bottom": np.array([nid(i, 0) for i in range(nx + 1)]),
        "top": np.array([nid(i, ny) for i in range(nx + 1)]),
    }
    return nodes, np.array(tris), sets


def rect_mesh(nx, ny, lx, ly, x0=0.0, y0=0.0) -> BaseMesh:
    nodes, tris, sets = rect_grid(nx, ny, lx, ly, x0, y0)
    return BaseMesh(nodes, tris, sets)


def rect_msh_text(nx, ny, lx, ly) -> str:
    """MSH text of the structured rectangle with named boundary groups."""
    nodes, tris, sets = rect_grid(nx, ny, lx, ly)
    line_groups = {}
    phys_names = {}
    for pid, name in enumerate(["left", "right", "bottom", "top"], start=1):
        idx = sets[name]
        line_groups[pid] = [(idx[k], idx[k + 1]) for k in range(len(idx) - 1)]
        phys_names[pid] = name
    return msh_text(nodes, tris, line_groups, phys_names)


def annulus_mesh(n_theta=24, n_r=3, r0=1.0, r1=2.0) -> BaseMesh:
    """Structured annulus (hole at the center)."""
    nodes = []
    for j in range(n_r + 1):
        r = r0 + (r1 - r0) * j / n_r
        for i in range(n_theta):
            th = 2.0 * np.pi * i / n_theta
            nodes.append((r * np.cos(th), r * np.sin(th)))

    def nid(i, j):
        return j * n_theta + (i % n_theta)

    tris = []
    for j in range(n_r):
        for i in range(n_theta):
            a, b = nid(i, j), nid(i + 1, j)
            c, d = nid(i + 1, j + 1), nid(i, j + 1)
            tris.append((a, b, c))
            tris.append((a, c, d))
    return BaseMesh(np.array(nodes), np.array(tris))


def single_triangle_mesh() -> BaseMesh:
    return BaseMesh(
        np.array([[0.0, 0.0], [1.0, 0.0], [0.0, 1.0]]),
        np.array([[0, 1, 2]]),
        {"left": np.array([0, 2]), "bottom": np.array([0, 1])},
    )


def tapered_dcb_mesh(nx=48, ny=18, length=16.0, h0=3.0, h1=6.0) -> BaseMesh:
    """Tapered double-cantilever strip, loaded through left-edge grips.

    The half-height grows linearly from h0 at the loaded (left) edge to h1
    at the far edge, which stabilizes crack growth along the midline.
    Node sets: grip_top / grip_bot (outer thirds of the left edge), left,
    right.
    """
    xs = np.linspace(0.0, length, nx + 1)
    ys = np.linspace(-1.0, 1.0, ny + 1)
    nodes = []
    for j in range(ny + 1):
        for i in range(nx + 1):
            half = h0 + (h1 - h0) * xs[i] / length
            nodes.append((xs[i], ys[j] * half))
    nodes = np.array(nodes)

    def nid(i, j):
        return j * (nx + 1) + i

    tris = []
    for j in range(ny):
        for i in range(nx):
            a, b, c, d = nid(i, j), nid(i + 1, j), nid(i + 1, j + 1), nid(i, j + 1)
            if (i + j) % 2 == 0:
                tris.append((a, b, c))
                tris.append((a, c, d))
            else:
                tris.append((a, b, d))
                tris.append((b, c, d))
    left = np.array([nid(0, j) for j in range(ny + 1)])
    y_left = nodes[left, 1]
    sets = {
        "left": left,
        "right": np.array([nid(nx, j) for j in range(ny + 1)]),
        "grip_top": left[y_left >= h0 / 3.0],
        "grip_bot": left[y_left <= -h0 / 3.0],
    }
    return BaseMesh(nodes, np.array(tris), sets)


def tapered_dcb_msh_text(nx=48, ny=18, length=16.0, h0=3.0, h1=6.0) -> str:
    mesh = tapered_dcb_mesh(nx, ny, length, h0, h1)
    line_groups = {}
    phys_names = {}
    for pid, name in enumerate(sorted(mesh.node_sets), start=1):
        idx = mesh.node_sets[name]
        line_groups[pid] = [(idx[k], idx[k + 1]) for k in range(len(idx) - 1)]
        phys_names[pid] = name
    return msh_text(mesh.nodes, mesh.triangles, line_groups, phys_names)


def make_chain_lip(coords):
    """A degenerate lip graph: collinear vertices joined by edges (no triangles)."""
    from viscofrac.mesh import LipMesh

    coords = np.asarray(coords, dtype=float)
    if coords.ndim == 1:
        coords = np.stack([coords, np.zeros_like(coords)], axis=1)
    n = len(coords)
    edges = np.array([[i, i + 1] for i in range(n - 1)])
    lengths = np.hypot(*(coords[edges[:, 1]] - coords[edges[:, 0]]).T)
    return LipMesh(coords, np.zeros((0, 3)), edges, lengths, np.zeros((0, 2, 3)))

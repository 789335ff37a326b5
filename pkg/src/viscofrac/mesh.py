"""Triangular base meshes, the dual lip-mesh, and graph distances.

The base mesh carries the displacement/damage finite element spaces; the
lip-mesh is a Delaunay triangulation of the base-element centroids on which
discrete Lipschitz constraints are imposed. Both are immutable after
construction and safe to share across threads.
"""

from __future__ import annotations

import heapq

import numpy as np
from scipy.spatial import Delaunay, QhullError, cKDTree

from .errors import LipMeshError, MshParseError

_DEGENERATE_REL_AREA = 1.0e-12


def _cross2(a, b):
    """z-component of the 2D cross product (signed parallelogram area)."""
    return a[..., 0] * b[..., 1] - a[..., 1] * b[..., 0]


class BaseMesh:
    """Triangulated 2D domain with named boundary node sets.

    Attributes
    ----------
    nodes : (nv, 2) float array, mm
    triangles : (nt, 3) int array
        Counter-clockwise node indices.
    node_sets : dict[str, np.ndarray]
        Named groups of node indices (from MSH physical groups).
    element_area : (nt,) float array, mm^2
    shape_grads : (nt, 3, 2) float array, 1/mm
        Constant gradient of each linear shape function; rows sum to zero.
    """

    def __init__(self, nodes, triangles, node_sets=None):
        self.nodes = np.ascontiguousarray(nodes, dtype=np.float64)
        tris = np.ascontiguousarray(triangles, dtype=np.int64)
        if self.nodes.ndim != 2 or self.nodes.shape[1] != 2:
            raise ValueError("nodes must have shape (nv, 2)")
        if tris.ndim != 2 or tris.shape[1] != 3:
            raise ValueError("triangles must have shape (nt, 3)")
        self.node_sets = {
            name: np.unique(np.asarray(idx, dtype=np.int64))
            for name, idx in (node_sets or {}).items()
        }
        for name, idx in self.node_sets.items():
            if idx.size and (idx.min() < 0 or idx.max() >= len(self.nodes)):
                raise ValueError(f"node set {name!r} references invalid node indices")

        p0 = self.nodes[tris[:, 0]]
        p1 = self.nodes[tris[:, 1]]
        p2 = self.nodes[tris[:, 2]]
        signed = 0.5 * _cross2(p1 - p0, p2 - p0)
        flip = signed < 0.0
        if np.any(flip):  # enforce CCW orientation
            tris[flip] = tris[flip][:, [0, 2, 1]]
            signed = np.abs(signed)
        if np.any(signed <= 0.0):
            bad = int(np.argmin(signed))
            raise ValueError(f"triangle {bad} has zero area")
        self.triangles = tris
        self.element_area = signed

        # grad N_a = (b_a, c_a) / (2A) with the classic cyclic differences
        p0, p1, p2 = (self.nodes[tris[:, k]] for k in range(3))
        b = np.stack([p1[:, 1] - p2[:, 1], p2[:, 1] - p0[:, 1], p0[:, 1] - p1[:, 1]], axis=1)
        c = np.stack([p2[:, 0] - p1[:, 0], p0[:, 0] - p2[:, 0], p1[:, 0] - p0[:, 0]], axis=1)
        self.shape_grads = np.stack([b, c], axis=2) / (2.0 * signed)[:, None, None]

    @property
    def n_nodes(self) -> int:
        return len(self.nodes)

    @property
    def n_elements(self) -> int:
        return len(self.triangles)

    def centroids(self) -> np.ndarray:
        """Element centroids, (nt, 2)."""
        return self.nodes[self.triangles].mean(axis=1)

    def min_edge_length(self) -> float:
        """Shortest element edge; default effective size for the Gc correction."""
        p = self.nodes[self.triangles]
        e = np.concatenate(
            [p[:, 1] - p[:, 0], p[:, 2] - p[:, 1], p[:, 0] - p[:, 2]]
        )
        return float(np.min(np.hypot(e[:, 0], e[:, 1])))

    def contains_points(self, pts: np.ndarray) -> np.ndarray:
        """Boolean mask of which query points fall inside the meshed domain.

        A KD-tree over element centroids prefilters candidate triangles; any
        point not resolved by its nearest candidates falls back to a scan.
        """
        pts = np.atleast_2d(np.asarray(pts, dtype=np.float64))
        inside = np.zeros(len(pts), dtype=bool)
        tree = cKDTree(self.centroids())
        k = min(16, self.n_elements)
        _, near = tree.query(pts, k=k)
        near = np.atleast_2d(near)
        tol = 1.0e-12
        for j, p in enumerate(pts):
            cand = near[j]
            if self._point_in_any(p, cand, tol):
                inside[j] = True
            elif k < self.n_elements:
                inside[j] = self._point_in_any(p, np.arange(self.n_elements), tol)
        return inside

    def _point_in_any(self, p, tri_ids, tol) -> bool:
        t = self.triangles[tri_ids]
        a, b, c = self.nodes[t[:, 0]], self.nodes[t[:, 1]], self.nodes[t[:, 2]]
        w0 = _cross2(b - a, p - a)
        w1 = _cross2(c - b, p - b)
        w2 = _cross2(a - c, p - c)
        scale = 2.0 * self.element_area[tri_ids]
        return bool(np.any((w0 >= -tol * scale) & (w1 >= -tol * scale) & (w2 >= -tol * scale)))


class LipMesh:
    """Dual mesh over base-element centroids carrying Lipschitz constraints.

    Attributes
    ----------
    vertices : (r, 2) float array
        One vertex per base triangle, at its centroid (index-aligned).
    triangles : (m, 3) int array
        May be empty for degenerate (chain-like) graphs.
    edges : (k, 2) int array
    edge_lengths : (k,) float array, strictly positive Euclidean lengths.
    grad_op : (m, 2, 3) float array
        Elemental gradient operators B_t: grad(d)|_t = B_t @ d[tri].
    """

    def __init__(self, vertices, triangles, edges, edge_lengths, grad_op):
        self.vertices = np.ascontiguousarray(vertices, dtype=np.float64)
        self.triangles = np.ascontiguousarray(triangles, dtype=np.int64).reshape(-1, 3)
        self.edges = np.ascontiguousarray(edges, dtype=np.int64).reshape(-1, 2)
        self.edge_lengths = np.ascontiguousarray(edge_lengths, dtype=np.float64)
        self.grad_op = np.ascontiguousarray(grad_op, dtype=np.float64).reshape(-1, 2, 3)
        if np.any(self.edge_lengths <= 0.0):
            raise LipMeshError("lip-mesh edge with non-positive length")
        self._adjacency = None

    @property
    def n_vertices(self) -> int:
        return len(self.vertices)

    def adjacency_csr(self):
        """(indptr, indices, lengths) CSR adjacency of the undirected edge graph."""
        if self._adjacency is None:
            n = self.n_vertices
            if len(self.edges):
                src = np.concatenate([self.edges[:, 0], self.edges[:, 1]])
                dst = np.concatenate([self.edges[:, 1], self.edges[:, 0]])
                ln = np.concatenate([self.edge_lengths, self.edge_lengths])
                order = np.argsort(src, kind="stable")
                src, dst, ln = src[order], dst[order], ln[order]
                indptr = np.zeros(n + 1, dtype=np.int64)
                np.add.at(indptr, src + 1, 1)
                np.cumsum(indptr, out=indptr)
                self._adjacency = (indptr, dst.astype(np.int64), ln)
            else:
                self._adjacency = (
                    np.zeros(n + 1, dtype=np.int64),
                    np.zeros(0, dtype=np.int64),
                    np.zeros(0),
                )
        return self._adjacency


def load_msh(path) -> BaseMesh:
    """Read an ASCII gmsh MSH 2.2 file into a BaseMesh.

    Only 3-node triangles (type 2) are accepted as 2D elements; 2-node lines
    (type 1) populate node sets named after their physical group. Anything
    else raises :class:`MshParseError` naming the offending line.
    """
    with open(path, encoding="utf-8") as fh:
        lines = fh.read().splitlines()

    def fail(lineno, msg):
        raise MshParseError(f"{path}:{lineno + 1}: {msg}")

    phys_names: dict[int, str] = {}
    nodes: list[tuple[float, float]] = []
    node_ids: dict[int, int] = {}
    triangles: list[tuple[int, int, int]] = []
    tri_lines: list[int] = []
    set_nodes: dict[str, set[int]] = {}

    i = 0
    saw_format = False
    while i < len(lines):
        tok = lines[i].strip()
        if tok == "$MeshFormat":
            parts = lines[i + 1].split()
            if not parts or parts[0] != "2.2":
                fail(i + 1, f"unsupported MSH version {parts[0] if parts else '?'} (need 2.2)")
            saw_format = True
            i += 3
        elif tok == "$PhysicalNames":
            count = int(lines[i + 1])
            for j in range(count):
                parts = lines[i + 2 + j].split(maxsplit=2)
                phys_names[int(parts[1])] = parts[2].strip().strip('"')
            i += count + 3
        elif tok == "$Nodes":
            count = int(lines[i + 1])
            for j in range(count):
                parts = lines[i + 2 + j].split()
                node_ids[int(parts[0])] = len(nodes)
                nodes.append((float(parts[1]), float(parts[2])))
            i += count + 3
        elif tok == "$Elements":
            count = int(lines[i + 1])
            for j in range(count):
                lineno = i + 2 + j
                parts = lines[lineno].split()
                etype = int(parts[1])
                ntags = int(parts[2])
                conn = [int(p) for p in parts[3 + ntags:]]
                phys = int(parts[3]) if ntags >= 1 else 0
                if etype == 2:
                    if len(conn) != 3:
                        fail(lineno, "triangle with wrong node count")
                    try:
                        tri = tuple(node_ids[c] for c in conn)
                    except KeyError:
                        fail(lineno, "element references unknown node")
                    triangles.append(tri)
                    tri_lines.append(lineno)
                elif etype == 1:
                    name = phys_names.get(phys, f"group_{phys}")
                    set_nodes.setdefault(name, set()).update(node_ids[c] for c in conn)
                else:
                    fail(lineno, f"unsupported element type {etype}")
            i += count + 3
        else:
            i += 1
    if not saw_format:
        raise MshParseError(f"{path}: missing $MeshFormat section")
    if not triangles:
        raise MshParseError(f"{path}: no triangles found")

    nodes_arr = np.asarray(nodes)
    tris_arr = np.asarray(triangles, dtype=np.int64)
    p0, p1, p2 = (nodes_arr[tris_arr[:, k]] for k in range(3))
    area2 = _cross2(p1 - p0, p2 - p0)
    scale = np.median(np.abs(area2)) if len(area2) else 1.0
    for e in np.nonzero(np.abs(area2) <= _DEGENERATE_REL_AREA * max(scale, 1.0))[0]:
        raise MshParseError(f"{path}:{tri_lines[e] + 1}: degenerate (zero-area) triangle")

    node_sets = {name: np.array(sorted(s), dtype=np.int64) for name, s in set_nodes.items()}
    return BaseMesh(nodes_arr, tris_arr, node_sets)


def build_lip_mesh(mesh: BaseMesh) -> LipMesh:
    """Dual lip-mesh: Delaunay over centroids, restricted to the domain.

    Candidate triangles whose own centroid falls outside the base domain
    (e.g. spanning a hole) are discarded, as are degenerate slivers; the
    edge graph and gradient operators come from the retained triangles.
    """
    if mesh.n_elements < 3:
        raise LipMeshError(f"need at least 3 base elements, got {mesh.n_elements}")
    pts = mesh.centroids()
    try:
        dela = Delaunay(pts)
    except QhullError as exc:
        raise LipMeshError(f"centroid triangulation failed (degenerate layout): {exc}") from exc
    cand = dela.simplices.astype(np.int64)

    a, b, c = pts[cand[:, 0]], pts[cand[:, 1]], pts[cand[:, 2]]
    signed = 0.5 * _cross2(b - a, c - a)
    scale = float(np.median(np.abs(signed))) if len(signed) else 1.0
    keep = np.abs(signed) > _DEGENERATE_REL_AREA * max(scale, 1.0)
    keep &= mesh.contains_points((a + b + c) / 3.0)
    # also reject triangles whose edges cut across holes/concavities
    for mid in ((a + b) / 2.0, (b + c) / 2.0, (c + a) / 2.0):
        keep &= mesh.contains_points(mid)
    tris = cand[keep]
    if len(tris) == 0:
        raise LipMeshError("all candidate lip triangles were discarded")

    flip = _cross2(pts[tris[:, 1]] - pts[tris[:, 0]], pts[tris[:, 2]] - pts[tris[:, 0]]) < 0
    tris[flip] = tris[flip][:, [0, 2, 1]]

    pairs = np.sort(
        np.concatenate([tris[:, [0, 1]], tris[:, [1, 2]], tris[:, [2, 0]]]), axis=1
    )
    edges = np.unique(pairs, axis=0)
    edge_lengths = np.hypot(*(pts[edges[:, 1]] - pts[edges[:, 0]]).T)

    grad_op = _gradient_operators(pts, tris)
    return LipMesh(pts, tris, edges, edge_lengths, grad_op)


def _gradient_operators(pts: np.ndarray, tris: np.ndarray) -> np.ndarray:
    """Per-triangle 2x3 operators mapping vertex values to the linear gradient."""
    p0, p1, p2 = (pts[tris[:, k]] for k in range(3))
    area2 = _cross2(p1 - p0, p2 - p0)
    b = np.stack([p1[:, 1] - p2[:, 1], p2[:, 1] - p0[:, 1], p0[:, 1] - p1[:, 1]], axis=1)
    c = np.stack([p2[:, 0] - p1[:, 0], p0[:, 0] - p2[:, 0], p1[:, 0] - p0[:, 0]], axis=1)
    return np.stack([b, c], axis=1) / area2[:, None, None]


def shortest_path_distances(lip: LipMesh, sources) -> np.ndarray:
    """Multi-source shortest-path distances (mm) over the lip edge graph.

    Unreachable vertices get ``np.inf``. O(r log r) Dijkstra.
    """
    src = np.atleast_1d(np.asarray(sources, dtype=np.int64))
    if src.size == 0:
        raise ValueError("source set must be nonempty")
    indptr, indices, lengths = lip.adjacency_csr()
    dist = np.full(lip.n_vertices, np.inf)
    heap = []
    for s in src:
        dist[s] = 0.0
        heap.append((0.0, int(s)))
    heapq.heapify(heap)
    while heap:
        dv, v = heapq.heappop(heap)
        if dv > dist[v]:
            continue
        for k in range(indptr[v], indptr[v + 1]):
            w = indices[k]
            cand = dv + lengths[k]
            if cand < dist[w]:
                dist[w] = cand
                heapq.heappush(heap, (cand, int(w)))
    return dist

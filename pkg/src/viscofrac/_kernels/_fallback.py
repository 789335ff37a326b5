"""Pure numpy implementations of the hot kernels.

Selected automatically when the compiled core is unavailable (or when
``VISCOFRAC_PURE`` is set). Semantics are identical to ``_core``; parity is
enforced by tests and measured by ``benchmarks/bench_kernels.py``.

Strain vectors use the plane-strain Voigt convention (exx, eyy, gxy) with
engineering shear gxy = 2*exy.
"""

from __future__ import annotations

import heapq

import numpy as np

__all__ = ["eigen_split_batch", "elem_stiffness_batch", "bounds_sweep"]


def eigen_split_batch(eps: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Tension/compression eigen split of a batch of 2D strain tensors.

    Parameters
    ----------
    eps : (n, 3) array
        Voigt strains (exx, eyy, gxy).

    Returns
    -------
    plus, minus : (n, 3) arrays
        Positive and negative spectral parts, same Voigt layout. Their sum
        reconstructs ``eps`` exactly (``minus`` is formed by subtraction).
    """
    eps = np.ascontiguousarray(eps, dtype=np.float64)
    exx, eyy, exy = eps[:, 0], eps[:, 1], 0.5 * eps[:, 2]
    half_tr = 0.5 * (exx + eyy)
    delta = np.sqrt(0.25 * (exx - eyy) ** 2 + exy**2)
    lam1 = half_tr + delta
    lam2 = half_tr - delta
    # eigenvector of lam1 at angle theta; stable for coincident eigenvalues
    theta = 0.5 * np.arctan2(2.0 * exy, exx - eyy)
    c, s = np.cos(theta), np.sin(theta)
    p1 = np.maximum(lam1, 0.0)
    p2 = np.maximum(lam2, 0.0)
    plus = np.empty_like(eps)
    plus[:, 0] = p1 * c * c + p2 * s * s
    plus[:, 1] = p1 * s * s + p2 * c * c
    plus[:, 2] = 2.0 * (p1 - p2) * c * s
    return plus, eps - plus


def elem_stiffness_batch(b_mats: np.ndarray, d_mats: np.ndarray, areas: np.ndarray) -> np.ndarray:
    """Element stiffness blocks ``A_e * B_e^T D_e B_e`` for all elements.

    ``b_mats`` has shape (n, 3, 6), ``d_mats`` (n, 3, 3), ``areas`` (n,);
    returns (n, 6, 6).
    """
    bd = np.einsum("eki,ekl->eil", b_mats, d_mats)
    ke = np.einsum("eil,elj->eij", bd, b_mats)
    return ke * areas[:, None, None]


def bounds_sweep(
    indptr: np.ndarray,
    indices: np.ndarray,
    lengths: np.ndarray,
    d_star: np.ndarray,
    slope: float,
    side: int,
) -> np.ndarray:
    """Dijkstra-style sup/inf-convolution of a vertex field over a graph.

    Computes, for every vertex x of the graph in CSR adjacency form,

    * ``side=+1``:  max_y d_star(y) - slope * dist(x, y)   (upper bound)
    * ``side=-1``:  min_y d_star(y) + slope * dist(x, y)   (lower bound)

    with dist the shortest-path distance along edges of Euclidean length
    ``lengths``. Runs in O(r log r) like multi-source Dijkstra: each vertex
    is seeded with its own value and settled in value order.
    """
    n = len(d_star)
    if side not in (-1, 1):
        raise ValueError("side must be +1 (upper) or -1 (lower)")
    sgn = float(side)
    # work on f = sgn * d so both sides become a max-propagation
    out = sgn * np.asarray(d_star, dtype=np.float64).copy()
    heap = [(-out[v], v) for v in range(n)]
    heapq.heapify(heap)
    while heap:
        negval, v = heapq.heappop(heap)
        val = -negval
        if val < out[v] - 1e-15:
            continue  # stale entry
        for k in range(indptr[v], indptr[v + 1]):
            w = indices[k]
            cand = val - slope * lengths[k]
            if cand > out[w]:
                out[w] = cand
                heapq.heappush(heap, (-cand, w))
    return sgn * out

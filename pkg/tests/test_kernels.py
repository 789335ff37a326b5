"""Parity between the compiled kernel core and the numpy fallback."""

import numpy as np
import pytest

from viscofrac._kernels import BACKEND
from viscofrac._kernels import _fallback as fb

try:
    from viscofrac._kernels import _core as core

    HAVE_CORE = True
except ImportError:
    HAVE_CORE = False

needs_core = pytest.mark.skipif(not HAVE_CORE, reason="compiled core not built")


def _random_graph(rng, n=60, extra=80):
    edges = {(i, i + 1) for i in range(n - 1)}
    while len(edges) < n - 1 + extra:
        a, b = rng.integers(0, n, 2)
        if a != b:
            edges.add((min(a, b), max(a, b)))
    edges = np.array(sorted(edges))
    lengths = rng.uniform(0.1, 2.0, len(edges))
    src = np.concatenate([edges[:, 0], edges[:, 1]])
    dst = np.concatenate([edges[:, 1], edges[:, 0]])
    ln = np.concatenate([lengths, lengths])
    order = np.argsort(src, kind="stable")
    indptr = np.zeros(n + 1, dtype=np.int64)
    np.add.at(indptr, src + 1, 1)
    np.cumsum(indptr, out=indptr)
    return indptr, dst[order].astype(np.int64), ln[order]


def test_backend_reported():
    assert BACKEND in ("compiled", "numpy")


@needs_core
def test_eigen_split_parity():
    rng = np.random.default_rng(42)
    eps = rng.normal(size=(500, 3))
    pf, mf = fb.eigen_split_batch(eps)
    pc, mc = core.eigen_split_batch(eps)
    np.testing.assert_allclose(pc, pf, atol=1e-14)
    np.testing.assert_allclose(mc, mf, atol=1e-14)


@needs_core
def test_elem_stiffness_parity():
    rng = np.random.default_rng(1)
    b = rng.normal(size=(50, 3, 6))
    d = rng.normal(size=(50, 3, 3))
    d = d + d.transpose(0, 2, 1)
    areas = rng.uniform(0.1, 2.0, 50)
    np.testing.assert_allclose(
        core.elem_stiffness_batch(b, d, areas),
        fb.elem_stiffness_batch(b, d, areas),
        rtol=1e-13,
        atol=1e-13,
    )


@needs_core
@pytest.mark.parametrize("side", [1, -1])
def test_bounds_sweep_parity(side):
    rng = np.random.default_rng(7)
    indptr, indices, lengths = _random_graph(rng)
    d_star = rng.uniform(0.0, 1.0, len(indptr) - 1)
    got_c = core.bounds_sweep(indptr, indices, lengths, d_star, 0.7, side)
    got_f = fb.bounds_sweep(indptr, indices, lengths, d_star, 0.7, side)
    np.testing.assert_allclose(got_c, got_f, atol=1e-12)


@pytest.mark.parametrize("impl", [fb] + ([core] if HAVE_CORE else []))
def test_bounds_sweep_against_brute_force(impl):
    rng = np.random.default_rng(3)
    indptr, indices, lengths = _random_graph(rng, n=40, extra=40)
    n = 40
    d_star = rng.uniform(0.0, 1.0, n)
    slope = 0.5
    # brute force: all-pairs shortest paths then sup/inf convolution
    dist = np.full((n, n), np.inf)
    np.fill_diagonal(dist, 0.0)
    for v in range(n):
        for k in range(indptr[v], indptr[v + 1]):
            dist[v, indices[k]] = min(dist[v, indices[k]], lengths[k])
    for k in range(n):
        dist = np.minimum(dist, dist[:, k, None] + dist[None, k, :])
    upper = (d_star[None, :] - slope * dist).max(axis=1)
    lower = (d_star[None, :] + slope * dist).min(axis=1)
    np.testing.assert_allclose(
        impl.bounds_sweep(indptr, indices, lengths, d_star, slope, +1), upper, atol=1e-12
    )
    np.testing.assert_allclose(
        impl.bounds_sweep(indptr, indices, lengths, d_star, slope, -1), lower, atol=1e-12
    )


def test_bounds_sweep_side_validation():
    with pytest.raises(ValueError):
        fb.bounds_sweep(np.zeros(2, dtype=np.int64), np.zeros(0, dtype=np.int64), np.zeros(0), np.zeros(1), 1.0, 2)

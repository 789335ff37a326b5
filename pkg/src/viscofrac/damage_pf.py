"""AT2 phase-field damage update with a local history field.

Irreversibility is enforced through the running maximum H of the tensile
energy density, which turns the damage variational inequality into the
linear symmetric system

    [Gc_eff ((1/l1) M + l1 K) + 2 M_H] d = 2 f_H

on the base-mesh nodes, with natural (zero-flux) boundary conditions. The
bound d <= 1 is not enforced strongly; small negative undershoots are a
known artefact of the history-field substitution and are reported, not
clipped.
"""

from __future__ import annotations

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from .errors import SolverError
from .mesh import BaseMesh

# consistent mass matrix of a linear triangle, unit area factor
_M_LOCAL = np.array([[2.0, 1.0, 1.0], [1.0, 2.0, 1.0], [1.0, 1.0, 2.0]]) / 12.0


def update_history(h_m, psi_plus) -> np.ndarray:
    """Irreversible drive update H = max(H_m, psi_plus), elementwise."""
    h_m = np.asarray(h_m, dtype=np.float64)
    psi_plus = np.asarray(psi_plus, dtype=np.float64)
    if np.any(psi_plus < 0.0):
        raise ValueError("psi_plus must be non-negative")
    return np.maximum(h_m, psi_plus)


class PhaseFieldSolver:
    """Assembles the damage system once per mesh and re-solves per drive.

    ``pinned_nodes`` (optional) are held at d = 0 (used near supports and
    load application points).
    """

    def __init__(self, mesh: BaseMesh, gc_eff: float, l1: float, pinned_nodes=None):
        if gc_eff <= 0.0 or l1 <= 0.0:
            raise ValueError("Gc_eff and l1 must be positive")
        self.mesh = mesh
        self.gc_eff = gc_eff
        self.l1 = l1
        nv = mesh.n_nodes
        tris = mesh.triangles
        area = mesh.element_area

        rows = np.repeat(tris, 3, axis=1).ravel()
        cols = np.tile(tris, (1, 3)).ravel()
        self._rows, self._cols = rows, cols

        m_vals = (_M_LOCAL[None] * area[:, None, None]).ravel()
        self.mass = sp.coo_matrix((m_vals, (rows, cols)), shape=(nv, nv)).tocsr()

        grads = mesh.shape_grads  # (nt, 3, 2)
        k_loc = np.einsum("eak,ebk->eab", grads, grads) * area[:, None, None]
        self.stiff = sp.coo_matrix((k_loc.ravel(), (rows, cols)), shape=(nv, nv)).tocsr()

        self.base = gc_eff * ((1.0 / l1) * self.mass + l1 * self.stiff)
        self.pinned = (
            np.unique(np.asarray(pinned_nodes, dtype=np.int64))
            if pinned_nodes is not None and len(pinned_nodes)
            else np.zeros(0, dtype=np.int64)
        )
        self._free = np.setdiff1d(np.arange(nv), self.pinned)

    def solve(self, history: np.ndarray) -> np.ndarray:
        """Nodal damage for a per-element history field H >= 0."""
        h = np.asarray(history, dtype=np.float64)
        if h.shape != (self.mesh.n_elements,):
            raise ValueError("history must be per-element")
        area = self.mesh.element_area
        nv = self.mesh.n_nodes
        mh_vals = (_M_LOCAL[None] * (h * area)[:, None, None]).ravel()
        m_h = sp.coo_matrix((mh_vals, (self._rows, self._cols)), shape=(nv, nv)).tocsr()
        rhs = np.zeros(nv)
        np.add.at(rhs, self.mesh.triangles.ravel(), np.repeat(2.0 * h * area / 3.0, 3))
        system = self.base + 2.0 * m_h

        d = np.zeros(nv)
        free = self._free
        sys_ff = system[np.ix_(free, free)].tocsc()
        try:
            d[free] = spla.spsolve(sys_ff, rhs[free])
        except RuntimeError as exc:
            raise SolverError(f"phase-field damage system singular: {exc}") from exc
        if not np.all(np.isfinite(d)):
            raise SolverError("phase-field damage system singular (non-finite)")
        resid = system @ d - rhs
        scale = max(float(np.abs(rhs).max(initial=0.0)), 1.0e-300)
        if float(np.abs(resid[free]).max(initial=0.0)) > 1.0e-10 * scale:
            raise SolverError("phase-field damage solve exceeded residual tolerance")
        return d


def solve_phase_damage(mesh: BaseMesh, history, gc_eff: float, l1: float, pinned_nodes=None):
    """One-shot nodal damage solve; see :class:`PhaseFieldSolver`."""
    return PhaseFieldSolver(mesh, gc_eff, l1, pinned_nodes).solve(history)


def nodal_to_element(mesh: BaseMesh, d_nodal: np.ndarray) -> np.ndarray:
    """Element damage as the nodal mean (matches element-constant strains)."""
    return np.asarray(d_nodal)[mesh.triangles].mean(axis=1)


def pf_damage_energy(mesh: BaseMesh, d_nodal, gc_eff: float, l1: float) -> float:
    """Dissipated damage energy Gc_eff * int(d^2/(2 l1) + l1/2 |grad d|^2).

    One-point quadrature: the gradient is element-constant and d is sampled
    at the centroid.
    """
    d = np.asarray(d_nodal, dtype=np.float64)
    d_elem = d[mesh.triangles]
    d_bar = d_elem.mean(axis=1)
    grad = np.einsum("eak,ea->ek", mesh.shape_grads, d_elem)
    dens = d_bar**2 / (2.0 * l1) + 0.5 * l1 * (grad**2).sum(axis=1)
    return float(gc_eff * np.dot(mesh.element_area, dens))

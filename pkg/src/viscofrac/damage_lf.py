"""Lip-field damage update.

The damage field lives on lip-mesh vertices (one per base element) and is
constrained to the discrete Lipschitz set ||B_t d|| <= 1/l2 per lip
triangle. Each update is split local/non-local: a closed-form pointwise
minimization, sup/inf-convolution bounds that localize where the Lipschitz
constraint can act, and a small cone-constrained quadratic program on that
active zone only. Outside it the pointwise minimizer is already optimal.

Lip graphs without triangles (degenerate 1D chains) fall back to edge-wise
slope constraints |d_i - d_j| <= len_ij / l2; whenever triangles exist, the
triangle-gradient cones are the constraint set.
"""

from __future__ import annotations

from dataclasses import dataclass

import cvxopt
import cvxopt.umfpack
import numpy as np

from ._kernels import bounds_sweep
from .errors import SolverError
from .mesh import LipMesh

# tightest first; cvxopt can fail numerically near machine precision, so a
# relaxed retry follows (still far inside the 1e-6 KKT acceptance)
_SOLVER_LADDER = (
    {"show_progress": False, "abstol": 1e-9, "reltol": 1e-9, "feastol": 1e-9, "maxiters": 200},
    {"show_progress": False, "abstol": 1e-8, "reltol": 1e-8, "feastol": 1e-8, "maxiters": 300},
)


def _scaling_matrix(w):
    """Sparse block-diagonal scaling W from cvxopt's scaling dict.

    Linear rows scale by diag(d); each second-order cone block contributes
    beta (2 v v^T - J) with J = diag(1, -1, ..., -1).
    """
    blocks = []
    if w["d"].size[0]:
        blocks.append(cvxopt.spdiag(w["d"]))
    for v, beta in zip(w["v"], w["beta"]):
        j = cvxopt.spdiag([1.0] + [-1.0] * (v.size[0] - 1))
        blocks.append(beta * (2.0 * v * v.T - j))
    return cvxopt.spdiag(blocks)


def _sparse_kkt_factory(p, g):
    """Sparse-LU replacement for coneqp's dense default KKT solver.

    Factorizes [[P, G^T], [G, -W^T W]] with UMFPACK once per interior-point
    iteration; the dense default is cubic in the vertex count and dominates
    runtime on whole-mesh solves.
    """
    n = p.size[0]

    def kktsolver(w):
        wmat = _scaling_matrix(w)
        kmat = cvxopt.sparse([[p, g], [g.T, -wmat.T * wmat]])
        lu = cvxopt.umfpack.symbolic(kmat)
        num = cvxopt.umfpack.numeric(kmat, lu)

        def solve(x, y, z):
            rhs = cvxopt.matrix([x, z])
            cvxopt.umfpack.solve(kmat, num, rhs)
            x[:] = rhs[:n]
            z[:] = wmat * rhs[n:]

        return solve

    return kktsolver


@dataclass
class DamageBounds:
    """Sup/inf-convolution envelopes of a target field under the slope cap."""

    lip: LipMesh
    lower: np.ndarray
    upper: np.ndarray


@dataclass
class ActiveZone:
    """Vertices where the bounds differ, plus the coupled constraint support."""

    vertices: np.ndarray  # active lip-vertex ids
    triangles: np.ndarray  # lip triangles touching an active vertex
    edges: np.ndarray  # (edge-mode) lip edges touching an active vertex
    frozen: np.ndarray  # one-ring inactive vertices entering constraints

    @property
    def is_empty(self) -> bool:
        return len(self.vertices) == 0


def local_damage(psi_plus, yc: float, d_m) -> np.ndarray:
    """Pointwise minimizer of (1-d)^2 psi+ + 2 Yc d^2 over [d_m, 1].

    The unconstrained optimum is psi+/(psi+ + 2 Yc); clamping enforces
    irreversibility and the upper bound.
    """
    psi_plus = np.asarray(psi_plus, dtype=np.float64)
    d_m = np.asarray(d_m, dtype=np.float64)
    return np.clip(psi_plus / (psi_plus + 2.0 * yc), d_m, 1.0)


def compute_bounds(lip: LipMesh, d_star, l2: float) -> DamageBounds:
    """Upper/lower envelopes of ``d_star`` w.r.t. graph distance over l2.

    upper(x) = max_y d*(y) - dist(x,y)/l2, lower(x) = min_y d*(y) +
    dist(x,y)/l2; both are 1/l2-Lipschitz in the graph metric and sandwich
    d_star. Computed with one Dijkstra-style sweep each, O(r log r).
    """
    d_star = np.ascontiguousarray(d_star, dtype=np.float64)
    indptr, indices, lengths = lip.adjacency_csr()
    slope = 1.0 / l2
    upper = bounds_sweep(indptr, indices, lengths, d_star, slope, +1)
    lower = bounds_sweep(indptr, indices, lengths, d_star, slope, -1)
    return DamageBounds(lip=lip, lower=lower, upper=upper)


def active_zone(bounds: DamageBounds, tol: float = 1.0e-8) -> ActiveZone:
    """Vertices with a bound gap > tol plus their coupled triangles/edges.

    Inactive vertices appearing in a coupled constraint are reported as
    frozen; they enter the solve as constants.
    """
    lip = bounds.lip
    active_mask = (bounds.upper - bounds.lower) > tol
    vertices = np.nonzero(active_mask)[0]
    if len(vertices) == 0:
        empty = np.zeros(0, dtype=np.int64)
        return ActiveZone(vertices=empty, triangles=empty, edges=empty, frozen=empty)
    if len(lip.triangles):
        tri_mask = active_mask[lip.triangles].any(axis=1)
        triangles = np.nonzero(tri_mask)[0]
        support = np.unique(lip.triangles[triangles])
        edges = np.zeros(0, dtype=np.int64)
    else:
        edge_mask = active_mask[lip.edges].any(axis=1) if len(lip.edges) else np.zeros(0, bool)
        edges = np.nonzero(edge_mask)[0]
        support = np.unique(lip.edges[edges]) if len(edges) else vertices
        triangles = np.zeros(0, dtype=np.int64)
    frozen = np.setdiff1d(support, vertices)
    return ActiveZone(vertices=vertices, triangles=triangles, edges=edges, frozen=frozen)


def _cone_program(lip, l2, free_vertices, triangles, edges, frozen_values, box):
    """cvxopt (G, h, dims) for Lipschitz constraints on the given vertices.

    ``free_vertices`` become unknowns; other vertices appearing in the listed
    triangles/edges enter as constants from ``frozen_values``. ``box`` is
    None or a (lower, upper) pair of full-length arrays.
    """
    na = len(free_vertices)
    loc = {int(v): k for k, v in enumerate(free_vertices)}
    # hairline slack (well inside the 1e-8 feasibility contract): frozen
    # one-ring values sit exactly on the edge-metric cap, which the stronger
    # triangle cones can miss by roundoff
    slope_cap = 1.0 / l2 + 5.0e-9

    gx, gi, gj = [], [], []
    h_rows = []
    row = 0
    if box is not None:
        lower, upper = box
        for k, v in enumerate(free_vertices):  # d <= upper
            gx.append(1.0)
            gi.append(row)
            gj.append(k)
            h_rows.append(upper[v])
            row += 1
        for k, v in enumerate(free_vertices):  # -d <= -lower
            gx.append(-1.0)
            gi.append(row)
            gj.append(k)
            h_rows.append(-lower[v])
            row += 1
    n_lin = row
    q_dims = []

    for t in triangles:
        verts = lip.triangles[t]
        bt = lip.grad_op[t]  # (2, 3)
        h_rows.append(slope_cap)
        row += 1
        for comp in range(2):
            const = 0.0
            for k in range(3):
                v = int(verts[k])
                if v in loc:
                    gx.append(-bt[comp, k])
                    gi.append(row)
                    gj.append(loc[v])
                else:
                    const += bt[comp, k] * frozen_values[v]
            h_rows.append(const)
            row += 1
        q_dims.append(3)
    for e in edges:
        v0, v1 = (int(v) for v in lip.edges[e])
        cap = lip.edge_lengths[e] * slope_cap
        for sgn in (1.0, -1.0):
            const = cap
            for v, w in ((v0, sgn), (v1, -sgn)):
                if v in loc:
                    gx.append(w)
                    gi.append(row)
                    gj.append(loc[v])
                else:
                    const -= w * frozen_values[v]
            h_rows.append(const)
            row += 1
            n_lin += 1

    g = cvxopt.spmatrix(gx, gi, gj, (row, na))
    h = cvxopt.matrix(h_rows)
    dims = {"l": n_lin, "q": q_dims, "s": []}
    return g, h, dims


def _solve_constrained_qp(lip, l2, free_vertices, triangles, edges, weights, targets,
                          frozen_values, box):
    """Minimize sum_k w_k (d_k - t_k)^2 over free vertices under constraints."""
    fv = free_vertices
    w = weights[fv]
    p = cvxopt.spdiag(cvxopt.matrix(2.0 * w))
    q = cvxopt.matrix(-2.0 * w * targets[fv])
    g, h, dims = _cone_program(lip, l2, fv, triangles, edges, frozen_values, box)
    kkt = _sparse_kkt_factory(p, g)
    last = None
    for options in _SOLVER_LADDER:
        try:
            res = cvxopt.solvers.coneqp(
                P=p, q=q, G=g, h=h, dims=dims, kktsolver=kkt, options=options
            )
        except (ValueError, ArithmeticError) as exc:  # cvxopt numerical breakdown
            last = f"solver breakdown: {exc}"
            continue
        x = np.array(res["x"]).ravel()
        scale = max(float(np.abs(w).max() * max(1.0, np.abs(x).max() ** 2)), 1.0e-300)
        kkt_ok = (
            res["gap"] is not None
            and res["gap"] <= 1.0e-6 * max(scale, 1.0)
            and res["primal infeasibility"] is not None
            and res["primal infeasibility"] <= 1.0e-7
        )
        if res["status"] == "optimal" or kkt_ok:
            return x
        last = f"status {res['status']}, gap {res.get('gap')}"
    err = SolverError(
        f"lip-field cone QP did not converge ({last}; {len(fv)} free vertices)"
    )
    err.diagnostics = {
        "free_vertices": fv,
        "targets": targets[fv],
        "weights": w,
        "box": None if box is None else (box[0][fv], box[1][fv]),
    }
    raise err


def _all_constraints(lip):
    """Every triangle (or, for chain graphs, every edge) index."""
    if len(lip.triangles):
        return np.arange(len(lip.triangles)), np.zeros(0, dtype=np.int64)
    return np.zeros(0, dtype=np.int64), np.arange(len(lip.edges))


def _zone_certainly_infeasible(lip, zone, l2, frozen_values) -> bool:
    """Cheap certificate: a mixed triangle whose frozen part already forces
    the gradient past the cap admits no feasible free values."""
    cap = 1.0 / l2 + 4.0e-9
    active = np.zeros(lip.n_vertices, dtype=bool)
    active[zone.vertices] = True
    for t in zone.triangles:
        verts = lip.triangles[t]
        free_mask = active[verts]
        if free_mask.all():
            continue
        bt = lip.grad_op[t]
        g0 = bt[:, ~free_mask] @ frozen_values[verts[~free_mask]]
        a = bt[:, free_mask]
        if a.shape[1] == 0:
            resid = g0
        else:
            # component of g0 orthogonal to the span of the free columns
            sol, *_ = np.linalg.lstsq(a, -g0, rcond=None)
            resid = g0 + a @ sol
        if np.hypot(resid[0], resid[1]) > cap:
            return True
    return False


def solve_lip_damage(
    lip, zone, psi_plus, yc, l2, bounds, areas, d_loc, d_m=None,
    on_infeasible="global", stats=None,
) -> np.ndarray:
    """Constrained damage minimization on the active zone.

    Minimizes sum_e A_e [(1-d_e)^2 psi+_e + 2 Yc d_e^2] over the active
    vertices subject to the Lipschitz cones and the box [lower, upper];
    inactive vertices keep d_loc and enter coupled constraints as frozen
    constants. Returns the full per-vertex field.

    The discrete triangle cones are strictly stronger than the edge-wise
    metric behind the bounds, so the zone program can be infeasible on rough
    fields; ``on_infeasible='global'`` (default) then re-solves over all
    vertices with the always-feasible box [d_m, 1], ``'force_global'`` skips
    the zone attempt outright, and ``'raise'`` propagates the failure.
    ``stats`` (optional dict) reports which path produced the result.
    """
    d = np.asarray(d_loc, dtype=np.float64).copy()
    stats = stats if stats is not None else {}
    psi_plus = np.asarray(psi_plus, dtype=np.float64)
    areas = np.asarray(areas, dtype=np.float64)
    # A[(1-d)^2 psi + 2 Yc d^2] = w (d - t)^2 + const with w = A(psi+2Yc)
    weights = areas * (psi_plus + 2.0 * yc)
    targets = psi_plus / (psi_plus + 2.0 * yc)
    feas_tol = 1.0e-8

    if zone.is_empty:
        # an empty zone certifies the edge metric only; the candidate must
        # still satisfy the (stronger) triangle cones to be accepted
        if constraint_violation(lip, d, l2) <= feas_tol or on_infeasible == "raise":
            stats["path"] = "local"
            return d
    else:
        try_zone = on_infeasible != "force_global" and not (
            on_infeasible == "global" and _zone_certainly_infeasible(lip, zone, l2, d)
        )
        if try_zone:
            try:
                trial = d.copy()
                trial[zone.vertices] = _solve_constrained_qp(
                    lip, l2, zone.vertices, zone.triangles, zone.edges, weights, targets,
                    frozen_values=d, box=(bounds.lower, bounds.upper),
                )
                if constraint_violation(lip, trial, l2) <= feas_tol:
                    stats["path"] = "zone"
                    return trial
                if on_infeasible == "raise":
                    raise SolverError(
                        "zone solution violates cones outside the active zone"
                    )
            except SolverError:
                if on_infeasible != "global":
                    raise
    lo = np.zeros(lip.n_vertices) if d_m is None else np.asarray(d_m, dtype=np.float64)
    tris, edges = _all_constraints(lip)
    every = np.arange(lip.n_vertices)
    stats["path"] = "global"
    return _solve_constrained_qp(
        lip, l2, every, tris, edges, weights, targets,
        frozen_values=d, box=(lo, np.ones(lip.n_vertices)),
    )


def lipschitz_project(lip: LipMesh, d_tar, l2: float, weights=None) -> np.ndarray:
    """Weighted-L2 projection of a field onto the discrete Lipschitz set.

    Uses the bounds/active-zone reduction: the field is returned unchanged
    where its envelopes coincide, and a small constrained QP runs on the
    rest; an infeasible zone program (possible because the cones are
    stronger than the edge metric) falls back to the global projection.
    ``weights`` defaults to uniform; pass element areas for the
    volume-weighted projection.
    """
    d_tar = np.asarray(d_tar, dtype=np.float64)
    w = np.ones_like(d_tar) if weights is None else np.asarray(weights, dtype=np.float64)
    bounds = compute_bounds(lip, d_tar, l2)
    zone = active_zone(bounds)
    d = d_tar.copy()
    if zone.is_empty:
        return d
    try:
        d[zone.vertices] = _solve_constrained_qp(
            lip, l2, zone.vertices, zone.triangles, zone.edges, w, d_tar,
            frozen_values=d_tar, box=(bounds.lower, bounds.upper),
        )
        return d
    except SolverError:
        pass
    tris, edges = _all_constraints(lip)
    every = np.arange(lip.n_vertices)
    return _solve_constrained_qp(
        lip, l2, every, tris, edges, w, d_tar, frozen_values=d_tar, box=None
    )


def lf_damage_energy(d, yc: float, areas) -> float:
    """Dissipated damage energy sum_e A_e * Yc * 2 d_e^2 (mJ)."""
    d = np.asarray(d, dtype=np.float64)
    return float(np.dot(np.asarray(areas, dtype=np.float64), 2.0 * yc * d * d))


def lip_objective(d, psi_plus, yc: float, areas) -> float:
    """Damage-dependent part of the incremental potential, integrated."""
    d = np.asarray(d, dtype=np.float64)
    dens = (1.0 - d) ** 2 * np.asarray(psi_plus) + 2.0 * yc * d * d
    return float(np.dot(np.asarray(areas), dens))


def constraint_violation(lip: LipMesh, d, l2: float) -> float:
    """Worst excess of the discrete Lipschitz constraints (0 if feasible).

    Triangle mode reports max(||B_t d|| - 1/l2); edge mode (no triangles)
    reports the worst edge-slope excess.
    """
    d = np.asarray(d, dtype=np.float64)
    cap = 1.0 / l2
    if len(lip.triangles):
        grad = np.einsum("tkj,tj->tk", lip.grad_op, d[lip.triangles])
        norms = np.hypot(grad[:, 0], grad[:, 1])
        return float(np.maximum(norms - cap, 0.0).max(initial=0.0))
    if len(lip.edges):
        slope = np.abs(d[lip.edges[:, 0]] - d[lip.edges[:, 1]]) / lip.edge_lengths
        return float(np.maximum(slope - cap, 0.0).max(initial=0.0))
    return 0.0

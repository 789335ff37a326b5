"""Displacement and internal-strain solves at fixed damage.

Two paths, both minimizing the same incremental potential over (u, eps_i)
with damage frozen:

* symmetric tension/compression (beta=1): a single linear solve with a
  condensed viscoelastic tangent and an internal-stress body force, followed
  by a closed-form internal-strain update;
* asymmetric (beta=0): a joint Newton iteration on (u, eps_1..eps_n) whose
  per-element internal-strain blocks are statically condensed out.

Voigt-engineering convention (exx, eyy, gxy) everywhere; element strains are
piecewise constant (linear triangles).
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from ._kernels import eigen_split_batch, elem_stiffness_batch
from .errors import SolverError
from .material import GKVMaterial, degradation
from .mesh import BaseMesh

_TRACE_OUTER = np.array([[1.0, 1.0, 0.0], [1.0, 1.0, 0.0], [0.0, 0.0, 0.0]])
_FULL_QUAD = np.diag([2.0, 2.0, 1.0])  # Hessian of e:e in Voigt-engineering


@dataclass(frozen=True)
class DirichletBC:
    """Ramped Dirichlet condition: value = coef * rate * t on one component."""

    node_set: str
    component: str  # 'x' or 'y'
    coef: float


@dataclass
class MechState:
    """Converged mechanical fields at one time step."""

    u: np.ndarray  # (2*nv,)
    eps_internal: np.ndarray  # (nt, n, 3)
    sigma: np.ndarray  # (nt, 3)
    reactions: np.ndarray  # (2*nv,), nonzero on constrained dofs
    iterations: int = 1


class FemSpace:
    """Cached element operators and scatter indices for one mesh."""

    def __init__(self, mesh: BaseMesh):
        self.mesh = mesh
        nt = mesh.n_elements
        grads = mesh.shape_grads  # (nt, 3, 2)
        b = np.zeros((nt, 3, 6))
        for a in range(3):
            b[:, 0, 2 * a] = grads[:, a, 0]
            b[:, 1, 2 * a + 1] = grads[:, a, 1]
            b[:, 2, 2 * a] = grads[:, a, 1]
            b[:, 2, 2 * a + 1] = grads[:, a, 0]
        self.b_mats = b
        self.areas = mesh.element_area
        dofs = np.empty((nt, 6), dtype=np.int64)
        dofs[:, 0::2] = 2 * mesh.triangles
        dofs[:, 1::2] = 2 * mesh.triangles + 1
        self.elem_dofs = dofs
        self.rows = np.repeat(dofs, 6, axis=1).ravel()
        self.cols = np.tile(dofs, (1, 6)).ravel()
        self.n_dofs = 2 * mesh.n_nodes

    def strains(self, u: np.ndarray) -> np.ndarray:
        """Element Voigt strains from the nodal displacement vector."""
        ue = u[self.elem_dofs]
        return np.einsum("eij,ej->ei", self.b_mats, ue)

    def assemble(self, d_mats: np.ndarray) -> sp.csr_matrix:
        """Global sparse matrix from per-element 3x3 moduli."""
        ke = elem_stiffness_batch(self.b_mats, d_mats, self.areas)
        k = sp.coo_matrix((ke.ravel(), (self.rows, self.cols)), shape=(self.n_dofs, self.n_dofs))
        return k.tocsr()

    def internal_force(self, sig: np.ndarray) -> np.ndarray:
        """Assembled nodal force of an element stress field."""
        fe = np.einsum("eji,ej->ei", self.b_mats, sig) * self.areas[:, None]
        f = np.zeros(self.n_dofs)
        np.add.at(f, self.elem_dofs.ravel(), fe.ravel())
        return f


def _as_space(mesh) -> FemSpace:
    return mesh if isinstance(mesh, FemSpace) else FemSpace(mesh)


def tangent_and_internal_stress(d, eps_im, dt: float, mat: GKVMaterial):
    """Condensed viscoelastic tangent and internal stress (beta=1 path).

    H = g(d) [I + sum_i g(d) dt/(g(d) dt + tau_i) C0 Ci^-1]^-1 C0 and
    sigma_int = H : sum_i tau_i/(g(d) dt + tau_i) eps_im_i. Vectorized over
    elements; ``d`` may be scalar or (N,), ``eps_im`` (n, 3) or (N, n, 3).

    Returns (H, sigma_int) with shapes ((N,)3,3) and ((N,)3).
    """
    if dt <= 0.0:
        raise SolverError("dt must be positive")
    eps_im = np.asarray(eps_im, dtype=np.float64)
    single = eps_im.ndim == 2
    eim = eps_im[None] if single else eps_im
    nel = eim.shape[0]
    g = np.broadcast_to(np.asarray(degradation(d), dtype=np.float64), (nel,))
    c_all = mat.stiffness_all()
    c0 = c_all[0]
    m = np.broadcast_to(np.eye(3), (nel, 3, 3)).copy()
    weighted_hist = np.zeros((nel, 3))
    for i in range(mat.n_units):
        tau = mat.tau[i]
        ci_inv = np.linalg.inv(c_all[i + 1])
        coef = g * dt / (g * dt + tau)
        m += coef[:, None, None] * (c0 @ ci_inv)[None]
        weighted_hist += (tau / (g * dt + tau))[:, None] * eim[:, i, :]
    h = g[:, None, None] * np.linalg.solve(m, np.broadcast_to(c0, (nel, 3, 3)))
    h = 0.5 * (h + np.swapaxes(h, 1, 2))  # scrub roundoff asymmetry
    sig_int = np.einsum("eij,ej->ei", h, weighted_hist)
    if single:
        return h[0], sig_int[0]
    return h, sig_int


def update_internal_strains(sigma, eps_im, d, dt: float, mat: GKVMaterial) -> np.ndarray:
    """Implicit-Euler internal strain update of the KV units (beta=1).

    eps_i = dt/(g dt + tau_i) Ci^-1 sigma + tau_i/(g dt + tau_i) eps_im_i.
    """
    sigma = np.asarray(sigma, dtype=np.float64)
    eps_im = np.asarray(eps_im, dtype=np.float64)
    single = sigma.ndim == 1
    sig = sigma[None] if single else sigma
    eim = eps_im[None] if single else eps_im
    nel = sig.shape[0]
    g = np.broadcast_to(np.asarray(degradation(d), dtype=np.float64), (nel,))
    out = np.empty((nel, mat.n_units, 3))
    for i in range(mat.n_units):
        tau = mat.tau[i]
        ci_inv = np.linalg.inv(mat.stiffness_voigt(i + 1))
        denom = g * dt + tau
        out[:, i, :] = (dt / denom)[:, None] * (sig @ ci_inv.T) + (tau / denom)[:, None] * eim[
            :, i, :
        ]
    return out[0] if single else out


def _partition_solve(k: sp.csr_matrix, rhs: np.ndarray, fixed_dofs, fixed_values):
    """Solve K u = rhs with prescribed dofs eliminated; returns (u, reactions)."""
    n = k.shape[0]
    fixed_dofs = np.asarray(fixed_dofs, dtype=np.int64)
    fixed_values = np.asarray(fixed_values, dtype=np.float64)
    if len(fixed_dofs) < 3:  # 2D rigid modes need at least 3 constraints
        raise SolverError("insufficient Dirichlet constraints to remove rigid modes")
    free = np.setdiff1d(np.arange(n), fixed_dofs)
    u = np.zeros(n)
    u[fixed_dofs] = fixed_values
    rhs_f = rhs[free] - k[np.ix_(free, fixed_dofs)] @ fixed_values
    kff = k[np.ix_(free, free)].tocsc()
    try:
        uf = spla.spsolve(kff, rhs_f)
    except RuntimeError as exc:  # umfpack/SuperLU singular factorization
        raise SolverError(f"displacement system is singular: {exc}") from exc
    if not np.all(np.isfinite(uf)):
        raise SolverError("displacement system is singular (non-finite solution)")
    u[free] = uf
    resid = k @ u - rhs
    scale = max(float(np.abs(rhs_f).max(initial=0.0)), float(np.abs(kff @ uf).max(initial=0.0)))
    if scale > 0 and float(np.abs(resid[free]).max(initial=0.0)) > 1.0e-8 * scale:
        raise SolverError("linear solve did not reach the required residual")
    reactions = np.zeros(n)
    reactions[fixed_dofs] = resid[fixed_dofs]
    return u, reactions


def solve_displacement_symmetric(
    mesh, d_elem, eps_im, dt: float, mat: GKVMaterial, fixed_dofs, fixed_values
) -> MechState:
    """One linear viscoelastic solve at fixed damage (beta=1).

    ``d_elem`` is per-element damage, ``eps_im`` the internal strains of the
    previous converged step, ``fixed_dofs``/``fixed_values`` prescribe the
    Dirichlet data. Returns the converged :class:`MechState` (displacements,
    updated internal strains, stresses, reactions).
    """
    space = _as_space(mesh)
    h, sig_int = tangent_and_internal_stress(d_elem, eps_im, dt, mat)
    k = space.assemble(h)
    f = space.internal_force(sig_int)
    u, reactions = _partition_solve(k, f, fixed_dofs, fixed_values)
    eps = space.strains(u)
    sigma = np.einsum("eij,ej->ei", h, eps) - sig_int
    eps_i = update_internal_strains(sigma, eps_im, d_elem, dt, mat)
    return MechState(u=u, eps_internal=eps_i, sigma=sigma, reactions=reactions)


# ----------------------------------------------------------------------
# beta = 0: eigen-split energy derivatives and the coupled Newton solve
# ----------------------------------------------------------------------


def _step_fn(x: np.ndarray) -> np.ndarray:
    """Heaviside with the symmetric 1/2 convention at zero."""
    return np.where(x > 0.0, 1.0, np.where(x < 0.0, 0.0, 0.5))


def _eig_data(eps: np.ndarray):
    """Eigenvalues and rotation matrices of a strain batch.

    Returns (lam1, lam2, T) with T the (N,3,3) Voigt-engineering strain
    rotation into the eigenframe.
    """
    exx, eyy, exy = eps[:, 0], eps[:, 1], 0.5 * eps[:, 2]
    half_tr = 0.5 * (exx + eyy)
    delta = np.sqrt(0.25 * (exx - eyy) ** 2 + exy**2)
    lam1, lam2 = half_tr + delta, half_tr - delta
    theta = 0.5 * np.arctan2(2.0 * exy, exx - eyy)
    c, s = np.cos(theta), np.sin(theta)
    c2, s2, cs = c * c, s * s, c * s
    t = np.empty((len(eps), 3, 3))
    t[:, 0, 0], t[:, 0, 1], t[:, 0, 2] = c2, s2, cs
    t[:, 1, 0], t[:, 1, 1], t[:, 1, 2] = s2, c2, -cs
    t[:, 2, 0], t[:, 2, 1], t[:, 2, 2] = -2.0 * cs, 2.0 * cs, c2 - s2
    return lam1, lam2, t


def split_stress(eps: np.ndarray, lam: float, mu: float, g) -> np.ndarray:
    """Gradient of the beta=0 unit energy g*mu*q+ + mu*q- + g*lam/2*tr^2.

    ``eps`` is (N, 3); ``g`` scalar or (N,). Returned vector pairs with
    Voigt-engineering strain variations, i.e. its third entry is sigma_xy.
    """
    plus, minus = eigen_split_batch(np.ascontiguousarray(eps))
    g = np.broadcast_to(np.asarray(g, dtype=np.float64), (len(eps),))[:, None]
    to_stress = np.array([1.0, 1.0, 0.5])
    sig = 2.0 * mu * (g * plus + minus) * to_stress
    sig[:, :2] += (g[:, 0] * lam * (eps[:, 0] + eps[:, 1]))[:, None]
    return sig


def split_hessian(eps: np.ndarray, lam: float, mu: float, g) -> np.ndarray:
    """Hessian (N,3,3) of the beta=0 unit energy, Voigt-engineering form.

    Analytic eigenframe curvature rotated to the global frame; coincident
    eigenvalues take the smooth-limit 1/2 convention.
    """
    lam1, lam2, t = _eig_data(eps)
    scale = np.maximum(np.maximum(np.abs(lam1), np.abs(lam2)), 1.0e-300)
    gap = lam1 - lam2
    tie = np.abs(gap) <= 1.0e-12 * scale
    step1, step2 = _step_fn(lam1), _step_fn(lam2)
    with np.errstate(divide="ignore", invalid="ignore"):
        ratio = (np.maximum(lam1, 0.0) - np.maximum(lam2, 0.0)) / gap
    ratio = np.where(tie, 0.5 * (step1 + step2), ratio)
    diag_plus = np.stack([2.0 * step1, 2.0 * step2, ratio], axis=1)
    h_plus = np.einsum("eki,ek,ekl->eil", t, diag_plus, t)
    h_minus = _FULL_QUAD[None] - h_plus
    g = np.broadcast_to(np.asarray(g, dtype=np.float64), (len(eps),))[:, None, None]
    return mu * (g * h_plus + h_minus) + (g * lam) * _TRACE_OUTER[None]


def _beta0_energy(space, eps, eps_units, eps_im, d_elem, dt, mat) -> float:
    """Integrated incremental potential (without damage dissipation)."""
    from .material import free_energy, viscous_dissipation_increment

    eps0 = eps - eps_units.sum(axis=1)
    full = np.concatenate([eps0[:, None, :], eps_units], axis=1)
    psi, _, _ = free_energy(full, d_elem, mat)
    if mat.n_units:
        psi = psi + viscous_dissipation_increment(eps_units - eps_im, dt, mat)
    return float(np.dot(space.areas, psi))


def beta0_residuals(mesh, u, eps_units, eps_im, d_elem, dt: float, mat: GKVMaterial):
    """Gradient of the beta=0 incremental potential w.r.t. (u, eps_i).

    Returns (g_u, g_eps) with g_u the assembled nodal forces (2*nv,) and
    g_eps the per-element internal-strain gradients (nt, n, 3), area-scaled
    like derivatives of the integrated potential.
    """
    space = _as_space(mesh)
    nt = space.mesh.n_elements
    n = mat.n_units
    eps_units = np.asarray(eps_units, dtype=np.float64).reshape(nt, n, 3)
    eps_im = np.asarray(eps_im, dtype=np.float64).reshape(nt, n, 3)
    g = degradation(np.broadcast_to(np.asarray(d_elem, dtype=np.float64), (nt,)))
    eps = space.strains(np.asarray(u, dtype=np.float64))
    eps0 = eps - eps_units.sum(axis=1) if n else eps
    lam0, mu0 = mat.lame(0)
    s0 = split_stress(eps0, lam0, mu0, g)
    g_eps = np.zeros((nt, n, 3))
    for i in range(n):
        lam_i, mu_i = mat.lame(i + 1)
        vis = (mat.tau[i] / dt) * mat.stiffness_voigt(i + 1)
        g_eps[:, i, :] = (
            split_stress(eps_units[:, i, :], lam_i, mu_i, g)
            - s0
            + (eps_units[:, i, :] - eps_im[:, i, :]) @ vis.T
        )
    return space.internal_force(s0), g_eps * space.areas[:, None, None]


def solve_newton_asymmetric(
    mesh,
    d_elem,
    eps_im,
    dt: float,
    mat: GKVMaterial,
    fixed_dofs,
    fixed_values,
    u0=None,
    eps_i0=None,
    tol: float = 1.0e-8,
    max_iter: int = 50,
) -> MechState:
    """Joint Newton solve on (u, eps_1..eps_n) for the beta=0 path.

    Internal-strain blocks are condensed element-wise (they are local), so
    each iteration costs one sparse displacement solve. A backtracking line
    search on the incremental potential guards steps across the eigen-split
    kinks. Converges when the residual drops below ``tol`` relative to the
    first iterate; raises :class:`SolverError` after ``max_iter``.
    """
    space = _as_space(mesh)
    nt = space.mesh.n_elements
    n = mat.n_units
    eps_im = np.asarray(eps_im, dtype=np.float64).reshape(nt, n, 3)
    d_elem = np.broadcast_to(np.asarray(d_elem, dtype=np.float64), (nt,))
    g = degradation(d_elem)
    fixed_dofs = np.asarray(fixed_dofs, dtype=np.int64)
    free = np.setdiff1d(np.arange(space.n_dofs), fixed_dofs)

    u = np.zeros(space.n_dofs) if u0 is None else np.asarray(u0, dtype=np.float64).copy()
    u[fixed_dofs] = fixed_values
    eps_units = (
        eps_im.copy() if eps_i0 is None else np.asarray(eps_i0, dtype=np.float64).reshape(nt, n, 3)
    )

    lames = [mat.lame(i) for i in range(n + 1)]
    c_units = [mat.stiffness_voigt(i + 1) for i in range(n)]
    vis = [(mat.tau[i] / dt) * c_units[i] for i in range(n)]

    ref_res = None
    energy = _beta0_energy(space, space.strains(u), eps_units, eps_im, d_elem, dt, mat)
    for it in range(1, max_iter + 1):
        eps = space.strains(u)
        eps0 = eps - eps_units.sum(axis=1) if n else eps
        lam0, mu0 = lames[0]
        s0 = split_stress(eps0, lam0, mu0, g)
        res_grad = np.zeros((nt, n, 3))
        for i in range(n):
            lam_i, mu_i = lames[i + 1]
            res_grad[:, i, :] = (
                split_stress(eps_units[:, i, :], lam_i, mu_i, g)
                - s0
                + (eps_units[:, i, :] - eps_im[:, i, :]) @ vis[i].T
            )
        g_u = space.internal_force(s0)

        res_u = float(np.abs(g_u[free]).max(initial=0.0))
        res_e = float(np.abs(res_grad).max(initial=0.0)) if n else 0.0
        res = max(res_u, res_e)
        if ref_res is None:
            ref_res = res
        if res <= tol * max(ref_res, 1.0e-300) or res < 1.0e-14:
            reactions = np.zeros(space.n_dofs)
            reactions[fixed_dofs] = g_u[fixed_dofs]
            return MechState(
                u=u, eps_internal=eps_units, sigma=s0, reactions=reactions, iterations=it
            )

        d0 = split_hessian(eps0, lam0, mu0, g)
        if n:
            s_blocks = np.zeros((nt, 3 * n, 3 * n))
            for i in range(n):
                lam_i, mu_i = lames[i + 1]
                di = split_hessian(eps_units[:, i, :], lam_i, mu_i, g)
                for j in range(n):
                    blk = d0 + (di + vis[i][None] if i == j else 0.0)
                    s_blocks[:, 3 * i : 3 * i + 3, 3 * j : 3 * j + 3] = blk

            rhs = np.zeros((nt, 3 * n, 4))
            rhs[:, :, 0] = res_grad.reshape(nt, 3 * n)
            rhs[:, :, 1:] = np.tile(d0, (1, n, 1))
            try:
                sol = np.linalg.solve(s_blocks, rhs)
            except np.linalg.LinAlgError as exc:
                raise SolverError(f"internal-strain block singular: {exc}") from exc
            sinv_r = sol[:, :, 0]
            sinv_w = sol[:, :, 1:]
            # condensed tangent D0 - D0 J S^-1 J^T D0 and gradient
            j_sinv_w = sinv_w.reshape(nt, n, 3, 3).sum(axis=1)
            j_sinv_r = sinv_r.reshape(nt, n, 3).sum(axis=1)
            d_cond = d0 - np.einsum("eij,ejk->eik", d0, j_sinv_w)
            g_cond = s0 - np.einsum("eij,ej->ei", d0, j_sinv_r)
        else:
            d_cond = d0
            g_cond = s0

        k_hat = space.assemble(d_cond)
        g_hat = space.internal_force(g_cond)
        du = np.zeros(space.n_dofs)
        kff = k_hat[np.ix_(free, free)].tocsc()
        try:
            du[free] = spla.spsolve(kff, -g_hat[free])
        except RuntimeError as exc:
            raise SolverError(f"Newton tangent singular: {exc}") from exc
        if not np.all(np.isfinite(du)):
            raise SolverError("Newton tangent singular (non-finite increment)")

        if n:
            d_eps = np.einsum("eij,ej->ei", space.b_mats, du[space.elem_dofs])
            w_deps = np.einsum("enij,ej->eni", sinv_w.reshape(nt, n, 3, 3), d_eps)
            d_units = (w_deps - sinv_r.reshape(nt, n, 3)).reshape(nt, n, 3)
        else:
            d_units = np.zeros((nt, 0, 3))

        alpha = 1.0
        for _ in range(40):
            u_try = u + alpha * du
            e_try = eps_units + alpha * d_units
            e_new = _beta0_energy(space, space.strains(u_try), e_try, eps_im, d_elem, dt, mat)
            if e_new <= energy + 1.0e-12 * max(abs(energy), 1.0):
                break
            alpha *= 0.5
        else:
            raise SolverError("Newton line search failed to decrease the potential")
        u, eps_units, energy = u_try, e_try, e_new

    raise SolverError(
        f"Newton did not converge in {max_iter} iterations (residual {res:.3e}, "
        f"reference {ref_res:.3e})"
    )

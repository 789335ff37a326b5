"""Time stepping: load ramps, staggered minimization, energy accounting.

Each implicit step alternates a mechanical solve at frozen damage with a
damage solve at frozen displacements/internal strains until the damage
field settles, then re-equilibrates once at the accepted damage so that
reactions are variationally consistent. The energy ledger tracks free
energy, cumulative viscous dissipation, damage dissipation and external
work for the incremental balance checks.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import damage_lf, damage_pf
from .errors import StepError
from .material import GKVMaterial, free_energy, viscous_dissipation_increment
from .mech import (
    DirichletBC,
    FemSpace,
    solve_displacement_symmetric,
    solve_newton_asymmetric,
)
from .mesh import BaseMesh, build_lip_mesh


@dataclass
class EnergyLedger:
    """Cumulative energies (mJ): free, viscous, damage, external work."""

    fe: float = 0.0
    vd_cum: float = 0.0
    de: float = 0.0
    work_cum: float = 0.0


@dataclass
class EnergyIncrements:
    d_fe: float
    d_vd: float
    d_de: float
    d_work: float

    @property
    def balance_residual(self) -> float:
        return self.d_work - (self.d_fe + self.d_vd + self.d_de)


@dataclass
class SimState:
    """Converged state of one accepted time step."""

    time: float
    u: np.ndarray
    eps_internal: np.ndarray
    d_elem: np.ndarray
    ledger: EnergyLedger
    d_nodal: np.ndarray | None = None  # phase-field only
    history: np.ndarray | None = None  # phase-field only
    sigma: np.ndarray | None = None
    psi_plus: np.ndarray | None = None
    reaction: float = 0.0
    u_imposed: float = 0.0
    stagger_iters: int = 0
    diagnostics: dict = field(default_factory=dict)


@dataclass
class StaggerParams:
    tol: float = 1.0e-3
    max_iter: int = 100
    newton_tol: float = 1.0e-8
    newton_max_iter: int = 50
    active_tol: float = 1.0e-8
    halve_dt_on_failure: bool = False
    max_halvings: int = 3


class Simulation:
    """Driver binding mesh, material, regularization and loading.

    Parameters
    ----------
    mesh : BaseMesh
    mat : GKVMaterial
        Fracture parameters must be populated (gc, l1, yc, l2 internal units).
    regularization : str
        'pf' or 'lf'.
    bcs : sequence of DirichletBC
        Imposed value = coef * rate * t on the named set/component.
    rate : float
        Loading rate (mm/s) scaling every ramp.
    gc_correction : bool
        Apply the effective-toughness mesh correction (phase field).
    h_elem : float or None
        Effective element size for the correction; defaults to the minimum
        edge length of the mesh.
    pin_damage : sequence of str
        Node sets where damage is suppressed (PF: d=0 nodes; LF: zero drive
        on elements touching those nodes).
    ramp : callable or None
        Imposed-displacement magnitude u(t) in mm; defaults to the linear
        ramp rate * t. Each constrained dof is driven at coef * u(t).
    """

    def __init__(
        self,
        mesh: BaseMesh,
        mat: GKVMaterial,
        regularization: str,
        bcs,
        rate: float,
        gc_correction: bool = True,
        h_elem: float | None = None,
        pin_damage=(),
        stagger: StaggerParams | None = None,
        ramp=None,
    ):
        if regularization not in ("pf", "lf"):
            raise ValueError("regularization must be 'pf' or 'lf'")
        self.mesh = mesh
        self.mat = mat
        self.regularization = regularization
        self.space = FemSpace(mesh)
        self.stagger = stagger or StaggerParams()
        self.rate = float(rate)
        self.ramp = ramp if ramp is not None else (lambda t: self.rate * t)
        self.bcs = list(bcs)

        pinned_nodes = np.unique(
            np.concatenate(
                [mesh.node_sets[name] for name in pin_damage] or [np.zeros(0, dtype=np.int64)]
            )
        )
        pin_mask = np.zeros(mesh.n_nodes, dtype=bool)
        pin_mask[pinned_nodes] = True
        self.pinned_elements = np.nonzero(pin_mask[mesh.triangles].any(axis=1))[0]

        if regularization == "pf":
            h = mesh.min_edge_length() if h_elem is None else float(h_elem)
            from .material import effective_gc

            self.gc_eff = effective_gc(mat.gc, h, mat.l1) if gc_correction else mat.gc
            self.pf = damage_pf.PhaseFieldSolver(mesh, self.gc_eff, mat.l1, pinned_nodes)
            self.lip = None
        else:
            self.gc_eff = mat.gc
            self.pf = None
            self.lip = build_lip_mesh(mesh)
        # once the zone program went infeasible on this run, skip straight to
        # the global solve (localized cracks keep it infeasible)
        self._lf_prefer_global = False

        # ramped Dirichlet dofs: value(t) = coef * rate * t
        dof_coef: dict[int, float] = {}
        for bc in self.bcs:
            if bc.node_set not in mesh.node_sets:
                raise ValueError(f"unknown node set {bc.node_set!r} in boundary condition")
            comp = {"x": 0, "y": 1}[bc.component]
            for node in mesh.node_sets[bc.node_set]:
                dof = 2 * int(node) + comp
                if dof in dof_coef and dof_coef[dof] != bc.coef:
                    raise ValueError(f"conflicting boundary conditions on dof {dof}")
                dof_coef[dof] = bc.coef
        self.fixed_dofs = np.array(sorted(dof_coef), dtype=np.int64)
        self.fixed_coefs = np.array([dof_coef[d] for d in self.fixed_dofs])

    # ------------------------------------------------------------------

    def initial_state(self) -> SimState:
        nt = self.mesh.n_elements
        state = SimState(
            time=0.0,
            u=np.zeros(self.space.n_dofs),
            eps_internal=np.zeros((nt, self.mat.n_units, 3)),
            d_elem=np.zeros(nt),
            ledger=EnergyLedger(),
            sigma=np.zeros((nt, 3)),
            psi_plus=np.zeros(nt),
        )
        if self.regularization == "pf":
            state.d_nodal = np.zeros(self.mesh.n_nodes)
            state.history = np.zeros(nt)
        return state

    def dirichlet_values(self, t: float) -> np.ndarray:
        return self.fixed_coefs * self.ramp(t)

    def _mech_solve(self, d_elem, eps_im, dt, fixed_values, u0, eps_i0):
        if self.mat.beta == 1:
            return solve_displacement_symmetric(
                self.space, d_elem, eps_im, dt, self.mat, self.fixed_dofs, fixed_values
            )
        return solve_newton_asymmetric(
            self.space,
            d_elem,
            eps_im,
            dt,
            self.mat,
            self.fixed_dofs,
            fixed_values,
            u0=u0,
            eps_i0=eps_i0,
            tol=self.stagger.newton_tol,
            max_iter=self.stagger.newton_max_iter,
        )

    def _drive(self, u, eps_units):
        """psi_plus per element from the current mechanical fields."""
        eps = self.space.strains(u)
        eps0 = eps - eps_units.sum(axis=1) if self.mat.n_units else eps
        full = np.concatenate([eps0[:, None, :], eps_units], axis=1)
        psi, psi_plus, _ = free_energy(full, 0.0, self.mat)
        return psi_plus, full

    def _effective_drive(self, psi_plus):
        if len(self.pinned_elements) == 0:
            return psi_plus
        out = psi_plus.copy()
        out[self.pinned_elements] = 0.0
        return out

    def step(
        self, state_m: SimState, dt: float, record_potential: bool = False, _depth: int = 0
    ) -> SimState:
        """Advance one implicit step of size dt from a converged state.

        With ``halve_dt_on_failure`` enabled, a non-converging step is
        retried as two half steps (recursively, up to ``max_halvings``).
        """
        try:
            return self._step_at(state_m, dt, record_potential)
        except StepError:
            if not self.stagger.halve_dt_on_failure or _depth >= self.stagger.max_halvings:
                raise
            mid = self.step(state_m, 0.5 * dt, record_potential, _depth + 1)
            return self.step(mid, 0.5 * dt, record_potential, _depth + 1)

    def _step_at(self, state_m: SimState, dt: float, record_potential: bool) -> SimState:
        if dt <= 0.0:
            raise ValueError("dt must be positive")
        mat = self.mat
        t = state_m.time + dt
        fixed_values = self.dirichlet_values(t)
        d_m = state_m.d_elem
        d_elem = d_m.copy()
        d_field = state_m.d_nodal if self.regularization == "pf" else d_m
        hist_m = state_m.history

        u_guess, eps_guess = state_m.u, state_m.eps_internal
        potentials = []
        converged = False
        delta = np.inf
        for it in range(1, self.stagger.max_iter + 1):
            mech = self._mech_solve(d_elem, state_m.eps_internal, dt, fixed_values, u_guess, eps_guess)
            u_guess, eps_guess = mech.u, mech.eps_internal
            psi_plus, _ = self._drive(mech.u, mech.eps_internal)
            drive = self._effective_drive(psi_plus)

            if record_potential and self.regularization == "lf":
                potentials.append(
                    self._potential(mech.u, mech.eps_internal, state_m.eps_internal, d_elem, dt)
                )

            if self.regularization == "pf":
                hist = damage_pf.update_history(hist_m, drive)
                d_nodal = self.pf.solve(hist)
                new_field = d_nodal
                # history-field undershoots are reported, not clipped, on the
                # nodal field; the constitutive element value stays in [0, 1]
                d_elem_new = np.clip(damage_pf.nodal_to_element(self.mesh, d_nodal), 0.0, 1.0)
            else:
                d_loc = damage_lf.local_damage(drive, mat.yc, d_m)
                bounds = damage_lf.compute_bounds(self.lip, d_loc, mat.l2)
                zone = damage_lf.active_zone(bounds, self.stagger.active_tol)
                stats = {}
                d_elem_new = damage_lf.solve_lip_damage(
                    self.lip, zone, drive, mat.yc, mat.l2, bounds,
                    self.mesh.element_area, d_loc, d_m=d_m,
                    on_infeasible="force_global" if self._lf_prefer_global else "global",
                    stats=stats,
                )
                if stats["path"] == "global":
                    self._lf_prefer_global = True
                new_field = d_elem_new

            if record_potential and self.regularization == "lf":
                potentials.append(
                    self._potential(
                        mech.u, mech.eps_internal, state_m.eps_internal, d_elem_new, dt
                    )
                )

            delta = float(np.abs(new_field - d_field).max(initial=0.0))
            d_field = new_field
            d_elem = d_elem_new
            if delta <= self.stagger.tol:
                converged = True
                break
        if not converged:
            raise StepError(
                f"staggered loop did not converge at t={t:.6g}s "
                f"(last delta_d={delta:.3e} after {self.stagger.max_iter} iterations)",
                diagnostics={"delta_d": delta, "time": t},
            )

        mech = self._mech_solve(d_elem, state_m.eps_internal, dt, fixed_values, u_guess, eps_guess)
        psi_plus, full_units = self._drive(mech.u, mech.eps_internal)
        drive = self._effective_drive(psi_plus)

        state = SimState(
            time=t,
            u=mech.u,
            eps_internal=mech.eps_internal,
            d_elem=d_elem,
            ledger=EnergyLedger(),
            sigma=mech.sigma,
            psi_plus=psi_plus,
            stagger_iters=it,
        )
        if self.regularization == "pf":
            state.history = damage_pf.update_history(hist_m, drive)
            state.d_nodal = d_field
        # scalar reaction conjugate to the imposed displacement u = rate * t
        state.reaction = float(np.dot(self.fixed_coefs, mech.reactions[self.fixed_dofs]))
        state.u_imposed = self.ramp(t)

        psi, _, _ = free_energy(full_units, d_elem, self.mat)
        fe = float(np.dot(self.mesh.element_area, psi))
        de = self._damage_energy(state)
        d_vd = self._viscous_increment(state_m, state, dt)
        d_work = state.reaction * (state.u_imposed - state_m.u_imposed)
        state.ledger = EnergyLedger(
            fe=fe,
            vd_cum=state_m.ledger.vd_cum + d_vd,
            de=de,
            work_cum=state_m.ledger.work_cum + d_work,
        )
        if record_potential:
            state.diagnostics["stagger_potentials"] = potentials
        return state

    # ------------------------------------------------------------------

    def _damage_energy(self, state: SimState) -> float:
        if self.regularization == "pf":
            return damage_pf.pf_damage_energy(self.mesh, state.d_nodal, self.gc_eff, self.mat.l1)
        return damage_lf.lf_damage_energy(state.d_elem, self.mat.yc, self.mesh.element_area)

    def _viscous_increment(self, state_m: SimState, state: SimState, dt: float) -> float:
        if self.mat.n_units == 0:
            return 0.0
        dens = viscous_dissipation_increment(
            state.eps_internal - state_m.eps_internal, dt, self.mat
        )
        return float(np.dot(self.mesh.element_area, dens))

    def _potential(self, u, eps_units, eps_im, d_elem, dt) -> float:
        """Incremental potential F for the lip-field descent diagnostic."""
        eps = self.space.strains(u)
        eps0 = eps - eps_units.sum(axis=1) if self.mat.n_units else eps
        full = np.concatenate([eps0[:, None, :], eps_units], axis=1)
        psi, _, _ = free_energy(full, d_elem, self.mat)
        dens = psi
        if self.mat.n_units:
            dens = dens + viscous_dissipation_increment(eps_units - eps_im, dt, self.mat)
        dens = dens + 2.0 * self.mat.yc * d_elem**2
        return float(np.dot(self.mesh.element_area, dens))

    def energy_increments(
        self, state_m: SimState, state: SimState, reaction: float, du_imposed: float
    ) -> EnergyIncrements:
        """Ledger increments between two consecutive converged states.

        ``reaction`` is the force conjugate to the imposed displacement used
        for the work term d_work = reaction * du_imposed (the caller picks
        end-of-step or averaged reactions).
        """
        dt = state.time - state_m.time
        return EnergyIncrements(
            d_fe=state.ledger.fe - state_m.ledger.fe,
            d_vd=self._viscous_increment(state_m, state, dt) if dt > 0 else 0.0,
            d_de=self._damage_energy(state) - self._damage_energy(state_m),
            d_work=reaction * du_imposed,
        )


def run(config, quiet: bool = True):
    """Execute a configured run; returns the history rows and output paths.

    Writes the force-displacement/energy CSV and VTK snapshots at the
    configured cadence into the output directory. Deterministic for a fixed
    configuration. Step failures propagate with the index of the last
    completed step attached.
    """
    import os

    from .config import RunConfig
    from .mesh import load_msh
    from .outputs import write_history_csv, write_vtk_snapshot

    cfg: RunConfig = config
    mesh = load_msh(cfg.mesh_path)
    mat = cfg.material()
    sim = Simulation(
        mesh,
        mat,
        cfg.regularization,
        cfg.bcs,
        cfg.rate,
        gc_correction=cfg.gc_correction,
        h_elem=cfg.h_elem,
        pin_damage=cfg.pin_damage,
        stagger=cfg.stagger_params(),
    )
    os.makedirs(cfg.output_dir, exist_ok=True)
    n_steps = int(round(cfg.t_end / cfg.dt))
    state = sim.initial_state()
    rows = []
    extra = ["pf_undershoot_min"] if cfg.regularization == "pf" else None
    csv_path = os.path.join(cfg.output_dir, "history.csv")
    snap_paths = []
    try:
        for step_idx in range(1, n_steps + 1):
            state = sim.step(state, cfg.dt)
            row = {
                "step": step_idx,
                "time_s": state.time,
                "u_imposed_mm": state.u_imposed,
                "reaction_N": state.reaction,
                "fe_mJ": state.ledger.fe,
                "vd_cum_mJ": state.ledger.vd_cum,
                "de_mJ": state.ledger.de,
                "work_cum_mJ": state.ledger.work_cum,
                "stagger_iters": state.stagger_iters,
            }
            if extra:
                row["pf_undershoot_min"] = min(float(state.d_nodal.min()), 0.0)
            rows.append(row)
            if not quiet:
                print(
                    f"step {step_idx}/{n_steps} t={state.time:.6g}s "
                    f"R={state.reaction:.6g}N stagger={state.stagger_iters}"
                )
            if cfg.snapshot_every and step_idx % cfg.snapshot_every == 0:
                path = os.path.join(cfg.output_dir, f"snapshot_{step_idx:06d}.vtk")
                write_vtk_snapshot(path, mesh, state)
                snap_paths.append(path)
    except StepError as exc:
        write_history_csv(csv_path, rows, extra_columns=extra)
        exc.diagnostics["last_completed_step"] = len(rows)
        raise
    write_history_csv(csv_path, rows, extra_columns=extra)
    return {"rows": rows, "history_csv": csv_path, "snapshots": snap_paths, "final_state": state}

"""Run configuration: flat INI-style sections, strictly validated.

Fracture parameters are given as exactly one of the pairs (Gc, l1) or
(Yc, l2) in user-facing units (J/m^2, J/m^3, mm); the other pair is derived
by the calibration identities. Moduli are MPa, times seconds, rates mm/s.
"""

from __future__ import annotations

import configparser
from dataclasses import dataclass, field

from .errors import ConfigError
from .material import (
    J_PER_M2_TO_N_PER_MM,
    J_PER_M3_TO_MPA,
    GKVMaterial,
    calibrate,
    calibrate_inverse,
)
from .mech import DirichletBC

_KNOWN_KEYS = {
    "mesh": {"path"},
    "material": {"E", "tau", "nu", "beta"},
    "fracture": {"regularization", "Gc", "l1", "Yc", "l2", "gc_correction", "h_elem", "pin_damage"},
    "time": {"rate", "dt", "t_end"},
    "output": {"dir", "snapshot_every"},
    "solver": {
        "stag_tol",
        "max_stag",
        "newton_tol",
        "newton_max_iter",
        "active_tol",
        "halve_dt_on_failure",
    },
}
_MANDATORY = {
    ("mesh", "path"),
    ("material", "E"),
    ("material", "nu"),
    ("fracture", "regularization"),
    ("time", "rate"),
    ("time", "dt"),
    ("time", "t_end"),
}


@dataclass
class RunConfig:
    """Validated configuration of one simulation run."""

    mesh_path: str
    E: tuple[float, ...]
    tau: tuple[float, ...]
    nu: float
    beta: int
    regularization: str
    gc_j_m2: float
    l1: float
    yc_j_m3: float
    l2: float
    bcs: list[DirichletBC]
    rate: float
    dt: float
    t_end: float
    output_dir: str = "out"
    snapshot_every: int = 0
    gc_correction: bool = True
    h_elem: float | None = None
    pin_damage: tuple[str, ...] = ()
    stag_tol: float = 1.0e-3
    max_stag: int = 100
    newton_tol: float = 1.0e-8
    newton_max_iter: int = 50
    active_tol: float = 1.0e-8
    halve_dt_on_failure: bool = False

    def material(self) -> GKVMaterial:
        """Material with fracture parameters converted to internal units."""
        return GKVMaterial(
            E=self.E,
            tau=self.tau,
            nu=self.nu,
            beta=self.beta,
            gc=self.gc_j_m2 * J_PER_M2_TO_N_PER_MM,
            l1=self.l1,
            yc=self.yc_j_m3 * J_PER_M3_TO_MPA,
            l2=self.l2,
        )

    def stagger_params(self):
        from .sim import StaggerParams

        return StaggerParams(
            tol=self.stag_tol,
            max_iter=self.max_stag,
            newton_tol=self.newton_tol,
            newton_max_iter=self.newton_max_iter,
            active_tol=self.active_tol,
            halve_dt_on_failure=self.halve_dt_on_failure,
        )


def _floats(text: str) -> tuple[float, ...]:
    return tuple(float(tok) for tok in text.replace(",", " ").split())


def _bool(text: str, where: str) -> bool:
    t = text.strip().lower()
    if t in ("on", "true", "yes", "1"):
        return True
    if t in ("off", "false", "no", "0"):
        return False
    raise ConfigError(f"{where}: expected on/off, got {text!r}")


def parse_config(path) -> RunConfig:
    """Read and validate a run configuration file.

    Rejects unknown keys, missing mandatory keys, inconsistent list lengths
    and over-determined fracture parameters with descriptive errors.
    """
    cp = configparser.ConfigParser(inline_comment_prefixes=("#", ";"))
    cp.optionxform = str  # keep key case (E vs e)
    read = cp.read(path, encoding="utf-8")
    if not read:
        raise ConfigError(f"cannot read config file {path}")

    for section in cp.sections():
        if section == "bcs":
            continue
        if section not in _KNOWN_KEYS:
            raise ConfigError(f"unknown section [{section}]")
        for key in cp[section]:
            if key not in _KNOWN_KEYS[section]:
                raise ConfigError(f"unknown key {key!r} in section [{section}]")
    for section, key in _MANDATORY:
        if not cp.has_option(section, key):
            raise ConfigError(f"missing mandatory key {key!r} in section [{section}]")

    e_list = _floats(cp["material"]["E"])
    tau_list = _floats(cp["material"].get("tau", ""))
    if len(tau_list) != len(e_list) - 1:
        raise ConfigError(
            f"len(tau) must equal len(E)-1: got {len(tau_list)} vs {len(e_list)} moduli"
        )
    beta = int(cp["material"].get("beta", "1"))
    if beta not in (0, 1):
        raise ConfigError(f"beta must be 0 or 1, got {beta}")

    frac = cp["fracture"]
    reg = frac["regularization"].strip().lower()
    if reg not in ("pf", "lf"):
        raise ConfigError(f"regularization must be 'pf' or 'lf', got {reg!r}")
    has_pf_pair = frac.get("Gc") is not None or frac.get("l1") is not None
    has_lf_pair = frac.get("Yc") is not None or frac.get("l2") is not None
    if has_pf_pair and has_lf_pair:
        raise ConfigError("give exactly one of (Gc, l1) or (Yc, l2), not both")
    if has_pf_pair:
        if frac.get("Gc") is None or frac.get("l1") is None:
            raise ConfigError("fracture pair (Gc, l1) is incomplete")
        gc = float(frac["Gc"])
        l1 = float(frac["l1"])
        yc, l2 = calibrate(gc, l1)
    elif has_lf_pair:
        if frac.get("Yc") is None or frac.get("l2") is None:
            raise ConfigError("fracture pair (Yc, l2) is incomplete")
        yc = float(frac["Yc"])
        l2 = float(frac["l2"])
        gc, l1 = calibrate_inverse(yc, l2)
    else:
        raise ConfigError("fracture parameters missing: give (Gc, l1) or (Yc, l2)")

    bcs = []
    if cp.has_section("bcs"):
        for name, value in cp["bcs"].items():
            parts = value.split()
            if len(parts) != 3 or parts[1] not in ("x", "y"):
                raise ConfigError(
                    f"bc {name!r} must read '<node_set> <x|y> <coef>', got {value!r}"
                )
            bcs.append(DirichletBC(node_set=parts[0], component=parts[1], coef=float(parts[2])))

    time_sec = cp["time"]
    out = cp["output"] if cp.has_section("output") else {}
    solver = cp["solver"] if cp.has_section("solver") else {}
    pin = tuple(frac.get("pin_damage", "").split())
    h_elem_raw = frac.get("h_elem")

    cfg = RunConfig(
        mesh_path=cp["mesh"]["path"],
        E=e_list,
        tau=tau_list,
        nu=float(cp["material"]["nu"]),
        beta=beta,
        regularization=reg,
        gc_j_m2=gc,
        l1=l1,
        yc_j_m3=yc,
        l2=l2,
        bcs=bcs,
        rate=float(time_sec["rate"]),
        dt=float(time_sec["dt"]),
        t_end=float(time_sec["t_end"]),
        output_dir=out.get("dir", "out"),
        snapshot_every=int(out.get("snapshot_every", "0")),
        gc_correction=_bool(frac.get("gc_correction", "on"), "fracture.gc_correction"),
        h_elem=float(h_elem_raw) if h_elem_raw not in (None, "", "auto") else None,
        pin_damage=pin,
        stag_tol=float(solver.get("stag_tol", "1e-3")),
        max_stag=int(solver.get("max_stag", "100")),
        newton_tol=float(solver.get("newton_tol", "1e-8")),
        newton_max_iter=int(solver.get("newton_max_iter", "50")),
        active_tol=float(solver.get("active_tol", "1e-8")),
        halve_dt_on_failure=_bool(
            solver.get("halve_dt_on_failure", "off"), "solver.halve_dt_on_failure"
        ),
    )
    if cfg.dt <= 0.0 or cfg.t_end < 0.0:
        raise ConfigError("dt must be positive and t_end non-negative")
    cfg.material()  # validates moduli/tau/nu/beta eagerly
    return cfg

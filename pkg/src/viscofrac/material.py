"""Generalized Kelvin-Voigt constitutive kernel.

A free spring (index 0) in series with n Kelvin-Voigt units describes the
viscoelastic behaviour; damage degrades the stored energy through
g(d) = (1-d)^2 and dissipates through h(d) = 2 d^2. All quantities live in
the mm / s / MPa / N unit system: energies per volume are MPa = mJ/mm^3,
fracture toughness is N/mm and the volumetric critical energy release rate
is MPa.

Voigt convention throughout: (exx, eyy, gxy) with engineering shear
gxy = 2*exy, so 0.5 * e^T C e reproduces mu*e:e + lambda/2*tr(e)^2.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from ._kernels import eigen_split_batch
from .errors import MaterialError

# user-facing fracture parameters arrive in SI-flavoured units
J_PER_M2_TO_N_PER_MM = 1.0e-3
J_PER_M3_TO_MPA = 1.0e-6


def degradation(d):
    """Stiffness degradation g(d) = (1-d)^2."""
    return (1.0 - d) ** 2


def softening(d):
    """Damage dissipation density multiplier h(d) = 2*d^2."""
    return 2.0 * d * d


@dataclass(frozen=True)
class GKVMaterial:
    """Material data for the Kelvin-Voigt chain plus fracture parameters.

    Parameters
    ----------
    E : tuple of float
        Young moduli (MPa) of the n+1 springs; index 0 is the free spring.
    tau : tuple of float
        Retardation times (s) of the n Kelvin-Voigt units.
    nu : float
        Poisson ratio, shared by every unit; 0 <= nu < 0.5.
    beta : int
        1 for symmetric tension/compression, 0 to protect the compressive
        spectral part of the energy from damage.
    gc : float
        Fracture toughness (N/mm).
    l1 : float
        Phase-field length (mm).
    yc : float
        Critical energy release rate per unit volume (MPa).
    l2 : float
        Lip-field length (mm).
    """

    E: tuple[float, ...]
    tau: tuple[float, ...]
    nu: float
    beta: int = 1
    gc: float = 0.0
    l1: float = 0.0
    yc: float = 0.0
    l2: float = 0.0

    def __post_init__(self):
        if len(self.E) < 1:
            raise MaterialError("need at least the free spring modulus E_0")
        if len(self.tau) != len(self.E) - 1:
            raise MaterialError(
                f"expected {len(self.E) - 1} retardation times for {len(self.E)} springs, "
                f"got {len(self.tau)}"
            )
        if any(e <= 0.0 for e in self.E):
            raise MaterialError("all moduli E_i must be positive")
        if any(t <= 0.0 for t in self.tau):
            raise MaterialError("all retardation times tau_i must be positive")
        if not 0.0 <= self.nu < 0.5:
            raise MaterialError(f"Poisson ratio must lie in [0, 0.5), got {self.nu}")
        if self.beta not in (0, 1):
            raise MaterialError(f"beta must be 0 or 1, got {self.beta}")

    @property
    def n_units(self) -> int:
        """Number of Kelvin-Voigt units (excluding the free spring)."""
        return len(self.tau)

    def lame(self, i: int) -> tuple[float, float]:
        """(lambda_i, mu_i) of spring i."""
        return lame_constants(self.E[i], self.nu)

    def stiffness_voigt(self, i: int) -> np.ndarray:
        """Plane-strain stiffness of spring i as a 3x3 Voigt matrix."""
        lam, mu = self.lame(i)
        return np.array(
            [[lam + 2.0 * mu, lam, 0.0], [lam, lam + 2.0 * mu, 0.0], [0.0, 0.0, mu]]
        )

    def stiffness_all(self) -> np.ndarray:
        """Stacked (n+1, 3, 3) Voigt stiffnesses of every spring."""
        return np.stack([self.stiffness_voigt(i) for i in range(len(self.E))])


def lame_constants(E: float, nu: float) -> tuple[float, float]:
    """Lame constants from Young modulus and Poisson ratio.

    lambda = E*nu / ((1+nu)(1-2nu)), mu = E / (2(1+nu)).
    """
    if nu >= 0.5:
        raise MaterialError("nu = 0.5 is incompressible; Lame lambda diverges")
    lam = E * nu / ((1.0 + nu) * (1.0 - 2.0 * nu))
    mu = E / (2.0 * (1.0 + nu))
    return lam, mu


def eigen_split(eps: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Spectral split of one or many Voigt strains into PSD/NSD parts.

    Accepts shape (3,) or (n, 3); the two parts sum back to the input and
    are mutually orthogonal (built on a shared eigenbasis).
    """
    eps = np.asarray(eps, dtype=np.float64)
    single = eps.ndim == 1
    plus, minus = eigen_split_batch(np.atleast_2d(eps))
    if single:
        return plus[0], minus[0]
    return plus, minus


def _voigt_dot(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    """Tensor contraction a:b for Voigt-engineering vectors."""
    return a[..., 0] * b[..., 0] + a[..., 1] * b[..., 1] + 0.5 * a[..., 2] * b[..., 2]


def _voigt_trace(a: np.ndarray) -> np.ndarray:
    return a[..., 0] + a[..., 1]


def free_energy(eps_units: np.ndarray, d, mat: GKVMaterial):
    """Free energy density and its damage-driving / protected split.

    Parameters
    ----------
    eps_units : (n+1, 3) or (N, n+1, 3) array
        Voigt strain of every spring, free spring first.
    d : float or (N,) array
        Damage in [0, 1].
    mat : GKVMaterial

    Returns
    -------
    psi, psi_plus, psi_minus
        For beta=1: psi = g(d)*psi_plus with psi_minus = 0 and psi_plus the
        full undamaged energy. For beta=0: psi = g(d)*psi_plus + psi_minus
        with the compressive spectral mu-part protected; the lambda*tr^2
        term is always degraded.
    """
    eps_units = np.asarray(eps_units, dtype=np.float64)
    single = eps_units.ndim == 2
    eu = eps_units[None] if single else eps_units
    d_arr = np.asarray(d, dtype=np.float64)
    if np.any(d_arr < 0.0) or np.any(d_arr > 1.0):
        raise MaterialError("damage must lie in [0, 1]")
    nunits = len(mat.E)
    if eu.shape[1] != nunits:
        raise MaterialError(f"expected {nunits} unit strains, got {eu.shape[1]}")

    psi_plus = np.zeros(eu.shape[0])
    psi_minus = np.zeros(eu.shape[0])
    for i in range(nunits):
        lam, mu = mat.lame(i)
        e = eu[:, i, :]
        tr = _voigt_trace(e)
        if mat.beta == 1:
            psi_plus += mu * _voigt_dot(e, e) + 0.5 * lam * tr**2
        else:
            plus, minus = eigen_split_batch(np.ascontiguousarray(e))
            psi_plus += mu * _voigt_dot(plus, plus) + 0.5 * lam * tr**2
            psi_minus += mu * _voigt_dot(minus, minus)
    psi = degradation(d_arr) * psi_plus + psi_minus
    if single:
        return float(psi[0]), float(psi_plus[0]), float(psi_minus[0])
    return psi, psi_plus, psi_minus


def viscous_dissipation_increment(deps_units: np.ndarray, dt: float, mat: GKVMaterial):
    """Dissipated energy density of one implicit time step.

    dt * phi_v(deps/dt) = sum_i (tau_i/dt) * (mu_i deps_i:deps_i
    + lambda_i/2 tr(deps_i)^2); non-negative by construction.

    ``deps_units`` holds the internal-strain increments of the n KV units,
    shape (n, 3) or (N, n, 3).
    """
    if dt <= 0.0:
        raise MaterialError("dt must be positive")
    deps = np.asarray(deps_units, dtype=np.float64)
    single = deps.ndim == 2
    de = deps[None] if single else deps
    if de.shape[1] != mat.n_units:
        raise MaterialError(f"expected {mat.n_units} strain increments, got {de.shape[1]}")
    out = np.zeros(de.shape[0])
    for i in range(mat.n_units):
        lam, mu = mat.lame(i + 1)
        inc = de[:, i, :]
        out += (mat.tau[i] / dt) * (
            mu * _voigt_dot(inc, inc) + 0.5 * lam * _voigt_trace(inc) ** 2
        )
    return float(out[0]) if single else out


def calibrate(gc_j_per_m2: float, l1_mm: float) -> tuple[float, float]:
    """Lip-field fracture parameters equivalent to a phase-field pair.

    The linear lip-damage profile of half-width l2 carries the same fracture
    energy per unit crack advance as the exponential phase-field profile
    when l2 = 2*l1 and Yc = 3*Gc/(4*l2).

    Takes Gc in J/m^2 and l1 in mm; returns (Yc in J/m^3, l2 in mm).
    """
    if gc_j_per_m2 <= 0.0 or l1_mm <= 0.0:
        raise MaterialError("Gc and l1 must be positive")
    l2 = 2.0 * l1_mm
    gc = gc_j_per_m2 * J_PER_M2_TO_N_PER_MM
    yc = 3.0 * gc / (4.0 * l2)
    return yc / J_PER_M3_TO_MPA, l2


def calibrate_inverse(yc_j_per_m3: float, l2_mm: float) -> tuple[float, float]:
    """Phase-field pair (Gc in J/m^2, l1 in mm) from lip-field parameters."""
    if yc_j_per_m3 <= 0.0 or l2_mm <= 0.0:
        raise MaterialError("Yc and l2 must be positive")
    l1 = 0.5 * l2_mm
    yc = yc_j_per_m3 * J_PER_M3_TO_MPA
    gc = 4.0 * l2_mm * yc / 3.0
    return gc / J_PER_M2_TO_N_PER_MM, l1


def effective_gc(gc: float, h_elem: float, l1: float) -> float:
    """Mesh-corrected toughness Gc / (1 + h/(4*l1)).

    Compensates the overestimation of dissipated energy on meshes that do
    not resolve the exponential damage profile; any consistent units.
    """
    if gc <= 0.0 or h_elem <= 0.0 or l1 <= 0.0:
        raise MaterialError("Gc, h_elem and l1 must be positive")
    kappa = h_elem / (4.0 * l1)
    return gc / (1.0 + kappa)

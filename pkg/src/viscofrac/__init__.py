"""viscofrac: quasi-static fracture of viscoelastic solids in 2D plane strain.

A Generalized Kelvin-Voigt bulk with two interchangeable damage
regularizations, phase-field (AT2 with a history field) and lip-field
(Lipschitz-constrained local damage), calibrated to carry the same fracture
energy per unit crack advance.
"""

from ._kernels import BACKEND as kernel_backend
from .material import GKVMaterial, calibrate, calibrate_inverse, effective_gc
from .mech import DirichletBC
from .mesh import BaseMesh, LipMesh, build_lip_mesh, load_msh, shortest_path_distances
from .sim import EnergyLedger, SimState, Simulation

__version__ = "0.1.0"

__all__ = [
    "BaseMesh",
    "DirichletBC",
    "EnergyLedger",
    "GKVMaterial",
    "LipMesh",
    "SimState",
    "Simulation",
    "build_lip_mesh",
    "calibrate",
    "calibrate_inverse",
    "effective_gc",
    "kernel_backend",
    "load_msh",
    "shortest_path_distances",
    "__version__",
]

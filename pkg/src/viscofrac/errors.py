"""Exception types raised across the package."""


class ViscofracError(Exception):
    """Base class for all package errors."""


class MshParseError(ViscofracError):
    """Malformed or unsupported MSH input; message names the offending line."""


class LipMeshError(ViscofracError):
    """Lip-mesh construction failed (too few elements, all triangles discarded)."""


class MaterialError(ViscofracError):
    """Invalid material parameters or out-of-domain constitutive input."""


class SolverError(ViscofracError):
    """A linear or convex solve failed (singular system, non-convergence)."""


class StepError(ViscofracError):
    """A time step could not be completed; carries diagnostic state."""

    def __init__(self, message, diagnostics=None):
        super().__init__(message)
        self.diagnostics = diagnostics or {}


class ConfigError(ViscofracError):
    """Invalid or inconsistent run configuration."""

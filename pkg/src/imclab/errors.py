"""Exception types shared across the package."""


class ReducibleChainError(ValueError):
    """The kernel does not have a unique stationary distribution."""


class NonGeometricDecayError(RuntimeError):
    """Observed kernel convergence does not decay geometrically."""


class ConfigurationError(ValueError):
    """An experiment or chain configuration is internally inconsistent."""


class InconsistencyError(RuntimeError):
    """An oracle prediction contradicts the simulated data structurally."""

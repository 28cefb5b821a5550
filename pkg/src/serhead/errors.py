"""Error classes shared across the package."""


class DimensionError(ValueError):
    """Tensor shapes are incompatible with the requested operation."""


class DomainError(ValueError):
    """Operation applied outside its mathematical domain (log of <= 0, etc.)."""


class ContractError(ValueError):
    """An API precondition was violated (e.g. backward on a non-scalar)."""


class FlakyCheckError(RuntimeError):
    """The function handed to a gradient check is not deterministic."""


class TensorFormatError(ValueError):
    """Tensor container has a bad magic, version, or dtype code."""


class TensorCorruptionError(ValueError):
    """Tensor container payload does not match its declared dimensions."""


class ManifestError(ValueError):
    """Manifest validation failed; message lists the offending line numbers."""


class ConfigError(ValueError):
    """Run configuration failed validation (unknown key, bad value, ...)."""


class DivergenceError(RuntimeError):
    """Training produced a non-finite loss or gradient."""

"""Exception types shared across the package.

All of these are validation-style failures (bad shapes, bad config, bad
files). The CLI maps them to exit code 1; anything else is a runtime
failure and exits 2.
"""


class DimensionError(ValueError):
    """Shape mismatch in a tensor primitive or layer."""


class ContractError(ValueError):
    """An operation was called outside its contract (non-scalar loss, etc.)."""


class InputError(ValueError):
    """Invalid user-facing input (empty phrase, bad gold index, ...)."""


class ConfigError(ValueError):
    """Invalid or unknown configuration key/value."""


class GenerationError(RuntimeError):
    """Dataset generation could not satisfy its constraints."""


class LoadError(ValueError):
    """A manifest, checkpoint, or fixture failed validation on load."""

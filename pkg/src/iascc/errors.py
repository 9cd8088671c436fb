class ConfigError(ValueError):
    """Raised for invalid scene or experiment configuration."""


class ProgressiveOrderError(ValueError):
    """A layer was supplied without all of its prerequisite layers."""


class ProgramCorrupted(ValueError):
    """A token program failed validation and must be retransmitted."""

class ConfigurationError(ValueError):
    """Invalid scenario, decomposition or harness configuration."""


class SimulationFault(RuntimeError):
    """Non-finite input or state reached the simulator or controller."""


class UsageError(RuntimeError):
    """API called out of order, e.g. stepping a finished episode."""


class TrainingDivergence(RuntimeError):
    """A learner produced a non-finite loss."""


class ArtifactMismatch(RuntimeError):
    """A checkpoint or dataset does not match the configuration it is used with."""

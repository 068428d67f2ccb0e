class ConfigurationError(ValueError):
    """Invalid configuration or parameters."""


class DatasetError(RuntimeError):
    """A dataset file could not be read."""


class MissingArtifactError(RuntimeError):
    """A pipeline stage needs output from a stage that has not run yet."""

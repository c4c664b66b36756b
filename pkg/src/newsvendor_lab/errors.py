class ParameterDomainError(ValueError):
    """A model parameter lies outside the domain where the model is defined."""


class EmptyHistoryError(ValueError):
    """A data-driven quantity was requested from an empty demand history."""


class ConfigError(ValueError):
    """A configuration record failed validation.

    ``path`` is the dotted key path of the offending entry (``"demand.alpha"``),
    used by the CLI to point at the line in the source file.
    """

    def __init__(self, message: str, path: str | None = None):
        super().__init__(message)
        self.path = path

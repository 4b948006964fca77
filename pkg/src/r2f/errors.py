"""Exception types shared across the package."""


class R2FError(Exception):
    """Base class for every error raised by this package."""


class InvalidArgument(R2FError, ValueError):
    pass


class UnknownConcept(R2FError, KeyError):
    def __init__(self, name, known):
        self.name = name
        self.known = sorted(known)
        super().__init__(f"unknown concept {name!r}; registered: {', '.join(self.known)}")

    def __str__(self):
        return self.args[0]


class RenderError(R2FError):
    pass


class DisconnectedError(R2FError):
    pass


class ResourceLimitError(R2FError):
    pass


class UnreachableGoal(R2FError):
    pass


class NoPath(R2FError):
    pass


class UnparseableInstruction(R2FError, ValueError):
    pass


class ConfigurationError(R2FError, ValueError):
    pass

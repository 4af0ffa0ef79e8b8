"""Exception types shared across the package."""


class RejectedInputError(ValueError):
    """Input violates a documented precondition."""


class ParseError(RejectedInputError):
    """A text file could not be parsed.

    ``lineno`` is 1-based and may be ``None`` when the failure is not tied to
    a single line.
    """

    def __init__(self, message, lineno=None, path=None):
        self.lineno = lineno
        self.path = path
        where = ""
        if path is not None:
            where += f"{path}"
        if lineno is not None:
            where += f":{lineno}"
        super().__init__(f"{where}: {message}" if where else message)


class NumericError(ArithmeticError):
    """A computation produced a non-finite value."""


class GradientCheckError(NumericError):
    """Loss was not finite while probing one coordinate."""

    def __init__(self, name, index, value):
        self.name = name
        self.index = index
        self.value = value
        super().__init__(f"non-finite loss {value!r} at {name}[{index}]")

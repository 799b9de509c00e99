"""Exception types shared across the package."""


class ValidationError(ValueError):
    """Bad user input: malformed data, out-of-range arguments, bad config."""


class ParseError(ValidationError):
    def __init__(self, message, line=None):
        self.line = line
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)


class IntegrityError(ValidationError):
    """Cross-reference failure, e.g. an edge pointing at an unknown segment."""


class ContractViolation(RuntimeError):
    """Internal precondition broken by the caller (shape mismatch, misuse)."""


class UnsupportedOperation(RuntimeError):
    pass


class TrainingError(RuntimeError):
    pass

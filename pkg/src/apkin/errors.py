"""Exception types shared across the package."""


class InvalidKernelError(ValueError):
    """A scattering kernel violates its declared bounds or symmetry."""


class NumericalFailureError(RuntimeError):
    """A linear solve failed or a field stopped being finite.

    ``face_index`` and ``step_index`` locate the failure when known.
    """

    def __init__(self, message, face_index=None, step_index=None):
        if face_index is not None:
            message = f"{message} (face {face_index})"
        if step_index is not None:
            message = f"{message} (step {step_index})"
        super().__init__(message)
        self.face_index = face_index
        self.step_index = step_index


class ConfigError(ValueError):
    """A run configuration file is malformed or violates a bound."""

    def __init__(self, message, line=None, key=None):
        parts = []
        if line is not None:
            parts.append(f"line {line}")
        if key is not None:
            parts.append(f"key '{key}'")
        prefix = ", ".join(parts)
        super().__init__(f"{prefix}: {message}" if prefix else message)
        self.line = line
        self.key = key

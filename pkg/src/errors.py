"""
Exception types shared by every module.

Each error records the module that raised it and, when there is one, the
offending parameter, so the CLI can print a structured one-line message.
"""


class VibronicError(Exception):
    """Base class for all errors raised by the package."""

    def __init__(self, message, module=None, parameter=None):
        super().__init__(message)
        self.message = message
        self.module = module
        self.parameter = parameter

    def __str__(self):
        text = self.message
        if self.module:
            text = f"[{self.module}] {text}"
        if self.parameter:
            text = f"{text} (parameter={self.parameter})"
        return text


class ConfigurationError(VibronicError, ValueError):
    """Invalid configuration value, grid specification or missing input file."""


class DomainError(VibronicError, ValueError):
    """Input outside the domain where a quantity is defined."""


class NumericError(VibronicError):
    """Eigensolver or other numerical kernel failed."""


class CalibrationError(VibronicError):
    """Soft-core softening parameter could not be bracketed or converged."""


class ExtractionError(VibronicError):
    """Vibrational extrema could not be located consistently with the node count."""


class FitError(VibronicError):
    """Rotation-angle least-squares fit did not converge."""

    def __init__(self, message, module=None, parameter=None, residual_history=()):
        super().__init__(message, module=module, parameter=parameter)
        self.residual_history = list(residual_history)


class AssemblyError(VibronicError):
    """Born-Huang coupling matrix failed its symmetry check."""

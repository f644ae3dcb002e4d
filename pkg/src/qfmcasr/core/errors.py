"""Exception hierarchy for qfm-casr.

Every error carries the process exit code the CLI reports for it.
"""

from __future__ import annotations

from typing import List, Optional, Sequence, Tuple


class QFMCASRError(Exception):
    """Base class for all qfm-casr errors."""

    exit_code: int = 1


# =============================================================================
# Configuration and I/O
# =============================================================================

class ConfigError(QFMCASRError):
    """Raised when an experiment config fails schema validation.

    Attributes:
        problems: (location, message) pairs, e.g. ("signals.0.frequency_hz", "...")
        line: 1-based line number for YAML syntax errors
    """

    exit_code = 3

    def __init__(
        self,
        message: str,
        problems: Optional[Sequence[Tuple[str, str]]] = None,
        line: Optional[int] = None,
    ):
        self.problems: List[Tuple[str, str]] = list(problems or [])
        self.line = line
        details = "; ".join(f"{loc}: {msg}" for loc, msg in self.problems)
        if line is not None:
            message = f"{message} (line {line})"
        super().__init__(f"{message}: {details}" if details else message)


class MalformedFileError(QFMCASRError):
    """Raised when a trace or spectrum file cannot be parsed."""

    exit_code = 4

    def __init__(self, path: str, reason: str, row: Optional[int] = None):
        self.path = path
        self.row = row
        self.reason = reason
        where = f"{path}, row {row}" if row is not None else path
        super().__init__(f"{where}: {reason}")


class AcceptanceError(QFMCASRError):
    """Raised when an oracle comparison falls outside its acceptance bounds."""

    exit_code = 5


# =============================================================================
# Numerical preconditions
# =============================================================================

class NumericalError(QFMCASRError):
    """A numerical precondition of an operation was violated."""

    exit_code = 6


class PoleError(NumericalError):
    """A drive frequency sits on the spin resonance."""


class DegenerateFrequencyError(NumericalError):
    """Signal and bias frequencies are too close to define an effective tone."""


class StepTooLargeError(NumericalError):
    """Integrator step violates the sampling constraint of the fastest frequency."""


class UnwrapAmbiguityError(NumericalError):
    """Phase jumps between consecutive samples are too large to unwrap."""


class FitConvergenceError(NumericalError):
    """Least-squares fit did not converge."""


class TurningPointNotFoundError(NumericalError):
    """Amplitude sweep never reached the first turning point."""


class InsufficientBinsError(NumericalError):
    """Too few spectral bins remain after exclusions."""

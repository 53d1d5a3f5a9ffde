"""Exception hierarchy shared across the package.

Two branches matter for the CLI exit codes: ``InputError`` (bad files,
bad flags, broken gene/CpG mapping) and ``FitError`` (numerical or
convergence trouble while fitting).
"""


class JointmixError(Exception):
    """Base class for all package errors."""


class InputError(JointmixError):
    """Invalid input data or parameters."""


class FormatError(InputError):
    """Malformed table: wrong header, column count, or value type."""


class MappingError(InputError):
    """CpG record references a gene that does not exist or mismatches it."""


class DuplicateIdError(InputError):
    """Duplicate gene or CpG identifier within one table."""


class DataDomainError(InputError):
    """Value outside its legal domain (negative count, beta outside [0,1])."""


class ParameterError(InputError):
    """Out-of-range algorithm parameter."""


class FitError(JointmixError):
    """Numerical or convergence failure during model fitting."""


class DegenerateClusterError(FitError):
    """A mixture component lost all of its mass.

    ``layer`` is ``"gene"`` or ``"cpg"``; ``index`` is the 0-based
    component index.
    """

    def __init__(self, layer, index, message=None):
        self.layer = layer
        self.index = index
        super().__init__(
            message or f"degenerate {layer} cluster {index}: total responsibility below threshold"
        )


class NumericalError(FitError):
    """Non-finite quantity encountered; carries the offending entity id."""

    def __init__(self, entity, message=None):
        self.entity = entity
        super().__init__(message or f"non-finite responsibility for {entity}")


class UndefinedColumnError(FitError):
    """A CpG cluster has zero marginal mass, so inversion is undefined."""

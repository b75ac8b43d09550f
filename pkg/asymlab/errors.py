"""Exceptions raised by asymlab."""


class AsymlabError(Exception):
    """Base class of all asymlab exceptions."""


class ContractViolationError(AsymlabError, ValueError):
    """Raised when an argument breaks the contract of an operation.

    Typical causes are out-of-range state/action/observation indices or a
    policy returning something that is not a distribution.
    """


class UnrealizableHistoryError(AsymlabError):
    """Raised when a history (or history-state pair) has zero probability."""

    def __init__(self, message, history=None):
        super().__init__(message)
        self.history = history


class IllDefinedValueError(AsymlabError):
    """Raised when a state value is requested in a regime where it is not
    well defined, i.e. the observation function depends on (s, a)."""


class UnreachableStateError(AsymlabError):
    """Raised when a timed value is requested for an unreachable (t, s)."""


class EnumerationBudgetError(AsymlabError):
    """Raised when an exhaustive enumeration grows beyond its budget."""


class UnsupportedSizeError(AsymlabError, ValueError):
    """Raised when an environment is requested with an unsupported size."""


class PomdpSyntaxError(AsymlabError):
    """Raised when a POMDP file can not be parsed.

    Attributes:
        line (int): 1-based line number of the offending line.
        column (int): 1-based column of the offending token.
    """

    def __init__(self, message, line, column=1):
        super().__init__(f"line {line}, column {column}: {message}")
        self.line = line
        self.column = column


class PomdpSemanticError(AsymlabError):
    """Raised when a parsed POMDP file describes invalid tables.

    Attributes:
        table (str): The table holding the problem, e.g. 'T' or 'discount'.
        coordinates (tuple): Indices of the offending row, if any.
    """

    def __init__(self, message, table, coordinates=()):
        super().__init__(f"{table}{list(coordinates)}: {message}")
        self.table = table
        self.coordinates = tuple(coordinates)


class ShapeError(AsymlabError, ValueError):
    """Raised when tensors of incompatible shapes meet."""


class TrainingDivergenceError(AsymlabError):
    """Raised when a loss turns non-finite during training.

    Attributes:
        diagnostics (dict): Loss components, timestep and parameter norms
            at the time of divergence.
        curve (LearningCurve): The learning curve recorded so far, attached
            by the training loop before re-raising.
    """

    def __init__(self, message, diagnostics=None, curve=None):
        super().__init__(message)
        self.diagnostics = diagnostics or {}
        self.curve = curve


class CycleError(AsymlabError):
    """Raised when an action would result in a cycle in an experiment graph."""


class PipelineProcessError(AsymlabError):
    """Raised when a node can not be shipped to a worker process."""


class ConfigError(AsymlabError):
    """Raised for invalid configuration files, keys or values."""

"""Exception types raised by the scoregraph package."""


class ScoreGraphError(Exception):
    """Base class for all scoregraph errors."""


class ConfigError(ScoreGraphError):
    """Invalid configuration file, flag, or override."""


class DuplicateEdge(ScoreGraphError):
    """The same directed evaluation appears twice."""


class SelfLoop(ScoreGraphError):
    """A node evaluating itself is not part of the model."""


class IsolatedInNode(ScoreGraphError):
    """Some node has no incoming evaluation (in-degree zero)."""


class IndexOutOfRange(ScoreGraphError):
    """Node, state, or score index outside its declared range."""


class EdgeBudgetOutOfRange(ScoreGraphError):
    """Requested edge count not in [N, N^2 - N]."""


class UnknownNode(ScoreGraphError):
    """Node id not present in the graph."""


class InfeasibleParams(ScoreGraphError):
    """Parameter or hyperparameter outside the family's feasible set."""


class BudgetExceeded(ScoreGraphError):
    """Exact enumeration would exceed the term budget."""


class DegeneratePosterior(ScoreGraphError):
    """Every state has zero posterior mass; no classification possible."""


class ConnectivityViolation(ScoreGraphError):
    """A communication schedule fails windowed strong connectivity."""


class ScheduleInvalid(ScoreGraphError):
    """A schedule handed to the distributed runner failed validation."""

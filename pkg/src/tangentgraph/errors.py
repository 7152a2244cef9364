"""Exception types shared across the toolkit."""


class GeometryError(Exception):
    """Base class for all toolkit-specific failures."""


class PreconditionViolated(GeometryError):
    """An operation's stated hypothesis does not hold for the given input.

    ``index`` identifies the offending probe/sample when applicable.
    """

    def __init__(self, message="", index=None):
        super().__init__(message)
        self.index = index


class RankDeficient(GeometryError):
    """Jacobian rank below the intrinsic dimension: not an immersion here."""


class UnknownEntry(GeometryError):
    """Requested zoo entry name is not registered."""


class InvalidParams(GeometryError):
    """Zoo or report parameters fail validation."""


class BoundaryEscape(GeometryError):
    """A component reached a chart-domain boundary with no continuing chart.

    The immersion data cannot certify the full component in this case.
    """


class NoConvergence(GeometryError):
    """Height solver did not reach the residual tolerance."""


class LeftRegion(GeometryError):
    """Height solver iterate exited the component: the sheet ends there."""


class NotAGraph(GeometryError):
    """Norms requested for a sample with uncovered or multi-sheet nodes."""


class Inconclusive(GeometryError):
    """A property verdict could not be decided (e.g. boundary escape)."""


class MonotonicityViolation(GeometryError):
    """Radius monotonicity spot-check failed; bisection would be unsound."""


class ProbeHypothesisFailed(GeometryError):
    """Probe-point hypothesis failed during derivative certification."""

    def __init__(self, node, probe_index, message=""):
        super().__init__(message)
        self.node = node
        self.probe_index = probe_index

"""Exception types raised across the package."""


class DmalaError(Exception):
    """Base class for all package errors."""


class DisconnectedGraph(DmalaError):
    pass


class SchemeGraphMismatch(DmalaError):
    pass


class NonSymmetric(DmalaError):
    pass


class DimensionMismatch(DmalaError, ValueError):
    pass


class ShapeMismatch(DmalaError, ValueError):
    pass


class NonSPDPrecision(DmalaError, ValueError):
    pass


class LabelOutOfRange(DmalaError, ValueError):
    pass


class InsufficientClasses(DmalaError, ValueError):
    pass


class InsufficientFeatures(DmalaError, ValueError):
    pass


class EmptyDataWarning(UserWarning):
    """A shard was built without data and only carries its prior share."""


class NonFiniteState(DmalaError, FloatingPointError):
    """A sampler produced NaN or Inf; carries the offending iteration."""

    def __init__(self, iteration, detail=""):
        self.iteration = iteration
        self.detail = detail
        msg = f"non-finite state at iteration {iteration}"
        if detail:
            msg += f": {detail}"
        super().__init__(msg)


class EmptyAfterBurnIn(DmalaError, ValueError):
    pass


class MissingDualEvaluation(DmalaError, KeyError):
    pass


class ConfigParseError(DmalaError, ValueError):
    def __init__(self, message, line=None, key=None):
        self.line = line
        self.key = key
        where = []
        if line is not None:
            where.append(f"line {line}")
        if key is not None:
            where.append(f"key {key!r}")
        prefix = f"[{', '.join(where)}] " if where else ""
        super().__init__(prefix + message)


class ConfigValidationError(DmalaError, ValueError):
    pass


class SchemaVersionMismatch(DmalaError):
    pass

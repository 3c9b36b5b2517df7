"""Exception types raised across the warehouse engine."""


class XWarehouseError(Exception):
    """Base class for every data error the engine reports."""


class MalformedSchema(XWarehouseError):
    pass


class MalformedDocument(XWarehouseError):
    pass


class CannotPruneRoot(XWarehouseError, ValueError):
    pass


class CannotGraftRoot(XWarehouseError, ValueError):
    pass


class UnknownNode(XWarehouseError, KeyError):
    pass


class InvalidTree(XWarehouseError):
    pass


class InvalidMCM(XWarehouseError):
    pass


class InconsistentFact(XWarehouseError):
    pass


class IoFailure(XWarehouseError):
    pass


class MalformedStoreFile(XWarehouseError):
    pass


class UnknownAttribute(XWarehouseError, KeyError):
    pass


class UnknownMeasure(XWarehouseError, KeyError):
    pass


class TypeMismatch(XWarehouseError, TypeError):
    pass


class HierarchyMismatch(XWarehouseError):
    pass


class DanglingCoordinate(XWarehouseError):
    pass


class StaleIndex(XWarehouseError):
    pass


class NotCovered(XWarehouseError):
    """No materialized view can answer the query."""


class TooFewIndividuals(XWarehouseError, ValueError):
    pass


class BadK(XWarehouseError, ValueError):
    pass


class EmptyDimension(XWarehouseError):
    pass


class UnknownPath(XWarehouseError):
    pass


class UnreadableSource(XWarehouseError):
    pass

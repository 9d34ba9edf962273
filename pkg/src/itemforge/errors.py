"""Exception hierarchy for the engine.

Every error carries a stable ``code`` string (also its class name) used by the
CLI for stderr messages and by the API for wire mapping:

    NotFound       -> 404
    InvalidRequest -> 422
    Conflict       -> 409
    Unauthenticated-> 401
"""

from __future__ import annotations


class ItemForgeError(Exception):
    """Base class; ``code`` is the stable machine-readable identifier."""

    def __init__(self, message: str = "", **details):
        super().__init__(message or self.__class__.__name__)
        self.message = message or self.__class__.__name__
        self.details = details

    @property
    def code(self) -> str:
        return self.__class__.__name__


class NotFound(ItemForgeError):
    pass


class UnknownItem(NotFound):
    pass


class UnknownDescription(NotFound):
    pass


class UnknownSchema(NotFound):
    pass


class UnknownAgent(NotFound):
    pass


class UnknownViewpoint(NotFound):
    pass


class UnknownVersion(NotFound):
    pass


class UnknownChild(NotFound):
    pass


class NoOutcomes(NotFound):
    pass


class InvalidRequest(ItemForgeError):
    """Client supplied something the kernel rejects as invalid."""


class TypeMismatch(InvalidRequest):
    pass


class ImmutableProperty(InvalidRequest):
    pass


class TypeConstraintViolation(InvalidRequest):
    pass


class MemberNotFound(InvalidRequest):
    pass


class OutcomeRequired(InvalidRequest):
    pass


class OutcomeInvalid(InvalidRequest):
    def __init__(self, message: str = "", violations=None, **details):
        super().__init__(message, **details)
        self.violations = violations or []


class InvalidDefinition(InvalidRequest):
    def __init__(self, message: str = "", violations=None, **details):
        super().__init__(message, **details)
        self.violations = violations or []


class InvalidResultingGraph(InvalidRequest):
    def __init__(self, message: str = "", violations=None, **details):
        super().__init__(message, **details)
        self.violations = violations or []


class UnresolvableSelector(InvalidRequest):
    pass


class MissingAgent(InvalidRequest):
    pass


class SeqOutOfRange(InvalidRequest):
    pass


class RoutingError(InvalidRequest):
    pass


class UnresolvedReference(RoutingError):
    pass


class PredicateTypeError(RoutingError):
    pass


class NoBranchSelected(RoutingError):
    pass


class Conflict(ItemForgeError):
    pass


class JobNotEnabled(Conflict):
    pass


class RoleMismatch(Conflict):
    pass


class SequenceConflict(Conflict):
    pass


class DuplicateName(Conflict):
    pass


class TouchesExecutedStep(Conflict):
    pass


class Unauthenticated(ItemForgeError):
    pass


class StorageError(ItemForgeError):
    pass


class StoreUnavailable(StorageError):
    pass


class IoFailure(StorageError):
    pass


class FormatVersionMismatch(StorageError):
    pass


class CorruptLayout(StorageError):
    pass


class StaleSnapshot(StorageError):
    pass

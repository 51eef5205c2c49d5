"""Error types raised by the runtime, the hierarchy builder, and the DSL."""


class DmikitError(Exception):
    """Base class for all errors raised by this package."""


# -- exception-hierarchy construction and lookup -----------------------------

class HierarchyError(DmikitError):
    pass


class CycleError(HierarchyError):
    """A parent chain loops instead of reaching the root."""


class DuplicateName(HierarchyError):
    """An exception name was declared more than once."""


class ReservedNameViolation(HierarchyError):
    """A reserved exception id was redefined, or Abort/Failure given children."""


class UnknownException(HierarchyError):
    """An exception id is not present in the hierarchy."""


# -- interaction definition and activation ------------------------------------

class DefinitionError(DmikitError):
    pass


class HandlerForAbortOrFailure(DefinitionError):
    """Handlers may only be declared for internally raisable exceptions."""


class MissingRoleBody(DefinitionError):
    """A handler (or the normal bodies) does not cover every role."""


class UnknownExceptionInHandler(DefinitionError):
    """A handler key is absent from the bound exception hierarchy."""


class GuardFalse(DmikitError):
    """The guard did not hold on the entry snapshot; the activation never began."""


class ParticipantBusy(DmikitError):
    """A participant is already engaged in another activation."""


class DuplicateRaise(DmikitError):
    """A role raised a second exception within the same phase."""


class PhaseViolation(DmikitError):
    """An operation was attempted in a phase that does not permit it."""


class NestingLimitExceeded(DmikitError):
    """A nested activation exceeded the configured depth bound."""


# -- coordination -------------------------------------------------------------

class DuplicateRegistration(DmikitError):
    """A role was registered with a manager twice."""


class TotalCrash(DmikitError):
    """Every manager of an activation crashed; no survivor can lead."""


# -- external and shared objects ----------------------------------------------

class RollbackFailure(DmikitError):
    """Restoring an entry snapshot failed (only ever injected by a fault plan)."""


class ForeignAccess(DmikitError):
    """A shared object was touched by a role outside its owning activation."""


class UnboundReference(DmikitError):
    """A predicate or body step references an object absent from the snapshot."""


# -- DSL ------------------------------------------------------------------------

class DslSyntaxError(DmikitError):
    """Source text could not be parsed; carries line/column."""

    def __init__(self, message: str, line: int, col: int):
        super().__init__(f"{line}:{col}: {message}")
        self.line = line
        self.col = col


class StrictAssertStop(DmikitError):
    """An assert with no attached exception failed while running in strict mode."""

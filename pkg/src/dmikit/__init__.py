"""dmikit: a runtime and toolkit for dependable multiparty interactions.

Multi-role interactions with synchronized entry and exit, guard and
post-condition checking, concurrent exception resolution over an exception
hierarchy, handler-interaction chaining, abort/rollback with failure
escalation, and a leader-based manager protocol running on a deterministic
simulated transport. Includes an action-system DSL front end, a production
cell controller model, fault injection, a live service, and benchmarks.
"""

from .coordination import Coordinator, RunConfig
from .errors import DmikitError
from .hierarchy import ExceptionHierarchy, build_hierarchy, is_ancestor, resolve
from .interaction import (
    ActivationRecord,
    InteractionDef,
    Outcome,
    activate,
    define_interaction,
    evaluate_guard,
    evaluate_post,
    raise_in_role,
    run_to_outcome,
)
from .objects import ExternalObject, ObjectStore, SharedObject

__version__ = "0.1.0"

__all__ = [
    "ActivationRecord", "Coordinator", "DmikitError", "ExceptionHierarchy",
    "ExternalObject", "InteractionDef", "ObjectStore", "Outcome", "RunConfig",
    "SharedObject", "activate", "build_hierarchy", "define_interaction",
    "evaluate_guard", "evaluate_post", "is_ancestor", "raise_in_role",
    "resolve", "run_to_outcome",
]

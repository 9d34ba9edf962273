"""itemforge: an event-sourced, description-driven workflow and provenance engine.

Every business object is a versioned Item instantiated from description Items
held in the same store, executed as a directed graph of role-constrained
activities, with every state change captured as an immutable event.
"""

from .errors import ItemForgeError
from .model import (
    Event,
    EventKind,
    ItemSnapshot,
    Outcome,
    OutcomeSchema,
    Property,
    Transition,
    ValidationResult,
    Viewpoint,
    ViewpointTarget,
    pinned,
    resolve_viewpoint,
    validate_outcome,
)
from .registry import (
    AgentRef,
    BootstrapSet,
    DescriptionDefs,
    add_description_version,
    agent_ref,
    bootstrap_meta_descriptions,
    create_agent,
    describe,
    diff_description_versions,
    export_description,
    import_description,
    instantiate_item,
    promote_instance_workflow,
    register_description,
    register_schema,
    rerun_item,
    system_agent,
)
from .store import Store, open_store
from .workflow import (
    ActivityState,
    Graph,
    Job,
    WorkflowInstance,
    graph_from_doc,
    graph_to_doc,
    validate_graph,
)

__version__ = "0.1.0"

__all__ = [
    "ActivityState",
    "AgentRef",
    "BootstrapSet",
    "DescriptionDefs",
    "Event",
    "EventKind",
    "Graph",
    "ItemForgeError",
    "ItemSnapshot",
    "Job",
    "Outcome",
    "OutcomeSchema",
    "Property",
    "Store",
    "Transition",
    "ValidationResult",
    "Viewpoint",
    "ViewpointTarget",
    "WorkflowInstance",
    "add_description_version",
    "agent_ref",
    "bootstrap_meta_descriptions",
    "create_agent",
    "describe",
    "diff_description_versions",
    "export_description",
    "graph_from_doc",
    "graph_to_doc",
    "import_description",
    "instantiate_item",
    "open_store",
    "pinned",
    "promote_instance_workflow",
    "register_description",
    "register_schema",
    "rerun_item",
    "resolve_viewpoint",
    "system_agent",
    "validate_graph",
    "validate_outcome",
    "__version__",
]

"""creo: staged text-to-image ideation as a deterministic orchestration engine.

Layered canvas state with decision locking, mask-bounded diff edits,
event-sourced branching history, a REST service, and the interaction-log
analysis pipeline.
"""

from .errors import CreoError
from .model import (
    DecisionState,
    EditEvent,
    LightSpec,
    LockSet,
    PaletteColor,
    RegionLock,
    Session,
    StageId,
    StyleSpec,
    blank_state,
)
from .ops import AffineTransform, Stroke, decompose_image
from .pipeline import (
    ViolationReport,
    compose_preview,
    detect_violation,
    editable_attributes,
    enforce_locks,
    propagate,
)
from .generators import (
    Diff,
    GenerationRequest,
    MockBackend,
    PromptBundle,
    RemoteBackend,
    apply_diff,
    build_prompt,
    generate_viewpoints,
    stage_edit,
)
from .engine import append_event, branch_from, new_session, revert_to, snapshot_at
from .raster import Mask, Raster
from .service import ServiceConfig, SessionService, create_app

__version__ = "0.1.0"

__all__ = [
    "CreoError",
    "Raster",
    "Mask",
    "StageId",
    "DecisionState",
    "blank_state",
    "LightSpec",
    "PaletteColor",
    "StyleSpec",
    "LockSet",
    "RegionLock",
    "EditEvent",
    "Session",
    "Stroke",
    "AffineTransform",
    "decompose_image",
    "compose_preview",
    "editable_attributes",
    "propagate",
    "enforce_locks",
    "detect_violation",
    "ViolationReport",
    "Diff",
    "GenerationRequest",
    "PromptBundle",
    "MockBackend",
    "RemoteBackend",
    "generate_viewpoints",
    "stage_edit",
    "apply_diff",
    "build_prompt",
    "new_session",
    "append_event",
    "snapshot_at",
    "revert_to",
    "branch_from",
    "ServiceConfig",
    "SessionService",
    "create_app",
    "__version__",
]

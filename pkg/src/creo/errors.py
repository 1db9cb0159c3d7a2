"""Exception hierarchy shared by every creo module.

Each error maps to one failure mode of the public contracts; the HTTP layer
translates them to status codes in ``creo.service``.
"""


class CreoError(Exception):
    """Base class for all creo errors."""


# --- raster / geometry ------------------------------------------------------

class DimensionMismatch(CreoError):
    """Two rasters or masks that must share a shape do not."""


class ChannelMismatch(CreoError):
    """Operation received a raster with the wrong channel count."""


class EmptyStroke(CreoError):
    """Stroke has no points."""


class SingularTransform(CreoError):
    """Affine transform is not invertible."""


class UnknownPreset(CreoError):
    """Style preset name is not registered."""


# --- event log / sessions ---------------------------------------------------

class UnknownParent(CreoError):
    """Event references a parent id absent from the session."""


class DuplicateEventId(CreoError):
    """Event id already present in the session."""


class UnknownEvent(CreoError):
    """Event id does not exist in the session."""


class DuplicateBranchName(CreoError):
    """Branch name already in use."""


class UnknownBranch(CreoError):
    """Branch name does not exist."""


class UnknownSession(CreoError):
    """Session id is not known to the service."""


class MissingPrompt(CreoError):
    """Prompt-first session created without a prompt."""


class MissingImage(CreoError):
    """Image-first session created without a source image."""


# --- stage semantics --------------------------------------------------------

class StageLocked(CreoError):
    """Edit targets a fully locked stage."""


class ToolStageMismatch(CreoError):
    """Tool is not part of the target stage's toolset."""


class UnknownLock(CreoError):
    """Lock id does not exist."""


# --- generation backends ----------------------------------------------------

class EmptyPrompt(CreoError):
    """Viewpoint generation requires a non-empty prompt."""


class ZeroCount(CreoError):
    """Viewpoint generation requires at least one candidate."""


class UnknownInstruction(CreoError):
    """Instruction not present in the backend registry."""


class LockedRegionRequested(CreoError):
    """Generation request mask overlaps a locked region."""


class BackendUnavailable(CreoError):
    """Remote backend did not produce a usable response."""


# --- metrics ----------------------------------------------------------------

class MalformedRecord(CreoError):
    """Action-log line failed to parse; carries the 1-based line number."""

    def __init__(self, line: int, reason: str):
        super().__init__(f"line {line}: {reason}")
        self.line = line
        self.reason = reason


class MissingField(MalformedRecord):
    """Action-log record is missing a required field."""

    def __init__(self, line: int, name: str):
        super().__init__(line, f"missing field {name!r}")
        self.name = name


class NonMonotonicIndex(CreoError):
    """Action indices within one session are not strictly increasing."""


class EmptySession(CreoError):
    """Metrics requested for a session with no actions."""


class MixedSessions(CreoError):
    """Per-session metric received actions from more than one session."""


class EmptyInput(CreoError):
    """Aggregate received no rows."""


class MixedConditions(CreoError):
    """Aggregate received rows from more than one condition."""


class InsufficientData(CreoError):
    """Spread statistic needs at least two embeddings."""


class DegenerateImage(CreoError):
    """Image produced an all-zero feature vector; no unit embedding exists."""

"""Exception types shared across the package.

The session service maps these onto protocol error codes; everything else
raises them directly.
"""


class VoxloopError(Exception):
    """Base class for all package-specific errors."""

    code = "error"


class VolumeFormatError(VoxloopError):
    """Unreadable, unsupported, or inconsistent volume/mask file."""

    code = "volume_format"


class CommandParseError(VoxloopError):
    """Text command matched no target profile, or more than one."""

    code = "command_parse"

    def __init__(self, message: str, reason: str):
        super().__init__(message)
        self.reason = reason  # "no_match" | "ambiguous"


class PromptError(VoxloopError):
    """Point prompt out of bounds or bound to the wrong slice."""

    code = "bad_prompt"


class BackendError(VoxloopError):
    """Segmentation backend unreachable, timed out, or replied malformed."""

    code = "backend_error"


class ProtocolError(VoxloopError):
    """Frame that cannot be decoded into a well-formed protocol message."""

    code = "bad_frame"


class RetrievalError(VoxloopError):
    """Reference index unusable for the requested query."""

    code = "retrieval_error"


class StateViolation(VoxloopError):
    """Request not legal in the session's current workflow state."""

    code = "state_violation"

    def __init__(self, kind: str, state: str, allowed: tuple[str, ...]):
        self.kind = kind
        self.state = state
        self.allowed = allowed
        super().__init__(
            f"'{kind}' is not allowed in state {state}; "
            f"legal states: {', '.join(allowed) or 'none'}"
        )

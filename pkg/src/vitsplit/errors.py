"""Exception hierarchy shared by every subsystem."""


class VitSplitError(Exception):
    """Base class for all package errors."""


class SpecError(VitSplitError, ValueError):
    """Invalid model geometry or malformed spec document."""


class ScheduleError(VitSplitError, ValueError):
    """A pruning schedule would leave fewer than one token."""

    def __init__(self, message, layer=None):
        super().__init__(message)
        self.layer = layer


class FitError(VitSplitError, ValueError):
    pass


class EstimationError(VitSplitError, ValueError):
    pass


class TraceError(VitSplitError, ValueError):
    pass


class CodecError(VitSplitError):
    """Corrupt or truncated LZW stream."""


class ProtocolError(VitSplitError):
    """Wire framing or message-sequence violation."""


class SessionError(VitSplitError):
    def __init__(self, message, frame=None):
        if frame is not None:
            message = f"frame {frame}: {message}"
        super().__init__(message)
        self.frame = frame

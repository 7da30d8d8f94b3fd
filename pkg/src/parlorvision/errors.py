"""Exception hierarchy shared across the toolkit."""


class ParlorVisionError(Exception):
    """Base class for all toolkit errors."""


class ContractViolation(ParlorVisionError):
    """A caller broke a documented precondition (programming error, not data)."""


class ValidationError(ParlorVisionError):
    """Input data failed schema or invariant checks."""


class InputError(ParlorVisionError):
    """Inputs are well-formed but inconsistent (e.g. unknown image id)."""


class BackendError(ParlorVisionError):
    """An inference backend failed to answer a request."""

    def __init__(self, message: str, code: str = "backend_error"):
        super().__init__(message)
        self.code = code


class ProtocolError(BackendError):
    """The wire peer violated the NDJSON protocol."""

    def __init__(self, message: str):
        super().__init__(message, code="protocol_error")


class BackendTimeout(BackendError):
    """The wire peer did not answer within the configured timeout."""

    def __init__(self, message: str):
        super().__init__(message, code="timeout")


class FixtureError(ParlorVisionError):
    """A scripted-backend fixture file is malformed."""


class SinkWriteError(ParlorVisionError):
    """The record sink failed mid-stream; carries the partial extractor state."""

    def __init__(self, message: str, state=None):
        super().__init__(message)
        self.state = state

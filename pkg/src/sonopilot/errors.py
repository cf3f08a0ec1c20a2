"""Exception types shared across the package."""

from __future__ import annotations


class SonopilotError(Exception):
    """Base class for every error raised by this package."""


class InvalidInput(SonopilotError):
    pass


class BackendUnavailable(SonopilotError):
    pass


class RemoteError(SonopilotError):
    def __init__(self, status: int, body: str):
        super().__init__(f"remote service returned status {status}: {body[:200]}")
        self.status = status
        self.body = body


class DimensionMismatch(SonopilotError):
    pass


class ZeroVector(SonopilotError):
    pass


class EmptyIndex(SonopilotError):
    pass


class UnknownGoldKey(SonopilotError):
    pass


class DuplicateApi(SonopilotError):
    pass


class MalformedTemplate(SonopilotError):
    pass


class CallValidationError(SonopilotError):
    """Base for tool-call validation failures; ``code`` is machine readable."""

    code = "ValidationError"


class UnknownApi(CallValidationError):
    code = "UnknownApi"

    def __init__(self, name: str):
        super().__init__(f"UnknownApi: no API named {name!r} is registered.")
        self.name = name


class MissingParameter(CallValidationError):
    code = "MissingParameter"

    def __init__(self, api: str, name: str):
        super().__init__(f"MissingParameter: {api} requires parameter {name!r}.")
        self.api = api
        self.name = name


class UnknownParameter(CallValidationError):
    code = "UnknownParameter"

    def __init__(self, api: str, name: str):
        super().__init__(f"UnknownParameter: {api} does not accept parameter {name!r}.")
        self.api = api
        self.name = name


class KindMismatch(CallValidationError):
    code = "KindMismatch"

    def __init__(self, api: str, name: str, expected: str, got: str):
        super().__init__(
            f"KindMismatch: parameter {name!r} of {api} expects {expected}, got {got}."
        )
        self.api = api
        self.name = name
        self.expected = expected
        self.got = got


class PositionOutOfRange(SonopilotError):
    pass


class ThresholdOutOfRange(SonopilotError):
    pass


class StaleScan(SonopilotError):
    pass


class ScriptExhausted(SonopilotError):
    pass


class NoApisListed(SonopilotError):
    pass


class SessionClosed(SonopilotError):
    pass


class InsufficientTemplates(SonopilotError):
    pass

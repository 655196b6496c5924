"""Exception hierarchy shared by the engine, the wire layer and the node.

Every error carries a short ``code`` so it can cross the wire and be
re-raised as the same class on the calling side.
"""

from __future__ import annotations


class DevsError(Exception):
    code = "devs-error"

    def __init__(self, message: str = "", **details):
        super().__init__(message)
        self.message = message
        self.details = details

    def to_wire(self) -> dict:
        return {"code": self.code, "message": self.message, "details": self.details}


class PortUnknownError(DevsError):
    code = "port-unknown"


class UnknownBehaviorError(DevsError, KeyError):
    code = "unknown-behavior"

    def __str__(self) -> str:
        return self.message


class BehaviorConfigError(DevsError, ValueError):
    code = "behavior-config"


class ProtocolViolationError(DevsError):
    code = "protocol-violation"


class ValidationError(DevsError):
    code = "validation"

    def __init__(self, message: str = "", violations=(), **details):
        details.setdefault("violations", [str(v) for v in violations])
        super().__init__(message, **details)
        self.violations = list(violations)


class ReservedDelimiterError(DevsError, ValueError):
    code = "reserved-delimiter"


class KeyParseError(DevsError, ValueError):
    code = "key-parse"


class DecodeError(DevsError, ValueError):
    code = "decode"

    def __init__(self, message: str = "", offset: int | None = None, **details):
        super().__init__(message, offset=offset, **details)
        self.offset = offset


class SchemaError(DevsError, ValueError):
    code = "schema"

    def __init__(self, message: str = "", pointer: str = "", **details):
        super().__init__(message, pointer=pointer, **details)
        self.pointer = pointer


class NoServersError(DevsError, ValueError):
    code = "no-servers"


class AssignmentError(DevsError, ValueError):
    code = "assignment"


class NotFoundError(DevsError, KeyError):
    code = "not-found"

    def __str__(self) -> str:
        return self.message


class AlreadyExistsError(DevsError):
    code = "already-exists"


class CompileError(DevsError):
    code = "compile"


class UploadError(DevsError):
    code = "upload"


class NodeUnavailableError(DevsError, ConnectionError):
    """A node endpoint could not be reached."""

    code = "node-unavailable"

    def __init__(self, message: str = "", endpoint: str = "", **details):
        super().__init__(message, endpoint=endpoint, **details)
        self.endpoint = endpoint


class InitializationError(DevsError):
    code = "initialization"


class PropagationError(DevsError):
    code = "propagation"


_BY_CODE = {
    cls.code: cls
    for cls in [
        DevsError, PortUnknownError, UnknownBehaviorError, BehaviorConfigError,
        ProtocolViolationError, ValidationError, ReservedDelimiterError,
        KeyParseError, DecodeError, SchemaError, NoServersError, AssignmentError,
        NotFoundError, AlreadyExistsError, CompileError, UploadError,
        NodeUnavailableError, InitializationError, PropagationError,
    ]
}


def from_wire(payload: dict) -> DevsError:
    cls = _BY_CODE.get(payload.get("code"), DevsError)
    details = dict(payload.get("details") or {})
    err = cls.__new__(cls)
    DevsError.__init__(err, payload.get("message", ""), **details)
    for name in ("offset", "pointer", "endpoint"):
        if name in details:
            setattr(err, name, details[name])
    if cls is ValidationError:
        err.violations = list(details.get("violations", []))
    return err

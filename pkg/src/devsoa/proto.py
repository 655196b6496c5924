"""Wire contracts: simulator keys, envelopes, manifests and assignments.

Everything here is a pure function of its inputs. Envelopes and manifests
use canonical JSON: sorted keys, no insignificant whitespace, UTF-8.
Times travel as JSON numbers, except +infinity which travels as ``"inf"``.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from typing import Any, Iterable, Mapping, Sequence

import jsonschema

from .core import (
    INF,
    AtomicRef,
    CoupledSpec,
    Coupling,
    MessageBag,
    check_time,
    payload_from_json,
    payload_to_json,
)
from .errors import (
    AssignmentError,
    DecodeError,
    KeyParseError,
    NoServersError,
    NotFoundError,
    ReservedDelimiterError,
    SchemaError,
)

FORMAT_VERSION = 1
MANIFEST_SUFFIX = ".devs.json"
MEDIA_TYPE = "application/json"


def canonical_json(obj) -> bytes:
    return json.dumps(obj, sort_keys=True, separators=(",", ":"),
                      ensure_ascii=False, allow_nan=False).encode("utf-8")


# ---------------------------------------------------------------------------
# simulator keys


@dataclass(frozen=True)
class SimulatorKey:
    component: str
    client_address: str

    def __post_init__(self):
        if not self.component:
            raise ValueError("component name must be non-empty")
        if "@" in self.component:
            raise ReservedDelimiterError(f"component name {self.component!r} contains '@'")
        if not self.client_address or "@" in self.client_address:
            raise ReservedDelimiterError(f"bad client address {self.client_address!r}")

    def render(self) -> str:
        return f"{self.component}@{self.client_address}"

    def __str__(self) -> str:
        return self.render()


def render_key(name: str, client_address: str) -> str:
    return SimulatorKey(name, client_address).render()


def parse_key(text: str) -> SimulatorKey:
    parts = text.split("@") if isinstance(text, str) else []
    if len(parts) != 2 or not parts[0] or not parts[1]:
        raise KeyParseError(f"malformed simulator key {text!r}")
    return SimulatorKey(parts[0], parts[1])


# ---------------------------------------------------------------------------
# times, payloads, bags


def encode_time(t: float):
    t = check_time(t)
    return "inf" if t == INF else t


def decode_time(v) -> float:
    if v == "inf":
        return INF
    if isinstance(v, bool) or not isinstance(v, (int, float)):
        raise DecodeError(f"bad time value {v!r}")
    try:
        return check_time(v)
    except ValueError as exc:
        raise DecodeError(str(exc)) from exc


def encode_bag(bag: MessageBag) -> list:
    return [{"port": i.port, "value": payload_to_json(i.value)} for i in bag]


def decode_bag(items) -> MessageBag:
    try:
        return MessageBag((i["port"], payload_from_json(i["value"])) for i in items)
    except (TypeError, KeyError, ValueError) as exc:
        raise DecodeError(f"malformed message bag: {exc}") from exc


encode_payload = payload_to_json


def decode_payload(obj):
    try:
        return payload_from_json(obj)
    except TypeError as exc:
        raise DecodeError(str(exc)) from exc


# ---------------------------------------------------------------------------
# envelopes


_ENVELOPE_FIELDS = {"service", "key", "time", "body", "requestId"}


@dataclass
class Envelope:
    service: str
    key: SimulatorKey | None = None
    time: float | None = None
    body: dict = field(default_factory=dict)
    request_id: str = ""

    def __post_init__(self):
        if isinstance(self.key, str):
            self.key = parse_key(self.key)
        if self.time is not None:
            self.time = check_time(self.time)


def encode_envelope(env: Envelope) -> bytes:
    obj: dict[str, Any] = {"service": env.service, "body": env.body, "requestId": env.request_id}
    if env.key is not None:
        obj["key"] = env.key.render()
    if env.time is not None:
        obj["time"] = encode_time(env.time)
    try:
        return canonical_json(obj)
    except ValueError as exc:
        raise DecodeError(f"envelope is not encodable: {exc}") from exc


def _no_duplicates(pairs):
    out = {}
    for k, v in pairs:
        if k in out:
            raise DecodeError(f"duplicate field {k!r}")
        out[k] = v
    return out


def _reject_constant(name):
    raise DecodeError(f"non-finite number {name} is not allowed")


def loads_strict(data: bytes | str):
    if isinstance(data, (bytes, bytearray)):
        try:
            text = bytes(data).decode("utf-8")
        except UnicodeDecodeError as exc:
            raise DecodeError(f"invalid UTF-8: {exc.reason}", offset=exc.start) from exc
    else:
        text = data
    try:
        return json.loads(text, object_pairs_hook=_no_duplicates, parse_constant=_reject_constant)
    except json.JSONDecodeError as exc:
        raise DecodeError(f"malformed JSON: {exc.msg}", offset=exc.pos) from exc


def decode_envelope(data: bytes) -> Envelope:
    obj = loads_strict(data)
    if not isinstance(obj, dict):
        raise DecodeError("envelope must be a JSON object", offset=0)
    unknown = sorted(set(obj) - _ENVELOPE_FIELDS)
    if unknown:
        raise DecodeError(f"unknown envelope field {unknown[0]!r}", field=unknown[0])
    for name in ("service", "body", "requestId"):
        if name not in obj:
            raise DecodeError(f"missing envelope field {name!r}", field=name)
    if not isinstance(obj["service"], str) or not obj["service"]:
        raise DecodeError("service must be a non-empty string", field="service")
    if not isinstance(obj["requestId"], str):
        raise DecodeError("requestId must be a string", field="requestId")
    if not isinstance(obj["body"], dict):
        raise DecodeError("body must be an object", field="body")
    key = None
    if "key" in obj:
        try:
            key = parse_key(obj["key"])
        except (KeyParseError, ReservedDelimiterError) as exc:
            raise DecodeError(str(exc), field="key") from exc
    t = decode_time(obj["time"]) if "time" in obj else None
    return Envelope(obj["service"], key, t, obj["body"], obj["requestId"])


# ---------------------------------------------------------------------------
# assignment


def round_robin_assign(component_names: Sequence[str], servers: Sequence[str]) -> dict[str, str]:
    """Deal components, in sorted-name order, to servers cyclically."""
    if not servers:
        raise NoServersError("at least one server is required")
    return {name: servers[i % len(servers)] for i, name in enumerate(sorted(component_names))}


def check_assignment(assignment: Mapping[str, str], components: Iterable[str],
                     servers: Sequence[str]) -> None:
    components = list(components)
    missing = [c for c in components if c not in assignment]
    if missing:
        raise AssignmentError(f"assignment incomplete, missing {', '.join(missing)}", missing=missing)
    extra = sorted(set(assignment) - set(components))
    if extra:
        raise AssignmentError(f"assignment names unknown components {', '.join(extra)}", unknown=extra)
    unlisted = sorted({ep for ep in assignment.values() if ep not in servers})
    if unlisted:
        raise AssignmentError(f"assignment references unlisted servers {', '.join(unlisted)}", unlisted=unlisted)


def parse_assignment(data: bytes | str) -> dict[str, str]:
    obj = loads_strict(data)
    if isinstance(obj, dict) and set(obj) == {"assignment"}:
        obj = obj["assignment"]
    if not isinstance(obj, dict) or not all(isinstance(k, str) and isinstance(v, str) for k, v in obj.items()):
        raise SchemaError("assignment must map component names to host:port strings", pointer="")
    return dict(obj)


# ---------------------------------------------------------------------------
# manifests


_NAME = {"type": "string", "pattern": r"^[^@.\s]+$"}
_ENDPOINT = {"type": "string", "pattern": r"^([^@.\s]+\.)?[^@.\s]+$"}

MANIFEST_SCHEMA = {
    "$schema": "https://json-schema.org/draft/2020-12/schema",
    "type": "object",
    "additionalProperties": False,
    "required": ["formatVersion", "packageName", "topModel", "models"],
    "properties": {
        "formatVersion": {"type": "integer"},
        "packageName": {"type": "string", "minLength": 1},
        "topModel": _NAME,
        "models": {
            "type": "object",
            "minProperties": 1,
            "propertyNames": _NAME,
            "additionalProperties": {
                "type": "object",
                "additionalProperties": False,
                "required": ["components"],
                "properties": {
                    "inPorts": {"type": "array", "items": _NAME},
                    "outPorts": {"type": "array", "items": _NAME},
                    "components": {
                        "type": "array",
                        "items": {
                            "type": "object",
                            "additionalProperties": False,
                            "required": ["name"],
                            "properties": {
                                "name": _NAME,
                                "kind": {"type": "string", "minLength": 1},
                                "model": _NAME,
                                "params": {"type": "object"},
                            },
                            "oneOf": [{"required": ["kind"]}, {"required": ["model"]}],
                        },
                    },
                    "couplings": {
                        "type": "array",
                        "items": {
                            "type": "object",
                            "additionalProperties": False,
                            "required": ["from", "to"],
                            "properties": {
                                "from": _ENDPOINT,
                                "to": _ENDPOINT,
                                "translation": {"type": "string", "minLength": 1},
                            },
                        },
                    },
                },
            },
        },
    },
}

_validator = jsonschema.Draft202012Validator(MANIFEST_SCHEMA)


@dataclass(frozen=True)
class ComponentDecl:
    name: str
    kind: str | None = None
    model: str | None = None
    params: Mapping[str, Any] = field(default_factory=dict)


@dataclass
class CoupledDef:
    components: list[ComponentDecl]
    couplings: list[Coupling] = field(default_factory=list)
    in_ports: list[str] = field(default_factory=list)
    out_ports: list[str] = field(default_factory=list)


@dataclass
class ModelManifest:
    package_name: str
    top_model: str
    models: dict[str, CoupledDef]
    format_version: int = FORMAT_VERSION

    def top_component_names(self, root: str | None = None) -> list[str]:
        root = root or self.top_model
        if root not in self.models:
            raise NotFoundError(f"no coupled model named {root!r}", model=root)
        return [c.name for c in self.models[root].components]

    def build(self, root: str | None = None) -> CoupledSpec:
        """Resolve ``root`` (default: the top model) into a :class:`CoupledSpec` tree."""
        root = root or self.top_model
        d = self.models[root]
        comps: dict = {}
        for c in d.components:
            comps[c.name] = self.build(c.model) if c.model else AtomicRef(c.kind, dict(c.params))
        return CoupledSpec(root, comps, list(d.couplings), tuple(d.in_ports), tuple(d.out_ports),
                           order=[c.name for c in d.components])

    def kinds(self) -> set[str]:
        return {c.kind for d in self.models.values() for c in d.components if c.kind}


def _endpoint(text: str) -> tuple[str | None, str]:
    if "." in text:
        comp, port = text.split(".", 1)
        return comp, port
    return None, text


def _endpoint_text(comp: str | None, port: str) -> str:
    return port if comp is None else f"{comp}.{port}"


def manifest_from_obj(obj) -> ModelManifest:
    if isinstance(obj, dict) and "formatVersion" in obj and obj["formatVersion"] != FORMAT_VERSION:
        raise SchemaError(f"unsupported formatVersion {obj['formatVersion']!r}", pointer="/formatVersion")
    errors = sorted(_validator.iter_errors(obj), key=lambda e: list(map(str, e.absolute_path)))
    if errors:
        err = errors[0]
        pointer = "".join(f"/{p}" for p in err.absolute_path)
        raise SchemaError(f"{pointer or '/'}: {err.message}", pointer=pointer)
    models: dict[str, CoupledDef] = {}
    for mname, m in obj["models"].items():
        comps = [ComponentDecl(c["name"], c.get("kind"), c.get("model"), dict(c.get("params", {})))
                 for c in m["components"]]
        couplings = []
        for c in m.get("couplings", []):
            src, sp = _endpoint(c["from"])
            dst, dp = _endpoint(c["to"])
            couplings.append(Coupling(src, sp, dst, dp, c.get("translation", "identity")))
        models[mname] = CoupledDef(comps, couplings, list(m.get("inPorts", [])), list(m.get("outPorts", [])))
    if obj["topModel"] not in models:
        raise SchemaError(f"topModel {obj['topModel']!r} is not a defined coupled model", pointer="/topModel")
    for mname, d in models.items():
        for i, c in enumerate(d.components):
            if c.model is not None and c.model not in models:
                raise SchemaError(f"component {c.name!r} references undefined model {c.model!r}",
                                  pointer=f"/models/{mname}/components/{i}/model")
    _check_acyclic(models)
    return ModelManifest(obj["packageName"], obj["topModel"], models, obj["formatVersion"])


def _check_acyclic(models: Mapping[str, CoupledDef]) -> None:
    state: dict[str, int] = {}

    def visit(name, trail):
        if state.get(name) == 2:
            return
        if state.get(name) == 1:
            raise SchemaError(f"model nesting cycle {' -> '.join(trail + [name])}", pointer=f"/models/{name}")
        state[name] = 1
        for c in models[name].components:
            if c.model:
                visit(c.model, trail + [name])
        state[name] = 2

    for name in models:
        visit(name, [])


def parse_manifest(data: bytes | str) -> ModelManifest:
    return manifest_from_obj(loads_strict(data))


def manifest_to_obj(m: ModelManifest) -> dict:
    models = {}
    for name, d in m.models.items():
        comps = []
        for c in d.components:
            item: dict[str, Any] = {"name": c.name}
            if c.kind is not None:
                item["kind"] = c.kind
            if c.model is not None:
                item["model"] = c.model
            if c.params:
                item["params"] = dict(c.params)
            comps.append(item)
        couplings = []
        for c in d.couplings:
            item = {"from": _endpoint_text(c.src, c.src_port), "to": _endpoint_text(c.dst, c.dst_port)}
            if c.translation != "identity":
                item["translation"] = c.translation
            couplings.append(item)
        models[name] = {"inPorts": list(d.in_ports), "outPorts": list(d.out_ports),
                        "components": comps, "couplings": couplings}
    return {"formatVersion": m.format_version, "packageName": m.package_name,
            "topModel": m.top_model, "models": models}


def emit_manifest(m: ModelManifest) -> bytes:
    return canonical_json(manifest_to_obj(m))


def manifest_from_spec(spec: CoupledSpec, package_name: str) -> ModelManifest:
    """Manifest whose models are ``spec`` and every coupled model nested in it."""
    models: dict[str, CoupledDef] = {}

    def add(s: CoupledSpec):
        if s.name in models:
            return
        comps = []
        for name in s.component_names:
            ref = s.components[name]
            if isinstance(ref, CoupledSpec):
                add(ref)
                comps.append(ComponentDecl(name, model=ref.name))
            else:
                comps.append(ComponentDecl(name, kind=ref.kind, params=dict(ref.params)))
        models[s.name] = CoupledDef(comps, list(s.couplings), list(s.inputs), list(s.outputs))

    add(spec)
    return ModelManifest(package_name, spec.name, models)


# ---------------------------------------------------------------------------
# component descriptors (what newSimulator receives)


def coupled_to_wire(spec: CoupledSpec) -> dict:
    comps = []
    for name in spec.component_names:
        ref = spec.components[name]
        if isinstance(ref, CoupledSpec):
            comps.append({"name": name, "coupled": coupled_to_wire(ref)})
        else:
            comps.append({"name": name, "kind": ref.kind, "params": dict(ref.params)})
    return {
        "name": spec.name,
        "inPorts": list(spec.inputs),
        "outPorts": list(spec.outputs),
        "components": comps,
        "couplings": [{"from": _endpoint_text(c.src, c.src_port), "to": _endpoint_text(c.dst, c.dst_port),
                       "translation": c.translation} for c in spec.couplings],
    }


def coupled_from_wire(obj: dict) -> CoupledSpec:
    try:
        comps: dict = {}
        order = []
        for c in obj["components"]:
            order.append(c["name"])
            comps[c["name"]] = (coupled_from_wire(c["coupled"]) if "coupled" in c
                                else AtomicRef(c["kind"], dict(c.get("params", {}))))
        couplings = []
        for c in obj.get("couplings", []):
            src, sp = _endpoint(c["from"])
            dst, dp = _endpoint(c["to"])
            couplings.append(Coupling(src, sp, dst, dp, c.get("translation", "identity")))
        return CoupledSpec(obj["name"], comps, couplings, tuple(obj.get("inPorts", ())),
                           tuple(obj.get("outPorts", ())), order=order)
    except (KeyError, TypeError, AttributeError) as exc:
        raise DecodeError(f"malformed coupled component: {exc}") from exc


def component_to_wire(ref: AtomicRef | CoupledSpec) -> dict:
    if isinstance(ref, CoupledSpec):
        return {"coupled": coupled_to_wire(ref)}
    return {"kind": ref.kind, "params": dict(ref.params)}


def component_from_wire(obj: dict) -> AtomicRef | CoupledSpec:
    if not isinstance(obj, dict):
        raise DecodeError("component descriptor must be an object")
    if "coupled" in obj:
        return coupled_from_wire(obj["coupled"])
    if not isinstance(obj.get("kind"), str):
        raise DecodeError("component descriptor needs 'kind' or 'coupled'")
    return AtomicRef(obj["kind"], dict(obj.get("params") or {}))


# ---------------------------------------------------------------------------
# logs


@dataclass
class LogRecord:
    node_address: str
    client_address: str
    lines: list[str] = field(default_factory=list)
    available: bool = True

    def to_wire(self) -> dict:
        return {"nodeAddress": self.node_address, "clientAddress": self.client_address,
                "lines": list(self.lines), "available": self.available}

    @classmethod
    def from_wire(cls, obj: dict) -> "LogRecord":
        return cls(obj["nodeAddress"], obj["clientAddress"], list(obj["lines"]), obj.get("available", True))

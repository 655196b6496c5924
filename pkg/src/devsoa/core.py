"""DEVS modeling primitives.

Atomic models are objects deriving from :class:`AtomicBehavior`. They expose
the parallel-DEVS function set ``ta``, ``delta_int``, ``delta_ext``,
``delta_con`` and ``output`` (the lambda function). Transitions mutate the
behavior in place; the complete model state lives in ``behavior.state`` and
is compared with ``==``.

Coupled models are described declaratively by :class:`CoupledSpec`, whose
components are either :class:`AtomicRef` (a registered behavior kind plus
constructor parameters) or nested ``CoupledSpec`` instances.
"""

from __future__ import annotations

import copy
import json
import logging
import math
from collections import Counter
from dataclasses import dataclass, field
from typing import Any, Callable, ClassVar, Iterable, Iterator, Mapping, Union

from .errors import (
    BehaviorConfigError,
    PortUnknownError,
    ProtocolViolationError,
    UnknownBehaviorError,
)

log = logging.getLogger(__name__)

INF = math.inf

#: Logical simulation time: a non-negative float, ``INF`` meaning "never".
Time = float

Payload = Union[str, int, float, bool, Mapping[str, Any]]


def check_time(t, name: str = "t") -> float:
    if isinstance(t, bool) or not isinstance(t, (int, float)):
        raise TypeError(f"{name} must be a number, got {type(t).__name__}")
    t = float(t)
    if math.isnan(t) or t < 0:
        raise ValueError(f"{name} must be non-negative, got {t!r}")
    return t


# ---------------------------------------------------------------------------
# payloads


def payload_to_json(value: Payload):
    """Tagged JSON form of a payload; the single source of truth for equality."""
    if isinstance(value, bool):
        return {"bool": value}
    if isinstance(value, int):
        return {"int": value}
    if isinstance(value, float):
        if not math.isfinite(value):
            raise TypeError(f"real payload must be finite, got {value!r}")
        return {"real": value}
    if isinstance(value, str):
        return {"text": value}
    if isinstance(value, Mapping):
        out = {}
        for k, v in value.items():
            if not isinstance(k, str):
                raise TypeError(f"record field names must be text, got {k!r}")
            out[k] = payload_to_json(v)
        return {"record": out}
    raise TypeError(f"unsupported payload type {type(value).__name__}")


def payload_from_json(obj) -> Payload:
    if not isinstance(obj, dict) or len(obj) != 1:
        raise TypeError(f"malformed payload {obj!r}")
    (tag, v), = obj.items()
    if tag == "text" and isinstance(v, str):
        return v
    if tag == "bool" and isinstance(v, bool):
        return v
    if tag == "int" and isinstance(v, int) and not isinstance(v, bool):
        return v
    if tag == "real" and isinstance(v, (int, float)) and not isinstance(v, bool):
        return float(v)
    if tag == "record" and isinstance(v, dict):
        return {k: payload_from_json(x) for k, x in v.items()}
    raise TypeError(f"malformed payload {obj!r}")


def payload_key(value: Payload) -> str:
    return json.dumps(payload_to_json(value), sort_keys=True, separators=(",", ":"))


def render_payload(value: Payload) -> str:
    if isinstance(value, str):
        return value
    if isinstance(value, Mapping):
        return json.dumps(value, sort_keys=True, separators=(",", ":"), ensure_ascii=False)
    return repr(value) if isinstance(value, float) else str(value)


@dataclass(frozen=True)
class PortValue:
    port: str
    value: Payload

    def __post_init__(self):
        if not isinstance(self.port, str) or not self.port:
            raise ValueError("port must be a non-empty string")
        payload_to_json(self.value)


class MessageBag:
    """Multiset of (port, value) pairs.

    Iteration yields items in insertion order; equality ignores order.
    An empty bag plays the role of the DEVS null event.
    """

    __slots__ = ("_items",)

    def __init__(self, items: Iterable = ()):
        self._items: list[PortValue] = []
        for item in items:
            if isinstance(item, PortValue):
                self._items.append(item)
            else:
                port, value = item
                self._items.append(PortValue(port, value))

    def add(self, port: str, value: Payload) -> None:
        self._items.append(PortValue(port, value))

    def __iter__(self) -> Iterator[PortValue]:
        return iter(self._items)

    def __len__(self) -> int:
        return len(self._items)

    def __bool__(self) -> bool:
        return bool(self._items)

    def ports(self) -> set[str]:
        return {i.port for i in self._items}

    def values_on(self, port: str) -> list:
        return [i.value for i in self._items if i.port == port]

    def ordered(self) -> list[PortValue]:
        """Items grouped by port (lexicographic), arrival order kept within a port."""
        return sorted(self._items, key=lambda i: i.port)

    def _counter(self) -> Counter:
        return Counter((i.port, payload_key(i.value)) for i in self._items)

    def __eq__(self, other) -> bool:
        if not isinstance(other, MessageBag):
            return NotImplemented
        return self._counter() == other._counter()

    __hash__ = None

    def __repr__(self) -> str:
        inner = ", ".join(f"({i.port!r}, {i.value!r})" for i in self._items)
        return f"MessageBag([{inner}])"

    def render(self) -> str:
        body = " ".join(f"port: {i.port} value: {render_payload(i.value)}" for i in self._items)
        return f"<< {body} >>"


EMPTY = MessageBag()


# ---------------------------------------------------------------------------
# atomic behaviors


@dataclass
class PhaseState:
    """The common (phase, sigma) state of hand-written behaviors."""

    phase: str
    sigma: float = INF


class AtomicBehavior:
    """Base class of parallel-DEVS atomic models.

    Subclasses set ``inputs``/``outputs`` and implement the hooks
    ``internal()``, ``external(e, items)`` and ``out()``; ``confluent`` and
    ``ta`` have defaults. ``state`` must hold the entire mutable state.
    """

    kind: ClassVar[str] = ""
    inputs: tuple[str, ...] = ()
    outputs: tuple[str, ...] = ()

    state: Any

    # -- hooks ---------------------------------------------------------------
    def internal(self) -> None:
        raise NotImplementedError

    def external(self, e: float, items: list[PortValue]) -> None:
        raise NotImplementedError

    def confluent(self, e: float, items: list[PortValue]) -> None:
        # internal first, then external with zero elapsed time
        self.internal()
        self.external(0.0, items)

    def out(self) -> MessageBag:
        return MessageBag()

    # -- the DEVS function set -----------------------------------------------
    def ta(self) -> float:
        return self.state.sigma

    @property
    def phase(self) -> str:
        return self.state.phase

    def delta_int(self) -> None:
        self.internal()

    def delta_ext(self, e: float, bag: MessageBag) -> None:
        e = check_time(e, "e")
        ta = self.ta()
        if e > ta:
            raise ProtocolViolationError(f"elapsed {e} exceeds ta {ta}", model=self.kind)
        self._check_inputs(bag)
        self.external(e, bag.ordered())

    def delta_con(self, e: float, bag: MessageBag) -> None:
        if not bag:
            self.internal()
            return
        self._check_inputs(bag)
        self.confluent(e, bag.ordered())

    def output(self) -> MessageBag:
        bag = self.out()
        bad = bag.ports() - set(self.outputs)
        if bad:
            raise PortUnknownError(f"output on undeclared port(s) {sorted(bad)}", ports=sorted(bad))
        return bag

    def describe(self) -> dict:
        """Small JSON-able summary used by node diagnostics."""
        return {"phase": self.phase}

    def clone(self) -> "AtomicBehavior":
        return copy.deepcopy(self)

    def _check_inputs(self, bag: MessageBag) -> None:
        bad = bag.ports() - set(self.inputs)
        if bad:
            raise PortUnknownError(f"input on undeclared port(s) {sorted(bad)}", ports=sorted(bad))

    def _continue(self, e: float) -> None:
        """Ignore an input: stay in phase with the remaining time."""
        self.state.sigma = self.state.sigma - e


# ---------------------------------------------------------------------------
# coupled specifications


@dataclass(frozen=True)
class AtomicRef:
    kind: str
    params: Mapping[str, Any] = field(default_factory=dict)


@dataclass(frozen=True)
class Coupling:
    """``src.src_port -> dst.dst_port``; ``None`` names the enclosing model."""

    src: str | None
    src_port: str
    dst: str | None
    dst_port: str
    translation: str = "identity"

    def __str__(self) -> str:
        a = f"{self.src}.{self.src_port}" if self.src is not None else self.src_port
        b = f"{self.dst}.{self.dst_port}" if self.dst is not None else self.dst_port
        return f"{a}->{b}"


@dataclass
class CoupledSpec:
    name: str
    components: dict[str, Union[AtomicRef, "CoupledSpec"]]
    couplings: list[Coupling] = field(default_factory=list)
    inputs: tuple[str, ...] = ()
    outputs: tuple[str, ...] = ()
    # names in declaration order; ``components`` may hide duplicates
    order: list[str] | None = None

    @property
    def component_names(self) -> list[str]:
        return list(self.order) if self.order is not None else list(self.components)


@dataclass(frozen=True)
class Violation:
    code: str
    locator: str
    message: str

    def __str__(self) -> str:
        return f"{self.code} at {self.locator}: {self.message}"


# ---------------------------------------------------------------------------
# registry


def identity(value):
    return value


class BehaviorRegistry:
    """Maps behavior kind ids to factories, and translation ids to functions."""

    def __init__(self):
        self._factories: dict[str, Callable[..., AtomicBehavior]] = {}
        self._translations: dict[str, Callable[[Payload], Payload]] = {"identity": identity}

    def register(self, kind: str, factory: Callable[..., AtomicBehavior]) -> "BehaviorRegistry":
        if not kind:
            raise ValueError("behavior kind must be non-empty")
        if kind in self._factories:
            log.info("behavior kind %r re-registered", kind)
        self._factories[kind] = factory
        return self

    def register_translation(self, tid: str, fn: Callable[[Payload], Payload]) -> "BehaviorRegistry":
        if not tid:
            raise ValueError("translation id must be non-empty")
        self._translations[tid] = fn
        return self

    def __contains__(self, kind: str) -> bool:
        return kind in self._factories

    def kinds(self) -> list[str]:
        return sorted(self._factories)

    def instantiate(self, kind: str, params: Mapping[str, Any] | None = None) -> AtomicBehavior:
        try:
            factory = self._factories[kind]
        except KeyError:
            raise UnknownBehaviorError(f"unknown behavior kind {kind!r}", kind=kind) from None
        try:
            return factory(**dict(params or {}))
        except TypeError as exc:
            raise BehaviorConfigError(f"bad parameters for {kind!r}: {exc}", kind=kind) from exc

    def translation(self, tid: str) -> Callable[[Payload], Payload]:
        try:
            return self._translations[tid]
        except KeyError:
            raise UnknownBehaviorError(f"unknown translation {tid!r}", kind=tid) from None

    def has_translation(self, tid: str) -> bool:
        return tid in self._translations

    def copy(self) -> "BehaviorRegistry":
        other = BehaviorRegistry()
        other._factories = dict(self._factories)
        other._translations = dict(self._translations)
        return other


def component_ports(ref, registry: BehaviorRegistry) -> tuple[tuple[str, ...], tuple[str, ...]]:
    if isinstance(ref, CoupledSpec):
        return tuple(ref.inputs), tuple(ref.outputs)
    beh = registry.instantiate(ref.kind, ref.params)
    return tuple(beh.inputs), tuple(beh.outputs)


def validate_coupled(spec: CoupledSpec, registry: BehaviorRegistry, _path: str = "") -> list[Violation]:
    """All structural problems of ``spec`` (recursively); empty means valid."""
    path = f"{_path}/{spec.name}"
    out: list[Violation] = []
    names = spec.component_names
    seen = set()
    for name in names:
        if name in seen:
            out.append(Violation("duplicate-name", f"{path}/{name}", f"component {name!r} declared twice"))
        seen.add(name)
        if not name or "@" in name or "." in name:
            out.append(Violation("bad-name", f"{path}/{name}", "component names must be non-empty, without '@' or '.'"))

    ports: dict[str, tuple[tuple[str, ...], tuple[str, ...]]] = {}
    for name, ref in spec.components.items():
        loc = f"{path}/{name}"
        if isinstance(ref, CoupledSpec):
            out.extend(validate_coupled(ref, registry, path))
            ports[name] = (tuple(ref.inputs), tuple(ref.outputs))
            continue
        try:
            ports[name] = component_ports(ref, registry)
        except UnknownBehaviorError:
            out.append(Violation("unknown-behavior", loc, f"behavior kind {ref.kind!r} is not registered"))
        except (BehaviorConfigError, ValueError) as exc:
            out.append(Violation("bad-parameters", loc, str(exc)))

    for i, c in enumerate(spec.couplings):
        loc = f"{path}/couplings/{i}"
        if c.src is None and c.dst is None:
            out.append(Violation("pass-through", loc, f"{c} connects the model's own ports"))
            continue
        if c.src is not None and c.src == c.dst:
            out.append(Violation("self-coupling", loc, f"{c} couples {c.src!r} to itself"))
        for end, port, is_src in ((c.src, c.src_port, True), (c.dst, c.dst_port, False)):
            if end is None:
                declared = spec.inputs if is_src else spec.outputs
                if port not in declared:
                    out.append(Violation("unknown-port", loc, f"{spec.name} has no {'input' if is_src else 'output'} port {port!r}"))
            elif end not in spec.components:
                out.append(Violation("unknown-component", loc, f"no component named {end!r}"))
            elif end in ports:
                declared = ports[end][1] if is_src else ports[end][0]
                if port not in declared:
                    out.append(Violation("unknown-port", loc, f"{end} has no {'output' if is_src else 'input'} port {port!r}"))
        if not registry.has_translation(c.translation):
            out.append(Violation("unknown-translation", loc, f"translation {c.translation!r} is not registered"))
    return out

"""Simulators, the coupled-as-atomic adapter and the coordinator loop.

:class:`Simulator` wraps one atomic behavior with its clock (``tL``, ``tN``)
and the pending input bag, and dispatches transitions exactly like the
abstract ``deltfcn``: confluent, internal or external depending on whether
the simulator is imminent and whether input is pending.

:class:`Coordinator` drives a set of simulators that live behind
*simulation services* (in-process or remote), relaying every output over
the top-level couplings.
"""

from __future__ import annotations

import logging
from collections import Counter, defaultdict
from dataclasses import dataclass, field
from typing import Callable, Mapping, Protocol

from .core import (
    INF,
    AtomicBehavior,
    AtomicRef,
    BehaviorRegistry,
    CoupledSpec,
    Coupling,
    MessageBag,
    Payload,
    check_time,
    render_payload,
    validate_coupled,
)
from .errors import (
    DevsError,
    InitializationError,
    NodeUnavailableError,
    NotFoundError,
    PortUnknownError,
    PropagationError,
    ProtocolViolationError,
    ValidationError,
)

log = logging.getLogger(__name__)


class Simulator:
    """Per-component simulator state and the four-way transition dispatch."""

    def __init__(self, name: str, model: AtomicBehavior, key: str | None = None,
                 log: Callable[[str], None] | None = None):
        self.name = name
        self.key = key or name
        self.model = model
        self.tL = 0.0
        self.tN = INF
        self.input = MessageBag()
        self.output = MessageBag()
        self.initialized = False
        self.branches: Counter = Counter()
        self.history: list[tuple[float, str, Payload]] = []
        self._log = log
        self._lambda_at: float | None = None

    def initialize(self, t: float) -> None:
        t = check_time(t)
        self.tL = t
        self.tN = t + self.model.ta()
        self.input = MessageBag()
        self.output = MessageBag()
        self._lambda_at = None
        self.initialized = True

    def lambda_(self, t: float) -> MessageBag:
        t = check_time(t)
        if t != self.tN:
            self.output = MessageBag()
            return self.output
        if self._lambda_at == t:
            return self.output
        self.output = self.model.output()
        self._lambda_at = t
        for item in self.output:
            self.history.append((t, item.port, item.value))
        if self.output and self._log:
            self._log(f"{self.name} sending message: {self.output.render()}")
        return self.output

    def receive_input(self, from_port: str, value: Payload, to_port: str) -> None:
        if to_port not in self.model.inputs:
            raise PortUnknownError(f"{self.name} has no input port {to_port!r}", port=to_port)
        self.input.add(to_port, value)

    def deltfcn(self, t: float) -> None:
        t = check_time(t)
        if not self.initialized:
            raise ProtocolViolationError(f"simulator {self.key} is not initialized")
        if t > self.tN:
            raise ProtocolViolationError(f"deltfcn at t={t} beyond tN={self.tN} for {self.key}")
        if t < self.tL:
            raise ProtocolViolationError(f"deltfcn at t={t} before tL={self.tL} for {self.key}")
        x = self.input
        if not x and t != self.tN:
            self.branches["noop"] += 1
            return
        emitted = self._lambda_at == t and bool(self.output)
        if x and t == self.tN:
            self.branches["confluent"] += 1
            self.model.delta_con(t - self.tL, x)
        elif t == self.tN:
            self.branches["internal"] += 1
            self.model.delta_int()
        else:
            self.branches["external"] += 1
            self.model.delta_ext(t - self.tL, x)
        self.tL = t
        self.tN = self.tL + self.model.ta()
        self.input = MessageBag()
        self._lambda_at = None
        if emitted and self._log:
            self._log(f"State at: {self.name} is: {self.model.phase}")


# ---------------------------------------------------------------------------
# coupled-as-atomic adapter


def build_behavior(ref: AtomicRef | CoupledSpec, registry: BehaviorRegistry) -> AtomicBehavior:
    if isinstance(ref, CoupledSpec):
        return CoupledAsAtomic(ref, registry)
    return registry.instantiate(ref.kind, ref.params)


class CoupledAsAtomic(AtomicBehavior):
    """A coupled model presented through the atomic interface.

    Internally runs its own simulators on a local clock; the outside only
    sees the coupled model's input and output ports.
    """

    kind = "coupled"

    def __init__(self, spec: CoupledSpec, registry: BehaviorRegistry):
        violations = validate_coupled(spec, registry)
        if violations:
            raise ValidationError(f"invalid coupled model {spec.name!r}", violations)
        self.spec = spec
        self.inputs = tuple(spec.inputs)
        self.outputs = tuple(spec.outputs)
        self._children = {
            name: Simulator(name, build_behavior(spec.components[name], registry))
            for name in sorted(spec.components)
        }
        self._routes: dict[tuple[str | None, str], list[tuple[Coupling, Callable]]] = defaultdict(list)
        for c in spec.couplings:
            self._routes[(c.src, c.src_port)].append((c, registry.translation(c.translation)))
        self._clock = 0.0
        for child in self._children.values():
            child.initialize(0.0)

    @property
    def state(self):
        return (self._clock, tuple(
            (name, c.tL, c.tN, c.model.state) for name, c in self._children.items()))

    def _next(self) -> float:
        return min((c.tN for c in self._children.values()), default=INF)

    def ta(self) -> float:
        return self._next() - self._clock

    @property
    def phase(self) -> str:
        return "passive" if self._next() == INF else "active"

    def out(self) -> MessageBag:
        t = self._next()
        bag = MessageBag()
        if t == INF:
            return bag
        for name, child in self._children.items():
            if child.tN != t:
                continue
            for item in child.model.output():
                for c, z in self._routes.get((name, item.port), ()):
                    if c.dst is None:
                        bag.add(c.dst_port, z(item.value))
        return bag

    def internal(self) -> None:
        self._step(self._next(), [])

    def external(self, e, items) -> None:
        t = min(self._clock + e, self._next())
        self._step(t, items)

    def confluent(self, e, items) -> None:
        self._step(self._next(), items)

    def _step(self, t: float, items) -> None:
        children = self._children
        for child in children.values():
            child.lambda_(t)
        for name, child in children.items():
            for item in child.output:
                for c, z in self._routes.get((name, item.port), ()):
                    if c.dst is not None:
                        children[c.dst].receive_input(item.port, z(item.value), c.dst_port)
        for item in items:
            for c, z in self._routes.get((None, item.port), ()):
                children[c.dst].receive_input(item.port, z(item.value), c.dst_port)
        for child in children.values():
            child.deltfcn(t)
        self._clock = t

    def describe(self) -> dict:
        return {"phase": self.phase,
                "components": {n: c.model.describe() for n, c in self._children.items()}}


def digraph_to_atomic(spec: CoupledSpec, registry: BehaviorRegistry) -> AtomicBehavior:
    """Wrap a coupled model so it can be simulated as one atomic model."""
    return CoupledAsAtomic(spec, registry)


# ---------------------------------------------------------------------------
# flat hierarchical reference


def _spec_at(root: CoupledSpec, path: tuple[str, ...]):
    node = root
    for name in path:
        node = node.components[name]
    return node


def flatten(root: CoupledSpec):
    """Resolve a hierarchy into atomic leaves and leaf-to-leaf routes.

    Returns ``(leaves, routes, exposed)``: ``leaves`` maps leaf paths to
    :class:`AtomicRef`; ``routes(leaf_path, out_port)`` lists the
    ``(dst_leaf_path, in_port, translation_ids)`` an output reaches;
    ``exposed(leaf_path, out_port)`` lists the ``(top_component, port,
    translation_ids)`` it surfaces on.
    """
    leaves: dict[tuple[str, ...], AtomicRef] = {}

    def walk(path):
        node = _spec_at(root, path)
        if isinstance(node, CoupledSpec):
            for name in node.components:
                walk(path + (name,))
        else:
            leaves[path] = node

    for name in root.components:
        walk((name,))

    def into(path, port, tids):
        node = _spec_at(root, path)
        if not isinstance(node, CoupledSpec):
            yield path, port, tids
            return
        for c in node.couplings:
            if c.src is None and c.src_port == port:
                yield from into(path + (c.dst,), c.dst_port, tids + (c.translation,))

    def out_of(path, port, tids):
        parent = path[:-1]
        spec = _spec_at(root, parent)
        for c in spec.couplings:
            if c.src != path[-1] or c.src_port != port:
                continue
            if c.dst is None:
                if parent:
                    yield from out_of(parent, c.dst_port, tids + (c.translation,))
            else:
                yield from into(parent + (c.dst,), c.dst_port, tids + (c.translation,))

    def surface(path, port, tids):
        if len(path) == 1:
            yield path[0], port, tids
            return
        parent = path[:-1]
        for c in _spec_at(root, parent).couplings:
            if c.src == path[-1] and c.src_port == port and c.dst is None:
                yield from surface(parent, c.dst_port, tids + (c.translation,))

    def routes(path, port):
        return list(out_of(path, port, ()))

    def exposed(path, port):
        return list(surface(path, port, ()))

    return leaves, routes, exposed


@dataclass
class TraceEvent:
    t: float
    component: str
    port: str
    value: Payload

    def render(self) -> str:
        return f"{self.t!r} {self.component} {self.port} {render_payload(self.value)}"


def run_flat(root: CoupledSpec, registry: BehaviorRegistry, *, end_time: float = INF,
             max_cycles: int = 10_000) -> list[TraceEvent]:
    """Simulate a hierarchy by flattening it to atomic leaves.

    Independent of :class:`CoupledAsAtomic`; the returned trace lists
    outputs as they surface on top-level component ports.
    """
    violations = validate_coupled(root, registry)
    if violations:
        raise ValidationError(f"invalid coupled model {root.name!r}", violations)
    leaves, routes_of, surface_of = flatten(root)
    sims = {p: Simulator(".".join(p), registry.instantiate(ref.kind, ref.params)) for p, ref in sorted(leaves.items())}
    route_cache: dict = {}
    for sim in sims.values():
        sim.initialize(0.0)
    trace: list[TraceEvent] = []
    cycles = 0
    while cycles < max_cycles:
        t = min((s.tN for s in sims.values()), default=INF)
        if t == INF or t > end_time:
            break
        for s in sims.values():
            s.lambda_(t)
        for path, s in sims.items():
            for item in s.output:
                key = (path, item.port)
                if key not in route_cache:
                    route_cache[key] = (routes_of(path, item.port), surface_of(path, item.port))
                routes, surfaced = route_cache[key]
                for top, port, tids in surfaced:
                    trace.append(TraceEvent(t, top, port, _apply(registry, tids, item.value)))
                for dst, port, tids in routes:
                    sims[dst].receive_input(item.port, _apply(registry, tids, item.value), port)
        for s in sims.values():
            s.deltfcn(t)
        cycles += 1
    return trace


def _apply(registry, tids, value):
    for tid in tids:
        value = registry.translation(tid)(value)
    return value


# ---------------------------------------------------------------------------
# coordinator


class SimulationService(Protocol):
    """Operations a coordinator needs from wherever a simulator lives."""

    def new_simulator(self, key: str, component: dict) -> None: ...
    def initialize(self, key: str, t: float) -> None: ...
    def receive_input(self, key: str, from_port: str, value: Payload, to_port: str) -> None: ...
    def lambda_(self, key: str, t: float) -> None: ...
    def deltfcn(self, key: str, t: float) -> None: ...
    def get_output(self, key: str) -> MessageBag: ...
    def get_tn(self, key: str) -> float: ...
    def exit(self, key: str) -> None: ...


@dataclass
class RunResult:
    cycles: int = 0
    tL: float = 0.0
    tN: float = INF
    trace: list[TraceEvent] = field(default_factory=list)
    complete: bool = True
    error: str | None = None
    relayed: int = 0

    def trace_lines(self) -> list[str]:
        return [e.render() for e in self.trace]


class Coordinator:
    """Runs the DEVS loop over simulators hosted by simulation services.

    All content travels through :meth:`propagate_output`; simulators are
    visited in sorted key order in every phase.
    """

    def __init__(self, client_address: str, root: CoupledSpec, registry: BehaviorRegistry,
                 key_of: Callable[[str], str] | None = None):
        self.client_address = client_address
        self.root = root
        self.registry = registry
        self._key_of = key_of or (lambda name: f"{name}@{client_address}")
        self.simulators: dict[str, SimulationService] = {}
        self.names: dict[str, str] = {}
        self.endpoints: dict[str, str] = {}
        self.couplings: dict[tuple[str, str], list[tuple[Coupling, Callable]]] = defaultdict(list)
        for c in root.couplings:
            if c.src is not None and c.dst is not None:
                self.couplings[(c.src, c.src_port)].append((c, registry.translation(c.translation)))
        self.tL = 0.0
        self.tN = INF
        self.relayed = 0

    def key(self, name: str) -> str:
        return self._key_of(name)

    def create(self, name: str, service: SimulationService, component: dict, endpoint: str = "") -> str:
        key = self.key(name)
        service.new_simulator(key, component)
        self.simulators[key] = service
        self.names[key] = name
        self.endpoints[key] = endpoint or getattr(service, "endpoint", "local")
        return key

    def _sorted(self):
        return sorted(self.simulators.items())

    def initialize(self, t: float = 0.0) -> None:
        down = []
        for key, svc in self._sorted():
            try:
                svc.initialize(key, t)
            except NodeUnavailableError as exc:
                down.append(exc.endpoint or self.endpoints[key])
        if down:
            down = sorted(set(down))
            raise InitializationError(f"unreachable simulation services: {', '.join(down)}", endpoints=down)
        self.tL = t
        self.tN = self.ta()

    def ta(self, t: float | None = None) -> float:
        return min((svc.get_tn(key) for key, svc in self._sorted()), default=INF)

    def lambda_(self, t: float) -> None:
        for key, svc in self._sorted():
            svc.lambda_(key, t)

    def collect_outputs(self) -> dict[str, MessageBag]:
        return {key: svc.get_output(key) for key, svc in self._sorted()}

    def propagate_output(self, outputs: Mapping[str, MessageBag] | None = None) -> None:
        if outputs is None:
            outputs = self.collect_outputs()
        for key in sorted(outputs):
            name = self.names[key]
            for item in outputs[key]:
                for c, z in self.couplings.get((name, item.port), ()):
                    dst_key = self.key(c.dst)
                    try:
                        self.simulators[dst_key].receive_input(dst_key, item.port, z(item.value), c.dst_port)
                    except NodeUnavailableError as exc:
                        raise PropagationError(f"delivery failed on coupling {c}: {exc}",
                                               coupling=str(c), endpoint=exc.endpoint) from exc
                    self.relayed += 1

    def deltfcn(self, t: float) -> None:
        for key, svc in self._sorted():
            svc.deltfcn(key, t)

    def simulate(self, iterations: int, end_time: float | None = None) -> RunResult:
        result = RunResult(tL=self.tL, tN=self.tN)
        t = self.tN
        try:
            while result.cycles < iterations and t != INF and (end_time is None or t <= end_time):
                self.lambda_(t)
                outputs = self.collect_outputs()
                for key in sorted(outputs):
                    for item in outputs[key]:
                        result.trace.append(TraceEvent(t, self.names[key], item.port, item.value))
                self.propagate_output(outputs)
                self.deltfcn(t)
                self.tL = t
                self.tN = self.ta()
                t = self.tN
                result.cycles += 1
        except (NodeUnavailableError, PropagationError) as exc:
            result.complete = False
            result.error = str(exc)
        result.tL, result.tN, result.relayed = self.tL, self.tN, self.relayed
        return result

    def exit(self) -> None:
        for key, svc in self._sorted():
            try:
                svc.exit(key)
            except (NotFoundError, NodeUnavailableError) as exc:
                log.warning("exit of %s failed: %s", key, exc)
            except DevsError as exc:  # pragma: no cover - defensive
                log.warning("exit of %s failed: %s", key, exc)
        self.simulators.clear()
        self.names.clear()
        self.endpoints.clear()

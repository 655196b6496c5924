"""Simulation node: main-service and simulation-service layers over HTTP.

One :class:`Node` object is everything a host offers. It can act as main
server (upload, compile, run a coordinator), as simulator host (the
per-simulator protocol) and as real-time peer, all at once. :class:`NodeServer`
exposes it over HTTP; :class:`RemoteNode` is the matching client proxy with
the same method names, so a coordinator does not care where a simulator
lives.
"""

from __future__ import annotations

import argparse
import contextlib
import http.client
import importlib
import itertools
import json
import logging
import os
import queue
import socket
import subprocess
import sys
import threading
import time
import uuid
from collections import Counter, defaultdict
from dataclasses import dataclass, field
from http.server import BaseHTTPRequestHandler, ThreadingHTTPServer
from pathlib import Path
from typing import Callable

from .core import INF, BehaviorRegistry, MessageBag, Payload, validate_coupled
from .errors import (
    AlreadyExistsError,
    AssignmentError,
    CompileError,
    DecodeError,
    DevsError,
    NodeUnavailableError,
    NotFoundError,
    PortUnknownError,
    ProtocolViolationError,
    SchemaError,
    UploadError,
    from_wire,
)
from .models import default_registry
from .proto import (
    MANIFEST_SUFFIX,
    Envelope,
    LogRecord,
    ModelManifest,
    check_assignment,
    component_from_wire,
    component_to_wire,
    decode_bag,
    decode_envelope,
    decode_payload,
    decode_time,
    encode_bag,
    encode_envelope,
    encode_payload,
    encode_time,
    parse_key,
    parse_manifest,
    render_key,
    round_robin_assign,
)
from .sim import Coordinator, RunResult, Simulator, TraceEvent, build_behavior

log = logging.getLogger(__name__)

MAIN_OPS = ("upload", "compile", "topComponents", "simulate", "simulateAssoc",
            "simulateRT", "simulateAssocRT")
SIM_OPS = ("newSimulator", "initialize", "receiveInput", "lambda", "deltfcn", "getOutput",
           "getTN", "exit", "getConsole", "getIp", "rtInstallRoutes", "rtStart", "diagnostics")

RT_LEAD = 0.2      # seconds between rtStart and the shared epoch
RT_GRACE = 0.15    # wait after the observation window before collecting


@dataclass
class Package:
    name: str
    files: dict[str, str]
    version: int = 1
    manifest: ModelManifest | None = None
    namespace: str | None = None


@dataclass
class Route:
    port: str
    dst_key: str
    dst_port: str
    endpoint: str
    translation: str = "identity"


@dataclass
class ClientSession:
    lines: list[str] = field(default_factory=list)
    finished: bool = False
    counters: Counter = field(default_factory=Counter)
    last_seen: float = field(default_factory=time.monotonic)


class Node:
    """State and operations of one simulation node."""

    def __init__(self, address: str, registry: BehaviorRegistry | None = None,
                 log_dir: str | os.PathLike | None = None, idle_timeout: float | None = None,
                 remote: Callable[[str], "RemoteNode"] | None = None):
        self.address = address
        self.registry = registry or default_registry()
        self.log_dir = Path(log_dir) if log_dir else None
        self.idle_timeout = idle_timeout
        self.packages: dict[str, Package] = {}
        self.simulators: dict[str, Simulator] = {}
        self.sessions: dict[str, ClientSession] = {}
        self.routes: dict[str, dict[str, list[Route]]] = {}
        self.runners: dict[str, RealTimeRunner] = {}
        self._remote_factory = remote or RemoteNode
        self._remotes: dict[str, RemoteNode] = {}
        self._table_lock = threading.RLock()
        self._key_locks: dict[str, threading.RLock] = defaultdict(threading.RLock)
        self._ns = itertools.count(1)

    # -- helpers -------------------------------------------------------------
    @property
    def endpoint(self) -> str:
        return self.address

    def service_for(self, endpoint: str):
        if endpoint == self.address:
            return self
        with self._table_lock:
            if endpoint not in self._remotes:
                self._remotes[endpoint] = self._remote_factory(endpoint)
            return self._remotes[endpoint]

    def _session(self, client: str) -> ClientSession:
        with self._table_lock:
            s = self.sessions.get(client)
            if s is None:
                s = self.sessions[client] = ClientSession()
            s.last_seen = time.monotonic()
            return s

    def _logger(self, client: str) -> Callable[[str], None]:
        def emit(line: str) -> None:
            self._session(client).lines.append(line)
            if self.log_dir:
                self.log_dir.mkdir(parents=True, exist_ok=True)
                with open(self.log_dir / f"{client.replace(':', '_')}.log", "a", encoding="utf-8") as fh:
                    fh.write(line + "\n")
        return emit

    def _get(self, key: str) -> Simulator:
        try:
            sim = self.simulators[key]
        except KeyError:
            raise NotFoundError(f"no simulator {key} on {self.address}", key=key) from None
        self._session(parse_key(key).client_address)
        return sim

    def _sweep_idle(self) -> None:
        if self.idle_timeout is None:
            return
        now = time.monotonic()
        with self._table_lock:
            stale = [c for c, s in self.sessions.items() if now - s.last_seen > self.idle_timeout]
            for client in stale:
                for key in [k for k in self.simulators if parse_key(k).client_address == client]:
                    log.info("expiring idle simulator %s", key)
                    self._remove(key)

    def _remove(self, key: str) -> None:
        runner = self.runners.pop(key, None)
        if runner:
            runner.stop()
        self.simulators.pop(key, None)
        self.routes.pop(key, None)
        client = parse_key(key).client_address
        if not any(parse_key(k).client_address == client for k in self.simulators):
            if client in self.sessions:
                self.sessions[client].finished = True

    # -- simulation layer ----------------------------------------------------
    def new_simulator(self, key: str, component: dict) -> None:
        k = parse_key(key)
        self._sweep_idle()
        model = build_behavior(component_from_wire(component), self.registry)
        with self._table_lock:
            if key in self.simulators:
                raise AlreadyExistsError(f"simulator {key} already exists on {self.address}", key=key)
            session = self._session(k.client_address)
            if session.finished:
                self.sessions[k.client_address] = ClientSession()
            self.simulators[key] = Simulator(k.component, model, key, log=self._logger(k.client_address))

    def initialize(self, key: str, t: float) -> None:
        with self._key_locks[key]:
            self._get(key).initialize(t)

    def receive_input(self, key: str, from_port: str, value: Payload, to_port: str,
                      time: float | None = None, peer: bool = False) -> None:
        sim = self._get(key)
        session = self._session(parse_key(key).client_address)
        session.counters["peerInputs" if peer else "coordinatorInputs"] += 1
        runner = self.runners.get(key)
        if runner is not None:
            if to_port not in sim.model.inputs:
                raise PortUnknownError(f"{sim.name} has no input port {to_port!r}", port=to_port)
            runner.deliver(time, to_port, value)
            return
        with self._key_locks[key]:
            sim.receive_input(from_port, value, to_port)

    def lambda_(self, key: str, t: float) -> None:
        with self._key_locks[key]:
            self._get(key).lambda_(t)

    def deltfcn(self, key: str, t: float) -> None:
        with self._key_locks[key]:
            self._get(key).deltfcn(t)

    def get_output(self, key: str) -> MessageBag:
        with self._key_locks[key]:
            return MessageBag(self._get(key).output)

    def get_tn(self, key: str) -> float:
        with self._key_locks[key]:
            return self._get(key).tN

    def exit(self, key: str) -> None:
        with self._table_lock:
            self._get(key)
            self._remove(key)

    def get_console(self, client: str) -> LogRecord:
        s = self.sessions.get(client)
        return LogRecord(self.address, client, list(s.lines) if s else [])

    def get_ip(self) -> str:
        return self.address

    def diagnostics(self, client: str | None = None) -> dict:
        with self._table_lock:
            keys = sorted(k for k in self.simulators
                          if client is None or parse_key(k).client_address == client)
            sims = {}
            for k in keys:
                s = self.simulators[k]
                with self._key_locks[k]:
                    sims[k] = {
                        "component": s.name,
                        "tL": encode_time(s.tL),
                        "tN": encode_time(s.tN),
                        "state": s.model.describe(),
                        "branches": dict(s.branches),
                        "history": [[encode_time(t), p, encode_payload(v)] for t, p, v in s.history],
                        "realtime": k in self.runners,
                    }
            counters = {}
            if client is not None and client in self.sessions:
                counters = dict(self.sessions[client].counters)
        return {"address": self.address, "keys": keys, "simulators": sims, "counters": counters}

    def rt_install_routes(self, key: str, routes: list[Route]) -> None:
        self._get(key)
        with self._table_lock:
            by_port: dict[str, list[Route]] = defaultdict(list)
            for r in routes:
                by_port[r.port].append(r)
            self.routes[key] = dict(by_port)
            old = self.runners.get(key)
            if old is not None:
                old.routes = self.routes[key]
            else:
                self.runners[key] = RealTimeRunner(self, key, self.routes[key])

    def rt_start(self, key: str, observe: float, epoch: float, timescale: float = 1.0) -> None:
        sim = self._get(key)
        runner = self.runners.get(key)
        if runner is None:
            raise ProtocolViolationError(f"no routes installed for {key}")
        if not sim.initialized:
            raise ProtocolViolationError(f"simulator {key} is not initialized")
        runner.start(observe, epoch, timescale)

    # -- main service layer --------------------------------------------------
    def _next_server(self, servers: list[str]) -> str | None:
        idx = servers.index(self.address) if self.address in servers else -1
        return servers[idx + 1] if idx + 1 < len(servers) else None

    def upload(self, package: str, files: list[dict], servers: list[str]) -> list[str]:
        """Store the package, then forward down the server list.

        Returns the endpoints that stored it, in list order.
        """
        manifests = [f for f in files if f["name"].endswith(MANIFEST_SUFFIX)]
        if len(manifests) != 1:
            raise UploadError(f"upload to {self.address} needs exactly one {MANIFEST_SUFFIX} file, got {len(manifests)}",
                              endpoint=self.address)
        with self._table_lock:
            old = self.packages.get(package)
            version = old.version + 1 if old else 1
            self.packages[package] = Package(package, {f["name"]: f["content"] for f in files}, version)
        if old:
            log.info("package %s replaced on %s (v%d)", package, self.address, version)
        stored = [self.address]
        nxt = self._next_server(servers)
        if nxt is not None:
            try:
                stored += self.service_for(nxt).upload(package, files, servers)
            except DevsError as exc:
                raise UploadError(f"forwarding upload to {nxt} failed: {exc}", endpoint=nxt,
                                  stored=stored) from exc
        return stored

    def compile(self, package: str, file_names: list[str], servers: list[str]) -> list[str]:
        pkg = self.packages.get(package)
        if pkg is None:
            raise NotFoundError(f"package {package!r} was not uploaded to {self.address}", package=package)
        names = [n for n in (file_names or pkg.files) if n.endswith(MANIFEST_SUFFIX)]
        if len(names) != 1 or names[0] not in pkg.files:
            raise CompileError(f"package {package!r} has no manifest among {file_names}", endpoint=self.address)
        try:
            manifest = parse_manifest(pkg.files[names[0]])
        except (SchemaError, DecodeError) as exc:
            raise CompileError(f"manifest rejected on {self.address}: {exc}", endpoint=self.address) from exc
        unknown = sorted(k for k in manifest.kinds() if k not in self.registry)
        if unknown:
            raise CompileError(f"unresolved behavior kinds: {', '.join(unknown)}", kinds=unknown,
                               endpoint=self.address)
        violations = validate_coupled(manifest.build(), self.registry)
        if violations:
            raise CompileError(f"invalid model: {'; '.join(map(str, violations))}", endpoint=self.address)
        pkg.manifest = manifest
        pkg.namespace = f"{package}.run{next(self._ns)}-{uuid.uuid4().hex[:8]}"
        compiled = [self.address]
        nxt = self._next_server(servers)
        if nxt is not None:
            try:
                compiled += self.service_for(nxt).compile(package, file_names, servers)
            except NodeUnavailableError as exc:
                raise CompileError(f"forwarding compile to {nxt} failed: {exc}", endpoint=nxt,
                                   compiled=compiled) from exc
        return compiled

    def _manifest(self, package: str) -> ModelManifest:
        pkg = self.packages.get(package)
        if pkg is None or pkg.manifest is None:
            raise NotFoundError(f"package {package!r} is not compiled on {self.address}", package=package)
        return pkg.manifest

    def top_components(self, package: str, root: str | None = None) -> list[str]:
        return self._manifest(package).top_component_names(root)

    def _plan(self, package, root, servers, assignment):
        manifest = self._manifest(package)
        root = root or manifest.top_model
        names = manifest.top_component_names(root)
        if not servers:
            raise AssignmentError("at least one server is required")
        if assignment is None:
            assignment = round_robin_assign(names, servers)
        else:
            check_assignment(assignment, names, servers)
        spec = manifest.build(root)
        return spec, names, {n: assignment[n] for n in names}

    def simulate(self, client: str, package: str, root: str | None, servers: list[str],
                 iterations: int, assignment: dict[str, str] | None = None,
                 end_time: float | None = None) -> dict:
        spec, names, assignment = self._plan(package, root, servers, assignment)
        coord = Coordinator(client, spec, self.registry, key_of=lambda n: render_key(n, client))
        result = RunResult()
        try:
            for name in names:
                ep = assignment[name]
                coord.create(name, self.service_for(ep), component_to_wire(spec.components[name]), ep)
            coord.initialize(0.0)
            result = coord.simulate(iterations, end_time)
        except DevsError as exc:
            result.complete, result.error = False, str(exc)
        return self._finish(client, coord, spec.name, servers, assignment, result, "centralized",
                            {"iterations": iterations})

    def simulate_rt(self, client: str, package: str, root: str | None, servers: list[str],
                    observe: float, assignment: dict[str, str] | None = None,
                    timescale: float = 1.0) -> dict:
        spec, names, assignment = self._plan(package, root, servers, assignment)
        coord = Coordinator(client, spec, self.registry, key_of=lambda n: render_key(n, client))
        result = RunResult()
        try:
            for name in names:
                ep = assignment[name]
                coord.create(name, self.service_for(ep), component_to_wire(spec.components[name]), ep)
            coord.initialize(0.0)
            routes: dict[str, list[Route]] = {coord.key(n): [] for n in names}
            for c in spec.couplings:
                if c.src is None or c.dst is None:
                    continue
                routes[coord.key(c.src)].append(
                    Route(c.src_port, coord.key(c.dst), c.dst_port, assignment[c.dst], c.translation))
            for key, rs in sorted(routes.items()):
                coord.simulators[key].rt_install_routes(key, rs)
            epoch = time.time() + RT_LEAD
            for key, svc in sorted(coord.simulators.items()):
                svc.rt_start(key, observe, epoch, timescale)
            time.sleep(max(0.0, epoch + observe * timescale + RT_GRACE - time.time()))
        except DevsError as exc:
            result.complete, result.error = False, str(exc)
        return self._finish(client, coord, spec.name, servers, assignment, result, "realtime",
                            {"observe": observe, "timescale": timescale})

    def _finish(self, client, coord: Coordinator, root, servers, assignment, result: RunResult,
                mode, bound) -> dict:
        diagnostics = {}
        for ep in dict.fromkeys(servers):
            try:
                diagnostics[ep] = self.service_for(ep).diagnostics(client)
            except DevsError as exc:
                log.warning("diagnostics from %s failed: %s", ep, exc)
                result.complete = False
        stop_rt = mode == "realtime"
        if stop_rt:
            # halt every runner before anything is removed so histories are final
            for key, svc in sorted(coord.simulators.items()):
                with contextlib.suppress(DevsError):
                    svc.exit(key)
            coord.simulators.clear()
        else:
            coord.exit()
        final_states, per_node, counters = {}, {}, {}
        events: list[tuple] = []
        for ep, d in diagnostics.items():
            per_node[ep] = d["keys"]
            counters[ep] = d["counters"]
            for key, info in d["simulators"].items():
                final_states[info["component"]] = info["state"]
                if mode == "realtime":
                    for i, (t, port, value) in enumerate(info["history"]):
                        events.append((decode_time(t), info["component"], i, port, decode_payload(value)))
        if mode == "realtime":
            result.trace = [TraceEvent(t, c, p, v) for t, c, _, p, v in sorted(events, key=lambda e: e[:3])]
            result.cycles = len({e[0] for e in events})
            result.relayed = coord.relayed
        logs = {}
        for ep in dict.fromkeys(servers):
            try:
                logs[ep] = self.service_for(ep).get_console(client).to_wire()
            except DevsError:
                logs[ep] = LogRecord(ep, client, [], available=False).to_wire()
        return {
            "mode": mode,
            "root": root,
            "clientAddress": client,
            "mainServer": self.address,
            "assignment": dict(assignment),
            "bound": bound,
            "iterations": result.cycles,
            "complete": result.complete,
            "error": result.error,
            "tL": encode_time(result.tL),
            "tN": encode_time(result.tN),
            "trace": result.trace_lines(),
            "relayed": result.relayed,
            "finalStates": final_states,
            "keysPerNode": per_node,
            "simulatorsPerNode": {ep: len(keys) for ep, keys in per_node.items()},
            "counters": counters,
            "logs": logs,
        }

    # -- envelope dispatch ---------------------------------------------------
    def handle(self, op: str, env: Envelope) -> dict:
        b = env.body
        key = str(env.key) if env.key is not None else None
        if op == "newSimulator":
            self.new_simulator(key, b["component"])
        elif op == "initialize":
            self.initialize(key, env.time)
        elif op == "receiveInput":
            self.receive_input(key, b["fromPort"], decode_payload(b["value"]), b["toPort"],
                               time=env.time, peer=bool(b.get("peer", False)))
        elif op == "lambda":
            self.lambda_(key, env.time)
        elif op == "deltfcn":
            self.deltfcn(key, env.time)
        elif op == "getOutput":
            return {"output": encode_bag(self.get_output(key))}
        elif op == "getTN":
            return {"tN": encode_time(self.get_tn(key))}
        elif op == "exit":
            self.exit(key)
        elif op == "getConsole":
            return {"log": self.get_console(b["clientAddress"]).to_wire()}
        elif op == "getIp":
            return {"address": self.get_ip()}
        elif op == "diagnostics":
            return self.diagnostics(b.get("clientAddress"))
        elif op == "rtInstallRoutes":
            self.rt_install_routes(key, [Route(r["port"], r["dstKey"], r["dstPort"], r["endpoint"],
                                               r.get("translation", "identity")) for r in b["routes"]])
        elif op == "rtStart":
            self.rt_start(key, b["observe"], b["epoch"], b.get("timescale", 1.0))
        elif op == "upload":
            return {"stored": self.upload(b["packageName"], b["files"], b["servers"])}
        elif op == "compile":
            return {"compiled": self.compile(b["packageName"], b.get("fileNames") or [], b["servers"])}
        elif op == "topComponents":
            return {"names": self.top_components(b["packageName"], b.get("rootName"))}
        elif op in ("simulate", "simulateAssoc"):
            end = b.get("endTime")
            return self.simulate(b["clientAddress"], b["packageName"], b.get("rootName"), b["servers"],
                                 int(b["iterations"]), b.get("assignment") if op == "simulateAssoc" else None,
                                 decode_time(end) if end is not None else None)
        elif op in ("simulateRT", "simulateAssocRT"):
            return self.simulate_rt(b["clientAddress"], b["packageName"], b.get("rootName"), b["servers"],
                                    float(b["observe"]), b.get("assignment") if op == "simulateAssocRT" else None,
                                    float(b.get("timescale", 1.0)))
        else:
            raise NotFoundError(f"unknown operation {op!r}")
        return {}


# ---------------------------------------------------------------------------
# real-time runner


class RealTimeRunner:
    """Runs one simulator against the wall clock, routing outputs to peers."""

    def __init__(self, node: Node, key: str, routes: dict[str, list[Route]]):
        self.node = node
        self.key = key
        self.routes = routes
        self.inbox: queue.Queue = queue.Queue()
        self._stop = threading.Event()
        self._thread: threading.Thread | None = None
        self.missed = 0

    def deliver(self, t: float | None, port: str, value: Payload) -> None:
        self.inbox.put((t, port, value))

    def start(self, observe: float, epoch: float, timescale: float) -> None:
        if self._thread is not None:
            raise ProtocolViolationError(f"{self.key} already started")
        self.observe, self.epoch, self.scale = float(observe), float(epoch), float(timescale)
        self._thread = threading.Thread(target=self._run, name=f"rt-{self.key}", daemon=True)
        self._thread.start()

    def stop(self, timeout: float = 1.0) -> None:
        self._stop.set()
        self.inbox.put(None)
        if self._thread is not None and self._thread is not threading.current_thread():
            self._thread.join(timeout)

    def _wall(self, t: float) -> float:
        return self.epoch + t * self.scale

    def _model_now(self) -> float:
        return max(0.0, (time.time() - self.epoch) / self.scale)

    @property
    def sim(self) -> Simulator:
        return self.node.simulators[self.key]

    def _run(self) -> None:
        try:
            self._loop()
        except Exception:  # noqa: BLE001 - a dying runner must not take the node down
            log.exception("real-time simulator %s failed", self.key)

    def _loop(self) -> None:
        sim = self.sim
        lock = self.node._key_locks[self.key]
        # past the window the runner keeps accepting in-window arrivals until stopped
        while not self._stop.is_set():
            wait = self._wall(sim.tN) - time.time() if sim.tN <= self.observe else None
            try:
                if wait is None:
                    item = self.inbox.get()
                elif wait > 0:
                    item = self.inbox.get(timeout=wait)
                else:
                    item = self.inbox.get_nowait()
            except queue.Empty:
                item = ()
            if item is None:
                break
            if item:
                batch = [item]
                with contextlib.suppress(queue.Empty):
                    while True:
                        nxt = self.inbox.get_nowait()
                        if nxt is None:
                            self._stop.set()
                            break
                        batch.append(nxt)
                self._arrivals(sim, lock, batch)
                continue
            self._internal(sim, lock, sim.tN)

    def _arrivals(self, sim: Simulator, lock, batch) -> None:
        now = self._model_now()
        for t in sorted({now if m[0] is None else m[0] for m in batch}):
            if t > self.observe:
                continue
            t = max(t, sim.tL)
            while sim.tN < t:
                self._internal(sim, lock, sim.tN)
            items = [m for m in batch if (now if m[0] is None else m[0]) <= t]
            batch = [m for m in batch if m not in items]
            if sim.tN == t:
                self._emit(sim, lock, t)
            with lock:
                for _, port, value in items:
                    sim.receive_input(port, value, port)
                sim.deltfcn(t)

    def _internal(self, sim: Simulator, lock, t: float) -> None:
        late = time.time() - self._wall(t)
        if late > 0.05 * self.scale + 0.05:
            self.missed += 1
            log.warning("%s missed its deadline at t=%s by %.3fs", self.key, t, late)
        self._emit(sim, lock, t)
        with lock:
            sim.deltfcn(t)

    def _emit(self, sim: Simulator, lock, t: float) -> None:
        with lock:
            out = MessageBag(sim.lambda_(t))
        for item in out:
            routes = self.routes.get(item.port, [])
            if not routes:
                log.warning("%s: no route for output port %s, message dropped", self.key, item.port)
            for r in routes:
                value = self.node.registry.translation(r.translation)(item.value)
                try:
                    self.node.service_for(r.endpoint).receive_input(
                        r.dst_key, item.port, value, r.dst_port, time=t, peer=True)
                except DevsError as exc:
                    log.warning("%s: delivery to %s failed: %s", self.key, r.dst_key, exc)


# ---------------------------------------------------------------------------
# HTTP transport


class _Handler(BaseHTTPRequestHandler):
    protocol_version = "HTTP/1.1"
    disable_nagle_algorithm = True
    server: "_Server"

    def log_message(self, fmt, *args):  # route through logging instead of stderr
        log.debug("%s " + fmt, self.address_string(), *args)

    def do_POST(self):
        length = int(self.headers.get("Content-Length") or 0)
        raw = self.rfile.read(length)
        parts = self.path.strip("/").split("/")
        request_id = ""
        try:
            if len(parts) != 2 or (parts[0], parts[1]) not in _ROUTES:
                raise NotFoundError(f"no endpoint {self.path}")
            env = decode_envelope(raw)
            request_id = env.request_id
            result = self.server.node.handle(parts[1], env)
            status, body = 200, {"ok": True, "result": result}
        except DevsError as exc:
            status = 404 if isinstance(exc, NotFoundError) else 409 if isinstance(exc, AlreadyExistsError) else 400
            body = {"ok": False, "error": exc.to_wire()}
        except (KeyError, TypeError, ValueError) as exc:
            status, body = 400, {"ok": False, "error": DecodeError(f"bad request body: {exc!r}").to_wire()}
        except Exception as exc:  # noqa: BLE001
            log.exception("request %s failed", self.path)
            status, body = 500, {"ok": False, "error": DevsError(f"internal error: {exc!r}").to_wire()}
        data = encode_envelope(Envelope(parts[-1] if parts else "?", body=_jsonable(body), request_id=request_id))
        self.send_response(status)
        self.send_header("Content-Type", "application/json")
        self.send_header("Content-Length", str(len(data)))
        self.end_headers()
        self.wfile.write(data)


_ROUTES = {("main", op) for op in MAIN_OPS} | {("sim", op) for op in SIM_OPS}


def _jsonable(obj):
    return json.loads(json.dumps(obj, default=str, allow_nan=False))


class _Server(ThreadingHTTPServer):
    daemon_threads = True
    allow_reuse_address = True
    node: Node


class NodeServer:
    """Serves a :class:`Node` over HTTP from a background thread."""

    def __init__(self, host: str = "127.0.0.1", port: int = 0, **node_kwargs):
        self._server = _Server((host, port), _Handler)
        bound_host, bound_port = self._server.server_address[:2]
        self.address = f"{host}:{bound_port}"
        self.node = Node(self.address, **node_kwargs)
        self._server.node = self.node
        self._thread: threading.Thread | None = None

    def start(self) -> "NodeServer":
        self._thread = threading.Thread(target=self._server.serve_forever, kwargs={"poll_interval": 0.05},
                                        name=f"node-{self.address}", daemon=True)
        self._thread.start()
        return self

    def serve_forever(self) -> None:
        self._server.serve_forever()

    def stop(self) -> None:
        for runner in list(self.node.runners.values()):
            runner.stop()
        self._server.shutdown()
        self._server.server_close()

    def __enter__(self):
        return self.start()

    def __exit__(self, *exc):
        self.stop()


class RemoteNode:
    """HTTP proxy for a node; mirrors the :class:`Node` method names."""

    def __init__(self, endpoint: str, timeout: float = 30.0):
        self.endpoint = endpoint
        self.timeout = timeout
        self._local = threading.local()
        self._ids = itertools.count(1)

    def _conn(self) -> tuple[http.client.HTTPConnection, bool]:
        """The thread's connection and whether it was used before."""
        conn = getattr(self._local, "conn", None)
        if conn is not None:
            return conn, True
        host, _, port = self.endpoint.rpartition(":")
        conn = http.client.HTTPConnection(host, int(port), timeout=self.timeout)
        conn.connect()
        conn.sock.setsockopt(socket.IPPROTO_TCP, socket.TCP_NODELAY, 1)
        self._local.conn = conn
        return conn, False

    def _drop(self) -> None:
        conn = getattr(self._local, "conn", None)
        if conn is not None:
            conn.close()
        self._local.conn = None

    def call(self, path: str, env: Envelope, timeout: float | None = None) -> dict:
        env.request_id = env.request_id or f"{os.getpid()}-{next(self._ids)}"
        data = encode_envelope(env)
        headers = {"Content-Type": "application/json"}
        for attempt in (0, 1):
            reused = False
            try:
                conn, reused = self._conn()
                conn.sock.settimeout(timeout or self.timeout)
                conn.request("POST", path, body=data, headers=headers)
                raw = conn.getresponse().read()
                break
            except (ConnectionError, http.client.HTTPException, OSError) as exc:
                self._drop()
                # a kept-alive connection may have been closed by the peer; retry once on a fresh one
                if attempt == 0 and reused and not isinstance(exc, TimeoutError):
                    continue
                raise NodeUnavailableError(f"node {self.endpoint} unreachable: {exc}", endpoint=self.endpoint) from exc
        reply = decode_envelope(raw)
        if not reply.body.get("ok"):
            raise from_wire(reply.body.get("error", {}))
        return reply.body.get("result", {})

    # simulation layer
    def new_simulator(self, key, component):
        self.call("/sim/newSimulator", Envelope("newSimulator", key, body={"component": component}))

    def initialize(self, key, t):
        self.call("/sim/initialize", Envelope("initialize", key, t))

    def receive_input(self, key, from_port, value, to_port, time=None, peer=False):
        body = {"fromPort": from_port, "value": encode_payload(value), "toPort": to_port}
        if peer:
            body["peer"] = True
        self.call("/sim/receiveInput", Envelope("receiveInput", key, time, body))

    def lambda_(self, key, t):
        self.call("/sim/lambda", Envelope("lambda", key, t))

    def deltfcn(self, key, t):
        self.call("/sim/deltfcn", Envelope("deltfcn", key, t))

    def get_output(self, key) -> MessageBag:
        return decode_bag(self.call("/sim/getOutput", Envelope("getOutput", key))["output"])

    def get_tn(self, key) -> float:
        return decode_time(self.call("/sim/getTN", Envelope("getTN", key))["tN"])

    def exit(self, key):
        self.call("/sim/exit", Envelope("exit", key))

    def get_console(self, client) -> LogRecord:
        return LogRecord.from_wire(self.call("/sim/getConsole", Envelope("getConsole", body={"clientAddress": client}))["log"])

    def get_ip(self) -> str:
        return self.call("/sim/getIp", Envelope("getIp"))["address"]

    def diagnostics(self, client=None) -> dict:
        body = {"clientAddress": client} if client else {}
        return self.call("/sim/diagnostics", Envelope("diagnostics", body=body))

    def rt_install_routes(self, key, routes: list[Route]):
        body = {"routes": [{"port": r.port, "dstKey": r.dst_key, "dstPort": r.dst_port,
                            "endpoint": r.endpoint, "translation": r.translation} for r in routes]}
        self.call("/sim/rtInstallRoutes", Envelope("rtInstallRoutes", key, body=body))

    def rt_start(self, key, observe, epoch, timescale=1.0):
        self.call("/sim/rtStart", Envelope("rtStart", key, body={"observe": observe, "epoch": epoch,
                                                                   "timescale": timescale}))

    # main service layer
    def upload(self, package, files, servers) -> list[str]:
        body = {"packageName": package, "files": files, "servers": servers}
        return self.call("/main/upload", Envelope("upload", body=body))["stored"]

    def compile(self, package, file_names, servers) -> list[str]:
        body = {"packageName": package, "fileNames": list(file_names), "servers": servers}
        return self.call("/main/compile", Envelope("compile", body=body))["compiled"]

    def top_components(self, package, root=None) -> list[str]:
        body = {"packageName": package}
        if root:
            body["rootName"] = root
        return self.call("/main/topComponents", Envelope("topComponents", body=body))["names"]

    def simulate(self, client, package, root, servers, iterations, assignment=None, end_time=None) -> dict:
        body = {"clientAddress": client, "packageName": package, "servers": servers, "iterations": iterations}
        if root:
            body["rootName"] = root
        if end_time is not None:
            body["endTime"] = encode_time(end_time)
        op = "simulate"
        if assignment is not None:
            op, body["assignment"] = "simulateAssoc", dict(assignment)
        return self.call(f"/main/{op}", Envelope(op, body=body), timeout=max(self.timeout, 300.0))

    def simulate_rt(self, client, package, root, servers, observe, assignment=None, timescale=1.0) -> dict:
        body = {"clientAddress": client, "packageName": package, "servers": servers,
                "observe": observe, "timescale": timescale}
        if root:
            body["rootName"] = root
        op = "simulateRT"
        if assignment is not None:
            op, body["assignment"] = "simulateAssocRT", dict(assignment)
        return self.call(f"/main/{op}", Envelope(op, body=body),
                         timeout=self.timeout + observe * timescale + 10.0)


# ---------------------------------------------------------------------------
# local clusters and the node daemon


@contextlib.contextmanager
def local_cluster(n: int, *, in_process: bool = False, extra_args: tuple[str, ...] = ()):
    """Start ``n`` nodes on localhost and yield their endpoints.

    Nodes run as separate ``python -m devsoa.node`` processes unless
    ``in_process`` is set, in which case they share this interpreter.
    """
    if in_process:
        servers = [NodeServer().start() for _ in range(n)]
        try:
            yield [s.address for s in servers]
        finally:
            for s in servers:
                s.stop()
        return
    procs, endpoints = [], []
    env = dict(os.environ)
    env.pop("DEVS_NODE_ADDR", None)
    src = str(Path(__file__).resolve().parent.parent)
    env["PYTHONPATH"] = os.pathsep.join(p for p in (src, env.get("PYTHONPATH")) if p)
    try:
        for _ in range(n):
            p = subprocess.Popen([sys.executable, "-m", "devsoa.node", "--listen", "127.0.0.1:0", *extra_args],
                                 stdout=subprocess.PIPE, env=env, text=True)
            procs.append(p)
            line = p.stdout.readline()
            if not line.startswith("listening on "):
                raise RuntimeError(f"node process failed to start: {line!r}")
            endpoints.append(line.split()[-1])
        yield endpoints
    finally:
        for p in procs:
            p.terminate()
        for p in procs:
            try:
                p.wait(5)
            except subprocess.TimeoutExpired:
                p.kill()
            if p.stdout:
                p.stdout.close()


def load_plugin(spec: str, registry: BehaviorRegistry) -> None:
    """``module`` or ``module:function``; the function receives the registry."""
    mod_name, _, func = spec.partition(":")
    getattr(importlib.import_module(mod_name), func or "register")(registry)


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(prog="devs-node", description="Run a DEVS simulation node.")
    parser.add_argument("--listen", default="127.0.0.1:8080", help="host:port (env DEVS_NODE_ADDR overrides)")
    parser.add_argument("--plugin", action="append", default=[], help="module[:function] registering behaviors")
    parser.add_argument("--log-dir", default=None)
    parser.add_argument("--idle-timeout", type=float, default=None, help="seconds before idle clients expire")
    parser.add_argument("-v", "--verbose", action="store_true")
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.WARNING,
                        format="%(asctime)s %(name)s %(levelname)s %(message)s")
    listen = os.environ.get("DEVS_NODE_ADDR") or args.listen
    host, _, port = listen.rpartition(":")
    registry = default_registry()
    for plugin in args.plugin:
        load_plugin(plugin, registry)
    server = NodeServer(host or "127.0.0.1", int(port), registry=registry, log_dir=args.log_dir,
                        idle_timeout=args.idle_timeout)
    print(f"listening on {server.address}", flush=True)
    try:
        server.serve_forever()
    except KeyboardInterrupt:
        pass
    return 0


if __name__ == "__main__":
    sys.exit(main())

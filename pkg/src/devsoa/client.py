"""Command-line client: assign, upload, compile, simulate, report."""

from __future__ import annotations

import argparse
import json
import socket
import sys
import time
from dataclasses import dataclass, field
from pathlib import Path

from .errors import AssignmentError, DevsError, NoServersError
from .node import Node, RemoteNode
from .proto import (
    LogRecord,
    check_assignment,
    parse_assignment,
    parse_key,
    parse_manifest,
    render_key,
    round_robin_assign,
)

IN_PROCESS = "in-process"


@dataclass
class ClientConfig:
    servers: list[str]
    manifest_path: Path
    assignment: str = "auto"
    mode: str = "centralized"
    iterations: int | None = None
    observe: float | None = None
    output_path: Path | None = None
    stable_output: bool = False
    client_address: str | None = None
    timescale: float = 1.0
    root: str | None = None
    in_process: bool = False

    def __post_init__(self):
        self.manifest_path = Path(self.manifest_path)
        if self.in_process:
            self.servers = [IN_PROCESS]
        if not self.servers:
            raise NoServersError("at least one server is required")
        if self.mode not in ("centralized", "rt"):
            raise ValueError(f"unknown mode {self.mode!r}")
        if self.mode == "centralized" and self.iterations is None:
            raise ValueError("centralized mode needs an iteration bound")
        if self.mode == "rt" and self.observe is None:
            raise ValueError("rt mode needs an observation window")


def parse_servers(text: str) -> list[str]:
    servers = []
    for line in text.splitlines():
        line = line.split("#", 1)[0].strip()
        if line:
            servers.append(line)
    return servers


def load_servers(path) -> list[str]:
    return parse_servers(Path(path).read_text(encoding="utf-8"))


def detect_client_address(servers: list[str]) -> str:
    """Local address of the interface used to reach the first server."""
    host, _, port = servers[0].rpartition(":")
    try:
        with socket.socket(socket.AF_INET, socket.SOCK_DGRAM) as s:
            s.connect((host, int(port or 80)))
            return s.getsockname()[0]
    except (OSError, ValueError):
        return "127.0.0.1"


def plan_assignment(config: ClientConfig) -> dict[str, str]:
    manifest = parse_manifest(config.manifest_path.read_bytes())
    names = manifest.top_component_names(config.root)
    if config.assignment == "auto":
        assignment = round_robin_assign(names, config.servers)
    else:
        assignment = parse_assignment(Path(config.assignment).read_bytes())
        check_assignment(assignment, names, config.servers)
    # echo in declaration order
    return {n: assignment[n] for n in names}


@dataclass
class Phase:
    phase: str
    endpoint: str
    ok: bool
    message: str = ""


@dataclass
class SimulationReport:
    servers: list[str]
    client_address: str
    assignment: dict[str, str]
    mode: str = "centralized"
    phases: list[Phase] = field(default_factory=list)
    iterations: int = 0
    trace: list[str] = field(default_factory=list)
    final_states: dict = field(default_factory=dict)
    per_node_output: dict[str, LogRecord] = field(default_factory=dict)
    keys_per_node: dict[str, list[str]] = field(default_factory=dict)
    relayed: int = 0
    error: str | None = None
    started_at: float = field(default_factory=time.time)
    elapsed: float = 0.0
    simulated: bool = False

    @property
    def verdict(self) -> str:
        ok = self.simulated and self.error is None and all(p.ok for p in self.phases)
        return "completed" if ok else "incomplete"

    @property
    def assignment_echo(self) -> list[str]:
        return [f"{name} -> {ep}" for name, ep in self.assignment.items()]

    def _labeller(self, stable: bool):
        labels = {ep: f"node{i}" for i, ep in enumerate(self.servers, 1)} if stable else {}
        client = "client" if stable else self.client_address

        def ep_label(ep: str) -> str:
            return labels.get(ep, ep)

        def key_label(key: str) -> str:
            k = parse_key(key)
            return render_key(k.component, client) if k.client_address == self.client_address else key

        return ep_label, key_label, client

    def to_json(self, stable: bool = False) -> dict:
        ep, key, client = self._labeller(stable)
        obj = {
            "mode": self.mode,
            "clientAddress": client,
            "servers": [ep(s) for s in self.servers],
            "assignment": {n: ep(e) for n, e in self.assignment.items()},
            "assignmentEcho": [f"{n} -> {ep(e)}" for n, e in self.assignment.items()],
            "phases": [{"phase": p.phase, "endpoint": ep(p.endpoint), "ok": p.ok, "message": p.message}
                       for p in self.phases],
            "iterations": self.iterations,
            "trace": list(self.trace),
            "finalStates": self.final_states,
            "perNodeOutput": {ep(e): {"available": r.available, "lines": r.lines}
                              for e, r in self.per_node_output.items()},
            "keysPerNode": {ep(e): [key(k) for k in ks] for e, ks in self.keys_per_node.items()},
            "simulatorsPerNode": {ep(e): len(ks) for e, ks in self.keys_per_node.items()},
            "relayed": self.relayed,
            "error": self.error,
            "verdict": self.verdict,
        }
        if not stable:
            obj["startedAt"] = self.started_at
            obj["elapsedSeconds"] = round(self.elapsed, 6)
        return obj

    def render_plan(self, stable: bool = False) -> str:
        ep, _, _ = self._labeller(stable)
        out = ["Models assigned specifically to respective Server IP:"]
        out += [f"--Component Model: {n} --> {ep(e)}" for n, e in self.assignment.items()]
        return "\n".join(out) + "\n\n"

    def render(self, stable: bool = False, plan: bool = True) -> str:
        ep, _, _ = self._labeller(stable)
        hosts = [s.rpartition(":")[0] or s for s in self.servers]
        short = len(set(hosts)) == len(hosts) and not stable

        def header(e: str) -> str:
            return (e.rpartition(":")[0] or e) if short else ep(e)

        out = []
        phases = {name: [p for p in self.phases if p.phase == name] for name in ("upload", "compile", "simulate")}
        if phases["upload"]:
            out += ["Uploading in progress... please wait...", "Initiating UPLOAD..."]
            for p in phases["upload"]:
                out.append(f"Uploading files to server {ep(p.endpoint)}")
                out.append("Files uploaded." if p.ok else f"UPLOAD FAILED: {p.message}")
            out.append("")
        if phases["compile"]:
            out += ["Compilation in progress....please wait....", "", "Starting compilation at remote servers....."]
            for p in phases["compile"]:
                out.append(f"Compiling project at {ep(p.endpoint)}...")
                out.append("Project compiled." if p.ok else f"COMPILATION FAILED: {p.message}")
            out.append("")
        if phases["simulate"]:
            out += ["Waiting to start SIMULATION....", "", "Simulation in Progress....please wait...",
                    "Running simulation ..."]
            for p in phases["simulate"]:
                if not p.ok:
                    out.append(f"SIMULATION FAILED at {ep(p.endpoint)}: {p.message}")
            if self.simulated:
                out += [f"{self.iterations} iterations.", "Simulators output:", ""]
                for e, record in self.per_node_output.items():
                    out.append(f"{header(e)} output:")
                    out += record.lines if record.available else ["(node unavailable)"]
                    out.append("")
        out.append("SIMULATION over!" if self.verdict == "completed"
                   else f"SIMULATION incomplete: {self.error or 'a phase failed'}")
        return (self.render_plan(stable) if plan else "") + "\n".join(out) + "\n"


def _phase_failure(exc: DevsError, default: str) -> str:
    return getattr(exc, "endpoint", None) or exc.details.get("endpoint") or default


def run(config: ClientConfig, *, echo=None) -> SimulationReport:
    """Upload, compile and simulate via the first server; node failures end up in the report.

    ``echo`` is called with the report right after planning, before any upload.
    """
    started = time.monotonic()
    assignment = plan_assignment(config)
    client = config.client_address or (IN_PROCESS if config.in_process else detect_client_address(config.servers))
    report = SimulationReport(list(config.servers), client, assignment, config.mode)
    if echo:
        echo(report)
    main_ep = config.servers[0]
    main = Node(IN_PROCESS) if config.in_process else RemoteNode(main_ep)
    manifest_bytes = config.manifest_path.read_bytes()
    package = parse_manifest(manifest_bytes).package_name
    files = [{"name": config.manifest_path.name, "content": manifest_bytes.decode("utf-8")}]
    fetch_from = main

    try:
        stored = main.upload(package, files, config.servers)
        report.phases += [Phase("upload", e, True) for e in stored]
    except DevsError as exc:
        stored = list(exc.details.get("stored", []))
        report.phases += [Phase("upload", e, True) for e in stored]
        report.phases.append(Phase("upload", _phase_failure(exc, main_ep), False, exc.message))
        report.error = f"upload failed: {exc.message}"
        report.elapsed = time.monotonic() - started
        return report

    try:
        compiled = main.compile(package, [config.manifest_path.name], config.servers)
        report.phases += [Phase("compile", e, True) for e in compiled]
    except DevsError as exc:
        compiled = list(exc.details.get("compiled", []))
        report.phases += [Phase("compile", e, True) for e in compiled]
        report.phases.append(Phase("compile", _phase_failure(exc, main_ep), False, exc.message))
        report.error = f"compile failed: {exc.message}"
        report.elapsed = time.monotonic() - started
        return report

    explicit = None if config.assignment == "auto" else assignment
    try:
        if config.mode == "centralized":
            result = main.simulate(client, package, config.root, config.servers, config.iterations, explicit)
        else:
            result = main.simulate_rt(client, package, config.root, config.servers, config.observe,
                                      explicit, config.timescale)
    except DevsError as exc:
        report.phases.append(Phase("simulate", _phase_failure(exc, main_ep), False, exc.message))
        report.error = f"simulate failed: {exc.message}"
        report.per_node_output = fetch_logs(config, client, main=fetch_from)
        report.elapsed = time.monotonic() - started
        return report

    report.simulated = True
    report.phases.append(Phase("simulate", main_ep, bool(result["complete"]), result.get("error") or ""))
    report.iterations = result["iterations"]
    report.trace = result["trace"]
    report.final_states = result["finalStates"]
    report.keys_per_node = result["keysPerNode"]
    report.relayed = result["relayed"]
    report.error = result.get("error")
    report.per_node_output = {e: LogRecord.from_wire(result["logs"][e]) if e in result["logs"]
                              else LogRecord(e, client, [], available=False) for e in config.servers}
    report.elapsed = time.monotonic() - started
    return report


def fetch_logs(config: ClientConfig, client_address: str, main=None) -> dict[str, LogRecord]:
    """One console record per server, in server-list order; unreachable nodes get a placeholder."""
    records = {}
    for ep in config.servers:
        svc = main if (main is not None and ep == config.servers[0]) else RemoteNode(ep, timeout=5.0)
        try:
            records[ep] = svc.get_console(client_address)
        except DevsError:
            records[ep] = LogRecord(ep, client_address, [], available=False)
    return records


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="devs-client", description="Run a distributed DEVS simulation.")
    sub = parser.add_subparsers(dest="command", required=True)
    r = sub.add_parser("run", help="upload, compile and simulate a model")
    where = r.add_mutually_exclusive_group(required=True)
    where.add_argument("--servers", help="file with one host:port per line; the first is the main server")
    where.add_argument("--in-process", action="store_true", help="simulate inside this process")
    r.add_argument("--model", required=True, help="model manifest (.devs.json)")
    r.add_argument("--assign", default="auto", help="'auto' or an assignment JSON file")
    r.add_argument("--mode", choices=("centralized", "rt"), default="centralized")
    bound = r.add_mutually_exclusive_group(required=True)
    bound.add_argument("--iterations", type=int)
    bound.add_argument("--observe", type=float, help="observation window in model seconds (rt mode)")
    r.add_argument("--timescale", type=float, default=1.0, help="wall seconds per model second (rt mode)")
    r.add_argument("--root", default=None, help="coupled model to run (default: the manifest's topModel)")
    r.add_argument("--out", default=None, help="write the structured report here")
    r.add_argument("--stable-output", action="store_true", help="substitute addresses, drop timestamps")
    r.add_argument("--client-addr", default=None)
    return parser


def main(argv=None) -> int:
    args = _build_parser().parse_args(argv)
    try:
        config = ClientConfig(
            servers=load_servers(args.servers) if args.servers else [],
            manifest_path=Path(args.model),
            assignment=args.assign,
            mode=args.mode,
            iterations=args.iterations,
            observe=args.observe,
            output_path=Path(args.out) if args.out else None,
            stable_output=args.stable_output,
            client_address=args.client_addr,
            timescale=args.timescale,
            root=args.root,
            in_process=args.in_process,
        )
        report = run(config, echo=lambda r: sys.stdout.write(r.render_plan(config.stable_output)))
    except (AssignmentError, NoServersError, ValueError, OSError, DevsError) as exc:
        print(f"devs-client: {exc}", file=sys.stderr)
        return 2
    sys.stdout.write(report.render(config.stable_output, plan=False))
    if config.output_path:
        config.output_path.write_text(
            json.dumps(report.to_json(config.stable_output), indent=2, sort_keys=True, ensure_ascii=False) + "\n",
            encoding="utf-8")
    return 0 if report.verdict == "completed" else 1


if __name__ == "__main__":
    sys.exit(main())

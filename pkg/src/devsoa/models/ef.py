"""Experimental-frame agents: generator, processor, transducer, acceptor."""

from __future__ import annotations

from dataclasses import dataclass, field

from ..core import INF, AtomicBehavior, MessageBag, PhaseState, PortValue
from ..errors import BehaviorConfigError


def _positive(name: str, value) -> float:
    if isinstance(value, bool) or not isinstance(value, (int, float)) or not value > 0:
        raise BehaviorConfigError(f"{name} must be > 0, got {value!r}", parameter=name)
    return float(value)


@dataclass
class GeneratorState(PhaseState):
    count: int = 0


class Generator(AtomicBehavior):
    """Emits ``Job#k`` on ``out`` every ``period``; a ``stop`` input passivates it."""

    kind = "ef.generator"
    inputs = ("stop",)
    outputs = ("out",)

    def __init__(self, period: float = 1.0, limit: int | None = None):
        self.period = _positive("period", period)
        if limit is not None and (isinstance(limit, bool) or not isinstance(limit, int) or limit < 0):
            raise BehaviorConfigError(f"limit must be a non-negative integer, got {limit!r}", parameter="limit")
        self.limit = limit
        self.state = GeneratorState("active", self.period)
        if limit == 0:
            self.state = GeneratorState("passive", INF)

    def internal(self):
        s = self.state
        s.count += 1
        if self.limit is not None and s.count >= self.limit:
            s.phase, s.sigma = "passive", INF
        else:
            s.phase, s.sigma = "active", self.period

    def external(self, e, items):
        if any(i.port == "stop" for i in items):
            self.state.phase, self.state.sigma = "passive", INF
        else:
            self._continue(e)

    def out(self):
        if self.state.phase != "active":
            return MessageBag()
        return MessageBag([("out", f"Job#{self.state.count + 1}")])

    def describe(self):
        return {"phase": self.phase, "jobsSent": self.state.count}


@dataclass
class ProcessorState(PhaseState):
    job: object = None
    served: int = 0
    dropped: int = 0


class Processor(AtomicBehavior):
    """Single-server processor; jobs arriving while busy are dropped."""

    kind = "ef.processor"
    inputs = ("in",)
    outputs = ("out",)

    def __init__(self, procTime: float = 1.0):
        self.proc_time = _positive("procTime", procTime)
        self.state = ProcessorState("passive", INF)

    def internal(self):
        s = self.state
        if s.phase == "busy":
            s.served += 1
        s.phase, s.sigma, s.job = "passive", INF, None

    def external(self, e, items):
        s = self.state
        jobs = [i.value for i in items if i.port == "in"]
        if s.phase == "busy":
            s.dropped += len(jobs)
            self._continue(e)
            return
        first, *rest = jobs
        s.phase, s.sigma, s.job = "busy", self.proc_time, first
        s.dropped += len(rest)

    def out(self):
        if self.state.phase != "busy":
            return MessageBag()
        return MessageBag([("out", self.state.job)])

    @property
    def in_service(self) -> int:
        return 1 if self.state.phase == "busy" else 0

    def describe(self):
        s = self.state
        return {"phase": s.phase, "served": s.served, "dropped": s.dropped, "inService": self.in_service}


@dataclass
class EFStats:
    jobsSent: int
    jobsReceived: int
    throughput: float
    turnaround: float


@dataclass
class TransducerState(PhaseState):
    clock: float = 0.0
    arrived: dict = field(default_factory=dict)
    sent: int = 0
    received: int = 0
    total_turnaround: float = 0.0


class Transducer(AtomicBehavior):
    """Counts arrivals (``ariv``) and completions (``solved``).

    With a finite ``observeWindow`` it publishes its statistics on ``out``
    when the window closes and ignores everything afterwards.
    """

    kind = "ef.transducer"
    inputs = ("ariv", "solved")
    outputs = ("out",)

    def __init__(self, observeWindow: float = INF):
        self.window = _positive("observeWindow", observeWindow)
        self.state = TransducerState("active", self.window)

    def stats(self) -> EFStats:
        s = self.state
        throughput = s.received / s.clock if s.clock > 0 else 0.0
        turnaround = s.total_turnaround / s.received if s.received else 0.0
        return EFStats(s.sent, s.received, throughput, turnaround)

    def internal(self):
        s = self.state
        if s.phase == "active":
            s.clock += s.sigma
        s.phase, s.sigma = "done", INF

    def external(self, e, items):
        s = self.state
        s.clock += e
        self._continue(e)
        if s.phase != "active":
            return
        for item in items:
            key = repr(item.value)
            if item.port == "ariv":
                s.sent += 1
                s.arrived[key] = s.clock
            else:
                s.received += 1
                s.total_turnaround += s.clock - s.arrived.pop(key, s.clock)

    def out(self):
        if self.state.phase != "active":
            return MessageBag()
        st = self.stats()
        # the window is closing: report with the clock at closing time
        clock = self.state.clock + self.state.sigma
        throughput = st.jobsReceived / clock if clock > 0 else 0.0
        return MessageBag([("out", {
            "jobsSent": st.jobsSent,
            "jobsReceived": st.jobsReceived,
            "throughput": float(throughput),
            "turnaround": float(st.turnaround),
        })])

    def describe(self):
        s = self.state
        st = self.stats()
        return {"phase": s.phase, "jobsSent": st.jobsSent, "jobsReceived": st.jobsReceived,
                "clock": s.clock, "throughput": st.throughput, "turnaround": st.turnaround}


@dataclass
class AcceptorState(PhaseState):
    clock: float = 0.0
    solved: int = 0


class Acceptor(AtomicBehavior):
    """Checks every ``checkInterval`` whether ``minSolved`` completions were seen
    by ``byTime``; on the first failed check it emits ``stop`` on ``control``."""

    kind = "ef.acceptor"
    inputs = ("solved",)
    outputs = ("control",)

    def __init__(self, thresholds: dict | None = None, checkInterval: float = 1.0):
        thresholds = dict(thresholds or {})
        unknown = set(thresholds) - {"minSolved", "byTime"}
        if unknown:
            raise BehaviorConfigError(f"unknown thresholds {sorted(unknown)}", parameter="thresholds")
        self.min_solved = thresholds.get("minSolved", 1)
        if isinstance(self.min_solved, bool) or not isinstance(self.min_solved, int) or self.min_solved < 1:
            raise BehaviorConfigError("minSolved must be a positive integer", parameter="minSolved")
        self.by_time = _positive("byTime", thresholds.get("byTime", 1.0))
        self.interval = _positive("checkInterval", checkInterval)
        self.state = AcceptorState("monitoring", self.interval)

    def _violated(self, at: float) -> bool:
        return at >= self.by_time and self.state.solved < self.min_solved

    def internal(self):
        s = self.state
        if s.phase != "monitoring":
            s.sigma = INF
            return
        s.clock += s.sigma
        if self._violated(s.clock):
            s.phase, s.sigma = "stopped", INF
        elif s.clock >= self.by_time:
            s.phase, s.sigma = "accepted", INF
        else:
            s.sigma = self.interval

    def external(self, e, items):
        s = self.state
        s.clock += e
        self._continue(e)
        s.solved += sum(1 for i in items if i.port == "solved")

    def out(self):
        s = self.state
        if s.phase == "monitoring" and self._violated(s.clock + s.sigma):
            return MessageBag([PortValue("control", "stop")])
        return MessageBag()

    def describe(self):
        return {"phase": self.phase, "solved": self.state.solved}

"""Joint Close Air Support scenario components.

Minimal state machines that replay the published two-host console trace.
Every timed phase lasts one time unit (two for the AWACS situation brief),
so the scenario spans logical times 0..10: eleven simulation cycles.
Message values are text payloads carrying the scenario's message names.
"""

from __future__ import annotations

from dataclasses import dataclass

from ..core import INF, AtomicBehavior, MessageBag, PhaseState


class _Scripted(AtomicBehavior):
    """Phase/sigma machine where unexpected inputs are ignored."""

    def __init__(self, phase: str, sigma: float = INF):
        self.state = PhaseState(phase, sigma)

    def _go(self, phase: str, sigma: float = INF):
        self.state.phase, self.state.sigma = phase, sigma


class JTAC(_Scripted):
    kind = "jcas.jtac"
    inputs = ("assignmentIn", "TACRequestIn", "fireCommandIn")
    outputs = ("ImmediateCASOut", "TACCommandOut")

    def __init__(self):
        super().__init__("requestCAS", 1.0)

    def internal(self):
        nxt = {"requestCAS": "waitForAssignment",
               "terminalControl": "continueExecution",
               "assessment": "passive"}
        self._go(nxt.get(self.phase, self.phase))

    def external(self, e, items):
        ports = {i.port for i in items}
        if self.phase in ("waitForAssignment", "assigned") and "TACRequestIn" in ports:
            self._go("terminalControl", 1.0)
        elif self.phase == "waitForAssignment" and "assignmentIn" in ports:
            self._go("assigned")
        elif self.phase == "continueExecution" and "fireCommandIn" in ports:
            self._go("assessment", 1.0)
        else:
            self._continue(e)

    def out(self):
        return {
            "requestCAS": MessageBag([("ImmediateCASOut", "CASResourcesSpec")]),
            "terminalControl": MessageBag([("TACCommandOut", "initialAttack")]),
            "assessment": MessageBag([("TACCommandOut", "ceaseAttack")]),
        }.get(self.phase, MessageBag())


class AWACS(_Scripted):
    kind = "jcas.awacs"
    inputs = ("requestImmediateCASIn", "sitBriefRequestIn")
    outputs = ("requestImmediateCASOut", "sitBriefOut")

    def __init__(self):
        super().__init__("doSurveillance")

    def internal(self):
        self._go("doSurveillance")

    def external(self, e, items):
        ports = {i.port for i in items}
        if self.phase != "doSurveillance":
            self._continue(e)
        elif "requestImmediateCASIn" in ports:
            self._go("relayRequest", 1.0)
        elif "sitBriefRequestIn" in ports:
            self._go("briefing", 2.0)
        else:
            self._continue(e)

    def out(self):
        return {
            "relayRequest": MessageBag([("requestImmediateCASOut", "CASResourcesSpec")]),
            "briefing": MessageBag([("sitBriefOut", "sitBrief")]),
        }.get(self.phase, MessageBag())


class CAOC(_Scripted):
    kind = "jcas.caoc"
    inputs = ("requestImmediateCASIn",)
    outputs = ("readyOrderOut", "YouCanUseUSMCAircraftOut")

    def __init__(self):
        super().__init__("passive")

    def internal(self):
        self._go("passive")

    def external(self, e, items):
        if self.phase == "passive":
            self._go("approve", 1.0)
        else:
            self._continue(e)

    def out(self):
        if self.phase != "approve":
            return MessageBag()
        return MessageBag([("readyOrderOut", "getReady"),
                           ("YouCanUseUSMCAircraftOut", "CASResources")])


class UAV(_Scripted):
    kind = "jcas.uav"
    inputs = ("deconflictRequestIn",)
    outputs = ("targetLocationOut",)

    def __init__(self):
        super().__init__("passive")

    def internal(self):
        self._go("passive")

    def external(self, e, items):
        if self.phase == "passive":
            self._go("deconflict", 1.0)
        else:
            self._continue(e)

    def out(self):
        if self.phase != "deconflict":
            return MessageBag()
        return MessageBag([("targetLocationOut", "(Lat,Long)")])


@dataclass
class AircraftState(PhaseState):
    briefed: bool = False
    located: bool = False
    fired: bool = False
    ceased: bool = False


class USMCAircraft(AtomicBehavior):
    kind = "jcas.usmc_aircraft"
    inputs = ("readyOrderIn", "TACCommandIn", "sitBriefIn", "targetLocationIn")
    outputs = ("requestForTACOut", "sitBriefRequestOut", "deconflictRequestOut", "fireCommand")

    def __init__(self):
        self.state = AircraftState("standby")

    def internal(self):
        s = self.state
        if s.phase == "enRoute":
            s.phase, s.sigma = "waitForTAC", INF
        elif s.phase == "prepareAttack":
            s.phase, s.sigma = "attack", INF
        elif s.phase == "attack":
            s.fired, s.sigma = True, INF
        else:
            s.sigma = INF

    def external(self, e, items):
        s = self.state
        self._continue(e)
        for item in items:
            if s.phase == "standby" and item.port == "readyOrderIn":
                s.phase, s.sigma = "enRoute", 1.0
            elif s.phase == "waitForTAC" and item.port == "TACCommandIn" and item.value == "initialAttack":
                s.phase, s.sigma = "prepareAttack", 1.0
            elif s.phase == "attack":
                if item.port == "sitBriefIn":
                    s.briefed = True
                elif item.port == "targetLocationIn":
                    s.located = True
                elif item.port == "TACCommandIn" and item.value == "ceaseAttack":
                    s.ceased = True
        if s.phase == "attack" and s.briefed and s.located and not s.fired and not s.ceased and s.sigma == INF:
            s.sigma = 1.0

    def out(self):
        s = self.state
        if s.phase == "enRoute":
            return MessageBag([("requestForTACOut", "requestTAC")])
        if s.phase == "prepareAttack":
            return MessageBag([("sitBriefRequestOut", "sitBriefRequest"),
                               ("deconflictRequestOut", "requestDeconflict")])
        if s.phase == "attack" and s.sigma < INF:
            return MessageBag([("fireCommand", "fire")])
        return MessageBag()

    def describe(self):
        s = self.state
        return {"phase": s.phase, "fired": s.fired, "ceased": s.ceased}


class CAOCObserver(AtomicBehavior):
    """Passive observer of CAOC orders; counts what it sees."""

    kind = "jcas.observer"
    inputs = ("observeIn",)
    outputs = ()

    @dataclass
    class State(PhaseState):
        seen: int = 0

    def __init__(self):
        self.state = self.State("passive")

    def internal(self):
        self.state.sigma = INF

    def external(self, e, items):
        self.state.seen += len(items)

    def describe(self):
        return {"phase": self.phase, "seen": self.state.seen}


class ScenarioStart(_Scripted):
    """Scenario wrapper: opens the run with an output-free transition at t=0."""

    kind = "jcas.scenario"
    inputs = ()
    outputs = ()

    def __init__(self):
        super().__init__("start", 0.0)

    def internal(self):
        self._go("passive")

    def external(self, e, items):
        self._continue(e)

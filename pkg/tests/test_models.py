import random

import pytest

import oracles
from devsoa.core import INF, MessageBag
from devsoa.models import BUILTIN_BEHAVIORS, Acceptor, Processor, Transducer, bundled_manifest_bytes
from devsoa.proto import parse_manifest
from support import manifest_spec, random_walk, run_local

# frozen from the oracle in oracles.pipeline(1, 2.5, 10)
EF_T10 = {"sent": 10, "received": 3, "dropped": 6, "in_service": 1}
FIRST_FOUR_TIMES = [1.0, 2.0, 3.0, 3.5]


def test_frozen_values_match_oracle():
    o = oracles.pipeline(1, 2.5, 10)
    assert {k: o[k] for k in EF_T10} == EF_T10
    assert oracles.pipeline(1, 2.5, 3.5)["times"] == FIRST_FOUR_TIMES


def final(node_or_coord, name):
    node, coord = node_or_coord
    return node.simulators[coord.key(name)].model


class TestPipeline:
    def test_run_to_ten(self, pipeline_path):
        spec = manifest_spec(pipeline_path)
        result, node, coord = run_local(spec, end_time=10)
        gen, proc, transd = (node.simulators[coord.key(n)].model for n in ("gen", "proc", "transd"))
        stats = transd.stats()
        assert stats.jobsSent == EF_T10["sent"]
        assert stats.jobsReceived == EF_T10["received"]
        assert proc.state.dropped == EF_T10["dropped"]
        assert proc.in_service == EF_T10["in_service"]
        completions = [e.t for e in result.trace if e.component == "proc"]
        assert completions == oracles.pipeline(1, 2.5, 10)["completions"]
        assert stats.throughput == pytest.approx(3 / 10)
        assert stats.turnaround == pytest.approx(2.5)

    def test_first_four_cycles(self, pipeline_path):
        result, _, _ = run_local(manifest_spec(pipeline_path), iterations=4)
        assert sorted({e.t for e in result.trace}) == FIRST_FOUR_TIMES
        assert result.cycles == 4

    @pytest.mark.parametrize("proc_time", [0.5, 1.0, 2.0, 2.5, 3.75])
    def test_conservation_at_every_cycle(self, pipeline_path, proc_time):
        spec = manifest_spec(pipeline_path)
        spec.components["proc"] = type(spec.components["proc"])("ef.processor", {"procTime": proc_time})
        _, node, coord = run_local(spec, iterations=0)
        for _ in range(30):
            coord.simulate(1)
            gen = node.simulators[coord.key("gen")].model
            proc = node.simulators[coord.key("proc")].model
            transd = node.simulators[coord.key("transd")].model
            sent = gen.state.count
            assert sent == transd.stats().jobsSent
            assert sent == transd.stats().jobsReceived + proc.state.dropped + proc.in_service
        expected = oracles.pipeline(1, proc_time, coord.tL)
        assert transd.stats().jobsReceived == expected["received"]
        assert proc.state.dropped == expected["dropped"]


class TestTransducer:
    def test_zero_arrivals_zero_throughput(self):
        t = Transducer()
        assert t.stats().throughput == 0.0
        t.delta_ext(3.0, MessageBag([("solved", "nothing")]))
        assert t.stats().throughput == pytest.approx(1 / 3)

    def test_window_publishes_stats(self):
        t = Transducer(observeWindow=4.0)
        t.delta_ext(1.0, MessageBag([("ariv", "J1")]))
        t.delta_ext(2.0, MessageBag([("solved", "J1")]))
        (item,) = list(t.output())
        assert item.port == "out"
        assert item.value == {"jobsSent": 1, "jobsReceived": 1, "throughput": 0.25, "turnaround": 2.0}
        t.delta_int()
        assert t.phase == "done"
        t.delta_ext(1.0, MessageBag([("ariv", "J2")]))
        assert t.stats().jobsSent == 1


class TestAcceptor:
    def test_monitoring_self_loop(self):
        a = Acceptor({"minSolved": 1, "byTime": 3.0}, checkInterval=1.0)
        assert a.output() == MessageBag()
        a.delta_int()
        assert a.phase == "monitoring" and a.ta() == 1.0

    def test_stop_on_pipeline(self, registry):
        from devsoa.core import AtomicRef, CoupledSpec, Coupling
        spec = CoupledSpec("EF", {
            "acc": AtomicRef("ef.acceptor", {"thresholds": {"minSolved": 1, "byTime": 3.0}, "checkInterval": 1.0}),
            "gen": AtomicRef("ef.generator", {"period": 1.0}),
            "proc": AtomicRef("ef.processor", {"procTime": 2.5}),
        }, [Coupling("gen", "out", "proc", "in"), Coupling("proc", "out", "acc", "solved"),
            Coupling("acc", "control", "gen", "stop")])
        result, node, coord = run_local(spec, end_time=20)
        stops = [e for e in result.trace if e.component == "acc"]
        expected_t = oracles.acceptor_stop_time(1.0, 3.0, oracles.pipeline(1, 2.5, 20)["completions"], 1)
        assert [(e.t, e.port, e.value) for e in stops] == [(expected_t, "control", "stop")]
        assert node.simulators[coord.key("gen")].model.phase == "passive"
        assert node.simulators[coord.key("acc")].model.phase == "stopped"

    def test_accepts_when_threshold_met(self):
        a = Acceptor({"minSolved": 1, "byTime": 2.0})
        a.delta_ext(0.5, MessageBag([("solved", "J1")]))
        a.delta_int()
        a.delta_int()
        assert a.phase == "accepted" and a.output() == MessageBag()

    @pytest.mark.parametrize("thresholds", [{"minSolved": 0}, {"byTime": -1}, {"other": 1}])
    def test_bad_thresholds(self, registry, thresholds):
        from devsoa.errors import BehaviorConfigError
        with pytest.raises(BehaviorConfigError):
            registry.instantiate("ef.acceptor", {"thresholds": thresholds})


class TestJcas:
    def test_jtac_first_output(self, registry):
        jtac = registry.instantiate("jcas.jtac")
        assert jtac.output() == MessageBag([("ImmediateCASOut", "CASResourcesSpec")])

    def test_model_is_closed(self, registry):
        spec = parse_manifest(bundled_manifest_bytes("jcas")).build()
        coupled = {(c.src, c.src_port) for c in spec.couplings}
        for name, ref in spec.components.items():
            for port in registry.instantiate(ref.kind, ref.params).outputs:
                assert (name, port) in coupled or port in spec.outputs, f"{name}.{port} is dangling"

    def test_only_declared_phases(self, jcas_path):
        declared = {
            "JTAC": {"requestCAS", "waitForAssignment", "assigned", "terminalControl", "continueExecution",
                     "assessment", "passive"},
            "AWACS": {"doSurveillance", "relayRequest", "briefing"},
            "CAOC": {"passive", "approve"},
            "UAV": {"passive", "deconflict"},
            "USMCAircraft": {"standby", "enRoute", "waitForTAC", "prepareAttack", "attack"},
        }
        _, node, coord = run_local(manifest_spec(jcas_path), iterations=0)
        for _ in range(12):
            coord.simulate(1)
            for name, phases in declared.items():
                assert node.simulators[coord.key(name)].model.phase in phases


@pytest.mark.parametrize("cls", BUILTIN_BEHAVIORS, ids=lambda c: c.kind)
def test_confluent_identity_on_walks(registry, cls):
    rng = random.Random(cls.kind)
    for _ in range(20):
        model = registry.instantiate(cls.kind, {})
        for state in random_walk(model, rng, 50):
            a, b = state.clone(), state.clone()
            a.delta_con(a.ta() if a.ta() != INF else 0.0, MessageBag())
            b.delta_int()
            assert a.state == b.state


def test_deltfcn_branches_covered(pipeline_path, jcas_path):
    from collections import Counter
    spec = manifest_spec(pipeline_path)
    spec.components["proc"] = type(spec.components["proc"])("ef.processor", {"procTime": 2.0})
    branches = Counter()
    for s in (spec, manifest_spec(jcas_path)):
        _, node, _ = run_local(s, end_time=12)
        for sim in node.simulators.values():
            branches.update(sim.branches)
    assert set(branches) == {"noop", "internal", "external", "confluent"}
    assert all(v > 0 for v in branches.values())


def test_processor_drop_policy():
    p = Processor(procTime=2.0)
    p.delta_ext(0.0, MessageBag([("in", "J1"), ("in", "J2")]))
    assert p.state.job == "J1" and p.state.dropped == 1
    p.delta_ext(1.0, MessageBag([("in", "J3")]))
    assert p.state.job == "J1" and p.state.dropped == 2 and p.ta() == 1.0

import math

import pytest
from hypothesis import given
from hypothesis import strategies as st

from devsoa.core import (
    EMPTY,
    INF,
    AtomicRef,
    BehaviorRegistry,
    CoupledSpec,
    Coupling,
    MessageBag,
    PortValue,
    payload_from_json,
    payload_to_json,
    render_payload,
    validate_coupled,
)
from devsoa.errors import BehaviorConfigError, PortUnknownError, ProtocolViolationError, UnknownBehaviorError
from devsoa.models import Generator, Processor, Transducer

payloads = st.recursive(
    st.one_of(st.text(), st.integers(), st.booleans(), st.floats(allow_nan=False, allow_infinity=False)),
    lambda inner: st.dictionaries(st.text(max_size=5), inner, max_size=3),
    max_leaves=8,
)
ports = st.sampled_from(["a", "b", "in", "out"])


class TestPayloads:
    @given(payloads)
    def test_tagged_round_trip(self, value):
        back = payload_from_json(payload_to_json(value))
        assert payload_to_json(back) == payload_to_json(value)

    def test_bool_is_not_int(self):
        assert payload_to_json(True) == {"bool": True}
        assert payload_to_json(1) == {"int": 1}

    @pytest.mark.parametrize("bad", [math.inf, math.nan, None, [1, 2], {1: "x"}])
    def test_rejects_unsupported(self, bad):
        with pytest.raises(TypeError):
            payload_to_json(bad)

    @pytest.mark.parametrize("bad", [{"text": 1}, {"int": True}, {"x": 1}, {"text": "a", "int": 1}, "a"])
    def test_rejects_malformed_wire(self, bad):
        with pytest.raises(TypeError):
            payload_from_json(bad)

    def test_render(self):
        assert render_payload("(Lat,Long)") == "(Lat,Long)"
        assert render_payload(2.5) == "2.5"
        assert render_payload({"b": 1, "a": "x"}) == '{"a":"x","b":1}'


class TestMessageBag:
    @given(st.lists(st.tuples(ports, payloads), max_size=8), st.randoms())
    def test_permutation_equal(self, items, rnd):
        shuffled = list(items)
        rnd.shuffle(shuffled)
        assert MessageBag(items) == MessageBag(shuffled)

    def test_multiset_not_set(self):
        assert MessageBag([("a", 1), ("a", 1)]) != MessageBag([("a", 1)])

    def test_ordered_groups_ports_keeping_arrival(self):
        bag = MessageBag([("b", 1), ("a", 2), ("b", 0), ("a", 1)])
        assert [(i.port, i.value) for i in bag.ordered()] == [("a", 2), ("a", 1), ("b", 1), ("b", 0)]

    def test_empty_is_falsy(self):
        assert not EMPTY and len(EMPTY) == 0

    def test_render_matches_console_layout(self):
        bag = MessageBag([("readyOrderOut", "getReady"), ("YouCanUseUSMCAircraftOut", "CASResources")])
        assert bag.render() == ("<< port: readyOrderOut value: getReady "
                                "port: YouCanUseUSMCAircraftOut value: CASResources >>")

    def test_port_value_validation(self):
        with pytest.raises(ValueError):
            PortValue("", 1)
        with pytest.raises(TypeError):
            PortValue("a", object())

    def test_unhashable(self):
        with pytest.raises(TypeError):
            hash(MessageBag())


class TestAtomicContract:
    def test_ta_examples(self):
        assert Generator(period=1).ta() == 1.0
        assert Processor().ta() == INF
        p = Processor(procTime=2.5)
        p.delta_ext(0.3, MessageBag([("in", "Job#1")]))
        assert p.phase == "busy" and p.ta() == 2.5 and p.state.job == "Job#1"

    def test_internal_examples(self):
        g = Generator(period=1)
        g.delta_int()
        assert g.phase == "active" and g.ta() == 1.0
        p = Processor(procTime=2.5)
        p.delta_ext(0.0, MessageBag([("in", "J")]))
        p.delta_int()
        assert p.phase == "passive" and p.ta() == INF

    def test_transducer_counts_arrival(self):
        t = Transducer()
        t.delta_ext(4.2, MessageBag([("ariv", "Job#1")]))
        assert t.stats().jobsSent == 1

    def test_undeclared_input_port(self):
        p = Processor()
        with pytest.raises(PortUnknownError):
            p.delta_ext(0.0, MessageBag([("bogus", "x")]))
        assert p.phase == "passive"

    def test_elapsed_beyond_ta(self):
        g = Generator(period=1)
        with pytest.raises(ProtocolViolationError):
            g.delta_ext(1.5, MessageBag([("stop", "x")]))
        with pytest.raises(ValueError):
            g.delta_ext(-1, MessageBag([("stop", "x")]))

    def test_default_confluent_is_internal_then_external(self):
        p = Processor(procTime=2.5)
        p.delta_ext(0.0, MessageBag([("in", "J1")]))
        p.delta_con(2.5, MessageBag([("in", "J2")]))
        assert p.phase == "busy" and p.state.job == "J2" and p.state.served == 1 and p.ta() == 2.5

    def test_generator_stopped_at_emission(self):
        g = Generator(period=1)
        g.delta_con(1.0, MessageBag([("stop", "stop")]))
        assert g.phase == "passive" and g.ta() == INF

    def test_output_examples(self):
        g = Generator(period=1)
        assert g.output() == MessageBag([("out", "Job#1")])
        assert Processor().output() == EMPTY

    def test_lambda_is_pure(self):
        g = Generator(period=1)
        before = g.clone().state
        assert g.output() == g.output()
        assert g.state == before

    def test_ta_time_arithmetic(self):
        assert INF + 3.0 == INF


class TestRegistry:
    def test_instantiate_examples(self, registry):
        g = registry.instantiate("ef.generator", {"period": 1})
        assert isinstance(g, Generator) and g.ta() == 1.0
        with pytest.raises(UnknownBehaviorError):
            registry.instantiate("nope", {})

    def test_fresh_instances(self, registry):
        a = registry.instantiate("ef.generator", {"period": 1})
        b = registry.instantiate("ef.generator", {"period": 1})
        a.delta_int()
        assert a.state.count == 1 and b.state.count == 0

    @pytest.mark.parametrize("params", [{"period": 0}, {"period": -1}, {"speed": 3}, {"period": "x"}])
    def test_bad_parameters(self, registry, params):
        with pytest.raises(BehaviorConfigError):
            registry.instantiate("ef.generator", params)

    def test_translations(self):
        reg = BehaviorRegistry().register_translation("upper", str.upper)
        assert reg.translation("identity")("x") == "x"
        assert reg.translation("upper")("x") == "X"
        with pytest.raises(UnknownBehaviorError):
            reg.translation("missing")

    def test_copy_is_independent(self, registry):
        other = registry.copy().register("x.y", Generator)
        assert "x.y" in other and "x.y" not in registry


def pipeline_spec(**overrides):
    comps = {"gen": AtomicRef("ef.generator", {"period": 1}), "proc": AtomicRef("ef.processor", {"procTime": 2.5})}
    couplings = [Coupling("gen", "out", "proc", "in")]
    spec = CoupledSpec("P", comps, couplings)
    for k, v in overrides.items():
        setattr(spec, k, v)
    return spec


class TestValidation:
    def test_bundled_jcas_is_valid(self, registry, jcas_path):
        from devsoa.proto import parse_manifest
        assert validate_coupled(parse_manifest(jcas_path.read_bytes()).build(), registry) == []

    def test_unknown_component(self, registry):
        spec = pipeline_spec(couplings=[Coupling("gen", "out", "XYZ", "in")])
        assert [v.code for v in validate_coupled(spec, registry)] == ["unknown-component"]

    def test_duplicate_name(self, registry):
        spec = pipeline_spec(order=["gen", "proc", "gen"])
        assert "duplicate-name" in [v.code for v in validate_coupled(spec, registry)]

    @pytest.mark.parametrize("coupling,code", [
        (Coupling("gen", "nope", "proc", "in"), "unknown-port"),
        (Coupling("gen", "out", "proc", "nope"), "unknown-port"),
        (Coupling("proc", "out", "proc", "in"), "self-coupling"),
        (Coupling(None, "x", None, "y"), "pass-through"),
        (Coupling("gen", "out", "proc", "in", "rot13"), "unknown-translation"),
        (Coupling(None, "missing", "proc", "in"), "unknown-port"),
    ])
    def test_coupling_violations(self, registry, coupling, code):
        spec = pipeline_spec(couplings=[coupling])
        assert code in [v.code for v in validate_coupled(spec, registry)]

    def test_bad_names_and_kinds(self, registry):
        spec = CoupledSpec("M", {"a@b": AtomicRef("ef.generator"), "c": AtomicRef("x.y")})
        codes = {v.code for v in validate_coupled(spec, registry)}
        assert codes == {"bad-name", "unknown-behavior"}

    def test_nested_violations_are_located(self, registry):
        inner = CoupledSpec("Inner", {"g": AtomicRef("ef.generator")}, [Coupling("g", "out", None, "missing")],
                            outputs=("out",))
        outer = CoupledSpec("Outer", {"inner": inner})
        (v,) = validate_coupled(outer, registry)
        assert v.code == "unknown-port" and v.locator.startswith("/Outer/Inner")

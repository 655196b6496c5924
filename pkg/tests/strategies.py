"""Hypothesis strategies for wire objects."""

from hypothesis import strategies as st

from devsoa.core import payload_to_json
from devsoa.proto import (
    ComponentDecl,
    CoupledDef,
    Coupling,
    Envelope,
    ModelManifest,
    SimulatorKey,
)

names = st.text(alphabet=st.characters(whitelist_categories=("Lu", "Ll", "Nd"), whitelist_characters="_-"),
                min_size=1, max_size=10)
addresses = st.one_of(
    st.tuples(*[st.integers(0, 255)] * 4).map(lambda t: ".".join(map(str, t))),
    st.tuples(st.sampled_from(["localhost", "node-a", "::1"]), st.integers(1, 65535)).map(lambda t: f"{t[0]}:{t[1]}"),
)
keys = st.builds(SimulatorKey, names, addresses)
times = st.one_of(st.just(float("inf")), st.floats(min_value=0, max_value=1e9, allow_nan=False),
                  st.integers(0, 10**6).map(float))
scalars = st.one_of(st.text(max_size=20), st.integers(-10**12, 10**12), st.booleans(),
                    st.floats(allow_nan=False, allow_infinity=False))
payloads = st.recursive(scalars, lambda inner: st.dictionaries(st.text(max_size=6), inner, max_size=3),
                        max_leaves=6)
json_values = st.recursive(
    st.one_of(st.none(), st.booleans(), st.integers(-10**9, 10**9), st.text(max_size=12),
              st.floats(allow_nan=False, allow_infinity=False)),
    lambda inner: st.one_of(st.lists(inner, max_size=3), st.dictionaries(st.text(max_size=6), inner, max_size=3)),
    max_leaves=10,
)
bodies = st.one_of(
    st.dictionaries(st.text(max_size=8), json_values, max_size=4),
    st.builds(lambda p, port, v: {"fromPort": p, "toPort": port, "value": payload_to_json(v)}, names, names, payloads),
)


@st.composite
def envelopes(draw):
    return Envelope(
        service=draw(st.sampled_from(["newSimulator", "initialize", "receiveInput", "lambda", "deltfcn",
                                      "getOutput", "getTN", "exit", "upload", "simulate"])),
        key=draw(st.none() | keys),
        time=draw(st.none() | times),
        body=draw(bodies),
        request_id=draw(st.text(max_size=12)),
    )


_model_names = st.lists(names, min_size=1, max_size=3, unique=True)
_comp_names = st.lists(names, min_size=1, max_size=4, unique=True)
_port_names = st.lists(names, max_size=2, unique=True)
_params = st.dictionaries(names, st.one_of(st.integers(0, 100), st.floats(0.1, 10), st.text(max_size=5)), max_size=2)
_kinds = st.sampled_from(["ef.generator", "ef.processor", "x.custom"])
_translations = st.sampled_from(["identity", "scale"])


@st.composite
def manifests(draw):
    model_names = draw(_model_names)
    models = {}
    for i, mname in enumerate(model_names):
        comp_names = draw(_comp_names)
        # only later models may be nested, which keeps the graph acyclic
        nested = model_names[i + 1:]
        comps = []
        for cname in comp_names:
            if nested and draw(st.booleans()):
                comps.append(ComponentDecl(cname, model=nested[draw(st.integers(0, len(nested) - 1))]))
            else:
                comps.append(ComponentDecl(cname, kind=draw(_kinds), params=draw(_params)))
        in_ports = draw(_port_names)
        out_ports = draw(_port_names)
        ends = comp_names + [None]
        couplings = []
        for _ in range(draw(st.integers(0, 4))):
            src = ends[draw(st.integers(0, len(ends) - 1))]
            dst = ends[draw(st.integers(0, len(ends) - 1))]
            couplings.append(Coupling(src, draw(names), dst, draw(names), draw(_translations)))
        models[mname] = CoupledDef(comps, couplings, in_ports, out_ports)
    return ModelManifest(draw(names), model_names[0], models)

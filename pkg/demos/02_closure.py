"""A coupled model is itself an atomic model.

The same two-level model is simulated twice: once flattened into its
leaves, once with the nested digraph wrapped as a single atomic component.
Both produce the same outputs at the same times.
"""

from devsoa import AtomicRef, CoupledSpec, Coupling, default_registry, digraph_to_atomic, run_flat
from devsoa.node import Node
from devsoa.proto import component_to_wire
from devsoa.sim import Coordinator

registry = default_registry()

# generator -> processor, packaged as one box exposing a "done" port
box = CoupledSpec(
    "Box",
    {"g": AtomicRef("ef.generator", {"period": 1.0, "limit": 4}),
     "p": AtomicRef("ef.processor", {"procTime": 1.5})},
    [Coupling("g", "out", "p", "in"), Coupling("p", "out", None, "done")],
    outputs=("done",),
)
top = CoupledSpec(
    "Top",
    {"box": box, "transd": AtomicRef("ef.transducer", {"observeWindow": 8.0})},
    [Coupling("box", "done", "transd", "solved")],
)

flat = run_flat(top, registry, end_time=8.0)
print("flattened:")
for event in flat:
    print("  ", event.render())

# the wrapped box behaves like any other atomic model
wrapped = digraph_to_atomic(box, registry)
print()
print("box as atomic: inputs", wrapped.inputs, "outputs", wrapped.outputs, "ta", wrapped.ta())

node = Node("local:0", registry=registry)
coord = Coordinator("127.0.0.1", top, registry)
for name, ref in top.components.items():
    coord.create(name, node, component_to_wire(ref), node.address)
coord.initialize(0.0)
result = coord.simulate(100, end_time=8.0)
coord.exit()

print("wrapped:")
for line in result.trace_lines():
    print("  ", line)
print()
print("identical:", [e.render() for e in flat] == result.trace_lines())

"""Shared helpers for driving the engine in-process."""

from __future__ import annotations

import random

from devsoa.core import INF, MessageBag
from devsoa.models import default_registry
from devsoa.node import Node
from devsoa.proto import component_to_wire, parse_manifest
from devsoa.sim import Coordinator

CLIENT = "10.0.0.9"


def run_local(spec, iterations=1000, end_time=None, registry=None, client=CLIENT):
    """Coordinator over one in-process node; returns (result, node, coordinator)."""
    registry = registry or default_registry()
    node = Node("local:0", registry=registry)
    coord = Coordinator(client, spec, registry)
    for name in spec.component_names:
        coord.create(name, node, component_to_wire(spec.components[name]), node.address)
    coord.initialize(0.0)
    result = coord.simulate(iterations, end_time)
    return result, node, coord


def manifest_spec(path):
    return parse_manifest(path.read_bytes()).build()


def random_bag(rng: random.Random, ports, max_items=3):
    bag = MessageBag()
    for _ in range(rng.randint(1, max_items)):
        port = rng.choice(ports)
        bag.add(port, rng.choice(["Job#1", "Job#2", "stop", 7, 2.5, True, {"k": 1}]))
    return bag


def random_walk(model, rng: random.Random, steps: int):
    """Drive ``model`` through random legal transitions, yielding each state."""
    for _ in range(steps):
        ta = model.ta()
        choice = rng.random()
        if model.inputs and (ta == INF or choice < 0.5):
            e = rng.uniform(0, min(ta, 5.0))
            bag = random_bag(rng, model.inputs)
            if ta != INF and choice < 0.15:
                model.delta_con(ta, bag)
            else:
                model.delta_ext(e, bag)
        elif ta != INF:
            model.delta_int()
        else:
            return
        yield model

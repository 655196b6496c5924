"""Distributed P-DEVS simulation: engine, wire protocol, nodes and client."""

from .core import (
    EMPTY,
    INF,
    AtomicBehavior,
    AtomicRef,
    BehaviorRegistry,
    CoupledSpec,
    Coupling,
    MessageBag,
    PhaseState,
    PortValue,
    validate_coupled,
)
from .errors import DevsError
from .models import default_registry
from .sim import Coordinator, Simulator, digraph_to_atomic, run_flat

__version__ = "0.1.0"

__all__ = [
    "EMPTY", "INF", "AtomicBehavior", "AtomicRef", "BehaviorRegistry", "Coordinator",
    "CoupledSpec", "Coupling", "DevsError", "MessageBag", "PhaseState", "PortValue",
    "Simulator", "default_registry", "digraph_to_atomic", "run_flat", "validate_coupled",
]

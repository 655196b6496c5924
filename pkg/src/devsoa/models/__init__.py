"""Built-in behavior library and bundled model manifests."""

from __future__ import annotations

from importlib import resources

from ..core import BehaviorRegistry
from .ef import Acceptor, EFStats, Generator, Processor, Transducer
from .jcas import AWACS, CAOC, JTAC, UAV, CAOCObserver, ScenarioStart, USMCAircraft

BUILTIN_BEHAVIORS = (
    Generator, Processor, Transducer, Acceptor,
    JTAC, AWACS, CAOC, UAV, USMCAircraft, CAOCObserver, ScenarioStart,
)


def default_registry() -> BehaviorRegistry:
    reg = BehaviorRegistry()
    for cls in BUILTIN_BEHAVIORS:
        reg.register(cls.kind, cls)
    return reg


def bundled_manifest_path(name: str):
    """Path of a bundled ``<name>.devs.json`` manifest (``jcas``, ``ef-pipeline``)."""
    return resources.files("devsoa") / "data" / f"{name}.devs.json"


def bundled_manifest_bytes(name: str) -> bytes:
    return bundled_manifest_path(name).read_bytes()


__all__ = [
    "Acceptor", "AWACS", "BUILTIN_BEHAVIORS", "CAOC", "CAOCObserver", "EFStats",
    "Generator", "JTAC", "Processor", "ScenarioStart", "Transducer", "UAV",
    "USMCAircraft", "bundled_manifest_bytes", "bundled_manifest_path", "default_registry",
]

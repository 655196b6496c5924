import json
import re
import sys
from pathlib import Path

import pytest

sys.path.insert(0, str(Path(__file__).parent))

from devsoa.models import bundled_manifest_path, default_registry  # noqa: E402
from devsoa.node import local_cluster  # noqa: E402

CRITERIA = {
    1: "confluent identity over reachable states",
    2: "closure under coupling, 100 random 2-level models",
    3: "distributed trace equals in-process trace (1/2/3 nodes)",
    4: "round-robin: 10 components over 5 nodes, 2 each",
    5: "JCAS golden trace, 11 iterations",
    6: "real-time peer routing with zero coordinator relay",
    7: "wire stability: 1000 envelopes and manifests",
    8: "simulator keys are name@clientAddress",
}

_outcomes: dict[int, tuple[str, float]] = {}


def pytest_runtest_logreport(report):
    m = re.search(r"test_acceptance\.py::test_ac(\d)_", report.nodeid)
    if not m:
        return
    n = int(m.group(1))
    if report.when == "call" or report.outcome != "passed":
        prev = _outcomes.get(n)
        if prev is None or prev[0] == "passed":
            _outcomes[n] = (report.outcome, report.duration)


def pytest_terminal_summary(terminalreporter):
    if not _outcomes:
        return
    terminalreporter.section("acceptance criteria")
    for n, title in CRITERIA.items():
        outcome, duration = _outcomes.get(n, ("not run", 0.0))
        verdict = "PASS" if outcome == "passed" else "FAIL" if outcome == "failed" else outcome.upper()
        terminalreporter.write_line(f"AC{n} {verdict:<7} {title} ({duration:.2f}s)")


@pytest.fixture
def registry():
    return default_registry()


@pytest.fixture(scope="session")
def cluster():
    """Five localhost node processes shared by the integration tests."""
    with local_cluster(5) as endpoints:
        yield endpoints


@pytest.fixture(scope="session")
def jcas_path():
    return Path(str(bundled_manifest_path("jcas")))


@pytest.fixture(scope="session")
def pipeline_path():
    return Path(str(bundled_manifest_path("ef-pipeline")))


GOLDEN_MAIN = ("UAV", "CAOC", "JTAC", "AWACS")


@pytest.fixture
def jcas_assignment(tmp_path):
    """Writes the published two-host assignment for the given endpoints."""
    def make(main, other):
        names = ["JCASNum1", "USMCAircraft", "CAOCobserver", "UAV", "CAOC", "JTAC", "AWACS"]
        mapping = {n: main if n in GOLDEN_MAIN else other for n in names}
        path = tmp_path / "assign.json"
        path.write_text(json.dumps(mapping))
        return path, mapping
    return make

"""Experimental-frame pipeline, run centrally in one process.

A generator feeds jobs to a processor that can hold one job at a time;
jobs arriving while it is busy are lost. The transducer counts what went
in and what came out.
"""

from devsoa.client import ClientConfig, run
from devsoa.models import bundled_manifest_path

config = ClientConfig(
    servers=[],
    manifest_path=bundled_manifest_path("ef-pipeline"),
    iterations=12,
    in_process=True,
    client_address="127.0.0.1",
)
report = run(config)
print(report.render(stable=True))

transd = report.final_states["transd"]
print()
print(f"jobs sent {transd['jobsSent']}, completed {transd['jobsReceived']}")
# the processor takes 2.5 per job while jobs arrive every 1.0, so most are dropped

"""Wall-clock execution with peer-to-peer message routing.

Each simulator runs on its own thread and sends outputs straight to the
node hosting the receiver, so the coordinator relays nothing. The run is
observed for three seconds and then compared with a logical-time run
over the same horizon.
"""

from devsoa.client import ClientConfig, run
from devsoa.models import bundled_manifest_path
from devsoa.node import Node, local_cluster

manifest = bundled_manifest_path("ef-pipeline")

with local_cluster(2) as servers:
    config = ClientConfig(servers=servers, manifest_path=manifest, mode="rt", observe=3.0)
    report = run(config)

print("real-time trace:")
for line in report.trace:
    print("  ", line)
print("messages relayed by the coordinator:", report.relayed)

node = Node("ref:0")
node.upload("ef-pipeline", [{"name": manifest.name, "content": manifest.read_text()}], [node.address])
node.compile("ef-pipeline", [], [node.address])
central = node.simulate("127.0.0.1", "ef-pipeline", None, [node.address], 1000, end_time=3.0)

for label, states in (("real time", report.final_states), ("logical", central["finalStates"])):
    t = states["transd"]
    print(f"{label:>10}: sent {t['jobsSent']}, received {t['jobsReceived']}")

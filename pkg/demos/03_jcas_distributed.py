"""Joint close air support over two local node processes.

Two nodes are started on localhost. The client uploads the bundled JCAS
manifest, places the components with an explicit assignment and prints
each node's console output, the way an operator would see it.
"""

import json
import tempfile
from pathlib import Path

from devsoa.client import ClientConfig, load_servers, run
from devsoa.models import bundled_manifest_path
from devsoa.node import local_cluster

with local_cluster(2) as (main, second), tempfile.TemporaryDirectory() as tmp:
    tmp = Path(tmp)
    servers = tmp / "servers.txt"
    servers.write_text(f"{main}\n{second}\n")

    assignment = {name: main for name in ("UAV", "CAOC", "JTAC", "AWACS")}
    assignment.update({name: second for name in ("JCASNum1", "USMCAircraft", "CAOCobserver")})
    assign = tmp / "assign.txt"
    assign.write_text(json.dumps(assignment))

    config = ClientConfig(
        servers=load_servers(servers),
        manifest_path=bundled_manifest_path("jcas"),
        assignment=str(assign),
        iterations=11,
        client_address="192.168.1.2",
    )
    report = run(config)
    print(report.render())
    print()
    for endpoint, keys in report.keys_per_node.items():
        print(endpoint, "hosted", ", ".join(keys))

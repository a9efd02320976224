"""Walkthrough: the full pipeline, scenario replay, and the HTTP service."""

import json
import urllib.request

from cbrs import layer1
from cbrs.gateway import Gateway, bundled_scenarios, simulate
from cbrs.layer1 import Hyper
from cbrs.layer2 import RulesBackend
from cbrs.service import serve
from cbrs.synth import separable_corpus

model = layer1.train(separable_corpus(400, seed=13), Hyper(dim=16, buckets=2**14, epochs=8, lr=0.5, seed=7))

# Replay a bundled scenario under the logical clock.
scenario = next(p for p in bundled_scenarios() if p.stem == "three_requests")
result = simulate(scenario, model, RulesBackend())
print("cases:", result.summary["cases"])
print("layer-2 calls:", result.summary["layer2_calls"])
for stage in ("parse_seconds", "retrieval_seconds", "response_seconds"):
    stats = result.summary[stage]
    print(f"{stage}: mean={stats['mean']} stddev={stats['stddev']} (n={stats['count']})")

# The same engine behind HTTP. Port 0 picks a free port.
running = serve(Gateway(model=model, backend=RulesBackend()), port=0)
base = f"http://127.0.0.1:{running.port}"


def call(method, path, payload=None):
    data = json.dumps(payload).encode() if payload is not None else None
    req = urllib.request.Request(base + path, data=data, method=method)
    with urllib.request.urlopen(req, timeout=5) as resp:
        return json.loads(resp.read())


print("\nGET /health ->", call("GET", "/health"))
call("POST", "/donors", {"platform_id": "alice", "blood_group": "O+", "latitude": 23.81, "longitude": 90.41})
action = call("POST", "/messages", {
    "message_id": "m1",
    "text": "Urgent! 2 bags O+ blood needed at Square Hospital, Dhaka. Call 01712345678 today.",
})
rid = action["trace"]["request_id"]
print("ingested ->", rid)
call("POST", "/responses", {"sender": "alice", "message_id": "m1", "text": "yes"})
case = call("GET", f"/requests/{rid}")
print("case status:", case["status"], "| ledger:", case["ledger"])
running.shutdown()
print("service stopped")

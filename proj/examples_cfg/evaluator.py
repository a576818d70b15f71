import json
import math
import sys

for line in sys.stdin:
    req = json.loads(line)
    x, (tau, eps) = req["x"], req["z"]
    y = -((x[0] - 0.3) ** 2 + (x[1] - 0.7) ** 2) + 0.1 * (1 - eps) * math.sin(6 * x[0]) - 0.05 * (1 - tau)
    print("evaluated", req["id"], file=sys.stderr)
    print(json.dumps({"id": req["id"], "y": y, "cost": 0.2 + 0.8 * eps}), flush=True)

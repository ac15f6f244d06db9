"""Regenerate network.json / machines.json from the public IEEE 68-bus data
set distributed with the `tops` package (tops/ps_models/ieee68.py, MIT).

    pip download --no-deps tops && python derive_fixture.py path/to/ieee68.py

Generators are renumbered to buses 53-68 and the New England buses follow the
39-bus numbering. Loads are scaled uniformly so total demand equals the total
scheduled generation (18408 MW).
"""
import importlib.util
import json
import sys

TOTAL_LOAD_MW = 18408.0

spec = importlib.util.spec_from_file_location("ieee68", sys.argv[1])
mod = importlib.util.module_from_spec(spec)
spec.loader.exec_module(mod)
data = mod.load()

SWAPS = {17: 37, 37: 17, 18: 52, 52: 18, 32: 33, 33: 32}


def remap(bus):
    b = int(bus)
    if 1 <= b <= 16:
        return b + 52
    if 53 <= b <= 68:
        return b - 52
    return SWAPS.get(b, b)


header = data["generators"]["GEN"][0]
gens = [dict(zip(header, row)) for row in data["generators"]["GEN"][1:]]
raw_load = sum(row[2] for row in data["loads"][1:])
scale = TOTAL_LOAD_MW / raw_load
loads = {remap(row[1]): (row[2] / 100 * scale, row[3] / 100 * scale) for row in data["loads"][1:]}

buses = []
for b in range(1, 69):
    entry = {"id": b, "kind": "pq"}
    for g in gens:
        if remap(g["bus"]) == b:
            entry["kind"] = "slack" if g["bus"] == data["slack_bus"] else "pv"
            entry["v_setpoint"] = g["V"]
    p, q = loads.get(b, (0.0, 0.0))
    entry.update({"load_p": round(p, 12), "load_q": round(q, 12), "shunt_g": 0.0, "shunt_b": 0.0})
    buses.append(entry)

branches = []
for row in data["lines"][1:]:
    branches.append({"from": remap(row[1]), "to": remap(row[2]), "r": row[3], "x": row[4],
                     "b_charging": row[5], "tap": 1.0})
for row in data["transformers"][1:]:
    branches.append({"from": remap(row[1]), "to": remap(row[2]), "r": row[3], "x": row[4],
                     "b_charging": 0.0, "tap": round(1.0 / row[5], 12)})

sgs = []
for g in gens:
    sn = g["S_n"]
    sgs.append({"bus": remap(g["bus"]), "m": 2 * g["H"] * sn / 100, "d": g["D"] * sn / 100,
                "xd_prime": round(g["X_d_t"] * 100 / sn, 12), "p_set": round(g["P"] / 100, 12)})

with open("network.json", "w") as f:
    json.dump({"base_mva": 100.0, "f0_hz": 60.0, "buses": buses, "branches": branches}, f, indent=1)
    f.write("\n")
with open("machines.json", "w") as f:
    json.dump({"sgs": sgs, "gfms": []}, f, indent=1)
    f.write("\n")

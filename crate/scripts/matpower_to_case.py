#!/usr/bin/env python3
"""Convert a PYPOWER/MATPOWER case into the JSON case format used by `dropf`.

Example (not part of the test suite):

    pip install pypower
    python3 scripts/matpower_to_case.py case118 --wind-bus 9 --wind-mw 1000 \
        --wind-base-mw 1000 --limit 8-9:950 --monitor 8-9 > data/case118.json

Generators become memoryless controllable devices (x_{t+1} = u_t) with the
case's polynomial cost. Loads become fixed injections. The wind farm is an
uncertain injection whose error column is scaled by --wind-base-mw, so the
forecast-error dataset is expressed in per-unit of that base.
"""
import argparse
import importlib
import json


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("case")
    ap.add_argument("--wind-bus", type=int, required=True)
    ap.add_argument("--wind-mw", type=float, required=True)
    ap.add_argument("--wind-base-mw", type=float, default=1.0)
    ap.add_argument("--limit", action="append", default=[],
                    help="from-to:MW override, may repeat")
    ap.add_argument("--monitor", action="append", default=[])
    ap.add_argument("--default-limit", type=float, default=9900.0)
    args = ap.parse_args()

    mod = importlib.import_module(f"pypower.{args.case}")
    ppc = getattr(mod, args.case)()
    overrides = {}
    for spec in args.limit:
        pair, mw = spec.split(":")
        overrides[pair] = float(mw)

    buses = [int(b[0]) for b in ppc["bus"]]
    slack = next(int(b[0]) for b in ppc["bus"] if int(b[1]) == 3)
    lines = []
    for br in ppc["branch"]:
        f, t = int(br[0]), int(br[1])
        limit = br[5] if br[5] > 0 else args.default_limit
        limit = overrides.get(f"{f}-{t}", overrides.get(f"{t}-{f}", limit))
        lines.append({"from": f, "to": t, "x_pu": float(br[3]), "limit_mw": float(limit)})

    devices = []
    for gen, cost in zip(ppc["gen"], ppc["gencost"]):
        bus = int(gen[0])
        c2, c1, c0 = (float(v) for v in cost[4:7])
        devices.append({
            "id": f"gen{bus}",
            "bus": bus,
            "a": [[0.0]],
            "b": [[1.0]],
            "x0": [float(gen[1])],
            "cost": {"f_u": [c1], "h_u": [[2.0 * c2]], "c": c0},
        })

    injections = []
    for b in ppc["bus"]:
        pd = float(b[2])
        if pd != 0.0:
            injections.append({"id": f"load{int(b[0])}", "bus": int(b[0]),
                               "r": [-pd], "g": [[0.0]]})
    injections.append({"id": f"wind{args.wind_bus}", "bus": args.wind_bus,
                       "r": [args.wind_mw], "g": [[args.wind_base_mw]]})

    case = {
        "format_version": 1,
        "buses": buses,
        "slack": slack,
        "lines": lines,
        "devices": devices,
        "injections": injections,
        "horizon": 1,
        "n_xi": 1,
        "same_step_recourse": True,
        "monitored_lines": args.monitor,
    }
    print(json.dumps(case, indent=1))


if __name__ == "__main__":
    main()

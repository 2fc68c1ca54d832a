#!/usr/bin/env python3
"""Regenerate the bundled JSON fixtures under src/corridor_rl/fixtures/.

The corridor document describes a synthetic five-intersection arterial
(west-east) with signalized neighbor intersections on the cross streets.
Schedule fixtures carry the field timing plans and the two recorded
offset schedules used for replay comparisons. Demand fixtures give the
three time-of-day profiles (morning surge, flat midday, evening peak).

Run from the repo root:  python3 scripts/generate_fixtures.py
"""

import json
from pathlib import Path

FIXTURES = Path(__file__).resolve().parent.parent / "src" / "corridor_rl" / "fixtures"

# ---------------------------------------------------------------- schedules
# Field baseline: offsets per target intersection plus the cycle length in
# force for each time-of-day block.
BASELINE = {
    "am": [
        ("05:00", "05:45", 110, [75, 66, 14, 19, 48]),
        ("05:45", "06:30", 90, [40, 40, 5, 0, 5]),
        ("06:30", "09:00", 120, [60, 60, 65, 75, 5]),
        ("09:00", "11:00", 90, [40, 40, 5, 0, 5]),
    ],
    "noon": [
        ("10:00", "11:30", 90, [40, 40, 5, 0, 5]),
        ("11:30", "14:00", 105, [0, 0, 55, 55, 55]),
    ],
    "pm": [
        ("14:00", "16:00", 105, [0, 0, 55, 55, 55]),
        ("16:00", "19:00", 120, [60, 60, 65, 75, 5]),
        ("19:00", "20:30", 105, [0, 0, 55, 55, 55]),
        ("20:30", "21:00", 90, [40, 40, 5, 0, 5]),
    ],
}

# Engineering-study offsets (same values as the baseline, but the midday
# block boundary differs: the noon plan switches at 12:00 rather than
# 11:30). Offsets only; replay takes cycle lengths from the baseline
# schedule in force.
SYNCHRO = {
    "am": [
        ("05:00", "05:45", [75, 66, 14, 19, 48]),
        ("05:45", "06:30", [40, 40, 5, 0, 5]),
        ("06:30", "09:00", [60, 60, 65, 75, 5]),
        ("09:00", "11:00", [40, 40, 5, 0, 5]),
    ],
    "noon": [
        ("10:00", "12:00", [40, 40, 5, 0, 5]),
        ("12:00", "14:00", [0, 0, 55, 55, 55]),
    ],
    "pm": [
        ("14:00", "16:00", [0, 0, 55, 55, 55]),
        ("16:00", "19:00", [60, 60, 65, 75, 5]),
        ("19:00", "20:30", [0, 0, 55, 55, 55]),
        ("20:30", "21:00", [40, 40, 5, 0, 5]),
    ],
}

# Recorded learned offsets for replay. Some values exceed the cycle length
# in force; replay folds them with offset mod cycle.
DEEPRL = {
    "am": [
        ("05:00", "06:00", [31, 8, 60, 43, 6]),
        ("06:00", "08:00", [31, 55, 60, 43, 6]),
        ("08:00", "08:15", [70, 86, 82, 43, 107]),
        ("08:15", "08:30", [70, 86, 82, 59, 107]),
        ("08:30", "08:45", [37, 73, 82, 59, 107]),
        ("08:45", "09:15", [37, 86, 82, 59, 107]),
        ("09:15", "10:45", [37, 73, 82, 59, 107]),
        ("10:45", "11:00", [70, 86, 82, 59, 107]),
    ],
    "noon": [
        ("10:00", "11:45", [70, 86, 82, 59, 107]),
        ("11:45", "12:00", [37, 72, 60, 43, 107]),
        ("12:00", "12:45", [31, 55, 60, 43, 6]),
        ("12:45", "13:00", [31, 55, 60, 71, 6]),
        ("13:00", "13:15", [37, 73, 82, 59, 107]),
        ("13:15", "13:30", [71, 72, 60, 97, 48]),
        ("13:30", "13:45", [71, 72, 88, 97, 48]),
        ("13:45", "14:00", [31, 72, 60, 43, 6]),
    ],
    "pm": [
        ("14:00", "14:30", [50, 55, 15, 43, 81]),
        ("14:30", "14:45", [71, 72, 60, 43, 48]),
        ("14:45", "15:00", [31, 55, 60, 43, 6]),
        ("15:00", "15:30", [71, 72, 88, 97, 48]),
        ("15:30", "15:45", [31, 55, 60, 43, 6]),
        ("15:45", "16:15", [71, 72, 60, 97, 48]),
        ("16:15", "16:30", [31, 72, 60, 43, 6]),
        ("16:30", "16:45", [31, 55, 60, 97, 6]),
        ("16:45", "17:15", [31, 55, 60, 43, 6]),
        ("17:15", "17:30", [71, 72, 60, 97, 6]),
        ("17:30", "19:45", [31, 55, 60, 43, 6]),
        ("19:45", "20:00", [71, 72, 88, 97, 46]),
        ("20:00", "20:45", [31, 55, 60, 43, 6]),
        ("20:45", "21:00", [19, 104, 60, 72, 107]),
    ],
}


def schedule_rows(period):
    return [{"start": start, "end": end, "cycle": cycle, "offsets": offsets}
            for start, end, cycle, offsets in BASELINE[period]]


def offset_rows(table, period):
    return [{"start": start, "end": end, "offsets": offsets}
            for start, end, offsets in table[period]]


# ------------------------------------------------------------------ network
ARTERIAL = [("bW", 300), ("oW", 450), ("t1", 380), ("t2", 560), ("t3", 420),
            ("t4", 600), ("t5", 340), ("oE", 300), ("bE", None)]

# Cross streets north-to-south through each target intersection.
CROSS = {
    "t1": [("b1n", 250), ("o1n", 280), ("t1", 220), ("b1s", None)],
    "t2": [("b2n", 240), ("t2", 300), ("o2s", 250), ("b2s", None)],
    "t3": [("b3n", 260), ("o3n", 320), ("t3", 270), ("o3s", 230), ("b3s", None)],
    "t4": [("b4n", 260), ("t4", 310), ("o4s", 240), ("b4s", None)],
    "t5": [("b5n", 230), ("o5n", 290), ("t5", 200), ("b5s", None)],
}

TARGETS = ["t1", "t2", "t3", "t4", "t5"]
OBSERVED = ["oW", "o1n", "o2s", "o3n", "o3s", "o4s", "o5n", "oE"]

# Detector slots deliberately left unequipped (their observation entries
# stay zero): (link, kind).
MISSING_DETECTORS = {
    ("b1n_o1n", "advance"),
    ("b2s_o2s", "stopbar"),
    ("b4s_o4s", "advance"),
    ("b5n_o5n", "stopbar"),
}


def build_network():
    nodes, links = [], []
    boundary = {n for n, _ in ARTERIAL if n.startswith("b")}
    for chain in CROSS.values():
        boundary |= {n for n, _ in chain if n.startswith("b")}
    seen = set()

    def add_node(name):
        if name in seen:
            return
        seen.add(name)
        if name in boundary:
            nodes.append({"id": name, "kind": "boundary", "role": "plain"})
        else:
            role = "target" if name in TARGETS else "observed"
            nodes.append({"id": name, "kind": "signalized", "role": role})

    def add_pair(a, b, length, lanes, fwd_side, rev_side):
        links.append({"id": f"{a}_{b}", "from": a, "to": b, "length": length,
                      "lanes": lanes, "entry_side": fwd_side})
        links.append({"id": f"{b}_{a}", "from": b, "to": a, "length": length,
                      "lanes": lanes, "entry_side": rev_side})

    for (a, length), (b, _) in zip(ARTERIAL, ARTERIAL[1:]):
        add_node(a)
        add_node(b)
        # eastbound links enter from the west side, westbound from the east
        add_pair(a, b, length, 2, "W", "E")
    for chain in CROSS.values():
        for (a, length), (b, _) in zip(chain, chain[1:]):
            add_node(a)
            add_node(b)
            # southbound links enter from the north side
            add_pair(a, b, length, 1, "N", "S")

    artery = [n for n, _ in ARTERIAL]
    cross_chain = {t: [n for n, _ in chain] for t, chain in CROSS.items()}

    def path(chain):
        return [f"{a}_{b}" for a, b in zip(chain, chain[1:])]

    routes = [
        {"id": "EB", "links": path(artery)},
        {"id": "WB", "links": path(artery[::-1])},
    ]
    for i, t in enumerate(TARGETS, start=1):
        routes.append({"id": f"SB{i}", "links": path(cross_chain[t])})
        routes.append({"id": f"NB{i}", "links": path(cross_chain[t][::-1])})
    # turn routes: east then south at t3; north then east at t2
    eb_to_t3 = path(artery[:artery.index("t3") + 1])
    south_from_t3 = path(cross_chain["t3"][cross_chain["t3"].index("t3"):])
    routes.append({"id": "EB_S3", "links": eb_to_t3 + south_from_t3})
    nb_to_t2 = path(cross_chain["t2"][::-1][:cross_chain["t2"][::-1].index("t2") + 1])
    east_from_t2 = path(artery[artery.index("t2"):])
    routes.append({"id": "NB2_E", "links": nb_to_t2 + east_from_t2})

    return {
        "free_flow_speed": 13.9,
        "saturation_flow": 0.5,
        "nodes": nodes,
        "links": links,
        "routes": routes,
    }


def build_signals():
    cfg = {}
    for t in TARGETS:
        cfg[t] = {"splits": [0.55, 0.45], "phase_approaches": [["E", "W"], ["N", "S"]]}
    for o in ("oW", "oE"):
        cfg[o] = {"splits": [0.6, 0.4], "phase_approaches": [["E", "W"], ["N", "S"]]}
    for o in ("o1n", "o2s", "o3n", "o3s", "o4s", "o5n"):
        cfg[o] = {"splits": [0.6, 0.4], "phase_approaches": [["N", "S"], ["E", "W"]]}
    return {"targets": TARGETS, "observed": OBSERVED, "nodes": cfg}


def build_detectors(network):
    by_to = {}
    for link in network["links"]:
        by_to.setdefault(link["to"], []).append(link)
    detectors = []
    for node in TARGETS + OBSERVED:
        for link in sorted(by_to.get(node, []), key=lambda l: l["id"]):
            for kind, pos in (("stopbar", 0.0), ("advance", 60.0)):
                if (link["id"], kind) in MISSING_DETECTORS:
                    continue
                detectors.append({"link": link["id"], "kind": kind,
                                  "position": pos,
                                  "lanes_covered": link["lanes"]})
    return detectors


# ------------------------------------------------------------------- demand
def flat(route, start, end, rate):
    return {"route": route, "start": start, "end": end, "rate": rate}


CROSS_RATES_AM = {"SB1": 60, "NB1": 55, "SB2": 70, "NB2": 65, "SB3": 80,
                  "NB3": 75, "SB4": 70, "NB4": 65, "SB5": 60, "NB5": 55}
CROSS_RATES_NOON = {"SB1": 65, "NB1": 60, "SB2": 70, "NB2": 65, "SB3": 75,
                    "NB3": 70, "SB4": 70, "NB4": 65, "SB5": 65, "NB5": 60}
CROSS_RATES_PM = {"SB1": 60, "NB1": 60, "SB2": 65, "NB2": 60, "SB3": 70,
                  "NB3": 65, "SB4": 65, "NB4": 60, "SB5": 60, "NB5": 55}


def demand_am():
    entries = [
        flat("EB", "05:00", "06:00", 350),
        flat("EB", "06:00", "06:30", 500),
        flat("EB", "06:30", "07:00", 650),
        flat("EB", "07:00", "08:30", 800),
        flat("EB", "08:30", "09:00", 650),
        flat("EB", "09:00", "10:00", 450),
        flat("WB", "05:00", "07:00", 250),
        flat("WB", "07:00", "09:00", 350),
        flat("WB", "09:00", "10:00", 300),
        flat("EB_S3", "05:00", "06:30", 40),
        flat("EB_S3", "06:30", "09:00", 60),
        flat("EB_S3", "09:00", "10:00", 40),
        flat("NB2_E", "05:00", "06:30", 40),
        flat("NB2_E", "06:30", "09:00", 55),
        flat("NB2_E", "09:00", "10:00", 40),
    ]
    entries += [flat(r, "05:00", "10:00", v) for r, v in CROSS_RATES_AM.items()]
    return {"label": "AM", "entries": entries}


def demand_noon():
    entries = [
        flat("EB", "10:00", "14:00", 420),
        flat("WB", "10:00", "14:00", 420),
        flat("EB_S3", "10:00", "14:00", 50),
        flat("NB2_E", "10:00", "14:00", 50),
    ]
    entries += [flat(r, "10:00", "14:00", v) for r, v in CROSS_RATES_NOON.items()]
    return {"label": "NOON", "entries": entries}


def demand_pm():
    entries = [
        flat("WB", "14:00", "16:00", 380),
        flat("WB", "16:00", "19:00", 700),
        flat("WB", "19:00", "21:00", 320),
        flat("EB", "14:00", "16:00", 300),
        flat("EB", "16:00", "19:00", 420),
        flat("EB", "19:00", "21:00", 260),
        flat("EB_S3", "14:00", "21:00", 45),
        flat("NB2_E", "14:00", "21:00", 45),
    ]
    entries += [flat(r, "14:00", "21:00", v) for r, v in CROSS_RATES_PM.items()]
    return {"label": "PM", "entries": entries}


# ------------------------------------------------------------- perturbations
PERTURBATIONS = {
    "demand_surge": {
        "kind": "demand_surge",
        "start": "12:00",
        "end": "13:00",
        "factor": 1.5,
        "routes": "all",
    },
    "lane_disruption": {
        "kind": "lane_disruption",
        "start": "12:00",
        "end": "13:00",
        "lanes": 1,
        "links": ["bW_oW", "bE_oE"],
    },
}


def main():
    FIXTURES.mkdir(parents=True, exist_ok=True)
    network = build_network()
    scenario = {
        "schema_version": 1,
        "name": "huntington-synthetic",
        "start": "05:00",
        "duration_s": 18000,
        "warm_up_s": 900,
        "interval_s": 900,
        "network": network,
        "signals": build_signals(),
        "detectors": build_detectors(network),
        "demand": demand_am(),
        "schedules": {"baseline": schedule_rows("am")},
        "active_schedule": "baseline",
    }
    out = {
        "huntington-synthetic.json": scenario,
        "baseline_schedules.json": {p: schedule_rows(p) for p in BASELINE},
        "replay_synchro.json": {p: offset_rows(SYNCHRO, p) for p in SYNCHRO},
        "replay_deeprl.json": {p: offset_rows(DEEPRL, p) for p in DEEPRL},
        "demand_am.json": demand_am(),
        "demand_noon.json": demand_noon(),
        "demand_pm.json": demand_pm(),
        "perturbations.json": PERTURBATIONS,
    }
    for name, doc in out.items():
        path = FIXTURES / name
        path.write_text(json.dumps(doc, indent=1) + "\n")
        print(f"wrote {path}")


if __name__ == "__main__":
    main()

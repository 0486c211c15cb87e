#!/usr/bin/env python3
"""Regenerate the synthetic bundled systems (case5, rts73, case118, case300).

case14 is the authentic IEEE 14-bus data and is maintained by hand; the
other systems are synthetic stand-ins that match the bus counts and load
levels of their namesakes.  Each system is built by stamping one area
template several times: every area gets the same internal grid and the
same generator fleet, while loads are jittered a few percent per area.
Areas are coupled through a small number of high-impedance tie-lines.
Matched fleets and weak ties keep the regional subproblems' responses to
boundary angles nearly symmetric, which all three distributed algorithms
reward; wildly unbalanced regions stall them.  Everything is derived
from fixed seeds, so rerunning this script reproduces the committed
files byte for byte.

Usage: python3 tools/make_cases.py [output-dir]
"""

import random
import sys
from pathlib import Path


def fmt(x):
    if x == int(x):
        return str(int(x))
    return repr(round(x, 6))


class AreaTemplate:
    """Internal grid, load shares, and generator fleet for one area."""

    def __init__(self, n_buses, n_chords, n_gens, load_total, cap_total,
                 x_range, c2_range, c1_range, seed):
        rng = random.Random(seed)
        self.n_buses = n_buses

        edges = set()
        for i in range(n_buses):
            edges.add((min(i, (i + 1) % n_buses), max(i, (i + 1) % n_buses)))
        while len(edges) < n_buses + n_chords:
            a, b = rng.sample(range(n_buses), 2)
            edges.add((min(a, b), max(a, b)))
        self.edges = [(a, b, round(rng.uniform(*x_range), 5))
                      for a, b in sorted(edges)]

        loaded = sorted(rng.sample(range(n_buses), max(1, int(0.8 * n_buses))))
        weights = [rng.uniform(0.3, 1.7) for _ in loaded]
        scale = load_total / sum(weights)
        self.loads = [(i, round(w * scale, 1)) for i, w in zip(loaded, weights)]

        sites = sorted(rng.sample(range(n_buses), n_gens))
        weights = [rng.uniform(0.6, 1.6) for _ in sites]
        scale = cap_total / sum(weights)
        self.gens = [(i, round(w * scale, 1),
                      round(rng.uniform(*c2_range), 6),
                      round(rng.uniform(*c1_range), 2))
                     for i, w in zip(sites, weights)]


class SystemBuilder:
    def __init__(self, name, seed):
        self.name = name
        self.rng = random.Random(seed)
        self.buses = []  # (id, type, Pd)
        self.gens = []   # (bus, Pmax, Pmin, c2, c1, c0)
        self.branches = []  # (f, t, x, rateA)

    def stamp_area(self, template, bus_ids, load_factor):
        """Instantiate the template on bus_ids, scaling loads by
        load_factor plus a little per-bus jitter."""
        rng = self.rng
        loads = {}
        for i, mw in template.loads:
            loads[i] = round(mw * load_factor * rng.uniform(0.97, 1.03), 1)
        for i, b in enumerate(bus_ids):
            self.buses.append((b, 1, loads.get(i, 0.0)))
        for a, b, x in template.edges:
            self.branches.append((bus_ids[a], bus_ids[b], x, 9900))
        for i, pmax, c2, c1 in template.gens:
            self.gens.append((bus_ids[i], pmax, 0.0, c2,
                              round(c1 * rng.uniform(0.995, 1.005), 4), 0.0))

    def add_leaf(self, bus_id, attach_to, x, load):
        self.buses.append((bus_id, 1, load))
        self.branches.append((attach_to, bus_id, x, 9900))

    def add_ties(self, pairs, x_range):
        for f, t in pairs:
            x = round(self.rng.uniform(*x_range), 5)
            self.branches.append((f, t, x, 9900))

    def set_ref(self, bus_id):
        self.buses = [(b, 3 if b == bus_id else t, d)
                      for (b, t, d) in self.buses]

    def render(self):
        out = [f"function mpc = {self.name}", "mpc.version = '2';",
               "mpc.baseMVA = 100;", "", "%% bus_i type Pd Qd Gs Bs area Vm Va baseKV zone Vmax Vmin",
               "mpc.bus = ["]
        for b, t, d in sorted(self.buses):
            out.append(f"\t{b}\t{t}\t{fmt(d)}\t0\t0\t0\t1\t1\t0\t138\t1\t1.1\t0.9;")
        out.append("];")
        out.append("")
        out.append("%% bus Pg Qg Qmax Qmin Vg mBase status Pmax Pmin")
        out.append("mpc.gen = [")
        for b, pmax, pmin, _, _, _ in self.gens:
            out.append(f"\t{b}\t0\t0\t100\t-100\t1\t100\t1\t{fmt(pmax)}\t{fmt(pmin)};")
        out.append("];")
        out.append("")
        out.append("%% fbus tbus r x b rateA rateB rateC ratio angle status angmin angmax")
        out.append("mpc.branch = [")
        for f, t, x, rate in self.branches:
            out.append(f"\t{f}\t{t}\t0\t{fmt(x)}\t0\t{rate}\t0\t0\t0\t0\t1\t-360\t360;")
        out.append("];")
        out.append("")
        out.append("%% model startup shutdown ncost c2 c1 c0")
        out.append("mpc.gencost = [")
        for _, _, _, c2, c1, c0 in self.gens:
            out.append(f"\t2\t0\t0\t3\t{fmt(c2)}\t{fmt(c1)}\t{fmt(c0)};")
        out.append("];")
        return "\n".join(out) + "\n"


def make_case5():
    """Two-area five-bus system: one generator and nearly equal load on
    each side of a pair of weak ties, with the second unit priced so the
    areas trade almost nothing at the optimum."""
    b = SystemBuilder("case5", 5)
    b.buses = [(1, 3, 0.0), (2, 1, 90.0), (3, 1, 28.0),
               (4, 1, 86.0), (5, 1, 30.0)]
    b.gens = [(1, 260.0, 0.0, 0.008, 14.0, 0.0),
              (5, 260.0, 0.0, 0.008, 13.93, 0.0)]
    b.branches = [(1, 2, 0.12, 9900), (1, 3, 0.18, 9900), (2, 3, 0.15, 9900),
                  (4, 5, 0.09, 9900),
                  (3, 4, 0.30, 9900), (2, 5, 0.32, 9900)]
    return b


def make_rts73():
    b = SystemBuilder("rts73", 730101)
    template = AreaTemplate(24, 12, 8, 2850.0, 4850.0,
                            (0.008, 0.03), (0.010, 0.030), (22.0, 30.0),
                            seed=7301)
    areas = [list(range(101, 125)), list(range(201, 225)),
             list(range(301, 325))]
    for area, factor in zip(areas, (1.0, 1.035, 0.968)):
        b.stamp_area(template, area, factor)
    b.add_leaf(325, 301, 0.04, 12.0)
    b.add_ties([(107, 203), (113, 215), (207, 303), (213, 315),
                (307, 103), (313, 115)], (0.03, 0.05))
    b.set_ref(101)
    return b


def make_case118():
    b = SystemBuilder("case118", 118)
    template = AreaTemplate(39, 18, 12, 1414.0, 2400.0,
                            (0.03, 0.12), (0.008, 0.024), (13.0, 21.0),
                            seed=1181)
    areas = [list(range(1, 40)), list(range(41, 80)),
             list(range(80, 119))]
    for area, factor in zip(areas, (1.0, 1.025, 0.978)):
        b.stamp_area(template, area, factor)
    b.add_leaf(40, 1, 0.08, 10.0)
    b.add_ties([(8, 48), (20, 60), (47, 87), (59, 99),
                (86, 8), (98, 20)], (0.26, 0.34))
    b.set_ref(1)
    return b


def make_case300():
    b = SystemBuilder("case300", 300)
    template = AreaTemplate(100, 36, 20, 7842.0, 13300.0,
                            (0.008, 0.03), (0.010, 0.030), (22.0, 30.0),
                            seed=3001)
    areas = [list(range(1, 101)), list(range(101, 201)),
             list(range(201, 301))]
    for area, factor in zip(areas, (1.0, 1.02, 0.982)):
        b.stamp_area(template, area, factor)
    b.add_ties([(20, 120), (66, 166), (120, 220), (166, 266),
                (220, 20), (266, 66)], (0.03, 0.05))
    b.set_ref(1)
    return b


def region_file(assignments):
    lines = []
    for region, buses in enumerate(assignments, start=1):
        for bus in buses:
            lines.append(f"{bus} {region}")
    return "\n".join(lines) + "\n"


def main():
    root = Path(sys.argv[1]) if len(sys.argv) > 1 else Path("data")
    cases = root / "cases"
    parts = root / "partitions"
    cases.mkdir(parents=True, exist_ok=True)
    parts.mkdir(parents=True, exist_ok=True)

    for builder in (make_case5(), make_rts73(), make_case118(),
                    make_case300()):
        (cases / f"{builder.name}.m").write_text(builder.render())
        print(f"wrote {cases / (builder.name + '.m')}")

    (parts / "case5_2regions.part").write_text(region_file([
        (1, 2, 3), (4, 5)]))
    (parts / "case14_2regions.part").write_text(region_file([
        range(1, 6), range(6, 15)]))
    (parts / "rts73_3regions.part").write_text(region_file([
        list(range(101, 125)), list(range(201, 225)),
        list(range(301, 326))]))
    (parts / "case118_3regions.part").write_text(region_file([
        list(range(1, 41)), list(range(41, 80)), list(range(80, 119))]))
    (parts / "case300_3regions.part").write_text(region_file([
        list(range(1, 101)), list(range(101, 201)), list(range(201, 301))]))
    print(f"wrote partition files under {parts}")


if __name__ == "__main__":
    main()

"""Anytime behaviour of the lattice planner on a seeded random cost-map.

Prints each solution of the epsilon schedule next to the optimum found by a
plain uniform-cost search, and the expansion count.
"""
import argparse
import heapq
import math
import time

import numpy as np

from geoloc.navigation import EpsSchedule, LatticeState, UnreachableGoalError, generate_primitives, plan_ara
from geoloc.terrain import CostMapGlobal


def random_map(seed, n, density):
    rng = np.random.default_rng(seed)
    cost = rng.uniform(1, 10, (n, n))
    cost[rng.random((n, n)) < density] = np.inf
    cost[:5, :5] = 1.0
    cost[-5:, -5:] = 1.0
    return CostMapGlobal((0, 0), 0.5, np.zeros((n, n)), cost)


def optimum(cm, prims, start, goal, tol):
    by_h = {}
    for p in prims:
        by_h.setdefault(p.start_heading, []).append(p)
    dist, pq, done = {start: 0.0}, [(0.0, start)], set()
    H, W = cm.cost.shape
    while pq:
        d, s = heapq.heappop(pq)
        if s in done:
            continue
        done.add(s)
        x, y = cm.cell_center(s[0], s[1])
        if math.hypot(x - goal[0], y - goal[1]) <= tol:
            return d
        for p in by_h[s[2]]:
            cells = np.array(p.swept_cells) + s[:2]
            if (cells < 0).any() or (cells[:, 0] >= W).any() or (cells[:, 1] >= H).any():
                continue
            v = cm.cost[cells[:, 1], cells[:, 0]]
            if not np.isfinite(v).all():
                continue
            n = (s[0] + p.end_cell[0], s[1] + p.end_cell[1], (s[2] + p.end_cell[2]) % 16)
            nd = d + p.length * v.mean()
            if nd < dist.get(n, math.inf):
                dist[n] = nd
                heapq.heappush(pq, (nd, n))
    return math.inf


if __name__ == "__main__":
    ap = argparse.ArgumentParser()
    ap.add_argument("--seed", type=int, default=0)
    ap.add_argument("--size", type=int, default=60)
    ap.add_argument("--density", type=float, default=0.12)
    ap.add_argument("--initial-eps", type=float, default=3.0)
    a = ap.parse_args()

    cm = random_map(a.seed, a.size, a.density)
    prims = generate_primitives()
    start, goal = LatticeState(2, 2, 0), cm.cell_center(a.size - 3, a.size - 3)
    t0 = time.perf_counter()
    try:
        res = plan_ara(start, goal, cm, prims, EpsSchedule(a.initial_eps, 0.5, 1.0))
    except UnreachableGoalError:
        raise SystemExit(f"seed {a.seed}: obstacles cut the goal off; try another seed or a lower density")
    dt = time.perf_counter() - t0
    opt = optimum(cm, prims, (2, 2, 0), goal, 1.0)
    print(f"{a.size}x{a.size} map, seed {a.seed}: optimum {opt:.3f}")
    print(f"{'eps':>5} {'cost':>10} {'cost/opt':>9}")
    for eps, c in res.solutions:
        print(f"{eps:5.2f} {c:10.3f} {c / opt:9.4f}")
    print(f"{res.expansions} expansions in {dt:.2f} s, achieved eps {res.achieved_eps:g}")

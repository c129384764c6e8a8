"""Anytime repairing A* over the motion-primitive lattice.

Successive weighted-A* searches with a shrinking inflation factor; states
whose cost improves after being expanded are parked in INCONS and fed back
into OPEN for the next, less inflated search.
"""
from __future__ import annotations

import heapq
import math
import time
from dataclasses import dataclass, field

import numpy as np

from ..terrain import CostMapGlobal
from .primitives import TRAJ_SPACING, LatticeState, MotionPrimitive, primitives_by_heading
from .trajectory import Trajectory


class PlanningError(RuntimeError):
    pass


class UnreachableGoalError(PlanningError):
    pass


class PlanningTimeout(PlanningError):
    pass


@dataclass(frozen=True)
class EpsSchedule:
    initial_eps: float = 3.0
    decrement: float = 0.5
    final_eps: float = 1.0
    time_budget: float | None = None  # optional wall-clock cap, seconds
    max_expansions: int = 1_000_000  # deterministic budget across all iterations

    def __post_init__(self):
        if not self.initial_eps >= self.final_eps >= 1.0:
            raise ValueError("need initial_eps >= final_eps >= 1")
        if not self.decrement > 0:
            raise ValueError("decrement must be positive")

    def levels(self) -> list[float]:
        out, eps = [], self.initial_eps
        while True:
            out.append(eps)
            if eps <= self.final_eps:
                return out
            eps = max(self.final_eps, eps - self.decrement)


@dataclass
class PlanResult:
    trajectory: Trajectory
    achieved_eps: float
    expansions: int
    cost: float
    states: list[LatticeState]
    primitives: list[MotionPrimitive]
    solutions: list[tuple[float, float]] = field(default_factory=list)  # (eps, cost) per search


class LatticeGraph:
    """Lattice over a cost-map; states sit at cell centres."""

    def __init__(self, costmap: CostMapGlobal, primitives: list[MotionPrimitive], headings: int | None = None):
        self.costmap = costmap
        self.headings = headings or (max(p.start_heading for p in primitives) + 1)
        self.by_heading = primitives_by_heading(primitives, self.headings)
        self.W, self.H = costmap.width, costmap.height
        self._cost = costmap.cost.tolist()
        finite = costmap.cost[np.isfinite(costmap.cost)]
        self.min_cost = float(finite.min()) if finite.size else math.inf

    def sid(self, s: LatticeState) -> int:
        return (s.iy * self.W + s.ix) * self.headings + s.heading

    def state(self, sid: int) -> LatticeState:
        cell, h = divmod(sid, self.headings)
        iy, ix = divmod(cell, self.W)
        return LatticeState(ix, iy, h)

    def navigable(self, ix: int, iy: int) -> bool:
        return 0 <= ix < self.W and 0 <= iy < self.H and self._cost[iy][ix] < math.inf

    def edge_cost(self, ix: int, iy: int, prim: MotionPrimitive) -> float:
        total = 0.0
        cost, W, H = self._cost, self.W, self.H
        for ox, oy in prim.swept_cells:
            x, y = ix + ox, iy + oy
            if not (0 <= x < W and 0 <= y < H):
                return math.inf
            total += cost[y][x]
        return prim.length * total / len(prim.swept_cells)

    def successors(self, sid: int):
        cell, h = divmod(sid, self.headings)
        iy, ix = divmod(cell, self.W)
        for prim in self.by_heading[h]:
            c = self.edge_cost(ix, iy, prim)
            if c < math.inf:
                dix, diy, dh = prim.end_cell
                if not (0 <= ix + dix < self.W and 0 <= iy + diy < self.H):
                    continue
                nsid = ((iy + diy) * self.W + ix + dix) * self.headings + (h + dh) % self.headings
                yield nsid, prim, c

    def center(self, sid: int) -> tuple[float, float]:
        cell = sid // self.headings
        iy, ix = divmod(cell, self.W)
        return self.costmap.cell_center(ix, iy)

    def snap(self, x: float, y: float, heading: float) -> LatticeState:
        ix, iy = self.costmap.cell_of(x, y)
        h = int(round(heading / (2.0 * math.pi / self.headings))) % self.headings
        return LatticeState(ix, iy, h)


def trajectory_from_path(graph: LatticeGraph, sids: list[int], prims: list[MotionPrimitive]) -> Trajectory:
    x0, y0 = graph.center(sids[0])
    h0 = graph.state(sids[0]).heading * 2.0 * math.pi / graph.headings
    fine = [np.array([[x0, y0, h0]])]
    for sid, prim in zip(sids[:-1], prims):
        cx, cy = graph.center(sid)
        seg = prim.path[1:].copy()
        seg[:, 0] += cx
        seg[:, 1] += cy
        fine.append(seg)
    pts = np.vstack(fine)
    pts[:, 2] = np.arctan2(np.sin(pts[:, 2]), np.cos(pts[:, 2]))
    if len(pts) <= 2:
        return Trajectory.from_points(pts)
    s = np.concatenate([[0.0], np.cumsum(np.hypot(*np.diff(pts[:, :2], axis=0).T))])
    keep = [0]
    for i in range(1, len(pts) - 1):
        if s[i + 1] - s[keep[-1]] > TRAJ_SPACING:
            keep.append(i)
    keep.append(len(pts) - 1)
    return Trajectory.from_points(pts[keep])


def plan_ara(
    start: LatticeState,
    goal_xy,
    costmap: CostMapGlobal,
    primitives: list[MotionPrimitive],
    sched: EpsSchedule = EpsSchedule(),
    goal_tolerance: float = 1.0,
    graph: LatticeGraph | None = None,
) -> PlanResult:
    if goal_tolerance < costmap.cell_size:
        raise ValueError("goal tolerance must be at least one cell")
    graph = graph or LatticeGraph(costmap, primitives)
    if not graph.navigable(start.ix, start.iy):
        raise PlanningError(f"start cell ({start.ix}, {start.iy}) is not navigable")
    gx, gy = float(goal_xy[0]), float(goal_xy[1])
    if not _goal_region_open(costmap, gx, gy, goal_tolerance):
        raise UnreachableGoalError(f"no navigable cell within {goal_tolerance} m of goal ({gx}, {gy})")

    min_cost = graph.min_cost
    h_cache: dict[int, float] = {}

    def heur(sid: int) -> float:
        cell = sid // graph.headings
        v = h_cache.get(cell)
        if v is None:
            x, y = graph.center(sid)
            v = max(0.0, math.hypot(x - gx, y - gy) - goal_tolerance) * min_cost
            h_cache[cell] = v
        return v

    def is_goal(sid: int) -> bool:
        x, y = graph.center(sid)
        return math.hypot(x - gx, y - gy) <= goal_tolerance

    s0 = graph.sid(start)
    g = {s0: 0.0}
    parent: dict[int, tuple[int, MotionPrimitive]] = {}
    goal_g, goal_sid = (0.0, s0) if is_goal(s0) else (math.inf, None)
    open_set = {s0}
    incons: set[int] = set()
    closed: set[int] = set()
    counter = 0
    heap: list = []
    expansions = 0
    t_start = time.perf_counter()
    solutions: list[tuple[float, float]] = []
    best = None
    achieved = math.inf

    def push(sid: int, eps: float):
        nonlocal counter
        h = heur(sid)
        gs = g[sid]
        heapq.heappush(heap, (gs + eps * h, h, counter, sid, gs))
        counter += 1

    def out_of_budget() -> bool:
        if expansions >= sched.max_expansions:
            return True
        return sched.time_budget is not None and time.perf_counter() - t_start > sched.time_budget

    for eps in sched.levels():
        open_set |= incons
        incons = set()
        closed = set()
        heap = []
        for sid in sorted(open_set):
            push(sid, eps)
        timed_out = False
        while heap:
            f, _, _, sid, gs = heap[0]
            if sid not in open_set or g[sid] != gs:
                heapq.heappop(heap)
                continue
            if goal_g <= f:
                break
            if out_of_budget():
                timed_out = True
                break
            heapq.heappop(heap)
            open_set.discard(sid)
            closed.add(sid)
            expansions += 1
            for nsid, prim, c in graph.successors(sid):
                ng = gs + c
                if ng < g.get(nsid, math.inf):
                    g[nsid] = ng
                    parent[nsid] = (sid, prim)
                    if ng < goal_g and is_goal(nsid):
                        goal_g, goal_sid = ng, nsid
                    if nsid in closed:
                        incons.add(nsid)
                    else:
                        open_set.add(nsid)
                        push(nsid, eps)
        if timed_out:
            if best is None:
                raise PlanningTimeout(f"budget exhausted after {expansions} expansions with no solution")
            break
        if goal_sid is None:
            raise UnreachableGoalError(f"goal ({gx}, {gy}) is unreachable")
        best = _extract(graph, parent, s0, goal_sid)
        achieved = eps
        solutions.append((eps, goal_g))

    sids, prims = best
    return PlanResult(
        trajectory=trajectory_from_path(graph, sids, prims),
        achieved_eps=achieved,
        expansions=expansions,
        cost=solutions[-1][1],
        states=[graph.state(s) for s in sids],
        primitives=prims,
        solutions=solutions,
    )


def _extract(graph, parent, s0, goal_sid):
    sids, prims = [goal_sid], []
    while sids[-1] != s0:
        p, prim = parent[sids[-1]]
        sids.append(p)
        prims.append(prim)
    return sids[::-1], prims[::-1]


def _goal_region_open(costmap: CostMapGlobal, gx: float, gy: float, tol: float) -> bool:
    ix0, iy0 = costmap.cell_of(gx - tol, gy - tol)
    ix1, iy1 = costmap.cell_of(gx + tol, gy + tol)
    for iy in range(max(0, iy0), min(costmap.height, iy1 + 1)):
        for ix in range(max(0, ix0), min(costmap.width, ix1 + 1)):
            x, y = costmap.cell_center(ix, iy)
            if math.hypot(x - gx, y - gy) <= tol and np.isfinite(costmap.cost[iy, ix]):
                return True
    return False

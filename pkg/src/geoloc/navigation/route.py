from __future__ import annotations

from ..terrain import CostMapGlobal
from .ara import EpsSchedule, LatticeGraph, PlanningError, PlanResult, plan_ara
from .control import VehicleState
from .primitives import MotionPrimitive, generate_primitives
from .trajectory import Trajectory


class LegPlanningError(PlanningError):
    def __init__(self, leg: int, cause: Exception):
        super().__init__(f"leg {leg} failed: {cause}")
        self.leg = leg
        self.cause = cause


def plan_route(
    start: VehicleState,
    waypoints,
    costmap: CostMapGlobal,
    sched: EpsSchedule = EpsSchedule(),
    primitives: list[MotionPrimitive] | None = None,
    goal_tolerance: float = 1.0,
) -> tuple[Trajectory, list[PlanResult]]:
    """Chain one ARA* search per leg; each leg starts where the last ended."""
    waypoints = [tuple(map(float, w)) for w in waypoints]
    if not waypoints:
        raise ValueError("need at least one waypoint")
    if primitives is None:
        primitives = generate_primitives(cell_size=costmap.cell_size)
    graph = LatticeGraph(costmap, primitives)
    state = graph.snap(start.x, start.y, start.heading)
    traj = Trajectory.from_points([])
    legs = []
    for k, wp in enumerate(waypoints):
        try:
            res = plan_ara(state, wp, costmap, primitives, sched, goal_tolerance, graph=graph)
        except PlanningError as e:
            raise LegPlanningError(k, e) from e
        legs.append(res)
        traj = traj.concatenate(res.trajectory)
        state = res.states[-1]
    return traj, legs



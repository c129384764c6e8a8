from .ara import (
    EpsSchedule,
    LatticeGraph,
    PlanningError,
    PlanningTimeout,
    PlanResult,
    UnreachableGoalError,
    plan_ara,
)
from .control import Command, VehicleState, cross_track_error, pure_pursuit, step_vehicle
from .primitives import LatticeState, MotionPrimitive, generate_primitives
from .route import LegPlanningError, plan_route
from .trajectory import Trajectory

__all__ = [
    "Command", "EpsSchedule", "LatticeGraph", "LatticeState", "LegPlanningError", "MotionPrimitive",
    "PlanResult", "PlanningError", "PlanningTimeout", "Trajectory", "UnreachableGoalError",
    "VehicleState", "cross_track_error", "generate_primitives", "plan_ara", "plan_route",
    "pure_pursuit", "step_vehicle",
]

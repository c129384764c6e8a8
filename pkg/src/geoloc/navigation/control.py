"""Pure-pursuit path tracking and exact-arc kinematic vehicle integration."""
from __future__ import annotations

import math
from dataclasses import dataclass, replace

import numpy as np

from .trajectory import Trajectory

DEFAULT_LOOKAHEAD = 8.0
DEFAULT_SPEED = 3.0
DEFAULT_MIN_TURN_RADIUS = 4.0


@dataclass(frozen=True)
class VehicleState:
    x: float
    y: float
    heading: float
    speed: float = 0.0
    curvature: float = 0.0
    time: float = 0.0

    @property
    def position(self) -> np.ndarray:
        return np.array([self.x, self.y])


@dataclass(frozen=True)
class Command:
    speed: float
    curvature: float
    finished: bool = False
    nearest_index: int = 0


def _nearest(traj: Trajectory, x: float, y: float, start: int, window: float | None) -> int:
    pts = traj.points
    lo = start
    hi = len(pts)
    if window is not None:
        hi = int(np.searchsorted(traj.s, traj.s[start] + window, side="right"))
        hi = max(hi, lo + 1)
    d = np.hypot(pts[lo:hi, 0] - x, pts[lo:hi, 1] - y)
    return lo + int(np.argmin(d))


def pure_pursuit(
    state: VehicleState,
    traj: Trajectory,
    lookahead: float = DEFAULT_LOOKAHEAD,
    speed: float = DEFAULT_SPEED,
    min_turn_radius: float = DEFAULT_MIN_TURN_RADIUS,
    search_from: int = 0,
    search_window: float | None = None,
) -> Command:
    """Curvature toward the first path point ``lookahead`` of arc beyond the
    nearest point. ``search_from``/``search_window`` restrict the nearest-point
    search so self-crossing paths are followed in order."""
    if len(traj) == 0:
        raise ValueError("empty trajectory")
    i = _nearest(traj, state.x, state.y, search_from, search_window)
    remaining = traj.length - traj.s[i]
    if remaining < lookahead / 2.0:
        return Command(0.0, 0.0, True, i)
    j = int(np.searchsorted(traj.s, traj.s[i] + lookahead, side="left"))
    j = min(j, len(traj) - 1)
    tx, ty = traj.points[j, 0] - state.x, traj.points[j, 1] - state.y
    c, s = math.cos(state.heading), math.sin(state.heading)
    y_local = -s * tx + c * ty
    L2 = tx * tx + ty * ty
    kappa = 0.0 if L2 == 0.0 else 2.0 * y_local / L2
    k_max = 1.0 / min_turn_radius
    return Command(speed, max(-k_max, min(k_max, kappa)), False, i)


def step_vehicle(state: VehicleState, cmd: Command | tuple[float, float], dt: float) -> VehicleState:
    """Advance along the exact circular arc for constant (speed, curvature)."""
    if not dt > 0:
        raise ValueError("dt must be positive")
    v, k = (cmd.speed, cmd.curvature) if isinstance(cmd, Command) else cmd
    d = v * dt
    th0 = state.heading
    th1 = th0 + k * d
    # chord of the arc along the mid heading; sin(h)/h avoids the cancellation
    # of differencing sines when k*d is small
    h = 0.5 * k * d
    chord = d * (math.sin(h) / h if h != 0 else 1.0)
    mid = th0 + h
    x = state.x + chord * math.cos(mid)
    y = state.y + chord * math.sin(mid)
    return replace(state, x=x, y=y, heading=th1, speed=v, curvature=k, time=state.time + dt)


def cross_track_error(traj: Trajectory, x: float, y: float) -> float:
    """Unsigned distance to the trajectory polyline."""
    p = traj.points[:, :2]
    a, b = p[:-1], p[1:]
    ab = b - a
    denom = np.maximum(np.einsum("ij,ij->i", ab, ab), 1e-18)
    t = np.clip(np.einsum("ij,ij->i", np.array([x, y]) - a, ab) / denom, 0.0, 1.0)
    proj = a + t[:, None] * ab
    return float(np.min(np.hypot(proj[:, 0] - x, proj[:, 1] - y)))

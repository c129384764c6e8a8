"""Forward-only Ackermann motion primitives on a heading-discretised lattice."""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from ..geometry import ConfigurationError

RASTER_STEP = 0.05  # m, sampling used to collect swept cells
TRAJ_SPACING = 0.2  # m, dense trajectory spacing (< 0.25 m contract)


@dataclass(frozen=True)
class LatticeState:
    ix: int
    iy: int
    heading: int


@dataclass(frozen=True, eq=False)
class MotionPrimitive:
    start_heading: int
    curvature: float
    arc_length: float  # nominal arc length of the continuous manoeuvre
    end_offset: tuple[float, float, float]  # exact (dx, dy, dheading) before snapping
    end_cell: tuple[int, int, int]  # snapped (dix, diy, dheading_bins)
    swept_cells: tuple[tuple[int, int], ...]  # offsets relative to the start cell
    path: np.ndarray  # (N, 3) samples of the snapped curve relative to the start cell centre
    length: float  # length of the snapped curve; used for edge costs


def _arc(theta0: float, kappa: float, s: np.ndarray) -> np.ndarray:
    if abs(kappa) < 1e-12:
        return np.column_stack([s * math.cos(theta0), s * math.sin(theta0), np.full_like(s, theta0)])
    th = theta0 + kappa * s
    return np.column_stack([(np.sin(th) - math.sin(theta0)) / kappa,
                            -(np.cos(th) - math.cos(theta0)) / kappa, th])


def _polyline_length(xy: np.ndarray) -> float:
    return float(np.sum(np.hypot(*np.diff(xy, axis=0).T)))


def generate_primitives(
    min_turn_radius: float = 4.0,
    arc_length: float = 2.0,
    headings: int = 16,
    cell_size: float = 0.5,
) -> list[MotionPrimitive]:
    """Straight, max-left/right and half-left/right arcs for every heading.

    Turning arcs are shortened or lengthened so they end exactly on a
    heading bin: the sharp turn spans ``floor(arc_length / (R * bin))`` bins
    at the minimum radius, the gentle turn half as many (at least one) at
    twice the radius.
    """
    if not min_turn_radius > 0:
        raise ConfigurationError("min_turn_radius must be positive")
    if headings < 4:
        raise ConfigurationError("need at least 4 heading bins")
    bin_w = 2.0 * math.pi / headings
    k_max = int(math.floor(arc_length / (min_turn_radius * bin_w) + 1e-9))
    if k_max < 1:
        raise ConfigurationError(
            f"arc_length {arc_length} m at radius {min_turn_radius} m turns less than one heading bin"
        )
    k_half = max(1, k_max // 2)
    kinds = [
        (0.0, 0),
        (1.0 / min_turn_radius, k_max),
        (-1.0 / min_turn_radius, -k_max),
        (0.5 / min_turn_radius, k_half),
        (-0.5 / min_turn_radius, -k_half),
    ]
    prims = []
    for h in range(headings):
        theta0 = h * bin_w
        for kappa, dbins in kinds:
            L = arc_length if dbins == 0 else abs(dbins * bin_w / kappa)
            n = max(2, int(math.ceil(L / RASTER_STEP)) + 1)
            s = np.linspace(0.0, L, n)
            exact = _arc(theta0, kappa, s)
            dx, dy = exact[-1, 0], exact[-1, 1]
            dix, diy = int(round(dx / cell_size)), int(round(dy / cell_size))
            # spread the snap correction linearly along the arc
            err = np.array([dix * cell_size - dx, diy * cell_size - dy])
            frac = (s / L)[:, None]
            xy = exact[:, :2] + frac * err
            path = np.column_stack([xy, exact[:, 2]])
            cells = np.floor((xy + 0.5 * cell_size) / cell_size).astype(int)
            swept = tuple(sorted({(int(a), int(b)) for a, b in cells}))
            prims.append(MotionPrimitive(
                start_heading=h, curvature=kappa, arc_length=L,
                end_offset=(float(dx), float(dy), dbins * bin_w),
                end_cell=(dix, diy, dbins),
                swept_cells=swept, path=path, length=_polyline_length(xy),
            ))
    return prims


def primitives_by_heading(prims: list[MotionPrimitive], headings: int) -> list[list[MotionPrimitive]]:
    out: list[list[MotionPrimitive]] = [[] for _ in range(headings)]
    for p in prims:
        out[p.start_heading].append(p)
    return out

"""Goal-grid construction: discretize drivable lanes into cells and select
the candidate local goals within the forward reach budget.

Cells tile each same-as-ego lane along its centerline arc length, one
lateral column per lane (cell width = min(requested width, lane width)).
Opposing lanes and off-road surfaces produce no cells.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .config import GridConfig
from .scene import EgoState, LaneMap, SAME_DIRECTION


@dataclass(frozen=True)
class GoalCell:
    """One drivable-area cell; its center is a potential local goal."""

    center: tuple          # (x, y), meters, ego frame
    l: float               # longitudinal extent along the lane, m
    w: float               # lateral extent, m
    lane_index: int        # index into LaneMap.lanes
    s: float               # arc-length position of the center along its lane


@dataclass
class GoalSet:
    """Candidate local goals for one (t, k) analysis step."""

    cells: list
    k: int
    d_threshold: float

    def __len__(self) -> int:
        return len(self.cells)

    def centers(self) -> np.ndarray:
        if not self.cells:
            return np.zeros((0, 2))
        return np.array([c.center for c in self.cells])


@dataclass(frozen=True)
class ReachBudget:
    """Inputs of the reach-distance bound."""

    k: int          # time budget, steps
    dt: float       # seconds per step
    v_ego: float    # current ego speed magnitude, m/s
    a_max: float    # m/s^2
    d_max: float = 120.0

    def validate(self) -> None:
        if self.k <= 0 or self.dt <= 0 or self.a_max <= 0 or self.d_max < 0:
            raise ValueError("reach budget values must be positive")
        if self.v_ego < 0:
            raise ValueError("v_ego must be >= 0")


def _polyline_arcs(points: np.ndarray) -> np.ndarray:
    seg = np.hypot(*np.diff(points, axis=0).T)
    return np.concatenate(([0.0], np.cumsum(seg)))


def discretize_drivable(lane_map: LaneMap, l: float, w: float) -> list:
    """Tile every same-direction lane into floor(arc_length / l) cells.

    Lanes shorter than one cell yield no cells (not an error).
    """
    if l <= 0 or w <= 0:
        raise ValueError("cell dimensions must be > 0")
    cells = []
    for lane_index, lane in enumerate(lane_map.lanes):
        if lane.direction != SAME_DIRECTION:
            continue
        pts = lane.centerline
        arcs = _polyline_arcs(pts)
        total = float(arcs[-1])
        n = int(math.floor(total / l))
        if n == 0:
            continue
        cell_w = min(w, lane.width)
        s_vals = (np.arange(n) + 0.5) * l
        xs = np.interp(s_vals, arcs, pts[:, 0])
        ys = np.interp(s_vals, arcs, pts[:, 1])
        cells.extend(
            GoalCell(center=(float(x), float(y)), l=l, w=cell_w,
                     lane_index=lane_index, s=float(s))
            for x, y, s in zip(xs, ys, s_vals))
    return cells


def max_reach_distance(budget: ReachBudget, mode: str = "max") -> float:
    """Reach-distance threshold d_thres for candidate goal selection.

    d = v*T + a_max*T^2/2 over the horizon T = k*dt, then combined with
    d_max: "max" keeps the threshold at least d_max (the default rule),
    "min" uses d_max as a hard cap instead.
    """
    budget.validate()
    horizon = budget.k * budget.dt
    d = budget.v_ego * horizon + 0.5 * budget.a_max * horizon * horizon
    if mode == "max":
        return max(d, budget.d_max)
    if mode == "min":
        return min(d, budget.d_max)
    raise ValueError(f"unknown threshold mode {mode!r}")


def candidate_goals(cells: list, ego: EgoState, budget: ReachBudget,
                    mode: str = "max") -> GoalSet:
    """Filter cells to the forward, distance-budgeted candidate goal set.

    Expects cells in the ego frame (ego at the origin heading +x): keeps
    exactly the cells with positive longitudinal coordinate and center
    distance <= d_thres.
    """
    d_thres = max_reach_distance(budget, mode=mode)
    kept = [c for c in cells
            if c.center[0] > 0.0 and math.hypot(*c.center) <= d_thres]
    return GoalSet(cells=kept, k=budget.k, d_threshold=d_thres)


def goals_for_scene(lane_map: LaneMap, ego: EgoState, k: int, dt: float,
                    grid: GridConfig, a_max: float) -> GoalSet:
    """Grid + budget + filter in one step (ego-frame lane map)."""
    cells = discretize_drivable(lane_map, grid.cell_length, grid.cell_width)
    budget = ReachBudget(k=k, dt=dt, v_ego=ego.speed, a_max=a_max, d_max=grid.d_max)
    return candidate_goals(cells, ego, budget, mode=grid.threshold_mode)

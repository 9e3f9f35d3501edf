"""Counterfactual reachability engine and safety-threat indicator (STI).

Per analysis step t the engine classifies every candidate local goal as
reachable or not under three kinds of actor masking: everyone present,
everyone removed, and each single actor removed.  With R, R_empty and
R_without_i the corresponding reachable sets over one shared goal set,

    scene STI  = (|R_empty| - |R|) / |R_empty|
    actor STI  = (|R_without_i| - |R|) / |R_empty|

Both are 0 with a degenerate flag when even the empty world has no
reachable goal (|R_empty| = 0): no actor can be blamed in that case.
"""

from __future__ import annotations

import csv
import json
import logging
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .config import GridConfig, PlannerParams
from .goals import GoalSet, goals_for_scene
from .paths import ReferencePath
from .planner import (ObstacleSet, build_obstacle_set, classify_goal_sets,
                      ego_frenet_state)
from .scene import SAME_DIRECTION, Scene, to_ego_frame

log = logging.getLogger(__name__)

ALL_PRESENT = "all-present"
ALL_REMOVED = "all-removed"
REMOVE_ONE = "remove-one"


@dataclass(frozen=True)
class ActorMask:
    """Counterfactual masking of the scene's actors."""

    mode: str
    actor_id: Optional[str] = None

    @staticmethod
    def all_present() -> "ActorMask":
        return ActorMask(ALL_PRESENT)

    @staticmethod
    def all_removed() -> "ActorMask":
        return ActorMask(ALL_REMOVED)

    @staticmethod
    def remove_one(actor_id: str) -> "ActorMask":
        return ActorMask(REMOVE_ONE, actor_id)

    def kept_ids(self, scene: Scene) -> set:
        ids = {a.actor_id for a in scene.actors}
        if self.mode == ALL_PRESENT:
            return ids
        if self.mode == ALL_REMOVED:
            return set()
        if self.mode == REMOVE_ONE:
            if self.actor_id not in ids:
                raise ValueError(f"mask removes unknown actor {self.actor_id!r}")
            return ids - {self.actor_id}
        raise ValueError(f"unknown mask mode {self.mode!r}")


@dataclass
class ReachabilityResult:
    """Per-goal reachability booleans under one mask."""

    goals: GoalSet
    reachable: np.ndarray          # (|goals|,) bool
    mask: ActorMask
    t: float
    k: int
    witnesses: Optional[list] = None

    @property
    def count(self) -> int:
        return int(self.reachable.sum())


@dataclass
class StiReport:
    """Scene and per-actor STI values for one time step."""

    t: float
    scene_sti: float
    actor_sti: dict
    count_present: int
    count_empty: int
    count_removed: dict
    degenerate: bool = False
    error: Optional[str] = None
    n_goals: int = 0

    def to_json_obj(self) -> dict:
        return {
            "t": self.t,
            "scene_sti": self.scene_sti,
            "degenerate": self.degenerate,
            "actors": dict(sorted(self.actor_sti.items())),
            "counts": {
                "present": self.count_present,
                "empty": self.count_empty,
                "removed": dict(sorted(self.count_removed.items())),
                "goals": self.n_goals,
            },
            "error": self.error,
        }


# ---------------------------------------------------------------------------
# shared per-step context


@dataclass
class StepContext:
    """Everything the masked passes of one (t, k) step share: the
    ego-frame scene, the goal set, per-lane reference paths, and the
    ego's Frenet state on each path."""

    scene: Scene               # ego frame
    t: float
    k: int
    dt: float
    params: PlannerParams
    goals: GoalSet
    lane_paths: dict           # lane_index -> ReferencePath
    lane_goals: dict           # lane_index -> (indices, cells)
    ego_states: dict = field(default_factory=dict)
    obstacles_by_id: dict = field(default_factory=dict)
    static_obstacles: list = field(default_factory=list)


def build_step_context(scene: Scene, t: float, k: int, params: PlannerParams,
                       grid: GridConfig) -> StepContext:
    ego_scene = to_ego_frame(scene, t)
    ego = ego_scene.ego_at(t)
    goals = goals_for_scene(ego_scene.lane_map, ego, k, ego_scene.dt, grid,
                            params.max_accel)
    if len(goals) == 0:
        log.debug("t=%s: empty goal set", t)
    lane_goals: dict = {}
    for idx, cell in enumerate(goals.cells):
        lane_goals.setdefault(cell.lane_index, ([], []))
        lane_goals[cell.lane_index][0].append(idx)
        lane_goals[cell.lane_index][1].append(cell)
    lane_paths = {}
    for li in lane_goals:
        lane = ego_scene.lane_map.lanes[li]
        assert lane.direction == SAME_DIRECTION
        lane_paths[li] = ReferencePath(lane.centerline)
    ctx = StepContext(scene=ego_scene, t=t, k=k, dt=ego_scene.dt, params=params,
                      goals=goals, lane_paths=lane_paths, lane_goals=lane_goals)
    for li, path in lane_paths.items():
        ctx.ego_states[li] = ego_frenet_state(path, ego)
    full = build_obstacle_set(ego_scene, t, k)
    ctx.obstacles_by_id = {o.actor_id: o for o in full.dynamic}
    ctx.static_obstacles = full.static
    return ctx


def _classify_masks(ctx: StepContext, masks: list,
                    collect_witnesses: bool = False) -> list:
    """Run several masked passes over one shared step context.  Candidate
    generation and per-actor clearances are shared across masks inside
    the planner kernel."""
    ego = ctx.scene.ego_at(ctx.t)
    dynamic_sets = []
    for mask in masks:
        kept = mask.kept_ids(ctx.scene)
        dynamic_sets.append([ctx.obstacles_by_id[a.actor_id]
                             for a in ctx.scene.actors if a.actor_id in kept])
    n_goals = len(ctx.goals)
    reach_all = np.zeros((len(masks), n_goals), dtype=bool)
    wits_all: list = [[None] * n_goals for _ in masks]
    for li, (indices, cells) in ctx.lane_goals.items():
        reach, wits = classify_goal_sets(ctx.lane_paths[li], ctx.ego_states[li],
                                         ego, cells, ctx.k, ctx.dt, ctx.params,
                                         dynamic_sets, ctx.static_obstacles,
                                         collect_witnesses=collect_witnesses)
        idx = np.asarray(indices, dtype=int)
        reach_all[:, idx] = reach
        if collect_witnesses:
            for m in range(len(masks)):
                for local_i, goal_i in enumerate(indices):
                    wits_all[m][goal_i] = wits[m][local_i]
    return [ReachabilityResult(goals=ctx.goals, reachable=reach_all[m],
                               mask=masks[m], t=ctx.t, k=ctx.k,
                               witnesses=wits_all[m] if collect_witnesses else None)
            for m in range(len(masks))]


def _classify_mask(ctx: StepContext, mask: ActorMask,
                   collect_witnesses: bool = False) -> ReachabilityResult:
    return _classify_masks(ctx, [mask], collect_witnesses=collect_witnesses)[0]


def reachable_set(scene: Scene, t: float, k: int, mask: ActorMask,
                  params: PlannerParams, grid: Optional[GridConfig] = None,
                  collect_witnesses: bool = False) -> ReachabilityResult:
    """Classify the candidate goals of one scene step under one mask."""
    ctx = build_step_context(scene, t, k, params, grid or GridConfig())
    return _classify_mask(ctx, mask, collect_witnesses=collect_witnesses)


# ---------------------------------------------------------------------------
# STI formulas


def _check_comparable(a: ReachabilityResult, b: ReachabilityResult) -> None:
    if a.t != b.t or a.k != b.k or len(a.goals) != len(b.goals):
        raise ValueError("reachability results do not share a goal set")
    if a.goals.cells is not b.goals.cells and a.goals.cells != b.goals.cells:
        raise ValueError("reachability results do not share a goal set")


def scene_sti(r_present: ReachabilityResult,
              r_empty: ReachabilityResult) -> tuple:
    """Scene STI and its degenerate flag: (|R_empty| - |R|) / |R_empty|."""
    _check_comparable(r_present, r_empty)
    n_empty = r_empty.count
    if n_empty == 0:
        return 0.0, True
    return (n_empty - r_present.count) / n_empty, False


def actor_sti(r_present: ReachabilityResult, r_without_i: ReachabilityResult,
              r_empty: ReachabilityResult) -> tuple:
    """Actor STI and degenerate flag: (|R_without_i| - |R|) / |R_empty|.

    Clamps (and logs) if the inputs break the R <= R_without_i
    monotonicity, which a correct planner never produces.
    """
    _check_comparable(r_present, r_empty)
    _check_comparable(r_without_i, r_empty)
    n_empty = r_empty.count
    if n_empty == 0:
        return 0.0, True
    value = (r_without_i.count - r_present.count) / n_empty
    if value < 0.0:
        log.warning("actor STI clamp: |R_without| < |R| for %s", r_without_i.mask)
        return 0.0, False
    return value, False


# ---------------------------------------------------------------------------
# per-step / per-scene profiles


def sti_step(scene: Scene, t: float, k: int, params: PlannerParams,
             grid: Optional[GridConfig] = None, threads: int = 1) -> StiReport:
    """One full N+2-pass STI evaluation at step t.

    Masks that keep the same actor subset (e.g. remove-one in a one-actor
    scene vs all-removed) share a single classification pass; results are
    a pure function of the kept set, so this changes nothing observable.
    """
    ctx = build_step_context(scene, t, k, params, grid or GridConfig())
    masks = [ActorMask.all_present(), ActorMask.all_removed()]
    masks += [ActorMask.remove_one(a.actor_id) for a in scene.actors]
    keys = [frozenset(m.kept_ids(scene)) for m in masks]
    distinct: dict = {}
    for m, key in zip(masks, keys):
        distinct.setdefault(key, m)
    items = list(distinct.items())
    if threads > 1 and len(items) > 1:
        # per-lane work splits across masks; chunk the distinct masks
        chunks = [items[i::threads] for i in range(threads)]
        chunks = [c for c in chunks if c]
        with ThreadPoolExecutor(max_workers=threads) as pool:
            parts = list(pool.map(
                lambda ch: _classify_masks(ctx, [m for _, m in ch]), chunks))
        passes_by_mask = {}
        for ch, res_list in zip(chunks, parts):
            for (key, _), res in zip(ch, res_list):
                passes_by_mask[key] = res
        passes = [passes_by_mask[key] for key, _ in items]
    else:
        passes = _classify_masks(ctx, [m for _, m in items])
    by_key = {key: res for (key, _), res in zip(items, passes)}
    results = []
    for m, key in zip(masks, keys):
        base = by_key[key]
        results.append(ReachabilityResult(goals=base.goals, reachable=base.reachable,
                                          mask=m, t=base.t, k=base.k,
                                          witnesses=base.witnesses))
    r_present, r_empty = results[0], results[1]
    value, degenerate = scene_sti(r_present, r_empty)
    actor_vals = {}
    count_removed = {}
    for trk, res in zip(scene.actors, results[2:]):
        av, _ = actor_sti(r_present, res, r_empty)
        actor_vals[trk.actor_id] = av
        count_removed[trk.actor_id] = res.count
    return StiReport(t=t, scene_sti=value, actor_sti=actor_vals,
                     count_present=r_present.count, count_empty=r_empty.count,
                     count_removed=count_removed, degenerate=degenerate,
                     n_goals=len(ctx.goals))


def sti_profile(scene: Scene, k: int, params: PlannerParams,
                grid: Optional[GridConfig] = None, threads: int = 1) -> list:
    """STI time series over every recorded ego step.  Per-step failures
    are recorded as flagged gaps; the profile never aborts as a whole."""
    reports = []
    for ego_state in scene.ego:
        t = ego_state.t
        try:
            reports.append(sti_step(scene, t, k, params, grid, threads=threads))
        except Exception as exc:  # noqa: BLE001 - per-step isolation is the contract
            log.warning("t=%s: STI step failed: %s", t, exc)
            reports.append(StiReport(t=t, scene_sti=0.0, actor_sti={},
                                     count_present=0, count_empty=0,
                                     count_removed={}, degenerate=True,
                                     error=str(exc)))
    return reports


# ---------------------------------------------------------------------------
# report serialization


def write_report_jsonl(reports: list, fh) -> None:
    for r in reports:
        fh.write(json.dumps(r.to_json_obj(), sort_keys=True))
        fh.write("\n")


def write_report_csv(reports: list, fh) -> None:
    writer = csv.writer(fh)
    writer.writerow(["t", "scene_sti", "degenerate", "goals", "count_present",
                     "count_empty", "actor_id", "actor_sti", "count_removed"])
    for r in reports:
        if not r.actor_sti:
            writer.writerow([r.t, r.scene_sti, int(r.degenerate), r.n_goals,
                             r.count_present, r.count_empty, "", "", ""])
            continue
        for actor_id in sorted(r.actor_sti):
            writer.writerow([r.t, r.scene_sti, int(r.degenerate), r.n_goals,
                             r.count_present, r.count_empty, actor_id,
                             r.actor_sti[actor_id], r.count_removed[actor_id]])

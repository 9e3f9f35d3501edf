"""Frenet-frame trajectory sampling and per-goal reachability queries.

Candidates pair a quintic lateral polynomial d(tau) with a quintic
longitudinal polynomial s(tau) over a small deterministic lattice of end
times, end speeds, and lateral end offsets, then convert to Cartesian
poses along the reference path.

Trajectory kinematics contract (all derived from the pose sequence, so an
independent checker can recompute them from poses + dt + the ego's initial
speed and heading):

  chord_i  = |p_{i+1} - p_i|                      i = 0 .. n_driven-1
  speed_i  = chord_i / dt
  yaw_i    = atan2(chord_i) while chord_i > 1e-9, else held from yaw_{i-1}
             (yaw_{-1} = initial ego heading)
  accel_i  = (speed_i - speed_{i-1}) / dt         (speed_{-1} = initial speed)
  curv_i   = wrap(yaw_i - yaw_{i-1}) / chord_i    (0 when chord_i <= 1e-9)

Poses always span the full horizon: a candidate that arrives at its goal
after n_driven < k steps is padded by repeating the terminal pose
("parked"), and collision clearances are enforced on every one of the
k+1 steps.  Feasibility limits apply to the driven prefix only.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .config import PlannerParams
from .geometry import (point_box_distance_steps, point_polyline_distance,
                       wrap_angle)
from .goals import GoalCell
from .paths import ReferencePath
from .scene import EgoState, Scene, state_at_clamped

log = logging.getLogger(__name__)

_EPS_CHORD = 1e-9


@dataclass(frozen=True)
class FrenetState:
    """Kinematic state in path coordinates (arc length s, lateral d)."""

    s: float
    s_dot: float
    s_ddot: float
    d: float
    d_dot: float
    d_ddot: float


@dataclass
class CandidateTrajectory:
    """One sampled ego trajectory, Cartesian, over the full k-step horizon."""

    poses: np.ndarray       # (k+1, 3) of (x, y, yaw); parked padding after arrival
    speeds: np.ndarray      # (n_driven,) m/s
    accels: np.ndarray      # (n_driven,) m/s^2
    curvatures: np.ndarray  # (n_driven,) 1/m, signed
    cost: float             # integrated squared accel (informational)
    n_driven: int           # steps actually driven before parking


@dataclass
class DynamicObstacle:
    """Per-step oriented bounding boxes of one actor over the horizon."""

    actor_id: str
    centers: np.ndarray     # (k+1, 2)
    yaws: np.ndarray        # (k+1,)
    length: float
    width: float


@dataclass
class ObstacleSet:
    """Unmasked dynamic actors plus static boundary polylines."""

    dynamic: list = field(default_factory=list)
    static: list = field(default_factory=list)   # list of (M, 2) polylines


def build_obstacle_set(scene: Scene, t: float, k: int,
                       actor_ids: Optional[set] = None) -> ObstacleSet:
    """Obstacles over [t, t+k] from scene tracks (hold-first/last outside
    the recorded span).  actor_ids=None includes every actor; otherwise
    only the listed ids (counterfactual masking filters here)."""
    steps = np.arange(k + 1)
    dynamic = []
    for trk in scene.actors:
        if actor_ids is not None and trk.actor_id not in actor_ids:
            continue
        states = [state_at_clamped(trk, t + int(i)) for i in steps]
        centers = np.array([[s.x, s.y] for s in states])
        yaws = np.array([s.yaw for s in states])
        last = states[-1]
        dynamic.append(DynamicObstacle(trk.actor_id, centers, yaws,
                                       last.length, last.width))
    static = [np.asarray(b, dtype=float) for b in scene.lane_map.boundaries]
    return ObstacleSet(dynamic=dynamic, static=static)


def ego_frenet_state(path: ReferencePath, ego: EgoState) -> FrenetState:
    """Project the ego state onto a reference path.

    Velocity/acceleration are resolved along the local tangent/normal;
    the curvature coupling term is ignored here because all downstream
    feasibility checks re-derive kinematics from the pose sequence.
    """
    s0, d0 = path.project((ego.x, ego.y))
    tan = path.tangent(s0)
    nor = path.normal(s0)
    c, s = math.cos(ego.yaw), math.sin(ego.yaw)
    vel = np.array([ego.v_long * c - ego.v_lat * s, ego.v_long * s + ego.v_lat * c])
    acc = np.array([ego.a_long * c - ego.a_lat * s, ego.a_long * s + ego.a_lat * c])
    return FrenetState(s=s0, s_dot=float(vel @ tan), s_ddot=float(acc @ tan),
                       d=d0, d_dot=float(vel @ nor), d_ddot=float(acc @ nor))


def frenet_roundtrip(path: ReferencePath, state: FrenetState) -> FrenetState:
    """Cartesian conversion followed by re-projection; (s, d) must survive
    the round trip within 1e-6 m (spec contract, tested)."""
    point = path.to_cartesian(state.s, state.d)
    s2, d2 = path.project(point)
    return FrenetState(s=s2, s_dot=state.s_dot, s_ddot=state.s_ddot,
                       d=d2, d_dot=state.d_dot, d_ddot=state.d_ddot)


# ---------------------------------------------------------------------------
# sampling lattice


def _quintic_matrix(T: float) -> np.ndarray:
    return np.array([
        [T ** 3, T ** 4, T ** 5],
        [3 * T ** 2, 4 * T ** 3, 5 * T ** 4],
        [6 * T, 12 * T ** 2, 20 * T ** 3],
    ])


_LATTICE_CACHE: dict = {}


def _time_grid(n_e: int, dt: float):
    """Cached (tau, quintic-matrix inverse, tau^3/4/5 powers) per end step."""
    key = (n_e, round(dt, 12))
    hit = _LATTICE_CACHE.get(key)
    if hit is None:
        tau = np.arange(n_e + 1) * dt
        minv = np.linalg.inv(_quintic_matrix(n_e * dt))
        powers = np.stack([tau ** 3, tau ** 4, tau ** 5])
        hit = (tau, minv, powers)
        if len(_LATTICE_CACHE) < 4096:
            _LATTICE_CACHE[key] = hit
    return hit


def _lateral_offsets(params: PlannerParams, cell_w: float) -> np.ndarray:
    n = params.n_lateral
    if n == 1:
        return np.array([0.0])
    half = (n - 1) / 2.0
    return (np.arange(n) - half) / half * (cell_w / 4.0)


def _end_speeds(params: PlannerParams) -> np.ndarray:
    if params.n_speed == 1:
        return np.array([0.0])
    return np.linspace(0.0, params.max_speed, params.n_speed)


def _end_steps(params: PlannerParams, k: int) -> list:
    out = []
    for frac in params.end_time_fracs:
        n = max(1, int(round(frac * k)))
        n = min(n, k)
        if n not in out:
            out.append(n)
    return out


# ---------------------------------------------------------------------------
# batched classification kernel


def classify_goal_sets(path: ReferencePath, ego_fs: FrenetState, ego: EgoState,
                       goals: list, k: int, dt: float, params: PlannerParams,
                       dynamic_sets: list, static: list,
                       collect_witnesses: bool = False):
    """Classify every goal on one reference path under several actor masks
    at once.

    dynamic_sets is one list of DynamicObstacle per mask.  Candidate
    generation, feasibility, and static clearances are mask-independent
    and computed once; per-actor clearances are computed once per unique
    obstacle object and AND-combined per mask, so the N+2 counterfactual
    passes cost barely more than one.

    Returns (reachable (M, G) bool, witnesses: per mask a list of
    CandidateTrajectory or None per goal).  Deterministic: the lattice
    order is (end-time as listed, lateral index, speed index) and the
    witness is the first passing candidate in that order.
    """
    M = len(dynamic_sets)
    G = len(goals)
    reachable = np.zeros((M, G), dtype=bool)
    witnesses: list = [[None] * G for _ in range(M)]
    if G == 0 or M == 0:
        return reachable, witnesses

    v_init = ego.speed
    yaw0 = ego.yaw
    cell_l = goals[0].l
    cell_w = goals[0].w
    centers = np.array([g.center for g in goals])
    s_g, d_g = path.project_many(centers)
    cell_yaw = path.yaw(s_g)
    cell_tan = np.stack([np.cos(cell_yaw), np.sin(cell_yaw)], axis=-1)
    cell_nor = np.stack([-np.sin(cell_yaw), np.cos(cell_yaw)], axis=-1)

    # forward-only sampling: goals at or behind the ego's arc position are out
    fwd = s_g > ego_fs.s
    if not np.any(fwd):
        return reachable, witnesses

    uniq: dict = {}
    for dyn in dynamic_sets:
        for obs in dyn:
            uniq[id(obs)] = obs
    set_keys = [tuple(id(obs) for obs in dyn) for dyn in dynamic_sets]

    offsets = _lateral_offsets(params, cell_w)
    v_ends = _end_speeds(params)
    L, V = len(offsets), len(v_ends)
    LV = L * V
    cl_dyn = params.clearance_dynamic + params.ego_radius
    cl_stat = params.clearance_static + params.ego_radius

    for n_e in _end_steps(params, k):
        active = np.flatnonzero(fwd & ~reachable.all(axis=0))
        if active.size == 0:
            break
        Ga = active.size
        T = n_e * dt
        tau, minv, powers = _time_grid(n_e, dt)
        S = n_e + 1

        sa, sd, sdd = ego_fs.s, ego_fs.s_dot, ego_fs.s_ddot
        da, dd, ddd = ego_fs.d, ego_fs.d_dot, ego_fs.d_ddot
        base_s = sa + sd * tau + 0.5 * sdd * tau * tau            # (S,)
        base_d = da + dd * tau + 0.5 * ddd * tau * tau

        rhs_s = np.empty((Ga, V, 3))
        rhs_s[..., 0] = s_g[active, None] - (sa + sd * T + 0.5 * sdd * T * T)
        rhs_s[..., 1] = v_ends[None, :] - (sd + sdd * T)
        rhs_s[..., 2] = -sdd
        coef_s = rhs_s @ minv.T                                    # (Ga, V, 3)
        s_tau = base_s + np.einsum("gvc,cs->gvs", coef_s, powers)  # (Ga, V, S)

        d_targets = d_g[active, None] + offsets[None, :]           # (Ga, L)
        rhs_d = np.empty((Ga, L, 3))
        rhs_d[..., 0] = d_targets - (da + dd * T + 0.5 * ddd * T * T)
        rhs_d[..., 1] = -(dd + ddd * T)
        rhs_d[..., 2] = -ddd
        coef_d = rhs_d @ minv.T
        d_tau = base_d + np.einsum("glc,cs->gls", coef_d, powers)  # (Ga, L, S)

        s_full = np.broadcast_to(s_tau[:, None, :, :], (Ga, L, V, S))
        d_full = np.broadcast_to(d_tau[:, :, None, :], (Ga, L, V, S))

        ref_pos, ref_tan, ref_kappa = path.frame(s_full)
        if path.is_straight:
            valid = np.ones((Ga, L, V), dtype=bool)
        else:
            valid = np.all(1.0 - ref_kappa * d_full > 1e-6, axis=-1)
            n_singular = int(valid.size - valid.sum())
            if n_singular:
                log.debug("dropped %d candidates at frenet singularities", n_singular)
        ref_nor = np.stack([-ref_tan[..., 1], ref_tan[..., 0]], axis=-1)
        pos = ref_pos + d_full[..., None] * ref_nor

        chords_vec = np.diff(pos, axis=-2)                         # (Ga,L,V,S-1,2)
        chords = np.hypot(chords_vec[..., 0], chords_vec[..., 1])
        speeds = chords / dt
        raw_yaw = np.arctan2(chords_vec[..., 1], chords_vec[..., 0])
        moving = chords > _EPS_CHORD
        if np.all(moving):
            yaws = raw_yaw
        else:
            # hold the last moving heading through zero-length steps
            step_idx = np.where(moving, np.arange(S - 1), -1)
            filled = np.maximum.accumulate(step_idx, axis=-1)
            yaws = np.take_along_axis(raw_yaw, np.maximum(filled, 0), axis=-1)
            yaws = np.where(filled >= 0, yaws, float(yaw0))
        yaw_prev = np.concatenate(
            [np.full(raw_yaw.shape[:-1] + (1,), float(yaw0)), yaws[..., :-1]], axis=-1)
        dyaw = wrap_angle(yaws - yaw_prev)
        curv = np.where(moving, dyaw / np.maximum(chords, _EPS_CHORD), 0.0)
        v_prev = np.concatenate(
            [np.full(speeds.shape[:-1] + (1,), float(v_init)), speeds[..., :-1]], axis=-1)
        accels = (speeds - v_prev) / dt

        feas = (np.all(speeds <= params.max_speed, axis=-1)
                & np.all(np.abs(accels) <= params.max_accel, axis=-1)
                & np.all(np.abs(curv) <= params.max_curvature, axis=-1))

        rel_end = pos[..., -1, :] - centers[active][:, None, None, :]
        along = np.einsum("glvc,gc->glv", rel_end, cell_tan[active])
        across = np.einsum("glvc,gc->glv", rel_end, cell_nor[active])
        in_cell = (np.abs(along) <= 0.5 * cell_l + 1e-9) & \
                  (np.abs(across) <= 0.5 * cell_w + 1e-9)

        ok = valid & feas & in_cell
        cand_idx = np.flatnonzero(ok.reshape(-1))
        if cand_idx.size == 0:
            continue
        # collision clearances only for candidates that survived so far
        pos_sel = pos.reshape(Ga * LV, S, 2)[cand_idx]
        padded = np.concatenate(
            [pos_sel, np.repeat(pos_sel[:, -1:, :], k + 1 - S, axis=1)], axis=1)
        if static:
            flat = padded.reshape(-1, 2)
            dmin = np.full(flat.shape[0], np.inf)
            for poly in static:
                dmin = np.minimum(dmin, point_polyline_distance(flat, poly))
            stat_ok = np.all(dmin.reshape(cand_idx.size, -1) >= cl_stat, axis=-1)
            cand_idx = cand_idx[stat_ok]
            if cand_idx.size == 0:
                continue
            padded = padded[stat_ok]

        clears = {}
        for oid, obs in uniq.items():
            dist = point_box_distance_steps(padded, obs.centers, obs.yaws,
                                            obs.length, obs.width)
            clears[oid] = np.all(dist >= cl_dyn, axis=-1)

        for m in range(M):
            keep = np.ones(cand_idx.size, dtype=bool)
            for oid in set_keys[m]:
                keep &= clears[oid]
            sel_idx = np.flatnonzero(keep)
            if sel_idx.size == 0:
                continue
            goals_hit = cand_idx[sel_idx] // LV
            first_goal, first_pos = np.unique(goals_hit, return_index=True)
            for g_local, f in zip(first_goal, first_pos):
                g = int(active[int(g_local)])
                if reachable[m, g]:
                    continue
                reachable[m, g] = True
                if collect_witnesses:
                    sel = int(sel_idx[f])
                    flat_i = int(cand_idx[sel])
                    gi = flat_i // LV
                    li, vi = np.unravel_index(flat_i % LV, (L, V))
                    ylast = yaws[gi, li, vi, -1]
                    yall = np.concatenate(
                        [yaws[gi, li, vi], np.full(k + 1 - S + 1, ylast)])[:k + 1]
                    pose = np.concatenate([padded[sel], yall[:, None]], axis=1)
                    witnesses[m][g] = CandidateTrajectory(
                        poses=pose,
                        speeds=speeds[gi, li, vi].copy(),
                        accels=accels[gi, li, vi].copy(),
                        curvatures=curv[gi, li, vi].copy(),
                        cost=float(np.sum(accels[gi, li, vi] ** 2) * dt),
                        n_driven=n_e,
                    )
    return reachable, witnesses


def classify_goals(path: ReferencePath, ego_fs: FrenetState, ego: EgoState,
                   goals: list, k: int, dt: float, params: PlannerParams,
                   obstacles: ObstacleSet, collect_witnesses: bool = False):
    """Single-mask wrapper around classify_goal_sets; returns (reachable
    (G,) bool, witnesses per goal)."""
    reach, wits = classify_goal_sets(path, ego_fs, ego, goals, k, dt, params,
                                     [list(obstacles.dynamic)], obstacles.static,
                                     collect_witnesses=collect_witnesses)
    return reach[0], wits[0]


# ---------------------------------------------------------------------------
# single-goal / single-trajectory API


def sample_candidates(path: ReferencePath, ego: EgoState, goal: GoalCell,
                      horizon_steps: int, dt: float,
                      params: PlannerParams) -> list:
    """All lattice candidates whose terminal position lands inside the goal
    cell (feasibility and collisions are checked separately).  Empty when
    the goal lies at or behind the ego's arc position."""
    ego_fs = ego_frenet_state(path, ego)
    s_g, d_g = path.project(goal.center)
    if s_g <= ego_fs.s:
        return []
    cell_yaw = float(path.yaw(s_g))
    tan = np.array([math.cos(cell_yaw), math.sin(cell_yaw)])
    nor = np.array([-math.sin(cell_yaw), math.cos(cell_yaw)])
    out = []
    v_init = ego.speed
    for n_e in _end_steps(params, horizon_steps):
        T = n_e * dt
        tau = np.arange(n_e + 1) * dt
        minv = np.linalg.inv(_quintic_matrix(T))
        for off in _lateral_offsets(params, goal.w):
            for v_end in _end_speeds(params):
                cs = minv @ np.array([
                    s_g - (ego_fs.s + ego_fs.s_dot * T + 0.5 * ego_fs.s_ddot * T * T),
                    v_end - (ego_fs.s_dot + ego_fs.s_ddot * T),
                    -ego_fs.s_ddot])
                cd = minv @ np.array([
                    (d_g + off) - (ego_fs.d + ego_fs.d_dot * T + 0.5 * ego_fs.d_ddot * T * T),
                    -(ego_fs.d_dot + ego_fs.d_ddot * T),
                    -ego_fs.d_ddot])
                s_tau = (ego_fs.s + ego_fs.s_dot * tau + 0.5 * ego_fs.s_ddot * tau ** 2
                         + cs[0] * tau ** 3 + cs[1] * tau ** 4 + cs[2] * tau ** 5)
                d_tau = (ego_fs.d + ego_fs.d_dot * tau + 0.5 * ego_fs.d_ddot * tau ** 2
                         + cd[0] * tau ** 3 + cd[1] * tau ** 4 + cd[2] * tau ** 5)
                kappa = path.curvature(s_tau)
                if np.any(1.0 - kappa * d_tau <= 1e-6):
                    log.debug("candidate crosses a frenet singularity; dropped")
                    continue
                pos = path.position(s_tau) + d_tau[:, None] * path.normal(s_tau)
                rel = pos[-1] - np.asarray(goal.center)
                if abs(float(rel @ tan)) > 0.5 * goal.l + 1e-9:
                    continue
                if abs(float(rel @ nor)) > 0.5 * goal.w + 1e-9:
                    continue
                out.append(_make_trajectory(pos, horizon_steps, n_e, dt,
                                            v_init, ego.yaw))
    return out


def _make_trajectory(pos: np.ndarray, k: int, n_e: int, dt: float,
                     v_init: float, yaw0: float) -> CandidateTrajectory:
    padded = np.concatenate([pos, np.repeat(pos[-1:], k + 1 - len(pos), axis=0)])
    chords_vec = np.diff(pos, axis=0)
    chords = np.hypot(chords_vec[:, 0], chords_vec[:, 1])
    speeds = chords / dt
    yaws = np.empty(n_e)
    prev = float(yaw0)
    for i in range(n_e):
        if chords[i] > _EPS_CHORD:
            prev = math.atan2(chords_vec[i, 1], chords_vec[i, 0])
        yaws[i] = prev
    yaw_prev = np.concatenate([[yaw0], yaws[:-1]])
    curv = np.where(chords > _EPS_CHORD,
                    wrap_angle(yaws - yaw_prev) / np.maximum(chords, _EPS_CHORD), 0.0)
    v_prev = np.concatenate([[v_init], speeds[:-1]])
    accels = (speeds - v_prev) / dt
    pose_yaws = np.concatenate([yaws, np.repeat(yaws[-1:] if n_e else [yaw0],
                                                k + 1 - n_e)])
    poses = np.concatenate([padded, pose_yaws[:, None]], axis=1)
    return CandidateTrajectory(poses=poses, speeds=speeds, accels=accels,
                               curvatures=curv,
                               cost=float(np.sum(accels ** 2) * dt), n_driven=n_e)


def feasible(traj: CandidateTrajectory, params: PlannerParams) -> bool:
    """Speed/acceleration/curvature limits over every driven step."""
    return bool(np.all(traj.speeds <= params.max_speed)
                and np.all(np.abs(traj.accels) <= params.max_accel)
                and np.all(np.abs(traj.curvatures) <= params.max_curvature))


def collision_free(traj: CandidateTrajectory, obstacles: ObstacleSet,
                   params: PlannerParams) -> bool:
    """Clearance check at every horizon step (driven + parked padding),
    time-synchronized with each obstacle's own motion."""
    pts = traj.poses[:, :2]
    n = len(pts)
    cl_dyn = params.clearance_dynamic + params.ego_radius
    cl_stat = params.clearance_static + params.ego_radius
    for obs in obstacles.dynamic:
        m = min(n, len(obs.centers))
        dist = point_box_distance_steps(pts[None, :m], obs.centers[:m],
                                        obs.yaws[:m], obs.length, obs.width)
        if np.any(dist < cl_dyn):
            return False
    for poly in obstacles.static:
        if np.any(point_polyline_distance(pts, poly) < cl_stat):
            return False
    return True


def goal_reachable(ego: EgoState, goal: GoalCell, obstacles: ObstacleSet,
                   path: ReferencePath, k: int, params: PlannerParams,
                   dt: float = 0.1) -> bool:
    """True iff at least one sampled candidate is feasible and collision
    free.  Deterministic for fixed params (fixed sampling lattice)."""
    ego_fs = ego_frenet_state(path, ego)
    reach, _ = classify_goals(path, ego_fs, ego, [goal], k, dt, params,
                              obstacles)
    return bool(reach[0])

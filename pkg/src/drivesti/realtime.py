"""Realtime-setting STI: noisy measurements, state estimation, trajectory
sampling, and Monte-Carlo STI distributions.

Actors are tracked with a linear Kalman filter over a constant-velocity
motion model (state x, y, vx, vy), predicted k steps ahead, and sampled
as temporally correlated trajectories (process noise drawn per step and
propagated, not independent per-step marginals).  Each sampled world is
fed through the same counterfactual reachability pipeline as the oracle
path; the spread over samples estimates the STI uncertainty.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Optional

import numpy as np

from .config import GridConfig, NoiseModel, PlannerParams
from .planner import DynamicObstacle, ObstacleSet, classify_goal_sets
from .reachability import (ActorMask, ReachabilityResult, actor_sti,
                           build_step_context, scene_sti)
from .reachability import _classify_mask  # shared per-mask engine
from .scene import Scene

__all__ = [
    "Measurement", "FilterState", "PredictedDistribution",
    "SampledTrajectorySet", "StiDistribution", "synthesize_measurements",
    "estimate", "predict", "sample_set", "mc_sti",
]


@dataclass(frozen=True)
class Measurement:
    """Detected bounding box of one actor at one time index."""

    t: float
    actor_id: str
    center: tuple          # (x, y) with additive noise, meters
    extent: tuple          # (length, width), meters


@dataclass
class FilterState:
    """Posterior mean/covariance of the constant-velocity filter."""

    mean: np.ndarray        # (4,) = x, y, vx, vy
    covariance: np.ndarray  # (4, 4) symmetric PSD


@dataclass
class PredictedDistribution:
    """Per-step Gaussians over [t, t+k] under pure CV propagation."""

    means: np.ndarray        # (k+1, 4)
    covariances: np.ndarray  # (k+1, 4, 4)


@dataclass
class SampledTrajectorySet:
    """One concrete trajectory draw per actor, plus the seed that made it."""

    trajectories: dict       # actor_id -> (k+1, 4) sampled states
    seed: int


@dataclass
class StiDistribution:
    """Monte-Carlo STI samples and their aggregates."""

    scene_samples: np.ndarray          # (n_samples,)
    actor_samples: dict                # actor_id -> (n_samples,)
    scene_mean: float
    scene_std: float
    actor_mean: dict
    actor_std: dict
    n_samples: int
    single_sample: bool = False
    degenerate_samples: int = 0


def _cv_matrices(dt: float, q: float):
    F = np.array([[1.0, 0.0, dt, 0.0],
                  [0.0, 1.0, 0.0, dt],
                  [0.0, 0.0, 1.0, 0.0],
                  [0.0, 0.0, 0.0, 1.0]])
    dt2, dt3 = dt * dt, dt * dt * dt
    Q = q * np.array([[dt3 / 3, 0.0, dt2 / 2, 0.0],
                      [0.0, dt3 / 3, 0.0, dt2 / 2],
                      [dt2 / 2, 0.0, dt, 0.0],
                      [0.0, dt2 / 2, 0.0, dt]])
    return F, Q

_H = np.array([[1.0, 0.0, 0.0, 0.0],
               [0.0, 1.0, 0.0, 0.0]])


def estimate(history: list, dt: float, noise: NoiseModel) -> FilterState:
    """Kalman posterior after filtering one actor's measurement history.

    The prior centers on the first measurement with zero velocity and the
    configured prior covariance; gaps in the time indices are bridged by
    extra prediction steps.
    """
    if not history:
        raise ValueError("estimate needs at least one measurement")
    F, Q = _cv_matrices(dt, noise.process_q)
    R = np.diag([noise.meas_sigma_x ** 2, noise.meas_sigma_y ** 2])
    first = history[0]
    mean = np.array([first.center[0], first.center[1], 0.0, 0.0])
    cov = np.diag([noise.prior_pos_var, noise.prior_pos_var,
                   noise.prior_vel_var, noise.prior_vel_var])
    t_prev = first.t
    for m in history[1:]:
        steps = int(round(m.t - t_prev))
        for _ in range(max(steps, 1)):
            mean = F @ mean
            cov = F @ cov @ F.T + Q
        z = np.asarray(m.center, dtype=float)
        innov = z - _H @ mean
        S = _H @ cov @ _H.T + R
        # pinv: a fully converged noise-free filter has S = 0 (gain 0)
        K = cov @ _H.T @ np.linalg.pinv(S)
        mean = mean + K @ innov
        cov = (np.eye(4) - K @ _H) @ cov
        cov = 0.5 * (cov + cov.T)
        t_prev = m.t
    return FilterState(mean=mean, covariance=cov)


def predict(state: FilterState, k: int, dt: float,
            noise: NoiseModel) -> PredictedDistribution:
    """Propagate the posterior k steps ahead with no further updates.

    The covariance trace is non-decreasing (additive PSD process noise).
    """
    F, Q = _cv_matrices(dt, noise.process_q)
    means = np.empty((k + 1, 4))
    covs = np.empty((k + 1, 4, 4))
    mean, cov = state.mean.copy(), state.covariance.copy()
    means[0], covs[0] = mean, cov
    for i in range(1, k + 1):
        mean = F @ mean
        cov = F @ cov @ F.T + Q
        means[i], covs[i] = mean, cov
    return PredictedDistribution(means=means, covariances=covs)


def _sqrt_psd(mat: np.ndarray) -> np.ndarray:
    """Matrix square root that tolerates exactly-singular PSD input."""
    if not np.any(mat):
        return np.zeros_like(mat)
    vals, vecs = np.linalg.eigh(mat)
    vals = np.clip(vals, 0.0, None)
    return vecs @ np.diag(np.sqrt(vals)) @ vecs.T


def sample_set(predictions: dict, dt: float, noise: NoiseModel,
               seed: int) -> SampledTrajectorySet:
    """Draw one temporally correlated trajectory per actor.

    The step-0 state is drawn from the posterior, then per-step process
    noise is drawn and propagated through the CV model, so consecutive
    sampled states stay dynamically consistent.  Identical seeds give
    identical draws; all-zero covariances return the means exactly.
    """
    rng = np.random.default_rng(seed)
    F, Q = _cv_matrices(dt, noise.process_q)
    sq = _sqrt_psd(Q)
    out = {}
    for actor_id in sorted(predictions):
        pred = predictions[actor_id]
        k = len(pred.means) - 1
        traj = np.empty((k + 1, 4))
        x = pred.means[0] + _sqrt_psd(pred.covariances[0]) @ rng.standard_normal(4)
        traj[0] = x
        for i in range(1, k + 1):
            x = F @ x + sq @ rng.standard_normal(4)
            traj[i] = x
        out[actor_id] = traj
    return SampledTrajectorySet(trajectories=out, seed=seed)


def synthesize_measurements(scene: Scene, t_upto: float, noise: NoiseModel,
                            seed: int) -> dict:
    """Simulated detections: per-actor measurement histories up to t_upto,
    with additive Gaussian center noise (zero noise reproduces the tracks
    verbatim).  Returns actor_id -> list of Measurement."""
    rng = np.random.default_rng(seed)
    out: dict = {}
    for trk in scene.actors:
        ms = []
        for st in trk.states:
            if st.t > t_upto:
                break
            nx = rng.standard_normal() * noise.meas_sigma_x
            ny = rng.standard_normal() * noise.meas_sigma_y
            ms.append(Measurement(t=st.t, actor_id=trk.actor_id,
                                  center=(st.x + nx, st.y + ny),
                                  extent=(st.length, st.width)))
        out[trk.actor_id] = ms
    return out


def _obstacles_from_sample(sample: SampledTrajectorySet, extents: dict,
                           static: list) -> ObstacleSet:
    dynamic = []
    for actor_id in sorted(sample.trajectories):
        traj = sample.trajectories[actor_id]
        centers = traj[:, :2].copy()
        speeds = np.hypot(traj[:, 2], traj[:, 3])
        yaws = np.where(speeds > 1e-9, np.arctan2(traj[:, 3], traj[:, 2]), 0.0)
        length, width = extents[actor_id]
        dynamic.append(DynamicObstacle(actor_id, centers, yaws, length, width))
    return ObstacleSet(dynamic=dynamic, static=static)


def _spawn_seed(master: int, i: int) -> int:
    """Deterministic per-sample seed derived from the master seed."""
    return int(np.random.SeedSequence(entropy=(int(master), int(i))).generate_state(1)[0])


def mc_sti(scene: Scene, measurements: dict, t: float, k: int, n_samples: int,
           params: PlannerParams, seed: int, noise: NoiseModel,
           grid: Optional[GridConfig] = None) -> StiDistribution:
    """Monte-Carlo STI at step t from per-actor measurement histories.

    Estimates each actor (Kalman), predicts k steps, samples n_samples
    trajectory sets, and runs the counterfactual reachability pipeline on
    every sampled world.  The goal set and the empty-world pass depend
    only on the ego and the map, so they are computed once and shared by
    all samples.
    """
    if n_samples < 1:
        raise ValueError("n_samples must be >= 1")
    ctx = build_step_context(scene, t, k, params, grid or GridConfig())
    r_empty = _classify_mask(ctx, ActorMask.all_removed())

    # estimation + prediction in the ego frame of this step
    predictions: dict = {}
    extents: dict = {}
    for trk in ctx.scene.actors:
        history = measurements.get(trk.actor_id, [])
        history = [m for m in history if m.t <= t]
        if not history:
            continue
        # measurements arrive in world coordinates; re-express in ego frame
        ego_world = scene.ego_at(t)
        c, s = math.cos(-ego_world.yaw), math.sin(-ego_world.yaw)
        local = []
        for m in history:
            dx, dy = m.center[0] - ego_world.x, m.center[1] - ego_world.y
            local.append(Measurement(m.t, m.actor_id,
                                     (c * dx - s * dy, s * dx + c * dy), m.extent))
        fs = estimate(local, scene.dt, noise)
        predictions[trk.actor_id] = predict(fs, k, scene.dt, noise)
        extents[trk.actor_id] = local[-1].extent

    # zero measurement and process noise collapse the realtime path onto
    # the deterministic one: every draw would equal the predicted means,
    # so skip the RNG entirely and the spread is exactly zero
    deterministic = (noise.meas_sigma_x == 0.0 and noise.meas_sigma_y == 0.0
                     and noise.process_q == 0.0)

    actor_ids = sorted(predictions)
    scene_samples = np.empty(n_samples)
    actor_samples = {a: np.empty(n_samples) for a in actor_ids}
    degenerate = 0
    for i in range(n_samples):
        if deterministic:
            sample = SampledTrajectorySet(
                trajectories={a: predictions[a].means.copy() for a in actor_ids},
                seed=_spawn_seed(seed, i))
        else:
            sample = sample_set(predictions, scene.dt, noise, _spawn_seed(seed, i))
        obstacles = _obstacles_from_sample(sample, extents, ctx.static_obstacles)
        masks = [ActorMask.all_present()]
        masks += [ActorMask.remove_one(a) for a in actor_ids]
        dynamic_sets = [list(obstacles.dynamic)]
        dynamic_sets += [[o for o in obstacles.dynamic if o.actor_id != a]
                         for a in actor_ids]
        results = _classify_obstacle_sets(ctx, dynamic_sets, masks)
        present = results[0]
        value, deg = scene_sti(present, r_empty)
        scene_samples[i] = value
        degenerate += int(deg)
        for a, without in zip(actor_ids, results[1:]):
            actor_samples[a][i], _ = actor_sti(present, without, r_empty)

    return StiDistribution(
        scene_samples=scene_samples,
        actor_samples=actor_samples,
        scene_mean=float(scene_samples.mean()),
        scene_std=float(scene_samples.std()),
        actor_mean={a: float(v.mean()) for a, v in actor_samples.items()},
        actor_std={a: float(v.std()) for a, v in actor_samples.items()},
        n_samples=n_samples,
        single_sample=(n_samples == 1),
        degenerate_samples=degenerate,
    )


def _classify_obstacle_sets(ctx, dynamic_sets: list, masks: list) -> list:
    """Masked passes over explicit per-sample obstacle sets (sampled
    trajectories rather than the context's ground-truth tracks)."""
    ego = ctx.scene.ego_at(ctx.t)
    reach_all = np.zeros((len(masks), len(ctx.goals)), dtype=bool)
    for li, (indices, cells) in ctx.lane_goals.items():
        reach, _ = classify_goal_sets(ctx.lane_paths[li], ctx.ego_states[li],
                                      ego, cells, ctx.k, ctx.dt, ctx.params,
                                      dynamic_sets, ctx.static_obstacles)
        reach_all[:, np.asarray(indices, dtype=int)] = reach
    return [ReachabilityResult(goals=ctx.goals, reachable=reach_all[m],
                               mask=masks[m], t=ctx.t, k=ctx.k)
            for m in range(len(masks))]

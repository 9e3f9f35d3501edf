"""Cut-in scenario generator, kinematic closed-loop simulator, scripted
mitigation policies, reward computation, and mutation-sweep statistics.

Scenario script (see SimConfig for the numbers): the ego cruises at
constant speed in the right lane; one NPC spawns behind it in the left
lane, approaches faster, and once it has gained ``dist_before_cutin``
meters on the ego it cuts into the ego lane, sweeping one lane width
over ``dist_during_lanechange`` meters of travel at ``lanechange_speed``,
then continues as a (usually slower) lead vehicle.  Low values of all
three parameters give the ego little room and little time; high values
are benign.  A mitigation policy observes the per-step scene STI and may
override the scripted cruise with braking, acceleration, or lane
changes.

Scene STI per step is computed with the counterfactual reachability
engine; the NPC's future over the lookahead window is a constant-velocity
extrapolation of its current motion (the realtime-style prediction a
deployed monitor would have).
"""

from __future__ import annotations

import itertools
import json
import math
from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np
from scipy import stats

from .config import PlannerParams, RewardWeights, SimConfig
from .geometry import boxes_overlap
from .planner import DynamicObstacle, ObstacleSet
from .reachability import ActorMask, build_step_context, scene_sti
from .reachability import _classify_mask, _classify_masks
from .scene import (ActorState, ActorTrack, EgoState, Lane, LaneMap,
                    SAME_DIRECTION, Scene)

NO_OP = "No-Op"
EB = "EB"       # emergency braking
ACC = "ACC"     # accelerate
LCL = "LCL"     # lane change left
LCR = "LCR"     # lane change right
ACTIONS = (NO_OP, EB, ACC, LCL, LCR)


class PolicyError(ValueError):
    """A mitigation policy returned something outside the action space."""


@dataclass(frozen=True)
class CutInParams:
    """One mutation of the cut-in scenario."""

    dist_before_cutin: float       # m, in [10, 20)
    dist_during_lanechange: float  # m, in [6, 16)
    lanechange_speed: float        # m/s, in [9, 19)

    def validate(self) -> None:
        if not 10 <= self.dist_before_cutin < 20:
            raise ValueError("dist_before_cutin outside [10, 20)")
        if not 6 <= self.dist_during_lanechange < 16:
            raise ValueError("dist_during_lanechange outside [6, 16)")
        if not 9 <= self.lanechange_speed < 19:
            raise ValueError("lanechange_speed outside [9, 19)")


def generate_mutations() -> list:
    """The full Cartesian grid: 10 x 10 x 10 = 1000 mutations, each range
    stepped by 1 from its lower bound."""
    return [CutInParams(float(a), float(b), float(c))
            for a, b, c in itertools.product(range(10, 20), range(6, 16),
                                             range(9, 19))]


# ---------------------------------------------------------------------------
# mitigation policies


@dataclass
class PolicyObservation:
    """What a mitigation policy sees each step."""

    step: int
    sti: float
    ego_speed: float
    ego_accel: float
    rel_npc: list       # (dx, dy, dvx, dvy) per NPC, ego-centered


class MitigationPolicy:
    """decide(observation) -> action string from ACTIONS."""

    name = "base"

    def reset(self) -> None:
        pass

    def decide(self, obs: PolicyObservation) -> str:
        raise NotImplementedError


class NoOpPolicy(MitigationPolicy):
    name = "noop"

    def decide(self, obs: PolicyObservation) -> str:
        return NO_OP


class ThresholdBrakePolicy(MitigationPolicy):
    """Emergency-brake whenever the scene STI exceeds tau; a scripted
    stand-in for a learned mitigation controller."""

    name = "threshold-brake"

    def __init__(self, tau: float = 0.6):
        self.tau = tau

    def decide(self, obs: PolicyObservation) -> str:
        return EB if obs.sti > self.tau else NO_OP


class ConstantPolicy(MitigationPolicy):
    """Always the same action (test/baseline helper)."""

    def __init__(self, action: str):
        if action not in ACTIONS:
            raise PolicyError(f"unknown action {action!r}")
        self.action = action
        self.name = f"constant-{action.lower()}"

    def decide(self, obs: PolicyObservation) -> str:
        return self.action


def make_policy(name: str, tau: float = 0.6) -> MitigationPolicy:
    if name == "noop":
        return NoOpPolicy()
    if name == "threshold-brake":
        return ThresholdBrakePolicy(tau)
    raise PolicyError(f"unknown policy {name!r}")


# ---------------------------------------------------------------------------
# accident detection and rewards


def detect_accident(ego_state: EgoState, npc_states: list,
                    ego_length: float = 4.5, ego_width: float = 2.0) -> bool:
    """Physical contact: the ego's oriented box overlaps any NPC box at the
    same step (separating-axis test, zero clearance, touching counts)."""
    for st in npc_states:
        if boxes_overlap((ego_state.x, ego_state.y), ego_state.yaw,
                         ego_length, ego_width,
                         (st.x, st.y), st.yaw, st.length, st.width):
            return True
    return False


@dataclass
class RewardTerms:
    """Per-step reward terms; total is their exact weighted sum."""

    sti_term: float
    r_pc: float
    p_am: float
    r_comfort: float
    total: float


def reward_step(sti: float, step_dist: float, u_ego, u_goal,
                weights: RewardWeights, d_expected: float,
                jerk_long: float = 0.0, jerk_lat: float = 0.0,
                comfort_enabled: bool = False) -> RewardTerms:
    """One step of the mitigation reward.

    v_f = step_dist / d_expected gates both the low-threat term and the
    path-completion term so a stationary ego collects nothing; p_am is
    fixed at zero; the comfort term (negative jerk magnitudes) is off by
    default and only participates when enabled.
    """
    if d_expected <= 0:
        raise ValueError("d_expected must be > 0")
    v_f = step_dist / d_expected
    sti_term = (1.0 - sti) * v_f
    if u_ego is None:
        r_pc = 0.0
    else:
        r_pc = float(np.dot(u_ego, u_goal)) * v_f
    p_am = 0.0
    r_comfort = -(abs(jerk_lat) + abs(jerk_long)) if comfort_enabled else 0.0
    total = (weights.sti * sti_term + weights.path_completion * r_pc
             + weights.active_mitigation * p_am + weights.comfort * r_comfort)
    return RewardTerms(sti_term=sti_term, r_pc=r_pc, p_am=p_am,
                       r_comfort=r_comfort, total=total)


@dataclass
class RewardTrace:
    sti_term: list = field(default_factory=list)
    r_pc: list = field(default_factory=list)
    p_am: list = field(default_factory=list)
    r_comfort: list = field(default_factory=list)
    total: list = field(default_factory=list)

    def append(self, terms: RewardTerms) -> None:
        self.sti_term.append(terms.sti_term)
        self.r_pc.append(terms.r_pc)
        self.p_am.append(terms.p_am)
        self.r_comfort.append(terms.r_comfort)
        self.total.append(terms.total)


# ---------------------------------------------------------------------------
# closed-loop simulation


@dataclass
class SimResult:
    params: CutInParams
    trace: list                    # per-step dicts: ego + NPC states, action
    sti_series: list               # scene STI per executed step
    accident: bool
    accident_step: Optional[int]
    mitigation_windows: list       # (start, end) inclusive step ranges
    reward_trace: RewardTrace

    @property
    def mean_sti(self) -> float:
        return float(np.mean(self.sti_series)) if self.sti_series else 0.0


def _quintic_blend(u: float) -> float:
    u = min(max(u, 0.0), 1.0)
    return u * u * u * (10.0 - 15.0 * u + 6.0 * u * u)


class _EgoController:
    """Scripted ego: constant-speed lane keeping unless a mitigation action
    overrides.  Lane changes run a quintic lateral profile over
    cfg.lc_duration seconds; once started they run to completion."""

    def __init__(self, cfg: SimConfig, params: PlannerParams):
        self.cfg = cfg
        self.max_speed = params.max_speed
        self.max_accel = params.max_accel
        self.x = 0.0
        self.y = 0.0
        self.yaw = 0.0
        self.v = cfg.ego_speed
        self.a = 0.0
        self.lc_from = 0.0
        self.lc_target: Optional[float] = None
        self.lc_elapsed = 0.0

    def step(self, action: str) -> None:
        cfg = self.cfg
        dt = cfg.dt
        if action == EB:
            a_cmd = -self.max_accel
        elif action == ACC:
            a_cmd = self.max_accel
        else:
            a_cmd = 0.0   # constant-speed lane keeping
        if action in (LCL, LCR) and self.lc_target is None:
            self.lc_from = self.y
            self.lc_target = self.y + (cfg.lane_width if action == LCL
                                       else -cfg.lane_width)
            self.lc_elapsed = 0.0

        v_new = float(np.clip(self.v + a_cmd * dt, 0.0, self.max_speed))
        dx = 0.5 * (self.v + v_new) * dt
        self.a = (v_new - self.v) / dt
        self.v = v_new
        x_new = self.x + dx

        y_new = self.y
        if self.lc_target is not None:
            self.lc_elapsed += dt
            u = self.lc_elapsed / cfg.lc_duration
            y_new = self.lc_from + (self.lc_target - self.lc_from) * _quintic_blend(u)
            if u >= 1.0:
                self.lc_target = None
        self.yaw = math.atan2(y_new - self.y, x_new - self.x) if dx > 1e-9 else self.yaw
        self.x, self.y = x_new, y_new

    def state(self, t: int) -> EgoState:
        return EgoState(t=t, x=self.x, y=self.y, yaw=self.yaw,
                        v_long=self.v, v_lat=0.0, a_long=self.a, a_lat=0.0)


class _CutInNpc:
    """Scripted cut-in NPC: approach -> pre-drift -> lane change -> lead.

    The pre-drift phase edges the NPC a fraction of the lane width toward
    the ego lane while it closes the last ``PREDRIFT_GAIN`` meters of
    relative gain, the way a committed cut-in driver encroaches before
    swinging over; prediction-based monitors pick the maneuver up there.
    """

    APPROACH, CHANGE, LEAD = 0, 1, 2

    PREDRIFT_GAIN = 4.0      # relative-gain window of the drift, m
    PREDRIFT_FRACTION = 0.2  # lane-width fraction covered while drifting

    def __init__(self, params: CutInParams, cfg: SimConfig, ego_x0: float):
        self.p = params
        self.cfg = cfg
        self.x = ego_x0 - cfg.npc_spawn_back
        self.y = cfg.lane_width
        self.x0 = self.x
        self.phase = self.APPROACH
        self.gain = 0.0          # meters gained on the ego since spawn
        self.lc_start_x = 0.0
        self.lc_start_y = cfg.lane_width
        self.vx = cfg.npc_approach_speed
        self.vy = 0.0

    def speed(self) -> float:
        return self.cfg.npc_approach_speed if self.phase == self.APPROACH \
            else self.p.lanechange_speed

    def step(self, ego_dx: float) -> None:
        cfg = self.cfg
        dt = cfg.dt
        v = self.speed()
        x_new = self.x + v * dt
        self.gain += v * dt - ego_dx
        y_new = self.y
        if self.phase == self.APPROACH:
            drift = (self.gain - (self.p.dist_before_cutin - self.PREDRIFT_GAIN)) \
                / self.PREDRIFT_GAIN
            drift = min(max(drift, 0.0), 1.0)
            y_new = cfg.lane_width * (1.0 - self.PREDRIFT_FRACTION * drift)
            if self.gain >= self.p.dist_before_cutin:
                self.phase = self.CHANGE
                self.lc_start_x = x_new
                self.lc_start_y = y_new
        if self.phase == self.CHANGE:
            u = (x_new - self.lc_start_x) / self.p.dist_during_lanechange
            y_new = self.lc_start_y * (1.0 - _quintic_blend(u))
            if u >= 1.0:
                self.phase = self.LEAD
                y_new = 0.0
        self.vx = (x_new - self.x) / dt
        self.vy = (y_new - self.y) / dt
        self.x, self.y = x_new, y_new

    def state(self, t: int) -> ActorState:
        yaw = math.atan2(self.vy, self.vx) if abs(self.vx) + abs(self.vy) > 1e-9 else 0.0
        return ActorState(t=t, x=self.x, y=self.y, yaw=yaw,
                          length=self.cfg.npc_length, width=self.cfg.npc_width)

    def _clone(self) -> "_CutInNpc":
        c = _CutInNpc.__new__(_CutInNpc)
        c.__dict__.update(self.__dict__)
        return c

    def predicted_track(self, t: int, k: int, ego_speed: float) -> ActorTrack:
        """Ground-truth future: roll the script k steps ahead, holding the
        ego at its current speed for the relative-gain coupling.  This is
        the oracle-setting trajectory the per-step STI evaluation consumes
        (the simulator knows its own script)."""
        dt = self.cfg.dt
        ghost = self._clone()
        states = [self.state(t)]
        for j in range(1, k + 1):
            ghost.step(ego_speed * dt)
            states.append(ghost.state(t + j))
        return ActorTrack("npc", states)


def _sim_lane_map(cfg: SimConfig) -> LaneMap:
    from .scene import OPPOSING

    x0, x1 = -cfg.lane_back, cfg.lane_length
    half = 0.5 * cfg.lane_width
    adj = OPPOSING if cfg.adjacent_opposing else SAME_DIRECTION
    lanes = [Lane(np.array([[x0, 0.0], [x1, 0.0]]), cfg.lane_width, SAME_DIRECTION),
             Lane(np.array([[x0, cfg.lane_width], [x1, cfg.lane_width]]),
                  cfg.lane_width, adj)]
    boundaries = [np.array([[x0, -half], [x1, -half]]),
                  np.array([[x0, cfg.lane_width + half], [x1, cfg.lane_width + half]])]
    return LaneMap(lanes, boundaries)


def _scene_sti_step(lane_map: LaneMap, ego: EgoState, npc_track: Optional[ActorTrack],
                    cfg: SimConfig, params: PlannerParams) -> float:
    actors = [npc_track] if npc_track is not None else []
    scene = Scene(cfg.dt, actors, [ego], lane_map)
    ctx = build_step_context(scene, ego.t, cfg.k, params, cfg.grid)
    if not actors:
        r_empty = _classify_mask(ctx, ActorMask.all_removed())
        value, _ = scene_sti(r_empty, r_empty)
        return value
    r_present, r_empty = _classify_masks(
        ctx, [ActorMask.all_present(), ActorMask.all_removed()])
    value, _ = scene_sti(r_present, r_empty)
    return value


def simulate(params: CutInParams, policy: MitigationPolicy, cfg: SimConfig,
             planner: Optional[PlannerParams] = None,
             with_npc: bool = True) -> SimResult:
    """Roll out one mutation under a mitigation policy.

    Fully deterministic: the script has no randomness and the STI engine
    is deterministic, so identical inputs give identical SimResults.  The
    rollout stops at the first physical contact (accident) or after
    cfg.duration_steps.
    """
    params.validate()
    cfg.validate()
    planner = planner or PlannerParams()
    policy.reset()
    lane_map = _sim_lane_map(cfg)
    ego = _EgoController(cfg, planner)
    npc = _CutInNpc(params, cfg, ego.x) if with_npc else None

    u_goal = np.array([1.0, 0.0])
    trace = []
    sti_series = []
    reward_trace = RewardTrace()
    windows = []
    window_start = None
    accident = False
    accident_step = None

    for step in range(cfg.duration_steps):
        ego_state = ego.state(step)
        npc_track = (npc.predicted_track(step, cfg.k, ego.v)
                     if npc is not None else None)

        sti = _scene_sti_step(lane_map, ego_state, npc_track, cfg, planner)
        sti_series.append(sti)

        rel = []
        if npc is not None:
            rel.append((npc.x - ego.x, npc.y - ego.y,
                        npc.vx - ego.v, npc.vy - 0.0))
        obs = PolicyObservation(step=step, sti=sti, ego_speed=ego.v,
                                ego_accel=ego.a, rel_npc=rel)
        action = policy.decide(obs)
        if action not in ACTIONS:
            raise PolicyError(f"policy {policy.name!r} returned {action!r}")

        if action != NO_OP and window_start is None:
            window_start = step
        elif action == NO_OP and window_start is not None:
            windows.append((window_start, step - 1))
            window_start = None

        prev_x, prev_y = ego.x, ego.y
        prev_v, prev_a = ego.v, ego.a
        ego.step(action)
        if npc is not None:
            npc.step(ego.x - prev_x)

        step_dist = math.hypot(ego.x - prev_x, ego.y - prev_y)
        if step_dist > 1e-9:
            u_ego = np.array([ego.x - prev_x, ego.y - prev_y]) / step_dist
        else:
            u_ego = None
        terms = reward_step(sti, step_dist, u_ego, u_goal, RewardWeights(),
                            cfg.d_expected,
                            jerk_long=(ego.a - prev_a) / cfg.dt)
        reward_trace.append(terms)

        trace.append({
            "step": step, "action": action,
            "ego": [ego.x, ego.y, ego.yaw, ego.v],
            "npc": ([npc.x, npc.y, npc.vx, npc.vy] if npc is not None else None),
            "sti": sti,
        })

        if npc is not None:
            next_ego = ego.state(step + 1)
            next_npc = npc.state(step + 1)
            if detect_accident(next_ego, [next_npc],
                               cfg.ego_length, cfg.ego_width):
                accident = True
                accident_step = step + 1
                break

    if window_start is not None:
        windows.append((window_start, len(trace) - 1))
    return SimResult(params=params, trace=trace, sti_series=sti_series,
                     accident=accident, accident_step=accident_step,
                     mitigation_windows=windows, reward_trace=reward_trace)


# ---------------------------------------------------------------------------
# statistics and sweeps


def ks_statistic(sample_a, sample_b) -> tuple:
    """Two-sample Kolmogorov-Smirnov D and asymptotic p-value."""
    a = np.asarray(sample_a, dtype=float)
    b = np.asarray(sample_b, dtype=float)
    if a.size == 0 or b.size == 0:
        raise ValueError("ks_statistic needs nonempty samples")
    res = stats.ks_2samp(a, b, method="asymp")
    return float(res.statistic), float(res.pvalue)


@dataclass
class SweepSummary:
    policy: str
    n_runs: int
    accident_count: int
    accident_rate: float
    mean_sti_accident: float
    mean_sti_safe: float
    ks_d: Optional[float]
    ks_p: Optional[float]
    sti_bins: list                 # bin lower edges
    p_accident_within_k: list      # P(accident within next k | STI bin)
    bin_counts: list
    run_records: list = field(default_factory=list)

    def to_json_obj(self) -> dict:
        return {
            "policy": self.policy,
            "n_runs": self.n_runs,
            "accident_count": self.accident_count,
            "accident_rate": self.accident_rate,
            "mean_sti_accident": self.mean_sti_accident,
            "mean_sti_safe": self.mean_sti_safe,
            "ks_d": self.ks_d,
            "ks_p": self.ks_p,
            "sti_bins": self.sti_bins,
            "p_accident_within_k": self.p_accident_within_k,
            "bin_counts": self.bin_counts,
        }


def accident_probability_bins(results: list, k: int, n_bins: int = 10) -> tuple:
    """P(accident within the next k steps | scene STI bin) over all
    (run, step) pairs.  Returns (bin_edges, probabilities, counts); bins
    with no observations report probability 0 and count 0."""
    edges = np.linspace(0.0, 1.0, n_bins + 1)
    pos = np.zeros(n_bins, dtype=int)
    tot = np.zeros(n_bins, dtype=int)
    for res in results:
        acc_step = res.accident_step if res.accident else None
        for step, sti in enumerate(res.sti_series):
            b = min(int(sti * n_bins), n_bins - 1)
            tot[b] += 1
            if acc_step is not None and 0 < acc_step - step <= k:
                pos[b] += 1
    probs = [float(p / t) if t else 0.0 for p, t in zip(pos, tot)]
    return list(edges[:-1]), probs, [int(t) for t in tot]


def run_sweep(policy_factory: Callable[[], MitigationPolicy], cfg: SimConfig,
              planner: Optional[PlannerParams] = None,
              mutations: Optional[list] = None,
              progress: Optional[Callable[[int, int], None]] = None) -> SweepSummary:
    """Simulate every mutation under the given policy and aggregate the
    accident statistics.  Individual run failures are recorded (as
    error records) and the sweep continues."""
    planner = planner or PlannerParams()
    mutations = mutations if mutations is not None else generate_mutations()
    results = []
    records = []
    name = policy_factory().name
    for i, m in enumerate(mutations):
        if progress is not None:
            progress(i, len(mutations))
        try:
            res = simulate(m, policy_factory(), cfg, planner)
        except Exception as exc:  # noqa: BLE001 - sweep must survive bad runs
            records.append({"params": [m.dist_before_cutin, m.dist_during_lanechange,
                                       m.lanechange_speed], "error": str(exc)})
            continue
        results.append(res)
        records.append({
            "params": [m.dist_before_cutin, m.dist_during_lanechange,
                       m.lanechange_speed],
            "accident": res.accident,
            "accident_step": res.accident_step,
            "mean_sti": res.mean_sti,
            "n_steps": len(res.sti_series),
        })

    acc = [r for r in results if r.accident]
    safe = [r for r in results if not r.accident]
    sti_acc = [r.mean_sti for r in acc]
    sti_safe = [r.mean_sti for r in safe]
    if sti_acc and sti_safe:
        ks_d, ks_p = ks_statistic(sti_acc, sti_safe)
    else:
        ks_d, ks_p = None, None
    edges, probs, counts = accident_probability_bins(results, cfg.k)
    return SweepSummary(
        policy=name, n_runs=len(results), accident_count=len(acc),
        accident_rate=len(acc) / len(results) if results else 0.0,
        mean_sti_accident=float(np.mean(sti_acc)) if sti_acc else 0.0,
        mean_sti_safe=float(np.mean(sti_safe)) if sti_safe else 0.0,
        ks_d=ks_d, ks_p=ks_p, sti_bins=edges, p_accident_within_k=probs,
        bin_counts=counts, run_records=records)


def write_sweep_summary(summary: SweepSummary, fh) -> None:
    fh.write(json.dumps(summary.to_json_obj(), sort_keys=True, indent=2))
    fh.write("\n")


def write_run_records(summary: SweepSummary, fh) -> None:
    for rec in summary.run_records:
        fh.write(json.dumps(rec, sort_keys=True))
        fh.write("\n")

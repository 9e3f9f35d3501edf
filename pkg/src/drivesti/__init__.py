"""Counterfactual safety-threat analysis for multi-actor driving scenes.

The safety threat indicator (STI) of an actor measures how much that
actor reduces the ego vehicle's driving flexibility: the number of local
goals a Frenet-frame trajectory planner can still reach.  The package
provides the ground-truth (oracle) pipeline, a noisy-estimation
Monte-Carlo pipeline, a cut-in scenario mutation simulator with scripted
mitigation policies, and a BEV dataset exporter for downstream learned
approximators.
"""

from .config import (BevConfig, EngineConfig, GridConfig, NoiseModel,
                     PlannerParams, RewardWeights, SimConfig, load_config)
from .goals import (GoalCell, GoalSet, ReachBudget, candidate_goals,
                    discretize_drivable, max_reach_distance)
from .paths import FrenetSingularityError, PathError, ReferencePath, build_reference_path
from .planner import (CandidateTrajectory, DynamicObstacle, FrenetState,
                      ObstacleSet, build_obstacle_set, collision_free,
                      ego_frenet_state, feasible, frenet_roundtrip,
                      goal_reachable, sample_candidates)
from .reachability import (ActorMask, ReachabilityResult, StiReport,
                           actor_sti, reachable_set, scene_sti, sti_profile,
                           sti_step)
from .scene import (ActorState, ActorTrack, EgoState, Lane, LaneMap, Scene,
                    SceneError, load_scene, save_scene, state_at, to_ego_frame)

__version__ = "0.1.0"

__all__ = [
    "ActorMask", "ActorState", "ActorTrack", "BevConfig", "CandidateTrajectory",
    "DynamicObstacle", "EgoState", "EngineConfig", "FrenetSingularityError",
    "FrenetState", "GoalCell", "GoalSet", "GridConfig", "Lane", "LaneMap",
    "NoiseModel", "ObstacleSet", "PathError", "PlannerParams",
    "ReachBudget", "ReachabilityResult", "ReferencePath", "RewardWeights",
    "Scene", "SceneError", "SimConfig", "StiReport",
    "actor_sti", "build_obstacle_set", "build_reference_path",
    "candidate_goals", "collision_free", "discretize_drivable",
    "ego_frenet_state", "feasible", "frenet_roundtrip", "goal_reachable",
    "load_config", "load_scene", "max_reach_distance", "reachable_set",
    "sample_candidates", "save_scene", "scene_sti", "state_at", "sti_profile",
    "sti_step", "to_ego_frame",
]

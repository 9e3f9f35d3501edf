"""Configuration dataclasses and the JSON config-file loader.

A config file is a single JSON document with optional sections
``planner``, ``grid``, ``noise``, ``bev``, ``sim``, ``reward``; any
omitted key falls back to the defaults below (typical consumer-vehicle
limits and a 3 s / 120 m lookahead).
"""

from __future__ import annotations

import json
from dataclasses import asdict, dataclass, field, fields, replace


class ConfigError(ValueError):
    """Config file cannot be parsed or contains an unknown/invalid key."""


@dataclass(frozen=True)
class PlannerParams:
    """Trajectory-sampling limits and the deterministic sampling lattice."""

    max_speed: float = 27.7          # m/s (100 km/h)
    max_accel: float = 4.0           # m/s^2
    max_curvature: float = 0.2       # 1/m
    clearance_static: float = 0.1    # min distance to lane boundaries, m
    clearance_dynamic: float = 1.5   # min distance to other actors, m
    ego_radius: float = 0.0          # optional ego disc radius added to clearances
    n_lateral: int = 3               # lateral end offsets per goal cell
    n_speed: int = 5                 # longitudinal end speeds in [0, max_speed]
    end_time_fracs: tuple = (0.5, 0.75, 1.0)  # fractions of the k*dt horizon

    def validate(self) -> None:
        if min(self.max_speed, self.max_accel, self.max_curvature) <= 0:
            raise ConfigError("planner limits must be positive")
        if self.clearance_static < 0 or self.clearance_dynamic < 0 or self.ego_radius < 0:
            raise ConfigError("clearances must be >= 0")
        if self.n_lateral < 1 or self.n_speed < 1 or len(self.end_time_fracs) < 1:
            raise ConfigError("sampling counts must be >= 1")
        if any(f <= 0 or f > 1 for f in self.end_time_fracs):
            raise ConfigError("end_time_fracs must lie in (0, 1]")


@dataclass(frozen=True)
class GridConfig:
    """Goal-grid discretization and reach-distance budget."""

    cell_length: float = 4.5     # longitudinal cell pitch, m
    cell_width: float = 3.7      # lateral pitch cap (cells never exceed lane width)
    d_max: float = 120.0         # look-forward distance floor, m
    threshold_mode: str = "max"  # d_thres = max(d, d_max) | "min" for a hard cap

    def validate(self) -> None:
        if self.cell_length <= 0 or self.cell_width <= 0 or self.d_max < 0:
            raise ConfigError("grid dimensions must be positive")
        if self.threshold_mode not in ("max", "min"):
            raise ConfigError("threshold_mode must be 'max' or 'min'")


@dataclass(frozen=True)
class NoiseModel:
    """Measurement / process noise for the realtime estimation path."""

    meas_sigma_x: float = 0.3    # bounding-box center noise, m
    meas_sigma_y: float = 0.3
    process_q: float = 0.5       # CV process-noise spectral density, m^2/s^3
    prior_pos_var: float = 1.0   # initial position variance, m^2
    prior_vel_var: float = 25.0  # initial velocity variance, (m/s)^2

    def validate(self) -> None:
        if min(self.meas_sigma_x, self.meas_sigma_y, self.process_q) < 0:
            raise ConfigError("noise magnitudes must be >= 0")
        if self.prior_pos_var < 0 or self.prior_vel_var < 0:
            raise ConfigError("prior variances must be >= 0")


@dataclass(frozen=True)
class BevConfig:
    """Bird's-eye-view raster geometry for dataset export."""

    height: int = 128       # H, pixels (lateral axis)
    width: int = 512        # W, pixels (longitudinal axis)
    range_x: float = 17.5   # R_X, half view range along image rows, m
    range_y: float = 70.0   # R_Y, half view range along image cols, m
    grid_a: int = 11        # label-grid height in pixels
    grid_b: int = 20        # label-grid width in pixels

    def validate(self) -> None:
        if min(self.height, self.width, self.grid_a, self.grid_b) <= 0:
            raise ConfigError("bev dimensions must be positive")
        if self.range_x <= 0 or self.range_y <= 0:
            raise ConfigError("bev view ranges must be positive")
        if self.grid_a > self.height or 2 * self.grid_b > self.width:
            raise ConfigError("label grid must fit the image (a <= H, 2b <= W)")

    @property
    def label_rows(self) -> int:
        return self.height // self.grid_a

    @property
    def label_cols(self) -> int:
        return self.width // (2 * self.grid_b)

    @property
    def label_length(self) -> int:
        return self.label_rows * self.label_cols


@dataclass(frozen=True)
class RewardWeights:
    """Weights of the mitigation reward terms; must sum to 1."""

    sti: float = 0.5
    path_completion: float = 0.5
    active_mitigation: float = 0.0
    comfort: float = 0.0

    def validate(self) -> None:
        vals = (self.sti, self.path_completion, self.active_mitigation, self.comfort)
        if any(v < 0 for v in vals):
            raise ConfigError("reward weights must be >= 0")
        if abs(sum(vals) - 1.0) > 1e-9:
            raise ConfigError("reward weights must sum to 1")


@dataclass(frozen=True)
class SimConfig:
    """Cut-in scenario geometry and closed-loop simulation settings.

    The NPC approaches from behind in the adjacent lane at
    ``npc_approach_speed``, begins its lane change once it has gained
    ``dist_before_cutin`` meters on the ego relative to its spawn point
    ``npc_spawn_back`` behind, sweeps one lane width over
    ``dist_during_lanechange`` meters of travel at ``lanechange_speed``,
    then continues straight in the ego lane at that speed.
    """

    dt: float = 0.1
    duration_steps: int = 200
    k: int = 30                      # STI lookahead per sim step
    lane_width: float = 3.7
    lane_length: float = 400.0
    lane_back: float = 60.0          # lane extent behind the ego spawn, m
    adjacent_opposing: bool = True   # NPC lane opposes traffic (not drivable)
    ego_speed: float = 14.0          # scripted cruise speed, m/s
    ego_length: float = 4.5
    ego_width: float = 2.0
    npc_spawn_back: float = 10.0     # NPC spawns this far behind the ego, m
    npc_approach_speed: float = 25.0
    npc_length: float = 4.5
    npc_width: float = 2.0
    lc_duration: float = 2.0         # ego lane-change action duration, s
    d_expected: float = 1.4          # expected per-step path coverage, m
    grid: GridConfig = field(default_factory=lambda: GridConfig(d_max=75.0))

    def validate(self) -> None:
        if self.dt <= 0 or self.duration_steps < 1 or self.k < 1:
            raise ConfigError("sim timing values must be positive")
        if min(self.ego_speed, self.npc_approach_speed, self.lane_width) <= 0:
            raise ConfigError("sim speeds and lane width must be positive")
        if self.d_expected <= 0:
            raise ConfigError("d_expected must be > 0")
        self.grid.validate()


@dataclass(frozen=True)
class EngineConfig:
    """All config sections bundled; the CLI passes this around."""

    planner: PlannerParams = field(default_factory=PlannerParams)
    grid: GridConfig = field(default_factory=GridConfig)
    noise: NoiseModel = field(default_factory=NoiseModel)
    bev: BevConfig = field(default_factory=BevConfig)
    sim: SimConfig = field(default_factory=SimConfig)
    reward: RewardWeights = field(default_factory=RewardWeights)

    def validate(self) -> None:
        for section in (self.planner, self.grid, self.noise, self.bev, self.sim, self.reward):
            section.validate()


_SECTIONS = {
    "planner": PlannerParams,
    "grid": GridConfig,
    "noise": NoiseModel,
    "bev": BevConfig,
    "sim": SimConfig,
    "reward": RewardWeights,
}


def _build_section(cls, data: dict, where: str):
    known = {f.name: f for f in fields(cls)}
    kwargs = {}
    for key, value in data.items():
        if key not in known:
            raise ConfigError(f"{where}: unknown key {key!r}")
        if key == "end_time_fracs":
            value = tuple(value)
        if key == "grid" and isinstance(value, dict):
            value = _build_section(GridConfig, value, f"{where}.grid")
        kwargs[key] = value
    return cls(**kwargs)


def load_config(path: str | None) -> EngineConfig:
    """Load an EngineConfig from a JSON file (None -> all defaults)."""
    if path is None:
        cfg = EngineConfig()
        cfg.validate()
        return cfg
    try:
        with open(path, "r", encoding="utf-8") as fh:
            doc = json.load(fh)
    except FileNotFoundError:
        raise ConfigError(f"config file not found: {path}")
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{path}: parse error at line {exc.lineno}: {exc.msg}")
    if not isinstance(doc, dict):
        raise ConfigError(f"{path}: top level must be a JSON object")
    kwargs = {}
    for name, data in doc.items():
        if name not in _SECTIONS:
            raise ConfigError(f"{path}: unknown section {name!r}")
        if not isinstance(data, dict):
            raise ConfigError(f"{path}: section {name!r} must be an object")
        kwargs[name] = _build_section(_SECTIONS[name], data, name)
    cfg = EngineConfig(**kwargs)
    cfg.validate()
    return cfg


def config_to_dict(cfg: EngineConfig) -> dict:
    doc = asdict(cfg)
    doc["planner"]["end_time_fracs"] = list(doc["planner"]["end_time_fracs"])
    return doc

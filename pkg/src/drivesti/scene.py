"""Domain model for driving scenes: actors, lanes, ego track, file I/O.

A scene is the ground-truth world the analysis engine operates on.  All
geometry is metric; yaw angles live in [-pi, pi).  Scenes are treated as
immutable after construction so they can be shared freely across
concurrent analysis passes.

Scene file format (UTF-8 JSON, one document):

    {
      "dt": 0.1,
      "lanes": [{"centerline": [[x, y], ...], "width": 3.7,
                 "direction": "same-as-ego" | "opposing"}, ...],
      "boundaries": [[[x, y], ...], ...],
      "actors": [{"id": "...", "states": [{"t", "x", "y", "yaw",
                                           "length", "width"}, ...]}, ...],
      "ego": [{"t", "x", "y", "yaw", "v_long", "v_lat",
               "a_long", "a_lat"}, ...]
    }
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np

from .geometry import interp_angle, wrap_angle

DEFAULT_DT = 0.1
DEFAULT_MAX_SPEED = 27.7

SAME_DIRECTION = "same-as-ego"
OPPOSING = "opposing"


class SceneError(ValueError):
    """Scene file cannot be parsed or violates a structural invariant."""


@dataclass(frozen=True)
class ActorState:
    """Bounding-box state of one actor at one time index."""

    t: float
    x: float
    y: float
    yaw: float
    length: float
    width: float

    def validate(self, where: str = "actor state") -> None:
        if not all(math.isfinite(v) for v in (self.t, self.x, self.y, self.yaw)):
            raise SceneError(f"{where}: non-finite value")
        if self.length <= 0 or self.width <= 0:
            raise SceneError(f"{where}: length/width must be > 0")


@dataclass(frozen=True)
class EgoState:
    """Ego kinematic state; v/a components are in the ego body frame."""

    t: float
    x: float
    y: float
    yaw: float
    v_long: float
    v_lat: float
    a_long: float
    a_lat: float

    @property
    def speed(self) -> float:
        return math.hypot(self.v_long, self.v_lat)

    def validate(self, max_speed: float = DEFAULT_MAX_SPEED, where: str = "ego state") -> None:
        vals = (self.t, self.x, self.y, self.yaw, self.v_long, self.v_lat,
                self.a_long, self.a_lat)
        if not all(math.isfinite(v) for v in vals):
            raise SceneError(f"{where}: non-finite value")
        if self.speed > max_speed + 1e-9:
            raise SceneError(f"{where}: speed {self.speed:.3f} exceeds max_speed {max_speed}")


@dataclass
class ActorTrack:
    """Time-ordered state trace of one non-ego actor."""

    actor_id: str
    states: list[ActorState]

    def validate(self) -> None:
        if not self.states:
            raise SceneError(f"actor {self.actor_id!r}: empty track")
        ts = [s.t for s in self.states]
        if any(b <= a for a, b in zip(ts, ts[1:])):
            raise SceneError(f"actor {self.actor_id!r}: time indices not strictly increasing")
        for s in self.states:
            s.validate(where=f"actor {self.actor_id!r}")

    @property
    def t_first(self) -> float:
        return self.states[0].t

    @property
    def t_last(self) -> float:
        return self.states[-1].t


@dataclass
class Lane:
    """Single lane: centerline polyline, width, travel direction."""

    centerline: np.ndarray  # (N, 2)
    width: float
    direction: str = SAME_DIRECTION

    def __post_init__(self):
        self.centerline = np.asarray(self.centerline, dtype=float)

    def validate(self, where: str = "lane") -> None:
        if self.centerline.ndim != 2 or self.centerline.shape[0] < 2 or self.centerline.shape[1] != 2:
            raise SceneError(f"{where}: centerline needs >= 2 (x, y) points")
        if np.any(np.hypot(*np.diff(self.centerline, axis=0).T) <= 0):
            raise SceneError(f"{where}: consecutive centerline points must be distinct")
        if self.width <= 0:
            raise SceneError(f"{where}: width must be > 0")
        if self.direction not in (SAME_DIRECTION, OPPOSING):
            raise SceneError(f"{where}: direction must be {SAME_DIRECTION!r} or {OPPOSING!r}")

    def arc_length(self) -> float:
        return float(np.hypot(*np.diff(self.centerline, axis=0).T).sum())


@dataclass
class LaneMap:
    """Drivable lanes plus static boundary polylines (obstacles)."""

    lanes: list[Lane]
    boundaries: list[np.ndarray] = field(default_factory=list)

    def __post_init__(self):
        self.boundaries = [np.asarray(b, dtype=float) for b in self.boundaries]

    def validate(self) -> None:
        for i, lane in enumerate(self.lanes):
            lane.validate(where=f"lane[{i}]")
        if not any(l.direction == SAME_DIRECTION for l in self.lanes):
            raise SceneError("lane map needs at least one same-as-ego lane")
        for i, b in enumerate(self.boundaries):
            if b.ndim != 2 or b.shape[0] < 2 or b.shape[1] != 2:
                raise SceneError(f"boundary[{i}]: needs >= 2 (x, y) points")


@dataclass
class Scene:
    """Full scene: lane map, actor tracks, and the ego track."""

    dt: float
    actors: list[ActorTrack]
    ego: list[EgoState]
    lane_map: LaneMap

    def validate(self, max_speed: float = DEFAULT_MAX_SPEED) -> None:
        if self.dt <= 0:
            raise SceneError("dt must be > 0")
        if not self.ego:
            raise SceneError("ego track is empty")
        ids = [a.actor_id for a in self.actors]
        if len(ids) != len(set(ids)):
            dup = sorted({i for i in ids if ids.count(i) > 1})[0]
            raise SceneError(f"duplicate actor id {dup!r}")
        ts = [e.t for e in self.ego]
        if any(b <= a for a, b in zip(ts, ts[1:])):
            raise SceneError("ego time indices not strictly increasing")
        for e in self.ego:
            e.validate(max_speed=max_speed)
        for a in self.actors:
            a.validate()
        self.lane_map.validate()

    @property
    def n_actors(self) -> int:
        return len(self.actors)

    def actor(self, actor_id: str) -> ActorTrack:
        for a in self.actors:
            if a.actor_id == actor_id:
                return a
        raise KeyError(actor_id)

    def ego_at(self, t: float) -> EgoState:
        for e in self.ego:
            if e.t == t:
                return e
        raise SceneError(f"no ego state at t={t}")


# ---------------------------------------------------------------------------
# track interpolation


def state_at(track: ActorTrack, t: float) -> ActorState:
    """Actor state at (possibly fractional) time index t.

    Exact state when t is recorded; otherwise linear interpolation of
    position/extents and shortest-arc interpolation of yaw between the
    bracketing records.  Raises SceneError outside the recorded span.
    """
    if t < track.t_first or t > track.t_last:
        raise SceneError(
            f"actor {track.actor_id!r}: t={t} outside track span "
            f"[{track.t_first}, {track.t_last}]")
    states = track.states
    lo, hi = 0, len(states) - 1
    while lo < hi:
        mid = (lo + hi) // 2
        if states[mid].t < t:
            lo = mid + 1
        else:
            hi = mid
    if states[lo].t == t:
        return states[lo]
    a, b = states[lo - 1], states[lo]
    f = (t - a.t) / (b.t - a.t)
    return ActorState(
        t=t,
        x=a.x + f * (b.x - a.x),
        y=a.y + f * (b.y - a.y),
        yaw=interp_angle(a.yaw, b.yaw, f),
        length=a.length + f * (b.length - a.length),
        width=a.width + f * (b.width - a.width),
    )


def state_at_clamped(track: ActorTrack, t: float) -> ActorState:
    """Like state_at but holds the first/last state outside the span."""
    t = min(max(t, track.t_first), track.t_last)
    return state_at(track, t)


# ---------------------------------------------------------------------------
# ego-frame transform


def to_ego_frame(scene: Scene, t: float) -> Scene:
    """Rigidly transform the scene so the ego at time t sits at the origin
    with zero yaw.  Pairwise distances are preserved exactly (rotation +
    translation only)."""
    ego = scene.ego_at(t)
    c, s = math.cos(-ego.yaw), math.sin(-ego.yaw)

    def xf_point(x, y):
        dx, dy = x - ego.x, y - ego.y
        return c * dx - s * dy, s * dx + c * dy

    def xf_array(pts: np.ndarray) -> np.ndarray:
        rel = pts - np.array([ego.x, ego.y])
        rot = np.array([[c, -s], [s, c]])
        return rel @ rot.T

    actors = []
    for trk in scene.actors:
        states = []
        for st in trk.states:
            x, y = xf_point(st.x, st.y)
            states.append(ActorState(st.t, x, y, float(wrap_angle(st.yaw - ego.yaw)),
                                     st.length, st.width))
        actors.append(ActorTrack(trk.actor_id, states))

    ego_states = []
    for e in scene.ego:
        x, y = xf_point(e.x, e.y)
        ego_states.append(EgoState(e.t, x, y, float(wrap_angle(e.yaw - ego.yaw)),
                                   e.v_long, e.v_lat, e.a_long, e.a_lat))

    lanes = [Lane(xf_array(l.centerline), l.width, l.direction) for l in scene.lane_map.lanes]
    boundaries = [xf_array(b) for b in scene.lane_map.boundaries]
    return Scene(scene.dt, actors, ego_states, LaneMap(lanes, boundaries))


# ---------------------------------------------------------------------------
# file I/O


def scene_to_dict(scene: Scene) -> dict:
    return {
        "dt": scene.dt,
        "lanes": [
            {"centerline": [[float(x), float(y)] for x, y in l.centerline],
             "width": l.width, "direction": l.direction}
            for l in scene.lane_map.lanes
        ],
        "boundaries": [[[float(x), float(y)] for x, y in b]
                       for b in scene.lane_map.boundaries],
        "actors": [
            {"id": a.actor_id,
             "states": [{"t": s.t, "x": s.x, "y": s.y, "yaw": s.yaw,
                         "length": s.length, "width": s.width} for s in a.states]}
            for a in scene.actors
        ],
        "ego": [{"t": e.t, "x": e.x, "y": e.y, "yaw": e.yaw,
                 "v_long": e.v_long, "v_lat": e.v_lat,
                 "a_long": e.a_long, "a_lat": e.a_lat} for e in scene.ego],
    }


def scene_from_dict(doc: dict, max_speed: float = DEFAULT_MAX_SPEED) -> Scene:
    def need(obj, key, where):
        if not isinstance(obj, dict) or key not in obj:
            raise SceneError(f"{where}: missing field {key!r}")
        return obj[key]

    lanes = []
    for i, ld in enumerate(doc.get("lanes", [])):
        lanes.append(Lane(
            centerline=np.asarray(need(ld, "centerline", f"lanes[{i}]"), dtype=float),
            width=float(need(ld, "width", f"lanes[{i}]")),
            direction=str(ld.get("direction", SAME_DIRECTION)),
        ))
    boundaries = [np.asarray(b, dtype=float) for b in doc.get("boundaries", [])]

    actors = []
    for i, ad in enumerate(doc.get("actors", [])):
        states = [
            ActorState(float(need(sd, "t", f"actors[{i}].states[{j}]")),
                       float(need(sd, "x", f"actors[{i}].states[{j}]")),
                       float(need(sd, "y", f"actors[{i}].states[{j}]")),
                       float(need(sd, "yaw", f"actors[{i}].states[{j}]")),
                       float(need(sd, "length", f"actors[{i}].states[{j}]")),
                       float(need(sd, "width", f"actors[{i}].states[{j}]")))
            for j, sd in enumerate(need(ad, "states", f"actors[{i}]"))
        ]
        actors.append(ActorTrack(str(need(ad, "id", f"actors[{i}]")), states))

    ego = [
        EgoState(float(need(ed, "t", f"ego[{j}]")), float(need(ed, "x", f"ego[{j}]")),
                 float(need(ed, "y", f"ego[{j}]")), float(need(ed, "yaw", f"ego[{j}]")),
                 float(need(ed, "v_long", f"ego[{j}]")), float(need(ed, "v_lat", f"ego[{j}]")),
                 float(need(ed, "a_long", f"ego[{j}]")), float(need(ed, "a_lat", f"ego[{j}]")))
        for j, ed in enumerate(doc.get("ego", []))
    ]

    scene = Scene(dt=float(doc.get("dt", DEFAULT_DT)), actors=actors, ego=ego,
                  lane_map=LaneMap(lanes, boundaries))
    scene.validate(max_speed=max_speed)
    return scene


def load_scene(path: str, max_speed: float = DEFAULT_MAX_SPEED) -> Scene:
    """Load and validate a scene file; raises SceneError with context."""
    try:
        with open(path, "r", encoding="utf-8") as fh:
            doc = json.load(fh)
    except FileNotFoundError:
        raise SceneError(f"scene file not found: {path}")
    except json.JSONDecodeError as exc:
        raise SceneError(f"{path}: parse error at line {exc.lineno} col {exc.colno}: {exc.msg}")
    if not isinstance(doc, dict):
        raise SceneError(f"{path}: top level must be a JSON object")
    try:
        return scene_from_dict(doc, max_speed=max_speed)
    except SceneError as exc:
        raise SceneError(f"{path}: {exc}")


def save_scene(scene: Scene, path: str) -> None:
    """Write the canonical serialized form (sorted keys, minimal whitespace).

    load -> save -> load -> save produces byte-identical files, so the
    canonical form is a stable fixture/regression format.
    """
    text = json.dumps(scene_to_dict(scene), sort_keys=True, separators=(",", ":"))
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(text)
        fh.write("\n")

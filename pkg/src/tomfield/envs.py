"""Two-agent environments: Highway and Obstacle.

Both worlds are 2-D with unit-timestep kinematics: position += action, then
clamp to the world box. Agent 1 is the robot, agent 2 the human. Data comes
from scripted, label-conditioned policies (proportional lane control on the
highway, potential fields around the obstacle discs) with uniform noise, so
rollouts are behavior-diverse yet fully deterministic under a fixed seed.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import ConfigError, ContractError

HIGHWAY = "highway"
OBSTACLE = "obstacle"

HIGHWAY_LABELS = ("merge_left", "stay_straight", "merge_right")
OBSTACLE_LABELS = (0, 1, 2, 3)

ROBOT, HUMAN = 1, 2

# default rollout lengths; T is a rollout argument, not an EnvConfig field
DEFAULT_HORIZON = {HIGHWAY: 30, OBSTACLE: 40}

_GOAL_EPS = 1e-9   # attraction switches off this close to the goal
_SURFACE_EPS = 1e-6  # repulsion magnitude is capped at this surface distance
_STALL_FRACTION = 0.5  # net speed below this fraction of max counts as a stall


def _vec2(v) -> np.ndarray:
    arr = np.asarray(v, dtype=np.float64).reshape(-1)
    if arr.shape != (2,):
        raise ContractError(f"expected a 2-vector, got shape {arr.shape}")
    return arr


@dataclass
class JointState:
    """Positions of both agents; index 1 = robot, index 2 = human."""

    robot: np.ndarray
    human: np.ndarray

    def __post_init__(self):
        self.robot = _vec2(self.robot)
        self.human = _vec2(self.human)

    def agent(self, index: int) -> np.ndarray:
        if index == ROBOT:
            return self.robot
        if index == HUMAN:
            return self.human
        raise ContractError(f"agent index must be {ROBOT} or {HUMAN}, got {index}")

    def as_vector(self) -> np.ndarray:
        return np.concatenate([self.robot, self.human])

    @classmethod
    def from_vector(cls, v) -> "JointState":
        v = np.asarray(v, dtype=np.float64).reshape(-1)
        return cls(robot=v[:2], human=v[2:4])


@dataclass
class JointAction:
    """Per-agent velocities (units/timestep)."""

    robot: np.ndarray
    human: np.ndarray

    def __post_init__(self):
        self.robot = _vec2(self.robot)
        self.human = _vec2(self.human)

    def as_vector(self) -> np.ndarray:
        return np.concatenate([self.robot, self.human])

    @classmethod
    def from_vector(cls, v) -> "JointAction":
        v = np.asarray(v, dtype=np.float64).reshape(-1)
        return cls(robot=v[:2], human=v[2:4])


@dataclass(frozen=True)
class EnvConfig:
    """World geometry plus scripted-policy parameters for one environment.

    Highway uses lane_centers / forward_speed / lateral_gain /
    lateral_speed_max; Obstacle uses goals / discs / influence /
    repulsion_gain. Common: world box, dt (fixed 1.0), max_speed (per-action
    component bound), per-component noise amplitude, agent start positions.
    """

    kind: str
    x_min: float
    x_max: float
    y_min: float
    y_max: float
    max_speed: float
    noise: float
    robot_start: tuple[float, float]
    human_start: tuple[float, float]
    dt: float = 1.0
    # highway-only
    lane_centers: tuple[float, ...] = ()
    forward_speed: float = 0.0
    lateral_gain: float = 0.0
    lateral_speed_max: float = 0.0
    # obstacle-only
    goals: tuple[tuple[float, float], ...] = ()
    discs: tuple[tuple[float, float, float], ...] = ()
    influence: float = 0.0
    repulsion_gain: float = 0.0
    # "fixed": episodes begin at robot_start/human_start; "uniform": each
    # episode draws collision-free starts over the inset world box, so goal
    # corridors overlap and position alone cannot reveal the goal
    start_sampling: str = "fixed"

    def __post_init__(self):
        if self.kind not in (HIGHWAY, OBSTACLE):
            raise ConfigError(f"unknown environment kind {self.kind!r}")
        if self.x_min >= self.x_max or self.y_min >= self.y_max:
            raise ConfigError("world bounds are empty")
        if self.dt != 1.0:
            raise ConfigError("dt is fixed at 1 timestep")
        if self.max_speed <= 0:
            raise ConfigError("max_speed must be positive")
        if self.noise < 0:
            raise ConfigError("noise amplitude must be >= 0")
        if self.start_sampling not in ("fixed", "uniform"):
            raise ConfigError(
                f"start_sampling must be 'fixed' or 'uniform', got "
                f"{self.start_sampling!r}")
        if self.start_sampling == "uniform" and self.kind == HIGHWAY:
            raise ConfigError("highway episodes start at the configured lanes")
        if self.kind == HIGHWAY:
            if len(self.lane_centers) < 2:
                raise ConfigError("highway needs at least 2 lanes")
            if list(self.lane_centers) != sorted(self.lane_centers):
                raise ConfigError("lane_centers must be ascending")
            if self.forward_speed <= 0 or self.lateral_gain <= 0:
                raise ConfigError("forward_speed and lateral_gain must be positive")
            if self.forward_speed + self.noise > self.max_speed:
                raise ConfigError("forward_speed + noise exceeds max_speed")
            if self.lateral_speed_max + self.noise > self.max_speed:
                raise ConfigError("lateral_speed_max + noise exceeds max_speed")
        else:
            if len(self.goals) != 4:
                raise ConfigError(f"obstacle env needs exactly 4 goals, got {len(self.goals)}")
            if self.influence <= 0 or self.repulsion_gain <= 0:
                raise ConfigError("influence and repulsion_gain must be positive")
            for cx, cy, r in self.discs:
                if r <= 0:
                    raise ConfigError("disc radius must be positive")
                for gx, gy in self.goals:
                    if np.hypot(gx - cx, gy - cy) <= r:
                        raise ConfigError(
                            f"disc at ({cx}, {cy}) covers goal ({gx}, {gy})"
                        )

    @property
    def labels(self) -> tuple:
        return HIGHWAY_LABELS if self.kind == HIGHWAY else OBSTACLE_LABELS

    def start_state(self, rng=None) -> JointState:
        if self.start_sampling == "uniform":
            if rng is None:
                raise ContractError("uniform start sampling needs an rng")
            return JointState(robot=sample_start(rng, self),
                              human=sample_start(rng, self))
        return JointState(robot=self.robot_start, human=self.human_start)


def highway_config(lane_centers=(0.0, 1.0), forward_speed=1.0, lateral_gain=0.5,
                   lateral_speed_max=1.0, noise=0.05, max_speed=1.1,
                   robot_start=(0.0, 0.0), human_start=(0.0, 1.0),
                   x_min=-50.0, x_max=100.0, y_min=-2.0, y_max=3.0) -> EnvConfig:
    return EnvConfig(
        kind=HIGHWAY, x_min=x_min, x_max=x_max, y_min=y_min, y_max=y_max,
        max_speed=max_speed, noise=noise,
        robot_start=tuple(robot_start), human_start=tuple(human_start),
        lane_centers=tuple(lane_centers), forward_speed=forward_speed,
        lateral_gain=lateral_gain, lateral_speed_max=lateral_speed_max,
    )


def obstacle_config(goals=((0.1, 0.1), (0.9, 0.1), (0.9, 0.9), (0.1, 0.9)),
                    discs=((0.35, 0.5, 0.08), (0.65, 0.5, 0.08)),
                    influence=0.2, repulsion_gain=0.005, noise=0.005,
                    max_speed=0.05, robot_start=(0.5, 0.05),
                    human_start=(0.5, 0.95), start_sampling="uniform",
                    x_min=0.0, x_max=1.0, y_min=0.0, y_max=1.0) -> EnvConfig:
    return EnvConfig(
        kind=OBSTACLE, x_min=x_min, x_max=x_max, y_min=y_min, y_max=y_max,
        max_speed=max_speed, noise=noise,
        robot_start=tuple(robot_start), human_start=tuple(human_start),
        goals=tuple(tuple(g) for g in goals),
        discs=tuple(tuple(d) for d in discs),
        influence=influence, repulsion_gain=repulsion_gain,
        start_sampling=start_sampling,
    )


START_INSET = 0.05      # fraction of each world-box side kept clear of walls
START_CLEARANCE = 0.02  # minimum surface distance to any disc at episode start


def sample_start(rng, cfg: EnvConfig) -> np.ndarray:
    """Uniform start over the inset world box, rejecting positions within
    START_CLEARANCE of an obstacle surface (safe for the repulsion field)."""
    dx = (cfg.x_max - cfg.x_min) * START_INSET
    dy = (cfg.y_max - cfg.y_min) * START_INSET
    for _ in range(1000):
        pos = rng.uniform((cfg.x_min + dx, cfg.y_min + dy),
                          (cfg.x_max - dx, cfg.y_max - dy))
        if all(np.hypot(pos[0] - cx, pos[1] - cy) - r >= START_CLEARANCE
               for cx, cy, r in cfg.discs):
            return pos
    raise ContractError("could not sample a collision-free start")


def validate_label(label, cfg: EnvConfig):
    if label not in cfg.labels:
        raise ContractError(f"label {label!r} invalid for {cfg.kind}")
    return label


def step(state: JointState, action: JointAction, cfg: EnvConfig) -> JointState:
    """position += action * dt, then clamp to the world box."""
    for vec in (action.robot, action.human):
        if np.any(np.abs(vec) > cfg.max_speed + 1e-9):
            raise ContractError(
                f"action {vec} exceeds per-component max speed {cfg.max_speed}"
            )
    lo = np.array([cfg.x_min, cfg.y_min])
    hi = np.array([cfg.x_max, cfg.y_max])
    return JointState(
        robot=np.clip(state.robot + action.robot * cfg.dt, lo, hi),
        human=np.clip(state.human + action.human * cfg.dt, lo, hi),
    )


def collision(state: JointState, cfg: EnvConfig) -> tuple[bool, bool]:
    """Whether each agent sits strictly inside any obstacle disc."""
    if cfg.kind != OBSTACLE:
        raise ContractError("collision is defined for the obstacle environment only")
    flags = []
    for pos in (state.robot, state.human):
        hit = any(np.hypot(pos[0] - cx, pos[1] - cy) < r for cx, cy, r in cfg.discs)
        flags.append(hit)
    return flags[0], flags[1]


def lane_spacing(cfg: EnvConfig) -> float:
    return cfg.lane_centers[1] - cfg.lane_centers[0]


def label_target_y(start_y: float, label: str, cfg: EnvConfig) -> float:
    """Lateral target for a highway label, from the agent's starting lane.

    Facing +x, the left-hand side is +y: merge_left goes one lane spacing up,
    merge_right one down (onto the shoulder when starting in the bottom
    lane). The base lane is the center nearest the agent's configured start,
    not its instantaneous y, so the memoryless controller has a fixed target.
    """
    validate_label(label, cfg)
    centers = np.asarray(cfg.lane_centers)
    base = float(centers[np.argmin(np.abs(centers - start_y))])
    if label == "merge_left":
        return base + lane_spacing(cfg)
    if label == "merge_right":
        return base - lane_spacing(cfg)
    return base


def _noise_term(rng, amplitude: float) -> np.ndarray:
    if amplitude == 0.0:
        return np.zeros(2)
    if rng is None:
        raise ContractError("noise amplitude > 0 requires an rng")
    return rng.uniform(-amplitude, amplitude, size=2)


def scripted_highway_policy(state: JointState, label: str, agent: int,
                            rng, cfg: EnvConfig) -> np.ndarray:
    """Constant forward speed plus proportional lateral control to the
    label's target lane, with saturation and uniform noise."""
    if cfg.kind != HIGHWAY:
        raise ContractError("highway policy called with a non-highway config")
    pos = state.agent(agent)
    start = cfg.robot_start if agent == ROBOT else cfg.human_start
    target = label_target_y(start[1], label, cfg)
    lateral = np.clip(cfg.lateral_gain * (target - pos[1]),
                      -cfg.lateral_speed_max, cfg.lateral_speed_max)
    action = np.array([cfg.forward_speed, lateral]) + _noise_term(rng, cfg.noise)
    return np.clip(action, -cfg.max_speed, cfg.max_speed)


def _ccw_perpendicular(v: np.ndarray) -> np.ndarray:
    return np.array([-v[1], v[0]])


def scripted_obstacle_policy(state: JointState, label: int, agent: int,
                             rng, cfg: EnvConfig) -> np.ndarray:
    """Potential-field action: constant-magnitude attraction to the labeled
    goal plus inverse-surface-distance repulsion from each disc, with a
    counter-clockwise tie-break when the two are exactly opposed."""
    if cfg.kind != OBSTACLE:
        raise ContractError("obstacle policy called with a non-obstacle config")
    validate_label(label, cfg)
    pos = state.agent(agent)
    goal = np.asarray(cfg.goals[label], dtype=np.float64)

    to_goal = goal - pos
    dist = float(np.hypot(*to_goal))
    if dist < _GOAL_EPS:
        attraction = np.zeros(2)
    elif dist <= cfg.max_speed:
        # arrival snap: land exactly on the goal instead of orbiting it at
        # full speed forever
        attraction = to_goal
    else:
        attraction = to_goal / dist * cfg.max_speed

    repulsion = np.zeros(2)
    for cx, cy, r in cfg.discs:
        delta = pos - np.array([cx, cy])
        center_dist = float(np.hypot(*delta))
        surface = center_dist - r
        if surface < cfg.influence:
            outward = delta / max(center_dist, _SURFACE_EPS)
            magnitude = cfg.repulsion_gain * (
                1.0 / max(surface, _SURFACE_EPS) - 1.0 / cfg.influence
            )
            repulsion += magnitude * outward

    total = attraction + repulsion
    att_n, rep_n = np.linalg.norm(attraction), np.linalg.norm(repulsion)
    if att_n > 0 and rep_n > 0 and np.linalg.norm(total) < _STALL_FRACTION * cfg.max_speed:
        # repulsion nearly cancels attraction (goal shadowed by a disc, or a
        # two-disc pincer); a dead-stop or crawl would strand the agent, so
        # veer counter-clockwise around the obstruction
        total = total + _ccw_perpendicular(attraction / att_n) * cfg.max_speed

    total = total + _noise_term(rng, cfg.noise)
    speed = float(np.linalg.norm(total))
    if speed > cfg.max_speed:
        total = total * (cfg.max_speed / speed)
    return total


def scripted_policy(state: JointState, label, agent: int, rng,
                    cfg: EnvConfig) -> np.ndarray:
    if cfg.kind == HIGHWAY:
        return scripted_highway_policy(state, label, agent, rng, cfg)
    return scripted_obstacle_policy(state, label, agent, rng, cfg)

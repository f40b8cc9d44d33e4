"""Trajectory datasets: generation, windowing, and JSONL persistence.

One trajectory = T timesteps of joint state (robot x, y, human x, y) and
joint action (robot then human velocity), plus the ground-truth behavior
labels both scripted policies were conditioned on. Files are line-delimited
JSON: a header object carrying the format version and the environment
config, then one object per trajectory. Keys are sorted and floats use
shortest round-trip notation, so identical data gives identical bytes.
"""

from __future__ import annotations

import dataclasses
import hashlib
import json
import logging
from dataclasses import dataclass

import numpy as np

from . import envs
from .envs import EnvConfig, JointAction, JointState
from .errors import ContractError, FormatVersionError, ParseError

log = logging.getLogger(__name__)

FORMAT_NAME = "tomfield-dataset"
FORMAT_VERSION = 1

STATE_WIDTH = 4    # [robot x, robot y, human x, human y]
ACTION_WIDTH = 4   # [robot ax, ay, human ax, ay]
ROW_WIDTH = STATE_WIDTH + ACTION_WIDTH  # one flattened timestep


@dataclass(eq=False)
class Trajectory:
    env_kind: str
    states: np.ndarray   # (T, 4)
    actions: np.ndarray  # (T, 4)
    robot_label: object
    human_label: object
    seed: int

    def __post_init__(self):
        self.states = np.asarray(self.states, dtype=np.float64)
        self.actions = np.asarray(self.actions, dtype=np.float64)
        if self.states.ndim != 2 or self.states.shape[1] != STATE_WIDTH:
            raise ContractError(f"states must be (T, {STATE_WIDTH}), got {self.states.shape}")
        if self.actions.shape != self.states.shape:
            raise ContractError(
                f"actions shape {self.actions.shape} != states shape {self.states.shape}"
            )

    @property
    def T(self) -> int:
        return self.states.shape[0]

    def __eq__(self, other) -> bool:
        return (isinstance(other, Trajectory)
                and self.env_kind == other.env_kind
                and self.robot_label == other.robot_label
                and self.human_label == other.human_label
                and self.seed == other.seed
                and np.array_equal(self.states, other.states)
                and np.array_equal(self.actions, other.actions))


@dataclass(eq=False)
class Dataset:
    env: EnvConfig
    trajectories: list[Trajectory]
    version: int = FORMAT_VERSION

    def __post_init__(self):
        if not self.trajectories:
            raise ContractError("a dataset needs at least one trajectory")
        kinds = {t.env_kind for t in self.trajectories}
        if kinds != {self.env.kind}:
            raise ContractError(f"trajectory env kinds {kinds} != config kind {self.env.kind}")

    def __len__(self) -> int:
        return len(self.trajectories)

    def __eq__(self, other) -> bool:
        return (isinstance(other, Dataset)
                and self.version == other.version
                and self.env == other.env
                and self.trajectories == other.trajectories)


@dataclass
class WindowedSample:
    """Fixed-length history ending at timestep tau, plus prediction targets.

    history flattens H consecutive timesteps, each as
    [robot pos, human pos, robot action, human action]; target is the
    robot's next n actions flattened to a 2n-vector.
    """

    history: np.ndarray  # (8H,)
    anchor: np.ndarray   # (4,) joint state at tau
    target: np.ndarray   # (2n,)
    traj_id: int
    tau: int


def rollout(cfg: EnvConfig, robot_label, human_label, T: int, seed: int) -> Trajectory:
    """One scripted episode; robot acts first within each timestep's rng use."""
    envs.validate_label(robot_label, cfg)
    envs.validate_label(human_label, cfg)
    if T < 1:
        raise ContractError(f"T must be >= 1, got {T}")
    rng = np.random.default_rng(seed)
    state = cfg.start_state(rng)  # draws starts first under uniform sampling
    states = np.empty((T, STATE_WIDTH))
    actions = np.empty((T, ACTION_WIDTH))
    for t in range(T):
        robot_a = envs.scripted_policy(state, robot_label, envs.ROBOT, rng, cfg)
        human_a = envs.scripted_policy(state, human_label, envs.HUMAN, rng, cfg)
        states[t] = state.as_vector()
        actions[t] = np.concatenate([robot_a, human_a])
        state = envs.step(state, JointAction(robot=robot_a, human=human_a), cfg)
    return Trajectory(env_kind=cfg.kind, states=states, actions=actions,
                      robot_label=robot_label, human_label=human_label, seed=seed)


def _label_sampler(cfg: EnvConfig, label_dist):
    labels = list(cfg.labels)
    if label_dist is None:
        probs = np.full(len(labels), 1.0 / len(labels))
    else:
        unknown = set(label_dist) - set(labels)
        if unknown:
            raise ContractError(f"labels {unknown} invalid for {cfg.kind}")
        probs = np.array([label_dist.get(lb, 0.0) for lb in labels], dtype=np.float64)
        if np.any(probs < 0) or not np.isclose(probs.sum(), 1.0):
            raise ContractError("label distribution must be nonnegative and sum to 1")
    return labels, probs


def generate_dataset(cfg: EnvConfig, N: int, label_dist=None, seed: int = 0,
                     T: int | None = None) -> Dataset:
    """N rollouts with labels drawn independently per agent per episode.

    Per trajectory the master generator is consumed in a fixed order:
    robot label, human label, child rollout seed.
    """
    if N < 1:
        raise ContractError(f"N must be >= 1, got {N}")
    if T is None:
        T = envs.DEFAULT_HORIZON[cfg.kind]
    labels, probs = _label_sampler(cfg, label_dist)
    rng = np.random.default_rng(seed)
    out = []
    for _ in range(N):
        robot_label = labels[int(rng.choice(len(labels), p=probs))]
        human_label = labels[int(rng.choice(len(labels), p=probs))]
        child_seed = int(rng.integers(0, 2 ** 63))
        out.append(rollout(cfg, robot_label, human_label, T, child_seed))
    return Dataset(env=cfg, trajectories=out)


def window_samples(traj: Trajectory, H: int, n: int, stride: int = 1) -> list[WindowedSample]:
    """Sliding windows at tau = H-1, H-1+stride, ... while tau + n <= T-1."""
    if H < 1 or n < 1 or stride < 1:
        raise ContractError(f"need H, n, stride >= 1, got ({H}, {n}, {stride})")
    if H + n > traj.T:
        log.warning("window H+n = %d exceeds T = %d; no windows", H + n, traj.T)
        return []
    rows = np.hstack([traj.states, traj.actions])  # (T, 8)
    samples = []
    for tau in range(H - 1, traj.T - n, stride):
        samples.append(WindowedSample(
            history=rows[tau - H + 1:tau + 1].reshape(-1).copy(),
            anchor=traj.states[tau].copy(),
            target=traj.actions[tau + 1:tau + n + 1, :2].reshape(-1).copy(),
            traj_id=-1, tau=tau,
        ))
    return samples


def window_matrix(trajectories: list[Trajectory], H: int, n: int):
    """Stacked window arrays for batched training over many trajectories.

    Returns (X, anchors, targets, traj_ids, taus) with X of shape
    (num_windows, 8H); traj_ids index into the `trajectories` list.
    """
    X, anchors, targets, ids, taus = [], [], [], [], []
    for i, traj in enumerate(trajectories):
        for s in window_samples(traj, H, n):
            X.append(s.history)
            anchors.append(s.anchor)
            targets.append(s.target)
            ids.append(i)
            taus.append(s.tau)
    if not X:
        raise ContractError("no windows: H + n too large for T")
    return (np.array(X), np.array(anchors), np.array(targets),
            np.array(ids, dtype=np.int64), np.array(taus, dtype=np.int64))


def verify_replay(traj: Trajectory, cfg: EnvConfig) -> bool:
    """Whether recorded states replay exactly under step() from recorded actions."""
    state = JointState.from_vector(traj.states[0])
    for t in range(traj.T - 1):
        state = envs.step(state, JointAction.from_vector(traj.actions[t]), cfg)
        if not np.array_equal(state.as_vector(), traj.states[t + 1]):
            return False
    return True


# ---------------------------------------------------------------------------
# persistence


def env_to_dict(cfg: EnvConfig) -> dict:
    return dataclasses.asdict(cfg)


def env_from_dict(d: dict) -> EnvConfig:
    fields = {f.name for f in dataclasses.fields(EnvConfig)}
    unknown = set(d) - fields
    if unknown:
        raise ParseError(f"unknown env config keys {sorted(unknown)}")
    kw = dict(d)
    for key in ("lane_centers", "robot_start", "human_start"):
        if kw.get(key) is not None:
            kw[key] = tuple(kw[key])
    for key in ("goals", "discs"):
        if kw.get(key) is not None:
            kw[key] = tuple(tuple(item) for item in kw[key])
    try:
        return EnvConfig(**kw)
    except TypeError as exc:
        raise ParseError(f"incomplete env config: {exc}") from exc


def _dump(obj) -> str:
    return json.dumps(obj, sort_keys=True, separators=(",", ":"))


def save(dataset: Dataset, path) -> None:
    lines = [_dump({"format": FORMAT_NAME, "version": dataset.version,
                    "env": env_to_dict(dataset.env)})]
    for traj in dataset.trajectories:
        lines.append(_dump({
            "seed": traj.seed,
            "robot_label": traj.robot_label,
            "human_label": traj.human_label,
            "states": traj.states.tolist(),
            "actions": traj.actions.tolist(),
        }))
    with open(path, "w", encoding="utf-8") as fh:
        fh.write("\n".join(lines) + "\n")


def _parse_line(text: str, lineno: int) -> dict:
    try:
        obj = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ParseError(f"line {lineno}: invalid JSON ({exc.msg})") from exc
    if not isinstance(obj, dict):
        raise ParseError(f"line {lineno}: expected an object")
    return obj


def load(path) -> Dataset:
    with open(path, "r", encoding="utf-8") as fh:
        raw = fh.read().splitlines()
    raw = [line for line in raw if line.strip()]
    if not raw:
        raise ParseError("line 1: empty file")
    header = _parse_line(raw[0], 1)
    if header.get("format") != FORMAT_NAME:
        raise ParseError(f"line 1: not a {FORMAT_NAME} file")
    if header.get("version") != FORMAT_VERSION:
        raise FormatVersionError(
            f"unsupported dataset version {header.get('version')!r}; "
            f"this build reads version {FORMAT_VERSION}"
        )
    if "env" not in header:
        raise ParseError("line 1: missing env config")
    env = env_from_dict(header["env"])

    trajectories = []
    for lineno, line in enumerate(raw[1:], start=2):
        obj = _parse_line(line, lineno)
        missing = {"seed", "robot_label", "human_label", "states", "actions"} - set(obj)
        if missing:
            raise ParseError(f"line {lineno}: missing fields {sorted(missing)}")
        label_domain = envs.HIGHWAY_LABELS if env.kind == envs.HIGHWAY else envs.OBSTACLE_LABELS
        if obj["robot_label"] not in label_domain or obj["human_label"] not in label_domain:
            raise ParseError(f"line {lineno}: labels invalid for {env.kind}")
        try:
            traj = Trajectory(env_kind=env.kind,
                              states=np.array(obj["states"], dtype=np.float64),
                              actions=np.array(obj["actions"], dtype=np.float64),
                              robot_label=obj["robot_label"],
                              human_label=obj["human_label"],
                              seed=int(obj["seed"]))
        except (ContractError, ValueError) as exc:
            raise ParseError(f"line {lineno}: {exc}") from exc
        trajectories.append(traj)
    if not trajectories:
        raise ParseError("line 2: no trajectory records")
    return Dataset(env=env, trajectories=trajectories)


def file_sha256(path) -> str:
    digest = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 20), b""):
            digest.update(chunk)
    return digest.hexdigest()

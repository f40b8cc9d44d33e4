"""Vector fields, alignment metrics, clustering diagnostics, and the
model-vs-baseline comparison against a coarse synthetic reference.

The reference predictor ("oracle") stands in for human participants: it
classifies a short trajectory segment into a high-level behavior with a
transparent rule, then emits n constant coarse actions toward that
behavior's target. Comparing each model's decoded predictions against the
oracle with the cosine-distance alignment error, aggregated per trial and
fed to a paired two-tailed t-test, mirrors a study protocol without human
data; it is a proxy, not a reproduction.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from . import envs, models
from .dataset import ROW_WIDTH, Dataset, Trajectory, window_matrix
from .envs import EnvConfig
from .errors import (ContractError, DegenerateTestError, DimensionError,
                     UndefinedDirectionError)

ZERO_NORM = 1e-12  # below this a vector has no usable direction

# probe start states jitter around the initial joint state by this much per axis
START_JITTER = {envs.HIGHWAY: 0.5, envs.OBSTACLE: 0.1}

SEGMENT_STEPS = (5, 7)  # inclusive range of held-out segment lengths


# ---------------------------------------------------------------------------
# vector fields


@dataclass(frozen=True)
class GridSpec:
    x_min: float
    x_max: float
    y_min: float
    y_max: float
    nx: int
    ny: int

    def __post_init__(self):
        if self.nx < 1 or self.ny < 1:
            raise ContractError("grid resolution must be >= 1 per axis")
        if self.x_min >= self.x_max or self.y_min >= self.y_max:
            raise ContractError("grid ranges are empty")

    @property
    def xs(self) -> np.ndarray:
        return np.linspace(self.x_min, self.x_max, self.nx)

    @property
    def ys(self) -> np.ndarray:
        return np.linspace(self.y_min, self.y_max, self.ny)

    @property
    def cells(self) -> int:
        return self.nx * self.ny


@dataclass
class VectorField:
    """First decoded action at every grid cell for one fixed latent code
    and one fixed human position."""

    grid: GridSpec
    code_index: int
    code_q: np.ndarray
    human_state: np.ndarray
    actions: np.ndarray  # (ny, nx, 2), row i = ys[i], column j = xs[j]


def default_grid(env: EnvConfig, nx: int = 20, ny: int | None = None) -> GridSpec:
    if env.kind == envs.HIGHWAY:
        return GridSpec(0.0, 30.0, -1.5, 2.5, nx, 9 if ny is None else ny)
    return GridSpec(env.x_min, env.x_max, env.y_min, env.y_max,
                    nx, nx if ny is None else ny)


def extract_vector_field(model: models.FsqModel, code, grid: GridSpec,
                         human_state) -> VectorField:
    """Decode every grid cell as the robot state, holding code and human fixed."""
    q = np.asarray(code.q, dtype=np.float64).reshape(-1)
    if q.shape[0] != model.quantizer.d:
        raise DimensionError(
            f"code width {q.shape[0]} does not match quantizer d={model.quantizer.d}")
    human = np.asarray(human_state, dtype=np.float64).reshape(-1)
    if human.shape[0] != 2:
        raise DimensionError(f"human state must be a 2-vector, got {human.shape}")
    xx, yy = np.meshgrid(grid.xs, grid.ys)
    cells = grid.cells
    latent = np.tile(q, (cells, 1))
    anchors = np.column_stack([xx.ravel(), yy.ravel(),
                               np.tile(human, (cells, 1))])
    out = models.decoder_forward(None, model.params, latent, anchors,
                                 len(model.hidden))
    return VectorField(grid=grid, code_index=code.index, code_q=q.copy(),
                       human_state=human.copy(),
                       actions=out[:, :2].reshape(grid.ny, grid.nx, 2))


def field_lateral_sign_fraction(vf: VectorField, band_center_y: float,
                                band_half_width: float, toward: float) -> float:
    """Fraction of band cells whose lateral action points in direction
    sign(toward); band = rows with |y - band_center_y| <= band_half_width."""
    if abs(toward) < ZERO_NORM:
        raise ContractError("toward must be a signed direction")
    rows = np.abs(vf.grid.ys - band_center_y) <= band_half_width
    if not np.any(rows):
        raise ContractError("no grid rows inside the band")
    lateral = vf.actions[rows, :, 1].ravel()
    return float(np.mean(lateral * np.sign(toward) > 0))


def field_goal_alignment(vf: VectorField, goal, env: EnvConfig) -> float:
    """Mean cosine between cell actions and cell-to-goal directions over
    cells outside every obstacle disc (cells at the goal are skipped)."""
    goal = np.asarray(goal, dtype=np.float64).reshape(-1)
    xx, yy = np.meshgrid(vf.grid.xs, vf.grid.ys)
    pos = np.column_stack([xx.ravel(), yy.ravel()])
    act = vf.actions.reshape(-1, 2)
    free = np.ones(pos.shape[0], dtype=bool)
    for cx, cy, r in env.discs:
        free &= np.hypot(pos[:, 0] - cx, pos[:, 1] - cy) >= r
    to_goal = goal - pos
    gn = np.linalg.norm(to_goal, axis=1)
    an = np.linalg.norm(act, axis=1)
    ok = free & (gn > ZERO_NORM) & (an > ZERO_NORM)
    if not np.any(ok):
        raise ContractError("no usable cells for goal alignment")
    cos = np.sum(to_goal[ok] * act[ok], axis=1) / (gn[ok] * an[ok])
    return float(np.mean(cos))


# ---------------------------------------------------------------------------
# alignment metrics


def alignment_error(pred, reference) -> float:
    """Cosine distance 1 - cos(pred, reference); 0 parallel, 2 opposite."""
    p = np.asarray(pred, dtype=np.float64).reshape(-1)
    r = np.asarray(reference, dtype=np.float64).reshape(-1)
    if p.shape != r.shape:
        raise DimensionError(f"vector widths differ: {p.shape} vs {r.shape}")
    pn, rn = np.linalg.norm(p), np.linalg.norm(r)
    if pn < ZERO_NORM or rn < ZERO_NORM:
        raise UndefinedDirectionError(
            f"direction undefined for norms ({pn:.3e}, {rn:.3e})")
    return float(1.0 - (p @ r) / (pn * rn))


def sequence_alignment_error(pred, reference) -> float:
    """Mean per-timestep alignment error over pairs where both vectors have
    a direction; raises when every pair is undefined."""
    p = np.asarray(pred, dtype=np.float64).reshape(-1, 2)
    r = np.asarray(reference, dtype=np.float64).reshape(-1, 2)
    if p.shape != r.shape:
        raise DimensionError(f"sequence shapes differ: {p.shape} vs {r.shape}")
    values = []
    for k in range(p.shape[0]):
        if np.linalg.norm(p[k]) < ZERO_NORM or np.linalg.norm(r[k]) < ZERO_NORM:
            continue
        values.append(alignment_error(p[k], r[k]))
    if not values:
        raise UndefinedDirectionError("every timestep pair lacks a direction")
    return float(np.mean(values))


# ---------------------------------------------------------------------------
# clustering diagnostics


def latent_histogram(model: models.FsqModel, dataset, H: int, n: int) -> dict:
    """Code index -> window count over all sliding windows; counts sum to
    the total window count and every codebook index is present."""
    trajs = dataset.trajectories if isinstance(dataset, Dataset) else list(dataset)
    X, _, _, _, _ = window_matrix(trajs, H, n)
    counts = np.bincount(models.encode_batch(model, X),
                         minlength=model.quantizer.codebook_size)
    return {i: int(c) for i, c in enumerate(counts)}


def trajectory_codes(model: models.FsqModel, trajs) -> np.ndarray:
    """Final-window code index per trajectory."""
    rows = []
    for traj in trajs:
        tau = traj.T - 1 - model.n
        if tau < model.H - 1:
            raise ContractError(f"trajectory too short to window: T={traj.T}")
        stacked = np.hstack([traj.states, traj.actions])
        rows.append(stacked[tau - model.H + 1:tau + 1].reshape(-1))
    return models.encode_batch(model, np.array(rows))


def cluster_purity(model: models.FsqModel, dataset) -> float:
    """Assign each trajectory its final-window code; purity is the summed
    majority-label count per code over the trajectory count."""
    trajs = dataset.trajectories if isinstance(dataset, Dataset) else list(dataset)
    codes = trajectory_codes(model, trajs)
    labels = [t.robot_label for t in trajs]
    total = 0
    for code in np.unique(codes):
        members = [labels[i] for i in range(len(labels)) if codes[i] == code]
        counts = {}
        for lb in members:
            counts[lb] = counts.get(lb, 0) + 1
        total += max(counts.values())
    return total / len(trajs)


def dominant_code_by_label(model: models.FsqModel, dataset: Dataset, H: int,
                           n: int, moving_only: bool = True) -> dict:
    """Most-used code index among windows of trajectories with each robot
    label.

    With moving_only, windows whose robot displaces less than half the
    full-speed window travel do not vote: once an agent has arrived it
    idles, and idle windows cluster into codes keyed by where the agent
    sits rather than by which behavior brought it there.
    """
    trajs = dataset.trajectories
    X, _, _, ids, _ = window_matrix(trajs, H, n)
    indices = models.encode_batch(model, X)
    moving = np.ones(len(X), dtype=bool)
    if moving_only:
        start = X[:, 0:2]
        end = X[:, (H - 1) * ROW_WIDTH:(H - 1) * ROW_WIDTH + 2]
        disp = np.linalg.norm(end - start, axis=1)
        moving = disp > 0.5 * (H - 1) * dataset.env.max_speed
    out = {}
    for label in sorted({t.robot_label for t in trajs}, key=str):
        member = np.array([trajs[i].robot_label == label for i in ids])
        voting = member & moving
        if not np.any(voting):
            voting = member
        counts = np.bincount(indices[voting],
                             minlength=model.quantizer.codebook_size)
        out[label] = int(np.argmax(counts))
    return out


def human_mean_state(dataset: Dataset) -> np.ndarray:
    """Dataset-mean human position, used as the fixed non-robot state."""
    stacked = np.concatenate([t.states[:, 2:4] for t in dataset.trajectories])
    return stacked.mean(axis=0)


# ---------------------------------------------------------------------------
# synthetic coarse-prediction reference


@dataclass(frozen=True)
class OracleConfig:
    """Transparent label-then-constant-direction prediction rule.

    Highway: classify by net lateral displacement with a dead band, then aim
    at a point `lookahead` ahead in the labeled target lane at the nominal
    forward speed. Obstacle: pick the goal whose direction best agrees with
    the segment's robot heading, then emit unit-toward-goal actions at max
    speed.
    """

    env: EnvConfig
    n: int = 3
    dead_band: float = 0.15
    lookahead: float = 3.0


def _classify_highway(seg_states: np.ndarray, cfg: OracleConfig) -> str:
    dy = seg_states[-1, 1] - seg_states[0, 1]
    if dy > cfg.dead_band:
        return "merge_left"
    if dy < -cfg.dead_band:
        return "merge_right"
    return "stay_straight"


def _classify_obstacle(seg_states: np.ndarray, cfg: OracleConfig) -> int:
    start, end = seg_states[0, :2], seg_states[-1, :2]
    goals = np.asarray(cfg.env.goals, dtype=np.float64)
    disp = end - start
    if np.linalg.norm(disp) < ZERO_NORM:
        return int(np.argmin(np.linalg.norm(goals - end, axis=1)))
    heading = disp / np.linalg.norm(disp)
    to_goals = goals - start
    norms = np.linalg.norm(to_goals, axis=1)
    norms[norms < ZERO_NORM] = np.inf  # sitting on a goal: no direction to it
    cos = (to_goals @ heading) / norms
    return int(np.argmax(cos))


def oracle_predict(cfg: OracleConfig, seg_states, start_state) -> np.ndarray:
    """n constant coarse actions from start_state; seg_states is the
    observed (steps, 4) joint-state segment."""
    seg = np.asarray(seg_states, dtype=np.float64)
    if seg.ndim != 2 or seg.shape[1] != 4 or seg.shape[0] < 2:
        raise ContractError(f"segment must be (steps >= 2, 4), got {seg.shape}")
    if isinstance(start_state, envs.JointState):
        start_state = start_state.as_vector()
    start = np.asarray(start_state, dtype=np.float64).reshape(-1)[:2]

    if cfg.env.kind == envs.HIGHWAY:
        label = _classify_highway(seg, cfg)
        if label == "stay_straight":
            action = np.array([cfg.env.forward_speed, 0.0])
        else:
            target_y = envs.label_target_y(seg[0, 1], label, cfg.env)
            aim = np.array([cfg.lookahead, target_y - start[1]])
            action = aim / np.linalg.norm(aim) * cfg.env.forward_speed
    else:
        goal = np.asarray(cfg.env.goals[_classify_obstacle(seg, cfg)])
        to_goal = goal - start
        dist = np.linalg.norm(to_goal)
        if dist < ZERO_NORM:
            action = np.zeros(2)  # degenerate; callers skip and count
        else:
            action = to_goal / dist * cfg.env.max_speed
    return np.tile(action, (cfg.n, 1))


def oracle_label(cfg: OracleConfig, seg_states):
    seg = np.asarray(seg_states, dtype=np.float64)
    if cfg.env.kind == envs.HIGHWAY:
        return _classify_highway(seg, cfg)
    return _classify_obstacle(seg, cfg)


# ---------------------------------------------------------------------------
# model-vs-baseline comparison


@dataclass
class ComparisonReport:
    env_kind: str
    method_names: tuple
    errors: dict          # name -> list per trial of lists per start
    trial_means: dict     # name -> list of per-trial mean errors
    means: dict           # name -> pooled mean over all retained samples
    t: float
    p: float
    zero_variance: bool
    skipped: int
    trials_used: int
    trial_meta: list = field(default_factory=list)


def segment_to_history(seg_rows: np.ndarray, H: int) -> np.ndarray:
    """Flatten the last H segment rows; shorter segments are left-padded by
    repeating their first row (the encoder needs a fixed window width)."""
    seg_rows = np.asarray(seg_rows, dtype=np.float64)
    if seg_rows.shape[0] >= H:
        window = seg_rows[-H:]
    else:
        pad = np.tile(seg_rows[0], (H - seg_rows.shape[0], 1))
        window = np.vstack([pad, seg_rows])
    return window.reshape(-1)


def model_predictor(model):
    """Wrap a trained model as predictor(seg_states, seg_actions, start) ->
    (n, 2) actions; VAE models predict in evaluation mode."""
    def predict(seg_states, seg_actions, start_state):
        rows = np.hstack([seg_states, seg_actions])
        history = segment_to_history(rows, model.H)
        if isinstance(model, models.VaeModel):
            return models.vae_predict(model, history, start_state)
        return models.predict(model, history, start_state)
    return predict


def run_comparison(predictors: dict, dataset: Dataset, oracle_cfg: OracleConfig,
                   trials: int, starts: int, seed: int,
                   eval_traj_ids=None) -> ComparisonReport:
    """Alignment errors of each predictor against the oracle on held-out
    partial segments, paired across predictors trial by trial.

    Per trial: the opening 5-7 steps of a held-out trajectory (the partial
    segment an observer would watch) and `starts` probe states jittered
    around the initial joint state. Probing near the start keeps the robot
    in the region where position alone does not reveal the behavior, so the
    latent has to carry it. A (trial, start) pair where any participant's
    error is undefined is skipped for all of them and counted. The t-test
    runs over per-trial mean errors of the first two predictors.
    """
    if trials < 2 or starts < 1:
        raise ContractError("need trials >= 2 and starts >= 1")
    names = list(predictors.keys())
    if len(names) < 2:
        raise ContractError("comparison needs at least two predictors")
    pool = list(range(len(dataset.trajectories))) if eval_traj_ids is None \
        else list(eval_traj_ids)
    if not pool:
        raise ContractError("empty trajectory pool")
    env = dataset.env
    jitter = START_JITTER[env.kind]
    lo = np.array([env.x_min, env.y_min, env.x_min, env.y_min])
    hi = np.array([env.x_max, env.y_max, env.x_max, env.y_max])
    rng = np.random.default_rng(seed)

    errors = {name: [] for name in names}
    trial_means = {name: [] for name in names}
    meta, skipped = [], 0
    for trial in range(trials):
        tid = pool[int(rng.integers(len(pool)))]
        traj = dataset.trajectories[tid]
        seg_len = int(rng.integers(SEGMENT_STEPS[0], SEGMENT_STEPS[1] + 1))
        tau0 = 0  # partial segment = the opening of the interaction
        seg_states = traj.states[tau0:tau0 + seg_len]
        seg_actions = traj.actions[tau0:tau0 + seg_len]
        initial = seg_states[0]
        probes = np.clip(initial + rng.uniform(-jitter, jitter, size=(starts, 4)),
                         lo, hi)

        per_start = {name: [] for name in names}
        for probe in probes:
            reference = oracle_predict(oracle_cfg, seg_states, probe)
            try:
                errs = {name: sequence_alignment_error(
                            fn(seg_states, seg_actions, probe), reference)
                        for name, fn in predictors.items()}
            except UndefinedDirectionError:
                skipped += 1
                continue
            for name, e in errs.items():
                per_start[name].append(e)
        if not per_start[names[0]]:
            continue  # every start was skipped; trial carries no sample
        for name in names:
            errors[name].append(per_start[name])
            trial_means[name].append(float(np.mean(per_start[name])))
        meta.append({"traj_id": tid, "tau0": tau0, "seg_len": seg_len,
                     "starts": probes.tolist()})

    trials_used = len(trial_means[names[0]])
    zero_variance = False
    try:
        t, p = paired_t_test(trial_means[names[0]], trial_means[names[1]])
    except DegenerateTestError:
        t, p, zero_variance = float("nan"), float("nan"), True
    means = {name: float(np.mean([e for trial in errors[name] for e in trial]))
             for name in names}
    return ComparisonReport(env_kind=env.kind, method_names=tuple(names),
                            errors=errors, trial_means=trial_means, means=means,
                            t=t, p=p, zero_variance=zero_variance,
                            skipped=skipped, trials_used=trials_used,
                            trial_meta=meta)


def compare(fsq_model, vae_model, dataset: Dataset, oracle_cfg: OracleConfig,
            trials: int = 10, starts: int = 5, seed: int = 0,
            eval_traj_ids=None) -> ComparisonReport:
    predictors = {"fsq": model_predictor(fsq_model),
                  "vae": model_predictor(vae_model)}
    return run_comparison(predictors, dataset, oracle_cfg, trials, starts,
                          seed, eval_traj_ids)


# ---------------------------------------------------------------------------
# paired t-test with a self-contained p-value


def _betacf(a: float, b: float, x: float) -> float:
    """Continued fraction for the incomplete beta (modified Lentz)."""
    tiny = 1e-300
    qab, qap, qam = a + b, a + 1.0, a - 1.0
    c, d = 1.0, 1.0 - qab * x / qap
    if abs(d) < tiny:
        d = tiny
    d = 1.0 / d
    h = d
    for m in range(1, 300):
        m2 = 2 * m
        aa = m * (b - m) * x / ((qam + m2) * (a + m2))
        d = 1.0 + aa * d
        if abs(d) < tiny:
            d = tiny
        c = 1.0 + aa / c
        if abs(c) < tiny:
            c = tiny
        d = 1.0 / d
        h *= d * c
        aa = -(a + m) * (qab + m) * x / ((a + m2) * (qap + m2))
        d = 1.0 + aa * d
        if abs(d) < tiny:
            d = tiny
        c = 1.0 + aa / c
        if abs(c) < tiny:
            c = tiny
        d = 1.0 / d
        delta = d * c
        h *= delta
        if abs(delta - 1.0) < 1e-12:
            return h
    raise ArithmeticError(f"incomplete beta did not converge for a={a}, b={b}, x={x}")


def regularized_incomplete_beta(a: float, b: float, x: float) -> float:
    """I_x(a, b) to about 1e-10 absolute accuracy."""
    if x <= 0.0:
        return 0.0
    if x >= 1.0:
        return 1.0
    log_bt = (math.lgamma(a + b) - math.lgamma(a) - math.lgamma(b)
              + a * math.log(x) + b * math.log(1.0 - x))
    bt = math.exp(log_bt)
    if x < (a + 1.0) / (a + b + 2.0):
        return bt * _betacf(a, b, x) / a
    return 1.0 - bt * _betacf(b, a, 1.0 - x) / b


def paired_t_test(errors_a, errors_b):
    """Two-tailed paired t-test; returns (t, p).

    p = I_{df/(df+t^2)}(df/2, 1/2), the exact two-tailed tail mass of the t
    distribution, evaluated with the continued-fraction incomplete beta
    (documented accuracy 1e-8).
    """
    a = np.asarray(errors_a, dtype=np.float64).reshape(-1)
    b = np.asarray(errors_b, dtype=np.float64).reshape(-1)
    if a.shape != b.shape:
        raise DimensionError(f"sample sizes differ: {a.shape} vs {b.shape}")
    if a.shape[0] < 2:
        raise ContractError("paired t-test needs at least 2 pairs")
    diff = a - b
    sd = float(np.std(diff, ddof=1))
    if sd == 0.0:
        raise DegenerateTestError("difference variance is zero")
    n = diff.shape[0]
    t = float(np.mean(diff) / (sd / math.sqrt(n)))
    df = n - 1
    p = regularized_incomplete_beta(df / 2.0, 0.5, df / (df + t * t))
    return t, min(max(p, 0.0), 1.0)


# ---------------------------------------------------------------------------
# exports


def export_field(vf: VectorField, path, fmt: str, env: EnvConfig | None = None) -> None:
    """csv: one `x,y,ax,ay` row per cell (y-major). svg: arrow plot with
    lane lines / goals / obstacle discs when an env config is supplied."""
    if fmt == "csv":
        text = field_csv_text(vf)
    elif fmt == "svg":
        text = field_svg_text(vf, env)
    else:
        raise ContractError(f"unknown field export format {fmt!r}")
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(text)


def field_csv_text(vf: VectorField) -> str:
    lines = ["x,y,ax,ay"]
    xs, ys = vf.grid.xs.tolist(), vf.grid.ys.tolist()
    for i in range(vf.grid.ny):
        for j in range(vf.grid.nx):
            ax, ay = vf.actions[i, j].tolist()
            lines.append(f"{xs[j]!r},{ys[i]!r},{ax!r},{ay!r}")
    return "\n".join(lines) + "\n"


def load_field_csv(path) -> np.ndarray:
    """Parse an exported field back to (cells, 4) rows of x, y, ax, ay."""
    with open(path, "r", encoding="utf-8") as fh:
        lines = fh.read().splitlines()
    if not lines or lines[0] != "x,y,ax,ay":
        raise ContractError(f"{path} is not a field csv")
    return np.array([[float(v) for v in line.split(",")] for line in lines[1:]])


def field_svg_text(vf: VectorField, env: EnvConfig | None = None,
                   width_px: int = 720) -> str:
    grid = vf.grid
    margin = 0.06 * max(grid.x_max - grid.x_min, grid.y_max - grid.y_min)
    x0, x1 = grid.x_min - margin, grid.x_max + margin
    y0, y1 = grid.y_min - margin, grid.y_max + margin
    scale = width_px / (x1 - x0)
    height_px = (y1 - y0) * scale

    def px(x: float) -> float:
        return (x - x0) * scale

    def py(y: float) -> float:
        return height_px - (y - y0) * scale

    parts = ['<?xml version="1.0" encoding="UTF-8"?>',
             f'<svg xmlns="http://www.w3.org/2000/svg" width="{width_px:.0f}" '
             f'height="{height_px:.0f}" '
             f'viewBox="0 0 {width_px:.0f} {height_px:.0f}">',
             f'<rect width="{width_px:.0f}" height="{height_px:.0f}" fill="white"/>']

    if env is not None and env.kind == envs.HIGHWAY:
        for lane_y in env.lane_centers:
            parts.append(
                f'<line x1="{px(grid.x_min):.2f}" y1="{py(lane_y):.2f}" '
                f'x2="{px(grid.x_max):.2f}" y2="{py(lane_y):.2f}" '
                'stroke="#bbbbbb" stroke-dasharray="8 6" stroke-width="1.5"/>')
    if env is not None and env.kind == envs.OBSTACLE:
        for cx, cy, r in env.discs:
            parts.append(f'<circle cx="{px(cx):.2f}" cy="{py(cy):.2f}" '
                         f'r="{r * scale:.2f}" fill="#888888"/>')
        for gx, gy in env.goals:
            parts.append(f'<circle cx="{px(gx):.2f}" cy="{py(gy):.2f}" '
                         f'r="{0.02 * scale:.2f}" fill="none" '
                         'stroke="#2a9d2a" stroke-width="2"/>')

    cell_px = min((grid.x_max - grid.x_min) / max(grid.nx - 1, 1),
                  (grid.y_max - grid.y_min) / max(grid.ny - 1, 1)) * scale
    max_norm = float(np.max(np.linalg.norm(vf.actions.reshape(-1, 2), axis=1)))
    arrow_scale = 0.0 if max_norm == 0 else 0.45 * cell_px / max_norm
    xs, ys = grid.xs, grid.ys
    for i in range(grid.ny):
        for j in range(grid.nx):
            axv, ayv = vf.actions[i, j]
            sx, sy = px(xs[j]), py(ys[i])
            ex = sx + axv * arrow_scale
            ey = sy - ayv * arrow_scale  # svg y grows downward
            parts.append(f'<line x1="{sx:.2f}" y1="{sy:.2f}" x2="{ex:.2f}" '
                         f'y2="{ey:.2f}" stroke="#d17a22" stroke-width="1.2"/>')
            # arrowhead: short back-swept pair of lines
            vx, vy = ex - sx, ey - sy
            ln = math.hypot(vx, vy)
            if ln > 1e-9:
                ux, uy = vx / ln, vy / ln
                head = min(4.0, 0.35 * ln)
                for rot in (0.5, -0.5):
                    ca, sa = math.cos(math.pi - rot), math.sin(math.pi - rot)
                    hx = ux * ca - uy * sa
                    hy = ux * sa + uy * ca
                    parts.append(
                        f'<line x1="{ex:.2f}" y1="{ey:.2f}" '
                        f'x2="{ex + hx * head:.2f}" y2="{ey + hy * head:.2f}" '
                        'stroke="#d17a22" stroke-width="1.2"/>')
    parts.append('</svg>')
    return "\n".join(parts) + "\n"


COMPARISON_CSV_VERSION = 1


def write_comparison_csv(report: ComparisonReport, path) -> None:
    """Schema v1: comment header, then one row per retained (trial, start)
    with both methods' errors side by side."""
    a, b = report.method_names[:2]
    lines = [f"# tomfield-comparison v{COMPARISON_CSV_VERSION} "
             f"env={report.env_kind} t={report.t!r} p={report.p!r} "
             f"skipped={report.skipped}",
             f"trial,start,{a}_error,{b}_error"]
    for trial in range(len(report.errors[a])):
        for start in range(len(report.errors[a][trial])):
            lines.append(f"{trial},{start},{report.errors[a][trial][start]!r},"
                         f"{report.errors[b][trial][start]!r}")
    with open(path, "w", encoding="utf-8") as fh:
        fh.write("\n".join(lines) + "\n")

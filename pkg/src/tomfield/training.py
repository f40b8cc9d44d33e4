"""Losses and the training loop for the FSQ autoencoder and VAE baseline.

The total objective is

    loss_pred + lambda_recon * loss_recon            (FSQ)
    loss_pred + lambda_recon * loss_recon + beta*KL  (VAE)

where loss_pred scores the decoder at the window's own anchor against the
robot's next n actions, and loss_recon scores the same decoder and latent at
a random anchor tau' of the source trajectory against the n actions after
tau' (fresh tau' draws every epoch). Both are component-mean squared errors
over the 2n action scalars.

Determinism: one seed spawns five independent generator streams (split,
init, shuffle, recon anchors, VAE noise), so e.g. disabling the
reconstruction term does not shift any other stream.
"""

from __future__ import annotations

import logging
import time
from dataclasses import dataclass, field

import numpy as np

from . import diffcore, fsq, models
from .dataset import Dataset, Trajectory, window_matrix
from .diffcore import Tape, backward, init_adam, adam_step
from .errors import ConfigError, ContractError, DimensionError, TrainingError
from .fsq import QuantizerConfig

log = logging.getLogger(__name__)

MA_WINDOW = 10      # epochs, for the soft monotone-trend check
MA_RISE_TOL = 0.02  # relative rise that counts as a trend violation
MA_FLOOR = 0.005    # loss scale below which relative wiggles stop counting


@dataclass
class TrainConfig:
    epochs: int = 200
    batch_size: int = 64
    lr: float = 1e-3
    lambda_recon: float = 1.0
    beta: float = 1.0
    H: int = 7
    n: int = 3
    seed: int = 0
    eval_fraction: float = 0.1

    def __post_init__(self):
        if self.epochs < 1 or self.batch_size < 1 or self.H < 1 or self.n < 1:
            raise ConfigError("epochs, batch_size, H, n must be >= 1")
        if self.lr <= 0:
            raise ConfigError("lr must be positive")
        if self.lambda_recon < 0 or self.beta < 0:
            raise ConfigError("lambda_recon and beta must be >= 0")
        if not 0.0 < self.eval_fraction <= 0.5:
            raise ConfigError("eval_fraction must be in (0, 0.5]")


@dataclass
class TrainReport:
    train_pred: list = field(default_factory=list)
    train_recon: list = field(default_factory=list)
    train_kl: list = field(default_factory=list)
    train_total: list = field(default_factory=list)
    eval_pred: list = field(default_factory=list)
    code_usage: list = field(default_factory=list)  # per-epoch {index: count}
    initial_eval_pred: float = float("nan")
    best_epoch: int = -1
    best_eval_pred: float = float("inf")
    train_window_count: int = 0
    eval_window_count: int = 0
    ma_violations: int = 0
    wall_clock: float = 0.0


def loss_pred(predicted, actual) -> float:
    """Mean squared error over the 2n action components."""
    p = np.asarray(predicted, dtype=np.float64).reshape(-1)
    a = np.asarray(actual, dtype=np.float64).reshape(-1)
    if p.shape != a.shape:
        raise DimensionError(f"predicted length {p.shape} != actual length {a.shape}")
    return float(np.mean((p - a) ** 2))


def loss_recon(model, traj: Trajectory, tau_prime: int | None = None,
               rng=None, window_tau: int | None = None) -> float:
    """Score the window's latent code at a different anchor of its trajectory.

    The code comes from the history window ending at window_tau (default:
    the trajectory's final valid window); the decoder is anchored at state
    tau_prime and scored against the robot's actions tau_prime+1..tau_prime+n.
    tau_prime may instead be drawn uniformly from the valid range via rng.
    """
    T, H, n = traj.T, model.H, model.n
    if window_tau is None:
        window_tau = T - 1 - n
    if not (H - 1 <= window_tau <= T - 1 - n):
        raise ContractError(f"window_tau {window_tau} outside [{H - 1}, {T - 1 - n}]")
    if tau_prime is None:
        if rng is None:
            raise ContractError("need tau_prime or an rng to draw it")
        tau_prime = int(rng.integers(0, T - n))
    if not (0 <= tau_prime <= T - 1 - n):
        raise ContractError(f"tau_prime {tau_prime} outside [0, {T - 1 - n}]")
    rows = np.hstack([traj.states, traj.actions])
    history = rows[window_tau - H + 1:window_tau + 1].reshape(-1)
    if isinstance(model, models.VaeModel):
        _, _, latent = models.vae_encode(model, history, rng=None)
        predicted = models.vae_decode(model, latent.reshape(1, -1), traj.states[tau_prime])
    else:
        _, code = models.encode(model, history)
        predicted = models.decode(model, code, traj.states[tau_prime])
    actual = traj.actions[tau_prime + 1:tau_prime + n + 1, :2]
    return loss_pred(predicted, actual)


def default_quantizer(env_kind: str) -> QuantizerConfig:
    """(d=3, L=2) on the highway: 3 behaviors, 8 codes. (d=2, L=3) around
    the obstacles: 4 goals, 9 codes."""
    if env_kind == "highway":
        return QuantizerConfig(d=3, L=2)
    if env_kind == "obstacle":
        return QuantizerConfig(d=2, L=3)
    raise ContractError(f"no default quantizer for env kind {env_kind!r}")


def _rng_streams(seed: int):
    """Five independent deterministic streams derived from one seed."""
    split, init, shuffle, tau, eps = np.random.SeedSequence(seed).spawn(5)
    return (np.random.default_rng(split), np.random.default_rng(init),
            np.random.default_rng(shuffle), np.random.default_rng(tau),
            np.random.default_rng(eps))


def train_eval_split(n_traj: int, eval_fraction: float, seed: int):
    """Deterministic trajectory-level split; returns sorted id lists."""
    split_rng = _rng_streams(seed)[0]
    n_eval = max(1, int(round(eval_fraction * n_traj)))
    if n_eval >= n_traj:
        raise ConfigError(f"eval split of {n_eval} leaves no training trajectories")
    perm = split_rng.permutation(n_traj)
    return sorted(int(i) for i in perm[n_eval:]), sorted(int(i) for i in perm[:n_eval])


def _param_norms(params) -> str:
    return ", ".join(f"{name}={float(np.linalg.norm(arr)):.3e}"
                     for name, arr in params.items())


def _eval_pred_loss(kind, model, X, anchors, targets) -> float:
    hc = len(model.hidden)
    if kind == "fsq":
        pre = models.fsq_encoder_forward(None, model.params, X, hc)
        latent = fsq.quantize_values(pre, model.quantizer)
    else:
        mu, _ = models.vae_encoder_forward(None, model.params, X, hc)
        latent = mu
    out = models.decoder_forward(None, model.params, latent, anchors, hc)
    return float(diffcore.mse(None, out, targets)[0, 0])


def train(kind: str, dataset: Dataset, cfg: TrainConfig,
          quantizer: QuantizerConfig | None = None,
          hidden=models.DEFAULT_HIDDEN):
    """Train a model of the given kind; returns (model, TrainReport).

    The returned model carries the parameters of the best-eval epoch.
    """
    if kind not in ("fsq", "vae"):
        raise ContractError(f"model kind must be 'fsq' or 'vae', got {kind!r}")
    trajs = dataset.trajectories
    lengths = {t.T for t in trajs}
    if len(lengths) != 1:
        raise ConfigError(f"training requires equal-length trajectories, got T in {sorted(lengths)}")
    T = lengths.pop()
    if cfg.H + cfg.n > T:
        raise ConfigError(f"H + n = {cfg.H + cfg.n} exceeds trajectory length T = {T}")

    _, init_rng, shuffle_rng, tau_rng, eps_rng = _rng_streams(cfg.seed)
    train_ids, eval_ids = train_eval_split(len(trajs), cfg.eval_fraction, cfg.seed)
    train_trajs = [trajs[i] for i in train_ids]
    eval_trajs = [trajs[i] for i in eval_ids]

    X, anchors, targets, ids, _ = window_matrix(train_trajs, cfg.H, cfg.n)
    Xe, anchors_e, targets_e, _, _ = window_matrix(eval_trajs, cfg.H, cfg.n)
    states_all = np.stack([t.states for t in train_trajs])
    actions_all = np.stack([t.actions for t in train_trajs])
    B = X.shape[0]

    q = quantizer if quantizer is not None else default_quantizer(dataset.env.kind)
    if kind == "fsq":
        model = models.build_fsq_model(cfg.H, cfg.n, q, hidden, rng=init_rng)
    else:
        model = models.build_vae_model(cfg.H, cfg.n, q.d, hidden, beta=cfg.beta,
                                       rng=init_rng)
    hc = len(model.hidden)
    adam = init_adam(model.params, lr=cfg.lr)

    report = TrainReport(train_window_count=B, eval_window_count=Xe.shape[0])
    report.initial_eval_pred = _eval_pred_loss(kind, model, Xe, anchors_e, targets_e)
    best_params = model.params.copy()
    started = time.monotonic()
    first_step = True
    offsets = np.arange(1, cfg.n + 1)

    for epoch in range(cfg.epochs):
        perm = shuffle_rng.permutation(B)
        sums = np.zeros(4)  # pred, recon, kl, total weighted by batch rows
        for lo in range(0, B, cfg.batch_size):
            idx = perm[lo:lo + cfg.batch_size]
            b = idx.shape[0]
            tape = Tape()
            p = tape.leaves(model.params)
            kl_val = 0.0

            if kind == "fsq":
                pre = models.fsq_encoder_forward(tape, p, X[idx], hc)
                latent = fsq.quantize_pass_through(tape, pre, q)
            else:
                mu, lv = models.vae_encoder_forward(tape, p, X[idx], hc)
                noise = eps_rng.standard_normal((b, model.d))
                latent = diffcore.add(
                    tape, mu,
                    diffcore.mul(tape, diffcore.exp(tape, diffcore.scale(tape, lv, 0.5)),
                                 noise))

            out = models.decoder_forward(tape, p, latent, anchors[idx], hc)
            pred_node = diffcore.mse(tape, out, targets[idx])
            total_node = pred_node
            recon_val = 0.0
            if cfg.lambda_recon > 0:
                tau_p = tau_rng.integers(0, T - cfg.n, size=b)
                rows = ids[idx]
                anch_r = states_all[rows, tau_p]
                tgt_r = actions_all[rows[:, None], tau_p[:, None] + offsets, :2]
                out_r = models.decoder_forward(tape, p, latent, anch_r, hc)
                recon_node = diffcore.mse(tape, out_r, tgt_r.reshape(b, 2 * cfg.n))
                recon_val = float(recon_node.value[0, 0])
                total_node = diffcore.add(
                    tape, total_node, diffcore.scale(tape, recon_node, cfg.lambda_recon))
            if kind == "vae" and cfg.beta > 0:
                inner = diffcore.sub(
                    tape,
                    diffcore.shift(tape, diffcore.add(
                        tape, diffcore.exp(tape, lv), diffcore.mul(tape, mu, mu)), -1.0),
                    lv)
                kl_node = diffcore.scale(tape, diffcore.sum_all(tape, inner), 0.5 / b)
                kl_val = float(kl_node.value[0, 0])
                total_node = diffcore.add(
                    tape, total_node, diffcore.scale(tape, kl_node, cfg.beta))

            total_val = float(total_node.value[0, 0])
            if not np.isfinite(total_val):
                raise TrainingError(
                    f"non-finite loss at epoch {epoch}, batch {lo // cfg.batch_size}; "
                    f"parameter norms: {_param_norms(model.params)}")
            grads = backward(tape, total_node)
            if first_step:
                dead = [name for name in model.params.names()
                        if name.startswith("enc.") and not np.any(grads[name])]
                if dead:
                    raise TrainingError(
                        f"zero encoder gradients on the first step for {dead}; "
                        "gradient path through the latent is broken")
                first_step = False
            adam_step(model.params, grads, adam)
            sums += b * np.array([float(pred_node.value[0, 0]), recon_val,
                                  kl_val, total_val])

        pred_m, recon_m, kl_m, total_m = (sums / B).tolist()
        report.train_pred.append(pred_m)
        report.train_recon.append(recon_m)
        report.train_kl.append(kl_m)
        report.train_total.append(total_m)

        eval_loss = _eval_pred_loss(kind, model, Xe, anchors_e, targets_e)
        report.eval_pred.append(eval_loss)
        if kind == "fsq":
            indices = models.encode_batch(model, X)
            counts = np.bincount(indices, minlength=q.codebook_size)
            report.code_usage.append({i: int(c) for i, c in enumerate(counts)})
        else:
            report.code_usage.append({})
        if eval_loss < report.best_eval_pred:
            report.best_eval_pred = eval_loss
            report.best_epoch = epoch
            best_params = model.params.copy()

    model.params = best_params
    report.wall_clock = time.monotonic() - started
    if len(report.train_total) >= MA_WINDOW + 1:
        ma = np.convolve(report.train_total, np.full(MA_WINDOW, 1.0 / MA_WINDOW),
                         mode="valid")
        # resampled recon anchors wiggle the converged loss; only a clear
        # relative rise above the noise floor counts against the trend check
        report.ma_violations = int(np.sum(
            np.diff(ma) > MA_RISE_TOL * np.maximum(ma[:-1], MA_FLOOR)))
        if report.ma_violations > 1:
            log.warning("train loss moving average rose %d times beyond "
                        "tolerance", report.ma_violations)
    return model, report


def write_report_csv(report: TrainReport, path) -> None:
    """epoch, losses, eval loss, and the code-usage histogram per epoch."""
    lines = ["epoch,train_pred,train_recon,train_kl,train_total,eval_pred,code_usage"]
    for e in range(len(report.train_pred)):
        usage = ";".join(f"{k}:{v}" for k, v in sorted(report.code_usage[e].items()))
        lines.append(f"{e},{report.train_pred[e]!r},{report.train_recon[e]!r},"
                     f"{report.train_kl[e]!r},{report.train_total[e]!r},"
                     f"{report.eval_pred[e]!r},{usage}")
    with open(path, "w", encoding="utf-8") as fh:
        fh.write("\n".join(lines) + "\n")

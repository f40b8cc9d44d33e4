"""Command-line interface: data generation, training, field export, and the
model-vs-baseline comparison.

Config precedence is built-in defaults < config file (INI sections) < flags.
Every command that writes outputs also writes the fully resolved effective
config next to them. Exit codes: 0 ok, 1 I/O error, 2 usage or config error,
3 comparison gate failed, 4 degenerate statistics.
"""

from __future__ import annotations

import argparse
import configparser
import dataclasses
import os
import sys
from collections import Counter

import numpy as np

from . import analysis, envs, fsq, models, training
from . import dataset as dsmod
from .errors import (ConfigError, ContractError, DegenerateTestError,
                     DimensionError, FormatVersionError, NumericError,
                     ParseError, TrainingError)

EXIT_OK = 0
EXIT_IO = 1
EXIT_USAGE = 2
EXIT_GATE = 3
EXIT_DEGENERATE = 4

SEED_ENV_VAR = "TOMFIELD_SEED"

_EPILOG = """exit codes:
  0  success
  1  I/O error (missing or unreadable/unwritable files)
  2  usage or config error
  3  comparison ran but the quantized model was not better
  4  degenerate statistics (zero-variance paired differences)

config file: INI sections [run] [env] [data] [train] [quantizer] [oracle]
[compare]; unknown sections or keys are rejected. Precedence is defaults <
config file < command-line flags. Seed fallback order: --seed, config [run]
seed, $TOMFIELD_SEED, 0.
"""


def _parse_floats(text: str) -> tuple:
    return tuple(float(v) for v in str(text).split(","))


def _parse_ints(text: str) -> tuple:
    return tuple(int(v) for v in str(text).split(","))


def _parse_pair(text: str) -> tuple:
    pair = _parse_floats(text)
    if len(pair) != 2:
        raise ValueError(f"expected x,y pair, got {text!r}")
    return pair


def _parse_pairs(text: str) -> tuple:
    return tuple(_parse_pair(part) for part in str(text).split(";"))


def _parse_triples(text: str) -> tuple:
    out = []
    for part in str(text).split(";"):
        triple = _parse_floats(part)
        if len(triple) != 3:
            raise ValueError(f"expected x,y,r triple, got {part!r}")
        out.append(triple)
    return tuple(out)


# section -> key -> parser; also the whitelist of recognized config keys
_SCHEMA = {
    "run": {"seed": int},
    "env": {
        "kind": str, "noise": float, "horizon": int, "max_speed": float,
        "x_min": float, "x_max": float, "y_min": float, "y_max": float,
        "robot_start": _parse_pair, "human_start": _parse_pair,
        "lane_centers": _parse_floats, "forward_speed": float,
        "lateral_gain": float, "lateral_speed_max": float,
        "goals": _parse_pairs, "discs": _parse_triples,
        "influence": float, "repulsion_gain": float,
        "start_sampling": str,
    },
    "data": {"n_trajectories": int},
    "train": {"epochs": int, "batch_size": int, "lr": float,
              "lambda_recon": float, "beta": float, "h": int, "n": int,
              "eval_fraction": float, "hidden": _parse_ints},
    "quantizer": {"d": int, "levels": int},
    "oracle": {"dead_band": float, "lookahead": float},
    "compare": {"trials": int, "starts": int, "alpha": float},
}

_DEFAULTS = {
    "run": {"seed": None},
    "env": {key: None for key in _SCHEMA["env"]},
    "data": {"n_trajectories": 2000},
    "train": {"epochs": 200, "batch_size": 64, "lr": 1e-3,
              "lambda_recon": 1.0, "beta": 1.0, "h": 7, "n": 3,
              "eval_fraction": 0.1, "hidden": models.DEFAULT_HIDDEN},
    "quantizer": {"d": None, "levels": None},
    "oracle": {"dead_band": 0.15, "lookahead": 3.0},
    "compare": {"trials": 10, "starts": 5, "alpha": 0.05},
}
_DEFAULTS["env"]["kind"] = "highway"


def _read_config_file(path) -> dict:
    if not os.path.exists(path):
        raise FileNotFoundError(f"config file not found: {path}")
    parser = configparser.ConfigParser(interpolation=None)
    try:
        parser.read(path, encoding="utf-8")
    except configparser.Error as exc:
        raise ConfigError(f"config file {path}: {exc}") from exc
    out = {}
    for section in parser.sections():
        if section not in _SCHEMA:
            raise ConfigError(f"config file {path}: unknown section [{section}]")
        out[section] = {}
        for key, raw in parser.items(section):
            if key not in _SCHEMA[section]:
                raise ConfigError(
                    f"config file {path}: unknown key {key!r} in [{section}]")
            try:
                out[section][key] = _SCHEMA[section][key](raw)
            except ValueError as exc:
                raise ConfigError(
                    f"config file {path}: bad value for [{section}] {key}: {exc}"
                ) from exc
    return out


class _Layers:
    """defaults < config file < flags, queried one key at a time."""

    def __init__(self, args):
        self.args = args
        self.file = _read_config_file(args.config) if getattr(args, "config", None) else {}

    def get(self, section: str, key: str, flag: str | None = None):
        if flag is not None:
            value = getattr(self.args, flag, None)
            if value is not None:
                return value
        if section in self.file and key in self.file[section]:
            return self.file[section][key]
        return _DEFAULTS[section][key]


def _resolve_seed(layers: _Layers) -> int:
    value = layers.get("run", "seed", "seed")
    if value is not None:
        return int(value)
    env_value = os.environ.get(SEED_ENV_VAR)
    if env_value is not None:
        try:
            return int(env_value)
        except ValueError as exc:
            raise ConfigError(
                f"{SEED_ENV_VAR} must be an integer, got {env_value!r}") from exc
    return 0


def _build_env(layers: _Layers) -> tuple:
    kind = layers.get("env", "kind", "env")
    if kind not in (envs.HIGHWAY, envs.OBSTACLE):
        raise ConfigError(f"unknown environment kind {kind!r}")
    base = envs.highway_config() if kind == envs.HIGHWAY else envs.obstacle_config()
    overrides = {}
    for key in _SCHEMA["env"]:
        if key in ("kind", "horizon"):
            continue
        value = layers.get("env", key, key if key == "noise" else None)
        if value is not None:
            overrides[key] = value
    env = dataclasses.replace(base, **overrides) if overrides else base
    horizon = layers.get("env", "horizon", "horizon")
    if horizon is None:
        horizon = envs.DEFAULT_HORIZON[kind]
    elif int(horizon) < 2:
        raise ConfigError(f"horizon must be >= 2, got {horizon}")
    return env, int(horizon)


def _resolve_quantizer(layers: _Layers, env_kind: str) -> fsq.QuantizerConfig:
    base = training.default_quantizer(env_kind)
    d = layers.get("quantizer", "d", "d")
    levels = layers.get("quantizer", "levels", "levels")
    return fsq.QuantizerConfig(d=base.d if d is None else int(d),
                               L=base.L if levels is None else int(levels))


def _ini_value(value) -> str:
    if isinstance(value, float):
        return repr(value)
    if isinstance(value, bool):
        return str(value).lower()
    if isinstance(value, (int, str)):
        return str(value)
    if isinstance(value, (tuple, list)):
        if value and isinstance(value[0], (tuple, list)):
            return "; ".join(",".join(_ini_value(x) for x in item)
                             for item in value)
        return ",".join(_ini_value(x) for x in value)
    raise ContractError(f"cannot serialize config value {value!r}")


def _write_effective_config(path, sections: dict) -> None:
    lines = []
    for section in sorted(sections):
        lines.append(f"[{section}]")
        for key in sorted(sections[section]):
            value = sections[section][key]
            if value is None or (isinstance(value, (tuple, list)) and not value):
                continue
            lines.append(f"{key} = {_ini_value(value)}")
        lines.append("")
    with open(path, "w", encoding="utf-8") as fh:
        fh.write("\n".join(lines))


def _env_section(env, horizon: int) -> dict:
    section = dict(dsmod.env_to_dict(env))
    section.pop("dt", None)  # fixed; not a config key
    section["horizon"] = horizon
    return section


def _require_file(path, what: str) -> None:
    if not os.path.exists(path):
        raise FileNotFoundError(f"{what} not found: {path}")


# ---------------------------------------------------------------------------
# commands


def cmd_gen_data(args) -> int:
    layers = _Layers(args)
    env, horizon = _build_env(layers)
    n = int(layers.get("data", "n_trajectories", "n"))
    if n < 1:
        raise ConfigError(f"--n must be >= 1, got {n}")
    seed = _resolve_seed(layers)
    ds = dsmod.generate_dataset(env, n, seed=seed, T=horizon)
    dsmod.save(ds, args.out)
    _write_effective_config(str(args.out) + ".config.ini", {
        "run": {"seed": seed},
        "env": _env_section(env, horizon),
        "data": {"n_trajectories": n},
    })
    digest = dsmod.file_sha256(args.out)
    labels = envs.HIGHWAY_LABELS if env.kind == envs.HIGHWAY else envs.OBSTACLE_LABELS
    robot = Counter(t.robot_label for t in ds.trajectories)
    human = Counter(t.human_label for t in ds.trajectories)
    print(f"dataset: {args.out}")
    print(f"env: {env.kind}  trajectories: {n}  horizon: {horizon}  seed: {seed}")
    print("robot labels: " + "  ".join(f"{lb}={robot.get(lb, 0)}" for lb in labels))
    print("human labels: " + "  ".join(f"{lb}={human.get(lb, 0)}" for lb in labels))
    print(f"sha256: {digest}")
    return EXIT_OK


def _train_sections(layers: _Layers, cfg: training.TrainConfig,
                    quantizer, hidden, env, horizon) -> dict:
    train = dataclasses.asdict(cfg)
    train["h"] = train.pop("H")
    train.pop("seed")
    train["hidden"] = hidden
    return {
        "run": {"seed": cfg.seed},
        "env": _env_section(env, horizon),
        "train": train,
        "quantizer": {"d": quantizer.d, "levels": quantizer.L},
    }


def cmd_train(args) -> int:
    layers = _Layers(args)
    _require_file(args.data, "dataset file")
    ds = dsmod.load(args.data)
    seed = _resolve_seed(layers)
    hidden = tuple(layers.get("train", "hidden", "hidden"))
    cfg = training.TrainConfig(
        epochs=int(layers.get("train", "epochs", "epochs")),
        batch_size=int(layers.get("train", "batch_size", "batch_size")),
        lr=float(layers.get("train", "lr", "lr")),
        lambda_recon=float(layers.get("train", "lambda_recon", "lambda_recon")),
        beta=float(layers.get("train", "beta", "beta")),
        H=int(layers.get("train", "h", "history")),
        n=int(layers.get("train", "n", "pred")),
        seed=seed,
        eval_fraction=float(layers.get("train", "eval_fraction", "eval_fraction")),
    )
    quantizer = _resolve_quantizer(layers, ds.env.kind)
    model, report = training.train(args.model, ds, cfg,
                                   quantizer=quantizer, hidden=hidden)
    os.makedirs(args.out, exist_ok=True)
    ckpt_path = os.path.join(args.out, "checkpoint.json")
    report_path = os.path.join(args.out, "report.csv")
    horizon = ds.trajectories[0].T
    usage = (analysis.latent_histogram(model, ds, cfg.H, cfg.n)
             if args.model == "fsq" else {})
    models.save_checkpoint(
        model, ckpt_path,
        env=dsmod.env_to_dict(ds.env),
        train_config=dataclasses.asdict(cfg),
        dataset_sha256=dsmod.file_sha256(args.data),
        human_mean_state=analysis.human_mean_state(ds).tolist(),
        code_usage=usage,
        best_epoch=report.best_epoch,
        best_eval_pred=report.best_eval_pred,
    )
    training.write_report_csv(report, report_path)
    _write_effective_config(os.path.join(args.out, "config.ini"),
                            _train_sections(layers, cfg, quantizer, hidden,
                                            ds.env, horizon))
    print(f"model: {args.model}  env: {ds.env.kind}  "
          f"train windows: {report.train_window_count}  "
          f"eval windows: {report.eval_window_count}")
    print(f"best eval pred loss: {report.best_eval_pred!r} "
          f"(epoch {report.best_epoch})")
    if args.model == "fsq":
        used = sum(1 for v in usage.values() if v > 0)
        print(f"codes in use: {used}/{quantizer.codebook_size}")
    print(f"checkpoint: {ckpt_path}")
    print(f"report: {report_path}")
    return EXIT_OK


def cmd_field(args) -> int:
    layers = _Layers(args)
    _require_file(args.checkpoint, "checkpoint file")
    model, meta = models.load_checkpoint(args.checkpoint)
    if not isinstance(model, models.FsqModel):
        raise ConfigError("field export needs a quantized-code checkpoint")
    if meta["env"] is None:
        raise ConfigError("checkpoint carries no env config; cannot build grid")
    env = meta["env"]
    size = model.quantizer.codebook_size
    usage = meta["code_usage"] or {}
    if args.codes is not None:
        codes = _parse_ints(args.codes)
    elif usage:
        total = max(1, sum(usage.values()))
        codes = tuple(sorted(idx for idx, count in usage.items()
                             if count / total >= args.usage_threshold))
        if not codes:
            raise ConfigError(
                f"no codes reach usage threshold {args.usage_threshold}; "
                "pass --codes explicitly")
    else:
        codes = tuple(range(size))
    for idx in codes:
        if not 0 <= idx < size:
            raise ConfigError(f"code index {idx} out of range 0..{size - 1}")
    if meta["human_mean_state"] is not None:
        human = np.asarray(meta["human_mean_state"], dtype=np.float64)
    else:
        human = np.asarray(env.human_start, dtype=np.float64)
    grid = analysis.default_grid(env, nx=args.nx, ny=args.ny)
    book = fsq.codebook(model.quantizer)
    os.makedirs(args.out, exist_ok=True)
    for idx in codes:
        vf = analysis.extract_vector_field(model, book[idx], grid, human)
        csv_path = os.path.join(args.out, f"code_{idx}.csv")
        svg_path = os.path.join(args.out, f"code_{idx}.svg")
        analysis.export_field(vf, csv_path, "csv")
        analysis.export_field(vf, svg_path, "svg", env=env)
        print(f"code {idx}: usage={usage.get(idx, 'n/a')}  "
              f"wrote {csv_path} and {svg_path}")
    _write_effective_config(os.path.join(args.out, "config.ini"), {
        "env": _env_section(env, envs.DEFAULT_HORIZON[env.kind]),
        "quantizer": {"d": model.quantizer.d, "levels": model.quantizer.L},
    })
    return EXIT_OK


def _eval_ids_from_meta(meta: dict, n_traj: int):
    cfg = meta.get("train_config") or {}
    if "eval_fraction" not in cfg or "seed" not in cfg:
        return None
    _, eval_ids = training.train_eval_split(n_traj, cfg["eval_fraction"],
                                            cfg["seed"])
    return eval_ids


def cmd_compare(args) -> int:
    layers = _Layers(args)
    for path, what in ((args.data, "dataset file"),
                       (args.fsq, "fsq checkpoint"),
                       (args.vae, "vae checkpoint")):
        _require_file(path, what)
    ds = dsmod.load(args.data)
    fsq_model, fsq_meta = models.load_checkpoint(args.fsq)
    vae_model, vae_meta = models.load_checkpoint(args.vae)
    if not isinstance(fsq_model, models.FsqModel):
        raise ConfigError(f"--fsq checkpoint holds a {type(fsq_model).__name__}")
    if not isinstance(vae_model, models.VaeModel):
        raise ConfigError(f"--vae checkpoint holds a {type(vae_model).__name__}")
    for meta, name in ((fsq_meta, "fsq"), (vae_meta, "vae")):
        if meta["env"] is not None and meta["env"].kind != ds.env.kind:
            raise ConfigError(
                f"{name} checkpoint env kind {meta['env'].kind!r} does not "
                f"match dataset env kind {ds.env.kind!r}")
    if fsq_model.n != vae_model.n:
        raise ConfigError(
            f"prediction lengths differ: fsq n={fsq_model.n}, vae n={vae_model.n}")
    seed = _resolve_seed(layers)
    oracle_cfg = analysis.OracleConfig(
        env=ds.env, n=fsq_model.n,
        dead_band=float(layers.get("oracle", "dead_band", "dead_band")),
        lookahead=float(layers.get("oracle", "lookahead", "lookahead")),
    )
    trials = int(layers.get("compare", "trials", "trials"))
    starts = int(layers.get("compare", "starts", "starts"))
    alpha = float(layers.get("compare", "alpha", "alpha"))
    eval_ids = _eval_ids_from_meta(fsq_meta, len(ds.trajectories))
    report = analysis.compare(fsq_model, vae_model, ds, oracle_cfg,
                              trials=trials, starts=starts, seed=seed,
                              eval_traj_ids=eval_ids)
    samples = sum(len(t) for t in report.errors["fsq"])
    pool = "held-out split" if eval_ids is not None else "full dataset"
    print(f"env: {ds.env.kind}  trials: {report.trials_used}/{trials}  "
          f"samples per method: {samples}  skipped: {report.skipped}  "
          f"pool: {pool}")
    print(f"mean alignment error: fsq={report.means['fsq']!r}  "
          f"vae={report.means['vae']!r}")
    if args.out:
        analysis.write_comparison_csv(report, args.out)
        _write_effective_config(str(args.out) + ".config.ini", {
            "run": {"seed": seed},
            "oracle": {"dead_band": oracle_cfg.dead_band,
                       "lookahead": oracle_cfg.lookahead},
            "compare": {"trials": trials, "starts": starts, "alpha": alpha},
        })
        print(f"samples csv: {args.out}")
    if report.zero_variance:
        print("degenerate comparison: paired differences have zero variance; "
              "no t-test is possible", file=sys.stderr)
        return EXIT_DEGENERATE
    print(f"paired t: {report.t!r}  p: {report.p!r}  alpha: {alpha}")
    if report.means["fsq"] < report.means["vae"] and report.p < alpha:
        print("gate: fsq better (mean lower, difference significant)")
        return EXIT_OK
    print("gate: fsq not better", file=sys.stderr)
    return EXIT_GATE


# ---------------------------------------------------------------------------
# parser


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="tomfield",
        description="Discrete-latent behavior fields for two-agent trajectories.",
        epilog=_EPILOG,
        formatter_class=argparse.RawDescriptionHelpFormatter,
    )
    sub = parser.add_subparsers(dest="command", required=True)

    def add_common(p):
        p.add_argument("--config", default=None,
                       help="INI config file (default: none)")
        p.add_argument("--seed", type=int, default=None,
                       help=f"RNG seed (default: [run] seed, then "
                            f"${SEED_ENV_VAR}, then 0)")

    gen = sub.add_parser("gen-data", help="generate a scripted-policy dataset",
                         description="Roll out scripted two-agent episodes "
                                     "and write them as JSON lines.")
    add_common(gen)
    gen.add_argument("--env", default=None, choices=[envs.HIGHWAY, envs.OBSTACLE],
                     help="environment kind (default: highway)")
    gen.add_argument("--n", type=int, default=None,
                     help="number of trajectories (default: 2000)")
    gen.add_argument("--horizon", type=int, default=None,
                     help="steps per trajectory (default: 30 highway, 40 obstacle)")
    gen.add_argument("--noise", type=float, default=None,
                     help="per-component action noise amplitude "
                          "(default: 0.05 highway, 0.005 obstacle)")
    gen.add_argument("--out", required=True, help="output dataset path (.jsonl)")
    gen.set_defaults(func=cmd_gen_data)

    tr = sub.add_parser("train", help="train a model on a dataset",
                        description="Train the quantized-code model or the "
                                    "continuous-latent baseline.")
    add_common(tr)
    tr.add_argument("--data", required=True, help="dataset path")
    tr.add_argument("--model", required=True, choices=["fsq", "vae"],
                    help="model kind")
    tr.add_argument("--out", required=True, help="output directory")
    tr.add_argument("--epochs", type=int, default=None,
                    help="training epochs (default: 200)")
    tr.add_argument("--batch-size", type=int, default=None,
                    help="minibatch size (default: 64)")
    tr.add_argument("--lr", type=float, default=None,
                    help="Adam learning rate (default: 0.001)")
    tr.add_argument("--lambda-recon", type=float, default=None,
                    help="reconstruction loss weight (default: 1.0)")
    tr.add_argument("--beta", type=float, default=None,
                    help="KL weight for the vae baseline (default: 1.0)")
    tr.add_argument("--history", type=int, default=None,
                    help="history window H in steps (default: 7)")
    tr.add_argument("--pred", type=int, default=None,
                    help="predicted steps n (default: 3)")
    tr.add_argument("--eval-fraction", type=float, default=None,
                    help="held-out trajectory fraction (default: 0.1)")
    tr.add_argument("--hidden", type=_parse_ints, default=None,
                    help="hidden layer widths, comma separated (default: 64,64)")
    tr.add_argument("--d", type=int, default=None,
                    help="latent channels (default: 3 highway, 2 obstacle)")
    tr.add_argument("--levels", type=int, default=None,
                    help="quantization levels per channel "
                         "(default: 2 highway, 3 obstacle)")
    tr.set_defaults(func=cmd_train)

    fd = sub.add_parser("field", help="export per-code action fields",
                        description="Decode one vector field per latent code "
                                    "over a robot-position grid.")
    add_common(fd)
    fd.add_argument("--checkpoint", required=True, help="fsq checkpoint path")
    fd.add_argument("--out", required=True, help="output directory")
    fd.add_argument("--codes", default=None,
                    help="comma-separated code indices (default: all codes "
                         "with usage >= threshold)")
    fd.add_argument("--usage-threshold", type=float, default=0.05,
                    help="usage fraction for default code selection "
                         "(default: 0.05)")
    fd.add_argument("--nx", type=int, default=20,
                    help="grid columns (default: 20)")
    fd.add_argument("--ny", type=int, default=None,
                    help="grid rows (default: 9 highway, nx obstacle)")
    fd.set_defaults(func=cmd_field)

    cp = sub.add_parser("compare", help="compare fsq vs vae against the "
                                        "coarse-prediction reference",
                        description="Paired alignment-error comparison on "
                                    "held-out segments; exit 3 when the "
                                    "quantized model is not better.")
    add_common(cp)
    cp.add_argument("--data", required=True, help="dataset path")
    cp.add_argument("--fsq", required=True, help="fsq checkpoint path")
    cp.add_argument("--vae", required=True, help="vae checkpoint path")
    cp.add_argument("--trials", type=int, default=None,
                    help="number of trials (default: 10)")
    cp.add_argument("--starts", type=int, default=None,
                    help="probe start states per trial (default: 5)")
    cp.add_argument("--alpha", type=float, default=None,
                    help="significance level for the gate (default: 0.05)")
    cp.add_argument("--dead-band", type=float, default=None,
                    help="reference lateral dead band (default: 0.15)")
    cp.add_argument("--lookahead", type=float, default=None,
                    help="reference merge aim distance (default: 3.0)")
    cp.add_argument("--out", default=None,
                    help="optional per-sample CSV output path")
    cp.set_defaults(func=cmd_compare)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except (ConfigError, ContractError, DimensionError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except DegenerateTestError as exc:
        print(f"degenerate statistics: {exc}", file=sys.stderr)
        return EXIT_DEGENERATE
    except (ParseError, FormatVersionError, TrainingError, NumericError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_IO
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_IO


if __name__ == "__main__":
    sys.exit(main())

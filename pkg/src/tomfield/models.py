"""FSQ autoencoder and VAE baseline over flattened history windows.

Both models share one layout: a fully connected encoder reads a flattened
H-step window (8H reals), a latent of width d passes through the bottleneck,
and a fully connected decoder reads [latent, joint anchor state] (d + 4
reals) and emits the robot's next n actions as a 2n-vector. The FSQ model
quantizes the latent; the VAE model replaces quantization with a Gaussian
posterior (mean/log-variance heads, reparameterized sampling, KL penalty).

Encoder and decoder parameters live in one ParamSet under "enc."/"dec."
prefixes so a single tape/optimizer covers the whole model.
"""

from __future__ import annotations

import json
from dataclasses import dataclass

import numpy as np

from . import diffcore, fsq
from .dataset import ROW_WIDTH, STATE_WIDTH, env_from_dict
from .diffcore import Matrix, ParamSet, Tape, matrix
from .envs import JointState
from .errors import ContractError, DimensionError, FormatVersionError, ParseError
from .fsq import LatentCode, QuantizerConfig

CHECKPOINT_FORMAT = "tomfield-checkpoint"
CHECKPOINT_VERSION = 1

LOGVAR_MIN, LOGVAR_MAX = -10.0, 10.0

DEFAULT_HIDDEN = (64, 64)


@dataclass
class FsqModel:
    params: ParamSet
    quantizer: QuantizerConfig
    H: int
    n: int
    hidden: tuple[int, ...] = DEFAULT_HIDDEN

    @property
    def input_width(self) -> int:
        return ROW_WIDTH * self.H

    @property
    def latent_width(self) -> int:
        return self.quantizer.d


@dataclass
class VaeModel:
    params: ParamSet
    d: int
    H: int
    n: int
    hidden: tuple[int, ...] = DEFAULT_HIDDEN
    beta: float = 1.0

    @property
    def input_width(self) -> int:
        return ROW_WIDTH * self.H

    @property
    def latent_width(self) -> int:
        return self.d


def _add_layer(params: ParamSet, name: str, fan_in: int, fan_out: int, rng) -> None:
    params.add(f"{name}.w", diffcore.uniform_init(rng, fan_in, fan_out))
    params.add(f"{name}.b", np.zeros((1, fan_out)))


def _build_trunk(params: ParamSet, prefix: str, widths: list[int], rng) -> None:
    for i in range(len(widths) - 1):
        _add_layer(params, f"{prefix}.h{i}", widths[i], widths[i + 1], rng)


def build_fsq_model(H: int, n: int, quantizer: QuantizerConfig,
                    hidden=DEFAULT_HIDDEN, rng=None) -> FsqModel:
    """Fresh parameters; draw order is encoder layers then decoder layers."""
    rng = np.random.default_rng(0) if rng is None else rng
    hidden = tuple(hidden)
    params = ParamSet()
    _build_trunk(params, "enc", [ROW_WIDTH * H, *hidden], rng)
    _add_layer(params, "enc.out", hidden[-1], quantizer.d, rng)
    _build_trunk(params, "dec", [quantizer.d + STATE_WIDTH, *hidden], rng)
    _add_layer(params, "dec.out", hidden[-1], 2 * n, rng)
    return FsqModel(params=params, quantizer=quantizer, H=H, n=n, hidden=hidden)


def build_vae_model(H: int, n: int, d: int, hidden=DEFAULT_HIDDEN,
                    beta: float = 1.0, rng=None) -> VaeModel:
    if d < 1:
        raise ContractError(f"need d >= 1, got {d}")
    rng = np.random.default_rng(0) if rng is None else rng
    hidden = tuple(hidden)
    params = ParamSet()
    _build_trunk(params, "enc", [ROW_WIDTH * H, *hidden], rng)
    _add_layer(params, "enc.mu", hidden[-1], d, rng)
    _add_layer(params, "enc.logvar", hidden[-1], d, rng)
    _build_trunk(params, "dec", [d + STATE_WIDTH, *hidden], rng)
    _add_layer(params, "dec.out", hidden[-1], 2 * n, rng)
    return VaeModel(params=params, d=d, H=H, n=n, hidden=hidden, beta=beta)


# ---------------------------------------------------------------------------
# forward passes; p maps parameter name -> Node (taped) or ndarray (plain)


def _trunk_forward(tape, p, x, prefix: str, count: int):
    h = x
    for i in range(count):
        h = diffcore.tanh(tape, diffcore.affine(
            tape, h, p[f"{prefix}.h{i}.w"], p[f"{prefix}.h{i}.b"]))
    return h


def fsq_encoder_forward(tape, p, x, hidden_count: int):
    h = _trunk_forward(tape, p, x, "enc", hidden_count)
    return diffcore.affine(tape, h, p["enc.out.w"], p["enc.out.b"])


def vae_encoder_forward(tape, p, x, hidden_count: int):
    """Returns (mean, logvar); logvar clamped to [-10, 10]."""
    h = _trunk_forward(tape, p, x, "enc", hidden_count)
    mu = diffcore.affine(tape, h, p["enc.mu.w"], p["enc.mu.b"])
    logvar = diffcore.clip(
        tape, diffcore.affine(tape, h, p["enc.logvar.w"], p["enc.logvar.b"]),
        LOGVAR_MIN, LOGVAR_MAX)
    return mu, logvar


def decoder_forward(tape, p, latent, anchor, hidden_count: int):
    x = diffcore.concat_cols(tape, latent, anchor)
    h = _trunk_forward(tape, p, x, "dec", hidden_count)
    return diffcore.affine(tape, h, p["dec.out.w"], p["dec.out.b"])


# ---------------------------------------------------------------------------
# inference ops


def _as_history(model, history) -> Matrix:
    x = matrix(history)
    if x.shape != (1, model.input_width):
        raise DimensionError(
            f"history shape {x.shape} does not match (1, {model.input_width})"
        )
    return x


def _as_anchor(anchor) -> Matrix:
    if isinstance(anchor, JointState):
        anchor = anchor.as_vector()
    x = matrix(anchor)
    if x.shape != (1, STATE_WIDTH):
        raise DimensionError(f"anchor shape {x.shape} does not match (1, {STATE_WIDTH})")
    return x


def encode(model: FsqModel, history):
    """history -> (pre-latent d-vector, LatentCode)."""
    x = _as_history(model, history)
    pre = fsq_encoder_forward(None, model.params, x, len(model.hidden))
    return pre[0], fsq.quantize(pre[0], model.quantizer)


def encode_batch(model: FsqModel, X) -> np.ndarray:
    """Code indices for a stack of history windows; shape (rows,)."""
    pre = fsq_encoder_forward(None, model.params, np.asarray(X), len(model.hidden))
    return fsq.codes_to_index(fsq.integer_codes(pre, model.quantizer), model.quantizer)


def decode(model: FsqModel, code: LatentCode, anchor) -> np.ndarray:
    """(code, anchor state) -> n predicted robot actions, shape (n, 2)."""
    q = np.asarray(code.q, dtype=np.float64).reshape(1, -1)
    if q.shape[1] != model.quantizer.d:
        raise DimensionError(
            f"code width {q.shape[1]} does not match quantizer d={model.quantizer.d}"
        )
    out = decoder_forward(None, model.params, q, _as_anchor(anchor), len(model.hidden))
    return out.reshape(model.n, 2)


def predict(model: FsqModel, history, anchor) -> np.ndarray:
    _, code = encode(model, history)
    return decode(model, code, anchor)


def vae_encode(model: VaeModel, history, rng=None):
    """history -> (mean, logvar, latent sample), each a d-vector.

    With rng=None (evaluation mode) the sample IS the mean; otherwise
    sample = mean + exp(logvar / 2) * standard normal draw.
    """
    x = _as_history(model, history)
    mu, logvar = vae_encoder_forward(None, model.params, x, len(model.hidden))
    mu, logvar = mu[0], logvar[0]
    if rng is None:
        return mu, logvar, mu.copy()
    return mu, logvar, mu + np.exp(logvar / 2.0) * rng.standard_normal(model.d)


def vae_decode(model: VaeModel, latent, anchor) -> np.ndarray:
    z = matrix(latent)
    if z.shape != (1, model.d):
        raise DimensionError(f"latent shape {z.shape} does not match (1, {model.d})")
    out = decoder_forward(None, model.params, z, _as_anchor(anchor), len(model.hidden))
    return out.reshape(model.n, 2)


def vae_predict(model: VaeModel, history, anchor) -> np.ndarray:
    """Evaluation-mode prediction (mean latent, no sampling)."""
    _, _, latent = vae_encode(model, history, rng=None)
    return vae_decode(model, latent, anchor)


def kl_term(mean, logvar) -> float:
    """KL(N(mean, exp(logvar)) || N(0, I)) summed over channels."""
    mean = np.asarray(mean, dtype=np.float64).reshape(-1)
    logvar = np.asarray(logvar, dtype=np.float64).reshape(-1)
    if mean.shape != logvar.shape:
        raise DimensionError(f"mean width {mean.shape} != logvar width {logvar.shape}")
    return float(0.5 * np.sum(np.exp(logvar) + mean ** 2 - 1.0 - logvar))


# ---------------------------------------------------------------------------
# checkpoints


def _params_to_json(params: ParamSet) -> dict:
    return {name: {"shape": list(arr.shape), "data": arr.reshape(-1).tolist()}
            for name, arr in params.items()}


def _params_from_json(obj: dict) -> ParamSet:
    params = ParamSet()
    for name in obj:
        entry = obj[name]
        arr = np.array(entry["data"], dtype=np.float64).reshape(entry["shape"])
        params.add(name, arr)
    return params


def save_checkpoint(model, path, *, env=None, train_config=None,
                    dataset_sha256=None, human_mean_state=None,
                    code_usage=None, best_epoch=None, best_eval_pred=None) -> None:
    """Versioned JSON container; byte-identical for identical contents."""
    if isinstance(model, FsqModel):
        head = {"kind": "fsq", "d": model.quantizer.d, "levels": model.quantizer.L}
    elif isinstance(model, VaeModel):
        head = {"kind": "vae", "d": model.d, "beta": model.beta}
    else:
        raise ContractError(f"cannot checkpoint {type(model).__name__}")
    obj = {
        "format": CHECKPOINT_FORMAT,
        "version": CHECKPOINT_VERSION,
        **head,
        "h": model.H,
        "n": model.n,
        "hidden": list(model.hidden),
        "env": env,
        "train_config": train_config,
        "dataset_sha256": dataset_sha256,
        "human_mean_state": human_mean_state,
        "code_usage": {str(k): int(v) for k, v in code_usage.items()}
                      if code_usage is not None else None,
        "best_epoch": best_epoch,
        "best_eval_pred": best_eval_pred,
        "params": _params_to_json(model.params),
    }
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(json.dumps(obj, sort_keys=True, separators=(",", ":")) + "\n")


def load_checkpoint(path):
    """Returns (model, meta) where meta carries env config and provenance."""
    with open(path, "r", encoding="utf-8") as fh:
        text = fh.read()
    try:
        obj = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ParseError(f"checkpoint {path}: invalid JSON ({exc.msg})") from exc
    if not isinstance(obj, dict) or obj.get("format") != CHECKPOINT_FORMAT:
        raise ParseError(f"checkpoint {path}: not a {CHECKPOINT_FORMAT} file")
    if obj.get("version") != CHECKPOINT_VERSION:
        raise FormatVersionError(
            f"unsupported checkpoint version {obj.get('version')!r}; "
            f"this build reads version {CHECKPOINT_VERSION}"
        )
    missing = {"kind", "h", "n", "hidden", "params"} - set(obj)
    if missing:
        raise ParseError(f"checkpoint {path}: missing fields {sorted(missing)}")
    params = _params_from_json(obj["params"])
    hidden = tuple(obj["hidden"])
    if obj["kind"] == "fsq":
        model = FsqModel(params=params,
                         quantizer=QuantizerConfig(d=obj["d"], L=obj["levels"]),
                         H=obj["h"], n=obj["n"], hidden=hidden)
    elif obj["kind"] == "vae":
        model = VaeModel(params=params, d=obj["d"], H=obj["h"], n=obj["n"],
                         hidden=hidden, beta=obj.get("beta", 1.0))
    else:
        raise ParseError(f"checkpoint {path}: unknown model kind {obj['kind']!r}")
    meta = {
        "env": env_from_dict(obj["env"]) if obj.get("env") else None,
        "train_config": obj.get("train_config"),
        "dataset_sha256": obj.get("dataset_sha256"),
        "human_mean_state": obj.get("human_mean_state"),
        "code_usage": {int(k): v for k, v in obj["code_usage"].items()}
                      if obj.get("code_usage") else None,
        "best_epoch": obj.get("best_epoch"),
        "best_eval_pred": obj.get("best_eval_pred"),
    }
    return model, meta

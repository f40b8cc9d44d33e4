"""Finite scalar quantization of latent vectors.

Each latent channel is squashed with tanh, snapped to one of L evenly spaced
levels, and mapped back into [-1, 1]:

    z_int = round(((L - 1) / 2) * (tanh(z) + 1))      (integer in 0..L-1)
    z_q   = (2 / (L - 1)) * z_int - 1

Rounding is half-away-from-zero (0.5 -> 1), never banker's rounding: the
midpoint of a 2-level channel must land on the upper level deterministically
on every platform. The implicit codebook has L^d entries; a code vector is
flattened to one integer index in base L with channel 0 least significant.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .diffcore import Matrix, Node, Tape, _as_operand, _value, matrix, record
from .errors import ContractError, DimensionError, NumericError


@dataclass(frozen=True)
class QuantizerConfig:
    """d latent channels, each quantized to L levels in [-1, 1]."""

    d: int
    L: int

    def __post_init__(self):
        if self.d < 1:
            raise ContractError(f"need d >= 1, got {self.d}")
        if self.L < 2:
            raise ContractError(f"need L >= 2, got {self.L}")
        if self.d * np.log2(self.L) > 63:
            raise ContractError(
                f"codebook size {self.L}^{self.d} does not fit a 64-bit index"
            )

    @property
    def codebook_size(self) -> int:
        return self.L ** self.d


@dataclass(frozen=True)
class LatentCode:
    """A codebook element: quantized vector plus its flat integer index."""

    q: np.ndarray  # shape (d,), entries in {-1, -1 + 2/(L-1), ..., 1}
    index: int


def round_half_away_from_zero(x: np.ndarray) -> np.ndarray:
    x = np.asarray(x, dtype=np.float64)
    return np.sign(x) * np.floor(np.abs(x) + 0.5)


def _as_batch(z, cfg: QuantizerConfig) -> Matrix:
    z = matrix(z) if not isinstance(z, np.ndarray) else np.atleast_2d(z)
    if z.shape[1] != cfg.d:
        raise DimensionError(f"latent width {z.shape[1]} does not match d={cfg.d}")
    if not np.all(np.isfinite(z)):
        raise NumericError("non-finite pre-latent values")
    return z


def integer_codes(z, cfg: QuantizerConfig) -> np.ndarray:
    """Per-channel level indices in 0..L-1; shape (rows, d), dtype int64."""
    z = _as_batch(z, cfg)
    scaled = ((cfg.L - 1) / 2.0) * (np.tanh(z) + 1.0)
    return round_half_away_from_zero(scaled).astype(np.int64)


def quantize_values(z, cfg: QuantizerConfig) -> Matrix:
    """Quantized latent vectors, same shape as the (rows, d) input."""
    return (2.0 / (cfg.L - 1)) * integer_codes(z, cfg) - 1.0


def quantize(pre_latent, cfg: QuantizerConfig) -> LatentCode:
    """Quantize one d-vector into its codebook element."""
    z = np.asarray(pre_latent, dtype=np.float64).reshape(1, -1)
    codes = integer_codes(z, cfg)
    q = (2.0 / (cfg.L - 1)) * codes[0] - 1.0
    return LatentCode(q=q, index=int(codes_to_index(codes, cfg)[0]))


def codes_to_index(codes, cfg: QuantizerConfig) -> np.ndarray:
    """Flatten (rows, d) integer codes to scalar indices."""
    codes = np.atleast_2d(np.asarray(codes, dtype=np.int64))
    if codes.shape[1] != cfg.d:
        raise DimensionError(f"code width {codes.shape[1]} does not match d={cfg.d}")
    if np.any((codes < 0) | (codes >= cfg.L)):
        raise ContractError(f"codes outside 0..{cfg.L - 1}")
    index = np.zeros(codes.shape[0], dtype=np.int64)
    radix = 1
    for ch in range(cfg.d):
        index += codes[:, ch] * radix
        radix *= cfg.L
    return index


def index_to_codes(index, cfg: QuantizerConfig) -> np.ndarray:
    """Inverse of :func:`codes_to_index`; returns shape (rows, d)."""
    index = np.atleast_1d(np.asarray(index, dtype=np.int64))
    if np.any((index < 0) | (index >= cfg.codebook_size)):
        raise ContractError(f"index outside 0..{cfg.codebook_size - 1}")
    rem = index.copy()
    codes = np.zeros((index.shape[0], cfg.d), dtype=np.int64)
    for ch in range(cfg.d):
        codes[:, ch] = rem % cfg.L
        rem //= cfg.L
    return codes


def codebook(cfg: QuantizerConfig) -> list[LatentCode]:
    """All L^d codes, ordered by index."""
    codes = index_to_codes(np.arange(cfg.codebook_size), cfg)
    q = (2.0 / (cfg.L - 1)) * codes - 1.0
    return [LatentCode(q=q[i], index=i) for i in range(cfg.codebook_size)]


def quantize_pass_through(tape: Tape, pre_latent, cfg: QuantizerConfig) -> Node:
    """Taped quantization with a straight-through backward pass.

    Forward equals :func:`quantize_values` row-wise; the recorded adjoint is
    the identity, handing the upstream gradient to the pre-latent unchanged.
    """
    if tape is None:
        return quantize_values(_value(pre_latent), cfg)
    node = _as_operand(tape, pre_latent)
    out = quantize_values(node.value, cfg)
    return record(tape, "quantize", out, (node,), lambda g: (g,))

"""Minimal reverse-mode autodiff over dense float64 matrices.

All tensors are 2-D numpy arrays (rows x cols, row-major, float64).
Every differentiable op takes a ``tape`` as its first argument:

* ``tape`` is a :class:`Tape` -> inputs/outputs are :class:`Node` objects and
  the op is recorded for the backward pass;
* ``tape`` is ``None`` -> inputs/outputs are plain numpy arrays and nothing
  is recorded (pure inference path, same numerics).

The backward pass walks the tape in exact reverse of forward order, so a
single forward function can serve training and inference without duplication.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from .errors import ContractError, DimensionError, NumericError

Matrix = np.ndarray  # 2-D float64


def matrix(values) -> Matrix:
    """Coerce nested lists / arrays to a 2-D float64 matrix."""
    arr = np.array(values, dtype=np.float64)
    if arr.ndim == 1:
        arr = arr.reshape(1, -1)
    if arr.ndim != 2:
        raise DimensionError(f"expected a 2-D matrix, got ndim={arr.ndim}")
    return arr


def check_finite(arr: np.ndarray, what: str) -> None:
    if not np.all(np.isfinite(arr)):
        raise NumericError(f"non-finite values in {what}")


class ParamSet:
    """Named collection of parameter matrices with stable iteration order.

    Names are unique; shapes are fixed at registration (updates happen in
    place, the arrays themselves are never rebound).
    """

    def __init__(self):
        self._arrays: dict[str, Matrix] = {}

    def add(self, name: str, values) -> Matrix:
        if name in self._arrays:
            raise ContractError(f"parameter {name!r} already registered")
        arr = matrix(values)
        check_finite(arr, f"parameter {name!r}")
        self._arrays[name] = arr
        return arr

    def __getitem__(self, name: str) -> Matrix:
        return self._arrays[name]

    def __contains__(self, name: str) -> bool:
        return name in self._arrays

    def __len__(self) -> int:
        return len(self._arrays)

    def names(self):
        return list(self._arrays.keys())

    def items(self):
        return self._arrays.items()

    def copy(self) -> "ParamSet":
        dup = ParamSet()
        for name, arr in self._arrays.items():
            dup._arrays[name] = arr.copy()
        return dup


class Node:
    """One recorded value in the computation graph."""

    __slots__ = ("value", "parents", "vjp", "kind", "param_name")

    def __init__(self, value, parents=(), vjp=None, kind="const", param_name=None):
        self.value: Matrix = value
        self.parents: tuple["Node", ...] = parents
        # vjp(upstream) -> tuple of gradients, one per parent
        self.vjp: Callable | None = vjp
        self.kind: str = kind
        self.param_name: str | None = param_name


class Tape:
    """Ordered record of primitive operations for one forward pass."""

    def __init__(self):
        self.nodes: list[Node] = []
        self.leaf_nodes: dict[str, Node] = {}

    def leaves(self, params: ParamSet) -> dict[str, Node]:
        """Register every parameter as a leaf node; returns name -> Node."""
        if self.leaf_nodes:
            raise ContractError("leaves() may be called once per tape")
        for name, arr in params.items():
            node = Node(arr, kind="param", param_name=name)
            self.nodes.append(node)
            self.leaf_nodes[name] = node
        return dict(self.leaf_nodes)

    def constant(self, values) -> Node:
        node = Node(matrix(values), kind="const")
        self.nodes.append(node)
        return node


def record(tape: Tape, kind: str, value: Matrix, parents: tuple, vjp) -> Node:
    """Append an op node to the tape (extension point for custom ops)."""
    node = Node(value, parents=parents, vjp=vjp, kind=kind)
    tape.nodes.append(node)
    return node


def _value(x) -> Matrix:
    return x.value if isinstance(x, Node) else x


def _as_operand(tape: Tape | None, x):
    """Wrap plain arrays as constants when taping; pass through otherwise."""
    if tape is None:
        return matrix(x) if not isinstance(x, np.ndarray) else x
    return x if isinstance(x, Node) else tape.constant(x)


def _unbroadcast(grad: Matrix, shape: tuple) -> Matrix:
    """Reduce a broadcasted gradient back to the operand's shape."""
    if grad.shape == shape:
        return grad
    out = grad
    if shape[0] == 1 and grad.shape[0] != 1:
        out = out.sum(axis=0, keepdims=True)
    if shape[1] == 1 and grad.shape[1] != 1:
        out = out.sum(axis=1, keepdims=True)
    if out.shape != shape:
        raise DimensionError(f"cannot reduce gradient {grad.shape} to {shape}")
    return out


# ---------------------------------------------------------------------------
# primitive ops


def affine(tape, x, w, b):
    """x @ w + b with b broadcast over rows."""
    x, w, b = (_as_operand(tape, v) for v in (x, w, b))
    xv, wv, bv = _value(x), _value(w), _value(b)
    if xv.shape[1] != wv.shape[0]:
        raise DimensionError(
            f"affine: input {xv.shape} incompatible with weights {wv.shape}"
        )
    if bv.shape != (1, wv.shape[1]):
        raise DimensionError(
            f"affine: bias {bv.shape} incompatible with weights {wv.shape}"
        )
    out = xv @ wv + bv
    if tape is None:
        return out

    def vjp(g):
        return g @ wv.T, xv.T @ g, g.sum(axis=0, keepdims=True)

    return record(tape, "affine", out, (x, w, b), vjp)


def tanh(tape, x):
    x = _as_operand(tape, x)
    out = np.tanh(_value(x))
    if tape is None:
        return out
    return record(tape, "tanh", out, (x,), lambda g: (g * (1.0 - out * out),))


def relu(tape, x):
    x = _as_operand(tape, x)
    xv = _value(x)
    out = np.maximum(xv, 0.0)
    if tape is None:
        return out
    mask = xv > 0.0
    return record(tape, "relu", out, (x,), lambda g: (g * mask,))


def add(tape, a, b):
    a, b = _as_operand(tape, a), _as_operand(tape, b)
    av, bv = _value(a), _value(b)
    out = av + bv
    if tape is None:
        return out

    def vjp(g):
        return _unbroadcast(g, av.shape), _unbroadcast(g, bv.shape)

    return record(tape, "add", out, (a, b), vjp)


def sub(tape, a, b):
    a, b = _as_operand(tape, a), _as_operand(tape, b)
    av, bv = _value(a), _value(b)
    out = av - bv
    if tape is None:
        return out

    def vjp(g):
        return _unbroadcast(g, av.shape), _unbroadcast(-g, bv.shape)

    return record(tape, "sub", out, (a, b), vjp)


def mul(tape, a, b):
    """Elementwise product (numpy broadcasting rules)."""
    a, b = _as_operand(tape, a), _as_operand(tape, b)
    av, bv = _value(a), _value(b)
    out = av * bv
    if tape is None:
        return out

    def vjp(g):
        return _unbroadcast(g * bv, av.shape), _unbroadcast(g * av, bv.shape)

    return record(tape, "mul", out, (a, b), vjp)


def scale(tape, x, c: float):
    x = _as_operand(tape, x)
    out = _value(x) * c
    if tape is None:
        return out
    return record(tape, "scale", out, (x,), lambda g: (g * c,))


def shift(tape, x, c: float):
    x = _as_operand(tape, x)
    out = _value(x) + c
    if tape is None:
        return out
    return record(tape, "shift", out, (x,), lambda g: (g,))


def exp(tape, x):
    x = _as_operand(tape, x)
    out = np.exp(_value(x))
    if tape is None:
        return out
    return record(tape, "exp", out, (x,), lambda g: (g * out,))


def clip(tape, x, lo: float, hi: float):
    """Clamp; gradient passes through strictly inside (lo, hi)."""
    x = _as_operand(tape, x)
    xv = _value(x)
    out = np.clip(xv, lo, hi)
    if tape is None:
        return out
    mask = (xv > lo) & (xv < hi)
    return record(tape, "clip", out, (x,), lambda g: (g * mask,))


def concat_cols(tape, a, b):
    a, b = _as_operand(tape, a), _as_operand(tape, b)
    av, bv = _value(a), _value(b)
    if av.shape[0] != bv.shape[0]:
        raise DimensionError(f"concat: row counts differ, {av.shape} vs {bv.shape}")
    out = np.hstack([av, bv])
    if tape is None:
        return out
    split = av.shape[1]
    return record(
        tape, "concat", out, (a, b), lambda g: (g[:, :split], g[:, split:])
    )


def sum_all(tape, x):
    """Sum of all entries, as a 1x1 matrix."""
    x = _as_operand(tape, x)
    xv = _value(x)
    out = np.array([[xv.sum()]])
    if tape is None:
        return out
    return record(
        tape, "sum", out, (x,), lambda g: (np.full_like(xv, g[0, 0]),)
    )


def mse(tape, pred, target):
    """Mean over all entries of (pred - target)^2; target is a constant."""
    pred = _as_operand(tape, pred)
    pv = _value(pred)
    tv = matrix(target) if not isinstance(target, np.ndarray) else target
    if pv.shape != tv.shape:
        raise DimensionError(f"mse: prediction {pv.shape} vs target {tv.shape}")
    diff = pv - tv
    out = np.array([[np.mean(diff * diff)]])
    if tape is None:
        return out
    coeff = 2.0 / diff.size
    return record(
        tape, "mse", out, (pred,), lambda g: (g[0, 0] * coeff * diff,)
    )


# ---------------------------------------------------------------------------
# backward pass


def backward(tape: Tape, loss: Node) -> dict[str, Matrix]:
    """Gradients of a scalar loss with respect to every registered leaf.

    Leaves the loss does not reach get zero gradients.
    """
    if not tape.nodes:
        raise ContractError("backward on an empty tape")
    if loss.value.shape != (1, 1):
        raise ContractError(f"loss must be 1x1, got {loss.value.shape}")
    grads: dict[int, Matrix] = {id(loss): np.ones((1, 1))}
    for node in reversed(tape.nodes):
        g = grads.get(id(node))
        if g is None or node.vjp is None:
            continue
        for parent, pg in zip(node.parents, node.vjp(g)):
            pid = id(parent)
            if pid in grads:
                grads[pid] = grads[pid] + pg
            else:
                grads[pid] = pg
    out: dict[str, Matrix] = {}
    for name, leaf in tape.leaf_nodes.items():
        g = grads.get(id(leaf))
        out[name] = np.zeros_like(leaf.value) if g is None else g
    return out


def grad_check(fn, params: ParamSet, probe_count: int = 50,
               epsilon: float = 1e-5, rng=None) -> float:
    """Max relative error of analytic vs central finite-difference gradients.

    ``fn(tape, p)`` must build a scalar loss from the mapping ``p`` of
    parameter name to Node (taped call) or ndarray (numeric call); it must be
    deterministic. Graphs containing quantize nodes are rejected: their
    recorded Jacobian is an identity by contract, which finite differences
    cannot certify.
    """
    if epsilon <= 0:
        raise ContractError("epsilon must be positive")
    if rng is None:
        rng = np.random.default_rng(0)
    tape = Tape()
    loss = fn(tape, tape.leaves(params))
    if any(n.kind == "quantize" for n in tape.nodes):
        raise ContractError("grad_check does not cover quantize-pass-through graphs")
    analytic = backward(tape, loss)

    names = params.names()
    sizes = np.array([params[n].size for n in names])
    offsets = np.concatenate([[0], np.cumsum(sizes)])
    total = int(offsets[-1])
    picks = rng.choice(total, size=min(probe_count, total), replace=False)

    def eval_at(name, flat_idx, value) -> float:
        arrs = {n: params[n] for n in names}
        patched = params[name].copy()
        patched.flat[flat_idx] = value
        arrs[name] = patched
        out = fn(None, arrs)
        return float(out[0, 0])

    max_rel = 0.0
    for flat in picks:
        k = int(np.searchsorted(offsets, flat, side="right") - 1)
        name, idx = names[k], int(flat - offsets[k])
        base = params[name].flat[idx]
        numeric = (eval_at(name, idx, base + epsilon)
                   - eval_at(name, idx, base - epsilon)) / (2.0 * epsilon)
        a = analytic[name].flat[idx]
        if not (np.isfinite(a) and np.isfinite(numeric)):
            raise NumericError(f"non-finite gradient probing {name}[{idx}]")
        max_rel = max(max_rel, abs(a - numeric) / max(1e-8, abs(numeric)))
    return max_rel


# ---------------------------------------------------------------------------
# optimizer


@dataclass
class AdamState:
    """Adam moments and hyperparameters, keyed by parameter name."""

    lr: float = 1e-3
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    step: int = 0
    m: dict[str, Matrix] = field(default_factory=dict)
    v: dict[str, Matrix] = field(default_factory=dict)


def init_adam(params: ParamSet, lr: float = 1e-3, beta1: float = 0.9,
              beta2: float = 0.999, eps: float = 1e-8) -> AdamState:
    state = AdamState(lr=lr, beta1=beta1, beta2=beta2, eps=eps)
    for name, arr in params.items():
        state.m[name] = np.zeros_like(arr)
        state.v[name] = np.zeros_like(arr)
    return state


def adam_step(params: ParamSet, grads: dict[str, Matrix], state: AdamState) -> None:
    """One bias-corrected Adam update, applied to the parameters in place."""
    for name in params.names():
        if name not in grads:
            raise ContractError(f"missing gradient for parameter {name!r}")
        if grads[name].shape != params[name].shape:
            raise DimensionError(
                f"gradient shape {grads[name].shape} vs parameter "
                f"{params[name].shape} for {name!r}"
            )
    state.step += 1
    t = state.step
    bc1 = 1.0 - state.beta1 ** t
    bc2 = 1.0 - state.beta2 ** t
    for name, p in params.items():
        g = grads[name]
        m = state.m[name]
        v = state.v[name]
        m *= state.beta1
        m += (1.0 - state.beta1) * g
        v *= state.beta2
        v += (1.0 - state.beta2) * (g * g)
        p -= state.lr * (m / bc1) / (np.sqrt(v / bc2) + state.eps)


def uniform_init(rng: np.random.Generator, fan_in: int, fan_out: int) -> Matrix:
    """Weights uniform in [-sqrt(1/fan_in), +sqrt(1/fan_in)]."""
    bound = np.sqrt(1.0 / fan_in)
    return rng.uniform(-bound, bound, size=(fan_in, fan_out))

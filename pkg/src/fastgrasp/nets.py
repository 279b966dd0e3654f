"""Minimal dense-network engine: reverse-mode autodiff, MLPs, Adam, checkpoints.

The engine is deliberately small: float64 numpy arrays, a tape of Tensor
nodes built eagerly, and exactly the operations the generator and the
actor-critic losses need. Reproducibility beats speed at this scale, so
there is no threading and no float32 anywhere.

Gradient correctness is enforced by the finite-difference oracle in
:func:`finite_difference_grads`, which the test suite runs against every
loss used in the package.
"""
from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass, field

import numpy as np

from .errors import CheckpointError, NumericalError, ShapeError

# ---------------------------------------------------------------------------
# Seeded, splittable randomness
# ---------------------------------------------------------------------------


def rng_for(seed: int, *scope: str) -> np.random.Generator:
    """Child generator for a named component, derived from one master seed.

    Stable across runs and processes (unlike Python's salted hash), so every
    component sees the same stream for a given (seed, scope) pair.
    """
    words = [int(seed) & 0xFFFFFFFFFFFFFFFF]
    for s in scope:
        digest = hashlib.sha256(s.encode()).digest()
        words.append(int.from_bytes(digest[:8], "little"))
    return np.random.default_rng(np.random.SeedSequence(words))


# ---------------------------------------------------------------------------
# Autodiff tape
# ---------------------------------------------------------------------------


class Tensor:
    """Node in a reverse-mode graph over a float64 ndarray."""

    __slots__ = ("data", "grad", "_parents", "_backward")

    def __init__(self, data, parents=(), backward=None):
        self.data = np.asarray(data, dtype=np.float64)
        self.grad = None
        self._parents = parents
        self._backward = backward

    @property
    def shape(self):
        return self.data.shape

    def backward(self) -> None:
        """Accumulate gradients of this (scalar) node into the whole graph."""
        order: list[Tensor] = []
        seen: set[int] = set()
        stack: list[tuple[Tensor, bool]] = [(self, False)]
        while stack:
            node, expanded = stack.pop()
            if expanded:
                order.append(node)
                continue
            if id(node) in seen:
                continue
            seen.add(id(node))
            stack.append((node, True))
            for p in node._parents:
                if id(p) not in seen:
                    stack.append((p, False))
        self.grad = np.ones_like(self.data)
        for node in reversed(order):
            if node._backward is not None and node.grad is not None:
                node._backward(node.grad)

    # operator sugar -------------------------------------------------------
    def __add__(self, other):
        return add(self, other)

    __radd__ = __add__

    def __sub__(self, other):
        return sub(self, other)

    def __rsub__(self, other):
        return sub(other, self)

    def __mul__(self, other):
        return mul(self, other)

    __rmul__ = __mul__

    def __truediv__(self, other):
        return div(self, other)

    def __neg__(self):
        return mul(self, -1.0)

    def __matmul__(self, other):
        return matmul(self, other)


def _lift(x) -> Tensor:
    return x if isinstance(x, Tensor) else Tensor(np.asarray(x, dtype=np.float64))


def _accum(t: Tensor, g: np.ndarray) -> None:
    if t.grad is None:
        t.grad = np.zeros_like(t.data)
    t.grad += g


def _unbroadcast(g: np.ndarray, shape: tuple) -> np.ndarray:
    """Sum a broadcasted gradient back down to the parent's shape."""
    while g.ndim > len(shape):
        g = g.sum(axis=0)
    for i, dim in enumerate(shape):
        if dim == 1 and g.shape[i] != 1:
            g = g.sum(axis=i, keepdims=True)
    return g.reshape(shape)


def add(a, b) -> Tensor:
    a, b = _lift(a), _lift(b)
    out = Tensor(a.data + b.data, (a, b))

    def back(g):
        _accum(a, _unbroadcast(g, a.data.shape))
        _accum(b, _unbroadcast(g, b.data.shape))

    out._backward = back
    return out


def sub(a, b) -> Tensor:
    a, b = _lift(a), _lift(b)
    out = Tensor(a.data - b.data, (a, b))

    def back(g):
        _accum(a, _unbroadcast(g, a.data.shape))
        _accum(b, _unbroadcast(-g, b.data.shape))

    out._backward = back
    return out


def mul(a, b) -> Tensor:
    a, b = _lift(a), _lift(b)
    out = Tensor(a.data * b.data, (a, b))

    def back(g):
        _accum(a, _unbroadcast(g * b.data, a.data.shape))
        _accum(b, _unbroadcast(g * a.data, b.data.shape))

    out._backward = back
    return out


def div(a, b) -> Tensor:
    a, b = _lift(a), _lift(b)
    out = Tensor(a.data / b.data, (a, b))

    def back(g):
        _accum(a, _unbroadcast(g / b.data, a.data.shape))
        _accum(b, _unbroadcast(-g * a.data / (b.data * b.data), b.data.shape))

    out._backward = back
    return out


def matmul(a, b) -> Tensor:
    a, b = _lift(a), _lift(b)
    if a.data.ndim != 2 or b.data.ndim != 2:
        raise ShapeError(f"matmul expects 2D operands, got {a.data.shape} @ {b.data.shape}")
    if a.data.shape[1] != b.data.shape[0]:
        raise ShapeError(f"matmul inner dims differ: {a.data.shape} @ {b.data.shape}")
    out = Tensor(a.data @ b.data, (a, b))

    def back(g):
        _accum(a, g @ b.data.T)
        _accum(b, a.data.T @ g)

    out._backward = back
    return out


def tanh(a) -> Tensor:
    a = _lift(a)
    y = np.tanh(a.data)
    out = Tensor(y, (a,))
    out._backward = lambda g: _accum(a, g * (1.0 - y * y))
    return out


def relu(a) -> Tensor:
    a = _lift(a)
    mask = a.data > 0.0
    out = Tensor(np.where(mask, a.data, 0.0), (a,))
    out._backward = lambda g: _accum(a, g * mask)
    return out


def exp(a) -> Tensor:
    a = _lift(a)
    y = np.exp(a.data)
    out = Tensor(y, (a,))
    out._backward = lambda g: _accum(a, g * y)
    return out


def expm1(a) -> Tensor:
    a = _lift(a)
    out = Tensor(np.expm1(a.data), (a,))
    out._backward = lambda g: _accum(a, g * np.exp(a.data))
    return out


def log(a) -> Tensor:
    a = _lift(a)
    out = Tensor(np.log(a.data), (a,))
    out._backward = lambda g: _accum(a, g / a.data)
    return out


def square(a) -> Tensor:
    a = _lift(a)
    out = Tensor(a.data * a.data, (a,))
    out._backward = lambda g: _accum(a, g * 2.0 * a.data)
    return out


def tsum(a, axis=None) -> Tensor:
    a = _lift(a)
    out = Tensor(a.data.sum(axis=axis), (a,))

    def back(g):
        if axis is None:
            _accum(a, np.broadcast_to(g, a.data.shape).copy())
        else:
            _accum(a, np.broadcast_to(np.expand_dims(g, axis), a.data.shape).copy())

    out._backward = back
    return out


def tmean(a, axis=None) -> Tensor:
    a = _lift(a)
    n = a.data.size if axis is None else a.data.shape[axis]
    return mul(tsum(a, axis=axis), 1.0 / n)


def minimum(a, b) -> Tensor:
    """Elementwise min; ties route the gradient to the first argument."""
    a, b = _lift(a), _lift(b)
    take_a = a.data <= b.data
    out = Tensor(np.where(take_a, a.data, b.data), (a, b))

    def back(g):
        _accum(a, _unbroadcast(g * take_a, a.data.shape))
        _accum(b, _unbroadcast(g * ~take_a, b.data.shape))

    out._backward = back
    return out


def clip(a, lo: float, hi: float) -> Tensor:
    a = _lift(a)
    inside = (a.data >= lo) & (a.data <= hi)
    out = Tensor(np.clip(a.data, lo, hi), (a,))
    out._backward = lambda g: _accum(a, g * inside)
    return out


def max_rows(a) -> Tensor:
    """Column-wise max of a 2D tensor; gradient flows to the first argmax row."""
    a = _lift(a)
    if a.data.ndim != 2:
        raise ShapeError(f"max_rows expects 2D input, got {a.data.shape}")
    idx = a.data.argmax(axis=0)
    out = Tensor(a.data[idx, np.arange(a.data.shape[1])], (a,))

    def back(g):
        full = np.zeros_like(a.data)
        full[idx, np.arange(a.data.shape[1])] = g
        _accum(a, full)

    out._backward = back
    return out


def concat_cols(parts: list) -> Tensor:
    parts = [_lift(p) for p in parts]
    widths = [p.data.shape[1] for p in parts]
    out = Tensor(np.concatenate([p.data for p in parts], axis=1), tuple(parts))

    def back(g):
        start = 0
        for p, w in zip(parts, widths):
            _accum(p, g[:, start:start + w])
            start += w

    out._backward = back
    return out


def slice_cols(a, start: int, stop: int) -> Tensor:
    a = _lift(a)
    out = Tensor(a.data[:, start:stop], (a,))

    def back(g):
        full = np.zeros_like(a.data)
        full[:, start:stop] = g
        _accum(a, full)

    out._backward = back
    return out


def stack_rows(rows: list) -> Tensor:
    """Stack 1D tensors into a 2D tensor; rows may repeat the same node."""
    rows = [_lift(r) for r in rows]
    out = Tensor(np.stack([r.data for r in rows], axis=0), tuple(rows))

    def back(g):
        for i, r in enumerate(rows):
            _accum(r, g[i])

    out._backward = back
    return out


_ACT = {"tanh": tanh, "relu": relu, "identity": lambda t: t}
_ACT_NP = {
    "tanh": np.tanh,
    "relu": lambda x: np.maximum(x, 0.0),
    "identity": lambda x: x,
}


# ---------------------------------------------------------------------------
# Dense networks
# ---------------------------------------------------------------------------


@dataclass
class Mlp:
    """Feed-forward net: per-layer (weight, bias) with an activation tag each.

    Weights are (fan_in, fan_out); inputs are (batch, fan_in) or (fan_in,).
    """

    weights: list = field(default_factory=list)
    biases: list = field(default_factory=list)
    activations: list = field(default_factory=list)

    @classmethod
    def create(cls, sizes: list[int], rng: np.random.Generator,
               hidden: str = "tanh", output: str = "identity",
               output_scale: float = 1.0) -> "Mlp":
        """Xavier-uniform initialized MLP with the given layer sizes."""
        weights, biases, acts = [], [], []
        for i in range(len(sizes) - 1):
            fan_in, fan_out = sizes[i], sizes[i + 1]
            limit = np.sqrt(6.0 / (fan_in + fan_out))
            w = rng.uniform(-limit, limit, size=(fan_in, fan_out))
            last = i == len(sizes) - 2
            if last:
                w *= output_scale
            weights.append(w)
            biases.append(np.zeros(fan_out))
            acts.append(output if last else hidden)
        for a in acts:
            if a not in _ACT:
                raise ShapeError(f"unknown activation tag '{a}'")
        return cls(weights, biases, acts)

    @property
    def sizes(self) -> list[int]:
        return [self.weights[0].shape[0]] + [w.shape[1] for w in self.weights]

    def forward(self, x: np.ndarray) -> np.ndarray:
        """Plain numpy inference; deterministic given params and input."""
        x = np.asarray(x, dtype=np.float64)
        single = x.ndim == 1
        h = x[None, :] if single else x
        if h.shape[1] != self.weights[0].shape[0]:
            raise ShapeError(
                f"input width {h.shape[1]} != first layer fan-in {self.weights[0].shape[0]}")
        for w, b, act in zip(self.weights, self.biases, self.activations):
            h = _ACT_NP[act](h @ w + b)
        return h[0] if single else h

    def apply(self, x: Tensor, params: list[Tensor]) -> Tensor:
        """Autodiff forward pass using externally supplied parameter tensors."""
        if len(params) != 2 * len(self.weights):
            raise ShapeError("params must be [W0, b0, W1, b1, ...]")
        h = x
        for i, act in enumerate(self.activations):
            h = _ACT[act](add(matmul(h, params[2 * i]), params[2 * i + 1]))
        return h

    def param_arrays(self) -> list[np.ndarray]:
        out = []
        for w, b in zip(self.weights, self.biases):
            out.extend((w, b))
        return out

    def set_param_arrays(self, arrays: list[np.ndarray]) -> None:
        if len(arrays) != 2 * len(self.weights):
            raise ShapeError("array list length mismatch")
        for i in range(len(self.weights)):
            self.weights[i] = np.asarray(arrays[2 * i], dtype=np.float64)
            self.biases[i] = np.asarray(arrays[2 * i + 1], dtype=np.float64)


def param_tensors(arrays: list[np.ndarray]) -> list[Tensor]:
    return [Tensor(a) for a in arrays]


def gradient(loss_fn, arrays: list[np.ndarray]):
    """Evaluate `loss_fn` on tensor-wrapped params, return (loss, grads).

    `loss_fn` receives a list of Tensors aligned with `arrays` and must
    return a scalar Tensor. Raises NumericalError on a non-finite loss.
    """
    params = param_tensors(arrays)
    loss = loss_fn(params)
    val = float(loss.data)
    if not np.isfinite(val):
        raise NumericalError(f"loss is not finite: {val}")
    loss.backward()
    return val, [p.grad if p.grad is not None else np.zeros_like(p.data) for p in params]


def finite_difference_grads(loss_fn, arrays: list[np.ndarray], h: float = 1e-5):
    """Central-difference gradient oracle; `loss_fn` maps arrays -> float."""
    grads = []
    work = [a.copy() for a in arrays]
    for k, a in enumerate(work):
        g = np.zeros_like(a)
        flat = a.reshape(-1)
        gf = g.reshape(-1)
        for i in range(flat.size):
            orig = flat[i]
            flat[i] = orig + h
            fp = loss_fn(work)
            flat[i] = orig - h
            fm = loss_fn(work)
            flat[i] = orig
            gf[i] = (fp - fm) / (2.0 * h)
        grads.append(g)
    return grads


def max_relative_grad_error(analytic: list[np.ndarray], numeric: list[np.ndarray]) -> float:
    """Max-norm relative disagreement between two gradient structures."""
    num = max(float(np.max(np.abs(a - n))) for a, n in zip(analytic, numeric))
    den = max(float(np.max(np.abs(n))) for n in numeric)
    return num / (den + 1e-12)


# ---------------------------------------------------------------------------
# Adam
# ---------------------------------------------------------------------------


@dataclass
class AdamState:
    m: np.ndarray
    v: np.ndarray
    step: int = 0

    @classmethod
    def for_size(cls, n: int) -> "AdamState":
        return cls(np.zeros(n), np.zeros(n), 0)


def adam_step(params: np.ndarray, grads: np.ndarray, state: AdamState,
              lr: float, beta1: float = 0.9, beta2: float = 0.999,
              eps: float = 1e-8) -> np.ndarray:
    """One Adam update with bias correction; returns the new flat params."""
    if params.shape != grads.shape or params.shape != state.m.shape:
        raise ShapeError("adam_step shape mismatch")
    state.step += 1
    state.m = beta1 * state.m + (1.0 - beta1) * grads
    state.v = beta2 * state.v + (1.0 - beta2) * grads * grads
    m_hat = state.m / (1.0 - beta1 ** state.step)
    v_hat = state.v / (1.0 - beta2 ** state.step)
    return params - lr * m_hat / (np.sqrt(v_hat) + eps)


def pack(arrays: list[np.ndarray]) -> np.ndarray:
    return np.concatenate([a.reshape(-1) for a in arrays]) if arrays else np.zeros(0)


def unpack(flat: np.ndarray, like: list[np.ndarray]) -> list[np.ndarray]:
    out, start = [], 0
    for a in like:
        out.append(flat[start:start + a.size].reshape(a.shape).copy())
        start += a.size
    if start != flat.size:
        raise ShapeError(f"flat vector length {flat.size} != expected {start}")
    return out


# ---------------------------------------------------------------------------
# Checkpoints: versioned container of architecture descriptor + flat params
# ---------------------------------------------------------------------------

CHECKPOINT_VERSION = 1


def save_checkpoint(path, arch: dict, arrays: list[np.ndarray]) -> None:
    shapes = json.dumps([list(a.shape) for a in arrays])
    np.savez(
        path,
        version=np.int64(CHECKPOINT_VERSION),
        arch=np.frombuffer(json.dumps(arch, sort_keys=True).encode(), dtype=np.uint8),
        shapes=np.frombuffer(shapes.encode(), dtype=np.uint8),
        params=pack(arrays),
    )


def load_checkpoint(path, expect_kind: str | None = None):
    with np.load(path) as z:
        version = int(z["version"])
        if version != CHECKPOINT_VERSION:
            raise CheckpointError(
                f"{path}: checkpoint version {version} is incompatible "
                f"with supported version {CHECKPOINT_VERSION}")
        arch = json.loads(bytes(z["arch"]).decode())
        shapes = json.loads(bytes(z["shapes"]).decode())
        flat = z["params"]
    like = [np.zeros(s) for s in shapes]
    arrays = unpack(flat, like)
    if expect_kind is not None and arch.get("kind") != expect_kind:
        raise CheckpointError(
            f"{path}: checkpoint kind '{arch.get('kind')}' != expected '{expect_kind}'")
    return arch, arrays

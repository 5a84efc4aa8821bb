"""Minimal reverse-mode autodiff over dense 2-D matrices.

Every value is a :class:`Tensor` wrapping a row-major ``numpy`` array of shape
(rows, cols). Forward ops record their inputs and a backward closure; calling
``backward()`` on a scalar walks the recorded graph in reverse topological
order and accumulates gradients into the leaves. The op set is exactly what
the encoders and heads need: matmul, broadcast add/multiply, leaky-ReLU,
column concatenation, row gather, per-segment sum and softmax, and MSE.

Gradient flow is deterministic: children are kept in insertion order and
per-segment accumulations run in array order, so identical inputs on one
thread reproduce bit-identical results.
"""

from __future__ import annotations

from typing import Callable, Iterable, Optional, Sequence

import numpy as np

from .errors import DimensionMismatch, NonFiniteLoss, NonFiniteValue

LEAKY_SLOPE = 0.2


def _as2d(data) -> np.ndarray:
    a = np.asarray(data, dtype=float)
    if a.ndim == 0:
        a = a.reshape(1, 1)
    elif a.ndim == 1:
        a = a.reshape(-1, 1)
    elif a.ndim != 2:
        raise DimensionMismatch(f"expected at most 2 dimensions, got {a.ndim}")
    return a


class Tensor:
    """A 2-D matrix participating in reverse-mode gradient accumulation."""

    __slots__ = ("data", "grad", "requires_grad", "_children", "_backward")

    def __init__(self, data, requires_grad: bool = False,
                 _children: tuple["Tensor", ...] = ()):
        self.data = _as2d(data)
        if not np.isfinite(self.data).all():
            raise NonFiniteValue(-1, "tensor", "non-finite entries")
        self.grad: Optional[np.ndarray] = None
        self.requires_grad = requires_grad
        self._children = _children
        self._backward: Optional[Callable[[], None]] = None

    @property
    def rows(self) -> int:
        return self.data.shape[0]

    @property
    def cols(self) -> int:
        return self.data.shape[1]

    @property
    def shape(self) -> tuple[int, int]:
        return self.data.shape

    def item(self) -> float:
        if self.data.size != 1:
            raise DimensionMismatch("item() requires a 1x1 tensor")
        return float(self.data[0, 0])

    def _accumulate(self, g: np.ndarray) -> None:
        if self.grad is None:
            self.grad = np.zeros_like(self.data)
        self.grad += g

    def backward(self) -> None:
        """Backpropagate from this scalar through the recorded graph."""
        if self.data.size != 1:
            raise DimensionMismatch("backward() starts from a scalar loss")
        topo: list[Tensor] = []
        visited: set[int] = set()
        stack: list[tuple[Tensor, bool]] = [(self, False)]
        while stack:
            node, processed = stack.pop()
            if processed:
                topo.append(node)
                continue
            if id(node) in visited:
                continue
            visited.add(id(node))
            stack.append((node, True))
            for child in node._children:
                if id(child) not in visited:
                    stack.append((child, False))
        self.grad = np.ones_like(self.data)
        for node in reversed(topo):
            if node._backward is not None:
                node._backward()

    # -- operators ---------------------------------------------------------

    def __add__(self, other: "Tensor") -> "Tensor":
        return add(self, other)

    def __mul__(self, other: "Tensor") -> "Tensor":
        return mul(self, other)

    def __matmul__(self, other: "Tensor") -> "Tensor":
        return matmul(self, other)

    def __repr__(self) -> str:
        return f"Tensor(shape={self.data.shape}, requires_grad={self.requires_grad})"


def _unbroadcast(g: np.ndarray, shape: tuple[int, int]) -> np.ndarray:
    """Reduce a gradient back to ``shape`` after numpy broadcasting."""
    if g.shape == shape:
        return g
    out = g
    if shape[0] == 1 and out.shape[0] > 1:
        out = out.sum(axis=0, keepdims=True)
    if shape[1] == 1 and out.shape[1] > 1:
        out = out.sum(axis=1, keepdims=True)
    return out


def _make(data: np.ndarray, children: tuple[Tensor, ...]) -> Tensor:
    needs = any(c.requires_grad for c in children)
    out = Tensor.__new__(Tensor)
    out.data = data
    out.grad = None
    out.requires_grad = needs
    out._children = children if needs else ()
    out._backward = None
    if not np.isfinite(data).all():
        raise NonFiniteValue(-1, "tensor", "non-finite entries")
    return out


def constant(data) -> Tensor:
    return Tensor(data, requires_grad=False)


def matmul(a: Tensor, b: Tensor) -> Tensor:
    if a.cols != b.rows:
        raise DimensionMismatch(f"matmul {a.shape} @ {b.shape}")
    out = _make(a.data @ b.data, (a, b))

    def backward():
        if a.requires_grad:
            a._accumulate(out.grad @ b.data.T)
        if b.requires_grad:
            b._accumulate(a.data.T @ out.grad)

    out._backward = backward
    return out


def add(a: Tensor, b: Tensor) -> Tensor:
    out = _make(a.data + b.data, (a, b))

    def backward():
        if a.requires_grad:
            a._accumulate(_unbroadcast(out.grad, a.data.shape))
        if b.requires_grad:
            b._accumulate(_unbroadcast(out.grad, b.data.shape))

    out._backward = backward
    return out


def sub(a: Tensor, b: Tensor) -> Tensor:
    return add(a, scale(b, -1.0))


def mul(a: Tensor, b: Tensor) -> Tensor:
    out = _make(a.data * b.data, (a, b))

    def backward():
        if a.requires_grad:
            a._accumulate(_unbroadcast(out.grad * b.data, a.data.shape))
        if b.requires_grad:
            b._accumulate(_unbroadcast(out.grad * a.data, b.data.shape))

    out._backward = backward
    return out


def scale(a: Tensor, c) -> Tensor:
    """Multiply by a constant scalar or array (no gradient through ``c``)."""
    c = np.asarray(c, dtype=float)
    out = _make(a.data * c, (a,))

    def backward():
        if a.requires_grad:
            a._accumulate(_unbroadcast(out.grad * c, a.data.shape))

    out._backward = backward
    return out


def leaky_relu(a: Tensor, slope: float = LEAKY_SLOPE) -> Tensor:
    factor = np.where(a.data > 0, 1.0, slope)
    out = _make(a.data * factor, (a,))

    def backward():
        if a.requires_grad:
            a._accumulate(out.grad * factor)

    out._backward = backward
    return out


def concat_cols(parts: Sequence[Tensor]) -> Tensor:
    rows = parts[0].rows
    if any(p.rows != rows for p in parts):
        raise DimensionMismatch("concat_cols requires equal row counts")
    out = _make(np.concatenate([p.data for p in parts], axis=1), tuple(parts))
    offsets = np.cumsum([0] + [p.cols for p in parts])

    def backward():
        for p, lo, hi in zip(parts, offsets[:-1], offsets[1:]):
            if p.requires_grad:
                p._accumulate(out.grad[:, lo:hi])

    out._backward = backward
    return out


def gather_rows(a: Tensor, idx: np.ndarray) -> Tensor:
    idx = np.asarray(idx, dtype=int)
    out = _make(a.data[idx], (a,))

    def backward():
        if a.requires_grad:
            g = np.zeros_like(a.data)
            np.add.at(g, idx, out.grad)
            a._accumulate(g)

    out._backward = backward
    return out


def segment_sum(a: Tensor, segments: np.ndarray, n_segments: int) -> Tensor:
    """Sum rows sharing a segment id; accumulation runs in array order."""
    segments = np.asarray(segments, dtype=int)
    if len(segments) != a.rows:
        raise DimensionMismatch("one segment id per row required")
    data = np.zeros((n_segments, a.cols))
    np.add.at(data, segments, a.data)
    out = _make(data, (a,))

    def backward():
        if a.requires_grad:
            a._accumulate(out.grad[segments])

    out._backward = backward
    return out


def segment_softmax(logits: Tensor, segments: np.ndarray, n_segments: int) -> Tensor:
    """Softmax of a (m x 1) logit column within each segment.

    Rows of the output are nonnegative and sum to one per segment; the
    per-segment max is subtracted before exponentiation for stability.
    """
    if logits.cols != 1:
        raise DimensionMismatch("segment_softmax expects a column vector")
    segments = np.asarray(segments, dtype=int)
    col = logits.data[:, 0]
    seg_max = np.full(n_segments, -np.inf)
    np.maximum.at(seg_max, segments, col)
    ex = np.exp(col - seg_max[segments])
    denom = np.zeros(n_segments)
    np.add.at(denom, segments, ex)
    alpha = ex / denom[segments]
    out = _make(alpha.reshape(-1, 1), (logits,))

    def backward():
        if logits.requires_grad:
            g = out.grad[:, 0]
            weighted = np.zeros(n_segments)
            np.add.at(weighted, segments, g * alpha)
            logits._accumulate((alpha * (g - weighted[segments])).reshape(-1, 1))

    out._backward = backward
    return out


def mean_squared_error(pred: Tensor, target) -> Tensor:
    """Mean of squared elementwise differences against a constant target."""
    t = _as2d(target)
    if t.shape != pred.data.shape:
        raise DimensionMismatch(f"mse {pred.shape} vs {t.shape}")
    diff = pred.data - t
    out = _make(np.array([[float(np.mean(diff ** 2))]]), (pred,))

    def backward():
        if pred.requires_grad:
            pred._accumulate(out.grad[0, 0] * 2.0 * diff / diff.size)

    out._backward = backward
    return out


def ssum(a: Tensor) -> Tensor:
    out = _make(np.array([[float(a.data.sum())]]), (a,))

    def backward():
        if a.requires_grad:
            a._accumulate(np.full_like(a.data, out.grad[0, 0]))

    out._backward = backward
    return out


# ---------------------------------------------------------------------------
# Parameters and the optimizer
# ---------------------------------------------------------------------------

def glorot_init(rng: np.random.Generator, rows: int, cols: int) -> np.ndarray:
    limit = np.sqrt(6.0 / (rows + cols))
    return rng.uniform(-limit, limit, size=(rows, cols))


class ParamStore:
    """Named trainable matrices with per-parameter optimizer state.

    ``optimizer`` is one of ``"sgd"`` (default), ``"momentum"`` (coefficient
    0.9), or ``"adam"``. Parameters update in insertion order, which together
    with the deterministic backward pass keeps whole training runs
    bit-reproducible for a fixed seed.
    """

    MOMENTUM = 0.9
    ADAM_BETAS = (0.9, 0.999)
    ADAM_EPS = 1e-8

    def __init__(self, seed: int, optimizer: str = "sgd"):
        if optimizer not in ("sgd", "momentum", "adam"):
            raise ValueError(f"unknown optimizer {optimizer!r}")
        self.seed = seed
        self.optimizer = optimizer
        self.rng = np.random.default_rng(seed)
        self._params: dict[str, Tensor] = {}
        self._state: dict[str, dict[str, np.ndarray]] = {}
        self._step_count = 0

    def add(self, name: str, rows: int, cols: int,
            init: str = "glorot") -> Tensor:
        if name in self._params:
            raise ValueError(f"parameter {name!r} already exists")
        if init == "glorot":
            data = glorot_init(self.rng, rows, cols)
        elif init == "zeros":
            data = np.zeros((rows, cols))
        else:
            raise ValueError(f"unknown init {init!r}")
        t = Tensor(data, requires_grad=True)
        self._params[name] = t
        self._state[name] = {}
        return t

    def __getitem__(self, name: str) -> Tensor:
        return self._params[name]

    def __contains__(self, name: str) -> bool:
        return name in self._params

    def names(self) -> list[str]:
        return list(self._params)

    def zero_grads(self) -> None:
        for t in self._params.values():
            t.grad = None

    def grads_populated(self) -> bool:
        return any(t.grad is not None for t in self._params.values())

    def step(self, lr: float, weight_decay: float = 0.0) -> None:
        """p <- p - lr * (g + weight_decay * p), then zero the gradients.

        Parameters that received no gradient are left untouched.
        """
        if lr <= 0:
            raise ValueError("lr must be > 0")
        self._step_count += 1
        for name, t in self._params.items():
            if t.grad is None:
                continue
            g = t.grad + weight_decay * t.data
            state = self._state[name]
            if self.optimizer == "sgd":
                t.data = t.data - lr * g
            elif self.optimizer == "momentum":
                v = state.setdefault("v", np.zeros_like(t.data))
                v *= self.MOMENTUM
                v += g
                t.data = t.data - lr * v
            else:  # adam
                b1, b2 = self.ADAM_BETAS
                m = state.setdefault("m", np.zeros_like(t.data))
                v = state.setdefault("v", np.zeros_like(t.data))
                m *= b1
                m += (1 - b1) * g
                v *= b2
                v += (1 - b2) * g * g
                mhat = m / (1 - b1 ** self._step_count)
                vhat = v / (1 - b2 ** self._step_count)
                t.data = t.data - lr * mhat / (np.sqrt(vhat) + self.ADAM_EPS)
        self.zero_grads()

    def snapshot(self) -> dict[str, np.ndarray]:
        return {name: t.data.copy() for name, t in self._params.items()}

    def restore(self, snap: dict[str, np.ndarray]) -> None:
        for name, data in snap.items():
            self._params[name].data = data.copy()

    def to_dict(self) -> dict:
        return {
            "seed": self.seed,
            "optimizer": self.optimizer,
            "params": {
                name: {"shape": list(t.data.shape),
                       "data": [float(x) for x in t.data.ravel()]}
                for name, t in self._params.items()
            },
        }

    @staticmethod
    def from_dict(d: dict) -> "ParamStore":
        store = ParamStore(d["seed"], d.get("optimizer", "sgd"))
        for name, spec in d["params"].items():
            rows, cols = spec["shape"]
            t = store.add(name, rows, cols, init="zeros")
            t.data = np.asarray(spec["data"], dtype=float).reshape(rows, cols)
        return store


def sgd_step(params: ParamStore, lr: float, weight_decay: float = 0.0) -> None:
    params.step(lr, weight_decay)


def forward_backward(batch, params: ParamStore, loss_fn) -> float:
    """Evaluate ``loss_fn(batch, params)``, backpropagate, return the loss.

    Gradients are zeroed first and populated for every parameter reachable
    from the loss. Raises :class:`NonFiniteLoss` if the loss is NaN/inf,
    which callers should treat as a cue to reduce the learning rate.
    """
    params.zero_grads()
    try:
        loss = loss_fn(batch, params)
    except NonFiniteValue as exc:
        raise NonFiniteLoss(str(exc)) from exc
    value = loss.item()
    if not np.isfinite(value):
        raise NonFiniteLoss(f"loss evaluated to {value}")
    loss.backward()
    return value


# ---------------------------------------------------------------------------
# Finite-difference verification
# ---------------------------------------------------------------------------

def finite_difference_grads(loss_of_params: Callable[[], float],
                            params: ParamStore,
                            names: Optional[Iterable[str]] = None,
                            h: float = 1e-5) -> dict[str, np.ndarray]:
    """Central finite differences of a scalar function w.r.t. stored params."""
    grads = {}
    for name in (names if names is not None else params.names()):
        t = params[name]
        g = np.zeros_like(t.data)
        it = np.nditer(t.data, flags=["multi_index"])
        while not it.finished:
            ix = it.multi_index
            orig = t.data[ix]
            t.data[ix] = orig + h
            up = loss_of_params()
            t.data[ix] = orig - h
            down = loss_of_params()
            t.data[ix] = orig
            g[ix] = (up - down) / (2.0 * h)
            it.iternext()
        grads[name] = g
    return grads


def max_relative_grad_error(analytic: dict[str, np.ndarray],
                            numeric: dict[str, np.ndarray],
                            floor: float = 1e-6) -> float:
    """Worst-case |analytic - numeric| / max(|analytic|, |numeric|, floor)."""
    worst = 0.0
    for name, num in numeric.items():
        ana = analytic.get(name)
        if ana is None:
            ana = np.zeros_like(num)
        denom = np.maximum(np.maximum(np.abs(ana), np.abs(num)), floor)
        worst = max(worst, float(np.max(np.abs(ana - num) / denom)))
    return worst

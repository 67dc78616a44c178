"""Small reverse-mode differentiation kernel.

Only the operations the resolver needs are provided: affine maps, a fused
LSTM cell, ReLU/tanh, concatenation, column gathers for embeddings, means,
softmax and cross-entropy.  Values are float64 numpy arrays wrapped in
:class:`Tensor`.  Operations are recorded on the active :class:`GradientTape`
only when at least one input requires a gradient, so inference runs without
any bookkeeping.

Typical use::

    with GradientTape() as tape:
        loss = cross_entropy(softmax(scores), gold)
    grads = backward(loss, tape, params)
    sgd_step(params, grads, lr=0.01)
"""

from __future__ import annotations

import contextvars
import math
from dataclasses import dataclass, field
from typing import Callable, Iterable, Sequence

import numpy as np

DTYPE = np.float64
LOG_EPS = 1e-12


class ShapeError(ValueError):
    """Raised when an operand does not have the shape an operation expects."""


class TapeError(RuntimeError):
    pass


class Tensor:
    """A float64 array plus the bookkeeping needed for backpropagation."""

    __slots__ = ("data", "requires_grad", "name", "grad")

    def __init__(self, data, requires_grad: bool = False, name: str | None = None):
        self.data = np.asarray(data, dtype=DTYPE)
        self.requires_grad = requires_grad
        self.name = name
        self.grad: np.ndarray | None = None

    @property
    def shape(self) -> tuple[int, ...]:
        return self.data.shape

    def __len__(self) -> int:
        return len(self.data)

    def __repr__(self) -> str:
        tag = f" {self.name!r}" if self.name else ""
        return f"Tensor{tag}(shape={self.shape})"

    def numpy(self) -> np.ndarray:
        return self.data


def parameter(data, name: str) -> Tensor:
    return Tensor(data, requires_grad=True, name=name)


def zeros(n: int) -> Tensor:
    return Tensor(np.zeros(n, dtype=DTYPE))


# --------------------------------------------------------------------------
# Tape


@dataclass
class _Record:
    out: Tensor
    inputs: tuple[Tensor, ...]
    backward: Callable[[np.ndarray], Sequence[np.ndarray | None]]


@dataclass
class GradientTape:
    """Records operations executed while the tape is active.

    Use as a context manager.  Tapes nest; the innermost one records.
    """

    records: list[_Record] = field(default_factory=list)
    _token: contextvars.Token | None = field(default=None, repr=False)

    def __enter__(self) -> "GradientTape":
        self._token = _ACTIVE.set(self)
        return self

    def __exit__(self, *exc) -> None:
        _ACTIVE.reset(self._token)
        self._token = None

    def __len__(self) -> int:
        return len(self.records)


_ACTIVE: contextvars.ContextVar[GradientTape | None] = contextvars.ContextVar(
    "zpsnn_active_tape", default=None
)


def _result(value: np.ndarray, inputs: tuple[Tensor, ...], grad_fn) -> Tensor:
    tape = _ACTIVE.get()
    needs = any(t.requires_grad for t in inputs)
    out = Tensor(value, requires_grad=needs)
    if needs and tape is not None:
        tape.records.append(_Record(out, inputs, grad_fn))
    return out


def _check_vec(t: Tensor, n: int, what: str) -> None:
    if t.data.shape != (n,):
        raise ShapeError(f"{what}: expected shape ({n},), got {t.data.shape}")


# --------------------------------------------------------------------------
# Primitive operations


class _Outer:
    """Deferred ``outer(a, b)`` weight gradient; summed with one GEMM per leaf."""

    __slots__ = ("a", "b")

    def __init__(self, a: np.ndarray, b: np.ndarray):
        self.a, self.b = a, b

    def dense(self) -> np.ndarray:
        return np.outer(self.a, self.b)


class _Column:
    """Deferred gradient touching one column of a matrix."""

    __slots__ = ("j", "g", "shape")

    def __init__(self, j: int, g: np.ndarray, shape: tuple[int, ...]):
        self.j, self.g, self.shape = j, g, shape

    def dense(self) -> np.ndarray:
        full = np.zeros(self.shape, dtype=DTYPE)
        full[:, self.j] = self.g
        return full


def affine(W: Tensor, x: Tensor, b: Tensor | None = None) -> Tensor:
    """``W @ x + b`` for a matrix ``W`` and vector ``x``."""
    if W.data.ndim != 2:
        raise ShapeError(f"affine: weight {W.name or ''} must be 2-d, got {W.data.shape}")
    m, n = W.data.shape
    _check_vec(x, n, f"affine input for {W.name or 'weight'}")
    out = W.data @ x.data
    if b is not None:
        _check_vec(b, m, f"affine bias {b.name or ''}")
        out = out + b.data
        inputs = (W, x, b)
    else:
        inputs = (W, x)
    xv, Wv = x.data, W.data

    def grad_fn(g):
        gW = _Outer(g, xv) if W.requires_grad else None
        gx = Wv.T @ g if x.requires_grad else None
        return (gW, gx, g) if b is not None else (gW, gx)

    return _result(out, inputs, grad_fn)


def add(a: Tensor, b: Tensor) -> Tensor:
    if a.shape != b.shape:
        raise ShapeError(f"add: shapes {a.shape} and {b.shape} differ")
    return _result(a.data + b.data, (a, b), lambda g: (g, g))


def relu(x: Tensor) -> Tensor:
    mask = x.data > 0
    return _result(np.where(mask, x.data, 0.0), (x,), lambda g: (g * mask,))


def tanh(x: Tensor) -> Tensor:
    y = np.tanh(x.data)
    return _result(y, (x,), lambda g: (g * (1.0 - y * y),))


def concat(parts: Sequence[Tensor]) -> Tensor:
    if not parts:
        raise ShapeError("concat: nothing to concatenate")
    sizes = [p.data.shape[0] for p in parts]
    for p in parts:
        if p.data.ndim != 1:
            raise ShapeError(f"concat: expected vectors, got shape {p.data.shape}")
    bounds = np.cumsum([0] + sizes)

    def grad_fn(g):
        return [g[bounds[i]:bounds[i + 1]] for i in range(len(parts))]

    return _result(np.concatenate([p.data for p in parts]), tuple(parts), grad_fn)


def stack_scalars(parts: Sequence[Tensor]) -> Tensor:
    """Collect 0-d or length-1 tensors into one vector."""
    vals = np.array([float(p.data.reshape(-1)[0]) for p in parts], dtype=DTYPE)
    shapes = [p.data.shape for p in parts]

    def grad_fn(g):
        return [np.full(s, g[i]) for i, s in enumerate(shapes)]

    return _result(vals, tuple(parts), grad_fn)


def slice_(x: Tensor, start: int, stop: int) -> Tensor:
    n = x.data.shape[0]

    def grad_fn(g):
        full = np.zeros(n, dtype=DTYPE)
        full[start:stop] = g
        return (full,)

    return _result(x.data[start:stop].copy(), (x,), grad_fn)


def gather_column(E: Tensor, j: int) -> Tensor:
    """Column ``j`` of a ``d x |V|`` matrix."""
    shape = E.data.shape
    return _result(E.data[:, j].copy(), (E,), lambda g: (_Column(j, g, shape),))


def mean(parts: Sequence[Tensor]) -> Tensor:
    if not parts:
        raise ShapeError("mean: empty input")
    n = len(parts)
    shape = parts[0].shape
    for p in parts:
        if p.shape != shape:
            raise ShapeError(f"mean: shapes {shape} and {p.shape} differ")
    total = np.sum([p.data for p in parts], axis=0) / n
    return _result(total, tuple(parts), lambda g: [g / n] * n)


def _sigmoid(z: np.ndarray) -> np.ndarray:
    # split by sign so exp never overflows
    out = np.empty_like(z)
    pos = z >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-z[pos]))
    ez = np.exp(z[~pos])
    out[~pos] = ez / (1.0 + ez)
    return out


def softmax(s: Tensor) -> Tensor:
    if s.data.ndim != 1 or s.data.shape[0] == 0:
        raise ValueError("empty candidate set")
    z = s.data - s.data.max()
    e = np.exp(z)
    p = e / e.sum()

    def grad_fn(g):
        return (p * (g - np.dot(p, g)),)

    return _result(p, (s,), grad_fn)


def cross_entropy(probs: Tensor, gold) -> Tensor:
    """``-sum_i gold_i * log(probs_i)``; several gold entries may be 1."""
    gold = np.asarray(gold, dtype=DTYPE)
    if gold.shape != probs.data.shape:
        raise ShapeError(f"cross_entropy: gold shape {gold.shape} vs probs {probs.data.shape}")
    if not np.all((gold == 0) | (gold == 1)):
        raise ValueError("gold indicators must be 0 or 1")
    p = probs.data
    floored = np.maximum(p, LOG_EPS)
    loss = -float(np.sum(gold * np.log(floored)))

    def grad_fn(g):
        # the floor is flat below LOG_EPS
        return (np.where(p > LOG_EPS, -gold / floored, 0.0) * g,)

    return _result(np.array(loss), (probs,), grad_fn)


# --------------------------------------------------------------------------
# Layers


@dataclass
class LSTMParams:
    """Weights for one LSTM direction.

    Gates are stacked row-wise in the order input, forget, output, candidate:
    ``W_x`` is ``(4H, input_dim)``, ``W_h`` is ``(4H, H)`` and ``b`` is ``(4H,)``.
    """

    W_x: Tensor
    W_h: Tensor
    b: Tensor

    @property
    def input_dim(self) -> int:
        return self.W_x.shape[1]

    @property
    def hidden_dim(self) -> int:
        return self.W_h.shape[1]

    def tensors(self) -> list[Tensor]:
        return [self.W_x, self.W_h, self.b]

    @classmethod
    def create(cls, input_dim: int, hidden_dim: int, rng: np.random.Generator,
               init_range: float, prefix: str = "lstm") -> "LSTMParams":
        H = hidden_dim
        u = lambda *shape: rng.uniform(-init_range, init_range, size=shape)
        p = cls(parameter(u(4 * H, input_dim), f"{prefix}.W_x"),
                parameter(u(4 * H, H), f"{prefix}.W_h"),
                parameter(u(4 * H), f"{prefix}.b"))
        p.validate()
        return p

    def validate(self) -> None:
        H = self.W_h.shape[1] if self.W_h.data.ndim == 2 else -1
        if self.W_h.shape != (4 * H, H):
            raise ShapeError(f"{self.W_h.name}: expected (4H, H), got {self.W_h.shape}")
        if self.W_x.data.ndim != 2 or self.W_x.shape[0] != 4 * H:
            raise ShapeError(f"{self.W_x.name}: expected (4*{H}, input_dim), got {self.W_x.shape}")
        if self.b.shape != (4 * H,):
            raise ShapeError(f"{self.b.name}: expected ({4 * H},), got {self.b.shape}")


def _lstm_cell(x: Tensor, h_prev: Tensor, c_prev: Tensor, p: LSTMParams) -> Tensor:
    H = p.hidden_dim
    Wx, Wh = p.W_x.data, p.W_h.data
    xv, hv, cv = x.data, h_prev.data, c_prev.data
    z = Wx @ xv + Wh @ hv + p.b.data
    i = _sigmoid(z[:H])
    f = _sigmoid(z[H:2 * H])
    o = _sigmoid(z[2 * H:3 * H])
    g = np.tanh(z[3 * H:])
    c = f * cv + i * g
    tc = np.tanh(c)
    h = o * tc

    def grad_fn(grad):
        dh, dc = grad[:H], grad[H:]
        dc = dc + dh * o * (1.0 - tc * tc)
        dz = np.concatenate([
            dc * g * i * (1.0 - i),
            dc * cv * f * (1.0 - f),
            dh * tc * o * (1.0 - o),
            dc * i * (1.0 - g * g),
        ])
        return (
            Wx.T @ dz if x.requires_grad else None,
            Wh.T @ dz if h_prev.requires_grad else None,
            dc * f,
            _Outer(dz, xv) if p.W_x.requires_grad else None,
            _Outer(dz, hv) if p.W_h.requires_grad else None,
            dz,
        )

    return _result(np.concatenate([h, c]), (x, h_prev, c_prev, p.W_x, p.W_h, p.b), grad_fn)


def lstm_step(x: Tensor, h_prev: Tensor, c_prev: Tensor, p: LSTMParams) -> tuple[Tensor, Tensor]:
    """One step of a standard LSTM (no peepholes).

    i, f, o = sigmoid(...); g = tanh(...); c = f*c_prev + i*g; h = o*tanh(c).
    """
    H = p.hidden_dim
    _check_vec(x, p.input_dim, f"lstm_step input x (for {p.W_x.name})")
    _check_vec(h_prev, H, "lstm_step h_prev")
    _check_vec(c_prev, H, "lstm_step c_prev")
    hc = _lstm_cell(x, h_prev, c_prev, p)
    return slice_(hc, 0, H), slice_(hc, H, 2 * H)


def lstm_run(seq: Sequence[Tensor], p: LSTMParams, reversed: bool = False
             ) -> tuple[list[Tensor], Tensor]:
    """Run ``p`` over ``seq`` from a zero state.

    Hidden states are returned in consumption order, so ``reversed=True`` on
    ``[a, b, c]`` gives exactly what ``reversed=False`` gives on ``[c, b, a]``.
    An empty sequence yields the zero vector as last hidden state.
    """
    H = p.hidden_dim
    h, c = zeros(H), zeros(H)
    order = list(seq)[::-1] if reversed else list(seq)
    hiddens = []
    for x in order:
        h, c = lstm_step(x, h, c, p)
        hiddens.append(h)
    return hiddens, h


@dataclass
class MLPParams:
    """A stack of affine layers, each followed by ReLU."""

    weights: list[Tensor]
    biases: list[Tensor]

    def tensors(self) -> list[Tensor]:
        out = []
        for W, b in zip(self.weights, self.biases):
            out += [W, b]
        return out

    @property
    def input_dim(self) -> int:
        return self.weights[0].shape[1]

    @property
    def output_dim(self) -> int:
        return self.weights[-1].shape[0]

    @classmethod
    def create(cls, input_dim: int, widths: Sequence[int], rng: np.random.Generator,
               init_range: float, prefix: str = "mlp") -> "MLPParams":
        Ws, bs = [], []
        n_in = input_dim
        for layer, n_out in enumerate(widths, start=1):
            Ws.append(parameter(rng.uniform(-init_range, init_range, (n_out, n_in)),
                                f"{prefix}.W{layer}"))
            bs.append(parameter(rng.uniform(-init_range, init_range, n_out), f"{prefix}.b{layer}"))
            n_in = n_out
        p = cls(Ws, bs)
        p.validate()
        return p

    def validate(self) -> None:
        for k, (W, b) in enumerate(zip(self.weights, self.biases)):
            if b.shape != (W.shape[0],):
                raise ShapeError(f"{b.name}: expected ({W.shape[0]},), got {b.shape}")
            if k and W.shape[1] != self.weights[k - 1].shape[0]:
                raise ShapeError(f"{W.name}: input dim {W.shape[1]} does not match previous "
                                 f"layer output {self.weights[k - 1].shape[0]}")


def mlp_forward(x: Tensor, p: MLPParams) -> Tensor:
    h = x
    for W, b in zip(p.weights, p.biases):
        h = relu(affine(W, h, b))
    return h


# --------------------------------------------------------------------------
# Backward pass and optimisation


def backward(loss: Tensor, tape: GradientTape, params: Iterable[Tensor] = ()
             ) -> dict[Tensor, np.ndarray]:
    """Backpropagate from a scalar ``loss`` recorded on ``tape``.

    Returns gradients keyed by leaf tensor.  Every tensor in ``params`` gets an
    entry, zero when the loss does not depend on it.  ``.grad`` is set on each
    returned leaf.
    """
    if not tape.records:
        raise TapeError("backward called before any forward pass was recorded")
    if loss.data.size != 1:
        raise ShapeError(f"backward: loss must be scalar, got shape {loss.shape}")
    produced = {id(r.out) for r in tape.records}
    if id(loss) not in produced:
        raise TapeError("loss was not recorded on this tape")

    adj: dict[int, np.ndarray] = {id(loss): np.ones_like(loss.data)}
    lazy: dict[int, list] = {}
    leaves: dict[int, Tensor] = {}
    for rec in reversed(tape.records):
        g = adj.pop(id(rec.out), None)
        if g is None:
            continue
        for t, gt in zip(rec.inputs, rec.backward(g)):
            if gt is None or not t.requires_grad:
                continue
            key = id(t)
            if key not in produced:
                leaves[key] = t
                if isinstance(gt, (_Outer, _Column)):
                    lazy.setdefault(key, []).append(gt)
                    continue
            elif isinstance(gt, (_Outer, _Column)):
                gt = gt.dense()
            if key in adj:
                adj[key] = adj[key] + gt
            else:
                adj[key] = gt

    grads: dict[Tensor, np.ndarray] = {}
    for p in params:
        grads[p] = np.zeros_like(p.data)
    for key, t in leaves.items():
        g = grads.get(t)
        if g is None:
            g = np.zeros_like(t.data)
        if key in adj:
            g = g + adj[key].reshape(t.data.shape)
        parts = lazy.get(key, ())
        outers = [c for c in parts if isinstance(c, _Outer)]
        if outers:
            g = g + np.stack([c.a for c in outers]).T @ np.stack([c.b for c in outers])
        for c in parts:
            if isinstance(c, _Column):
                g[:, c.j] += c.g
        grads[t] = g
    for t, g in grads.items():
        t.grad = g
    return grads


def sgd_step(params: Iterable[Tensor], grads: dict[Tensor, np.ndarray], lr: float) -> None:
    """In-place ``p <- p - lr * g`` for every parameter with a gradient."""
    for p in params:
        g = grads.get(p)
        if g is not None and lr:
            p.data -= lr * g


@dataclass
class GradCheckResult:
    max_rel_error: float
    worst_param: str | None
    worst_index: tuple[int, ...] | None
    n_checked: int


def grad_check_detailed(loss_fn: Callable[[], Tensor], params: Sequence[Tensor],
                        eps: float = 1e-5, samples_per_param: int | None = 20,
                        rng: np.random.Generator | None = None,
                        grad_hook: Callable[[dict], None] | None = None) -> GradCheckResult:
    """Compare backprop gradients against central finite differences.

    ``loss_fn`` must rebuild the forward computation from the current parameter
    values each call.  Entries are sampled per tensor (all entries when
    ``samples_per_param`` is None).  ``grad_hook`` may edit the analytic
    gradients in place before comparison; tests use it as a negative control.
    """
    rng = rng or np.random.default_rng(0)
    with GradientTape() as tape:
        loss = loss_fn()
    if not np.isfinite(loss.data).all():
        raise FloatingPointError("grad_check: loss is not finite")
    grads = backward(loss, tape, params)
    if grad_hook is not None:
        grad_hook(grads)

    def value() -> float:
        v = float(loss_fn().data)
        if not math.isfinite(v):
            raise FloatingPointError("grad_check: loss is not finite")
        return v

    worst = (0.0, None, None)
    n = 0
    for p in params:
        size = p.data.size
        if samples_per_param is None or samples_per_param >= size:
            flat_idx = np.arange(size)
        else:
            flat_idx = rng.choice(size, samples_per_param, replace=False)
        flat = p.data.reshape(-1)
        gflat = grads[p].reshape(-1)
        for k in flat_idx:
            orig = flat[k]
            flat[k] = orig + eps
            up = value()
            flat[k] = orig - eps
            down = value()
            flat[k] = orig
            numeric = (up - down) / (2 * eps)
            analytic = gflat[k]
            rel = abs(analytic - numeric) / max(abs(analytic), abs(numeric), 1e-8)
            n += 1
            if rel > worst[0]:
                worst = (rel, p.name, tuple(int(i) for i in np.unravel_index(k, p.data.shape)))
    return GradCheckResult(worst[0], worst[1], worst[2], n)


def grad_check(loss_fn: Callable[[], Tensor], params: Sequence[Tensor], eps: float = 1e-5,
               **kwargs) -> float:
    """Max relative error between analytic and central-difference gradients."""
    return grad_check_detailed(loss_fn, params, eps, **kwargs).max_rel_error

"""Minimal dense-tensor engine with reverse-mode differentiation.

Every model equation is expressed in these ops, and every op's gradient
is checkable against central finite differences via :func:`grad_check`.
Tensors are immutable float64 arrays; a Tape is explicit, owned by one
forward pass, and replayed once in reverse by ``backward``.
"""

from __future__ import annotations

from typing import Callable, Sequence

import numpy as np


class ShapeError(ValueError):
    """Raised when operand shapes are incompatible."""


class Tensor:
    """Dense float64 array, optionally attached to a differentiation tape."""

    __slots__ = ("data", "tape", "node")

    def __init__(self, data, tape: "Tape | None" = None, node: int | None = None):
        arr = np.asarray(data, dtype=np.float64)
        arr.setflags(write=False)
        self.data = arr
        self.tape = tape
        self.node = node

    @property
    def shape(self):
        return self.data.shape

    def __repr__(self):
        return f"Tensor(shape={self.data.shape}, tracked={self.node is not None})"


class Tape:
    """Ordered record of operations; inputs always precede their consumers."""

    def __init__(self):
        # each record: (node_id, parent_node_ids, backward_fn)
        # backward_fn(upstream) -> list of parent gradients (same order)
        self._records: list[tuple[int, tuple[int, ...], Callable]] = []
        self._next_id = 0

    def leaf(self, data) -> Tensor:
        """Register a differentiable input (parameter or feed)."""
        t = Tensor(data, tape=self, node=self._next_id)
        self._next_id += 1
        return t

    def _emit(self, data, parents: Sequence[Tensor], backward: Callable) -> Tensor:
        out = Tensor(data, tape=self, node=self._next_id)
        self._next_id += 1
        self._records.append((out.node, tuple(p.node for p in parents), backward))
        return out

    def backward(self, loss: Tensor, seed: float = 1.0) -> dict[int, np.ndarray]:
        """Accumulate gradients of ``loss`` w.r.t. every node, visiting each
        recorded op exactly once in reverse order."""
        if loss.tape is not self:
            raise ValueError("loss tensor does not belong to this tape")
        grads: dict[int, np.ndarray] = {loss.node: np.full(loss.shape, seed)}
        for node_id, parents, backward_fn in reversed(self._records):
            g = grads.get(node_id)
            if g is None:
                continue
            for pid, pg in zip(parents, backward_fn(g)):
                if pg is None or pid is None:  # untracked constant operand
                    continue
                if pid in grads:
                    grads[pid] = grads[pid] + pg
                else:
                    grads[pid] = pg
        return grads

    def grad(self, grads: dict[int, np.ndarray], t: Tensor) -> np.ndarray:
        """Gradient for ``t`` from a ``backward`` result (zeros if unreached)."""
        return grads.get(t.node, np.zeros(t.shape))


def _resolve_tape(*tensors: Tensor) -> Tape | None:
    tape = None
    for t in tensors:
        if t.tape is not None:
            if tape is not None and t.tape is not tape:
                raise ValueError("operands belong to different tapes")
            tape = t.tape
    return tape


def _make(data, parents: Sequence[Tensor], backward: Callable) -> Tensor:
    tape = _resolve_tape(*parents)
    if tape is None:
        return Tensor(data)
    return tape._emit(data, parents, backward)


def constant(data) -> Tensor:
    return Tensor(data)


# ---------------------------------------------------------------------------
# binary ops

def matmul(a: Tensor, b: Tensor) -> Tensor:
    if a.data.ndim != 2 or b.data.ndim != 2 or a.shape[1] != b.shape[0]:
        raise ShapeError(f"matmul: incompatible shapes {a.shape} x {b.shape}")
    return _make(
        a.data @ b.data,
        [a, b],
        lambda g: [g @ b.data.T, a.data.T @ g],
    )


def add(a: Tensor, b: Tensor) -> Tensor:
    if a.shape != b.shape:
        raise ShapeError(f"add: shape mismatch {a.shape} vs {b.shape}")
    return _make(a.data + b.data, [a, b], lambda g: [g, g])


def mul(a: Tensor, b: Tensor) -> Tensor:
    if a.shape != b.shape:
        raise ShapeError(f"mul: shape mismatch {a.shape} vs {b.shape}")
    return _make(a.data * b.data, [a, b], lambda g: [g * b.data, g * a.data])


def add_rows(a: Tensor, v: Tensor) -> Tensor:
    """Add a 1xN row vector to every row of an MxN matrix."""
    if a.data.ndim != 2 or v.shape != (1, a.shape[1]):
        raise ShapeError(f"add_rows: shape mismatch {a.shape} vs {v.shape}")
    return _make(a.data + v.data, [a, v], lambda g: [g, g.sum(axis=0, keepdims=True)])


def mul_rows(a: Tensor, v: Tensor) -> Tensor:
    """Multiply every row of an MxN matrix by a 1xN row vector."""
    if a.data.ndim != 2 or v.shape != (1, a.shape[1]):
        raise ShapeError(f"mul_rows: shape mismatch {a.shape} vs {v.shape}")
    return _make(
        a.data * v.data,
        [a, v],
        lambda g: [g * v.data, (g * a.data).sum(axis=0, keepdims=True)],
    )


def concat_cols(a: Tensor, b: Tensor) -> Tensor:
    if a.data.ndim != 2 or b.data.ndim != 2 or a.shape[0] != b.shape[0]:
        raise ShapeError(f"concat_cols: row mismatch {a.shape} vs {b.shape}")
    p = a.shape[1]
    return _make(
        np.concatenate([a.data, b.data], axis=1),
        [a, b],
        lambda g: [g[:, :p], g[:, p:]],
    )


def concat_rows(tensors: Sequence[Tensor]) -> Tensor:
    """Stack matrices vertically; gradient splits back by row range."""
    if len(tensors) == 0:
        raise ValueError("concat_rows: empty tensor list")
    width = tensors[0].shape[1]
    for t in tensors:
        if t.data.ndim != 2 or t.shape[1] != width:
            raise ShapeError(f"concat_rows: column mismatch {t.shape} vs width {width}")
    offsets = np.cumsum([0] + [t.shape[0] for t in tensors])

    def backward(g):
        return [g[offsets[i]:offsets[i + 1]] for i in range(len(tensors))]

    return _make(np.concatenate([t.data for t in tensors], axis=0), list(tensors), backward)


# ---------------------------------------------------------------------------
# unary ops

def relu(a: Tensor) -> Tensor:
    # subgradient at 0 is 0
    mask = a.data > 0
    return _make(np.where(mask, a.data, 0.0), [a], lambda g: [g * mask])


def sigmoid(a: Tensor) -> Tensor:
    s = 1.0 / (1.0 + np.exp(-a.data))
    return _make(s, [a], lambda g: [g * s * (1.0 - s)])


def tanh(a: Tensor) -> Tensor:
    t = np.tanh(a.data)
    return _make(t, [a], lambda g: [g * (1.0 - t * t)])


def scale(a: Tensor, k: float) -> Tensor:
    return _make(a.data * k, [a], lambda g: [g * k])


def transpose(a: Tensor) -> Tensor:
    if a.data.ndim != 2:
        raise ShapeError(f"transpose: expected matrix, got {a.shape}")
    return _make(a.data.T.copy(), [a], lambda g: [g.T])


def slice_cols(a: Tensor, start: int, stop: int) -> Tensor:
    """Column range of a matrix; gradient zero-pads back to full width."""
    if a.data.ndim != 2 or not 0 <= start < stop <= a.shape[1]:
        raise ShapeError(f"slice_cols: bad range [{start}, {stop}) for shape {a.shape}")

    def backward(g):
        full = np.zeros(a.shape)
        full[:, start:stop] = g
        return [full]

    return _make(a.data[:, start:stop].copy(), [a], backward)


def softmax_rows(a: Tensor) -> Tensor:
    """Per-row softmax with max-subtraction for stability."""
    if a.data.ndim != 2:
        raise ShapeError(f"softmax_rows: expected matrix, got {a.shape}")
    z = a.data - a.data.max(axis=1, keepdims=True)
    e = np.exp(z)
    s = e / e.sum(axis=1, keepdims=True)

    def backward(g):
        # d/dx softmax = s * (g - sum(g*s))
        dot = (g * s).sum(axis=1, keepdims=True)
        return [s * (g - dot)]

    return _make(s, [a], backward)


def gather_rows(table: Tensor, indices: Sequence[int]) -> Tensor:
    """Select rows of a matrix; gradient scatters back with accumulation."""
    idx = np.asarray(indices, dtype=np.intp)
    if table.data.ndim != 2:
        raise ShapeError(f"gather_rows: expected matrix, got {table.shape}")
    if idx.size == 0:
        raise ValueError("gather_rows: empty index list")

    def backward(g):
        gt = np.zeros(table.shape)
        np.add.at(gt, idx, g)
        return [gt]

    return _make(table.data[idx], [table], backward)


# ---------------------------------------------------------------------------
# reductions

def sum_all(a: Tensor) -> Tensor:
    return _make(
        np.array([[a.data.sum()]]), [a], lambda g: [np.full(a.shape, g[0, 0])]
    )


def mean_all(a: Tensor) -> Tensor:
    n = a.data.size
    return _make(
        np.array([[a.data.mean()]]), [a], lambda g: [np.full(a.shape, g[0, 0] / n)]
    )


def _check_list(tensors: Sequence[Tensor], op: str) -> None:
    if len(tensors) == 0:
        raise ValueError(f"{op}: empty tensor list")
    shape = tensors[0].shape
    for t in tensors[1:]:
        if t.shape != shape:
            raise ShapeError(f"{op}: shape mismatch {shape} vs {t.shape}")


def sum_over_list(tensors: Sequence[Tensor]) -> Tensor:
    _check_list(tensors, "sum_over_list")
    out = tensors[0]
    for t in tensors[1:]:
        out = add(out, t)
    return out


def mean_over_list(tensors: Sequence[Tensor]) -> Tensor:
    _check_list(tensors, "mean_over_list")
    return scale(sum_over_list(tensors), 1.0 / len(tensors))


def max_over_list(tensors: Sequence[Tensor]) -> Tensor:
    """Elementwise max over same-shape tensors; ties route the gradient to
    the first maximizer."""
    _check_list(tensors, "max_over_list")
    stacked = np.stack([t.data for t in tensors])
    winner = np.argmax(stacked, axis=0)  # lowest index on ties

    def backward(g):
        return [g * (winner == i) for i in range(len(tensors))]

    return _make(stacked.max(axis=0), list(tensors), backward)


# ---------------------------------------------------------------------------
# loss

def cross_entropy_with_logits(logits: Tensor, target_index: int) -> Tensor:
    """-log softmax(logits)[target] for a 1xN logit row, stably computed."""
    if logits.data.ndim != 2 or logits.shape[0] != 1:
        raise ShapeError(f"cross_entropy: expected 1xN logits, got {logits.shape}")
    n = logits.shape[1]
    if not 0 <= target_index < n:
        raise ValueError(f"cross_entropy: target index {target_index} out of range [0, {n})")
    z = logits.data - logits.data.max()
    log_norm = np.log(np.exp(z).sum())
    loss = log_norm - z[0, target_index]
    probs = np.exp(z - log_norm)

    def backward(g):
        d = probs.copy()
        d[0, target_index] -= 1.0
        return [g[0, 0] * d]

    return _make(np.array([[loss]]), [logits], backward)


# ---------------------------------------------------------------------------
# gradient checking

def grad_check(
    f: Callable[[Tensor], Tensor], x: np.ndarray, h: float = 1e-5
) -> float:
    """Max relative error between the tape gradient of scalar-valued ``f``
    and central finite differences, per coordinate.

    Relative error uses denominator max(|analytic|, |numeric|, 1e-8).
    """
    x = np.asarray(x, dtype=np.float64)
    tape = Tape()
    xt = tape.leaf(x)
    y = f(xt)
    if y.data.size != 1:
        raise ValueError("grad_check: f must be scalar-valued")
    analytic = tape.grad(tape.backward(y), xt)

    worst = 0.0
    flat = x.ravel()
    for i in range(flat.size):
        bumped = flat.copy()
        bumped[i] += h
        fp = f(Tensor(bumped.reshape(x.shape))).data.item()
        bumped[i] -= 2 * h
        fm = f(Tensor(bumped.reshape(x.shape))).data.item()
        numeric = (fp - fm) / (2 * h)
        a = analytic.ravel()[i]
        err = abs(a - numeric) / max(abs(a), abs(numeric), 1e-8)
        worst = max(worst, err)
    return worst


def directional_grad_check(
    f: Callable[[Tensor], Tensor],
    x: np.ndarray,
    rng: np.random.Generator,
    h: float = 1e-5,
) -> float:
    """Relative error of the directional derivative along one random unit
    direction; cheap surrogate for full coordinate-wise checking."""
    x = np.asarray(x, dtype=np.float64)
    tape = Tape()
    xt = tape.leaf(x)
    y = f(xt)
    analytic = tape.grad(tape.backward(y), xt)

    u = rng.standard_normal(x.shape)
    u /= np.linalg.norm(u)
    fp = f(Tensor(x + h * u)).data.item()
    fm = f(Tensor(x - h * u)).data.item()
    numeric = (fp - fm) / (2 * h)
    a = float((analytic * u).sum())
    return abs(a - numeric) / max(abs(a), abs(numeric), 1e-8)

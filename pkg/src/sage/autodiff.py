"""Minimal reverse-mode differentiation over dense 2-D tensors.

Every value is a (rows, cols) matrix; scalars are (1, 1).  A Tape records
primitive applications in execution order, so the backward sweep is a single
reversed pass that visits each node exactly once.  The default precision is
float32; verification paths (gradient checking, closed-form loss anchors)
run on float64 tapes.

Tie-breaking and degenerate cases are pinned down here because they are
observable: max-reduce routes the adjoint to the first argmax, and row
normalization passes zero rows through unchanged with a zero Jacobian
contribution.
"""

from __future__ import annotations

from typing import Callable, Sequence

import numpy as np

from .errors import NumericalError


class ShapeError(ValueError):
    pass


def _stable_sigmoid(x: np.ndarray) -> np.ndarray:
    out = np.empty_like(x)
    pos = x >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-x[pos]))
    ex = np.exp(x[~pos])
    out[~pos] = ex / (1.0 + ex)
    return out


class _Node:
    __slots__ = ("kind", "inputs", "value", "aux", "needs_grad")

    def __init__(self, kind, inputs, value, aux, needs_grad):
        self.kind = kind
        self.inputs = inputs
        self.value = value
        self.aux = aux
        self.needs_grad = needs_grad


class Tensor:
    __slots__ = ("tape", "idx")

    def __init__(self, tape: "Tape", idx: int):
        self.tape = tape
        self.idx = idx

    @property
    def data(self) -> np.ndarray:
        return self.tape.nodes[self.idx].value

    @property
    def shape(self) -> tuple[int, int]:
        return self.data.shape

    def __repr__(self):
        node = self.tape.nodes[self.idx]
        return f"Tensor(kind={node.kind}, shape={node.value.shape})"


class Tape:
    """Single-owner record of primitive applications."""

    def __init__(self, dtype=np.float32, check_finite: bool = True):
        self.dtype = np.dtype(dtype)
        self.check_finite = check_finite
        self.nodes: list[_Node] = []
        self.param_ids: list[int] = []
        self.grad_allocations = 0

    def _push(self, kind, inputs, value, aux=None, needs_grad=None) -> Tensor:
        if value.ndim != 2:
            raise ShapeError(f"{kind}: tensors are 2-D, got shape {value.shape}")
        if needs_grad is None:
            needs_grad = any(self.nodes[i].needs_grad for i in inputs)
        if self.check_finite and not np.isfinite(value).all():
            raise NumericalError(f"primitive {kind!r} produced non-finite output (node {len(self.nodes)})")
        self.nodes.append(_Node(kind, inputs, value, aux, needs_grad))
        return Tensor(self, len(self.nodes) - 1)

    def constant(self, array) -> Tensor:
        value = np.ascontiguousarray(array, dtype=self.dtype)
        if value.ndim == 0:
            value = value.reshape(1, 1)
        return self._push("const", (), value, needs_grad=False)

    def param(self, array) -> Tensor:
        value = np.ascontiguousarray(array, dtype=self.dtype)
        if value.ndim != 2:
            raise ShapeError(f"parameters are 2-D, got shape {value.shape}")
        t = self._push("param", (), value, needs_grad=True)
        self.param_ids.append(t.idx)
        return t

    def lift(self, x) -> Tensor:
        if isinstance(x, Tensor):
            if x.tape is not self:
                raise ValueError("tensor belongs to a different tape")
            return x
        return self.constant(x)

    # -- backward ---------------------------------------------------------

    def backward(self, output: Tensor) -> dict[int, np.ndarray]:
        """Adjoints of a scalar output for every parameter on the tape.

        Parameters off the active path get explicit zero gradients so
        optimizers can treat the result as total.
        """
        if output.tape is not self:
            raise ValueError("output is not on this tape")
        if output.data.shape != (1, 1):
            raise ShapeError(f"backward needs a scalar output, got {output.data.shape}")

        grads: list[np.ndarray | None] = [None] * len(self.nodes)
        self.grad_allocations = 0

        def accum(idx: int, contribution: np.ndarray, fresh: bool):
            if not self.nodes[idx].needs_grad:
                return
            if grads[idx] is None:
                grads[idx] = contribution if fresh else contribution.copy()
                self.grad_allocations += 1
            else:
                grads[idx] += contribution

        def scatter_buffer(idx: int) -> np.ndarray | None:
            if not self.nodes[idx].needs_grad:
                return None
            if grads[idx] is None:
                grads[idx] = np.zeros_like(self.nodes[idx].value)
                self.grad_allocations += 1
            return grads[idx]

        grads[output.idx] = np.ones((1, 1), dtype=self.dtype)
        self.grad_allocations += 1

        for idx in range(output.idx, -1, -1):
            g = grads[idx]
            node = self.nodes[idx]
            if g is None or not node.inputs:
                continue
            _VJP[node.kind](self, node, g, accum, scatter_buffer)

        out = {}
        for pid in self.param_ids:
            out[pid] = grads[pid] if grads[pid] is not None else np.zeros_like(self.nodes[pid].value)
        return out

    def gradients(self, output: Tensor, params: Sequence[Tensor]) -> list[np.ndarray]:
        table = self.backward(output)
        return [table[p.idx] for p in params]


# -- primitive registry ---------------------------------------------------

_FORWARD: dict[str, Callable] = {}
_VJP: dict[str, Callable] = {}


def _primitive(kind):
    def deco(fn):
        _FORWARD[kind] = fn
        return fn
    return deco


def _vjp(kind):
    def deco(fn):
        _VJP[kind] = fn
        return fn
    return deco


def apply_primitive(kind: str, inputs, tape: Tape, **kwargs) -> Tensor:
    """Apply a registered primitive to (tensor or array) inputs on ``tape``."""
    if kind not in _FORWARD:
        raise KeyError(f"unknown primitive: {kind!r}")
    tensors = [tape.lift(x) for x in inputs]
    return _FORWARD[kind](tape, *tensors, **kwargs)


def _value(tape, idx):
    return tape.nodes[idx].value


# matmul ------------------------------------------------------------------

@_primitive("matmul")
def matmul_(tape, a, b):
    if a.shape[1] != b.shape[0]:
        raise ShapeError(f"matmul: {a.shape} @ {b.shape}")
    return tape._push("matmul", (a.idx, b.idx), a.data @ b.data)


@_vjp("matmul")
def _matmul_vjp(tape, node, g, accum, _buf):
    ia, ib = node.inputs
    accum(ia, g @ _value(tape, ib).T, fresh=True)
    accum(ib, _value(tape, ia).T @ g, fresh=True)


# add (same shape, or a (1, d) row bias against (n, d)) --------------------

@_primitive("add")
def add_(tape, a, b):
    if a.shape != b.shape:
        row_bias = (
            a.shape[1] == b.shape[1]
            and 1 in (a.shape[0], b.shape[0])
        )
        if not row_bias:
            raise ShapeError(f"add: {a.shape} + {b.shape}")
    return tape._push("add", (a.idx, b.idx), a.data + b.data)


@_vjp("add")
def _add_vjp(tape, node, g, accum, _buf):
    for idx in node.inputs:
        shape = _value(tape, idx).shape
        if shape == g.shape:
            accum(idx, g, fresh=False)
        else:
            accum(idx, g.sum(axis=0, keepdims=True), fresh=True)


# elementwise multiply / constant scale ------------------------------------

@_primitive("mul")
def mul_(tape, a, b):
    if a.shape != b.shape:
        raise ShapeError(f"mul: {a.shape} * {b.shape}")
    return tape._push("mul", (a.idx, b.idx), a.data * b.data)


@_vjp("mul")
def _mul_vjp(tape, node, g, accum, _buf):
    ia, ib = node.inputs
    accum(ia, g * _value(tape, ib), fresh=True)
    accum(ib, g * _value(tape, ia), fresh=True)


@_primitive("scale")
def scale_(tape, a, *, factor):
    return tape._push("scale", (a.idx,), a.data * tape.dtype.type(factor), aux=factor)


@_vjp("scale")
def _scale_vjp(tape, node, g, accum, _buf):
    accum(node.inputs[0], g * tape.dtype.type(node.aux), fresh=True)


# column concatenation ------------------------------------------------------

@_primitive("concat_cols")
def concat_cols_(tape, a, b):
    if a.shape[0] != b.shape[0]:
        raise ShapeError(f"concat_cols: {a.shape} | {b.shape}")
    return tape._push("concat_cols", (a.idx, b.idx), np.concatenate([a.data, b.data], axis=1),
                      aux=a.shape[1])


@_vjp("concat_cols")
def _concat_cols_vjp(tape, node, g, accum, _buf):
    split = node.aux
    accum(node.inputs[0], g[:, :split], fresh=False)
    accum(node.inputs[1], g[:, split:], fresh=False)


# row concatenation ---------------------------------------------------------

@_primitive("concat_rows")
def concat_rows_(tape, *parts):
    cols = parts[0].shape[1]
    if any(p.shape[1] != cols for p in parts):
        raise ShapeError("concat_rows: column mismatch")
    offsets = np.cumsum([0] + [p.shape[0] for p in parts])
    return tape._push("concat_rows", tuple(p.idx for p in parts),
                      np.concatenate([p.data for p in parts], axis=0), aux=offsets)


@_vjp("concat_rows")
def _concat_rows_vjp(tape, node, g, accum, _buf):
    offsets = node.aux
    for i, idx in enumerate(node.inputs):
        accum(idx, g[offsets[i]:offsets[i + 1]], fresh=False)


# elementwise nonlinearities -------------------------------------------------

@_primitive("relu")
def relu_(tape, x):
    return tape._push("relu", (x.idx,), np.maximum(x.data, 0))


@_vjp("relu")
def _relu_vjp(tape, node, g, accum, _buf):
    accum(node.inputs[0], g * (node.value > 0), fresh=True)


@_primitive("sigmoid")
def sigmoid_(tape, x):
    return tape._push("sigmoid", (x.idx,), _stable_sigmoid(x.data))


@_vjp("sigmoid")
def _sigmoid_vjp(tape, node, g, accum, _buf):
    y = node.value
    accum(node.inputs[0], g * y * (1.0 - y), fresh=True)


@_primitive("tanh")
def tanh_(tape, x):
    return tape._push("tanh", (x.idx,), np.tanh(x.data))


@_vjp("tanh")
def _tanh_vjp(tape, node, g, accum, _buf):
    y = node.value
    accum(node.inputs[0], g * (1.0 - y * y), fresh=True)


@_primitive("log")
def log_(tape, x):
    with np.errstate(invalid="ignore", divide="ignore"):
        value = np.log(x.data)
    return tape._push("log", (x.idx,), value)  # domain errors surface as non-finite


@_vjp("log")
def _log_vjp(tape, node, g, accum, _buf):
    accum(node.inputs[0], g / _value(tape, node.inputs[0]), fresh=True)


@_primitive("logsigmoid")
def logsigmoid_(tape, x):
    # log(sigmoid(x)) = -log(1 + exp(-x)), computed without overflow
    return tape._push("logsigmoid", (x.idx,), -np.logaddexp(0.0, -x.data).astype(tape.dtype))


@_vjp("logsigmoid")
def _logsigmoid_vjp(tape, node, g, accum, _buf):
    x = _value(tape, node.inputs[0])
    accum(node.inputs[0], g * _stable_sigmoid(-x), fresh=True)


# set reductions -------------------------------------------------------------

@_primitive("max_reduce")
def max_reduce_(tape, *xs):
    shape = xs[0].shape
    if any(x.shape != shape for x in xs):
        raise ShapeError("max_reduce: all members must share a shape")
    stack = np.stack([x.data for x in xs], axis=0)
    winner = np.argmax(stack, axis=0)  # first argmax wins ties
    value = np.take_along_axis(stack, winner[None], axis=0)[0]
    return tape._push("max_reduce", tuple(x.idx for x in xs), value, aux=winner)


@_vjp("max_reduce")
def _max_reduce_vjp(tape, node, g, accum, _buf):
    winner = node.aux
    for t, idx in enumerate(node.inputs):
        accum(idx, g * (winner == t), fresh=True)


@_primitive("mean_reduce")
def mean_reduce_(tape, *xs):
    shape = xs[0].shape
    if any(x.shape != shape for x in xs):
        raise ShapeError("mean_reduce: all members must share a shape")
    total = xs[0].data.copy()
    for x in xs[1:]:
        total += x.data
    return tape._push("mean_reduce", tuple(x.idx for x in xs), total / len(xs))


@_vjp("mean_reduce")
def _mean_reduce_vjp(tape, node, g, accum, _buf):
    scaled = g / len(node.inputs)
    for idx in node.inputs:
        accum(idx, scaled, fresh=False)


# row-wise L2 normalization ---------------------------------------------------

@_primitive("l2_normalize_rows")
def l2_normalize_rows_(tape, x):
    norms = np.linalg.norm(x.data, axis=1, keepdims=True)
    safe = np.where(norms == 0, 1.0, norms)
    return tape._push("l2_normalize_rows", (x.idx,), x.data / safe, aux=norms)


@_vjp("l2_normalize_rows")
def _l2_normalize_rows_vjp(tape, node, g, accum, _buf):
    x = _value(tape, node.inputs[0])
    norms = node.aux
    safe = np.where(norms == 0, 1.0, norms)
    dots = np.sum(x * g, axis=1, keepdims=True)
    # exact Jacobian g/|x| - x (x.g)/|x|^3; zero rows contribute nothing
    gi = g / safe - x * (dots / safe**3)
    gi[norms[:, 0] == 0] = 0
    accum(node.inputs[0], gi, fresh=True)


# row-wise dot product ---------------------------------------------------------

@_primitive("rowwise_dot")
def rowwise_dot_(tape, a, b):
    if a.shape != b.shape:
        raise ShapeError(f"rowwise_dot: {a.shape} . {b.shape}")
    return tape._push("rowwise_dot", (a.idx, b.idx),
                      np.sum(a.data * b.data, axis=1, keepdims=True))


@_vjp("rowwise_dot")
def _rowwise_dot_vjp(tape, node, g, accum, _buf):
    ia, ib = node.inputs
    accum(ia, g * _value(tape, ib), fresh=True)
    accum(ib, g * _value(tape, ia), fresh=True)


# row gather / scatter-add adjoint ----------------------------------------------

@_primitive("gather_rows")
def gather_rows_(tape, x, *, rows):
    rows = np.asarray(rows, dtype=np.int64)
    if rows.ndim != 1:
        raise ShapeError("gather_rows: rows must be a flat index array")
    return tape._push("gather_rows", (x.idx,), x.data[rows], aux=rows)


@_vjp("gather_rows")
def _gather_rows_vjp(tape, node, g, accum, buf):
    target = buf(node.inputs[0])
    if target is not None:
        np.add.at(target, node.aux, g)


# reductions to scalar -----------------------------------------------------------

@_primitive("sum_all")
def sum_all_(tape, x):
    return tape._push("sum_all", (x.idx,), x.data.sum(dtype=tape.dtype).reshape(1, 1),
                      aux=x.shape)


@_vjp("sum_all")
def _sum_all_vjp(tape, node, g, accum, _buf):
    accum(node.inputs[0], np.full(node.aux, g[0, 0], dtype=g.dtype), fresh=True)


# fused, numerically stable losses -------------------------------------------------

@_primitive("softmax_cross_entropy")
def softmax_cross_entropy_(tape, logits, *, labels):
    labels = np.asarray(labels, dtype=np.int64)
    if labels.ndim != 1 or len(labels) != logits.shape[0]:
        raise ShapeError("softmax_cross_entropy: one integer label per row")
    if len(labels) and (labels.min() < 0 or labels.max() >= logits.shape[1]):
        raise ShapeError("softmax_cross_entropy: label out of range")
    x = logits.data
    shifted = x - x.max(axis=1, keepdims=True)
    lse = np.log(np.exp(shifted).sum(axis=1, keepdims=True))
    probs = np.exp(shifted - lse)
    rows = np.arange(len(labels))
    losses = (lse - shifted[rows, labels, None]).astype(tape.dtype)
    return tape._push("softmax_cross_entropy", (logits.idx,), losses, aux=(probs, labels))


@_vjp("softmax_cross_entropy")
def _softmax_cross_entropy_vjp(tape, node, g, accum, _buf):
    probs, labels = node.aux
    grad = probs.copy()
    grad[np.arange(len(labels)), labels] -= 1.0
    accum(node.inputs[0], grad * g, fresh=True)


@_primitive("sigmoid_cross_entropy")
def sigmoid_cross_entropy_(tape, logits, *, targets):
    targets = np.asarray(targets, dtype=tape.dtype)
    if targets.shape != logits.shape:
        raise ShapeError("sigmoid_cross_entropy: target shape mismatch")
    x = logits.data
    losses = np.maximum(x, 0) - x * targets + np.log1p(np.exp(-np.abs(x)))
    return tape._push("sigmoid_cross_entropy", (logits.idx,), losses.astype(tape.dtype),
                      aux=(_stable_sigmoid(x), targets))


@_vjp("sigmoid_cross_entropy")
def _sigmoid_cross_entropy_vjp(tape, node, g, accum, _buf):
    probs, targets = node.aux
    accum(node.inputs[0], g * (probs - targets), fresh=True)


# -- convenience wrappers ------------------------------------------------------------

def matmul(a, b):
    return _FORWARD["matmul"](a.tape, a, a.tape.lift(b))


def add(a, b):
    return _FORWARD["add"](a.tape, a, a.tape.lift(b))


def mul(a, b):
    return _FORWARD["mul"](a.tape, a, a.tape.lift(b))


def scale(a, factor):
    return _FORWARD["scale"](a.tape, a, factor=factor)


def neg(a):
    return scale(a, -1.0)


def concat_cols(a, b):
    return _FORWARD["concat_cols"](a.tape, a, a.tape.lift(b))


def concat_rows(*parts):
    tape = parts[0].tape
    return _FORWARD["concat_rows"](tape, *[tape.lift(p) for p in parts])


def relu(x):
    return _FORWARD["relu"](x.tape, x)


def sigmoid(x):
    return _FORWARD["sigmoid"](x.tape, x)


def tanh(x):
    return _FORWARD["tanh"](x.tape, x)


def log(x):
    return _FORWARD["log"](x.tape, x)


def logsigmoid(x):
    return _FORWARD["logsigmoid"](x.tape, x)


def max_reduce(xs):
    tape = xs[0].tape
    return _FORWARD["max_reduce"](tape, *[tape.lift(x) for x in xs])


def mean_reduce(xs):
    tape = xs[0].tape
    return _FORWARD["mean_reduce"](tape, *[tape.lift(x) for x in xs])


def l2_normalize_rows(x):
    return _FORWARD["l2_normalize_rows"](x.tape, x)


def rowwise_dot(a, b):
    return _FORWARD["rowwise_dot"](a.tape, a, a.tape.lift(b))


def gather_rows(x, rows):
    return _FORWARD["gather_rows"](x.tape, x, rows=rows)


def sum_all(x):
    return _FORWARD["sum_all"](x.tape, x)


def mean_all(x):
    n = x.shape[0] * x.shape[1]
    return scale(sum_all(x), 1.0 / n)


def softmax_cross_entropy(logits, labels):
    return _FORWARD["softmax_cross_entropy"](logits.tape, logits, labels=labels)


def sigmoid_cross_entropy(logits, targets):
    return _FORWARD["sigmoid_cross_entropy"](logits.tape, logits, targets=targets)


# -- finite-difference verification ----------------------------------------------------

def grad_check(f: Callable[[Sequence[np.ndarray]], Tensor], params: Sequence[np.ndarray],
               step: float = 1e-6) -> float:
    """Max relative error between backward and central differences.

    ``f`` must build a float64 tape, register ``params`` (in order) with
    ``tape.param``, and return the scalar loss tensor.  The finite-difference
    side re-evaluates ``f`` at perturbed parameters, so it is independent of
    the recorded adjoints it is checking.
    """
    if not (1e-7 <= step <= 1e-4):
        raise ValueError("step must lie in [1e-7, 1e-4]")
    params = [np.asarray(p, dtype=np.float64) for p in params]

    out = f(params)
    tape = out.tape
    if tape.dtype != np.float64:
        raise ValueError("grad_check requires a float64 tape")
    if not np.isfinite(out.data).all():
        raise NumericalError("objective is non-finite at the base point")
    table = tape.backward(out)
    analytic = [table[pid] for pid in tape.param_ids]
    if len(analytic) != len(params):
        raise ValueError("f must register every parameter on its tape")

    def value_at(arrays) -> float:
        val = f(arrays).data[0, 0]
        if not np.isfinite(val):
            raise NumericalError("objective is non-finite at a probe point")
        return float(val)

    worst = 0.0
    for i, base in enumerate(params):
        fd = np.zeros_like(base)
        flat = base.reshape(-1)
        for j in range(flat.size):
            orig = flat[j]
            flat[j] = orig + step
            up = value_at(params)
            flat[j] = orig - step
            down = value_at(params)
            flat[j] = orig
            fd.reshape(-1)[j] = (up - down) / (2 * step)
        err = np.abs(analytic[i] - fd)
        # relative error with a unit floor: for tiny gradients the comparison
        # degrades to absolute error, which is what fd rounding noise bounds
        denom = np.maximum(np.maximum(np.abs(analytic[i]), np.abs(fd)), 1.0)
        worst = max(worst, float((err / denom).max()) if err.size else 0.0)
    return worst

"""Dense reverse-mode automatic differentiation on a define-by-run tape.

Values are float64 numpy arrays (vectors, matrices or 0-d scalars). Each op
appends a node to the tape holding its inputs, its output and a closure that
maps the output gradient to input gradients. ``Tape.backward`` replays the
nodes in reverse order. Broadcasting is limited to scalar-vs-tensor.

Typical use, one tape per sentence::

    tape = Tape()
    h = tape.tanh(tape.add(tape.matmul(W, x), b))
    loss = tape.softmax_cross_entropy(h, gold)
    tape.backward(loss)
"""

from __future__ import annotations

import numpy as np

from .errors import IndexOutOfRange, InvalidRate, NotScalarLoss, ShapeMismatch


class Tensor:
    """A dense float64 array with a gradient accumulator.

    ``touched`` is an optional set of row indices. Embedding lookups record the
    rows they read there, so the optimizer can skip untouched rows of large
    tables. ``None`` means "treat the whole tensor as touched".
    """

    def __init__(self, values, requires_grad=False, name=None):
        self.values = np.array(values, dtype=np.float64)
        self.requires_grad = requires_grad
        self.name = name
        self.grad = np.zeros_like(self.values) if requires_grad else None
        self.touched = None

    @property
    def shape(self):
        return self.values.shape

    def zero_grad(self):
        if self.grad is None:
            return
        if self.touched is None:
            self.grad.fill(0.0)
        else:
            if self.touched:
                self.grad[sorted(self.touched)] = 0.0
            self.touched = set()

    def item(self):
        return float(self.values)

    def __repr__(self):
        label = f" {self.name!r}" if self.name else ""
        return f"Tensor{label}(shape={self.shape}, requires_grad={self.requires_grad})"


def _const(x):
    """Wrap Python numbers as non-differentiable tensors."""
    if isinstance(x, Tensor):
        return x
    return Tensor(x)


def _is_scalar(t):
    return t.values.ndim == 0 or t.values.size == 1 and t.values.ndim <= 1


def _reduce_to(grad, target):
    """Sum a broadcast gradient back down to the shape of a scalar operand."""
    if target.values.shape == grad.shape:
        return grad
    return np.asarray(grad.sum()).reshape(target.values.shape)


def stable_softmax(logits):
    z = np.asarray(logits, dtype=np.float64)
    z = z - z.max()
    e = np.exp(z)
    return e / e.sum()


def _sigmoid(x):
    # tanh form avoids overflow in exp for large |x|
    return 0.5 * (1.0 + np.tanh(0.5 * x))


class _Node:
    __slots__ = ("out", "inputs", "backward")

    def __init__(self, out, inputs, backward):
        self.out = out
        self.inputs = inputs
        self.backward = backward


class Tape:
    """Ordered record of differentiable ops; rebuild one per sentence.

    ``Tape(record=False)`` computes values only, for inference.
    """

    def __init__(self, record=True):
        self.record = record
        self.nodes = []
        self._outputs = set()

    def __len__(self):
        return len(self.nodes)

    def _record(self, values, inputs, backward):
        requires = self.record and any(t.requires_grad for t in inputs)
        out = Tensor(values, requires_grad=requires)
        if requires:
            self.nodes.append(_Node(out, inputs, backward))
            self._outputs.add(id(out))
        return out

    # ---- forward ops -------------------------------------------------

    def matmul(self, a, b):
        """Matrix-vector or matrix-matrix product."""
        a, b = _const(a), _const(b)
        if a.values.ndim != 2 or b.values.ndim not in (1, 2) or a.shape[1] != b.shape[0]:
            raise ShapeMismatch(f"matmul {a.shape} @ {b.shape}")
        A, B = a.values, b.values

        if B.ndim == 1:
            if a.requires_grad and id(a) not in self._outputs:
                # leaf weight times vector: outer products are batched in backward
                return self._record(A @ B, (a, b), _MatVecGrad(A, B))

            def backward(g):
                return np.outer(g, B), A.T @ g
        else:
            def backward(g):
                return g @ B.T, A.T @ g

        return self._record(A @ B, (a, b), backward)

    def add(self, a, b):
        a, b = _const(a), _const(b)
        if a.shape != b.shape and not (_is_scalar(a) or _is_scalar(b)):
            raise ShapeMismatch(f"add {a.shape} + {b.shape}")

        def backward(g):
            return _reduce_to(g, a), _reduce_to(g, b)

        return self._record(a.values + b.values, (a, b), backward)

    def sub(self, a, b):
        a, b = _const(a), _const(b)
        if a.shape != b.shape and not (_is_scalar(a) or _is_scalar(b)):
            raise ShapeMismatch(f"sub {a.shape} - {b.shape}")

        def backward(g):
            return _reduce_to(g, a), _reduce_to(-g, b)

        return self._record(a.values - b.values, (a, b), backward)

    def mul(self, a, b):
        """Elementwise product (scalar operands broadcast)."""
        a, b = _const(a), _const(b)
        if a.shape != b.shape and not (_is_scalar(a) or _is_scalar(b)):
            raise ShapeMismatch(f"mul {a.shape} * {b.shape}")
        A, B = a.values, b.values

        def backward(g):
            return _reduce_to(g * B, a), _reduce_to(g * A, b)

        return self._record(A * B, (a, b), backward)

    def concat(self, *tensors):
        """Concatenate 1-d tensors end to end."""
        if len(tensors) == 1 and isinstance(tensors[0], (list, tuple)):
            tensors = tuple(tensors[0])
        tensors = tuple(_const(t) for t in tensors)
        if not tensors or any(t.values.ndim != 1 for t in tensors):
            raise ShapeMismatch("concat expects one or more vectors")
        bounds = np.cumsum([0] + [t.shape[0] for t in tensors])

        def backward(g):
            return tuple(g[bounds[i]:bounds[i + 1]] for i in range(len(tensors)))

        return self._record(np.concatenate([t.values for t in tensors]), tensors, backward)

    def slice(self, a, start, stop):
        """Contiguous sub-vector ``a[start:stop]``."""
        a = _const(a)
        if a.values.ndim != 1 or not 0 <= start < stop <= a.shape[0]:
            raise ShapeMismatch(f"slice [{start}:{stop}] of {a.shape}")
        n = a.shape[0]

        def backward(g):
            full = np.zeros(n)
            full[start:stop] = g
            return (full,)

        return self._record(a.values[start:stop], (a,), backward)

    def tanh(self, a):
        a = _const(a)
        y = np.tanh(a.values)

        def backward(g):
            return (g * (1.0 - y * y),)

        return self._record(y, (a,), backward)

    def sigmoid(self, a):
        a = _const(a)
        y = _sigmoid(a.values)

        def backward(g):
            return (g * y * (1.0 - y),)

        return self._record(y, (a,), backward)

    def lookup(self, table, index):
        """Row ``index`` of a 2-d table; the gradient lands in that row only."""
        table = _const(table)
        if table.values.ndim != 2:
            raise ShapeMismatch(f"lookup needs a matrix, got {table.shape}")
        index = int(index)
        if not 0 <= index < table.shape[0]:
            raise IndexOutOfRange(f"row {index} of table with {table.shape[0]} rows")
        if self.record and table.requires_grad and table.touched is not None:
            table.touched.add(index)
        return self._record(table.values[index].copy(), (table,), _RowGrad(index, table.shape))

    def dropout(self, a, rate, rng, train_mode=True, mask=None):
        """Inverted dropout: survivors are scaled by 1/(1-rate) at train time.

        In eval mode this is the identity and records nothing. ``mask`` freezes
        the keep-pattern (boolean array) instead of drawing one from ``rng``.
        """
        a = _const(a)
        if not 0.0 <= rate < 1.0:
            raise InvalidRate(rate)
        if not train_mode or rate == 0.0:
            return a
        if mask is None:
            mask = rng.random(a.shape) >= rate
        elif np.shape(mask) != a.shape:
            raise ShapeMismatch(f"dropout mask {np.shape(mask)} vs {a.shape}")
        scale = np.where(mask, 1.0 / (1.0 - rate), 0.0)

        def backward(g):
            return (g * scale,)

        return self._record(a.values * scale, (a,), backward)

    def sum(self, a):
        a = _const(a)
        shape = a.shape

        def backward(g):
            return (np.full(shape, float(g)),)

        return self._record(np.asarray(a.values.sum()), (a,), backward)

    def mean(self, scalars):
        """Average of a list of scalar tensors."""
        scalars = tuple(_const(s) for s in scalars)
        if not scalars:
            raise ShapeMismatch("mean of an empty list")
        n = len(scalars)

        def backward(g):
            return tuple(np.full(s.shape, float(g) / n) for s in scalars)

        total = sum(float(s.values) for s in scalars)
        return self._record(np.asarray(total / n), scalars, backward)

    def softmax_cross_entropy(self, logits, gold_index):
        """Negative log-probability of ``gold_index`` under softmax(logits)."""
        logits = _const(logits)
        if logits.values.ndim != 1:
            raise ShapeMismatch(f"logits must be a vector, got {logits.shape}")
        gold_index = int(gold_index)
        if not 0 <= gold_index < logits.shape[0]:
            raise IndexOutOfRange(f"gold index {gold_index} for {logits.shape[0]} classes")
        z = logits.values - logits.values.max()
        log_norm = np.log(np.exp(z).sum())
        probs = np.exp(z - log_norm)
        loss = log_norm - z[gold_index]

        def backward(g):
            d = probs.copy()
            d[gold_index] -= 1.0
            return (float(g) * d,)

        return self._record(np.asarray(loss), (logits,), backward)

    # ---- reverse pass ------------------------------------------------

    def backward(self, loss):
        """Accumulate dloss/dleaf into every leaf tensor's ``grad``.

        Intermediate gradients are reset on entry, so calling this twice on the
        same tape adds the leaf gradients twice (same as two separate passes).
        """
        if loss.values.size != 1:
            raise NotScalarLoss(f"loss has shape {loss.shape}")
        if id(loss) not in self._outputs:
            if loss.requires_grad:
                # a leaf used directly as the loss
                loss.grad += 1.0
                return
            raise NotScalarLoss("loss is not an output of this tape")
        for node in self.nodes:
            node.out.grad.fill(0.0)
        loss.grad += 1.0
        # leaf weight id -> (weight, [output grads], [input vectors])
        pending = {}
        for node in reversed(self.nodes):
            g = node.out.grad
            rule = node.backward
            if isinstance(rule, _RowGrad):
                rule.accumulate(node.inputs[0], g)
                continue
            if isinstance(rule, _MatVecGrad):
                weight, vec = node.inputs
                entry = pending.get(id(weight))
                if entry is None:
                    entry = pending[id(weight)] = (weight, [], [])
                entry[1].append(g.copy())
                entry[2].append(rule.x)
                if vec.requires_grad:
                    vec.grad += rule.A.T @ g
                continue
            grads = rule(g)
            for t, gt in zip(node.inputs, grads):
                if t.requires_grad:
                    t.grad += gt
        for weight, gs, xs in pending.values():
            weight.grad += np.array(gs).T @ np.array(xs)


class _MatVecGrad:
    """Backward rule of ``W @ x`` for a leaf matrix ``W``."""

    __slots__ = ("A", "x")

    def __init__(self, A, x):
        self.A = A
        self.x = x

    def __call__(self, g):
        return np.outer(g, self.x), self.A.T @ g


class _RowGrad:
    """Backward rule of ``lookup`` that writes only the gathered row."""

    __slots__ = ("index", "shape")

    def __init__(self, index, shape):
        self.index = index
        self.shape = shape

    def accumulate(self, table, g):
        table.grad[self.index] += g

    def __call__(self, g):
        full = np.zeros(self.shape)
        full[self.index] = g
        return (full,)


def grad_check(f, x, eps=1e-5):
    """Max relative error between backprop and central differences.

    ``f(tape, x)`` must build a scalar loss on the given fresh tape and be
    deterministic in ``x`` (reseed any rng inside ``f``). ``x.grad`` is left
    holding the analytic gradient.
    """
    if eps <= 0:
        raise ValueError("eps must be positive")
    x.zero_grad()
    tape = Tape()
    loss = f(tape, x)
    tape.backward(loss)
    analytic = x.grad.copy()

    flat = x.values.reshape(-1)
    numeric = np.empty(flat.size)
    for i in range(flat.size):
        orig = flat[i]
        flat[i] = orig + eps
        plus = float(f(Tape(), x).values)
        flat[i] = orig - eps
        minus = float(f(Tape(), x).values)
        flat[i] = orig
        numeric[i] = (plus - minus) / (2.0 * eps)

    a = analytic.reshape(-1)
    denom = np.maximum(np.maximum(np.abs(a), np.abs(numeric)), 1e-8)
    return float(np.max(np.abs(a - numeric) / denom)) if flat.size else 0.0

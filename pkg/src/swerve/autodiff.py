"""Reverse-mode automatic differentiation over numpy arrays.

The engine is eager: every operation computes its numpy result immediately
and, when gradient tracking is on, records a closure that maps the output
gradient back onto its operands. The compute graph is therefore distributed
across Tensor nodes (each node knows its parents and how to push gradient
to them); `backward` replays the closures once in reverse topological order.

Tensors are immutable values once created. Optimizers that rewrite
parameter data must do so between graphs, never while one is alive.
Elementwise arithmetic requires operands of identical shape (or a Python
scalar); there is no general broadcasting.
"""

from __future__ import annotations

import contextlib
from dataclasses import dataclass, field

import numpy as np

FLOAT_DTYPES = (np.dtype(np.float32), np.dtype(np.float64))

_grad_enabled = True


def grad_enabled() -> bool:
    return _grad_enabled


@contextlib.contextmanager
def no_grad():
    """Disable graph recording inside the block (inference, finite differences)."""
    global _grad_enabled
    previous = _grad_enabled
    _grad_enabled = False
    try:
        yield
    finally:
        _grad_enabled = previous


def _as_float_array(data, dtype) -> np.ndarray:
    arr = np.asarray(data) if dtype is None else np.asarray(data, dtype=dtype)
    if arr.dtype not in FLOAT_DTYPES:
        arr = arr.astype(np.float32)
    return arr


class Tensor:
    """N-dimensional float array plus autodiff bookkeeping.

    data is float32 or float64 (anything else is cast to float32 on entry).
    grad, once backward has run, is a plain numpy array of the same shape.
    Non-leaf tensors carry their recorded parents and a backward closure.
    """

    __slots__ = ("data", "grad", "requires_grad", "_parents", "_backward", "_op")

    def __init__(self, data, requires_grad: bool = False, dtype=None):
        self.data = _as_float_array(data, dtype)
        self.grad: np.ndarray | None = None
        self.requires_grad = bool(requires_grad)
        self._parents: tuple[Tensor, ...] = ()
        self._backward = None
        self._op = ""

    @property
    def shape(self) -> tuple[int, ...]:
        return self.data.shape

    @property
    def ndim(self) -> int:
        return self.data.ndim

    @property
    def size(self) -> int:
        return self.data.size

    @property
    def dtype(self):
        return self.data.dtype

    def item(self) -> float:
        if self.data.size != 1:
            raise ValueError(f"item() needs a single-element tensor, got shape {self.shape}")
        return float(self.data.reshape(()))

    def detach(self) -> "Tensor":
        return Tensor(self.data)

    def __repr__(self) -> str:
        tag = f" op={self._op}" if self._op else ""
        return f"Tensor(shape={self.shape}, dtype={self.data.dtype}, requires_grad={self.requires_grad}{tag})"

    # -- arithmetic ---------------------------------------------------------

    def __add__(self, other):
        if isinstance(other, Tensor):
            _check_pair(self, other, "add")
            out_data = self.data + other.data

            def _back(g):
                _accum(self, g)
                _accum(other, g)

            return _record(out_data, (self, other), _back, "add")
        s = float(other)
        out_data = self.data + s

        def _back(g):
            _accum(self, g)

        return _record(out_data, (self,), _back, "add")

    __radd__ = __add__

    def __sub__(self, other):
        if isinstance(other, Tensor):
            _check_pair(self, other, "sub")
            out_data = self.data - other.data

            def _back(g):
                _accum(self, g)
                _accum(other, -g)

            return _record(out_data, (self, other), _back, "sub")
        s = float(other)
        out_data = self.data - s

        def _back(g):
            _accum(self, g)

        return _record(out_data, (self,), _back, "sub")

    def __rsub__(self, other):
        s = float(other)
        out_data = s - self.data

        def _back(g):
            _accum(self, -g)

        return _record(out_data, (self,), _back, "rsub")

    def __mul__(self, other):
        if isinstance(other, Tensor):
            _check_pair(self, other, "mul")
            out_data = self.data * other.data

            def _back(g):
                _accum(self, g * other.data)
                _accum(other, g * self.data)

            return _record(out_data, (self, other), _back, "mul")
        s = float(other)
        out_data = self.data * s

        def _back(g):
            _accum(self, g * s)

        return _record(out_data, (self,), _back, "mul")

    __rmul__ = __mul__

    def __truediv__(self, other):
        if isinstance(other, Tensor):
            raise TypeError("tensor/tensor division is not supported; multiply by a reciprocal op instead")
        return self.__mul__(1.0 / float(other))

    def __neg__(self):
        out_data = -self.data

        def _back(g):
            _accum(self, -g)

        return _record(out_data, (self,), _back, "neg")

    # -- shape and reductions ------------------------------------------------

    def reshape(self, *shape) -> "Tensor":
        if len(shape) == 1 and isinstance(shape[0], (tuple, list)):
            shape = tuple(shape[0])
        old_shape = self.data.shape
        out_data = self.data.reshape(shape)

        def _back(g):
            _accum(self, g.reshape(old_shape))

        return _record(out_data, (self,), _back, "reshape")

    def sum(self) -> "Tensor":
        out_data = self.data.sum()
        shape, dtype = self.data.shape, self.data.dtype

        def _back(g):
            _accum(self, np.broadcast_to(np.asarray(g, dtype=dtype), shape))

        return _record(out_data, (self,), _back, "sum")

    def mean(self) -> "Tensor":
        n = self.data.size
        out_data = self.data.mean()
        shape, dtype = self.data.shape, self.data.dtype

        def _back(g):
            _accum(self, np.broadcast_to(np.asarray(g, dtype=dtype) / n, shape))

        return _record(out_data, (self,), _back, "mean")

    # -- elementwise nonlinearities -------------------------------------------

    def tanh(self) -> "Tensor":
        out_data = np.tanh(self.data)

        def _back(g):
            _accum(self, g * (1.0 - out_data * out_data))

        return _record(out_data, (self,), _back, "tanh")

    def sqrt(self) -> "Tensor":
        if np.any(self.data < 0):
            raise ValueError("sqrt of a tensor with negative entries")
        out_data = np.sqrt(self.data)

        def _back(g):
            _accum(self, g * (0.5 / out_data))

        return _record(out_data, (self,), _back, "sqrt")

    def relu(self) -> "Tensor":
        out_data = np.maximum(self.data, 0)
        mask = self.data > 0  # subgradient at exactly 0 is 0

        def _back(g):
            _accum(self, g * mask)

        return _record(out_data, (self,), _back, "relu")

    def backward(self, seed=None) -> dict:
        return backward(self, seed)


def relu(x: Tensor) -> Tensor:
    return x.relu()


def tanh(x: Tensor) -> Tensor:
    return x.tanh()


def sqrt(x: Tensor) -> Tensor:
    return x.sqrt()


def _check_pair(a: Tensor, b: Tensor, op: str) -> None:
    if a.data.shape != b.data.shape:
        raise ValueError(f"{op}: operand shapes {a.data.shape} and {b.data.shape} differ (no broadcasting)")
    if a.data.dtype != b.data.dtype:
        raise TypeError(f"{op}: operand dtypes {a.data.dtype} and {b.data.dtype} differ")


def _accum(t: Tensor, g: np.ndarray) -> None:
    """Add gradient g into t.grad. Never mutates an existing grad in place."""
    if not t.requires_grad:
        return
    t.grad = g if t.grad is None else t.grad + g


def _record(out_data, parents, back, op: str) -> Tensor:
    """Wrap an op result, attaching the backward closure if anything upstream wants gradients."""
    out = Tensor(out_data)
    if _grad_enabled:
        tracked = tuple(p for p in parents if p.requires_grad)
        if tracked:
            out.requires_grad = True
            out._parents = tracked
            out._backward = back
            out._op = op
    return out


def _topo_order(root: Tensor) -> list[Tensor]:
    """Parents-before-children ordering of the grad-requiring subgraph under root."""
    order: list[Tensor] = []
    seen: set[int] = set()
    stack: list[tuple[Tensor, bool]] = [(root, False)]
    while stack:
        node, expanded = stack.pop()
        if expanded:
            order.append(node)
            continue
        if id(node) in seen:
            continue
        seen.add(id(node))
        stack.append((node, True))
        for parent in node._parents:
            stack.append((parent, False))
    return order


def backward(output: Tensor, seed=None) -> dict[Tensor, np.ndarray]:
    """Run reverse-mode accumulation from `output`.

    seed defaults to ones (the usual scalar-loss case). Returns a map from
    every visited grad-requiring tensor to its gradient; leaf tensors also
    keep the gradient in their .grad field, accumulating across calls until
    an optimizer clears it.
    """
    if not output.requires_grad:
        raise ValueError("backward: output does not require grad (no forward pass was recorded for it)")
    if seed is None:
        seed_arr = np.ones(output.data.shape, dtype=output.data.dtype)
    else:
        seed_arr = np.asarray(seed, dtype=output.data.dtype)
        if seed_arr.shape != output.data.shape:
            raise ValueError(f"backward: seed shape {seed_arr.shape} does not match output shape {output.data.shape}")
    order = _topo_order(output)
    for node in order:
        if node._backward is not None:
            node.grad = None  # intermediate grads are per-call, only leaves accumulate
    output.grad = seed_arr if output.grad is None or output._backward is not None else output.grad + seed_arr
    for node in reversed(order):
        if node._backward is not None:
            node._backward(node.grad)
    return {node: node.grad for node in order}


# -- finite differences --------------------------------------------------------


@dataclass
class CoordinateError:
    tensor: str
    index: tuple
    analytic: float
    numeric: float
    rel_error: float


@dataclass
class GradCheckReport:
    """Per-coordinate comparison of analytic vs central-difference gradients."""

    max_rel_error: float = 0.0
    checked: int = 0
    excluded: int = 0
    failures: list[CoordinateError] = field(default_factory=list)
    worst: CoordinateError | None = None

    @property
    def passed(self) -> bool:
        return self.checked > 0 and not self.failures


def finite_difference_check(
    fn,
    params: dict[str, Tensor],
    h: float = 1e-5,
    tolerance: float = 1e-4,
    exclude: dict[str, np.ndarray] | None = None,
    sample: int | None = None,
    rng=None,
) -> GradCheckReport:
    """Compare analytic gradients of the scalar fn() against central differences.

    fn must rebuild its graph from the given leaf tensors on every call.
    All leaves must be float64; relative error uses max(|analytic|, |numeric|, 1e-6)
    as the scale. `exclude` masks coordinates sitting on kinks (relu at 0,
    pooling ties), where the two-sided difference is not meaningful.
    `sample` caps the number of coordinates checked per tensor (random subset),
    for models too large to sweep exhaustively.
    """
    for name, t in params.items():
        if t.data.dtype != np.float64:
            raise TypeError(f"finite_difference_check requires float64 tensors; '{name}' is {t.data.dtype}")
        if not t.requires_grad:
            raise ValueError(f"finite_difference_check: '{name}' does not require grad")

    out = fn()
    if out.size != 1:
        raise ValueError(f"finite_difference_check needs a scalar objective, got shape {out.shape}")
    for t in params.values():
        t.grad = None
    backward(out)
    analytic = {name: (np.zeros_like(t.data) if t.grad is None else t.grad.copy()) for name, t in params.items()}

    report = GradCheckReport()
    picker = rng if rng is not None else np.random.default_rng(0)
    with no_grad():
        for name, t in params.items():
            mask = None if exclude is None else exclude.get(name)
            indices = list(np.ndindex(t.data.shape))
            if sample is not None and len(indices) > sample:
                chosen = picker.choice(len(indices), size=sample, replace=False)
                indices = [indices[i] for i in chosen]
            for idx in indices:
                if mask is not None and mask[idx]:
                    report.excluded += 1
                    continue
                original = t.data[idx]
                t.data[idx] = original + h
                f_plus = float(fn().data)
                t.data[idx] = original - h
                f_minus = float(fn().data)
                t.data[idx] = original
                numeric = (f_plus - f_minus) / (2.0 * h)
                a = float(analytic[name][idx])
                rel = abs(a - numeric) / max(abs(a), abs(numeric), 1e-6)
                report.checked += 1
                entry = CoordinateError(name, idx, a, numeric, rel)
                if report.worst is None or rel > report.max_rel_error:
                    report.worst = entry
                    report.max_rel_error = rel
                if rel >= tolerance:
                    report.failures.append(entry)
    return report

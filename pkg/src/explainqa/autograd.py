"""Minimal reverse-mode autodiff over numpy float64 arrays.

Just the primitives the transformer needs: broadcasting elementwise ops,
batched matmul, reductions, reshapes, embedding lookup, and the composed
softmax / log-softmax / layer-norm / GELU built from those primitives.
Everything runs in 64-bit so gradient checks are meaningful.
"""

from __future__ import annotations

from contextlib import contextmanager

import numpy as np

_grad_enabled = True


@contextmanager
def no_grad():
    """Disable graph construction; inference paths avoid autograd overhead."""
    global _grad_enabled
    prev = _grad_enabled
    _grad_enabled = False
    try:
        yield
    finally:
        _grad_enabled = prev


def _unbroadcast(grad: np.ndarray, shape: tuple[int, ...]) -> np.ndarray:
    """Sum grad down to `shape`, undoing numpy broadcasting."""
    while grad.ndim > len(shape):
        grad = grad.sum(axis=0)
    for axis, dim in enumerate(shape):
        if dim == 1 and grad.shape[axis] != 1:
            grad = grad.sum(axis=axis, keepdims=True)
    return grad


class Tensor:
    __slots__ = ("data", "grad", "requires_grad", "_parents", "_backward")

    def __init__(self, data, requires_grad: bool = False,
                 parents: tuple = (), backward=None):
        self.data = np.asarray(data, dtype=np.float64)
        self.grad: np.ndarray | None = None
        self.requires_grad = _grad_enabled and (
            requires_grad or any(p.requires_grad for p in parents))
        self._parents = parents if self.requires_grad else ()
        self._backward = backward if self.requires_grad else None

    @property
    def shape(self):
        return self.data.shape

    @property
    def ndim(self):
        return self.data.ndim

    def detach(self) -> np.ndarray:
        return self.data

    def _accumulate(self, grad: np.ndarray) -> None:
        if self.grad is None:
            # copy: incoming arrays may be shared with sibling accumulations
            self.grad = np.array(grad)
        else:
            self.grad += grad

    def backward(self) -> None:
        """Backpropagate from a scalar."""
        if self.data.size != 1:
            raise ValueError("backward() requires a scalar")
        order: list[Tensor] = []
        seen: set[int] = set()
        stack: list[tuple[Tensor, bool]] = [(self, False)]
        while stack:
            node, processed = stack.pop()
            if processed:
                order.append(node)
                continue
            if id(node) in seen or not node.requires_grad:
                continue
            seen.add(id(node))
            stack.append((node, True))
            for p in node._parents:
                stack.append((p, False))
        self.grad = np.ones_like(self.data)
        for node in reversed(order):
            if node._backward is not None:
                node._backward(node.grad)
        # break closure cycles so intermediate arrays free promptly;
        # leaves keep their accumulated grads
        for node in order:
            if node._backward is not None:
                node._parents = ()
                node._backward = None
                if node is not self:
                    node.grad = None

    # ---- elementwise ----

    def __add__(self, other):
        other = as_tensor(other)
        out = Tensor(self.data + other.data, parents=(self, other))
        def bwd(g):
            if self.requires_grad:
                self._accumulate(_unbroadcast(g, self.shape))
            if other.requires_grad:
                other._accumulate(_unbroadcast(g, other.shape))
        out._backward = bwd if out.requires_grad else None
        return out

    __radd__ = __add__

    def __neg__(self):
        out = Tensor(-self.data, parents=(self,))
        def bwd(g):
            self._accumulate(-g)
        out._backward = bwd if out.requires_grad else None
        return out

    def __sub__(self, other):
        return self + (-as_tensor(other))

    def __rsub__(self, other):
        return as_tensor(other) + (-self)

    def __mul__(self, other):
        other = as_tensor(other)
        out = Tensor(self.data * other.data, parents=(self, other))
        def bwd(g):
            if self.requires_grad:
                self._accumulate(_unbroadcast(g * other.data, self.shape))
            if other.requires_grad:
                other._accumulate(_unbroadcast(g * self.data, other.shape))
        out._backward = bwd if out.requires_grad else None
        return out

    __rmul__ = __mul__

    def __truediv__(self, other):
        return self * as_tensor(other) ** -1.0

    def __rtruediv__(self, other):
        return as_tensor(other) * self ** -1.0

    def __pow__(self, p: float):
        # np.power with a float exponent is far slower than multiplication;
        # special-case the small integer powers the models actually use
        if p == 2.0:
            return self * self
        if p == 3.0:
            return self * self * self
        out = Tensor(self.data ** p, parents=(self,))
        def bwd(g):
            self._accumulate(g * p * self.data ** (p - 1.0))
        out._backward = bwd if out.requires_grad else None
        return out

    def exp(self):
        out = Tensor(np.exp(self.data), parents=(self,))
        def bwd(g):
            self._accumulate(g * out.data)
        out._backward = bwd if out.requires_grad else None
        return out

    def log(self):
        out = Tensor(np.log(self.data), parents=(self,))
        def bwd(g):
            self._accumulate(g / self.data)
        out._backward = bwd if out.requires_grad else None
        return out

    def tanh(self):
        out = Tensor(np.tanh(self.data), parents=(self,))
        def bwd(g):
            self._accumulate(g * (1.0 - out.data ** 2))
        out._backward = bwd if out.requires_grad else None
        return out

    # ---- shape ----

    def reshape(self, *shape):
        out = Tensor(self.data.reshape(*shape), parents=(self,))
        def bwd(g):
            self._accumulate(g.reshape(self.shape))
        out._backward = bwd if out.requires_grad else None
        return out

    def transpose(self, *axes):
        inv = np.argsort(axes)
        out = Tensor(self.data.transpose(*axes), parents=(self,))
        def bwd(g):
            self._accumulate(g.transpose(*inv))
        out._backward = bwd if out.requires_grad else None
        return out

    def swapaxes(self, a: int, b: int):
        out = Tensor(self.data.swapaxes(a, b), parents=(self,))
        def bwd(g):
            self._accumulate(g.swapaxes(a, b))
        out._backward = bwd if out.requires_grad else None
        return out

    def __getitem__(self, key):
        fancy = any(
            isinstance(k, (np.ndarray, list)) for k in
            (key if isinstance(key, tuple) else (key,))
        )
        out = Tensor(self.data[key], parents=(self,))
        def bwd(g):
            full = np.zeros_like(self.data)
            if fancy:
                np.add.at(full, key, g)  # repeated indices must accumulate
            else:
                full[key] += g
            self._accumulate(full)
        out._backward = bwd if out.requires_grad else None
        return out

    # ---- reductions ----

    def sum(self, axis=None, keepdims: bool = False):
        out = Tensor(self.data.sum(axis=axis, keepdims=keepdims), parents=(self,))
        def bwd(g):
            if axis is None:
                self._accumulate(np.broadcast_to(g, self.shape).copy())
                return
            if not keepdims:
                g = np.expand_dims(g, axis)
            self._accumulate(np.broadcast_to(g, self.shape).copy())
        out._backward = bwd if out.requires_grad else None
        return out

    def mean(self, axis=None, keepdims: bool = False):
        if axis is None:
            n = self.data.size
        else:
            n = self.data.shape[axis]
        return self.sum(axis=axis, keepdims=keepdims) * (1.0 / n)

    # ---- matmul ----

    def __matmul__(self, other):
        other = as_tensor(other)
        out = Tensor(self.data @ other.data, parents=(self, other))
        def bwd(g):
            if self.requires_grad:
                ga = g @ other.data.swapaxes(-1, -2)
                self._accumulate(_unbroadcast(ga, self.shape))
            if other.requires_grad:
                if other.ndim == 2 and self.ndim > 2:
                    # single dgemm instead of a batched temp + reduction
                    k = self.shape[-1]
                    n = other.shape[-1]
                    gb = self.data.reshape(-1, k).T @ g.reshape(-1, n)
                else:
                    gb = _unbroadcast(self.data.swapaxes(-1, -2) @ g,
                                      other.shape)
                other._accumulate(gb)
        out._backward = bwd if out.requires_grad else None
        return out


def as_tensor(x) -> Tensor:
    return x if isinstance(x, Tensor) else Tensor(x)


def parameter(data: np.ndarray) -> Tensor:
    return Tensor(data, requires_grad=True)


def embedding(table: Tensor, ids: np.ndarray) -> Tensor:
    """Row lookup: ids of shape S yield output of shape S + (dim,)."""
    ids = np.asarray(ids, dtype=np.intp)
    out = Tensor(table.data[ids], parents=(table,))
    def bwd(g):
        full = np.zeros_like(table.data)
        np.add.at(full, ids, g)
        table._accumulate(full)
    out._backward = bwd if out.requires_grad else None
    return out


def softmax(x: Tensor, axis: int = -1) -> Tensor:
    shifted = x + (-x.data.max(axis=axis, keepdims=True))  # constant shift
    e = shifted.exp()
    return e / e.sum(axis=axis, keepdims=True)


def log_softmax(x: Tensor, axis: int = -1) -> Tensor:
    shifted = x + (-x.data.max(axis=axis, keepdims=True))
    return shifted - shifted.exp().sum(axis=axis, keepdims=True).log()


def layer_norm(x: Tensor, gain: Tensor, bias: Tensor, eps: float = 1e-5) -> Tensor:
    mu = x.mean(axis=-1, keepdims=True)
    centered = x - mu
    var = (centered ** 2.0).mean(axis=-1, keepdims=True)
    return centered * (var + eps) ** -0.5 * gain + bias


_GELU_C = float(np.sqrt(2.0 / np.pi))


def gelu(x: Tensor) -> Tensor:
    inner = _GELU_C * (x + 0.044715 * x ** 3.0)
    return 0.5 * x * (1.0 + inner.tanh())

"""Dense fp64 tensors with a record-replay reverse-mode tape.

Forward ops compute eagerly with numpy and, when a tape is active, append a
vector-Jacobian-product record. ``Tape.backward`` replays the records in
reverse; because records are appended at creation time this is exactly
reverse topological order, and gradients for shared inputs accumulate
additively.

Tensors are treated as immutable values. There is no implicit broadcasting
between two tensors: elementwise ops require equal shapes, and the only
mixed-shape ops are the explicitly named ones (``add_rowvec``,
``add_colvec``, ``mul_colvec``, ``add_chanvec``). Scalars (Python floats)
combine with any shape.
"""

from __future__ import annotations

import threading
from typing import Callable, Sequence

import numpy as np

from .errors import ContractError, DimensionError, NumericError

Array = np.ndarray

_STACK = threading.local()


def _tape_stack() -> list["Tape"]:
    stack = getattr(_STACK, "tapes", None)
    if stack is None:
        stack = []
        _STACK.tapes = stack
    return stack


def _active_tape() -> "Tape | None":
    stack = _tape_stack()
    return stack[-1] if stack else None


class Tensor:
    """A frozen fp64 array plus a gradient slot filled by ``Tape.backward``."""

    __slots__ = ("data", "grad", "requires_grad")

    def __init__(self, data, requires_grad: bool = False):
        arr = np.asarray(data, dtype=np.float64)
        self.data = arr
        self.grad: Array | None = None
        self.requires_grad = bool(requires_grad)

    @property
    def shape(self) -> tuple[int, ...]:
        return self.data.shape

    @property
    def ndim(self) -> int:
        return self.data.ndim

    @property
    def size(self) -> int:
        return self.data.size

    def item(self) -> float:
        if self.data.size != 1:
            raise ContractError(f"item() on tensor of shape {self.shape}")
        return float(self.data.reshape(()))

    def __repr__(self) -> str:  # pragma: no cover
        return f"Tensor(shape={self.shape}, requires_grad={self.requires_grad})"

    # arithmetic; scalars are accepted, tensor operands must match shapes
    def __add__(self, other):
        if isinstance(other, Tensor):
            return add(self, other)
        return add_scalar(self, float(other))

    __radd__ = __add__

    def __sub__(self, other):
        if isinstance(other, Tensor):
            return sub(self, other)
        return add_scalar(self, -float(other))

    def __rsub__(self, other):
        return add_scalar(mul_scalar(self, -1.0), float(other))

    def __mul__(self, other):
        if isinstance(other, Tensor):
            return mul(self, other)
        return mul_scalar(self, float(other))

    __rmul__ = __mul__

    def __truediv__(self, other):
        if isinstance(other, Tensor):
            return div(self, other)
        return mul_scalar(self, 1.0 / float(other))

    def __rtruediv__(self, other):
        return mul_scalar(pow_scalar(self, -1.0), float(other))

    def __neg__(self):
        return mul_scalar(self, -1.0)

    def __pow__(self, p):
        return pow_scalar(self, float(p))

    def __matmul__(self, other):
        return matmul(self, other)

    def sum(self, axis: int | None = None) -> "Tensor":
        return tensor_sum(self, axis)

    def mean(self, axis: int | None = None) -> "Tensor":
        n = self.size if axis is None else self.shape[axis]
        return mul_scalar(tensor_sum(self, axis), 1.0 / n)

    def reshape(self, shape: Sequence[int]) -> "Tensor":
        return reshape(self, shape)

    def transpose(self) -> "Tensor":
        if self.ndim != 2:
            raise DimensionError(f"transpose: expected 2-D tensor, got shape {self.shape}")
        return permute(self, (1, 0))


class _Record:
    __slots__ = ("op", "inputs", "out", "vjp")

    def __init__(self, op: str, inputs: tuple[Tensor, ...], out: Tensor, vjp):
        self.op = op
        self.inputs = inputs
        self.out = out
        self.vjp = vjp


class Tape:
    """Ordered record of primitive ops, confined to one thread.

    Use as a context manager around the forward computation; then call
    ``backward(loss)`` to populate ``.grad`` on every tensor that requires
    gradients. Leaves that are registered on the tape but unreachable from
    the loss receive zero gradients.
    """

    def __init__(self):
        self._records: list[_Record] = []
        self._leaves: list[Tensor] = []
        self._leaf_ids: set[int] = set()
        self._produced: set[int] = set()

    def __enter__(self) -> "Tape":
        _tape_stack().append(self)
        return self

    def __exit__(self, exc_type, exc, tb) -> bool:
        top = _tape_stack().pop()
        if top is not self:  # pragma: no cover
            raise RuntimeError("tape stack corrupted")
        return False

    @property
    def op_log(self) -> list[str]:
        """Names of recorded ops in execution order."""
        return [rec.op for rec in self._records]

    @property
    def leaves(self) -> list[Tensor]:
        return list(self._leaves)

    def _record(self, op: str, inputs: tuple[Tensor, ...], out: Tensor, vjp) -> None:
        for t in inputs:
            if t.requires_grad and id(t) not in self._produced and id(t) not in self._leaf_ids:
                self._leaf_ids.add(id(t))
                self._leaves.append(t)
        self._records.append(_Record(op, inputs, out, vjp))
        self._produced.add(id(out))

    def backward(self, loss: Tensor) -> None:
        if loss.shape != ():
            raise ContractError(f"backward: loss must be scalar, got shape {loss.shape}")
        if id(loss) not in self._produced:
            raise ContractError("backward: loss was not produced through this tape")
        grads: dict[int, Array] = {id(loss): np.ones((), dtype=np.float64)}
        for rec in reversed(self._records):
            g = grads.get(id(rec.out))
            if g is None:
                continue
            for t, ig in zip(rec.inputs, rec.vjp(g)):
                if ig is None or not t.requires_grad:
                    continue
                acc = grads.get(id(t))
                grads[id(t)] = ig if acc is None else acc + ig
        for rec in self._records:
            for t in rec.inputs + (rec.out,):
                if t.requires_grad:
                    g = grads.get(id(t))
                    if g is not None:
                        t.grad = np.asarray(g, dtype=np.float64)
        for leaf in self._leaves:
            if id(leaf) not in grads:
                leaf.grad = np.zeros_like(leaf.data)


def _emit(op: str, inputs: Sequence[Tensor], out_data: Array, vjp) -> Tensor:
    if not np.all(np.isfinite(out_data)):
        raise NumericError(f"{op}: produced non-finite values")
    out = Tensor(out_data)
    tape = _active_tape()
    if tape is not None and any(t.requires_grad for t in inputs):
        out.requires_grad = True
        tape._record(op, tuple(inputs), out, vjp)
    return out


def _require_same_shape(op: str, a: Tensor, b: Tensor) -> None:
    if a.shape != b.shape:
        raise DimensionError(f"{op}: shapes {a.shape} and {b.shape} do not match")


# ---------------------------------------------------------------------------
# elementwise and scalar primitives

def add(a: Tensor, b: Tensor) -> Tensor:
    _require_same_shape("add", a, b)
    return _emit("add", (a, b), a.data + b.data, lambda g: (g, g))


def sub(a: Tensor, b: Tensor) -> Tensor:
    _require_same_shape("sub", a, b)
    return _emit("sub", (a, b), a.data - b.data, lambda g: (g, -g))


def mul(a: Tensor, b: Tensor) -> Tensor:
    _require_same_shape("mul", a, b)
    ad, bd = a.data, b.data
    return _emit("mul", (a, b), ad * bd, lambda g: (g * bd, g * ad))


def div(a: Tensor, b: Tensor) -> Tensor:
    _require_same_shape("div", a, b)
    ad, bd = a.data, b.data
    out = ad / bd
    return _emit("div", (a, b), out, lambda g: (g / bd, -g * out / bd))


def add_scalar(x: Tensor, c: float) -> Tensor:
    return _emit("add_scalar", (x,), x.data + c, lambda g: (g,))


def mul_scalar(x: Tensor, c: float) -> Tensor:
    return _emit("mul_scalar", (x,), x.data * c, lambda g: (g * c,))


def pow_scalar(x: Tensor, p: float) -> Tensor:
    xd = x.data
    out = xd ** p
    return _emit("pow_scalar", (x,), out, lambda g: (g * p * xd ** (p - 1.0),))


def clip_min(x: Tensor, floor: float) -> Tensor:
    """max(x, floor). Gradient routes to x only where x > floor."""
    xd = x.data
    return _emit("clip_min", (x,), np.maximum(xd, floor), lambda g: (g * (xd > floor),))


def exp(x: Tensor) -> Tensor:
    out = np.exp(x.data)
    return _emit("exp", (x,), out, lambda g: (g * out,))


def log(x: Tensor) -> Tensor:
    with np.errstate(divide="ignore", invalid="ignore"):
        out = np.log(x.data)
    xd = x.data
    return _emit("log", (x,), out, lambda g: (g / xd,))


def relu(x: Tensor) -> Tensor:
    xd = x.data
    return _emit("relu", (x,), np.maximum(xd, 0.0), lambda g: (g * (xd > 0.0),))


def sqrt(x: Tensor) -> Tensor:
    return pow_scalar(x, 0.5)


def square(x: Tensor) -> Tensor:
    return mul(x, x)


# ---------------------------------------------------------------------------
# linear algebra and shape primitives

def matmul(a: Tensor, b: Tensor) -> Tensor:
    if a.ndim != 2 or b.ndim != 2:
        raise DimensionError(f"matmul: expected 2-D operands, got {a.shape} and {b.shape}")
    if a.shape[1] != b.shape[0]:
        raise DimensionError(f"matmul: inner dims differ, {a.shape} vs {b.shape}")
    ad, bd = a.data, b.data
    return _emit("matmul", (a, b), ad @ bd, lambda g: (g @ bd.T, ad.T @ g))


def permute(x: Tensor, axes: Sequence[int]) -> Tensor:
    axes = tuple(axes)
    if sorted(axes) != list(range(x.ndim)):
        raise DimensionError(f"permute: axes {axes} invalid for shape {x.shape}")
    inv = tuple(np.argsort(axes))
    return _emit("permute", (x,), np.transpose(x.data, axes),
                 lambda g: (np.transpose(g, inv),))


def reshape(x: Tensor, shape: Sequence[int]) -> Tensor:
    shape = tuple(int(s) for s in shape)
    if int(np.prod(shape)) != x.size:
        raise DimensionError(f"reshape: cannot reshape {x.shape} to {shape}")
    old = x.shape
    return _emit("reshape", (x,), x.data.reshape(shape), lambda g: (g.reshape(old),))


def concat(parts: Sequence[Tensor], axis: int) -> Tensor:
    if not parts:
        raise DimensionError("concat: no tensors given")
    ndim = parts[0].ndim
    for t in parts:
        if t.ndim != ndim:
            raise DimensionError(f"concat: rank mismatch, {t.shape} vs {parts[0].shape}")
        for d in range(ndim):
            if d != axis and t.shape[d] != parts[0].shape[d]:
                raise DimensionError(f"concat: shapes {t.shape} and {parts[0].shape} differ off-axis")
    sizes = [t.shape[axis] for t in parts]
    offsets = np.cumsum(sizes)[:-1]

    def vjp(g):
        return tuple(np.ascontiguousarray(piece) for piece in np.split(g, offsets, axis=axis))

    return _emit("concat", tuple(parts), np.concatenate([t.data for t in parts], axis=axis), vjp)


def tensor_sum(x: Tensor, axis: int | None = None) -> Tensor:
    if axis is None:
        shape = x.shape
        return _emit("sum", (x,), np.asarray(x.data.sum()),
                     lambda g: (np.broadcast_to(g, shape).copy(),))
    if not 0 <= axis < x.ndim:
        raise DimensionError(f"sum: axis {axis} out of range for shape {x.shape}")
    shape = x.shape

    def vjp(g):
        return (np.broadcast_to(np.expand_dims(g, axis), shape).copy(),)

    return _emit("sum", (x,), x.data.sum(axis=axis), vjp)


# ---------------------------------------------------------------------------
# named structured-broadcast primitives (the only mixed-shape ops)

def add_rowvec(x: Tensor, v: Tensor) -> Tensor:
    """x[b, k] + v[k] for x (B, K) and v (K,)."""
    if x.ndim != 2 or v.shape != (x.shape[1],):
        raise DimensionError(f"add_rowvec: shapes {x.shape} and {v.shape} do not conform")
    return _emit("add_rowvec", (x, v), x.data + v.data[None, :],
                 lambda g: (g, g.sum(axis=0)))


def add_colvec(x: Tensor, v: Tensor) -> Tensor:
    """x[b, k] + v[b] for x (B, K) and v (B,)."""
    if x.ndim != 2 or v.shape != (x.shape[0],):
        raise DimensionError(f"add_colvec: shapes {x.shape} and {v.shape} do not conform")
    return _emit("add_colvec", (x, v), x.data + v.data[:, None],
                 lambda g: (g, g.sum(axis=1)))


def mul_colvec(x: Tensor, v: Tensor) -> Tensor:
    """x[b, k] * v[b] for x (B, K) and v (B,)."""
    if x.ndim != 2 or v.shape != (x.shape[0],):
        raise DimensionError(f"mul_colvec: shapes {x.shape} and {v.shape} do not conform")
    xd, vd = x.data, v.data
    return _emit("mul_colvec", (x, v), xd * vd[:, None],
                 lambda g: (g * vd[:, None], (g * xd).sum(axis=1)))


def add_chanvec(x: Tensor, v: Tensor) -> Tensor:
    """x[b, i, j, c] + v[c] for x (B, H, W, C) and v (C,)."""
    if x.ndim != 4 or v.shape != (x.shape[3],):
        raise DimensionError(f"add_chanvec: shapes {x.shape} and {v.shape} do not conform")
    return _emit("add_chanvec", (x, v), x.data + v.data[None, None, None, :],
                 lambda g: (g, g.sum(axis=(0, 1, 2))))


# ---------------------------------------------------------------------------
# convolution and pooling (NHWC, valid padding, stride 1 / pool 2x2 stride 2)

def conv2d(x: Tensor, kernel: Tensor) -> Tensor:
    """Valid 2-D convolution, stride 1, on (B, H, W, Cin) with (kh, kw, Cin, Cout)."""
    if x.ndim != 4 or kernel.ndim != 4:
        raise DimensionError(f"conv2d: expected 4-D operands, got {x.shape} and {kernel.shape}")
    bsz, h, w, cin = x.shape
    kh, kw, kcin, cout = kernel.shape
    if kcin != cin:
        raise DimensionError(f"conv2d: input channels {cin} vs kernel channels {kcin}")
    if h < kh or w < kw:
        raise DimensionError(f"conv2d: input {h}x{w} smaller than kernel {kh}x{kw}")
    ho, wo = h - kh + 1, w - kw + 1
    xd, kd = x.data, kernel.data
    out = np.zeros((bsz, ho, wo, cout))
    for i in range(kh):
        for j in range(kw):
            out += np.tensordot(xd[:, i:i + ho, j:j + wo, :], kd[i, j], axes=([3], [0]))

    def vjp(g):
        dx = np.zeros_like(xd)
        dk = np.zeros_like(kd)
        for i in range(kh):
            for j in range(kw):
                patch = xd[:, i:i + ho, j:j + wo, :]
                dk[i, j] = np.tensordot(patch, g, axes=([0, 1, 2], [0, 1, 2]))
                dx[:, i:i + ho, j:j + wo, :] += np.tensordot(g, kd[i, j], axes=([3], [1]))
        return dx, dk

    return _emit("conv2d", (x, kernel), out, vjp)


def maxpool2d(x: Tensor) -> Tensor:
    """2x2 max-pool, stride 2; trailing odd row/column dropped.

    Ties within a window break toward the lowest flat index, and the
    gradient routes only to that winning element.
    """
    if x.ndim != 4:
        raise DimensionError(f"maxpool2d: expected 4-D input, got {x.shape}")
    bsz, h, w, c = x.shape
    if h < 2 or w < 2:
        raise DimensionError(f"maxpool2d: spatial dims {h}x{w} smaller than window")
    ho, wo = h // 2, w // 2
    xt = x.data[:, :2 * ho, :2 * wo, :]
    win = xt.reshape(bsz, ho, 2, wo, 2, c).transpose(0, 1, 3, 5, 2, 4).reshape(bsz, ho, wo, c, 4)
    idx = win.argmax(axis=-1)
    out = np.take_along_axis(win, idx[..., None], axis=-1)[..., 0]
    in_shape = x.shape

    def vjp(g):
        g4 = np.zeros((bsz, ho, wo, c, 4))
        np.put_along_axis(g4, idx[..., None], g[..., None], axis=-1)
        dt = g4.reshape(bsz, ho, wo, c, 2, 2).transpose(0, 1, 4, 2, 5, 3)
        dx = np.zeros(in_shape)
        dx[:, :2 * ho, :2 * wo, :] = dt.reshape(bsz, 2 * ho, 2 * wo, c)
        return (dx,)

    return _emit("maxpool2d", (x,), out, vjp)


# ---------------------------------------------------------------------------
# composites (differentiable through the primitives above)

def norm_rows(x: Tensor) -> Tensor:
    """Euclidean norm of each row of a (B, h) tensor."""
    return sqrt(tensor_sum(mul(x, x), axis=1))


def l2_normalize_rows(x: Tensor, floor: float = 1e-12) -> Tensor:
    """Rows scaled to unit norm; norms are floored to keep the op finite."""
    inv = pow_scalar(clip_min(norm_rows(x), floor), -1.0)
    return mul_colvec(x, inv)


def cosine_rows(a: Tensor, b: Tensor, floor: float = 1e-12) -> Tensor:
    """Row-wise cosine similarity of two (B, h) tensors, norms floored."""
    _require_same_shape("cosine_rows", a, b)
    num = tensor_sum(mul(a, b), axis=1)
    na = clip_min(norm_rows(a), floor)
    nb = clip_min(norm_rows(b), floor)
    return div(num, mul(na, nb))


def mean_all(x: Tensor) -> Tensor:
    return x.mean()

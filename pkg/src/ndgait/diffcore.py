"""Reverse-mode automatic differentiation over dense numpy arrays.

A ``Tape`` is a Wengert list: every operation appends its result ``Value`` in
execution order, so the list itself is a topological order and the backward
pass is a single reverse sweep. Gradients accumulate (add, never overwrite)
on leaves; call ``zero_grads`` between optimizer steps.

Only the operations the gait decoder actually needs are provided. No general
broadcasting framework: elementwise ops follow numpy broadcasting with a
sum-reducing backward, matmul requires ndim >= 2.
"""

from __future__ import annotations

import numpy as np

from . import _kernels
from .errors import (
    ConfigError,
    ContractError,
    DegenerateBatchError,
    DomainError,
    NumericError,
    ShapeError,
)


class Value:
    """One node of the computation record.

    ``data`` is a dense numpy array; ``grad`` is a same-shape accumulator that
    materializes lazily (all zeros until a backward pass deposits into it).
    ``parents``/``backward_fn`` are the provenance used by the reverse sweep.
    """

    __slots__ = ("data", "tape", "parents", "backward_fn", "op", "idx", "_grad")

    def __init__(self, data, tape, parents=(), backward_fn=None, op="leaf"):
        self.data = data
        self.tape = tape
        self.parents = parents
        self.backward_fn = backward_fn
        self.op = op
        self.idx = -1
        self._grad = None

    @property
    def shape(self):
        return self.data.shape

    @property
    def ndim(self):
        return self.data.ndim

    @property
    def size(self):
        return self.data.size

    @property
    def grad(self):
        if self._grad is None:
            self._grad = np.zeros_like(self.data)
        return self._grad

    def add_grad(self, g):
        if self._grad is None:
            self._grad = np.zeros_like(self.data)
        self._grad += g

    def zero_grad(self):
        self._grad = None

    def item(self):
        return float(self.data)

    def __repr__(self):
        return f"Value(op={self.op!r}, shape={self.data.shape}, dtype={self.data.dtype})"

    # operator sugar
    def __add__(self, other):
        return add(self, _as_value(self.tape, other))

    def __radd__(self, other):
        return add(_as_value(self.tape, other), self)

    def __sub__(self, other):
        return sub(self, _as_value(self.tape, other))

    def __rsub__(self, other):
        return sub(_as_value(self.tape, other), self)

    def __mul__(self, other):
        return mul(self, _as_value(self.tape, other))

    def __rmul__(self, other):
        return mul(_as_value(self.tape, other), self)

    def __truediv__(self, other):
        return div(self, _as_value(self.tape, other))

    def __matmul__(self, other):
        return matmul(self, other)

    def __neg__(self):
        return neg(self)


class Tape:
    """Ordered record of Values; re-running with the same seed is bit-identical.

    ``retain_grads=True`` additionally deposits gradients on interior nodes
    (handy in tests); by default only leaves retain them.
    """

    def __init__(self, seed=0, dtype=np.float32, retain_grads=False):
        self.nodes: list[Value] = []
        self.rng_seed = int(seed)
        self.rng = np.random.default_rng(self.rng_seed)
        self.dtype = np.dtype(dtype)
        self.retain_grads = retain_grads

    def _record(self, v: Value) -> Value:
        v.idx = len(self.nodes)
        self.nodes.append(v)
        return v

    def leaf(self, data, op="leaf") -> Value:
        arr = np.asarray(data, dtype=self.dtype)
        return self._record(Value(arr, self, op=op))

    def constant(self, data) -> Value:
        return self.leaf(data, op="const")


def _as_value(tape, x):
    if isinstance(x, Value):
        return x
    return tape.constant(x)


def _node(tape, data, parents, backward_fn, op):
    return tape._record(Value(data, tape, parents=parents, backward_fn=backward_fn, op=op))


def backward(root: Value):
    """Accumulate d(root)/d(leaf) into every reachable leaf's grad.

    Deterministic: one reverse sweep over the tape in recording order,
    visiting each needed node exactly once. Contributions to interior nodes
    live in a per-call scratch table, so calling backward twice (without
    zeroing) exactly doubles the leaf gradients.
    """
    if root.data.size != 1:
        raise ContractError(f"backward root must be scalar, got shape {root.data.shape}")
    tape = root.tape
    contrib: dict[int, np.ndarray] = {id(root): np.ones_like(root.data)}
    for v in reversed(tape.nodes[: root.idx + 1]):
        g = contrib.pop(id(v), None)
        if g is None:
            continue
        if v.backward_fn is None or tape.retain_grads:
            v.add_grad(g)
        if v.backward_fn is None:
            continue

        def acc(parent, pg, _contrib=contrib):
            key = id(parent)
            if key in _contrib:
                _contrib[key] = _contrib[key] + pg
            else:
                _contrib[key] = pg

        v.backward_fn(g, acc)


def zero_grads(values):
    for v in values:
        v.zero_grad()


def _unbroadcast(g, shape):
    """Reduce a broadcast gradient back to the original operand shape."""
    if g.shape == shape:
        return g
    extra = g.ndim - len(shape)
    if extra > 0:
        g = g.sum(axis=tuple(range(extra)))
    axes = tuple(i for i, s in enumerate(shape) if s == 1 and g.shape[i] != 1)
    if axes:
        g = g.sum(axis=axes, keepdims=True)
    return g


# ---------------------------------------------------------------------------
# elementwise
# ---------------------------------------------------------------------------


def add(a: Value, b: Value) -> Value:
    out = a.data + b.data

    def bw(g, acc):
        acc(a, _unbroadcast(g, a.data.shape))
        acc(b, _unbroadcast(g, b.data.shape))

    return _node(a.tape, out, (a, b), bw, "add")


def sub(a: Value, b: Value) -> Value:
    out = a.data - b.data

    def bw(g, acc):
        acc(a, _unbroadcast(g, a.data.shape))
        acc(b, _unbroadcast(-g, b.data.shape))

    return _node(a.tape, out, (a, b), bw, "sub")


def mul(a: Value, b: Value) -> Value:
    out = a.data * b.data

    def bw(g, acc):
        acc(a, _unbroadcast(g * b.data, a.data.shape))
        acc(b, _unbroadcast(g * a.data, b.data.shape))

    return _node(a.tape, out, (a, b), bw, "mul")


def div(a: Value, b: Value) -> Value:
    out = a.data / b.data

    def bw(g, acc):
        acc(a, _unbroadcast(g / b.data, a.data.shape))
        acc(b, _unbroadcast(-g * a.data / (b.data * b.data), b.data.shape))

    return _node(a.tape, out, (a, b), bw, "div")


def neg(a: Value) -> Value:
    def bw(g, acc):
        acc(a, -g)

    return _node(a.tape, -a.data, (a,), bw, "neg")


def scale(a: Value, c: float) -> Value:
    c = float(c)

    def bw(g, acc):
        acc(a, g * c)

    return _node(a.tape, a.data * c, (a,), bw, "scale")


def exp(a: Value) -> Value:
    out = np.exp(a.data)

    def bw(g, acc):
        acc(a, g * out)

    return _node(a.tape, out, (a,), bw, "exp")


def log(a: Value) -> Value:
    out = np.log(a.data)

    def bw(g, acc):
        acc(a, g / a.data)

    return _node(a.tape, out, (a,), bw, "log")


def sqrt(a: Value) -> Value:
    out = np.sqrt(a.data)

    def bw(g, acc):
        acc(a, g * (0.5 / out))

    return _node(a.tape, out, (a,), bw, "sqrt")


def relu(a: Value) -> Value:
    mask = a.data > 0
    out = np.where(mask, a.data, 0)

    def bw(g, acc):
        acc(a, g * mask)

    return _node(a.tape, out.astype(a.data.dtype, copy=False), (a,), bw, "relu")


def clip_min(a: Value, lo: float) -> Value:
    """max(a, lo); gradient passes only where a > lo (clamped region is flat)."""
    lo = float(lo)
    mask = a.data > lo
    out = np.where(mask, a.data, lo).astype(a.data.dtype, copy=False)

    def bw(g, acc):
        acc(a, g * mask)

    return _node(a.tape, out, (a,), bw, "clip_min")


# ---------------------------------------------------------------------------
# shape manipulation
# ---------------------------------------------------------------------------


def reshape(a: Value, shape) -> Value:
    shape = tuple(shape)
    out = a.data.reshape(shape)

    def bw(g, acc):
        acc(a, g.reshape(a.data.shape))

    return _node(a.tape, out, (a,), bw, "reshape")


def permute(a: Value, axes) -> Value:
    axes = tuple(axes)
    inv = tuple(np.argsort(axes))
    out = np.transpose(a.data, axes)

    def bw(g, acc):
        acc(a, np.transpose(g, inv))

    return _node(a.tape, out, (a,), bw, "permute")


def swap_last(a: Value) -> Value:
    """Transpose the final two axes."""
    if a.ndim < 2:
        raise ShapeError("swap_last needs ndim >= 2")
    out = np.swapaxes(a.data, -1, -2)

    def bw(g, acc):
        acc(a, np.swapaxes(g, -1, -2))

    return _node(a.tape, out, (a,), bw, "swap_last")


def broadcast_to(a: Value, shape) -> Value:
    shape = tuple(shape)
    out = np.broadcast_to(a.data, shape)

    def bw(g, acc):
        acc(a, _unbroadcast(g, a.data.shape))

    return _node(a.tape, out, (a,), bw, "broadcast_to")


def index(a: Value, key) -> Value:
    """Basic (slice/int/ellipsis) indexing. Each output cell maps to one input cell."""
    out = a.data[key]

    def bw(g, acc):
        z = np.zeros_like(a.data)
        z[key] = g
        acc(a, z)

    return _node(a.tape, out, (a,), bw, "index")


def take_along(a: Value, indices: np.ndarray, axis: int) -> Value:
    """np.take_along_axis as an op (used to reorder score rows by rank)."""
    if axis != 1 or a.ndim != 2:
        raise ContractError("take_along implemented for 2-D inputs along axis=1 only")
    indices = np.asarray(indices)
    out = np.take_along_axis(a.data, indices, axis=axis)

    def bw(g, acc):
        z = np.zeros_like(a.data)
        rows = np.arange(a.data.shape[0])[:, None]
        np.add.at(z, (rows, indices), g)
        acc(a, z)

    return _node(a.tape, out, (a,), bw, "take_along")


def crop_pad_last(a: Value, t: int) -> Value:
    """Trim or zero-pad the trailing end of the last axis to exactly t."""
    t0 = a.data.shape[-1]
    if t0 >= t:
        out = a.data[..., :t]
    else:
        pad = [(0, 0)] * (a.ndim - 1) + [(0, t - t0)]
        out = np.pad(a.data, pad)

    def bw(g, acc):
        if t0 >= t:
            z = np.zeros_like(a.data)
            z[..., :t] = g
            acc(a, z)
        else:
            acc(a, g[..., :t0])

    return _node(a.tape, out, (a,), bw, "crop_pad_last")


# ---------------------------------------------------------------------------
# reductions
# ---------------------------------------------------------------------------


def _expand_reduced(g, shape, axis, keepdims):
    if axis is None:
        return np.broadcast_to(g, shape)
    if not keepdims:
        axes = axis if isinstance(axis, tuple) else (axis,)
        axes = tuple(a % len(shape) for a in axes)
        g = np.expand_dims(g, axes)
    return np.broadcast_to(g, shape)


def sum_(a: Value, axis=None, keepdims=False) -> Value:
    out = a.data.sum(axis=axis, keepdims=keepdims)
    out = np.asarray(out, dtype=a.data.dtype)

    def bw(g, acc):
        acc(a, _expand_reduced(g, a.data.shape, axis, keepdims).astype(a.data.dtype, copy=False))

    return _node(a.tape, out, (a,), bw, "sum")


def mean_(a: Value, axis=None, keepdims=False) -> Value:
    out = a.data.mean(axis=axis, keepdims=keepdims)
    out = np.asarray(out, dtype=a.data.dtype)
    count = a.data.size / out.size

    def bw(g, acc):
        gg = _expand_reduced(g, a.data.shape, axis, keepdims) / a.data.dtype.type(count)
        acc(a, gg.astype(a.data.dtype, copy=False))

    return _node(a.tape, out, (a,), bw, "mean")


# ---------------------------------------------------------------------------
# linear algebra
# ---------------------------------------------------------------------------


def matmul(a: Value, b: Value) -> Value:
    if a.ndim < 2 or b.ndim < 2:
        raise ShapeError("matmul requires ndim >= 2 operands")
    if a.data.shape[-1] != b.data.shape[-2]:
        raise ShapeError(
            f"matmul inner dimensions disagree: {a.data.shape} @ {b.data.shape}"
        )
    out = a.data @ b.data

    def bw(g, acc):
        ga = g @ np.swapaxes(b.data, -1, -2)
        gb = np.swapaxes(a.data, -1, -2) @ g
        acc(a, _unbroadcast(ga, a.data.shape))
        acc(b, _unbroadcast(gb, b.data.shape))

    return _node(a.tape, out, (a, b), bw, "matmul")


# ---------------------------------------------------------------------------
# softmax family
# ---------------------------------------------------------------------------


def softmax(a: Value, axis=-1) -> Value:
    """Max-shifted softmax along ``axis``."""
    x = a.data
    shifted = x - x.max(axis=axis, keepdims=True)
    e = np.exp(shifted)
    out = e / e.sum(axis=axis, keepdims=True)

    def bw(g, acc):
        dot = (g * out).sum(axis=axis, keepdims=True)
        acc(a, out * (g - dot))

    return _node(a.tape, out, (a,), bw, "softmax")


def logsumexp(a: Value) -> Value:
    """Numerically stable log-sum-exp of a vector, returned as a scalar."""
    if a.ndim != 1:
        raise ShapeError("logsumexp expects a 1-D input")
    if a.data.size == 0:
        raise DomainError("logsumexp of an empty vector")
    m = a.data.max()
    out = np.asarray(m + np.log(np.exp(a.data - m).sum()), dtype=a.data.dtype)

    def bw(g, acc):
        acc(a, g * np.exp(a.data - out))

    return _node(a.tape, out, (a,), bw, "logsumexp")


def suffix_logsumexp(a: Value) -> Value:
    """Row-wise suffix log-sum-exp: out[i, j] = lse(a[i, j:]).

    Forward uses pairwise np.logaddexp accumulation (max-shift built in).
    """
    if a.ndim != 2:
        raise ShapeError("suffix_logsumexp expects a 2-D input")
    rev = a.data[:, ::-1]
    out = np.logaddexp.accumulate(rev, axis=1)[:, ::-1].astype(a.data.dtype, copy=False)

    def bw(g, acc):
        n, m = a.data.shape
        gx = np.zeros_like(a.data)
        for j in range(m):
            gx[:, j:] += g[:, j : j + 1] * np.exp(a.data[:, j:] - out[:, j : j + 1])
        acc(a, gx)

    return _node(a.tape, out, (a,), bw, "suffix_logsumexp")


# ---------------------------------------------------------------------------
# convolution
# ---------------------------------------------------------------------------


def _pad_time(x, pad):
    if pad == 0:
        return x
    return np.pad(x, ((0, 0), (0, 0), (pad, pad)))


def conv1d(a: Value, w: Value, stride: int = 1, pad: int = 0) -> Value:
    """Cross-correlation of (N, Cin, T) [or (Cin, T)] with kernels (Cout, Cin, k)."""
    if stride < 1:
        raise ConfigError("conv1d stride must be >= 1")
    if pad < 0:
        raise ConfigError("conv1d pad must be >= 0")
    squeeze = a.ndim == 2
    x = a.data[None] if squeeze else a.data
    if x.ndim != 3 or w.ndim != 3:
        raise ShapeError("conv1d expects (N, Cin, T) input and (Cout, Cin, k) kernels")
    n, cin, t = x.shape
    cout, cin_w, k = w.data.shape
    if cin_w != cin:
        raise ShapeError(f"conv1d channel mismatch: input {cin}, kernels {cin_w}")
    if k > t + 2 * pad:
        raise ShapeError(f"kernel length {k} exceeds padded input {t + 2 * pad}")
    xp = _pad_time(x, pad)
    cols = _kernels.im2col(xp, k, stride)  # (N, Cin*k, To)
    w2 = w.data.reshape(cout, cin * k)
    out = np.matmul(w2[None], cols)  # (N, Cout, To)
    if squeeze:
        out = out[0]

    def bw(g, acc):
        gy = g[None] if squeeze else g
        gw = np.matmul(gy, cols.transpose(0, 2, 1)).sum(axis=0).reshape(w.data.shape)
        gcols = np.matmul(w2.T[None], gy)  # (N, Cin*k, To)
        gxp = _kernels.col2im(gcols, k, stride, t + 2 * pad)
        gx = gxp[:, :, pad : pad + t] if pad else gxp
        acc(a, gx[0] if squeeze else gx)
        acc(w, gw)

    return _node(a.tape, out, (a, w), bw, "conv1d")


def conv1d_transpose(a: Value, w: Value, stride: int = 1, out_pad: int = 0) -> Value:
    """Adjoint of conv1d. Input (N, Cin, T) [or (Cin, T)], kernels (Cin, Cout, k).

    Output length is (T - 1) * stride + k + out_pad; out_pad appends zeros.
    """
    if stride < 1:
        raise ConfigError("conv1d_transpose stride must be >= 1")
    if out_pad < 0:
        raise ConfigError("conv1d_transpose out_pad must be >= 0")
    squeeze = a.ndim == 2
    x = a.data[None] if squeeze else a.data
    if x.ndim != 3 or w.ndim != 3:
        raise ShapeError("conv1d_transpose expects (N, Cin, T) input and (Cin, Cout, k) kernels")
    n, cin, t = x.shape
    cin_w, cout, k = w.data.shape
    if cin_w != cin:
        raise ShapeError(f"conv1d_transpose channel mismatch: input {cin}, kernels {cin_w}")
    tf = (t - 1) * stride + k
    w2 = w.data.reshape(cin, cout * k)
    cols = np.matmul(w2.T[None], x)  # (N, Cout*k, T)
    out = _kernels.col2im(cols, k, stride, tf)
    if out_pad:
        out = np.pad(out, ((0, 0), (0, 0), (0, out_pad)))
    if squeeze:
        out = out[0]

    def bw(g, acc):
        gy = g[None] if squeeze else g
        if out_pad:
            gy = gy[:, :, :tf]
        gcols = _kernels.im2col(np.ascontiguousarray(gy), k, stride)  # (N, Cout*k, T)
        gx = np.matmul(w2[None], gcols)  # (N, Cin, T)
        gw = np.matmul(x, gcols.transpose(0, 2, 1)).sum(axis=0).reshape(w.data.shape)
        acc(a, gx[0] if squeeze else gx)
        acc(w, gw)

    return _node(a.tape, out, (a, w), bw, "conv1d_transpose")


# ---------------------------------------------------------------------------
# batch normalization
# ---------------------------------------------------------------------------


def batchnorm1d(
    a: Value,
    gamma: Value,
    beta: Value,
    eps: float = 1e-5,
    train: bool = True,
    running=None,
    momentum: float = 0.1,
) -> Value:
    """Per-channel normalization of (N, C, T) over the batch and time axes.

    Train mode standardizes with batch statistics (biased variance) and, when
    ``running`` is a dict with 'mean'/'var' arrays, folds them into the
    running statistics in place. Eval mode normalizes with the running stats.
    """
    x = a.data
    if x.ndim != 3:
        raise ShapeError("batchnorm1d expects (N, C, T)")
    n, c, t = x.shape
    gshape = (1, c, 1)
    if train:
        if n * t < 2:
            raise DegenerateBatchError(f"batchnorm train mode needs N*T >= 2, got {n * t}")
        mu = x.mean(axis=(0, 2), keepdims=True)
        var = x.var(axis=(0, 2), keepdims=True)
        ivar = 1.0 / np.sqrt(var + eps)
        xhat = (x - mu) * ivar
        if running is not None:
            running["mean"] *= 1.0 - momentum
            running["mean"] += momentum * mu.reshape(c)
            running["var"] *= 1.0 - momentum
            running["var"] += momentum * var.reshape(c)
    else:
        if running is None:
            raise ContractError("batchnorm eval mode requires running statistics")
        mu = running["mean"].reshape(gshape).astype(x.dtype, copy=False)
        ivar = (1.0 / np.sqrt(running["var"].reshape(gshape) + eps)).astype(x.dtype, copy=False)
        xhat = (x - mu) * ivar
    out = gamma.data.reshape(gshape) * xhat + beta.data.reshape(gshape)
    out = out.astype(x.dtype, copy=False)

    def bw(g, acc):
        acc(beta, g.sum(axis=(0, 2)).reshape(beta.data.shape))
        acc(gamma, (g * xhat).sum(axis=(0, 2)).reshape(gamma.data.shape))
        dxhat = g * gamma.data.reshape(gshape)
        if train:
            m = n * t
            s1 = dxhat.sum(axis=(0, 2), keepdims=True)
            s2 = (dxhat * xhat).sum(axis=(0, 2), keepdims=True)
            gx = (ivar / m) * (m * dxhat - s1 - xhat * s2)
        else:
            gx = dxhat * ivar
        acc(a, gx.astype(x.dtype, copy=False))

    return _node(a.tape, out, (a, gamma, beta), bw, "batchnorm1d")


# ---------------------------------------------------------------------------
# attention
# ---------------------------------------------------------------------------


def scaled_dot_attention(q: Value, k: Value, v: Value) -> Value:
    """softmax(Q K^T / sqrt(d_h)) V over the last two axes; leading axes batch."""
    if q.ndim < 2 or k.ndim < 2 or v.ndim < 2:
        raise ShapeError("attention operands need ndim >= 2")
    dh = q.data.shape[-1]
    m = k.data.shape[-2]
    if dh < 1:
        raise ShapeError("attention head dimension must be positive")
    if m < 1:
        raise ShapeError("attention needs at least one key")
    if k.data.shape[-1] != dh:
        raise ShapeError(f"query dim {dh} != key dim {k.data.shape[-1]}")
    if v.data.shape[-2] != m:
        raise ShapeError(f"key count {m} != value count {v.data.shape[-2]}")
    scores = scale(matmul(q, swap_last(k)), 1.0 / np.sqrt(dh))
    attn = softmax(scores, axis=-1)
    return matmul(attn, v)


# ---------------------------------------------------------------------------
# finite differences
# ---------------------------------------------------------------------------


def finite_diff_check(f, params, eps=1e-5, dtype=np.float64):
    """Max relative error between analytic and central-difference gradients.

    ``f(tape, leaves)`` builds a scalar Value from a dict of leaf Values
    matching ``params`` (a dict name -> ndarray). The analytic pass and every
    perturbed forward run on fresh tapes in ``dtype`` (use 64-bit; central
    differences are meaningless in 32-bit).

    Returns max over all parameter entries of
    |analytic - central| / max(1, |central|).
    """
    work = {k: np.array(v, dtype=dtype) for k, v in params.items()}

    def run():
        tape = Tape(dtype=dtype)
        leaves = {k: tape.leaf(v) for k, v in work.items()}
        out = f(tape, leaves)
        if out.data.size != 1:
            raise ContractError("finite_diff_check target must be scalar")
        if not np.isfinite(out.data).all():
            raise NumericError("non-finite objective during finite_diff_check")
        return tape, leaves, out

    tape, leaves, out = run()
    backward(out)
    analytic = {k: leaves[k].grad.copy() for k in work}

    worst = 0.0
    for name, arr in work.items():
        flat = arr.reshape(-1)
        aflat = analytic[name].reshape(-1)
        for i in range(flat.size):
            orig = flat[i]
            flat[i] = orig + eps
            fp = float(run()[2].data)
            flat[i] = orig - eps
            fm = float(run()[2].data)
            flat[i] = orig
            if not (np.isfinite(fp) and np.isfinite(fm)):
                raise NumericError(f"non-finite perturbation at {name}[{i}]")
            central = (fp - fm) / (2.0 * eps)
            err = abs(aflat[i] - central) / max(1.0, abs(central))
            if err > worst:
                worst = err
    return worst

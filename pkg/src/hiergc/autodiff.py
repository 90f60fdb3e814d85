"""Dense tensors with reverse-mode differentiation.

Each op returns a new Tensor; whenever an input requires gradients,
the op attaches a backward rule so that ``backward`` can replay the
recorded graph in reverse topological order. Arrays default to
float64; float32 inputs are kept as float32 so large training runs can
trade precision for speed. Adjacency matrices that stay constant
during training can be wrapped in :class:`SparseConst` and multiplied
with ``spmm``, which is semantically a plain matmul with a constant
left operand.
"""

from __future__ import annotations

import numpy as np
from scipy import sparse


def _as_float_array(data):
    arr = np.asarray(data)
    if arr.dtype not in (np.float32, np.float64):
        arr = arr.astype(np.float64)
    return arr


class Tensor:
    """A dense array plus an optional link to the op that produced it."""

    __slots__ = ("data", "grad", "requires_grad", "parents", "backward_rule")

    def __init__(self, data, requires_grad=False):
        self.data = _as_float_array(data)
        self.grad = None
        self.requires_grad = bool(requires_grad)
        self.parents = ()
        self.backward_rule = None

    @property
    def shape(self):
        return self.data.shape

    @property
    def size(self):
        return self.data.size

    def item(self):
        if self.data.size != 1:
            raise ValueError(f"item() on tensor of shape {self.data.shape}")
        return float(self.data.reshape(-1)[0])

    def __repr__(self):
        return f"Tensor(shape={self.data.shape}, requires_grad={self.requires_grad})"


class SparseConst:
    """Constant sparse matrix operand; caches its transpose for backward."""

    def __init__(self, mat):
        self.mat = sparse.csr_matrix(mat)
        self.mat_t = self.mat.T.tocsr()

    @property
    def shape(self):
        return self.mat.shape


class Segments:
    """Contiguous row segments of a stacked matrix (one block per graph)."""

    def __init__(self, counts):
        self.counts = np.asarray(counts, dtype=np.int64)
        if self.counts.size == 0 or np.any(self.counts < 1):
            raise ValueError("segments need at least one row each")
        self.starts = np.concatenate(([0], np.cumsum(self.counts)[:-1]))
        self.total = int(self.counts.sum())

    def __len__(self):
        return self.counts.size


def tensor(data, requires_grad=False):
    return Tensor(data, requires_grad=requires_grad)


def parameter(data):
    return Tensor(data, requires_grad=True)


def _result(data, parents, bw):
    out = Tensor(data)
    if any(p.requires_grad for p in parents):
        out.requires_grad = True
        out.parents = tuple(parents)
        out.backward_rule = bw
    return out


def _check_2d(name, *tensors):
    for t in tensors:
        if t.data.ndim != 2:
            raise ValueError(f"{name}: expected 2-D tensor, got shape {t.data.shape}")


# ---------------------------------------------------------------------------
# linear algebra


def matmul(a, b):
    _check_2d("matmul", a, b)
    if a.data.shape[1] != b.data.shape[0]:
        raise ValueError(f"matmul: shapes {a.data.shape} x {b.data.shape}")
    out = a.data @ b.data

    def bw(g):
        return (
            g @ b.data.T if a.requires_grad else None,
            a.data.T @ g if b.requires_grad else None,
        )

    return _result(out, (a, b), bw)


def spmm(a: SparseConst, b: Tensor):
    """Sparse constant times dense tensor."""
    _check_2d("spmm", b)
    if a.shape[1] != b.data.shape[0]:
        raise ValueError(f"spmm: shapes {a.shape} x {b.data.shape}")
    out = a.mat @ b.data

    def bw(g):
        return (a.mat_t @ g,)

    return _result(out, (b,), bw)


def transpose(a):
    _check_2d("transpose", a)

    def bw(g):
        return (g.T,)

    return _result(a.data.T, (a,), bw)


def reshape(a, shape):
    orig = a.data.shape

    def bw(g):
        return (g.reshape(orig),)

    return _result(a.data.reshape(shape), (a,), bw)


# ---------------------------------------------------------------------------
# arithmetic


def add(a, b):
    if a.data.shape != b.data.shape:
        raise ValueError(f"add: shapes {a.data.shape} vs {b.data.shape}")

    def bw(g):
        return g, g

    return _result(a.data + b.data, (a, b), bw)


def sub(a, b):
    if a.data.shape != b.data.shape:
        raise ValueError(f"sub: shapes {a.data.shape} vs {b.data.shape}")

    def bw(g):
        return g, -g if b.requires_grad else None

    return _result(a.data - b.data, (a, b), bw)


def add_bias(a, bias):
    """Add a (1, k) bias row to every row of a (n, k) matrix."""
    _check_2d("add_bias", a, bias)
    if bias.data.shape != (1, a.data.shape[1]):
        raise ValueError(f"add_bias: bias {bias.data.shape} for matrix {a.data.shape}")

    def bw(g):
        return g, g.sum(axis=0, keepdims=True) if bias.requires_grad else None

    return _result(a.data + bias.data, (a, bias), bw)


def mul(a, b):
    if a.data.shape != b.data.shape:
        raise ValueError(f"mul: shapes {a.data.shape} vs {b.data.shape}")

    def bw(g):
        return (
            g * b.data if a.requires_grad else None,
            g * a.data if b.requires_grad else None,
        )

    return _result(a.data * b.data, (a, b), bw)


def mul_colvec(a, c):
    """Scale every column of a (n, k) matrix by a (n, 1) column."""
    _check_2d("mul_colvec", a, c)
    if c.data.shape != (a.data.shape[0], 1):
        raise ValueError(f"mul_colvec: column {c.data.shape} for matrix {a.data.shape}")

    def bw(g):
        return (
            g * c.data if a.requires_grad else None,
            (g * a.data).sum(axis=1, keepdims=True) if c.requires_grad else None,
        )

    return _result(a.data * c.data, (a, c), bw)


def mul_scalar(a, s):
    s = float(s)

    def bw(g):
        return (g * s,)

    return _result(a.data * s, (a,), bw)


def neg(a):
    def bw(g):
        return (-g,)

    return _result(-a.data, (a,), bw)


# ---------------------------------------------------------------------------
# elementwise nonlinearities


def relu(a):
    out = np.maximum(a.data, 0.0)

    def bw(g):
        return (g * (a.data > 0.0),)

    return _result(out, (a,), bw)


def tanh(a):
    out = np.tanh(a.data)

    def bw(g):
        return (g * (1.0 - out * out),)

    return _result(out, (a,), bw)


def _sigmoid(x):
    out = np.empty_like(x)
    pos = x >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-x[pos]))
    ex = np.exp(x[~pos])
    out[~pos] = ex / (1.0 + ex)
    return out


def sigmoid(a):
    out = _sigmoid(a.data)

    def bw(g):
        return (g * out * (1.0 - out),)

    return _result(out, (a,), bw)


def _softplus(x):
    # overflow-safe: sp(x) = max(x, 0) + log1p(exp(-|x|))
    return np.maximum(x, 0.0) + np.log1p(np.exp(-np.abs(x)))


def softplus(a):
    # keep exp(-|x|) around: sigma(x) for the backward pass falls out of it
    t = np.exp(-np.abs(a.data))
    out = np.maximum(a.data, 0.0) + np.log1p(t)

    def bw(g):
        sig = np.where(a.data >= 0, 1.0 / (1.0 + t), t / (1.0 + t))
        return (g * sig,)

    return _result(out, (a,), bw)


def neg_softplus_sym(a):
    """-sp(x) - sp(-x) elementwise, one exp pass instead of four.

    Equals -(|x| + 2 log1p(exp(-|x|))); the derivative is -tanh(x/2).
    """
    ax = np.abs(a.data)
    out = -(ax + 2.0 * np.log1p(np.exp(-ax)))

    def bw(g):
        return (-g * np.tanh(0.5 * a.data),)

    return _result(out, (a,), bw)


def log(a):
    if np.any(a.data <= 0.0):
        raise ValueError("log: non-positive input")
    out = np.log(a.data)

    def bw(g):
        return (g / a.data,)

    return _result(out, (a,), bw)


def exp(a):
    out = np.exp(a.data)

    def bw(g):
        return (g * out,)

    return _result(out, (a,), bw)


# ---------------------------------------------------------------------------
# reductions and row restructuring


def softmax_rows(a):
    _check_2d("softmax_rows", a)
    z = a.data - a.data.max(axis=1, keepdims=True)
    e = np.exp(z)
    out = e / e.sum(axis=1, keepdims=True)

    def bw(g):
        dot = (g * out).sum(axis=1, keepdims=True)
        return (out * (g - dot),)

    return _result(out, (a,), bw)


def segment_softmax(a, seg: Segments):
    """Column-wise softmax within each contiguous row segment."""
    _check_2d("segment_softmax", a)
    if a.data.shape[0] != seg.total:
        raise ValueError(f"segment_softmax: {a.data.shape[0]} rows for {seg.total} segment rows")
    mx = np.maximum.reduceat(a.data, seg.starts, axis=0)
    z = np.exp(a.data - np.repeat(mx, seg.counts, axis=0))
    tot = np.add.reduceat(z, seg.starts, axis=0)
    out = z / np.repeat(tot, seg.counts, axis=0)

    def bw(g):
        dot = np.add.reduceat(g * out, seg.starts, axis=0)
        return (out * (g - np.repeat(dot, seg.counts, axis=0)),)

    return _result(out, (a,), bw)


def rowsum(a):
    _check_2d("rowsum", a)
    out = a.data.sum(axis=1, keepdims=True)

    def bw(g):
        return (np.broadcast_to(g, a.data.shape).copy(),)

    return _result(out, (a,), bw)


def sum_all(a):
    def bw(g):
        return (np.full(a.data.shape, float(g), dtype=a.data.dtype),)

    return _result(np.asarray(a.data.sum()), (a,), bw)


def mean_all(a):
    n = a.data.size

    def bw(g):
        return (np.full(a.data.shape, float(g) / n, dtype=a.data.dtype),)

    return _result(np.asarray(a.data.mean()), (a,), bw)


def concat_rows(tensors):
    _check_2d("concat_rows", *tensors)
    sizes = [t.data.shape[0] for t in tensors]
    bounds = np.cumsum(sizes)[:-1]

    def bw(g):
        return tuple(np.split(g, bounds, axis=0))

    return _result(np.concatenate([t.data for t in tensors], axis=0), tuple(tensors), bw)


def concat_cols(tensors):
    _check_2d("concat_cols", *tensors)
    sizes = [t.data.shape[1] for t in tensors]
    bounds = np.cumsum(sizes)[:-1]

    def bw(g):
        return tuple(np.split(g, bounds, axis=1))

    return _result(np.concatenate([t.data for t in tensors], axis=1), tuple(tensors), bw)


def take_rows(a, idx):
    """Select rows by an integer index array (repeats allowed)."""
    _check_2d("take_rows", a)
    idx = np.asarray(idx, dtype=np.int64)
    n = a.data.shape[0]

    def bw(g):
        out = np.empty_like(a.data)
        for j in range(a.data.shape[1]):
            out[:, j] = np.bincount(idx, weights=g[:, j], minlength=n)
        return (out,)

    return _result(a.data[idx], (a,), bw)


def permute_rows(a, perm):
    """Reorder rows by a permutation (bijective index array)."""
    _check_2d("permute_rows", a)
    perm = np.asarray(perm, dtype=np.int64)
    inv = np.argsort(perm)

    def bw(g):
        return (g[inv],)

    return _result(a.data[perm], (a,), bw)


def slice_cols(a, j0, j1):
    _check_2d("slice_cols", a)

    def bw(g):
        out = np.zeros_like(a.data)
        out[:, j0:j1] = g
        return (out,)

    return _result(a.data[:, j0:j1], (a,), bw)


# ---------------------------------------------------------------------------
# training-specific ops


def dropout(a, rate, training, rng=None):
    """Inverted dropout; identity when not training or rate == 0."""
    if not (0.0 <= rate < 1.0):
        raise ValueError(f"dropout: rate {rate} outside [0, 1)")
    if not training or rate == 0.0:
        return a
    if rng is None:
        raise ValueError("dropout: training mode needs an rng")
    mask = ((rng.random(a.data.shape) >= rate) / (1.0 - rate)).astype(a.data.dtype)

    def bw(g):
        return (g * mask,)

    return _result(a.data * mask, (a,), bw)


CE_CLAMP = 1e-12


def cross_entropy(probs, onehot):
    """Cross entropy against one-hot targets; mean over rows for 2-D input.

    Probabilities are clamped at 1e-12 inside the log.
    """
    y = np.asarray(onehot, dtype=probs.data.dtype)
    p = probs.data
    if p.shape != y.shape:
        raise ValueError(f"cross_entropy: probs {p.shape} vs targets {y.shape}")
    rows = p.shape[0] if p.ndim == 2 else 1
    pc = np.maximum(p, CE_CLAMP)
    out = -(y * np.log(pc)).sum() / rows

    def bw(g):
        return (float(g) * -(y / pc) * (p > CE_CLAMP) / rows,)

    return _result(np.asarray(out), (probs,), bw)


# ---------------------------------------------------------------------------
# reverse pass


def _topo_order(root):
    order, visited = [], set()
    stack = [(root, False)]
    while stack:
        node, expanded = stack.pop()
        if expanded:
            order.append(node)
            continue
        if id(node) in visited:
            continue
        visited.add(id(node))
        stack.append((node, True))
        for p in node.parents:
            if id(p) not in visited:
                stack.append((p, False))
    return order  # parents precede consumers


def backward(loss, retain_all=False):
    """Populate .grad of every reachable leaf that requires gradients.

    Gradients accumulate additively into existing .grad buffers; with
    retain_all intermediate tensors keep their gradients too.
    """
    if loss.data.size != 1:
        raise ValueError(f"backward: loss must be scalar, got shape {loss.data.shape}")
    if not loss.requires_grad:
        return
    order = _topo_order(loss)
    grads = {id(loss): np.ones_like(loss.data)}
    for node in reversed(order):
        g = grads.pop(id(node), None)
        if g is None:
            continue
        is_leaf = node.backward_rule is None
        if node.requires_grad and (is_leaf or retain_all):
            node.grad = g.copy() if node.grad is None else node.grad + g
        if is_leaf:
            continue
        for parent, pg in zip(node.parents, node.backward_rule(g)):
            if pg is None or not parent.requires_grad:
                continue
            acc = grads.get(id(parent))
            grads[id(parent)] = pg if acc is None else acc + pg


def zero_grad(params):
    for p in params:
        p.grad = None


def grad_check(f, params, h=1e-5, tol=None):
    """Max relative error between analytic and central-difference gradients.

    f() must rebuild the scalar loss from the live parameter data on
    every call. Relative error per coordinate is
    |analytic - numeric| / max(1e-8, |analytic| + |numeric|).
    """
    zero_grad(params)
    backward(f())
    analytic = [np.zeros_like(p.data) if p.grad is None else p.grad.copy() for p in params]
    worst = 0.0
    for p, a in zip(params, analytic):
        flat = p.data.reshape(-1)
        for i in range(flat.size):
            orig = flat[i]
            flat[i] = orig + h
            up = f().item()
            flat[i] = orig - h
            down = f().item()
            flat[i] = orig
            numeric = (up - down) / (2.0 * h)
            ai = a.reshape(-1)[i]
            err = abs(ai - numeric) / max(1e-8, abs(ai) + abs(numeric))
            worst = max(worst, err)
    zero_grad(params)
    if tol is not None and worst > tol:
        raise ValueError(f"grad_check: max relative error {worst:.3e} exceeds {tol:.1e}")
    return worst

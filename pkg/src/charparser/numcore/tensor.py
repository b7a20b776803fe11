"""Dense tensors with a reverse-mode tape.

Ops are plain functions over :class:`Tensor` objects.  While a :class:`Tape`
is active every op that touches a gradient-carrying input appends a closure
to it; ``Tape.backward`` replays the closures in reverse order and
accumulates exact partial derivatives into the inputs.  With no tape active
the ops just compute values, which is what inference uses.
"""

from __future__ import annotations

import numpy as np


class ShapeError(ValueError):
    """Operands of an op are not conformable."""

    def __init__(self, op, *shapes, detail=""):
        self.op = op
        self.shapes = tuple(tuple(s) for s in shapes)
        msg = f"{op}: incompatible shapes " + " and ".join(str(s) for s in self.shapes)
        if detail:
            msg += f" ({detail})"
        super().__init__(msg)


class NonFiniteError(FloatingPointError):
    """A forward value or a gradient contains NaN or Inf."""


class Tensor:
    __slots__ = ("value", "grad", "requires_grad", "name")

    def __init__(self, value, requires_grad=False, name=None):
        self.value = value
        self.grad = None
        self.requires_grad = requires_grad
        self.name = name

    @property
    def shape(self):
        return self.value.shape

    @property
    def dtype(self):
        return self.value.dtype

    def item(self):
        return float(self.value)

    def __repr__(self):
        label = f" {self.name!r}" if self.name else ""
        return f"<Tensor{label} shape={self.value.shape} dtype={self.value.dtype}>"


class Parameter(Tensor):
    """A trainable leaf.  ``gradient`` always has the shape of ``value``.

    ``decay`` marks weights that weight decay shrinks (biases opt out).
    """

    __slots__ = ("decay",)

    def __init__(self, value, name, decay=True):
        value = np.array(value)
        super().__init__(value, requires_grad=True, name=name)
        self.grad = np.zeros_like(value)
        self.decay = decay

    @property
    def gradient(self):
        return self.grad

    def zero_grad(self):
        self.grad[...] = 0.0

    def __repr__(self):
        return f"<Parameter {self.name!r} shape={self.value.shape}>"


_ACTIVE = []


class Tape:
    """Records ops for one forward pass; use as a context manager."""

    def __init__(self):
        self.nodes = []

    def __enter__(self):
        _ACTIVE.append(self)
        return self

    def __exit__(self, *exc):
        _ACTIVE.remove(self)
        return False

    def __len__(self):
        return len(self.nodes)

    def backward(self, loss):
        if loss.value.size != 1:
            raise ShapeError("backward", loss.shape, detail="loss must be a scalar")
        if not loss.requires_grad:
            return
        loss.grad = np.ones_like(loss.value)
        for out, inputs, fn in reversed(self.nodes):
            g = out.grad
            if g is None:
                continue
            grads = fn(g)
            for t, d in zip(inputs, grads):
                if d is None or not t.requires_grad:
                    continue
                if not np.isfinite(d).all():
                    raise NonFiniteError(f"non-finite gradient flowing into {t!r}")
                if t.grad is None:
                    t.grad = np.array(d, dtype=t.value.dtype)
                else:
                    t.grad += d
            if not isinstance(out, Parameter):
                out.grad = None
        self.nodes.clear()


def is_recording():
    return bool(_ACTIVE)


def _emit(op, value, inputs, backward):
    if not np.isfinite(value).all():
        raise NonFiniteError(f"{op}: non-finite forward value")
    needs = any(t.requires_grad for t in inputs)
    out = Tensor(value, requires_grad=needs)
    if needs and _ACTIVE:
        _ACTIVE[-1].nodes.append((out, inputs, backward))
    return out


def as_tensor(x, dtype=None):
    if isinstance(x, Tensor):
        return x
    return Tensor(np.asarray(x, dtype=dtype))


def constant(x, dtype=np.float64):
    return Tensor(np.asarray(x, dtype=dtype))


def _unbroadcast(g, shape):
    while g.ndim > len(shape):
        g = g.sum(axis=0)
    for axis, n in enumerate(shape):
        if n == 1 and g.shape[axis] != 1:
            g = g.sum(axis=axis, keepdims=True)
    return g


# --- linear algebra -------------------------------------------------------

def matmul(a, b):
    """``a @ b`` with ``a`` of rank >= 1 and ``b`` a matrix."""
    a, b = as_tensor(a), as_tensor(b)
    if b.value.ndim != 2 or a.value.shape[-1] != b.value.shape[0]:
        raise ShapeError("matmul", a.shape, b.shape)
    av, bv = a.value, b.value
    k, m = bv.shape

    def backward(g):
        ga = g @ bv.T
        gb = av.reshape(-1, k).T @ g.reshape(-1, m)
        return ga, gb

    return _emit("matmul", av @ bv, (a, b), backward)


def affine(x, w, b):
    x, w, b = as_tensor(x), as_tensor(w), as_tensor(b)
    if w.value.ndim != 2 or x.value.shape[-1] != w.value.shape[0]:
        raise ShapeError("affine", x.shape, w.shape)
    if b.value.shape != (w.value.shape[1],):
        raise ShapeError("affine", w.shape, b.shape, detail="bias must match output width")
    xv, wv = x.value, w.value
    k, m = wv.shape

    def backward(g):
        g2 = g.reshape(-1, m)
        return g @ wv.T, xv.reshape(-1, k).T @ g2, g2.sum(axis=0)

    return _emit("affine", xv @ wv + b.value, (x, w, b), backward)


def add(a, b):
    a, b = as_tensor(a), as_tensor(b)
    try:
        shape = np.broadcast_shapes(a.shape, b.shape)
    except ValueError:
        raise ShapeError("add", a.shape, b.shape) from None
    sa, sb = a.shape, b.shape

    def backward(g):
        return _unbroadcast(g, sa), _unbroadcast(g, sb)

    value = a.value + b.value
    assert value.shape == shape
    return _emit("add", value, (a, b), backward)


def mul(a, b):
    a, b = as_tensor(a), as_tensor(b)
    try:
        np.broadcast_shapes(a.shape, b.shape)
    except ValueError:
        raise ShapeError("mul", a.shape, b.shape) from None
    av, bv = a.value, b.value

    def backward(g):
        return _unbroadcast(g * bv, av.shape), _unbroadcast(g * av, bv.shape)

    return _emit("mul", av * bv, (a, b), backward)


def scale(x, c):
    x = as_tensor(x)
    c = float(c)
    return _emit("scale", x.value * c, (x,), lambda g: (g * c,))


def total(x):
    """Sum of all entries, as a scalar tensor."""
    x = as_tensor(x)
    shape = x.shape
    return _emit("sum", np.asarray(x.value.sum()), (x,),
                 lambda g: (np.broadcast_to(g, shape),))


def weighted_sum(terms, weights):
    """``sum_i weights[i] * terms[i]`` for scalar tensors."""
    terms = [as_tensor(t) for t in terms]
    if len(terms) != len(weights):
        raise ShapeError("weighted_sum", (len(terms),), (len(weights),))
    for t in terms:
        if t.value.size != 1:
            raise ShapeError("weighted_sum", t.shape, detail="terms must be scalars")
    ws = [float(w) for w in weights]
    value = sum(w * t.value.reshape(()) for w, t in zip(ws, terms))
    value = np.asarray(value, dtype=terms[0].value.dtype)
    shapes = [t.shape for t in terms]

    def backward(g):
        return tuple(np.full(s, w * float(g), dtype=g.dtype) for s, w in zip(shapes, ws))

    return _emit("weighted_sum", value, tuple(terms), backward)


# --- structural -----------------------------------------------------------

def concat(tensors, axis=-1):
    tensors = [as_tensor(t) for t in tensors]
    try:
        value = np.concatenate([t.value for t in tensors], axis=axis)
    except ValueError:
        raise ShapeError("concat", *[t.shape for t in tensors]) from None
    sizes = np.cumsum([t.shape[axis] for t in tensors])[:-1]

    def backward(g):
        return tuple(np.split(g, sizes, axis=axis))

    return _emit("concat", value, tuple(tensors), backward)


def take(x, index):
    """Gather rows of ``x`` (first axis) at integer ``index`` of any shape."""
    x = as_tensor(x)
    index = np.asarray(index, dtype=np.intp)
    n = x.shape[0]
    if index.size and (index.min() < -n or index.max() >= n):
        raise ShapeError("take", x.shape, index.shape, detail="index out of range")
    shape = x.shape

    def backward(g):
        gx = np.zeros(shape, dtype=g.dtype)
        np.add.at(gx, index, g)
        return (gx,)

    return _emit("take", x.value[index], (x,), backward)


def reshape(x, shape):
    x = as_tensor(x)
    old = x.shape
    try:
        value = x.value.reshape(shape)
    except ValueError:
        raise ShapeError("reshape", old, shape) from None
    return _emit("reshape", value, (x,), lambda g: (g.reshape(old),))


# --- sequence ops ---------------------------------------------------------

def conv1d(x, w):
    """Valid 1-D convolution over positions.

    ``x`` is ``[B, L, d]`` (or ``[L, d]``) and ``w`` is ``[k, d, F]``; the
    result is ``[B, L-k+1, F]`` with ``out[b, p, f] = sum_j x[b, p+j] . w[j, :, f]``.
    """
    x, w = as_tensor(x), as_tensor(w)
    squeeze = x.value.ndim == 2
    xv = x.value[None] if squeeze else x.value
    if xv.ndim != 3 or w.value.ndim != 3 or xv.shape[2] != w.shape[1]:
        raise ShapeError("conv1d", x.shape, w.shape)
    bsz, length, d = xv.shape
    k, _, nf = w.shape
    p = length - k + 1
    if p < 1:
        raise ShapeError("conv1d", x.shape, w.shape, detail="filter longer than sequence")
    cols = np.concatenate([xv[:, j:j + p, :] for j in range(k)], axis=-1)
    wr = w.value.reshape(k * d, nf)
    out = cols @ wr

    def backward(g):
        g3 = g[None] if squeeze else g
        gw = cols.reshape(-1, k * d).T @ g3.reshape(-1, nf)
        gcols = g3 @ wr.T
        gx = np.zeros_like(xv)
        for j in range(k):
            gx[:, j:j + p, :] += gcols[:, :, j * d:(j + 1) * d]
        return (gx[0] if squeeze else gx), gw.reshape(k, d, nf)

    return _emit("conv1d", out[0] if squeeze else out, (x, w), backward)


def max_pool(x, mask=None):
    """Max over the position axis of ``[B, P, F]`` (or ``[P, F]``).

    ``mask`` (``[B, P]`` booleans) marks valid positions.  A row with no valid
    position pools to 0 and passes no gradient.
    """
    x = as_tensor(x)
    squeeze = x.value.ndim == 2
    xv = x.value[None] if squeeze else x.value
    if xv.ndim != 3:
        raise ShapeError("max_pool", x.shape)
    bsz, p, nf = xv.shape
    if mask is None:
        mask = np.ones((bsz, p), dtype=bool)
    else:
        mask = np.asarray(mask, dtype=bool)
        if squeeze and mask.ndim == 1:
            mask = mask[None]
        if mask.shape != (bsz, p):
            raise ShapeError("max_pool", x.shape, mask.shape)
    masked = np.where(mask[:, :, None], xv, -np.inf)
    arg = masked.argmax(axis=1)  # [B, F]
    any_valid = mask.any(axis=1)
    out = np.take_along_axis(xv, arg[:, None, :], axis=1)[:, 0, :]
    out = np.where(any_valid[:, None], out, 0.0).astype(xv.dtype)

    def backward(g):
        g2 = g[None] if squeeze else g
        g2 = np.where(any_valid[:, None], g2, 0.0)
        gx = np.zeros_like(xv)
        np.put_along_axis(gx, arg[:, None, :], g2[:, None, :], axis=1)
        return (gx[0] if squeeze else gx,)

    return _emit("max_pool", out[0] if squeeze else out, (x,), backward)


def gru(x, w_in, w_rec, bias, reverse=False):
    """Run a GRU over the rows of ``x`` (``[T, D]``), returning ``[T, H]``.

    Gate layout along the last axis of ``w_in`` / ``w_rec`` / ``bias`` is
    ``[update | reset | candidate]``.  The cell is::

        z = sigmoid(x Wz + h Uz + bz)
        r = sigmoid(x Wr + h Ur + br)
        c = tanh(x Wc + (r * h) Uc + bc)
        h' = z * h + (1 - z) * c

    starting from ``h = 0``.  With ``reverse`` the rows are consumed last to
    first and the output keeps the input's row order.
    """
    x, w_in, w_rec, bias = (as_tensor(t) for t in (x, w_in, w_rec, bias))
    xv, wi, wr, bv = x.value, w_in.value, w_rec.value, bias.value
    if xv.ndim != 2 or wi.ndim != 2 or wi.shape[0] != xv.shape[1]:
        raise ShapeError("gru", x.shape, w_in.shape)
    hdim = wr.shape[0]
    if wi.shape[1] != 3 * hdim or wr.shape != (hdim, 3 * hdim) or bv.shape != (3 * hdim,):
        raise ShapeError("gru", w_in.shape, w_rec.shape, detail=f"bias {bv.shape}")
    steps = xv.shape[0]
    order = range(steps - 1, -1, -1) if reverse else range(steps)
    order = list(order)
    proj = xv @ wi + bv
    u_zr, u_c = wr[:, :2 * hdim], wr[:, 2 * hdim:]
    dt = np.result_type(xv, wi)
    hs = np.zeros((steps, hdim), dtype=dt)
    prev = np.zeros((steps, hdim), dtype=dt)
    zs = np.empty((steps, hdim), dtype=dt)
    rs = np.empty((steps, hdim), dtype=dt)
    cs = np.empty((steps, hdim), dtype=dt)
    h = np.zeros(hdim, dtype=dt)
    for t in order:
        zr = 1.0 / (1.0 + np.exp(-(proj[t, :2 * hdim] + h @ u_zr)))
        z, r = zr[:hdim], zr[hdim:]
        c = np.tanh(proj[t, 2 * hdim:] + (r * h) @ u_c)
        prev[t] = h
        h = z * h + (1.0 - z) * c
        zs[t], rs[t], cs[t], hs[t] = z, r, c, h

    def backward(g):
        d_proj = np.zeros_like(proj)
        g_uzr = np.zeros_like(u_zr)
        g_uc = np.zeros_like(u_c)
        dh = np.zeros(hdim, dtype=g.dtype)
        for t in reversed(order):
            dh = dh + g[t]
            z, r, c, hp = zs[t], rs[t], cs[t], prev[t]
            dz = dh * (hp - c) * z * (1.0 - z)
            dc = dh * (1.0 - z) * (1.0 - c * c)
            rh = r * hp
            g_uc += np.outer(rh, dc)
            drh = dc @ u_c.T
            dr = drh * hp * r * (1.0 - r)
            dzr = np.concatenate([dz, dr])
            g_uzr += np.outer(hp, dzr)
            dh = dh * z + drh * r + dzr @ u_zr.T
            d_proj[t, :2 * hdim] = dzr
            d_proj[t, 2 * hdim:] = dc
        gx = d_proj @ wi.T
        gwi = xv.T @ d_proj
        gwr = np.concatenate([g_uzr, g_uc], axis=1)
        return gx, gwi, gwr, d_proj.sum(axis=0)

    return _emit("gru", hs, (x, w_in, w_rec, bias), backward)


# --- nonlinearities -------------------------------------------------------

def tanh(x):
    x = as_tensor(x)
    y = np.tanh(x.value)
    return _emit("tanh", y, (x,), lambda g: (g * (1.0 - y * y),))


def relu(x):
    x = as_tensor(x)
    on = x.value > 0
    return _emit("relu", np.where(on, x.value, 0.0).astype(x.dtype), (x,),
                 lambda g: (g * on,))


def sigmoid(x):
    x = as_tensor(x)
    y = 1.0 / (1.0 + np.exp(-x.value))
    return _emit("sigmoid", y, (x,), lambda g: (g * y * (1.0 - y),))


def maxout(x, pieces):
    """Max over consecutive groups of ``pieces`` along the last axis."""
    x = as_tensor(x)
    width = x.shape[-1]
    if pieces < 1 or width % pieces:
        raise ShapeError("maxout", x.shape, (pieces,), detail="width not divisible by pieces")
    grouped = x.value.reshape(x.shape[:-1] + (width // pieces, pieces))
    arg = grouped.argmax(axis=-1)
    out = np.take_along_axis(grouped, arg[..., None], axis=-1)[..., 0]
    shape = x.shape

    def backward(g):
        gg = np.zeros_like(grouped)
        np.put_along_axis(gg, arg[..., None], g[..., None], axis=-1)
        return (gg.reshape(shape),)

    return _emit("maxout", out, (x,), backward)


def dropout(x, rate, train, rng=None):
    """Inverted dropout: surviving units are scaled by ``1/(1-rate)``."""
    if not 0.0 <= rate < 1.0:
        raise ValueError(f"dropout rate must be in [0, 1), got {rate}")
    x = as_tensor(x)
    if not train or rate == 0.0:
        return x
    if rng is None:
        raise ValueError("dropout in training mode needs an rng")
    keep = (rng.random(x.shape) >= rate) / (1.0 - rate)
    keep = keep.astype(x.dtype)
    return _emit("dropout", x.value * keep, (x,), lambda g: (g * keep,))


# --- losses ---------------------------------------------------------------

def log_softmax(logits, axis=-1):
    """Plain array helper (no tape)."""
    z = logits - logits.max(axis=axis, keepdims=True)
    return z - np.log(np.exp(z).sum(axis=axis, keepdims=True))


def softmax(logits, axis=-1):
    return np.exp(log_softmax(logits, axis=axis))


def softmax_cross_entropy(logits, targets, reduction="mean"):
    """Negative log-likelihood of integer ``targets`` under row softmaxes.

    ``logits`` is ``[N, C]``; returns the mean (or sum) over the N rows.
    """
    logits = as_tensor(logits)
    targets = np.asarray(targets, dtype=np.intp)
    if logits.value.ndim != 2 or targets.shape != (logits.shape[0],):
        raise ShapeError("softmax_cross_entropy", logits.shape, targets.shape)
    n, c = logits.shape
    if n and (targets.min() < 0 or targets.max() >= c):
        raise ShapeError("softmax_cross_entropy", logits.shape, targets.shape,
                         detail="target id out of range")
    if reduction not in ("mean", "sum"):
        raise ValueError(f"unknown reduction {reduction!r}")
    logp = log_softmax(logits.value)
    rows = np.arange(n)
    nll = -logp[rows, targets].sum()
    denom = n if reduction == "mean" else 1

    def backward(g):
        d = np.exp(logp)
        d[rows, targets] -= 1.0
        return (d * (float(g) / denom),)

    return _emit("softmax_cross_entropy", np.asarray(nll / denom, dtype=logits.dtype),
                 (logits,), backward)

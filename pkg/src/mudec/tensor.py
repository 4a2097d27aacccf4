"""A small reverse-mode automatic differentiation engine over numpy arrays.

Only the operations the two decoders need are provided. Sequences are laid
out as ``(batch, channels, time)``; 2-D ``(channels, time)`` inputs are
accepted by the layer functions and treated as a batch of one.

Precision is 32-bit by default. Set ``MUDEC_PRECISION=f64`` (or use the
``precision`` context manager) for 64-bit gradient checking.
"""

from __future__ import annotations

import contextlib
import os

import numpy as np

_DTYPE = [np.float64 if os.environ.get("MUDEC_PRECISION", "").lower() in ("f64", "float64") else np.float32]


def default_dtype():
    return _DTYPE[0]


@contextlib.contextmanager
def precision(name: str):
    prev = _DTYPE[0]
    _DTYPE[0] = np.float64 if name in ("f64", "float64") else np.float32
    try:
        yield
    finally:
        _DTYPE[0] = prev


class Tensor:
    __slots__ = ("data", "grad", "requires_grad", "_parents", "_backward", "op")

    def __init__(self, data, requires_grad=False, dtype=None, _parents=(), op=""):
        self.data = np.asarray(data, dtype=dtype or default_dtype())
        self.requires_grad = requires_grad
        self.grad = None
        self._parents = _parents
        self._backward = None
        self.op = op

    @property
    def shape(self):
        return self.data.shape

    def __repr__(self):
        return f"Tensor(shape={self.shape}, op={self.op or 'leaf'}, requires_grad={self.requires_grad})"

    def numpy(self):
        return self.data

    def zero_grad(self):
        self.grad = None

    def backward(self):
        """Accumulate d(self)/d(leaf) into ``.grad`` of every leaf that requires it."""
        if self.data.size != 1:
            raise ValueError(f"backward() needs a scalar output, got shape {self.shape}")
        order, seen = [], set()
        stack = [(self, False)]
        while stack:
            node, expanded = stack.pop()
            if expanded:
                order.append(node)
                continue
            if id(node) in seen:
                continue
            seen.add(id(node))
            stack.append((node, True))
            for p in node._parents:
                if p.requires_grad and id(p) not in seen:
                    stack.append((p, False))
        self.grad = np.ones_like(self.data)
        for node in reversed(order):
            if node._backward is not None and node.grad is not None:
                node._backward(node.grad)
                if node._parents:
                    # interior grads are not needed after propagation
                    node.grad = None if node is not self else node.grad

    __add__ = lambda self, other: add(self, other)
    __radd__ = lambda self, other: add(other, self)
    __sub__ = lambda self, other: sub(self, other)
    __rsub__ = lambda self, other: sub(other, self)
    __mul__ = lambda self, other: mul(self, other)
    __rmul__ = lambda self, other: mul(other, self)
    __neg__ = lambda self: mul_scalar(self, -1.0)


def as_tensor(x) -> Tensor:
    return x if isinstance(x, Tensor) else Tensor(x)


def _accum(t: Tensor, g: np.ndarray):
    if not t.requires_grad:
        return
    g = g.astype(t.data.dtype, copy=False)
    t.grad = g.copy() if t.grad is None else t.grad + g


def _unbroadcast(g: np.ndarray, shape) -> np.ndarray:
    while g.ndim > len(shape):
        g = g.sum(axis=0)
    for ax, n in enumerate(shape):
        if n == 1 and g.shape[ax] != 1:
            g = g.sum(axis=ax, keepdims=True)
    return g


def _node(data, parents, op, backward) -> Tensor:
    out = Tensor(data, requires_grad=any(p.requires_grad for p in parents), dtype=data.dtype, _parents=parents, op=op)
    if out.requires_grad:
        out._backward = backward
    return out


# ---------------------------------------------------------------------------
# elementwise


def add(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)

    def backward(g):
        _accum(a, _unbroadcast(g, a.shape))
        _accum(b, _unbroadcast(g, b.shape))

    return _node(a.data + b.data, (a, b), "add", backward)


def sub(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)

    def backward(g):
        _accum(a, _unbroadcast(g, a.shape))
        _accum(b, -_unbroadcast(g, b.shape))

    return _node(a.data - b.data, (a, b), "sub", backward)


def mul(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)

    def backward(g):
        _accum(a, _unbroadcast(g * b.data, a.shape))
        _accum(b, _unbroadcast(g * a.data, b.shape))

    return _node(a.data * b.data, (a, b), "mul", backward)


def mul_scalar(a: Tensor, c: float) -> Tensor:
    return _node(a.data * c, (a,), "mul_scalar", lambda g: _accum(a, g * c))


def square(a: Tensor) -> Tensor:
    return _node(a.data * a.data, (a,), "square", lambda g: _accum(a, 2.0 * a.data * g))


def relu(a: Tensor) -> Tensor:
    mask = a.data > 0
    return _node(a.data * mask, (a,), "relu", lambda g: _accum(a, g * mask))


def sigmoid(a: Tensor) -> Tensor:
    s = 1.0 / (1.0 + np.exp(-a.data))
    return _node(s, (a,), "sigmoid", lambda g: _accum(a, g * s * (1.0 - s)))


def tensor_sum(a: Tensor) -> Tensor:
    return _node(np.asarray(a.data.sum(), dtype=a.data.dtype), (a,), "sum", lambda g: _accum(a, np.broadcast_to(g, a.shape)))


def mean(a: Tensor) -> Tensor:
    n = a.data.size
    return _node(
        np.asarray(a.data.mean(), dtype=a.data.dtype), (a,), "mean", lambda g: _accum(a, np.broadcast_to(g / n, a.shape))
    )


def reshape(a: Tensor, shape) -> Tensor:
    return _node(a.data.reshape(shape), (a,), "reshape", lambda g: _accum(a, g.reshape(a.shape)))


def take(a: Tensor, i: int) -> Tensor:
    """``a[i]`` along the leading axis."""

    def backward(g):
        full = np.zeros_like(a.data)
        full[i] = g
        _accum(a, full)

    return _node(a.data[i], (a,), "take", backward)


# ---------------------------------------------------------------------------
# layers


def _batched(x: Tensor) -> tuple[Tensor, bool]:
    if x.data.ndim == 2:
        return reshape(x, (1,) + x.shape), True
    return x, False


def causal_conv1d(x: Tensor, w: Tensor, b: Tensor | None = None, dilation: int = 1) -> Tensor:
    """``y[c, t] = b[c] + sum_j sum_l w[c, j, l] x[j, t - dilation*l]`` with zeros before ``t = 0``.

    ``x`` is ``(C_in, T)`` or ``(N, C_in, T)``; the output keeps ``T``.
    """
    if dilation < 1:
        raise ValueError(f"dilation must be >= 1, got {dilation}")
    x = as_tensor(x)
    xb, squeeze = _batched(x)
    n, c_in, t_len = xb.shape
    c_out, c_in_w, k = w.shape
    if c_in_w != c_in:
        raise ValueError(f"conv expects {c_in_w} input channels, got {c_in}")
    if b is not None and b.shape != (c_out,):
        raise ValueError(f"bias shape {b.shape} does not match {c_out} output channels")
    pad = dilation * (k - 1)
    # channel-major layout so both products are single large GEMMs
    xt = np.zeros((c_in, n, t_len + pad), dtype=xb.data.dtype)
    xt[:, :, pad:] = xb.data.transpose(1, 0, 2)
    # cols[j, l, n, t] = x[n, j, t - dilation*l]
    cols = np.empty((c_in, k, n, t_len), dtype=xb.data.dtype)
    for l in range(k):
        cols[:, l] = xt[:, :, pad - dilation * l : pad - dilation * l + t_len]
    cols = cols.reshape(c_in * k, n * t_len)
    w2 = w.data.reshape(c_out, c_in * k)
    y2 = w2 @ cols
    if b is not None:
        y2 += b.data[:, None]
    y = y2.reshape(c_out, n, t_len).transpose(1, 0, 2)
    parents = (xb, w) if b is None else (xb, w, b)

    def backward(g):
        g2 = np.ascontiguousarray(g.transpose(1, 0, 2)).reshape(c_out, n * t_len)
        if w.requires_grad:
            _accum(w, (g2 @ cols.T).reshape(w.shape))
        if b is not None and b.requires_grad:
            _accum(b, g2.sum(axis=1))
        if xb.requires_grad:
            gcols = (w2.T @ g2).reshape(c_in, k, n, t_len)
            gxt = np.zeros((c_in, n, t_len + pad), dtype=g.dtype)
            for l in range(k):
                gxt[:, :, pad - dilation * l : pad - dilation * l + t_len] += gcols[:, l]
            _accum(xb, gxt[:, :, pad:].transpose(1, 0, 2))

    out = _node(y, parents, "causal_conv1d", backward)
    return reshape(out, out.shape[1:]) if squeeze else out


def layer_norm_channels(x: Tensor, gamma: Tensor, beta: Tensor, eps: float = 1e-5) -> Tensor:
    """Normalise over the channel axis independently at every (batch, time) position."""
    xb, squeeze = _batched(as_tensor(x))
    mu = xb.data.mean(axis=1, keepdims=True)
    xc = xb.data - mu
    var = (xc * xc).mean(axis=1, keepdims=True)
    inv = 1.0 / np.sqrt(var + eps)
    xhat = xc * inv
    gm = gamma.data[None, :, None]
    y = xhat * gm + beta.data[None, :, None]
    c = xb.shape[1]

    def backward(g):
        _accum(gamma, (g * xhat).sum(axis=(0, 2)))
        _accum(beta, g.sum(axis=(0, 2)))
        if xb.requires_grad:
            gx = g * gm
            gxin = inv / c * (c * gx - gx.sum(axis=1, keepdims=True) - xhat * (gx * xhat).sum(axis=1, keepdims=True))
            _accum(xb, gxin)

    out = _node(y, (xb, gamma, beta), "layer_norm", backward)
    return reshape(out, out.shape[1:]) if squeeze else out


def dropout(x: Tensor, p: float, train: bool, rng: np.random.Generator | None = None) -> Tensor:
    """Inverted dropout; identity in eval mode or when ``p == 0``."""
    if not 0 <= p < 1:
        raise ValueError(f"dropout p must be in [0, 1), got {p}")
    if not train or p == 0:
        return x
    if rng is None:
        raise ValueError("train-mode dropout needs an rng")
    mask = (rng.random(x.shape) >= p).astype(x.data.dtype) / (1.0 - p)
    return _node(x.data * mask, (x,), "dropout", lambda g: _accum(x, g * mask))


def surrogate_grad(x: np.ndarray, slope: float) -> np.ndarray:
    """Fast-sigmoid surrogate ``1 / (1 + k|x|)^2`` for dH/dx."""
    return 1.0 / (1.0 + slope * np.abs(x)) ** 2


def lif_forward(
    current: Tensor,
    beta_m: float = 0.9,
    v_th: float = 1.0,
    slope: float = 25.0,
    relaxed: bool = False,
) -> tuple[Tensor, Tensor]:
    """Leaky integrate-and-fire layer run over the time axis.

    ``v_t = beta_m v_{t-1} + I_t - v_th s_{t-1}`` and ``s_t = H(v_t - v_th)``
    with ``v_0 = s_0 = 0``; the reset uses the previous step's spike. The
    backward pass replaces dH/dv by the fast-sigmoid surrogate and
    back-propagates through both the leak and the reset term.

    With ``relaxed=True`` the spike is the smooth ``x / (1 + k|x|)`` whose
    exact derivative is the surrogate; used only to check the BPTT code
    against finite differences.

    Returns ``(spikes, membrane)``, both shaped like ``current``.
    """
    if not 0 < beta_m < 1:
        raise ValueError("beta_m must be in (0, 1)")
    if not v_th > 0:
        raise ValueError("v_th must be positive")
    cur = as_tensor(current)
    cb, squeeze = _batched(cur)
    i_data = cb.data
    n, c, t_len = i_data.shape
    dt = i_data.dtype
    v = np.zeros((n, c, t_len), dtype=dt)
    s = np.zeros((n, c, t_len), dtype=dt)
    v_prev = np.zeros((n, c), dtype=dt)
    s_prev = np.zeros((n, c), dtype=dt)
    for t in range(t_len):
        v_t = beta_m * v_prev + i_data[:, :, t] - v_th * s_prev
        x = v_t - v_th
        s_t = x / (1.0 + slope * np.abs(x)) if relaxed else (x > 0).astype(dt)
        v[:, :, t] = v_t
        s[:, :, t] = s_t
        v_prev, s_prev = v_t, s_t
    phi = surrogate_grad(v - v_th, slope).astype(dt)

    def backward(g):
        gs_out, gv_out = g[0], g[1]
        gi = np.zeros_like(i_data)
        dv_next = np.zeros((n, c), dtype=dt)
        for t in range(t_len - 1, -1, -1):
            ds = gs_out[:, :, t] - v_th * dv_next
            dv = gv_out[:, :, t] + ds * phi[:, :, t] + beta_m * dv_next
            gi[:, :, t] = dv
            dv_next = dv
        _accum(cb, gi)

    core = _node(np.stack([s, v]), (cb,), "lif", backward)
    spikes, membrane = take(core, 0), take(core, 1)
    if squeeze:
        spikes, membrane = reshape(spikes, spikes.shape[1:]), reshape(membrane, membrane.shape[1:])
    return spikes, membrane


def synaptic_readout(s: Tensor, alpha_param: Tensor) -> Tensor:
    """Exponential trace ``y_t = a y_{t-1} + (1 - a) s_t``, ``y_0 = 0``, with ``a = sigmoid(alpha_param)``."""
    sb, squeeze = _batched(as_tensor(s))
    a = float(1.0 / (1.0 + np.exp(-float(alpha_param.data.reshape(-1)[0]))))
    x = sb.data
    n, c, t_len = x.shape
    y = np.zeros_like(x)
    prev = np.zeros((n, c), dtype=x.dtype)
    for t in range(t_len):
        prev = a * prev + (1.0 - a) * x[:, :, t]
        y[:, :, t] = prev

    def backward(g):
        gs = np.zeros_like(x)
        dy_next = np.zeros((n, c), dtype=x.dtype)
        da = 0.0
        for t in range(t_len - 1, -1, -1):
            dy = g[:, :, t] + a * dy_next
            gs[:, :, t] = (1.0 - a) * dy
            y_prev = y[:, :, t - 1] if t > 0 else 0.0
            da += float(np.sum(dy * (y_prev - x[:, :, t])))
            dy_next = dy
        _accum(sb, gs)
        _accum(alpha_param, np.full(alpha_param.shape, da * a * (1.0 - a)))

    out = _node(y, (sb, alpha_param), "synaptic_readout", backward)
    return reshape(out, out.shape[1:]) if squeeze else out


def mse_loss(pred: Tensor, target) -> Tensor:
    """Mean of squared differences over every (window, time) entry."""
    target = np.asarray(getattr(target, "data", target), dtype=pred.data.dtype)
    if pred.shape != target.shape:
        raise ValueError(f"shape mismatch: prediction {pred.shape} vs target {target.shape}")
    diff = pred.data - target
    n = diff.size
    return _node(
        np.asarray((diff * diff).sum() / n, dtype=pred.data.dtype),
        (pred,),
        "mse",
        lambda g: _accum(pred, g * 2.0 * diff / n),
    )

"""Minimal reverse-mode differentiation over numpy arrays.

Covers exactly the operations the waveform model needs: 1-D convolution
and its transpose, dense layers, batch normalization, leaky ReLU,
reparameterization, magnitude spectra, elementwise math for the
descriptor losses, and the loss reductions. Every operation registers a
vector-Jacobian rule; `Graph` replays them in reverse topological order.

There is no global tape: each result keeps references to its parents, so
independent forward passes are independent graphs and may run on
different threads. A thread-local `no_grad` switch disables recording on
the inference path.
"""

from __future__ import annotations

import threading
from contextlib import contextmanager

import numpy as np

from .errors import ShapeError

_state = threading.local()


def _recording() -> bool:
    return not getattr(_state, "no_grad", False)


@contextmanager
def no_grad():
    """Disable graph recording on this thread (inference fast path)."""
    prev = getattr(_state, "no_grad", False)
    _state.no_grad = True
    try:
        yield
    finally:
        _state.no_grad = prev


class MacCounter:
    """Multiply-accumulate tally for conv/linear ops run under `count_macs`."""

    def __init__(self):
        self.macs = 0


@contextmanager
def count_macs():
    counter = MacCounter()
    counters = getattr(_state, "mac_counters", None)
    if counters is None:
        counters = _state.mac_counters = []
    counters.append(counter)
    try:
        yield counter
    finally:
        counters.remove(counter)


def _add_macs(n: int):
    for counter in getattr(_state, "mac_counters", ()):
        counter.macs += n


class Tensor:
    """Array value plus an optional gradient and the record that made it."""

    __slots__ = ("values", "grad", "requires_grad", "_parents", "_vjp")

    def __init__(self, values, requires_grad=False, _parents=(), _vjp=None):
        self.values = np.asarray(values)
        self.grad = None
        self.requires_grad = bool(requires_grad)
        self._parents = _parents
        self._vjp = _vjp

    @property
    def shape(self):
        return self.values.shape

    @property
    def dtype(self):
        return self.values.dtype

    def item(self) -> float:
        return float(self.values)

    def zero_grad(self):
        self.grad = None

    def backward(self, seed=None):
        Graph.from_root(self).backward(seed)

    def detach(self) -> "Tensor":
        return Tensor(self.values)

    def __repr__(self):
        return f"Tensor(shape={self.values.shape}, grad={'yes' if self.requires_grad else 'no'})"

    # convenience arithmetic (delegates to the op functions below)
    def __add__(self, other):
        return add(self, other)

    __radd__ = __add__

    def __sub__(self, other):
        return sub(self, other)

    def __rsub__(self, other):
        return sub(other, self)

    def __mul__(self, other):
        return mul(self, other)

    __rmul__ = __mul__

    def __truediv__(self, other):
        return div(self, other)

    def __neg__(self):
        return mul(self, -1.0)

    def __getitem__(self, key):
        return getitem(self, key)


def as_tensor(x) -> Tensor:
    return x if isinstance(x, Tensor) else Tensor(x)


def parameter(values, dtype=np.float32) -> Tensor:
    return Tensor(np.asarray(values, dtype=dtype), requires_grad=True)


def _unbroadcast(grad: np.ndarray, shape) -> np.ndarray:
    """Sum `grad` down to `shape` (inverse of numpy broadcasting)."""
    if grad.shape == tuple(shape):
        return grad
    extra = grad.ndim - len(shape)
    if extra:
        grad = grad.sum(axis=tuple(range(extra)))
    axes = tuple(i for i, s in enumerate(shape) if s == 1 and grad.shape[i] != 1)
    if axes:
        grad = grad.sum(axis=axes, keepdims=True)
    return grad.reshape(shape)


def _make(values, parents, vjp) -> Tensor:
    """Build a result tensor, recording the rule only when it can matter."""
    track = _recording() and any(p.requires_grad for p in parents)
    if not track:
        return Tensor(values)
    return Tensor(values, requires_grad=True, _parents=parents, _vjp=vjp)


class Graph:
    """Topologically ordered records of one forward pass."""

    def __init__(self, order):
        self._order = order  # topological, root last

    @classmethod
    def from_root(cls, root: Tensor) -> "Graph":
        order, seen, stack = [], set(), [(root, False)]
        while stack:
            node, expanded = stack.pop()
            if expanded:
                order.append(node)
                continue
            if id(node) in seen or not node.requires_grad:
                continue
            seen.add(id(node))
            stack.append((node, True))
            for p in node._parents:
                stack.append((p, False))
        return cls(order)

    def backward(self, seed=None):
        if not self._order:
            return
        root = self._order[-1]
        if seed is None:
            if root.values.size != 1:
                raise ShapeError("backward needs a scalar root or an explicit seed", root.shape)
            seed = np.ones_like(root.values)
        root.grad = np.asarray(seed, dtype=root.values.dtype)
        for node in reversed(self._order):
            if node._vjp is None or node.grad is None:
                continue
            grads = node._vjp(node.grad)
            for parent, g in zip(node._parents, grads):
                if g is None or not parent.requires_grad:
                    continue
                if parent.grad is None:
                    parent.grad = g.astype(parent.values.dtype, copy=True)
                else:
                    parent.grad = parent.grad + g


# ---------------------------------------------------------------------------
# elementwise and reduction ops


def add(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    out = a.values + b.values
    return _make(out, (a, b), lambda g: (_unbroadcast(g, a.shape), _unbroadcast(g, b.shape)))


def sub(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    out = a.values - b.values
    return _make(out, (a, b), lambda g: (_unbroadcast(g, a.shape), _unbroadcast(-g, b.shape)))


def mul(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    out = a.values * b.values
    return _make(
        out,
        (a, b),
        lambda g: (_unbroadcast(g * b.values, a.shape), _unbroadcast(g * a.values, b.shape)),
    )


def div(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    out = a.values / b.values
    return _make(
        out,
        (a, b),
        lambda g: (
            _unbroadcast(g / b.values, a.shape),
            _unbroadcast(-g * a.values / (b.values**2), b.shape),
        ),
    )


def exp(a) -> Tensor:
    a = as_tensor(a)
    out = np.exp(a.values)
    return _make(out, (a,), lambda g: (g * out,))


def log(a) -> Tensor:
    a = as_tensor(a)
    return _make(np.log(a.values), (a,), lambda g: (g / a.values,))


def sqrt(a) -> Tensor:
    a = as_tensor(a)
    out = np.sqrt(a.values)
    return _make(out, (a,), lambda g: (g * 0.5 / np.maximum(out, 1e-30),))


def square(a) -> Tensor:
    a = as_tensor(a)
    return _make(a.values**2, (a,), lambda g: (g * 2.0 * a.values,))


def absolute(a) -> Tensor:
    a = as_tensor(a)
    return _make(np.abs(a.values), (a,), lambda g: (g * np.sign(a.values),))


def minimum_const(a, cap: float) -> Tensor:
    """Elementwise min(a, cap); gradient flows only where a < cap."""
    a = as_tensor(a)
    mask = a.values < cap
    return _make(np.minimum(a.values, cap), (a,), lambda g: (g * mask,))


def mod_const(a, modulus: float) -> Tensor:
    """Elementwise a mod m for constant m; unit gradient almost everywhere."""
    a = as_tensor(a)
    return _make(np.mod(a.values, modulus), (a,), lambda g: (g,))


def atan2(y, x) -> Tensor:
    y, x = as_tensor(y), as_tensor(x)
    denom = x.values**2 + y.values**2
    return _make(
        np.arctan2(y.values, x.values),
        (y, x),
        lambda g: (
            _unbroadcast(g * x.values / denom, y.shape),
            _unbroadcast(-g * y.values / denom, x.shape),
        ),
    )


def tsum(a, axis=None, keepdims=False) -> Tensor:
    a = as_tensor(a)
    out = a.values.sum(axis=axis, keepdims=keepdims)

    def vjp(g):
        if axis is None:
            return (np.broadcast_to(g, a.shape).copy(),)
        gg = g if keepdims else np.expand_dims(g, axis)
        return (np.broadcast_to(gg, a.shape).copy(),)

    return _make(out, (a,), vjp)


def tmean(a, axis=None, keepdims=False) -> Tensor:
    a = as_tensor(a)
    count = a.values.size if axis is None else a.shape[axis]
    return mul(tsum(a, axis=axis, keepdims=keepdims), 1.0 / count)


def tmax(a, axis=None) -> Tensor:
    """Max reduction; gradient routed to the (first) argmax positions."""
    a = as_tensor(a)
    out = a.values.max(axis=axis)

    def vjp(g):
        if axis is None:
            mask = a.values == out
            return (mask * (g / mask.sum()),)
        expanded = np.expand_dims(out, axis)
        mask = a.values == expanded
        mask = mask / mask.sum(axis=axis, keepdims=True)
        return (mask * np.expand_dims(g, axis),)

    return _make(out, (a,), vjp)


def getitem(a, key) -> Tensor:
    a = as_tensor(a)
    out = a.values[key]

    def vjp(g):
        buf = np.zeros_like(a.values)
        np.add.at(buf, key, g)
        return (buf,)

    return _make(out, (a,), vjp)


def reshape(a, shape) -> Tensor:
    a = as_tensor(a)
    return _make(a.values.reshape(shape), (a,), lambda g: (g.reshape(a.shape),))


def concat(parts, axis=-1) -> Tensor:
    parts = [as_tensor(p) for p in parts]
    out = np.concatenate([p.values for p in parts], axis=axis)
    sizes = [p.shape[axis] for p in parts]
    splits = np.cumsum(sizes)[:-1]

    def vjp(g):
        return tuple(np.split(g, splits, axis=axis))

    return _make(out, tuple(parts), vjp)


# ---------------------------------------------------------------------------
# network layers


def linear(x, weight, bias=None) -> Tensor:
    """x (B, F_in) @ weight (F_out, F_in)^T + bias."""
    x, weight = as_tensor(x), as_tensor(weight)
    if x.values.ndim != 2 or weight.values.ndim != 2 or x.shape[1] != weight.shape[1]:
        raise ShapeError("linear expects (B, F_in) x and (F_out, F_in) weight", x.shape, weight.shape)
    _add_macs(x.shape[0] * weight.shape[0] * weight.shape[1])
    out = x.values @ weight.values.T
    parents = (x, weight)
    if bias is not None:
        bias = as_tensor(bias)
        if bias.shape != (weight.shape[0],):
            raise ShapeError("linear bias shape mismatch", bias.shape, (weight.shape[0],))
        out = out + bias.values
        parents = (x, weight, bias)

    def vjp(g):
        gx = g @ weight.values
        gw = g.T @ x.values
        if len(parents) == 3:
            return gx, gw, g.sum(axis=0)
        return gx, gw

    return _make(out, parents, vjp)


def leaky_relu(x, slope: float = 0.2) -> Tensor:
    x = as_tensor(x)
    factor = np.where(x.values >= 0, 1.0, slope).astype(x.dtype)
    return _make(x.values * factor, (x,), lambda g: (g * factor,))


def reparameterize(mu, logvar, eps) -> Tensor:
    """mu + exp(logvar / 2) * eps, differentiating through mu and logvar only."""
    mu, logvar = as_tensor(mu), as_tensor(logvar)
    if mu.shape != logvar.shape:
        raise ShapeError("reparameterize shape mismatch", mu.shape, logvar.shape)
    eps = np.asarray(eps, dtype=mu.dtype)
    if eps.shape != mu.shape:
        raise ShapeError("noise shape mismatch", eps.shape, mu.shape)
    std = np.exp(0.5 * logvar.values)
    return _make(mu.values + std * eps, (mu, logvar), lambda g: (g, g * 0.5 * std * eps))


def _sliding_patches(x: np.ndarray, kernel: int, stride: int) -> np.ndarray:
    """(B, C, L) -> view (B, C, L_out, K) of strided windows."""
    windows = np.lib.stride_tricks.sliding_window_view(x, kernel, axis=2)
    return windows[:, :, ::stride, :]


def conv1d(x, weight, bias=None, stride: int = 1, padding: int = 0) -> Tensor:
    """Cross-correlation of (B, C_in, L) with (C_out, C_in, K) kernels."""
    x, weight = as_tensor(x), as_tensor(weight)
    if x.values.ndim != 3 or weight.values.ndim != 3 or x.shape[1] != weight.shape[1]:
        raise ShapeError("conv1d expects (B, C_in, L) and (C_out, C_in, K)", x.shape, weight.shape)
    batch, c_in, length = x.shape
    c_out, _, kernel = weight.shape
    l_out = (length + 2 * padding - kernel) // stride + 1
    if l_out < 1:
        raise ShapeError(f"conv1d output length {l_out} < 1", x.shape, weight.shape)
    _add_macs(batch * c_out * c_in * kernel * l_out)

    xp = np.pad(x.values, ((0, 0), (0, 0), (padding, padding))) if padding else x.values
    patches = _sliding_patches(xp, kernel, stride)  # (B, C_in, L_out, K)
    cols = patches.transpose(0, 2, 1, 3).reshape(batch * l_out, c_in * kernel)
    w_mat = weight.values.reshape(c_out, c_in * kernel)
    out = (cols @ w_mat.T).reshape(batch, l_out, c_out).transpose(0, 2, 1)
    parents = (x, weight)
    if bias is not None:
        bias = as_tensor(bias)
        if bias.shape != (c_out,):
            raise ShapeError("conv1d bias shape mismatch", bias.shape, (c_out,))
        out = out + bias.values[None, :, None]
        parents = (x, weight, bias)

    def vjp(g):
        go = np.ascontiguousarray(g.transpose(0, 2, 1)).reshape(batch * l_out, c_out)
        gw = (go.T @ cols).reshape(weight.shape)
        gcols = (go @ w_mat).reshape(batch, l_out, c_in, kernel).transpose(0, 2, 1, 3)
        gxp = np.zeros_like(xp)
        for k in range(kernel):
            gxp[:, :, k : k + l_out * stride : stride] += gcols[:, :, :, k]
        gx = gxp[:, :, padding : gxp.shape[2] - padding] if padding else gxp
        if len(parents) == 3:
            return gx, gw, g.sum(axis=(0, 2))
        return gx, gw

    return _make(out, parents, vjp)


def conv1d_transposed(x, weight, bias=None, stride: int = 1, padding: int = 0) -> Tensor:
    """Adjoint of `conv1d` with the same (C_out, C_in, K) weight.

    Maps (B, C_out, L) to (B, C_in, (L-1)*stride - 2*padding + K); as a
    linear map it is the transpose of conv1d's input-to-output map, so
    <conv1d(x, w), y> == <x, conv1d_transposed(y, w)>.
    """
    x, weight = as_tensor(x), as_tensor(weight)
    if x.values.ndim != 3 or weight.values.ndim != 3 or x.shape[1] != weight.shape[0]:
        raise ShapeError("conv1d_transposed expects (B, C_out, L) and (C_out, C_in, K)", x.shape, weight.shape)
    batch, c_out, l_in = x.shape
    _, c_in, kernel = weight.shape
    l_full = (l_in - 1) * stride + kernel
    l_out = l_full - 2 * padding
    if l_out < 1:
        raise ShapeError(f"conv1d_transposed output length {l_out} < 1", x.shape, weight.shape)
    _add_macs(batch * c_out * c_in * kernel * l_in)

    w_mat = weight.values.reshape(c_out, c_in * kernel)
    spread = (
        (np.ascontiguousarray(x.values.transpose(0, 2, 1)).reshape(batch * l_in, c_out) @ w_mat)
        .reshape(batch, l_in, c_in, kernel)
        .transpose(0, 2, 1, 3)
    )
    full = np.zeros((batch, c_in, l_full), dtype=x.dtype)
    for k in range(kernel):
        full[:, :, k : k + l_in * stride : stride] += spread[:, :, :, k]
    out = full[:, :, padding : l_full - padding] if padding else full
    parents = (x, weight)
    if bias is not None:
        bias = as_tensor(bias)
        if bias.shape != (c_in,):
            raise ShapeError("conv1d_transposed bias shape mismatch", bias.shape, (c_in,))
        out = out + bias.values[None, :, None]
        parents = (x, weight, bias)

    def vjp(g):
        gp = np.pad(g, ((0, 0), (0, 0), (padding, padding))) if padding else g
        g_patches = _sliding_patches(gp, kernel, stride)  # (B, C_in, L_in, K)
        g2 = g_patches.transpose(0, 2, 1, 3).reshape(batch * l_in, c_in * kernel)
        gx = (g2 @ w_mat.T).reshape(batch, l_in, c_out).transpose(0, 2, 1)
        x2 = np.ascontiguousarray(x.values.transpose(0, 2, 1)).reshape(batch * l_in, c_out)
        gw = (x2.T @ g2).reshape(weight.shape)
        if len(parents) == 3:
            return gx, gw, g.sum(axis=(0, 2))
        return gx, gw

    return _make(out, parents, vjp)


class BatchNormState:
    """Running statistics for one batchnorm layer."""

    def __init__(self, channels: int, eps: float = 1e-5, momentum: float = 0.1, dtype=np.float32):
        self.running_mean = np.zeros(channels, dtype=dtype)
        self.running_var = np.ones(channels, dtype=dtype)
        self.eps = eps
        self.momentum = momentum


def batchnorm1d(x, gamma, beta, state: BatchNormState, training: bool) -> Tensor:
    """Per-channel normalization of (B, C, L) or (B, C) input.

    Training mode normalizes by batch statistics and nudges the running
    stats by `momentum`; eval mode applies the running stats frozen.
    """
    x, gamma, beta = as_tensor(x), as_tensor(gamma), as_tensor(beta)
    if x.values.ndim not in (2, 3):
        raise ShapeError("batchnorm1d expects (B, C) or (B, C, L)", x.shape)
    channels = x.shape[1]
    if gamma.shape != (channels,) or beta.shape != (channels,):
        raise ShapeError("batchnorm1d parameter shape mismatch", gamma.shape, (channels,))
    axes = (0,) if x.values.ndim == 2 else (0, 2)
    expand = (lambda v: v[None, :]) if x.values.ndim == 2 else (lambda v: v[None, :, None])
    count = x.values.shape[0] * (1 if x.values.ndim == 2 else x.values.shape[2])

    if training:
        mean = x.values.mean(axis=axes)
        var = x.values.var(axis=axes)
        m = state.momentum
        unbiased = var * (count / max(count - 1, 1))
        state.running_mean = ((1 - m) * state.running_mean + m * mean).astype(state.running_mean.dtype)
        state.running_var = ((1 - m) * state.running_var + m * unbiased).astype(state.running_var.dtype)
    else:
        mean = state.running_mean.astype(x.dtype)
        var = state.running_var.astype(x.dtype)

    inv_std = 1.0 / np.sqrt(var + state.eps)
    xhat = (x.values - expand(mean)) * expand(inv_std)
    out = xhat * expand(gamma.values) + expand(beta.values)

    def vjp(g):
        gxhat = g * expand(gamma.values)
        if training:
            sum_g = gxhat.sum(axis=axes)
            sum_gx = (gxhat * xhat).sum(axis=axes)
            gx = (gxhat - expand(sum_g / count) - xhat * expand(sum_gx / count)) * expand(inv_std)
        else:
            gx = gxhat * expand(inv_std)
        return gx, (g * xhat).sum(axis=axes), g.sum(axis=axes)

    return _make(out, (x, gamma, beta), vjp)


# ---------------------------------------------------------------------------
# spectra and losses


def magnitude_spectrum(x) -> Tensor:
    """|DFT| bins 0..N/2 of each row of (B, N); N must be even."""
    x = as_tensor(x)
    if x.values.ndim != 2 or x.shape[1] % 2 != 0:
        raise ShapeError("magnitude_spectrum expects (B, N) with even N", x.shape)
    n = x.shape[1]
    spec = np.fft.rfft(x.values, axis=1)
    mag = np.abs(spec)

    def vjp(g):
        safe = np.maximum(mag, 1e-30)
        g_complex = g * spec / safe  # d|X|/dX directions
        padded = np.zeros((x.shape[0], n), dtype=np.complex128)
        padded[:, : n // 2 + 1] = g_complex
        # adjoint of the one-sided DFT as a real-linear map
        return ((np.fft.ifft(padded, axis=1) * n).real.astype(x.dtype),)

    return _make(mag.astype(x.dtype), (x,), vjp)


_phase_sum_cache: dict = {}


def spectral_phase_sum(x) -> Tensor:
    """Phase angle of sum_{k<=N/2} X[k] per row of (B, N).

    The one-sided spectral sum is linear in x, so this reduces to an
    atan2 of two fixed inner products.
    """
    x = as_tensor(x)
    if x.values.ndim != 2:
        raise ShapeError("spectral_phase_sum expects (B, N)", x.shape)
    n = x.shape[1]
    if n not in _phase_sum_cache:
        k = np.arange(n // 2 + 1)[:, None]
        angles = 2 * np.pi * k * np.arange(n)[None, :] / n
        _phase_sum_cache[n] = (np.cos(angles).sum(axis=0), -np.sin(angles).sum(axis=0))
    c, s = _phase_sum_cache[n]
    re = tsum(mul(x, c.astype(x.dtype)), axis=1)
    im = tsum(mul(x, s.astype(x.dtype)), axis=1)
    return atan2(im, re)


def l1(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    if a.shape != b.shape:
        raise ShapeError("l1 shape mismatch", a.shape, b.shape)
    return tmean(absolute(sub(a, b)))


def l2(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    if a.shape != b.shape:
        raise ShapeError("l2 shape mismatch", a.shape, b.shape)
    return tmean(square(sub(a, b)))


def kl_diag_gaussian(mu_q, logvar_q, mu_p, var_p) -> Tensor:
    """KL(N(mu_q, diag exp(logvar_q)) || N(mu_p, diag var_p)).

    Summed over latent dimensions, averaged over the batch. The prior is
    a constant (possibly per-sample) array.
    """
    mu_q, logvar_q = as_tensor(mu_q), as_tensor(logvar_q)
    if mu_q.shape != logvar_q.shape:
        raise ShapeError("kl shape mismatch", mu_q.shape, logvar_q.shape)
    mu_p = np.broadcast_to(np.asarray(mu_p, dtype=mu_q.dtype), mu_q.shape)
    var_p = np.broadcast_to(np.asarray(var_p, dtype=mu_q.dtype), mu_q.shape)
    logvar_p = np.log(var_p)
    diff = sub(mu_q, mu_p)
    per_dim = mul(
        add(add(mul(logvar_q, -1.0), logvar_p), div(add(exp(logvar_q), square(diff)), var_p)) + (-1.0),
        0.5,
    )
    return tmean(tsum(per_dim, axis=1))

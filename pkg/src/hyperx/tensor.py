"""Dense float64 tensors with tape-based reverse-mode differentiation.

Every differentiable operation appends one node to the active tape, so the
tape's recording order is already a topological order of the graph.
``backward`` walks the tape once in reverse, computing vector-Jacobian
products into per-pass buffers, then adds the result onto each tensor's
``grad``.  Calling ``backward`` twice without resetting therefore
accumulates gradients (second call adds the same gradient again); use
``zero_grads`` or ``clear_tape`` between steps.

The engine is single-threaded per tape and supports exactly the operations
the model stack needs: matmul/linear, 1-D cross-correlation, Kronecker-sum
weight construction, relu, batch norm, dropout, pooling, concatenation and
softmax cross-entropy.
"""

from __future__ import annotations

import contextlib
import threading
from dataclasses import dataclass

import numpy as np

from .errors import (
    DegenerateBatchError,
    DimensionError,
    LabelError,
    RankError,
)

__all__ = [
    "Tensor",
    "Tape",
    "active_tape",
    "tape_scope",
    "clear_tape",
    "no_grad",
    "backward",
    "zero_grads",
    "add",
    "sub",
    "mul",
    "scale",
    "matmul",
    "transpose",
    "reshape",
    "concat",
    "relu",
    "tensor_sum",
    "global_avg_pool",
    "conv1d",
    "linear",
    "batch_norm",
    "dropout",
    "softmax_cross_entropy",
    "kron",
    "kron_sum",
    "kron_sum_taps",
    "grad_check",
    "GradCheckReport",
]


class Tensor:
    """A dense float64 array plus an optional gradient buffer.

    ``data`` is stored row-major; ``shape`` is fixed at creation (reshape
    returns a new Tensor viewing the same buffer).
    """

    __slots__ = ("data", "requires_grad", "grad")

    def __init__(self, data, requires_grad: bool = False):
        arr = np.asarray(data, dtype=np.float64)
        if not arr.flags["C_CONTIGUOUS"]:
            arr = np.ascontiguousarray(arr)
        self.data = arr
        self.requires_grad = bool(requires_grad)
        self.grad = None

    @property
    def shape(self):
        return self.data.shape

    @property
    def size(self):
        return self.data.size

    @property
    def ndim(self):
        return self.data.ndim

    def item(self) -> float:
        if self.data.size != 1:
            raise RankError(f"item() needs a single-element tensor, got shape {self.data.shape}")
        return float(self.data.reshape(()))

    def zero_grad(self):
        self.grad = None

    def backward(self):
        backward(self)

    def __repr__(self):
        return f"Tensor(shape={tuple(self.data.shape)}, requires_grad={self.requires_grad})"

    # Operator sugar used by tests and small scripts.
    def __add__(self, other):
        return add(self, _as_tensor(other))

    def __sub__(self, other):
        return sub(self, _as_tensor(other))

    def __mul__(self, other):
        if isinstance(other, (int, float)):
            return scale(self, float(other))
        return mul(self, _as_tensor(other))

    __rmul__ = __mul__

    def __matmul__(self, other):
        return matmul(self, _as_tensor(other))

    def sum(self):
        return tensor_sum(self)

    def reshape(self, *shape):
        if len(shape) == 1 and isinstance(shape[0], (tuple, list)):
            shape = tuple(shape[0])
        return reshape(self, shape)


def _as_tensor(x) -> Tensor:
    return x if isinstance(x, Tensor) else Tensor(x)


# ---------------------------------------------------------------------------
# Tape machinery
# ---------------------------------------------------------------------------


class _Node:
    __slots__ = ("out", "vjps")

    def __init__(self, out, vjps):
        self.out = out
        self.vjps = vjps  # list of (input_tensor, fn(grad_out) -> grad_in)


class Tape:
    """Ordered record of differentiable operations."""

    def __init__(self):
        self.nodes: list[_Node] = []

    def clear(self):
        self.nodes.clear()

    def __len__(self):
        return len(self.nodes)


class _EngineState(threading.local):
    """Per-thread tape stack and recording flag; tapes never cross threads."""

    def __init__(self):
        self.tapes = [Tape()]
        self.grad_enabled = [True]


_STATE = _EngineState()


def active_tape() -> Tape:
    return _STATE.tapes[-1]


@contextlib.contextmanager
def tape_scope():
    """Push a fresh tape; operations inside record onto it only."""
    t = Tape()
    _STATE.tapes.append(t)
    try:
        yield t
    finally:
        _STATE.tapes.pop()


def clear_tape():
    active_tape().clear()


@contextlib.contextmanager
def no_grad():
    """Disable recording; outputs created inside never require grad."""
    _STATE.grad_enabled.append(False)
    try:
        yield
    finally:
        _STATE.grad_enabled.pop()


def _recording() -> bool:
    return _STATE.grad_enabled[-1]


def _make_output(data, vjp_pairs) -> Tensor:
    """Wrap ``data``; record a node if any input requires grad."""
    tracked = [(t, fn) for t, fn in vjp_pairs if t.requires_grad]
    if _recording() and tracked:
        out = Tensor(data, requires_grad=True)
        active_tape().nodes.append(_Node(out, tracked))
        return out
    return Tensor(data)


def backward(loss: Tensor):
    """Populate ``grad`` on every requires_grad tensor reachable from ``loss``.

    ``loss`` must be a single-element tensor recorded on the active tape.
    Gradients add onto existing ``grad`` buffers.
    """
    if loss.data.size != 1:
        raise RankError(f"backward needs a scalar loss, got shape {loss.data.shape}")
    pass_grads: dict[int, np.ndarray] = {id(loss): np.ones_like(loss.data)}
    tensors: dict[int, Tensor] = {id(loss): loss}
    for node in reversed(active_tape().nodes):
        g = pass_grads.get(id(node.out))
        if g is None:
            continue
        for t, vjp in node.vjps:
            contrib = vjp(g)
            key = id(t)
            if key in pass_grads:
                pass_grads[key] = pass_grads[key] + contrib
            else:
                pass_grads[key] = contrib
                tensors[key] = t
    for key, t in tensors.items():
        if not t.requires_grad:
            continue
        if t.grad is None:
            t.grad = pass_grads[key]
        else:
            t.grad = t.grad + pass_grads[key]


def zero_grads(tensors):
    for t in tensors:
        t.grad = None


def _unbroadcast(g: np.ndarray, shape) -> np.ndarray:
    """Sum ``g`` down to ``shape`` (reverse of numpy broadcasting)."""
    while g.ndim > len(shape):
        g = g.sum(axis=0)
    for ax, n in enumerate(shape):
        if n == 1 and g.shape[ax] != 1:
            g = g.sum(axis=ax, keepdims=True)
    return g


# ---------------------------------------------------------------------------
# Elementwise and structural ops
# ---------------------------------------------------------------------------


def add(a: Tensor, b: Tensor) -> Tensor:
    data = a.data + b.data
    return _make_output(
        data,
        [(a, lambda g: _unbroadcast(g, a.data.shape)), (b, lambda g: _unbroadcast(g, b.data.shape))],
    )


def sub(a: Tensor, b: Tensor) -> Tensor:
    data = a.data - b.data
    return _make_output(
        data,
        [(a, lambda g: _unbroadcast(g, a.data.shape)), (b, lambda g: _unbroadcast(-g, b.data.shape))],
    )


def mul(a: Tensor, b: Tensor) -> Tensor:
    data = a.data * b.data
    return _make_output(
        data,
        [
            (a, lambda g: _unbroadcast(g * b.data, a.data.shape)),
            (b, lambda g: _unbroadcast(g * a.data, b.data.shape)),
        ],
    )


def scale(a: Tensor, s: float) -> Tensor:
    s = float(s)
    return _make_output(a.data * s, [(a, lambda g: g * s)])


def matmul(a: Tensor, b: Tensor) -> Tensor:
    if a.data.ndim != 2 or b.data.ndim != 2:
        raise RankError(f"matmul needs two rank-2 tensors, got {a.data.shape} and {b.data.shape}")
    if a.data.shape[1] != b.data.shape[0]:
        raise DimensionError(f"matmul inner dimensions disagree: {a.data.shape} x {b.data.shape}")
    data = a.data @ b.data
    return _make_output(
        data,
        [(a, lambda g: g @ b.data.T), (b, lambda g: a.data.T @ g)],
    )


def transpose(a: Tensor) -> Tensor:
    if a.data.ndim != 2:
        raise RankError(f"transpose needs a rank-2 tensor, got shape {a.data.shape}")
    return _make_output(a.data.T.copy(), [(a, lambda g: g.T)])


def reshape(a: Tensor, shape) -> Tensor:
    shape = tuple(int(s) for s in shape)
    if int(np.prod(shape, dtype=np.int64)) != a.data.size:
        raise DimensionError(f"cannot reshape {a.data.shape} to {shape}")
    return _make_output(a.data.reshape(shape), [(a, lambda g: g.reshape(a.data.shape))])


def concat(tensors, axis: int = 1) -> Tensor:
    tensors = list(tensors)
    data = np.concatenate([t.data for t in tensors], axis=axis)
    vjps = []
    start = 0
    for t in tensors:
        width = t.data.shape[axis]
        sl = [slice(None)] * data.ndim
        sl[axis] = slice(start, start + width)
        sl = tuple(sl)
        vjps.append((t, lambda g, sl=sl: g[sl]))
        start += width
    return _make_output(data, vjps)


def relu(x: Tensor) -> Tensor:
    mask = x.data > 0
    return _make_output(x.data * mask, [(x, lambda g: g * mask)])


def tensor_sum(x: Tensor) -> Tensor:
    """Sum of all elements, returned as a scalar tensor."""
    data = np.asarray(x.data.sum())
    return _make_output(data, [(x, lambda g: np.broadcast_to(g, x.data.shape).copy())])


def global_avg_pool(x: Tensor) -> Tensor:
    """[B, C, L] -> [B, C] by averaging over the length axis."""
    if x.data.ndim != 3:
        raise RankError(f"global_avg_pool needs [B, C, L], got shape {x.data.shape}")
    L = x.data.shape[2]
    data = x.data.mean(axis=2)
    return _make_output(
        data, [(x, lambda g: np.broadcast_to(g[:, :, None] / L, x.data.shape))]
    )


# ---------------------------------------------------------------------------
# Linear / convolution
# ---------------------------------------------------------------------------


def linear(x: Tensor, w: Tensor, b: Tensor | None = None) -> Tensor:
    """y = x @ w.T (+ b) with x: [B, d_in], w: [d_out, d_in], b: [d_out]."""
    if x.data.ndim != 2 or w.data.ndim != 2:
        raise RankError(f"linear needs rank-2 x and w, got {x.data.shape} and {w.data.shape}")
    if x.data.shape[1] != w.data.shape[1]:
        raise DimensionError(
            f"linear input width {x.data.shape} does not match weight {w.data.shape}"
        )
    data = x.data @ w.data.T
    vjps = [
        (x, lambda g: g @ w.data),
        (w, lambda g: g.T @ x.data),
    ]
    if b is not None:
        data = data + b.data
        vjps.append((b, lambda g: g.sum(axis=0)))
    return _make_output(data, vjps)


def conv1d(x: Tensor, w: Tensor, b: Tensor | None = None, stride: int = 1, padding: int = 0) -> Tensor:
    """1-D cross-correlation of [B, Cin, L] with [Cout, Cin, K] kernels.

    Output length is floor((L + 2*padding - K) / stride) + 1.
    """
    if x.data.ndim != 3 or w.data.ndim != 3:
        raise RankError(f"conv1d needs x [B,Cin,L] and w [Cout,Cin,K], got {x.data.shape} and {w.data.shape}")
    B, Cin, L = x.data.shape
    Cout, Cin_w, K = w.data.shape
    if Cin != Cin_w:
        raise DimensionError(f"conv1d channel mismatch: input {x.data.shape} vs weight {w.data.shape}")
    if stride < 1:
        raise DimensionError(f"conv1d stride must be >= 1, got {stride}")
    if padding < 0:
        raise DimensionError(f"conv1d padding must be >= 0, got {padding}")
    Lp = L + 2 * padding
    if K > Lp:
        raise DimensionError(
            f"conv1d kernel {w.data.shape} larger than padded input {x.data.shape} (padding={padding})"
        )
    Lout = (Lp - K) // stride + 1
    xp = np.pad(x.data, ((0, 0), (0, 0), (padding, padding))) if padding else x.data
    # windows[b, c, l, k] = xp[b, c, l*stride + k]
    windows = np.lib.stride_tricks.sliding_window_view(xp, K, axis=2)[:, :, ::stride, :]
    cols = np.ascontiguousarray(windows.transpose(0, 2, 1, 3)).reshape(B * Lout, Cin * K)
    wr = w.data.reshape(Cout, Cin * K)
    y = (cols @ wr.T).reshape(B, Lout, Cout).transpose(0, 2, 1)  # [B, Cout, Lout]

    g2_memo = []

    def g2_of(g):
        # vjp_x and vjp_w receive the same upstream array; reshape it once
        if g2_memo and g2_memo[0] is g:
            return g2_memo[1]
        g2 = np.ascontiguousarray(g.transpose(0, 2, 1)).reshape(B * Lout, Cout)
        g2_memo[:] = [g, g2]
        return g2

    def vjp_w(g):
        return (g2_of(g).T @ cols).reshape(w.data.shape)

    def vjp_x(g):
        # dcols laid out [B, Cin, K, Lout] so each tap scatters contiguously
        dcols = np.ascontiguousarray((g2_of(g) @ wr).reshape(B, Lout, Cin, K).transpose(0, 2, 3, 1))
        dxp = np.zeros((B, Cin, Lp))
        for k in range(K):
            dxp[:, :, k : k + stride * Lout : stride] += dcols[:, :, k, :]
        return dxp[:, :, padding : padding + L] if padding else dxp

    vjps = [(x, vjp_x), (w, vjp_w)]
    if b is not None:
        y = y + b.data[None, :, None]
        vjps.append((b, lambda g: g.sum(axis=(0, 2))))
    return _make_output(y, vjps)


# ---------------------------------------------------------------------------
# Normalization / regularization / loss
# ---------------------------------------------------------------------------


def batch_norm(
    x: Tensor,
    gamma: Tensor,
    beta: Tensor,
    running_mean: np.ndarray,
    running_var: np.ndarray,
    train: bool,
    momentum: float = 0.1,
    eps: float = 1e-5,
) -> Tensor:
    """Batch normalization over the channel axis of [B, C] or [B, C, L].

    Train mode normalizes with the batch's population statistics and updates
    the running buffers in place (running = (1-momentum)*running +
    momentum*batch).  Eval mode uses the running statistics.
    """
    nd = x.data.ndim
    if nd == 2:
        axes, shape_c = (0,), (1, -1)
    elif nd == 3:
        axes, shape_c = (0, 2), (1, -1, 1)
    else:
        raise RankError(f"batch_norm needs [B,C] or [B,C,L], got shape {x.data.shape}")
    B = x.data.shape[0]
    C = x.data.shape[1]
    if gamma.data.shape != (C,) or beta.data.shape != (C,):
        raise DimensionError(f"batch_norm affine shapes {gamma.data.shape}/{beta.data.shape} do not match C={C}")
    gm = gamma.data.reshape(shape_c)
    bt = beta.data.reshape(shape_c)

    if train:
        if B < 2:
            raise DegenerateBatchError(f"batch_norm in train mode needs batch size >= 2, got {B}")
        mu = x.data.mean(axis=axes, keepdims=True)
        xmu = x.data - mu
        var = (xmu * xmu).mean(axis=axes, keepdims=True)
        running_mean *= 1.0 - momentum
        running_mean += momentum * mu.reshape(C)
        running_var *= 1.0 - momentum
        running_var += momentum * var.reshape(C)
        inv = 1.0 / np.sqrt(var + eps)
        xhat = xmu * inv
        y = gm * xhat + bt

        def vjp_x(g):
            # dx = inv*gamma*(g - mean(g) - xhat*mean(g*xhat)) over the batch axes
            gx = g * gm
            return inv * (gx - gx.mean(axis=axes, keepdims=True) - xhat * (gx * xhat).mean(axis=axes, keepdims=True))

    else:
        inv = 1.0 / np.sqrt(running_var.reshape(shape_c) + eps)
        xhat = (x.data - running_mean.reshape(shape_c)) * inv
        y = gm * xhat + bt

        def vjp_x(g):
            return g * gm * inv

    return _make_output(
        y,
        [
            (x, vjp_x),
            (gamma, lambda g: (g * xhat).sum(axis=axes)),
            (beta, lambda g: g.sum(axis=axes)),
        ],
    )


def dropout(x: Tensor, p: float, train: bool, rng: np.random.Generator | None = None) -> Tensor:
    """Inverted dropout; exact identity in eval mode or at p == 0."""
    if not 0.0 <= p < 1.0:
        raise DimensionError(f"dropout probability must be in [0, 1), got {p}")
    if not train or p == 0.0:
        return x
    if rng is None:
        raise ValueError("dropout in train mode needs an explicit rng")
    keep = rng.random(x.data.shape) >= p
    factor = keep / (1.0 - p)
    return _make_output(x.data * factor, [(x, lambda g: g * factor)])


def softmax_cross_entropy(logits: Tensor, labels) -> Tensor:
    """Mean cross-entropy of softmax(logits) against integer labels.

    logits: [B, K]; labels: length-B integer array with values in [0, K).
    """
    if logits.data.ndim != 2:
        raise RankError(f"softmax_cross_entropy needs [B, K] logits, got shape {logits.data.shape}")
    labels = np.asarray(labels)
    B, K = logits.data.shape
    if labels.shape != (B,):
        raise DimensionError(f"labels shape {labels.shape} does not match batch {B}")
    labels = labels.astype(np.int64)
    if labels.min() < 0 or labels.max() >= K:
        bad = labels[(labels < 0) | (labels >= K)][0]
        raise LabelError(f"label {bad} outside [0, {K})")
    z = logits.data - logits.data.max(axis=1, keepdims=True)
    ez = np.exp(z)
    sm = ez / ez.sum(axis=1, keepdims=True)
    lse = np.log(ez.sum(axis=1))
    losses = lse - z[np.arange(B), labels]
    data = np.asarray(losses.mean())

    def vjp(g):
        d = sm.copy()
        d[np.arange(B), labels] -= 1.0
        return d * (float(g) / B)

    return _make_output(data, [(logits, vjp)])


# ---------------------------------------------------------------------------
# Kronecker products
# ---------------------------------------------------------------------------


def kron(a: Tensor, b: Tensor) -> Tensor:
    """Kronecker product of two rank-2 tensors: [p,q] x [r,s] -> [p*r, q*s]."""
    if a.data.ndim != 2 or b.data.ndim != 2:
        raise RankError(f"kron needs two rank-2 tensors, got {a.data.shape} and {b.data.shape}")
    p, q = a.data.shape
    r, s = b.data.shape
    data = np.einsum("pq,rs->prqs", a.data, b.data, optimize=True).reshape(p * r, q * s)

    def vjp_a(g):
        g4 = g.reshape(p, r, q, s)
        return np.einsum("prqs,rs->pq", g4, b.data, optimize=True)

    def vjp_b(g):
        g4 = g.reshape(p, r, q, s)
        return np.einsum("prqs,pq->rs", g4, a.data, optimize=True)

    return _make_output(data, [(a, vjp_a), (b, vjp_b)])


def kron_sum(a: Tensor, f: Tensor) -> Tensor:
    """sum_i kron(a[i], f[i]) for a: [n,p,q], f: [n,r,s] -> [p*r, q*s]."""
    if a.data.ndim != 3 or f.data.ndim != 3:
        raise RankError(f"kron_sum needs [n,p,q] and [n,r,s], got {a.data.shape} and {f.data.shape}")
    if a.data.shape[0] != f.data.shape[0]:
        raise DimensionError(f"kron_sum leading dims disagree: {a.data.shape} vs {f.data.shape}")
    n, p, q = a.data.shape
    _, r, s = f.data.shape
    data = np.einsum("ipq,irs->prqs", a.data, f.data, optimize=True).reshape(p * r, q * s)

    def vjp_a(g):
        g4 = g.reshape(p, r, q, s)
        return np.einsum("prqs,irs->ipq", g4, f.data, optimize=True)

    def vjp_f(g):
        g4 = g.reshape(p, r, q, s)
        return np.einsum("prqs,ipq->irs", g4, a.data, optimize=True)

    return _make_output(data, [(a, vjp_a), (f, vjp_f)])


def kron_sum_taps(a: Tensor, f: Tensor) -> Tensor:
    """Per-tap Kronecker sum for convolution filters.

    a: [n,p,q], f: [n,r,s,K] -> [p*r, q*s, K], applying kron_sum
    independently at every kernel tap.
    """
    if a.data.ndim != 3 or f.data.ndim != 4:
        raise RankError(f"kron_sum_taps needs [n,p,q] and [n,r,s,K], got {a.data.shape} and {f.data.shape}")
    if a.data.shape[0] != f.data.shape[0]:
        raise DimensionError(f"kron_sum_taps leading dims disagree: {a.data.shape} vs {f.data.shape}")
    n, p, q = a.data.shape
    _, r, s, K = f.data.shape
    data = np.einsum("ipq,irsk->prqsk", a.data, f.data, optimize=True).reshape(p * r, q * s, K)

    def vjp_a(g):
        g5 = g.reshape(p, r, q, s, K)
        return np.einsum("prqsk,irsk->ipq", g5, f.data, optimize=True)

    def vjp_f(g):
        g5 = g.reshape(p, r, q, s, K)
        return np.einsum("prqsk,ipq->irsk", g5, a.data, optimize=True)

    return _make_output(data, [(a, vjp_a), (f, vjp_f)])


# ---------------------------------------------------------------------------
# Gradient checking
# ---------------------------------------------------------------------------


@dataclass
class GradCheckReport:
    max_rel_err: float
    tol: float
    passed: bool
    nan_found: bool
    n_probes: int
    n_unverifiable: int = 0

    def __str__(self):
        status = "PASS" if self.passed else "FAIL"
        skipped = f" kink_skipped={self.n_unverifiable}" if self.n_unverifiable else ""
        return f"{status} max_rel_err={self.max_rel_err:.3e} tol={self.tol:.1e} probes={self.n_probes}{skipped}"


def grad_check(
    f,
    x: Tensor,
    h: float = 1e-5,
    tol: float = 1e-6,
    max_probes: int = 64,
    rng: np.random.Generator | None = None,
) -> GradCheckReport:
    """Compare the tape gradient of scalar-valued ``f`` at ``x`` against
    central finite differences.

    Relative error is normalized by the largest gradient magnitude so that
    exactly-zero coordinates (dead relu units) do not produce spurious
    failures.  If ``x`` has more than ``max_probes`` elements a random
    subset of coordinates is probed.  ``f`` must be deterministic across
    calls (re-seed any dropout inside it).

    Central differences are only a valid oracle where ``f`` is smooth over
    the probe interval, so each coordinate is probed at two step sizes
    (h and h/8); if the two estimates disagree, a relu kink sits inside the
    interval and that coordinate is reported as unverifiable rather than
    compared.  A wrong backward rule still fails: with smooth ``f`` the two
    estimates agree with each other and expose the tape gradient.
    """
    if not x.requires_grad:
        raise ValueError("grad_check target must have requires_grad=True")
    saved = x.grad
    x.grad = None
    with tape_scope():
        y = f(x)
        if y.data.size != 1:
            raise RankError(f"grad_check needs a scalar-valued function, got shape {y.data.shape}")
        backward(y)
        analytic = x.grad.copy() if x.grad is not None else np.zeros_like(x.data)
    x.grad = saved

    flat = x.data.reshape(-1)
    n = flat.size
    if n <= max_probes:
        idx = np.arange(n)
    else:
        idx = (rng or np.random.default_rng(0)).choice(n, size=max_probes, replace=False)
        idx.sort()

    def central(i, step):
        orig = flat[i]
        flat[i] = orig + step
        fp = float(f(x).data)
        flat[i] = orig - step
        fm = float(f(x).data)
        flat[i] = orig
        return (fp - fm) / (2.0 * step)

    fd_coarse = np.empty(idx.size)
    fd_fine = np.empty(idx.size)
    with no_grad():
        for j, i in enumerate(idx):
            fd_coarse[j] = central(i, h)
            fd_fine[j] = central(i, h / 8.0)

    an = analytic.reshape(-1)[idx]
    nan_found = bool(np.isnan(fd_fine).any() or np.isnan(fd_coarse).any() or np.isnan(an).any())
    if nan_found:
        return GradCheckReport(float("nan"), tol, False, True, int(idx.size))
    denom = max(np.abs(an).max(initial=0.0), np.abs(fd_fine).max(initial=0.0), 1e-8)
    smooth = np.abs(fd_coarse - fd_fine) <= 0.25 * tol * denom
    n_unverifiable = int((~smooth).sum())
    if not smooth.any():
        return GradCheckReport(float("nan"), tol, False, False, int(idx.size), n_unverifiable)
    max_rel = float(np.abs(an[smooth] - fd_fine[smooth]).max() / denom)
    return GradCheckReport(max_rel, tol, max_rel < tol, False, int(idx.size), n_unverifiable)

"""Hypercomplex multiplication/convolution layers and their real counterparts.

A hypercomplex layer of dimension n builds its effective weight as a sum of
Kronecker products, W = sum_i A_i (x) F_i, where the n algebra matrices A_i
(each n x n) are learned alongside the filters F_i.  The F block carries
1/n of the parameters of the equivalent dense or convolutional weight, plus
the n^3 algebra entries.  For n = 4 with A frozen to the quaternion
structure constants the layer performs Hamilton-product multiplication.
"""

from __future__ import annotations

import math

import numpy as np

from .errors import ConfigError
from .tensor import (
    Tensor,
    batch_norm,
    conv1d,
    dropout,
    kron_sum,
    kron_sum_taps,
    linear,
)

__all__ = [
    "hamilton_matrices",
    "algebra_init",
    "he_uniform",
    "HypercomplexWeight",
    "PHMLayer",
    "PHCLayer",
    "Dense",
    "Conv1d",
    "BatchNorm1d",
    "Dropout",
    "param_count",
]


def hamilton_matrices(n: int) -> np.ndarray:
    """Structure constants of the real, complex and quaternion algebras.

    Returns [n, n, n] such that sum_i q_i * M[i] is the left-multiplication
    matrix of the number with components q. Only n in {1, 2, 4} exist here.
    """
    if n == 1:
        return np.ones((1, 1, 1))
    if n == 2:
        return np.array(
            [
                [[1.0, 0.0], [0.0, 1.0]],
                [[0.0, -1.0], [1.0, 0.0]],
            ]
        )
    if n == 4:
        return np.array(
            [
                [[1, 0, 0, 0], [0, 1, 0, 0], [0, 0, 1, 0], [0, 0, 0, 1]],
                [[0, -1, 0, 0], [1, 0, 0, 0], [0, 0, 0, -1], [0, 0, 1, 0]],
                [[0, 0, -1, 0], [0, 0, 0, 1], [1, 0, 0, 0], [0, -1, 0, 0]],
                [[0, 0, 0, -1], [0, 0, -1, 0], [0, 1, 0, 0], [1, 0, 0, 0]],
            ],
            dtype=np.float64,
        )
    raise ConfigError(f"no closed-form algebra for n={n}; use algebra_init")


def algebra_init(n: int, rng: np.random.Generator) -> np.ndarray:
    """Initial A matrices: known algebras for n in {1,2,4}, random signs otherwise."""
    if n in (1, 2, 4):
        return hamilton_matrices(n)
    signs = rng.integers(0, 2, size=(n, n, n)) * 2 - 1
    return signs.astype(np.float64) / n


def he_uniform(shape, fan_in: int, rng: np.random.Generator) -> np.ndarray:
    """Uniform init with gain sqrt(2): bound = sqrt(6 / fan_in)."""
    bound = math.sqrt(6.0 / fan_in)
    return rng.uniform(-bound, bound, size=shape)


class HypercomplexWeight:
    """The (A, F) pair whose Kronecker-sum combination is a layer weight.

    For a multiplication layer F is [n, d_out/n, d_in/n]; for a convolution
    layer F is [n, c_out/n, c_in/n, K] and the sum is applied per tap.
    """

    def __init__(self, n: int, a: Tensor, f: Tensor):
        self.n = n
        self.a = a
        self.f = f

    @classmethod
    def for_phm(cls, d_in, d_out, n, rng, algebra=None):
        _check_divisible("d_in", d_in, n)
        _check_divisible("d_out", d_out, n)
        a = Tensor(algebra_init(n, rng) if algebra is None else algebra, requires_grad=True)
        # He fan-in of the effective [d_out, d_in] weight, not of F itself.
        f = Tensor(he_uniform((n, d_out // n, d_in // n), d_in, rng), requires_grad=True)
        return cls(n, a, f)

    @classmethod
    def for_phc(cls, c_in, c_out, n, k, rng, algebra=None):
        _check_divisible("c_in", c_in, n)
        _check_divisible("c_out", c_out, n)
        a = Tensor(algebra_init(n, rng) if algebra is None else algebra, requires_grad=True)
        f = Tensor(he_uniform((n, c_out // n, c_in // n, k), c_in * k, rng), requires_grad=True)
        return cls(n, a, f)

    def build(self) -> Tensor:
        """Materialize the effective weight (differentiable through A and F)."""
        if self.f.data.ndim == 3:
            return kron_sum(self.a, self.f)
        return kron_sum_taps(self.a, self.f)

    def param_count(self) -> int:
        return self.a.size + self.f.size


def _check_divisible(name: str, value: int, n: int):
    if value % n != 0:
        raise ConfigError(f"{name}={value} is not divisible by n={n}")


class PHMLayer:
    """Hypercomplex multiplication: y = x @ W.T + b with W = sum_i A_i (x) F_i."""

    def __init__(self, d_in: int, d_out: int, n: int, rng, bias: bool = True, algebra=None):
        self.d_in = d_in
        self.d_out = d_out
        self.n = n
        self.weight = HypercomplexWeight.for_phm(d_in, d_out, n, rng, algebra)
        self.b = Tensor(np.zeros(d_out), requires_grad=True) if bias else None

    def forward(self, x: Tensor) -> Tensor:
        return linear(x, self.weight.build(), self.b)

    __call__ = forward

    def params(self):
        out = [("A", self.weight.a), ("F", self.weight.f)]
        if self.b is not None:
            out.append(("b", self.b))
        return out

    def param_count(self) -> int:
        """n^3 + d_out*d_in/n, plus d_out bias terms."""
        return self.weight.param_count() + (self.d_out if self.b is not None else 0)


class PHCLayer:
    """Hypercomplex 1-D convolution; the Kronecker sum is built per kernel tap."""

    def __init__(
        self,
        c_in: int,
        c_out: int,
        n: int,
        kernel_size: int,
        rng,
        stride: int = 1,
        padding: int = 0,
        bias: bool = True,
        algebra=None,
    ):
        self.c_in = c_in
        self.c_out = c_out
        self.n = n
        self.kernel_size = kernel_size
        self.stride = stride
        self.padding = padding
        self.weight = HypercomplexWeight.for_phc(c_in, c_out, n, kernel_size, rng, algebra)
        self.b = Tensor(np.zeros(c_out), requires_grad=True) if bias else None

    def forward(self, x: Tensor) -> Tensor:
        return conv1d(x, self.weight.build(), self.b, stride=self.stride, padding=self.padding)

    __call__ = forward

    def params(self):
        out = [("A", self.weight.a), ("F", self.weight.f)]
        if self.b is not None:
            out.append(("b", self.b))
        return out

    def param_count(self) -> int:
        """n^3 + c_out*c_in*K/n, plus c_out bias terms."""
        return self.weight.param_count() + (self.c_out if self.b is not None else 0)


class Dense:
    """Plain fully-connected layer, the n=1 real counterpart of PHMLayer."""

    def __init__(self, d_in: int, d_out: int, rng, bias: bool = True):
        self.d_in = d_in
        self.d_out = d_out
        self.w = Tensor(he_uniform((d_out, d_in), d_in, rng), requires_grad=True)
        self.b = Tensor(np.zeros(d_out), requires_grad=True) if bias else None

    def forward(self, x: Tensor) -> Tensor:
        return linear(x, self.w, self.b)

    __call__ = forward

    def params(self):
        out = [("W", self.w)]
        if self.b is not None:
            out.append(("b", self.b))
        return out

    def param_count(self) -> int:
        return self.w.size + (self.d_out if self.b is not None else 0)


class Conv1d:
    """Plain 1-D convolution, the n=1 real counterpart of PHCLayer."""

    def __init__(self, c_in, c_out, kernel_size, rng, stride=1, padding=0, bias=True):
        self.c_in = c_in
        self.c_out = c_out
        self.kernel_size = kernel_size
        self.stride = stride
        self.padding = padding
        self.w = Tensor(he_uniform((c_out, c_in, kernel_size), c_in * kernel_size, rng), requires_grad=True)
        self.b = Tensor(np.zeros(c_out), requires_grad=True) if bias else None

    def forward(self, x: Tensor) -> Tensor:
        return conv1d(x, self.w, self.b, stride=self.stride, padding=self.padding)

    __call__ = forward

    def params(self):
        out = [("W", self.w)]
        if self.b is not None:
            out.append(("b", self.b))
        return out

    def param_count(self) -> int:
        return self.w.size + (self.c_out if self.b is not None else 0)


class BatchNorm1d:
    """Batch normalization over the channel axis with running statistics."""

    def __init__(self, channels: int, momentum: float = 0.1, eps: float = 1e-5):
        self.channels = channels
        self.momentum = momentum
        self.eps = eps
        self.gamma = Tensor(np.ones(channels), requires_grad=True)
        self.beta = Tensor(np.zeros(channels), requires_grad=True)
        self.running_mean = np.zeros(channels)
        self.running_var = np.ones(channels)

    def forward(self, x: Tensor, train: bool) -> Tensor:
        return batch_norm(
            x,
            self.gamma,
            self.beta,
            self.running_mean,
            self.running_var,
            train,
            momentum=self.momentum,
            eps=self.eps,
        )

    __call__ = forward

    def params(self):
        return [("gamma", self.gamma), ("beta", self.beta)]

    def buffers(self):
        return [("running_mean", self.running_mean), ("running_var", self.running_var)]

    def param_count(self) -> int:
        return 2 * self.channels


class Dropout:
    def __init__(self, p: float):
        self.p = p

    def forward(self, x: Tensor, train: bool, rng=None) -> Tensor:
        return dropout(x, self.p, train, rng)

    __call__ = forward


def param_count(layer) -> int:
    """Number of learnable scalars in a layer."""
    return layer.param_count()

"""Dense kernels and differentiable layers with hand-written backward passes.

Every layer follows the same protocol: ``forward(x)`` returns ``(y, cache)``
and ``backward(cache, dy)`` returns ``dx`` while accumulating parameter
gradients into ``Parameter.grad``. Because the cache is returned rather than
stored on the layer, one layer may appear several times in a single
computation (the translator reuses adapters for translation, reconstruction
and cycle paths).
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Iterable

import numpy as np
from scipy.special import expit

LN_EPS = 1e-5


class DimensionError(ValueError):
    """Raised when operand widths do not line up."""


class NumericalError(ArithmeticError):
    """Raised when a computation produces a non-finite value."""


@dataclass
class Parameter:
    name: str
    value: np.ndarray
    grad: np.ndarray = field(default=None)  # type: ignore[assignment]

    def __post_init__(self):
        self.value = np.asarray(self.value, dtype=np.float64)
        if self.grad is None:
            self.grad = np.zeros_like(self.value)
        if self.grad.shape != self.value.shape:
            raise DimensionError(f"grad shape {self.grad.shape} != value shape {self.value.shape}")

    def zero_grad(self):
        self.grad.fill(0.0)


def make_rng(seed: int) -> np.random.Generator:
    # PCG64 streams are bit-reproducible across platforms for a given seed.
    return np.random.Generator(np.random.PCG64(int(seed) & 0xFFFFFFFFFFFFFFFF))


def glorot_uniform(rng: np.random.Generator, fan_in: int, fan_out: int) -> np.ndarray:
    limit = np.sqrt(6.0 / (fan_in + fan_out))
    return rng.uniform(-limit, limit, size=(fan_in, fan_out))


# --------------------------------------------------------------------------
# functional kernels


def sigmoid(x: np.ndarray) -> np.ndarray:
    return expit(np.asarray(x, dtype=np.float64))


def silu(x: np.ndarray) -> np.ndarray:
    return x * sigmoid(x)


def silu_backward(x: np.ndarray, upstream: np.ndarray) -> np.ndarray:
    s = sigmoid(x)
    return upstream * (s + x * s * (1.0 - s))


def linear(x: np.ndarray, W: np.ndarray, b: np.ndarray) -> np.ndarray:
    if x.ndim != 2 or x.shape[1] != W.shape[0]:
        raise DimensionError(f"input width {x.shape[-1]} does not match weight rows {W.shape[0]}")
    return x @ W + b


def linear_backward(x, W, upstream):
    """Return ``(dx, dW, db)`` for ``y = xW + b``."""
    return upstream @ W.T, x.T @ upstream, upstream.sum(axis=0)


def layer_norm(x, gamma, beta, eps=LN_EPS):
    if x.shape[1] != gamma.shape[-1] or x.shape[1] != beta.shape[-1]:
        raise DimensionError(f"layer_norm width {x.shape[1]} vs gamma/beta {gamma.shape[-1]}")
    mu = x.mean(axis=1, keepdims=True)
    xc = x - mu
    var = (xc * xc).mean(axis=1, keepdims=True)
    inv = 1.0 / np.sqrt(var + eps)
    xhat = xc * inv
    return xhat * gamma + beta, (xhat, inv, gamma)


def layer_norm_backward(cache, upstream):
    """Return ``(dx, dgamma, dbeta)``."""
    xhat, inv, gamma = cache
    dgamma = (upstream * xhat).sum(axis=0)
    dbeta = upstream.sum(axis=0)
    dxhat = upstream * gamma
    width = xhat.shape[1]
    dx = inv / width * (
        width * dxhat
        - dxhat.sum(axis=1, keepdims=True)
        - xhat * (dxhat * xhat).sum(axis=1, keepdims=True)
    )
    return dx, dgamma, dbeta


def unit_norm(x: np.ndarray):
    """Row-wise ``x / ||x||``; zero rows map to zero. Returns ``(y, norms)``."""
    norms = np.linalg.norm(x, axis=1, keepdims=True)
    safe = np.where(norms > 1e-12, norms, 1.0)
    return np.where(norms > 1e-12, x / safe, 0.0), norms


def unit_norm_backward(y: np.ndarray, norms: np.ndarray, upstream: np.ndarray) -> np.ndarray:
    safe = np.where(norms > 1e-12, norms, 1.0)
    dx = (upstream - y * np.sum(y * upstream, axis=1, keepdims=True)) / safe
    return np.where(norms > 1e-12, dx, 0.0)


# --------------------------------------------------------------------------
# layers


class Layer:
    def parameters(self) -> list[Parameter]:
        return []

    def forward(self, x):
        raise NotImplementedError

    def backward(self, cache, dy):
        raise NotImplementedError

    def __call__(self, x):
        return self.forward(x)[0]


class Linear(Layer):
    def __init__(self, name: str, fan_in: int, fan_out: int, rng: np.random.Generator | None = None):
        self.fan_in, self.fan_out = fan_in, fan_out
        W = glorot_uniform(rng, fan_in, fan_out) if rng is not None else np.zeros((fan_in, fan_out))
        self.W = Parameter(f"{name}.W", W)
        self.b = Parameter(f"{name}.b", np.zeros((1, fan_out)))

    def parameters(self):
        return [self.W, self.b]

    def forward(self, x):
        return linear(x, self.W.value, self.b.value), x

    def backward(self, x, dy):
        dx, dW, db = linear_backward(x, self.W.value, dy)
        self.W.grad += dW
        self.b.grad += db.reshape(self.b.grad.shape)
        return dx


class LayerNorm(Layer):
    def __init__(self, name: str, width: int, eps: float = LN_EPS):
        self.eps = eps
        self.gamma = Parameter(f"{name}.gamma", np.ones((1, width)))
        self.beta = Parameter(f"{name}.beta", np.zeros((1, width)))

    def parameters(self):
        return [self.gamma, self.beta]

    def forward(self, x):
        return layer_norm(x, self.gamma.value, self.beta.value, self.eps)

    def backward(self, cache, dy):
        dx, dg, db = layer_norm_backward(cache, dy)
        self.gamma.grad += dg.reshape(self.gamma.grad.shape)
        self.beta.grad += db.reshape(self.beta.grad.shape)
        return dx


class SiLU(Layer):
    def forward(self, x):
        s = sigmoid(x)
        return x * s, (x, s)

    def backward(self, cache, dy):
        x, s = cache
        return dy * (s + x * s * (1.0 - s))


class Sequential(Layer):
    def __init__(self, layers: Iterable[Layer]):
        self.layers = list(layers)

    def parameters(self):
        return [p for layer in self.layers for p in layer.parameters()]

    def forward(self, x):
        caches = []
        for layer in self.layers:
            x, c = layer.forward(x)
            caches.append(c)
        return x, caches

    def backward(self, caches, dy):
        for layer, c in zip(reversed(self.layers), reversed(caches)):
            dy = layer.backward(c, dy)
        return dy


class ResidualBlock(Layer):
    """``x + W2 silu(LN(W1 x))``; the identity map when the branch weights are zero."""

    def __init__(self, name: str, width: int, rng: np.random.Generator | None = None):
        self.width = width
        self.branch = Sequential([
            Linear(f"{name}.fc1", width, width, rng),
            LayerNorm(f"{name}.ln", width),
            SiLU(),
            Linear(f"{name}.fc2", width, width, rng),
        ])

    def parameters(self):
        return self.branch.parameters()

    def forward(self, x):
        if x.shape[1] != self.width:
            raise DimensionError(f"residual block width {self.width} got input width {x.shape[1]}")
        h, caches = self.branch.forward(x)
        return x + h, caches

    def backward(self, caches, dy):
        return dy + self.branch.backward(caches, dy)


def mlp(name: str, d_in: int, d_out: int, width: int, depth: int, rng=None) -> Sequential:
    """``depth`` hidden layers of Linear -> LayerNorm -> SiLU, then a linear head."""
    layers: list[Layer] = []
    fan_in = d_in
    for k in range(depth):
        layers += [Linear(f"{name}.fc{k}", fan_in, width, rng), LayerNorm(f"{name}.ln{k}", width), SiLU()]
        fan_in = width
    layers.append(Linear(f"{name}.out", fan_in, d_out, rng))
    return Sequential(layers)


def zero_grads(params: Iterable[Parameter]):
    for p in params:
        p.zero_grad()


# --------------------------------------------------------------------------
# gradient checking


def central_difference(f: Callable[[], float], arr: np.ndarray, eps: float) -> np.ndarray:
    """Numerical gradient of the scalar ``f()`` w.r.t. ``arr``, perturbed in place."""
    grad = np.zeros_like(arr)
    flat = arr.reshape(-1)
    gflat = grad.reshape(-1)
    for i in range(flat.size):
        orig = flat[i]
        flat[i] = orig + eps
        fp = f()
        flat[i] = orig - eps
        fm = f()
        flat[i] = orig
        if not (np.isfinite(fp) and np.isfinite(fm)):
            raise NumericalError(f"non-finite value while differencing coordinate {i}")
        gflat[i] = (fp - fm) / (2.0 * eps)
    return grad


def relative_error(analytic: np.ndarray, numeric: np.ndarray) -> float:
    analytic = np.asarray(analytic, dtype=np.float64)
    numeric = np.asarray(numeric, dtype=np.float64)
    if analytic.size == 0:
        return 0.0
    return float(np.max(np.abs(analytic - numeric) / (np.abs(numeric) + 1e-12)))


def finite_difference_check(op: Callable[[np.ndarray], tuple[float, np.ndarray]],
                            point: np.ndarray, eps: float = 1e-5) -> float:
    """Compare an analytic gradient with central differences.

    ``op(x)`` must return ``(value, grad)`` with ``value`` a scalar and
    ``grad`` shaped like ``x``. Returns the maximum over coordinates of
    ``|analytic - numeric| / (|numeric| + 1e-12)``.
    """
    if eps <= 0:
        raise ValueError("eps must be positive")
    x = np.array(point, dtype=np.float64, copy=True)
    value, analytic = op(x.copy())
    if not np.isfinite(value) or not np.all(np.isfinite(analytic)):
        raise NumericalError("non-finite value or gradient at the check point")
    numeric = central_difference(lambda: float(op(x.copy())[0]), x, eps)
    return relative_error(analytic, numeric)


def check_layer(layer: Layer, x: np.ndarray, rng: np.random.Generator, eps: float = 1e-5) -> dict[str, float]:
    """Gradient-check a layer's input and every parameter under a random linear read-out.

    Returns ``{"input": err, <param name>: err, ...}``.
    """
    x = np.array(x, dtype=np.float64, copy=True)
    probe = rng.standard_normal(layer.forward(x)[0].shape)

    def objective() -> float:
        return float(np.sum(layer.forward(x)[0] * probe))

    params = layer.parameters()
    zero_grads(params)
    y, cache = layer.forward(x)
    dx = layer.backward(cache, probe)
    errors = {}
    errors["input"] = relative_error(dx, central_difference(objective, x, eps))
    for p in params:
        errors[p.name] = relative_error(p.grad, central_difference(objective, p.value, eps))
    return errors

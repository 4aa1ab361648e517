"""Dense ReLU feedforward networks on flat float64 parameter vectors.

A network with layer sizes ``(d_in, 200, 200, d_out)`` stores, for every layer,
a weight matrix of shape ``(fan_in, fan_out)`` followed by its bias, all packed
into one contiguous vector. Both the policy network and the environment models
are built on this.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

HIDDEN = (200, 200)


class ShapeError(ValueError):
    """Raised when an input, cotangent or gradient does not fit the network."""


def param_count(sizes: tuple[int, ...]) -> int:
    return sum(a * b + b for a, b in zip(sizes[:-1], sizes[1:]))


@dataclass
class NetworkParams:
    flat: np.ndarray
    sizes: tuple[int, ...]

    def __post_init__(self):
        self.sizes = tuple(int(s) for s in self.sizes)
        self.flat = np.asarray(self.flat, dtype=np.float64)
        if self.flat.ndim != 1 or self.flat.size != param_count(self.sizes):
            raise ShapeError(
                f"flat vector of length {self.flat.size} does not match sizes {self.sizes}"
            )

    @property
    def d_in(self) -> int:
        return self.sizes[0]

    @property
    def d_out(self) -> int:
        return self.sizes[-1]

    def layers(self) -> list[tuple[np.ndarray, np.ndarray]]:
        """(W, b) views into ``flat``; writing to them mutates the parameters."""
        return _split(self.flat, self.sizes)

    def copy(self) -> "NetworkParams":
        return NetworkParams(self.flat.copy(), self.sizes)

    def __eq__(self, other):
        if not isinstance(other, NetworkParams):
            return NotImplemented
        return self.sizes == other.sizes and np.array_equal(self.flat, other.flat)


def _split(flat: np.ndarray, sizes: tuple[int, ...]) -> list[tuple[np.ndarray, np.ndarray]]:
    out = []
    k = 0
    for a, b in zip(sizes[:-1], sizes[1:]):
        W = flat[k:k + a * b].reshape(a, b)
        k += a * b
        out.append((W, flat[k:k + b]))
        k += b
    return out


def init_params(sizes, rng: np.random.Generator) -> NetworkParams:
    """Glorot-uniform weights, zero biases."""
    sizes = tuple(int(s) for s in sizes)
    params = NetworkParams(np.zeros(param_count(sizes)), sizes)
    for W, _ in params.layers():
        fan_in, fan_out = W.shape
        limit = np.sqrt(6.0 / (fan_in + fan_out))
        W[...] = rng.uniform(-limit, limit, size=W.shape)
    return params


def mlp_sizes(d_in: int, d_out: int, hidden=HIDDEN) -> tuple[int, ...]:
    return (d_in, *hidden, d_out)


def _as_batch(params: NetworkParams, x) -> tuple[np.ndarray, bool]:
    x = np.asarray(x, dtype=np.float64)
    single = x.ndim == 1
    if single:
        x = x[None, :]
    if x.ndim != 2 or x.shape[1] != params.d_in:
        raise ShapeError(f"expected input of width {params.d_in}, got shape {x.shape}")
    return x, single


def _forward_cached(params: NetworkParams, x: np.ndarray):
    acts = [x]
    layers = params.layers()
    h = x
    for i, (W, b) in enumerate(layers):
        z = h @ W + b
        if i < len(layers) - 1:
            z = np.maximum(z, 0.0)
        acts.append(z)
        h = z
    return acts


def forward(params: NetworkParams, x) -> np.ndarray:
    """Network output for one input vector ``(d_in,)`` or a batch ``(n, d_in)``."""
    xb, single = _as_batch(params, x)
    out = _forward_cached(params, xb)[-1]
    return out[0] if single else out


def backward(params: NetworkParams, x, output_grad) -> np.ndarray:
    """Gradient of ``sum(forward(params, x) * output_grad)`` w.r.t. the flat parameters.

    For a batch the contributions of all rows are summed. The ReLU derivative
    at exactly zero is taken as zero.
    """
    xb, single = _as_batch(params, x)
    g = np.asarray(output_grad, dtype=np.float64)
    if single:
        g = g[None, :] if g.ndim == 1 else g
    if g.shape != (xb.shape[0], params.d_out):
        raise ShapeError(f"output_grad shape {g.shape} != {(xb.shape[0], params.d_out)}")
    _, grad = forward_backward(params, xb, g)
    return grad


def forward_backward(params: NetworkParams, x: np.ndarray, output_grad_fn):
    """Forward pass then backward pass in one go.

    ``output_grad_fn`` is either a fixed cotangent array or a callable mapping
    the network output to the cotangent, which lets losses reuse the forward
    activations. Returns ``(output, flat_gradient)``.
    """
    acts = _forward_cached(params, x)
    out = acts[-1]
    delta = output_grad_fn(out) if callable(output_grad_fn) else output_grad_fn
    delta = np.asarray(delta, dtype=np.float64)
    grad = np.empty_like(params.flat)
    glayers = _split(grad, params.sizes)
    layers = params.layers()
    for i in range(len(layers) - 1, -1, -1):
        W, _ = layers[i]
        gW, gb = glayers[i]
        np.matmul(acts[i].T, delta, out=gW)
        gb[...] = delta.sum(axis=0)
        if i > 0:
            delta = (delta @ W.T) * (acts[i] > 0.0)
    return out, grad


def sgd_step(params: NetworkParams, grad, lr: float) -> NetworkParams:
    """Return ``params - lr * grad``; refuses non-finite gradients."""
    grad = np.asarray(grad, dtype=np.float64)
    if grad.shape != params.flat.shape:
        raise ShapeError(f"gradient shape {grad.shape} != {params.flat.shape}")
    if not lr > 0:
        raise ValueError(f"learning rate must be positive, got {lr}")
    if not np.all(np.isfinite(grad)):
        raise FloatingPointError("non-finite gradient; update not applied")
    return NetworkParams(params.flat - lr * grad, params.sizes)

"""Dense MLP arithmetic with reverse-mode automatic differentiation.

Everything is float64 numpy. The network family is fixed: stacks of
affine layers with rectifier / tanh / identity activations, which covers
every network used in the package. Gradients are computed by an explicit
layer-by-layer backward pass over a recorded trace; the second-order
quantity needed by the critic's input-gradient penalty is computed
forward-over-reverse (a directional derivative pushed through both the
forward and the backward pass).
"""

from dataclasses import dataclass

import numpy as np


class DimensionError(ValueError):
    """Shape mismatch between parameters and data."""


# activation, derivative, second derivative
def _relu(z):
    return np.maximum(z, 0.0)


def _relu_d(z):
    return (z > 0.0).astype(np.float64)


def _relu_dd(z):
    return np.zeros_like(z)


def _tanh_d(z):
    t = np.tanh(z)
    return 1.0 - t * t


def _tanh_dd(z):
    t = np.tanh(z)
    return -2.0 * t * (1.0 - t * t)


def _ident(z):
    return z


def _one(z):
    return np.ones_like(z)


def _zero(z):
    return np.zeros_like(z)


ACTIVATIONS = {
    "relu": (_relu, _relu_d, _relu_dd),
    "tanh": (np.tanh, _tanh_d, _tanh_dd),
    "identity": (_ident, _one, _zero),
}


@dataclass
class DenseLayer:
    w: np.ndarray  # (fan_in, fan_out)
    b: np.ndarray  # (fan_out,)
    act: str = "identity"

    def __post_init__(self):
        if self.act not in ACTIVATIONS:
            raise ValueError(f"unknown activation {self.act!r}")
        if self.w.ndim != 2 or self.b.shape != (self.w.shape[1],):
            raise DimensionError(
                f"layer shapes inconsistent: w {self.w.shape}, b {self.b.shape}"
            )


@dataclass
class Mlp:
    """Ordered affine+activation layers; holds one parameter set."""

    layers: list

    def __post_init__(self):
        for prev, nxt in zip(self.layers, self.layers[1:]):
            if prev.w.shape[1] != nxt.w.shape[0]:
                raise DimensionError(
                    f"adjacent layer dims incompatible: {prev.w.shape} -> {nxt.w.shape}"
                )

    @property
    def in_dim(self) -> int:
        return self.layers[0].w.shape[0]

    @property
    def out_dim(self) -> int:
        return self.layers[-1].w.shape[1]

    def arrays(self) -> list:
        """Flat [w1, b1, w2, b2, ...] view (shared storage) for the optimizer."""
        out = []
        for lay in self.layers:
            out.append(lay.w)
            out.append(lay.b)
        return out

    def copy(self) -> "Mlp":
        return Mlp([DenseLayer(l.w.copy(), l.b.copy(), l.act) for l in self.layers])


@dataclass
class MlpTrace:
    """Per-layer pre-activations and activations recorded during forward."""

    params: Mlp
    inputs: np.ndarray        # (n, d_in)
    zs: list                  # pre-activations per layer
    acts: list                # activations per layer (post-activation)
    squeeze: bool             # input was 1-D


def _as_batch(x) -> tuple:
    x = np.asarray(x, dtype=np.float64)
    if x.ndim == 1:
        return x[None, :], True
    if x.ndim == 2:
        return x, False
    raise DimensionError(f"expected 1-D or 2-D input, got shape {x.shape}")


def mlp_forward(params: Mlp, x, record: bool = False):
    """Evaluate the network; optionally record a trace for backward().

    Returns the output, or (output, trace) when record is set. A 1-D
    input yields a 1-D output.
    """
    a, squeeze = _as_batch(x)
    if a.shape[1] != params.in_dim:
        raise DimensionError(
            f"input dim {a.shape[1]} does not match first layer ({params.in_dim})"
        )
    zs, acts = [], []
    for lay in params.layers:
        z = a @ lay.w + lay.b
        a = ACTIVATIONS[lay.act][0](z)
        if record:
            zs.append(z)
            acts.append(a)
    out = a[0] if squeeze else a
    if record:
        return out, MlpTrace(params, _as_batch(x)[0], zs, acts, squeeze)
    return out


def mlp_backward(trace: MlpTrace, seed) -> tuple:
    """Pull an output seed back to parameter and input gradients.

    Computes d(sum(seed * output))/d(each w, b) and d/d(input).
    Returns (grads, dinput) with grads as [dw1, db1, dw2, db2, ...].
    """
    if not isinstance(trace, MlpTrace) or not trace.zs:
        raise ValueError("backward needs a trace recorded by mlp_forward(record=True)")
    params = trace.params
    s, _ = _as_batch(seed)
    if s.shape != trace.acts[-1].shape:
        raise DimensionError(
            f"seed shape {s.shape} does not match output {trace.acts[-1].shape}"
        )
    grads = [None] * (2 * len(params.layers))
    d = s * ACTIVATIONS[params.layers[-1].act][1](trace.zs[-1])
    for k in range(len(params.layers) - 1, -1, -1):
        lay = params.layers[k]
        a_prev = trace.inputs if k == 0 else trace.acts[k - 1]
        grads[2 * k] = a_prev.T @ d
        grads[2 * k + 1] = d.sum(axis=0)
        e = d @ lay.w.T
        if k > 0:
            d = e * ACTIVATIONS[params.layers[k - 1].act][1](trace.zs[k - 1])
    dinput = e[0] if trace.squeeze else e
    return grads, dinput


def _penalty_batch(params: Mlp, x_hat: np.ndarray) -> tuple:
    """Mean (||grad_x c(x)||_2 - 1)^2 over rows, with its parameter gradient.

    The parameter gradient is forward-over-reverse: the input-tangent
    v_i = (2(n_i-1)/n_i) g_i / N is pushed through the forward pass and
    then through the backward recurrence with dual numbers, so the
    tangent of each parameter gradient accumulates exactly
    d/d(params) of the mean penalty.
    """
    if params.out_dim != 1:
        raise DimensionError("gradient penalty needs a scalar-output network")
    x, _ = _as_batch(x_hat)
    if x.shape[1] != params.in_dim:
        raise DimensionError(
            f"input dim {x.shape[1]} does not match critic ({params.in_dim})"
        )
    n_rows = x.shape[0]
    layers = params.layers

    # primal forward + backward for the input gradient g
    out, trace = mlp_forward(params, x, record=True)
    _, g = mlp_backward(trace, np.ones_like(out))
    norms = np.sqrt(np.sum(g * g, axis=1))
    penalty = float(np.mean((norms - 1.0) ** 2))

    safe = np.maximum(norms, 1e-12)
    v = (2.0 * (norms - 1.0) / safe / n_rows)[:, None] * g

    # forward tangent pass seeded with v
    a, adot = x, v
    zdots, adots_prev = [], []
    for k, lay in enumerate(layers):
        adots_prev.append(adot)
        zdot = adot @ lay.w
        zdots.append(zdot)
        adot = ACTIVATIONS[lay.act][1](trace.zs[k]) * zdot

    # backward tangent pass; primal seed is 1 with zero tangent
    grads = [None] * (2 * len(layers))
    act1 = ACTIVATIONS[layers[-1].act][1](trace.zs[-1])
    act2 = ACTIVATIONS[layers[-1].act][2](trace.zs[-1])
    d = act1.copy()
    ddot = act2 * zdots[-1]
    for k in range(len(layers) - 1, -1, -1):
        lay = layers[k]
        a_prev = x if k == 0 else trace.acts[k - 1]
        grads[2 * k] = adots_prev[k].T @ d + a_prev.T @ ddot
        grads[2 * k + 1] = ddot.sum(axis=0)
        e = d @ lay.w.T
        edot = ddot @ lay.w.T
        if k > 0:
            act1 = ACTIVATIONS[layers[k - 1].act][1](trace.zs[k - 1])
            act2 = ACTIVATIONS[layers[k - 1].act][2](trace.zs[k - 1])
            d = e * act1
            ddot = edot * act1 + e * act2 * zdots[k - 1]
    return penalty, grads, norms


def gradient_penalty(params: Mlp, x_hat: np.ndarray) -> tuple:
    """Batched penalty: (mean penalty, parameter grads, per-row norms)."""
    return _penalty_batch(params, np.atleast_2d(np.asarray(x_hat, dtype=np.float64)))


def input_gradient_norm_grad(params: Mlp, x_hat) -> tuple:
    """Penalty term for one point: (||grad_x c||, d(||grad_x c||-1)^2 / d params)."""
    penalty, grads, norms = _penalty_batch(
        params, np.atleast_2d(np.asarray(x_hat, dtype=np.float64))
    )
    del penalty
    return float(norms[0]), grads


def gumbel_softmax(logits, tau: float, noise) -> np.ndarray:
    """Relaxed categorical sample softmax((logits + noise) / tau).

    `noise` must be standard Gumbel draws of the same shape. Output rows
    are simplex points; tau -> 0 approaches one-hot at argmax(logits+noise).
    """
    if tau <= 0.0:
        raise ValueError(f"temperature must be positive, got {tau}")
    u = (np.asarray(logits, dtype=np.float64) + np.asarray(noise, dtype=np.float64)) / tau
    u = u - u.max(axis=-1, keepdims=True)
    e = np.exp(u)
    return e / e.sum(axis=-1, keepdims=True)


def gumbel_softmax_vjp(y: np.ndarray, seed: np.ndarray, tau: float) -> np.ndarray:
    """Backward of gumbel_softmax with respect to the logits."""
    inner = (seed * y).sum(axis=-1, keepdims=True)
    return y * (seed - inner) / tau


def hard_onehot(y: np.ndarray) -> np.ndarray:
    """Exact one-hot at the argmax of each row of a relaxed sample."""
    y = np.atleast_2d(y)
    out = np.zeros_like(y)
    out[np.arange(y.shape[0]), np.argmax(y, axis=-1)] = 1.0
    return out


def zero_grads_like(arrays: list) -> list:
    return [np.zeros_like(a) for a in arrays]


def add_scaled(dst: list, src: list, scale: float = 1.0) -> None:
    """dst += scale * src, elementwise over matching array lists."""
    for d, s in zip(dst, src):
        d += scale * s

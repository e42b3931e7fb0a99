"""Dueling Q-network over (request, normalized budget, normalized time).

The request is bottlenecked through a single affine unit so the wide
one-hot block cannot overpower the two scalar constraints; the bottleneck
is initialized from the price model's mean head. A shared trunk layer
feeds separate value and advantage branches combined as
Q = V + (A - mean A).
"""

from dataclasses import dataclass

import numpy as np

from ..autodiff import Mlp, mlp_backward, mlp_forward
from ..data import PackedRequests
from ..errors import ConfigError
from ..optim import make_mlp


@dataclass
class QNetwork:
    f1_w: np.ndarray     # (D,) request bottleneck weights
    f1_b: np.ndarray     # (1,)
    trunk: Mlp           # 3 -> shared width
    value: Mlp           # shared -> 64 -> 1
    advantage: Mlp       # shared -> 64 -> k

    @property
    def n_actions(self) -> int:
        return self.advantage.out_dim

    def arrays(self) -> list:
        return ([self.f1_w, self.f1_b] + self.trunk.arrays()
                + self.value.arrays() + self.advantage.arrays())

    def copy(self) -> "QNetwork":
        return QNetwork(self.f1_w.copy(), self.f1_b.copy(), self.trunk.copy(),
                        self.value.copy(), self.advantage.copy())

    @classmethod
    def build(cls, width: int, rng, n_actions: int = 20, shared: int = 128,
              branch: int = 64, price_model=None) -> "QNetwork":
        """Xavier everywhere except the bottleneck, which starts at the
        price model's mean head when one is given."""
        if price_model is not None:
            if price_model.mu_w.size != width:
                raise ConfigError("price model width does not match request width")
            f1_w = price_model.mu_w.copy()
            f1_b = np.array([price_model.mu_b])
        else:
            r = np.sqrt(6.0 / (width + 1))
            f1_w = rng.uniform(-r, r, size=width)
            f1_b = np.zeros(1)
        return cls(
            f1_w,
            f1_b,
            make_mlp([3, shared], ["relu"], rng),
            make_mlp([shared, branch, 1], ["relu", "identity"], rng),
            make_mlp([shared, branch, n_actions], ["relu", "identity"], rng),
        )


def _batch_input(qnet: QNetwork, packed: PackedRequests, b_norm, t_norm):
    h1 = packed.dot(qnet.f1_w) + qnet.f1_b[0]
    return np.column_stack([h1, np.asarray(b_norm, dtype=np.float64),
                            np.asarray(t_norm, dtype=np.float64)])


def q_forward(qnet: QNetwork, packed: PackedRequests, b_norm, t_norm,
              record: bool = False):
    """Q-values (n, k); optionally also the traces needed for backward."""
    x = _batch_input(qnet, packed, b_norm, t_norm)
    t_out = mlp_forward(qnet.trunk, x, record=record)
    t_val, t_trace = t_out if record else (t_out, None)
    v_out = mlp_forward(qnet.value, t_val, record=record)
    v, v_trace = v_out if record else (v_out, None)
    a_out = mlp_forward(qnet.advantage, t_val, record=record)
    a, a_trace = a_out if record else (a_out, None)
    q = v + a - a.mean(axis=1, keepdims=True)
    if record:
        return q, (packed, t_trace, v_trace, a_trace)
    return q


def q_backward(qnet: QNetwork, traces, dq: np.ndarray) -> list:
    """Parameter gradients for a seed on the Q output (dueling combine,
    branches, trunk, then the request bottleneck)."""
    packed, t_trace, v_trace, a_trace = traces
    k = qnet.n_actions
    dv = dq.sum(axis=1, keepdims=True)
    da = dq - dq.sum(axis=1, keepdims=True) / k
    g_value, d_trunk_v = mlp_backward(v_trace, dv)
    g_adv, d_trunk_a = mlp_backward(a_trace, da)
    g_trunk, d_in = mlp_backward(t_trace, d_trunk_v + d_trunk_a)
    dh1 = d_in[:, 0]
    g_f1w = packed.scatter(dh1)
    g_f1b = np.array([dh1.sum()])
    return [g_f1w, g_f1b] + g_trunk + g_value + g_adv


def q_values(qnet: QNetwork, obs) -> np.ndarray:
    """Q-row for a single environment observation."""
    packed = PackedRequests([obs.request])
    return q_forward(qnet, packed, [obs.budget_norm], [obs.time_norm])[0]

"""Fitted deep Q-iteration from logged trajectories.

The batch log has no advertiser state, so episodes are reconstructed by
chunking the time-ordered records into fixed-length sequences; each
chunk's starting budget is the spend it actually incurred, and the
budget trace replays the realized costs. Training alternates freezing a
target copy and regressing the online network toward the one-step
bootstrapped returns over the whole transition set.
"""

import warnings
from dataclasses import dataclass, field

import numpy as np

from ..data import SampleSet
from ..errors import DataError, NumericalError
from ..optim import AdamState, adam_step
from .base import ActionGrid
from .qnet import QNetwork, q_backward, q_forward
from .replay import Transition, batch_arrays


def fitted_q_loss(qnet: QNetwork, target_net: QNetwork, batch: dict,
                  gamma: float = 1.0):
    """Squared error against the frozen-network target
    r + gamma * max_a' Q_target(s', a'); terminal rows regress to r."""
    n = batch["reward"].size
    q_next = q_forward(target_net, batch["next_packed"], batch["next_b"],
                       batch["next_t"])
    target = batch["reward"] + gamma * q_next.max(axis=1) * (~batch["done"])
    q, traces = q_forward(qnet, batch["packed"], batch["b"], batch["t"], record=True)
    taken = q[np.arange(n), batch["action"]]
    err = taken - target
    dq = np.zeros_like(q)
    dq[np.arange(n), batch["action"]] = 2.0 * err / n
    return float(np.mean(err * err)), q_backward(qnet, traces, dq)


def fdqi_build_transitions(samples: SampleSet, grid: ActionGrid, t0: int,
                           cpm_ref: float, utility: str = "impression") -> list:
    """Chunk records into consecutive t0-step episodes and reconstruct
    (observation, grid action, realized reward, next observation, done)."""
    n = len(samples)
    if n == 0:
        raise DataError("no records to build transitions from")
    if n < t0:
        warnings.warn(f"only {n} records; using one shorter episode")
        chunks = [np.arange(n)]
    else:
        chunks = [np.arange(s, s + t0) for s in range(0, n - t0 + 1, t0)]

    costs_all = np.where(samples.wins, np.nan_to_num(samples.prices), 0.0)
    rewards_all = (samples.clicks if utility == "click" else samples.wins).astype(float)
    scale = cpm_ref * t0 / 1000.0
    transitions = []
    for chunk in chunks:
        costs = costs_all[chunk]
        budget0 = float(costs.sum())
        budget = budget0
        m = chunk.size
        for j, i in enumerate(chunk):
            b_norm = budget / max(scale, 1e-12)
            t_norm = (m - j) / t0
            next_budget = budget - costs[j]
            done = j == m - 1
            nxt = chunk[j + 1] if not done else i
            transitions.append(Transition(
                samples.requests[i], b_norm, t_norm,
                grid.nearest_index(float(samples.bids[i])),
                float(rewards_all[i]),
                samples.requests[nxt],
                next_budget / max(scale, 1e-12),
                (m - j - 1) / t0,
                done,
            ))
            budget = next_budget
    return transitions


@dataclass
class FdqiConfig:
    outer_iters: int = 10         # target refreshes
    epochs_per_iter: int = 2      # full passes over the data per refresh
    batch_size: int = 256
    lr: float = 1e-3
    gamma: float = 1.0
    holdout_fraction: float = 0.1
    n_actions: int = 20
    shared_width: int = 128
    branch_width: int = 64


@dataclass
class FdqiDiagnostics:
    holdout_td: list = field(default_factory=list)
    iterations: int = 0


def fdqi_train(transitions: list, width: int, cfg: FdqiConfig, rng,
               price_model=None):
    """Repeated fitted iterations over the full batch; keeps the
    best-so-far network by held-out TD error and aborts on divergence."""
    if not transitions:
        raise DataError("fdqi needs at least one transition")
    qnet = QNetwork.build(width, rng, n_actions=cfg.n_actions,
                          shared=cfg.shared_width, branch=cfg.branch_width,
                          price_model=price_model)
    state = AdamState.for_arrays(qnet.arrays())

    ids = rng.permutation(len(transitions))
    n_hold = max(1, int(cfg.holdout_fraction * len(transitions)))
    hold = [transitions[i] for i in ids[:n_hold]]
    train = [transitions[i] for i in ids[n_hold:]] or hold
    hold_batch = batch_arrays(hold)

    best = None
    diag = FdqiDiagnostics()
    for it in range(cfg.outer_iters):
        target = qnet.copy()
        for _ in range(cfg.epochs_per_iter):
            order = rng.permutation(len(train))
            for s in range(0, len(train), cfg.batch_size):
                rows = order[s : s + cfg.batch_size]
                batch = batch_arrays([train[i] for i in rows])
                loss, grads = fitted_q_loss(qnet, target, batch, cfg.gamma)
                if not np.isfinite(loss):
                    raise NumericalError(f"fdqi diverged at iteration {it}")
                adam_step(qnet.arrays(), grads, state, lr=cfg.lr)
        td, _ = fitted_q_loss(qnet, qnet, hold_batch, cfg.gamma)
        diag.holdout_td.append(td)
        diag.iterations = it + 1
        if best is None or td < best[0]:
            best = (td, qnet.copy())
    return best[1], diag

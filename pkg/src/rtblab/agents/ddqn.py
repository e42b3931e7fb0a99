"""Exploration-trained dueling double DQN.

Workers step independent environment instances in synchronous rounds and
feed one replay buffer; a single optimizer updates the online network
once per round after warmup, and the target network is refreshed every
target_sync updates. Each episode draws a fresh budget multiplier so the
policy learns to generalize across advertiser states.
"""

from dataclasses import dataclass, field

import numpy as np

from ..errors import NumericalError
from ..optim import AdamState, adam_step
from .base import ActionGrid
from .qnet import QNetwork, q_backward, q_forward, q_values
from .replay import ReplayBuffer, Transition, batch_arrays


def epsilon_schedule(step: int, floor: float = 0.2, scale: float = 500_000.0) -> float:
    """floor + (1 - floor) * exp(-step / scale)."""
    return floor + (1.0 - floor) * float(np.exp(-step / scale))


def act_epsilon_greedy(qnet: QNetwork, obs, eps: float, rng) -> int:
    """Uniform action with probability eps, else greedy (lowest index wins ties)."""
    if rng.random() < eps:
        return int(rng.integers(qnet.n_actions))
    return int(np.argmax(q_values(qnet, obs)))


def ddqn_loss(qnet: QNetwork, target_net: QNetwork, batch: dict,
              gamma: float = 1.0):
    """Mean squared TD error with the double-Q target: the target network
    evaluated at the online network's argmax action; terminal rows use r."""
    n = batch["reward"].size
    q_next_online = q_forward(qnet, batch["next_packed"], batch["next_b"],
                              batch["next_t"])
    a_star = np.argmax(q_next_online, axis=1)
    q_next_target = q_forward(target_net, batch["next_packed"], batch["next_b"],
                              batch["next_t"])
    boot = q_next_target[np.arange(n), a_star]
    target = batch["reward"] + gamma * boot * (~batch["done"])

    q, traces = q_forward(qnet, batch["packed"], batch["b"], batch["t"], record=True)
    taken = q[np.arange(n), batch["action"]]
    err = taken - target
    loss = float(np.mean(err * err))
    dq = np.zeros_like(q)
    dq[np.arange(n), batch["action"]] = 2.0 * err / n
    return loss, q_backward(qnet, traces, dq)


@dataclass
class DdqnConfig:
    total_steps: int = 200_000        # worker env steps (desk scale)
    workers: int = 4
    batch_size: int = 32
    lr: float = 1e-3
    buffer_capacity: int = 2_500_000
    warmup_steps: int = 2000
    target_sync: int = 5000           # optimizer updates between target copies
    gamma: float = 1.0
    eps_floor: float = 0.2
    eps_scale: float = 500_000.0
    t0: int = 1000                    # episode length
    alpha_mode: str = "log2"          # 2^U(-2,2); "linear" draws U(-2,2) directly
    alpha_range: tuple = (-2.0, 2.0)
    fixed_budget: float = None        # overrides alpha sampling when set
    n_actions: int = 20
    shared_width: int = 128
    branch_width: int = 64
    log_every: int = 5000


@dataclass
class DdqnDiagnostics:
    losses: list = field(default_factory=list)
    episode_rewards: list = field(default_factory=list)
    steps: int = 0
    updates: int = 0


def _draw_budget(cfg: DdqnConfig, cpm_ref: float, rng) -> float:
    if cfg.fixed_budget is not None:
        return float(cfg.fixed_budget)
    u = rng.uniform(*cfg.alpha_range)
    alpha = 2.0 ** u if cfg.alpha_mode == "log2" else max(u, 0.0)
    return alpha * cpm_ref * 1e-3 * cfg.t0


def train_ddqn(env_factory, grid: ActionGrid, cfg: DdqnConfig, rng,
               price_model=None):
    """Train the online network in a factory of training environments.

    The request bottleneck starts from the price model's mean head when
    given. Returns (qnet, diagnostics).
    """
    envs = [env_factory(f"ddqn-w{i}") for i in range(cfg.workers)]
    width = envs[0].price_model.mu_w.size
    qnet = QNetwork.build(width, rng, n_actions=len(grid), shared=cfg.shared_width,
                          branch=cfg.branch_width, price_model=price_model)
    target = qnet.copy()
    state = AdamState.for_arrays(qnet.arrays())
    buffer = ReplayBuffer(cfg.buffer_capacity)
    diag = DdqnDiagnostics()

    obs = []
    for env in envs:
        obs.append(env.reset(_draw_budget(cfg, env.meta.cpm_ref, rng), cfg.t0))

    steps = 0
    updates = 0
    while steps < cfg.total_steps:
        for i, env in enumerate(envs):
            eps = epsilon_schedule(steps, cfg.eps_floor, cfg.eps_scale)
            a = act_epsilon_greedy(qnet, obs[i], eps, rng)
            out = env.step(float(grid.values[a]))
            buffer.push(Transition(
                obs[i].request, obs[i].budget_norm, obs[i].time_norm,
                a, out.reward,
                out.observation.request, out.observation.budget_norm,
                out.observation.time_norm, out.done,
            ))
            steps += 1
            if out.done:
                diag.episode_rewards.append(env.total_reward)
                obs[i] = env.reset(_draw_budget(cfg, env.meta.cpm_ref, rng), cfg.t0)
            else:
                obs[i] = out.observation

        if steps >= cfg.warmup_steps and len(buffer) >= cfg.batch_size:
            batch = batch_arrays(buffer.sample(cfg.batch_size, rng))
            loss, grads = ddqn_loss(qnet, target, batch, cfg.gamma)
            if not np.isfinite(loss):
                raise NumericalError(f"ddqn loss non-finite at step {steps}")
            adam_step(qnet.arrays(), grads, state, lr=cfg.lr)
            updates += 1
            diag.losses.append(loss)
            if updates % cfg.target_sync == 0:
                target = qnet.copy()
    diag.steps = steps
    diag.updates = updates
    return qnet, diag

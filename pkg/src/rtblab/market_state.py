"""Adversarially trained market state model.

A generator maps standard-normal noise to a relaxed one-hot bid request
(one Gumbel-softmax block per categorical field). A scalar critic is
trained with the Wasserstein objective plus an input-gradient penalty;
the generator descends the negated critic score through the relaxation.
Simulation-time sampling takes the per-field argmax of a relaxed draw,
so emitted requests are exact one-hots.
"""

from dataclasses import dataclass, field

import numpy as np

from .autodiff import (
    Mlp,
    gradient_penalty,
    gumbel_softmax,
    gumbel_softmax_vjp,
    mlp_backward,
    mlp_forward,
    zero_grads_like,
)
from .data import BidRequest, FeatureDict
from .errors import ConfigError, NumericalError
from .optim import AdamState, adam_step, make_mlp
from .rng import gumbel


@dataclass
class WganConfig:
    gp_lambda: float = 10.0
    critic_steps: int = 5
    batch_size: int = 1024
    tau: float = 0.667
    lr: float = 1e-4
    l2: float = 1e-10
    max_iters: int = 4000
    z_dim: int = 64
    gen_hidden: tuple = (256, 256, 128)
    critic_hidden: tuple = (256, 256, 128)
    activation: str = "relu"
    stop_window: int = 50
    stop_tol: float = 1e-3
    stop_min_iters: int = 500
    log_every: int = 50

    def __post_init__(self):
        for name in ("gp_lambda", "critic_steps", "batch_size", "tau", "lr",
                     "max_iters", "z_dim"):
            if getattr(self, name) <= 0:
                raise ConfigError(f"WganConfig.{name} must be positive")


@dataclass
class Generator:
    """Trunk MLP ending in one affine logits head per field.

    The head is stored as a single identity layer whose weight columns
    partition by field block, which is the same map (and parameter
    count) as separate per-field affine heads.
    """

    net: Mlp
    slices: tuple     # (start, stop) per field block in the request vector
    z_dim: int

    @property
    def width(self) -> int:
        return self.net.out_dim

    def copy(self) -> "Generator":
        return Generator(self.net.copy(), self.slices, self.z_dim)


def field_slices(fdict: FeatureDict) -> tuple:
    return tuple(
        (fdict.offset(f), fdict.offset(f) + fdict.field_width(f)) for f in fdict.fields
    )


def build_generator(fdict: FeatureDict, cfg: WganConfig, rng) -> Generator:
    dims = [cfg.z_dim, *cfg.gen_hidden, fdict.width]
    acts = [cfg.activation] * len(cfg.gen_hidden) + ["identity"]
    return Generator(make_mlp(dims, acts, rng), field_slices(fdict), cfg.z_dim)


def build_critic(width: int, cfg: WganConfig, rng) -> Mlp:
    dims = [width, *cfg.critic_hidden, 1]
    acts = [cfg.activation] * len(cfg.critic_hidden) + ["identity"]
    return make_mlp(dims, acts, rng)


def generator_forward(gen: Generator, z: np.ndarray, tau: float, noise: np.ndarray,
                      record: bool = False):
    """Soft samples: per-field Gumbel-softmax over the head logits."""
    z = np.atleast_2d(z)
    if z.shape[1] != gen.z_dim:
        raise ConfigError(f"noise dim {z.shape[1]} != generator z dim {gen.z_dim}")
    out = mlp_forward(gen.net, z, record=record)
    logits, trace = out if record else (out, None)
    x = np.empty_like(logits)
    for lo, hi in gen.slices:
        x[:, lo:hi] = gumbel_softmax(logits[:, lo:hi], tau, noise[:, lo:hi])
    return (x, trace) if record else x


def _soft_seed_to_gen_grads(gen, trace, x_soft, seed, tau):
    """Pull a seed on the soft sample back to generator parameter grads."""
    dlogits = np.empty_like(seed)
    for lo, hi in gen.slices:
        dlogits[:, lo:hi] = gumbel_softmax_vjp(x_soft[:, lo:hi], seed[:, lo:hi], tau)
    grads, _ = mlp_backward(trace, dlogits)
    return grads


def generator_sample(gen: Generator, z, tau, noise, hard: bool = True):
    """One-hot (hard) or simplex (soft) request vectors."""
    x = generator_forward(gen, z, tau, noise)
    if not hard:
        return x
    out = np.zeros_like(x)
    rows = np.arange(x.shape[0])
    for lo, hi in gen.slices:
        out[rows, lo + np.argmax(x[:, lo:hi], axis=1)] = 1.0
    return out


class GeneratorSampler:
    """Draws discrete BidRequests from a trained generator."""

    def __init__(self, gen: Generator, tau: float, rng):
        self.gen = gen
        self.tau = tau
        self.rng = rng
        self._offsets = np.array([lo for lo, _ in gen.slices])

    def sample_indices(self, n: int) -> np.ndarray:
        z = self.rng.standard_normal((n, self.gen.z_dim))
        noise = gumbel(self.rng, (n, self.gen.width))
        x = generator_forward(self.gen, z, self.tau, noise)
        idx = np.empty((n, len(self.gen.slices)), dtype=np.int64)
        for j, (lo, hi) in enumerate(self.gen.slices):
            idx[:, j] = lo + np.argmax(x[:, lo:hi], axis=1)
        return idx

    def sample(self) -> BidRequest:
        return BidRequest(self.sample_indices(1)[0], self.gen.width)


class EmpiricalSampler:
    """Uniform-with-replacement draws from a historical request corpus."""

    def __init__(self, requests, rng):
        if len(requests) == 0:
            raise ConfigError("empirical sampler needs a non-empty corpus")
        self.requests = list(requests)
        self.rng = rng

    def sample(self) -> BidRequest:
        return self.requests[int(self.rng.integers(len(self.requests)))]


class UniformSampler:
    """Uniform category per field; the MMD benchmark's null model."""

    def __init__(self, fdict: FeatureDict, rng):
        self.slices = field_slices(fdict)
        self.width = fdict.width
        self.rng = rng

    def sample(self) -> BidRequest:
        idx = np.array(
            [int(self.rng.integers(lo, hi)) for lo, hi in self.slices], dtype=np.int64
        )
        return BidRequest(idx, self.width)


def critic_loss(critic: Mlp, real: np.ndarray, fake: np.ndarray,
                gp_lambda: float, rng):
    """Critic objective mean c(fake) - mean c(real) + lambda * penalty.

    Descending it maximizes the real-fake score gap. The penalty is
    evaluated at per-pair uniform interpolates of (real, fake).
    Returns (loss, grads, parts) where parts carries the raw pieces.
    """
    real = np.atleast_2d(real)
    fake = np.atleast_2d(fake)
    if real.shape[1] != fake.shape[1]:
        raise ConfigError("real and fake batches must share the feature width")
    n_r, n_f = real.shape[0], fake.shape[0]

    s_real, tr_real = mlp_forward(critic, real, record=True)
    s_fake, tr_fake = mlp_forward(critic, fake, record=True)
    mean_real = float(s_real.mean())
    mean_fake = float(s_fake.mean())

    grads = zero_grads_like(critic.arrays())
    g_fake, _ = mlp_backward(tr_fake, np.full((n_f, 1), 1.0 / n_f))
    g_real, _ = mlp_backward(tr_real, np.full((n_r, 1), -1.0 / n_r))
    for acc, gf, gr in zip(grads, g_fake, g_real):
        acc += gf + gr

    penalty = 0.0
    if gp_lambda > 0.0:
        m = min(n_r, n_f)
        t = rng.random((m, 1))
        x_hat = t * real[:m] + (1.0 - t) * fake[:m]
        penalty, p_grads, _ = gradient_penalty(critic, x_hat)
        for acc, pg in zip(grads, p_grads):
            acc += gp_lambda * pg

    loss = mean_fake - mean_real + gp_lambda * penalty
    parts = {"mean_real": mean_real, "mean_fake": mean_fake, "penalty": penalty}
    return loss, grads, parts


def generator_loss(gen: Generator, critic: Mlp, z: np.ndarray, tau: float,
                   noise: np.ndarray):
    """Generator objective -mean c(soft samples), with grads through the
    Gumbel-softmax relaxation."""
    x, trace = generator_forward(gen, z, tau, noise, record=True)
    scores, c_trace = mlp_forward(critic, x, record=True)
    n = x.shape[0]
    _, dx = mlp_backward(c_trace, np.full((n, 1), -1.0 / n))
    grads = _soft_seed_to_gen_grads(gen, trace, x, dx, tau)
    return float(-scores.mean()), grads


@dataclass
class TrainDiagnostics:
    gaps: list = field(default_factory=list)          # validation critic gap
    critic_losses: list = field(default_factory=list)
    gen_losses: list = field(default_factory=list)
    iterations: int = 0
    stopped_early: bool = False


def train_market_state_model(train_requests, val_requests, fdict: FeatureDict,
                             cfg: WganConfig, rng):
    """Alternating WGAN loop: critic_steps critic updates, one generator
    update per iteration; stops when the validation critic gap
    stabilizes or at max_iters.

    Returns (generator, critic, diagnostics).
    """
    from .data import PackedRequests

    train_pk = PackedRequests(list(train_requests))
    val_pk = PackedRequests(list(val_requests))
    n_train = len(train_pk)

    gen = build_generator(fdict, cfg, np.random.Generator(
        np.random.Philox(key=rng.integers(2**63))))
    critic = build_critic(fdict.width, cfg, np.random.Generator(
        np.random.Philox(key=rng.integers(2**63))))
    g_state = AdamState.for_arrays(gen.net.arrays())
    c_state = AdamState.for_arrays(critic.arrays())

    # fixed validation design keeps the stopping statistic low-variance
    v_rows = np.arange(min(len(val_pk), cfg.batch_size))
    val_real = val_pk.rows(v_rows).dense()
    val_z = rng.standard_normal((v_rows.size, cfg.z_dim))
    val_noise = gumbel(rng, (v_rows.size, fdict.width))

    diag = TrainDiagnostics()
    w = cfg.stop_window
    for it in range(cfg.max_iters):
        for _ in range(cfg.critic_steps):
            rows = rng.choice(n_train, size=min(cfg.batch_size, n_train),
                              replace=n_train < cfg.batch_size)
            real = train_pk.rows(rows).dense()
            z = rng.standard_normal((rows.size, cfg.z_dim))
            noise = gumbel(rng, (rows.size, fdict.width))
            fake = generator_forward(gen, z, cfg.tau, noise)
            c_loss, c_grads, _ = critic_loss(critic, real, fake, cfg.gp_lambda, rng)
            if not np.isfinite(c_loss):
                raise NumericalError(f"critic loss non-finite at iteration {it}")
            adam_step(critic.arrays(), c_grads, c_state, lr=cfg.lr,
                      weight_decay=cfg.l2)

        z = rng.standard_normal((min(cfg.batch_size, n_train), cfg.z_dim))
        noise = gumbel(rng, (z.shape[0], fdict.width))
        g_loss, g_grads = generator_loss(gen, critic, z, cfg.tau, noise)
        if not np.isfinite(g_loss):
            raise NumericalError(f"generator loss non-finite at iteration {it}")
        adam_step(gen.net.arrays(), g_grads, g_state, lr=cfg.lr, weight_decay=cfg.l2)

        val_fake = generator_forward(gen, val_z, cfg.tau, val_noise)
        gap = float(mlp_forward(critic, val_real).mean()
                    - mlp_forward(critic, val_fake).mean())
        diag.gaps.append(gap)
        diag.critic_losses.append(c_loss)
        diag.gen_losses.append(g_loss)
        diag.iterations = it + 1

        # stabilization check on non-overlapping aggregates of stop_window
        # iterations; checking every iteration would stop on any momentary
        # crossing of the two window means long before convergence
        span = 4 * w
        ready = it + 1 >= max(2 * span, cfg.stop_min_iters)
        if ready and (it + 1) % w == 0:
            m1 = float(np.mean(diag.gaps[-span:]))
            m0 = float(np.mean(diag.gaps[-2 * span : -span]))
            if abs(m1 - m0) < cfg.stop_tol * max(1.0, abs(m0)):
                diag.stopped_early = True
                break
    return gen, critic, diag

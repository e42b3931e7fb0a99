"""Simulated second-price bidding environment.

Composes a market-state sampler (generator or empirical), the price
model, and the click model. The advertiser state is (budget left, time
left); requests are i.i.d. across steps, so the only coupling between
steps is the budget. One step consumes a fixed number of random draws
regardless of the action taken, which makes replaying an identical seed
a shared price tape across policies.
"""

from dataclasses import dataclass, field

import numpy as np

from .data import BidRequest, PackedRequests
from .errors import ConfigError
from .market_action import ClickModel, PriceModel

UTILITIES = ("impression", "click")


@dataclass
class AdvertiserState:
    budget: float
    time_left: int


@dataclass
class Observation:
    request: BidRequest
    budget_norm: float   # budget / (cpm_ref * t0_ref / 1000)
    time_norm: float     # time left / t0_ref
    budget: float
    time_left: int


@dataclass
class StepOutcome:
    observation: Observation   # next observation (same request at terminal)
    reward: int
    cost: float
    done: bool
    won: bool
    price: float


@dataclass
class EnvMeta:
    split: str = ""
    data_hash: str = ""
    cpm_ref: float = 1.0     # train-split spend per 1000 requests (norm anchor)
    t0_ref: int = 1000
    w_max: float = 0.0
    sampler_kind: str = ""


class SimEnv:
    """One advertiser bidding against the learned market."""

    def __init__(self, sampler, price_model: PriceModel, click_model,
                 utility: str, meta: EnvMeta, rng):
        if utility not in UTILITIES:
            raise ConfigError(f"utility must be one of {UTILITIES}, got {utility!r}")
        if utility == "click" and click_model is None:
            raise ConfigError("click utility needs a click model")
        self.sampler = sampler
        self.price_model = price_model
        self.click_model = click_model
        self.utility = utility
        self.meta = meta
        self.rng = rng
        self.state = None
        self._b0 = 0.0
        self.spend = 0.0
        self.total_reward = 0
        self._request = None

    def _norm_obs(self) -> Observation:
        scale = self.meta.cpm_ref * self.meta.t0_ref / 1000.0
        return Observation(
            self._request,
            self.state.budget / max(scale, 1e-12),
            self.state.time_left / self.meta.t0_ref,
            self.state.budget,
            self.state.time_left,
        )

    @property
    def done(self) -> bool:
        return self.state is None or self.state.time_left == 0

    def reset(self, b0: float, t0: int) -> Observation:
        if b0 < 0 or t0 < 1:
            raise ConfigError(f"need b0 >= 0 and t0 >= 1, got ({b0}, {t0})")
        self.state = AdvertiserState(float(b0), int(t0))
        self._b0 = float(b0)
        self.spend = 0.0
        self.total_reward = 0
        self._request = self.sampler.sample()
        return self._norm_obs()

    def step(self, bid: float) -> StepOutcome:
        if self.done:
            raise RuntimeError("step() called on a finished episode")
        if not np.isfinite(bid):
            raise ValueError(f"non-finite bid {bid!r}")
        x = self._request
        effective = min(max(float(bid), 0.0), self.state.budget)

        # fixed draw pattern per step: price, click, then the next request
        packed = PackedRequests([x])
        mu = float(self.price_model.mu(packed)[0])
        sig = float(self.price_model.sigma(packed)[0])
        w = max(float(self.rng.normal(mu, sig)), 0.0)
        click_u = float(self.rng.random())

        won = effective > w
        cost = w if won else 0.0
        if self.utility == "impression":
            reward = int(won)
        else:
            p = float(self.click_model.prob(packed)[0]) if won else 0.0
            reward = int(won and click_u < p)

        self.state.budget -= cost
        self.state.time_left -= 1
        self.spend += cost
        self.total_reward += reward
        if self.state.time_left > 0:
            self._request = self.sampler.sample()
        return StepOutcome(self._norm_obs(), reward, cost, self.done, won, w)

    def budget_conservation_error(self) -> float:
        return abs(self.spend + self.state.budget - self._b0)


@dataclass
class EnvParts:
    """Models plus provenance for wiring one environment."""

    sampler_factory: object    # callable(rng) -> sampler
    price_model: PriceModel
    click_model: object        # ClickModel or None
    meta: EnvMeta
    splits: dict = field(default_factory=dict)  # component -> split tag


def check_split_wiring(splits: dict, expected: str, override: bool = False) -> None:
    """All wired components must come from the same data split."""
    bad = {k: v for k, v in splits.items() if v != expected}
    if bad and not override:
        raise ConfigError(
            f"environment expects split {expected!r} but got {bad}; "
            "pass override to wire mixed splits deliberately"
        )


def make_env_factory(parts: EnvParts, utility: str, seed: int,
                     expected_split: str, override: bool = False):
    """Factory of independent SimEnv instances (one rng stream each)."""
    from .rng import stream

    check_split_wiring(parts.splits, expected_split, override)

    def make(label) -> SimEnv:
        return SimEnv(
            parts.sampler_factory(stream(seed, expected_split, label, "x")),
            parts.price_model,
            parts.click_model,
            utility,
            parts.meta,
            stream(seed, expected_split, label, "market"),
        )

    return make


def make_train_env(parts: EnvParts, utility: str, seed: int, override: bool = False):
    return make_env_factory(parts, utility, seed, "train", override)


def make_test_env(parts: EnvParts, utility: str, seed: int, override: bool = False):
    return make_env_factory(parts, utility, seed, "test", override)

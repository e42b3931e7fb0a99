"""Market action models: censored-Gaussian price regression and a
logistic click model.

The price of an auction is observed only on wins; on losses the logged
bid is a lower bound. The price model is N(mu(x), sigma(x)^2) with
mu and log-sigma linear in the one-hot request, fit by maximizing the
censored likelihood: exact Gaussian terms on wins, survival terms on
losses. Clicks are observed only on impressions and fit by logistic
regression.
"""

import warnings
from dataclasses import dataclass

import numpy as np
from scipy.stats import norm

from .data import PackedRequests, SampleSet
from .errors import DataError, NumericalError
from .optim import AdamState, adam_step


@dataclass
class PriceModel:
    """Two linear heads over the request vector: mu and log-sigma."""

    mu_w: np.ndarray
    mu_b: float
    logsig_w: np.ndarray
    logsig_b: float

    @classmethod
    def init(cls, width: int, mu_bias: float = 200.0, logsig_bias: float = 10.0):
        # reference initialization; the log-sigma bias is on the scale the
        # original setup reports and is deliberately config-overridable
        return cls(np.zeros(width), mu_bias, np.zeros(width), logsig_bias)

    def mu(self, packed: PackedRequests) -> np.ndarray:
        return packed.dot(self.mu_w) + self.mu_b

    def sigma(self, packed: PackedRequests) -> np.ndarray:
        return np.exp(packed.dot(self.logsig_w) + self.logsig_b)

    def arrays(self) -> list:
        return [self.mu_w, self.logsig_w]

    def copy(self) -> "PriceModel":
        return PriceModel(self.mu_w.copy(), self.mu_b, self.logsig_w.copy(), self.logsig_b)


def censored_nll(model: PriceModel, packed: PackedRequests, bids, prices, wins,
                 l2: float = 0.0, want_grads: bool = True):
    """Mean per-sample negative log-likelihood and its gradients.

    Wins contribute exact Gaussian terms; losses contribute
    -log P(w >= bid | x) through the stable complementary normal CDF.
    """
    wins = np.asarray(wins, dtype=bool)
    n = len(packed)
    mu = model.mu(packed)
    logsig = packed.dot(model.logsig_w) + model.logsig_b
    sig = np.exp(logsig)

    r_mu = np.zeros(n)      # d nll / d mu, per row
    r_ls = np.zeros(n)      # d nll / d logsigma, per row
    nll = np.zeros(n)

    if wins.any():
        z = (np.asarray(prices)[wins] - mu[wins]) / sig[wins]
        nll[wins] = logsig[wins] + 0.5 * z * z + 0.5 * np.log(2 * np.pi)
        r_mu[wins] = -z / sig[wins]
        r_ls[wins] = 1.0 - z * z
    losses = ~wins
    if losses.any():
        t = (np.asarray(bids)[losses] - mu[losses]) / sig[losses]
        nll[losses] = -norm.logsf(t)
        hazard = np.exp(norm.logpdf(t) - norm.logsf(t))
        r_mu[losses] = -hazard / sig[losses]
        r_ls[losses] = -hazard * t
    loss = float(nll.mean()) + 0.5 * l2 * float(
        np.dot(model.mu_w, model.mu_w) + np.dot(model.logsig_w, model.logsig_w)
    )
    if not want_grads:
        return loss, None
    grads = {
        "mu_w": packed.scatter(r_mu / n) + l2 * model.mu_w,
        "mu_b": float(r_mu.mean()),
        "logsig_w": packed.scatter(r_ls / n) + l2 * model.logsig_w,
        "logsig_b": float(r_ls.mean()),
    }
    return loss, grads


@dataclass
class ClickModel:
    """Logistic regression Pr(click | x) on impressed requests."""

    w: np.ndarray
    b: float

    def logit(self, packed: PackedRequests) -> np.ndarray:
        return packed.dot(self.w) + self.b

    def prob(self, packed: PackedRequests) -> np.ndarray:
        return 1.0 / (1.0 + np.exp(-self.logit(packed)))

    def copy(self) -> "ClickModel":
        return ClickModel(self.w.copy(), self.b)


def click_nll(model: ClickModel, packed: PackedRequests, clicks,
              l2: float = 0.0, want_grads: bool = True):
    """Mean logistic NLL over impressed rows, with gradients."""
    y = np.asarray(clicks, dtype=np.float64)
    s = model.logit(packed)
    # log(1 + e^s) - y*s, computed stably
    nll = np.logaddexp(0.0, s) - y * s
    loss = float(nll.mean()) + 0.5 * l2 * float(np.dot(model.w, model.w))
    if not want_grads:
        return loss, None
    p = 1.0 / (1.0 + np.exp(-s))
    r = (p - y) / len(packed)
    return loss, {"w": packed.scatter(r) + l2 * model.w, "b": float(r.sum())}


@dataclass
class FitConfig:
    lr_grid: tuple = (0.3, 0.03)
    l2_grid: tuple = (1e-2, 1e-4, 1e-6, 1e-8)
    batch_size: int = 1024
    max_epochs: int = 100
    patience: int = 10
    mu_bias_init: float = 200.0
    logsig_bias_init: float = 10.0
    history: bool = False


def _minibatch_fit(n, rng, step_fn, val_fn, snapshot_fn, cfg: FitConfig):
    """Generic epoch loop with early stopping on a validation metric.

    step_fn(rows) performs one optimizer update; val_fn() scores the
    current parameters; snapshot_fn() captures them. Returns
    (best val, best snapshot, epochs run, val history).
    """
    best = np.inf
    best_snap = snapshot_fn()
    since_best = 0
    history = []
    for epoch in range(cfg.max_epochs):
        order = rng.permutation(n)
        for start in range(0, n, cfg.batch_size):
            step_fn(order[start : start + cfg.batch_size])
        v = val_fn()
        history.append(v)
        if not np.isfinite(v):
            raise NumericalError(f"validation loss became non-finite at epoch {epoch}")
        if v < best - 1e-9:
            best, since_best = v, 0
            best_snap = snapshot_fn()
        else:
            since_best += 1
            if since_best >= cfg.patience:
                break
    return best, best_snap, epoch + 1, history


def train_price_model(train: SampleSet, val: SampleSet, rng,
                      cfg: FitConfig = FitConfig()):
    """Grid over (lr, l2) by validation NLL; early stopping per combo.

    Weights start at zero, biases at the configured reference values.
    """
    if not train.wins.any():
        raise DataError("all training auctions censored: price mean unidentifiable")
    packed = PackedRequests(train.requests)
    vpacked = PackedRequests(val.requests)
    best = None
    for lr in cfg.lr_grid:
        for l2 in cfg.l2_grid:
            model = PriceModel.init(train.width, cfg.mu_bias_init, cfg.logsig_bias_init)
            state = AdamState.for_arrays(model.arrays() + [np.zeros(2)])
            bias_vec = np.array([model.mu_b, model.logsig_b])
            run_rng = np.random.Generator(np.random.Philox(key=rng.integers(2**63)))

            def step(rows):
                sub = packed.rows(rows)
                _, grads = censored_nll(
                    model, sub, train.bids[rows], train.prices[rows],
                    train.wins[rows], l2=l2,
                )
                gb = np.array([grads["mu_b"], grads["logsig_b"]])
                adam_step(model.arrays() + [bias_vec],
                          [grads["mu_w"], grads["logsig_w"], gb], state, lr=lr)
                model.mu_b, model.logsig_b = float(bias_vec[0]), float(bias_vec[1])

            def score():
                v, _ = censored_nll(model, vpacked, val.bids, val.prices,
                                    val.wins, want_grads=False)
                return v

            v, snap, epochs, hist = _minibatch_fit(
                len(train), run_rng, step, score, model.copy, cfg
            )
            if best is None or v < best[0]:
                best = (v, snap, {"lr": lr, "l2": l2, "epochs": epochs,
                                  "val_nll": v, "history": hist if cfg.history else None})
    return best[1], best[2]


def train_click_model(train: SampleSet, val: SampleSet, rng,
                      cfg: FitConfig = FitConfig()):
    """Logistic fit on impressed rows only; same grid/early-stop protocol.

    Single-class data degrades to a prior-only model with a warning.
    """
    tr_rows = np.flatnonzero(train.wins)
    va_rows = np.flatnonzero(val.wins)
    if tr_rows.size == 0:
        raise DataError("no impressions in the training split; click model unfit")
    y = train.clicks[tr_rows].astype(np.float64)
    if y.min() == y.max():
        warnings.warn("single-class click data; returning prior-only model")
        k, n = y.sum(), y.size
        b = float(np.log((k + 0.5) / (n - k + 0.5)))
        return ClickModel(np.zeros(train.width), b), {"prior_only": True}

    packed = PackedRequests([train.requests[i] for i in tr_rows])
    if va_rows.size and np.ptp(val.clicks[va_rows].astype(float)) > 0:
        vpacked = PackedRequests([val.requests[i] for i in va_rows])
        vy = val.clicks[va_rows]
    else:  # fall back to scoring on train when validation is degenerate
        vpacked, vy = packed, train.clicks[tr_rows]
    best = None
    for lr in cfg.lr_grid:
        for l2 in cfg.l2_grid:
            init_rng = np.random.Generator(np.random.Philox(key=rng.integers(2**63)))
            model = ClickModel(init_rng.standard_normal(train.width), 0.0)
            bias_vec = np.zeros(1)
            bias_vec[0] = model.b
            state = AdamState.for_arrays([model.w, bias_vec])

            def step(rows):
                _, grads = click_nll(model, packed.rows(rows),
                                     train.clicks[tr_rows[rows]], l2=l2)
                adam_step([model.w, bias_vec], [grads["w"], np.array([grads["b"]])],
                          state, lr=lr)
                model.b = float(bias_vec[0])

            def score():
                v, _ = click_nll(model, vpacked, vy, want_grads=False)
                return v

            v, snap, epochs, hist = _minibatch_fit(
                tr_rows.size, init_rng, step, score, model.copy, cfg
            )
            if best is None or v < best[0]:
                best = (v, snap, {"lr": lr, "l2": l2, "epochs": epochs, "val_nll": v,
                                  "history": hist if cfg.history else None})
    return best[1], best[2]


def sample_market_price(model: PriceModel, request, rng) -> float:
    """One price draw N(mu(x), sigma(x)^2), clipped at zero."""
    packed = PackedRequests([request])
    mu = float(model.mu(packed)[0])
    sig = float(model.sigma(packed)[0])
    return max(float(rng.normal(mu, sig)), 0.0)


def sample_click(model: ClickModel, request, rng) -> int:
    """Bernoulli click draw for a won auction."""
    p = float(model.prob(PackedRequests([request]))[0])
    return int(rng.random() < p)


def average_ctr(model: ClickModel, requests) -> float:
    """Mean predicted click rate over a request corpus (LinBid's normalizer)."""
    return float(model.prob(PackedRequests(list(requests))).mean())

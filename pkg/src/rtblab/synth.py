"""Synthetic ground-truth markets.

Draws bid requests from a categorical mixture (components induce
cross-field correlation), market prices from a Gaussian whose mean and
log-std are linear in the one-hot vector, and clicks from a logistic
model. A logging bid policy realizes the censoring: the market price is
observed iff the logged bid beat it. The generating parameters are
returned so recovery tests have an exact oracle.
"""

from dataclasses import dataclass

import numpy as np

from .data import (
    BidRequest,
    DEFAULT_SCHEMA,
    FeatureDict,
    MS_PER_DAY,
    SampleSet,
    save_schema,
)
from .errors import ConfigError


@dataclass
class SynthSpec:
    field_dims: tuple                 # categories per synthetic field
    mixture_weights: tuple            # component weights, sum 1
    mixture_probs: tuple              # [component][field] -> category probs
    price_mu: tuple                   # ([field] -> per-category coef, intercept)
    price_logsig: tuple               # same layout
    click: tuple = ((), -4.0)         # same layout; default: ~2% flat ctr
    logging_bid: tuple = (0.0, 0.0)   # (lo, hi) uniform; lo == hi is constant
    days: int = 5

    def __post_init__(self):
        if abs(sum(self.mixture_weights) - 1.0) > 1e-9:
            raise ConfigError("mixture weights must sum to 1")
        for comp in self.mixture_probs:
            if len(comp) != len(self.field_dims):
                raise ConfigError("every mixture component needs probs per field")


def _flatten(coefs_per_field, fdict: FeatureDict) -> np.ndarray:
    """Per-field per-category coefficients -> a width-D vector (OTHER slots 0)."""
    v = np.zeros(fdict.width)
    if not coefs_per_field:
        return v
    for f_i, field in enumerate(fdict.fields):
        coefs = np.asarray(coefs_per_field[f_i], dtype=np.float64)
        off = fdict.offset(field)
        v[off : off + coefs.size] = coefs
    return v


@dataclass
class SynthTruth:
    """Flattened generating parameters, aligned with the feature dictionary."""

    price_mu_w: np.ndarray
    price_mu_b: float
    price_logsig_w: np.ndarray
    price_logsig_b: float
    click_w: np.ndarray
    click_b: float

    def mu(self, x: BidRequest) -> float:
        return float(self.price_mu_w[x.indices].sum() + self.price_mu_b)

    def sigma(self, x: BidRequest) -> float:
        return float(np.exp(self.price_logsig_w[x.indices].sum() + self.price_logsig_b))


@dataclass
class SynthMarket:
    fdict: FeatureDict
    samples: SampleSet
    truth: SynthTruth


def synth_feature_dict(field_dims) -> FeatureDict:
    """Fields f0..fk with categories c0..c{d-1} (plus the usual OTHER slot)."""
    fields = tuple(f"f{i}" for i in range(len(field_dims)))
    maps = {f: {f"c{j}": j for j in range(d)} for f, d in zip(fields, field_dims)}
    return FeatureDict(fields, maps, min_count=1)


def sample_requests(spec: SynthSpec, fdict: FeatureDict, n: int, rng) -> list:
    weights = np.asarray(spec.mixture_weights)
    comps = rng.choice(len(weights), size=n, p=weights)
    field_cats = np.empty((n, len(spec.field_dims)), dtype=np.int64)
    for k in range(len(weights)):
        rows = np.flatnonzero(comps == k)
        if rows.size == 0:
            continue
        for f_i, probs in enumerate(spec.mixture_probs[k]):
            probs = np.asarray(probs, dtype=np.float64)
            field_cats[rows, f_i] = rng.choice(probs.size, size=rows.size, p=probs)
    offsets = np.array([fdict.offset(f) for f in fdict.fields])
    return [BidRequest(offsets + field_cats[i], fdict.width) for i in range(n)]


def generate_synthetic_market(spec: SynthSpec, n: int, rng) -> SynthMarket:
    fdict = synth_feature_dict(spec.field_dims)
    truth = SynthTruth(
        price_mu_w=_flatten(spec.price_mu[0], fdict),
        price_mu_b=float(spec.price_mu[1]),
        price_logsig_w=_flatten(spec.price_logsig[0], fdict),
        price_logsig_b=float(spec.price_logsig[1]),
        click_w=_flatten(spec.click[0], fdict),
        click_b=float(spec.click[1]),
    )
    requests = sample_requests(spec, fdict, n, rng)

    lo, hi = spec.logging_bid
    bids = np.full(n, float(lo)) if lo == hi else rng.uniform(lo, hi, size=n)
    mu = np.array([truth.mu(x) for x in requests])
    sig = np.array([truth.sigma(x) for x in requests])
    w = np.maximum(rng.normal(mu, sig), 0.0)  # market prices are physical
    wins = bids > w
    prices = np.where(wins, w, np.nan)

    ctr_logit = np.array(
        [truth.click_w[x.indices].sum() + truth.click_b for x in requests]
    )
    clicked = rng.random(n) < 1.0 / (1.0 + np.exp(-ctr_logit))
    clicks = wins & clicked  # click observable only on impression

    # timestamps spread uniformly over synthetic days, in order
    per_day = (n + spec.days - 1) // spec.days
    ts = np.array(
        [d * MS_PER_DAY + i * (MS_PER_DAY // max(per_day, 1))
         for d in range(spec.days) for i in range(per_day)][:n],
        dtype=np.int64,
    )

    samples = SampleSet(requests, bids, prices, wins, clicks, ts, fdict.width)
    return SynthMarket(fdict, samples, truth)


# synthetic fields are written into these raw-log columns so the standard
# ingest pipeline (parse -> derive -> dictionary -> featurize) runs end to end
_LOG_COLUMNS = ("region", "city", "ad_exchange", "domain", "slot_id")


def write_synthetic_log(market: SynthMarket, log_path, schema_path) -> None:
    fdict = market.fdict
    if len(fdict.fields) > len(_LOG_COLUMNS):
        raise ConfigError(
            f"can export at most {len(_LOG_COLUMNS)} synthetic fields to a raw log"
        )
    s = market.samples
    col_for_field = dict(zip(fdict.fields, _LOG_COLUMNS))
    with open(log_path, "w", encoding="utf-8") as fh:
        for i in range(len(s)):
            cats = {c: "na" for c in _LOG_COLUMNS}
            for f in fdict.fields:
                local = None
                for j in s.requests[i].indices:
                    if fdict.offset(f) <= j < fdict.offset(f) + fdict.field_width(f):
                        local = j - fdict.offset(f)
                cats[col_for_field[f]] = f"c{local}"
            price = s.prices[i]
            pay = "" if np.isnan(price) else repr(max(float(price), 0.0))
            row = {
                "timestamp": str(int(s.timestamps[i])),
                "user_agent": "synthetic",
                "region": cats["region"],
                "city": cats["city"],
                "ad_exchange": cats["ad_exchange"],
                "domain": cats["domain"],
                "slot_id": cats["slot_id"],
                "slot_visibility": "1",
                "slot_format": "fixed",
                "slot_width": "300",
                "slot_height": "250",
                "user_tags": "",
                "bid_price": repr(float(s.bids[i])),
                "pay_price": pay,
                "win": "1" if s.wins[i] else "0",
                "click": "1" if s.clicks[i] else "0",
            }
            fh.write("\t".join(row[name] for name, _ in DEFAULT_SCHEMA) + "\n")
    save_schema(schema_path)


def load_synth_spec(path) -> tuple:
    """Parse a flat key=value synth spec file; returns (spec, n, seed)."""
    kv = {}
    with open(path, "r", encoding="utf-8") as fh:
        for line in fh:
            line = line.strip()
            if not line or line.startswith("#"):
                continue
            k, _, v = line.partition("=")
            kv[k.strip()] = v.strip()

    def floats(key, default=None):
        if key not in kv:
            if default is None:
                raise ConfigError(f"synth spec missing {key}")
            return default
        return tuple(float(x) for x in kv[key].split(","))

    field_dims = tuple(int(x) for x in kv["fields"].split(","))
    weights = floats("mixture_weights", (1.0,))
    probs = []
    for k in range(len(weights)):
        comp = []
        for f in range(len(field_dims)):
            p = np.asarray(floats(f"comp{k}_f{f}"))
            comp.append(p / p.sum())
        probs.append(tuple(comp))

    def coef_block(prefix, default_intercept):
        coefs = tuple(
            floats(f"{prefix}_f{f}", (0.0,) * field_dims[f])
            for f in range(len(field_dims))
        )
        return (coefs, float(kv.get(f"{prefix}_intercept", default_intercept)))

    bid = floats("logging_bid")
    spec = SynthSpec(
        field_dims=field_dims,
        mixture_weights=weights,
        mixture_probs=tuple(probs),
        price_mu=coef_block("price_mu", 0.0),
        price_logsig=coef_block("price_logsig", 0.0),
        click=coef_block("click", -4.0),
        logging_bid=(bid[0], bid[-1]),
        days=int(kv.get("days", 5)),
    )
    return spec, int(kv.get("n", 10000)), int(kv.get("seed", 0))

from dataclasses import dataclass, field

import numpy as np

from bidwright.core import logger
from bidwright.core.config import DEFAULT_STEPS_PER_DAY, DEFAULT_TEST_DAYS, coerce_numeric
from bidwright.core.exceptions import InvalidParams
from bidwright.dataset.events import ImpressionEvent
from bidwright.dataset.partition import split_and_partition

# Relative traffic per hour, quiet overnight and busiest in the evening.
DIURNAL_HOUR_WEIGHTS = (
    0.020, 0.012, 0.008, 0.006, 0.006, 0.010, 0.020, 0.035,
    0.045, 0.050, 0.052, 0.055, 0.056, 0.054, 0.052, 0.052,
    0.054, 0.056, 0.058, 0.064, 0.070, 0.068, 0.050, 0.032,
)

DEFAULT_VOCABULARY = {
    'region': 35,
    'city': 120,
    'adexchange': 4,
    'domain': 400,
    'slotid': 300,
    'slotwidth': 6,
    'slotheight': 5,
    'slotvisibility': 3,
    'slotformat': 3,
    'creative': 12,
    'useragent': 20,
}


@dataclass(frozen=True)
class SynthParams:
    """
    Knobs of the synthetic campaign generator.

    Clicks are Bernoulli draws from ``sigmoid(base_logit + sum of hidden token weights)``, hidden
    weights being ``Normal(0, weight_sigma)`` per token. Market prices are log-normal around
    ``price_median`` with log-scale ``price_sigma``, mixed with the standardized latent logit so that
    ``price_correlation`` controls how much pricier the clickable traffic is. Token popularity
    follows a Zipf-like law with exponent ``token_skew``.
    """
    campaign_id: str = 'synth'
    days: int = 10
    events_per_day: int = 10000
    test_days: int = DEFAULT_TEST_DAYS
    vocabulary: dict = field(default_factory=lambda: dict(DEFAULT_VOCABULARY))
    price_median: float = 70.0
    price_sigma: float = 0.6
    price_correlation: float = 0.5
    price_cap: int = 300
    base_logit: float = -5.2
    weight_sigma: float = 0.5
    token_skew: float = 0.8
    hour_weights: tuple = DIURNAL_HOUR_WEIGHTS

    def validate(self):
        if self.days < 1 or self.events_per_day < 1:
            raise InvalidParams(f"days and events_per_day must be positive, got {self.days}, {self.events_per_day}")
        if not 1 <= self.test_days < self.days:
            raise InvalidParams(f"test_days must be in [1, days), got {self.test_days} with {self.days} days")
        if any(size < 1 for size in self.vocabulary.values()):
            raise InvalidParams("every vocabulary size must be positive")
        if self.price_median <= 0 or self.price_sigma < 0 or self.price_cap < 1:
            raise InvalidParams("price_median and price_cap must be positive, price_sigma non-negative")
        if not -1.0 <= self.price_correlation <= 1.0:
            raise InvalidParams(f"price_correlation must be in [-1, 1], got {self.price_correlation}")
        if len(self.hour_weights) != 24 or min(self.hour_weights) < 0 or sum(self.hour_weights) <= 0:
            raise InvalidParams("hour_weights needs 24 non-negative entries with a positive sum")

    @classmethod
    def from_dict(cls, data):
        try:
            data = coerce_numeric(cls, data)
            if 'hour_weights' in data:
                data['hour_weights'] = tuple(float(w) for w in data['hour_weights'])
            if 'vocabulary' in data:
                data['vocabulary'] = {str(k): int(v) for k, v in data['vocabulary'].items()}
            return cls(**data)
        except (TypeError, ValueError, AttributeError, OverflowError) as e:
            raise InvalidParams(f"bad synthetic parameters: {e}") from None


def _token_probabilities(size, skew):
    ranks = np.arange(1, size + 1, dtype=float)
    weights = ranks ** -skew
    return weights / weights.sum()


def synthesize_events(seed, params):
    """
    Draw the raw events of a synthetic campaign.

    :param int seed: RNG seed; equal seeds give identical output.
    :param SynthParams params: Generator knobs.
    :return: Events in time order and the latent click probability of each.
    :rtype: tuple[list[ImpressionEvent], numpy.ndarray]
    """
    params.validate()
    rng = np.random.default_rng(seed)
    fields = list(params.vocabulary.items())
    hidden = {name: rng.normal(0.0, params.weight_sigma, size=size) for name, size in fields}
    hour_hidden = rng.normal(0.0, params.weight_sigma / 2, size=24)
    hour_probs = np.asarray(params.hour_weights, dtype=float)
    hour_probs = hour_probs / hour_probs.sum()

    n = params.days * params.events_per_day
    day_of = np.repeat(np.arange(params.days), params.events_per_day)
    hours = np.concatenate([np.sort(rng.choice(24, size=params.events_per_day, p=hour_probs))
                            for _ in range(params.days)])
    tokens = {name: rng.choice(size, size=n, p=_token_probabilities(size, params.token_skew))
              for name, size in fields}

    logit = params.base_logit + hour_hidden[hours]
    for name, _ in fields:
        logit = logit + hidden[name][tokens[name]]
    latent_ctr = 1.0 / (1.0 + np.exp(-logit))
    clicks = (rng.random(n) < latent_ctr).astype(int)

    spread = logit.std()
    standardized = (logit - logit.mean()) / spread if spread > 0 else np.zeros(n)
    rho = params.price_correlation
    mixed = rho * standardized + np.sqrt(1.0 - rho * rho) * rng.standard_normal(n)
    prices = np.clip(np.rint(params.price_median * np.exp(params.price_sigma * mixed)), 0, params.price_cap)
    prices = prices.astype(int)

    events = []
    for i in range(n):
        day = int(day_of[i])
        features = (('weekday', str(day % 7)), ('hour', str(int(hours[i])))) + tuple(
            (name, str(int(tokens[name][i]))) for name, _ in fields)
        events.append(ImpressionEvent(campaign_id=params.campaign_id, day_index=day, hour=int(hours[i]),
                                      market_price=int(prices[i]), click=int(clicks[i]), features=features))
    return events, latent_ctr


def synthesize_campaign(seed, params=None, steps_per_day=DEFAULT_STEPS_PER_DAY):
    """
    Build a complete synthetic :class:`CampaignDataset`, the desk-scale stand-in for licensed logs.

    :param int seed: RNG seed.
    :param SynthParams params: Generator knobs; defaults when None.
    :param int steps_per_day: T.
    :rtype: CampaignDataset
    """
    params = params or SynthParams()
    events, latent_ctr = synthesize_events(seed, params)
    logger.info(f"[Synth] Campaign '{params.campaign_id}' seed={seed}: {len(events)} events, "
                f"{sum(e.click for e in events)} clicks, latent CTR {latent_ctr.mean():.5f}")
    return split_and_partition(events, test_day_count=params.test_days, steps_per_day=steps_per_day,
                               campaign_id=params.campaign_id)

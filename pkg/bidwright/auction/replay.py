import math
import numbers
from dataclasses import asdict, dataclass, replace

import numpy as np

from bidwright.core import logger
from bidwright.core.exceptions import BidderError, DayReplayError, InvalidParams
from bidwright.ctr.training import score_events


@dataclass(frozen=True)
class AuctionOutcome:
    won: bool
    cost: int
    click_credited: int
    bid: int


def run_auction(bid, event, remaining_budget):
    """
    Settle one logged impression under second-price semantics.

    The bid is capped at the remaining budget first; a capped bid equal to the market price wins.

    :param int bid: Our bid, in currency units.
    :param ImpressionEvent event: The impression; its ``market_price`` is the price to beat.
    :param int remaining_budget: Budget left before this impression.
    :rtype: AuctionOutcome
    """
    if bid < 0 or remaining_budget < 0:
        raise InvalidParams(f"bid and remaining budget must be >= 0, got {bid}, {remaining_budget}")
    effective = min(bid, remaining_budget)
    if effective >= event.market_price:
        return AuctionOutcome(won=True, cost=event.market_price, click_credited=event.click, bid=bid)
    return AuctionOutcome(won=False, cost=0, click_credited=0, bid=bid)


def bid_prices(pctr, lambda_t):
    """
    ``floor(pCTR * lambda)`` as integer currency, elementwise.
    """
    return np.floor(np.asarray(pctr, dtype=float) * lambda_t).astype(np.int64)


def replay_budgeted(bids, prices, budget):
    """
    Vectorized equivalent of calling :func:`run_auction` on each impression in order.

    An impression is won iff ``bid >= price`` and ``remaining >= price`` when it comes up. Among the
    impressions still affordable at the current remaining budget, the first ones whose cumulative
    price fits are all won in one pass; the first one that no longer fits is lost and the scan
    resumes after it with the reduced budget. Impressions priced above the remaining budget stay
    lost because the budget never grows.

    :param numpy.ndarray bids: Integer bids in log order.
    :param numpy.ndarray prices: Market prices in log order.
    :param int budget: Budget at the start of the sequence.
    :return: Boolean win mask and the budget left afterwards.
    :rtype: tuple[numpy.ndarray, int]
    """
    bids = np.asarray(bids, dtype=np.int64)
    prices = np.asarray(prices, dtype=np.int64)
    won = np.zeros(len(prices), dtype=bool)
    candidates = np.flatnonzero(bids >= prices)
    candidate_prices = prices[candidates]
    remaining = int(budget)
    pos = 0
    while pos < len(candidates):
        affordable = np.flatnonzero(candidate_prices[pos:] <= remaining)
        if not affordable.size:
            break
        spent = np.cumsum(candidate_prices[pos:][affordable])
        taken = int(np.searchsorted(spent, remaining, side='right'))
        won[candidates[pos + affordable[:taken]]] = True
        if taken:
            remaining -= int(spent[taken - 1])
        if taken == len(affordable):
            break
        pos += int(affordable[taken]) + 1
    return won, remaining


@dataclass(frozen=True)
class ScoredStep:
    prices: np.ndarray
    clicks: np.ndarray
    pctr: np.ndarray

    @property
    def impressions(self):
        return len(self.prices)


@dataclass(frozen=True)
class ScoredDay:
    day_index: int
    day_cost: int
    steps: tuple

    @property
    def step_count(self):
        return len(self.steps)


def score_step(events, model):
    return ScoredStep(prices=np.array([e.market_price for e in events], dtype=np.int64),
                      clicks=np.array([e.click for e in events], dtype=np.int64),
                      pctr=score_events(model, events))


def score_day(day, model):
    """
    Attach model pCTR to every impression of a test day so replays never rescore.

    :param DayPartition day: The partitioned day.
    :param FMModel model: Campaign CTR model.
    :rtype: ScoredDay
    """
    pctr = score_events(model, day.events())
    steps, start = [], 0
    for events in day.steps:
        end = start + len(events)
        steps.append(ScoredStep(prices=np.array([e.market_price for e in events], dtype=np.int64),
                                clicks=np.array([e.click for e in events], dtype=np.int64),
                                pctr=pctr[start:end]))
        start = end
    return ScoredDay(day_index=day.day_index, day_cost=day.day_cost, steps=tuple(steps))


@dataclass(frozen=True)
class EnvState:
    """
    What a bidder is allowed to know before step ``step_index``: running aggregates of the day so far.

    ``cpc`` is None until the first click is bought; ``cpm`` until the first win. ``value_seen`` and
    ``value_won`` sum the pCTR of the impressions bid on and of those won, i.e. the clicks the CTR
    model expected from them.
    """
    day_index: int
    step_index: int
    step_count: int
    total_budget: int
    remaining_budget: int
    bids_made: int = 0
    wins: int = 0
    total_cost: int = 0
    clicks: int = 0
    won_price_sum: int = 0
    lambda_base: float = 0.0
    last_adjustment: float = 0.0
    value_seen: float = 0.0
    value_won: float = 0.0

    @property
    def win_rate(self):
        return self.wins / self.bids_made if self.bids_made else 0.0

    @property
    def avg_market_price_seen(self):
        return self.won_price_sum / self.wins if self.wins else 0.0

    @property
    def mean_value_seen(self):
        return self.value_seen / self.bids_made if self.bids_made else 0.0

    @property
    def mean_value_won(self):
        return self.value_won / self.wins if self.wins else 0.0

    @property
    def value_per_cost(self):
        return self.value_won / self.total_cost if self.total_cost else None

    @property
    def cpm(self):
        return 1000.0 * self.total_cost / self.wins if self.wins else None

    @property
    def cpc(self):
        return self.total_cost / self.clicks if self.clicks else None

    def to_dict(self):
        data = asdict(self)
        del data['won_price_sum']
        data.update(win_rate=self.win_rate, avg_market_price_seen=self.avg_market_price_seen,
                    cpm=self.cpm, cpc=self.cpc,
                    mean_value_seen=self.mean_value_seen, mean_value_won=self.mean_value_won,
                    value_per_cost=self.value_per_cost)
        return data

    @classmethod
    def start_of_day(cls, day_index, step_count, budget, lambda_base):
        return cls(day_index=day_index, step_index=0, step_count=step_count, total_budget=int(budget),
                   remaining_budget=int(budget), lambda_base=float(lambda_base))


@dataclass(frozen=True)
class StepReport:
    day_index: int
    step_index: int
    impressions: int
    wins: int
    cost: int
    clicks: int
    mean_bid: float
    mean_market_price: float
    lambda_t: float
    adjustment: float
    remaining_budget: int
    value_seen: float = 0.0
    value_won: float = 0.0

    @property
    def cpc(self):
        return self.cost / self.clicks if self.clicks else None

    def to_dict(self):
        data = asdict(self)
        data['cpc'] = self.cpc
        return data


def run_step(step, lambda_t, state, adjustment=0.0):
    """
    Bid every impression of one step at ``floor(pCTR * lambda_t)`` and settle them in log order.

    :param ScoredStep step: The step's impressions with their pCTR.
    :param float lambda_t: Bid scaling factor for the whole step.
    :param EnvState state: State at the start of the step.
    :param float adjustment: The a_t that produced ``lambda_t``, recorded in the report.
    :return: The step report and the state after the step.
    :rtype: tuple[StepReport, EnvState]
    """
    if not (lambda_t > 0 and math.isfinite(lambda_t)):
        raise InvalidParams(f"lambda_t must be positive and finite, got {lambda_t}")
    bids = bid_prices(step.pctr, lambda_t)
    won, remaining = replay_budgeted(bids, step.prices, state.remaining_budget)
    cost = int(step.prices[won].sum())
    clicks = int(step.clicks[won].sum())
    wins = int(won.sum())
    value_seen = float(step.pctr.sum())
    value_won = float(step.pctr[won].sum())
    report = StepReport(
        day_index=state.day_index,
        step_index=state.step_index,
        impressions=step.impressions,
        wins=wins,
        cost=cost,
        clicks=clicks,
        mean_bid=float(bids.mean()) if bids.size else 0.0,
        mean_market_price=cost / wins if wins else 0.0,
        lambda_t=float(lambda_t),
        adjustment=float(adjustment),
        remaining_budget=remaining,
        value_seen=value_seen,
        value_won=value_won,
    )
    after = replace(
        state,
        remaining_budget=remaining,
        bids_made=state.bids_made + step.impressions,
        wins=state.wins + wins,
        total_cost=state.total_cost + cost,
        clicks=state.clicks + clicks,
        won_price_sum=state.won_price_sum + cost,
        last_adjustment=float(adjustment),
        value_seen=state.value_seen + value_seen,
        value_won=state.value_won + value_won,
    )
    return report, after


@dataclass(frozen=True)
class DayReport:
    day_index: int
    budget: int
    steps: tuple
    final_state: EnvState

    @property
    def clicks(self):
        return sum(s.clicks for s in self.steps)

    @property
    def cost(self):
        return sum(s.cost for s in self.steps)

    @property
    def wins(self):
        return sum(s.wins for s in self.steps)

    @property
    def impressions(self):
        return sum(s.impressions for s in self.steps)


def run_day(day, bidder, budget):
    """
    Replay one test day step by step, asking the bidder for lambda_t before each step.

    The bidder sees the running :class:`EnvState` and the reports of earlier steps only. Steps
    without impressions are still decided so every step yields one decision. An exhausted budget
    does not end the day; the remaining steps simply lose every auction.

    :param ScoredDay day: The scored test day.
    :param Bidder bidder: Decision policy.
    :param int budget: B_k for this day.
    :raises DayReplayError: When the bidder fails or returns an unusable factor.
    :rtype: DayReport
    """
    state = EnvState.start_of_day(day.day_index, day.step_count, budget, bidder.lambda_base)
    reports = []
    bidder.start_day(state)
    for t, step in enumerate(day.steps):
        state = replace(state, step_index=t)
        try:
            lambda_t = bidder.decide(state, tuple(reports))
            if not (isinstance(lambda_t, numbers.Real) and lambda_t > 0 and math.isfinite(lambda_t)):
                raise BidderError(f"{bidder.name} returned an unusable factor {lambda_t!r}")
            report, state = run_step(step, lambda_t, state, adjustment=bidder.adjustment_for(lambda_t))
            reports.append(report)
            bidder.observe(report, state)
        except DayReplayError:
            raise
        except Exception as e:
            error = DayReplayError(day.day_index, t, f"{type(e).__name__}: {e}")
            error.log(logger)
            raise error from e
    try:
        bidder.end_day(state, tuple(reports))
    except Exception as e:
        raise DayReplayError(day.day_index, day.step_count, f"{type(e).__name__}: {e}") from e
    result = DayReport(day_index=day.day_index, budget=int(budget), steps=tuple(reports), final_state=state)
    logger.info(f"[AuctionReplay] Day {day.day_index} {bidder.name}: clicks={result.clicks} "
                f"cost={result.cost}/{budget} wins={result.wins}/{result.impressions}")
    return result


def run_days(days, bidder, budgets):
    """
    Replay consecutive test days; the budget does not roll over.
    """
    if len(days) != len(budgets):
        raise InvalidParams(f"{len(days)} days but {len(budgets)} daily budgets")
    return [run_day(day, bidder, budget) for day, budget in zip(days, budgets)]

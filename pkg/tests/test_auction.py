import time
from dataclasses import replace

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from bidwright.auction.bidders import Bidder, FixedLambdaBidder
from bidwright.auction.curves import STEP_COLUMNS, budget_curve, read_step_csv, step_frame, write_curves, \
    write_step_csv
from bidwright.auction.replay import EnvState, ScoredDay, ScoredStep, bid_prices, replay_budgeted, run_auction, \
    run_day, run_days, run_step, score_day
from bidwright.core.exceptions import DayReplayError, InvalidParams
from bidwright.ctr.training import mean_train_ctr, train
from bidwright.dataset.budget import plan_budget
from bidwright.dataset.synth import synthesize_campaign
from bidwright.strategies.fit import fit_strategy

from conftest import make_event, small_params, small_train_config


def one_step_day(prices, clicks, pctr, steps=1, day_index=0):
    step = ScoredStep(prices=np.asarray(prices, dtype=np.int64), clicks=np.asarray(clicks, dtype=np.int64),
                      pctr=np.asarray(pctr, dtype=float))
    empty = ScoredStep(prices=np.zeros(0, dtype=np.int64), clicks=np.zeros(0, dtype=np.int64), pctr=np.zeros(0))
    return ScoredDay(day_index=day_index, day_cost=int(np.sum(prices)), steps=(step,) + (empty,) * (steps - 1))


class RecordingBidder(Bidder):
    def __init__(self, lambda_base):
        super().__init__(lambda_base)
        self.decisions = []

    def decide(self, state, history):
        lambda_t = self.lambda_base * (1.0 + 0.1 * (state.clicks % 3))
        self.decisions.append((state.step_index, lambda_t, len(history)))
        return lambda_t


class JitterBidder(Bidder):
    """Scales the base factor by a random multiple between e^-1 and e^3 at every step."""

    def __init__(self, lambda_base, seed):
        super().__init__(lambda_base)
        self.rng = np.random.default_rng(seed)

    def decide(self, state, history):
        return self.lambda_base * float(np.exp(self.rng.uniform(-1.0, 3.0)))


class BrokenBidder(Bidder):
    def __init__(self, lambda_base, fail_at, result=None):
        super().__init__(lambda_base)
        self.fail_at = fail_at
        self.result = result

    def decide(self, state, history):
        if state.step_index == self.fail_at:
            if self.result is None:
                raise ValueError('no decision')
            return self.result
        return self.lambda_base


@pytest.mark.parametrize('bid, price, budget, won, cost', [
    (10, 8, 100, True, 8),
    (8, 8, 100, True, 8),
    (7, 8, 100, False, 0),
    (10, 8, 5, False, 0),
    (10, 8, 8, True, 8),
    (0, 0, 0, True, 0),
])
def test_run_auction(bid, price, budget, won, cost):
    outcome = run_auction(bid, make_event(price, click=1), budget)
    assert (outcome.won, outcome.cost) == (won, cost)
    assert outcome.click_credited == (1 if won else 0)


def test_run_auction_rejects_negative_inputs():
    with pytest.raises(InvalidParams):
        run_auction(-1, make_event(3), 10)


@settings(max_examples=10_000, deadline=None)
@given(st.integers(min_value=0, max_value=500), st.integers(min_value=0, max_value=500),
       st.integers(min_value=0, max_value=500))
def test_second_price_outcome(bid, price, budget):
    outcome = run_auction(bid, make_event(price), budget)
    assert outcome.won == (min(bid, budget) >= price)
    assert outcome.cost == (price if outcome.won else 0)
    assert outcome.cost <= budget


@given(st.lists(st.tuples(st.integers(0, 60), st.integers(0, 60)), max_size=60), st.integers(0, 800))
def test_vectorized_replay_matches_sequential_auctions(rows, budget):
    bids = np.array([b for b, _ in rows], dtype=np.int64)
    prices = np.array([p for _, p in rows], dtype=np.int64)

    won, remaining = replay_budgeted(bids, prices, budget)

    expected, left = [], budget
    for bid, price in rows:
        outcome = run_auction(bid, make_event(price), left)
        left -= outcome.cost
        expected.append(outcome.won)
    assert won.tolist() == expected
    assert remaining == left


def test_bid_prices_floor():
    assert bid_prices([0.002, 0.0019999, 0.0], 5000).tolist() == [10, 9, 0]


def test_run_step_example():
    state = EnvState.start_of_day(0, 1, 100, 5000.0)
    step = ScoredStep(prices=np.array([8]), clicks=np.array([1]), pctr=np.array([0.002]))
    report, after = run_step(step, 5000.0, state)

    assert (report.wins, report.cost, report.clicks) == (1, 8, 1)
    assert report.mean_bid == 10.0
    assert report.mean_market_price == 8.0
    assert report.remaining_budget == 92
    assert after.remaining_budget == 92
    assert after.cpc == 8.0
    assert after.cpm == 8000.0
    assert report.value_seen == report.value_won == pytest.approx(0.002)
    assert after.value_won == pytest.approx(0.002)
    assert after.mean_value_seen == after.mean_value_won == pytest.approx(0.002)
    assert after.value_per_cost == pytest.approx(0.002 / 8)


def test_exhausted_budget_loses_every_auction():
    state = EnvState.start_of_day(0, 1, 0, 1.0)
    step = ScoredStep(prices=np.array([1, 2]), clicks=np.array([1, 1]), pctr=np.array([0.9, 0.9]))
    report, after = run_step(step, 1e6, state)
    assert report.wins == 0
    assert after.bids_made == 2
    assert after.win_rate == 0.0


def test_pctr_value_accumulates_over_steps():
    state = EnvState.start_of_day(0, 2, 10, 100.0)
    step = ScoredStep(prices=np.array([1, 50]), clicks=np.array([0, 0]), pctr=np.array([0.2, 0.3]))
    _, state = run_step(step, 100.0, state)
    report, state = run_step(step, 100.0, replace(state, step_index=1))

    assert (report.wins, report.value_seen, report.value_won) == (1, pytest.approx(0.5), pytest.approx(0.2))
    assert state.value_seen == pytest.approx(1.0)
    assert state.value_won == pytest.approx(0.4)
    assert state.mean_value_seen == pytest.approx(0.25)
    assert state.mean_value_won == pytest.approx(0.2)
    assert state.value_per_cost == pytest.approx(0.2)


def test_run_step_rejects_bad_lambda():
    state = EnvState.start_of_day(0, 1, 10, 1.0)
    step = ScoredStep(prices=np.array([1]), clicks=np.array([0]), pctr=np.array([0.5]))
    with pytest.raises(InvalidParams):
        run_step(step, 0.0, state)


def test_env_state_dict():
    state = EnvState.start_of_day(2, 24, 500, 100.0)
    data = state.to_dict()
    assert 'won_price_sum' not in data
    assert data['cpc'] is None and data['cpm'] is None
    assert data['remaining_budget'] == 500
    assert data['lambda_base'] == 100.0
    assert data['value_per_cost'] is None
    assert data['mean_value_seen'] == data['mean_value_won'] == 0.0


def test_empty_steps_are_still_decided():
    bidder = RecordingBidder(100.0)
    report = run_day(one_step_day([5, 6], [1, 0], [0.1, 0.1], steps=24), bidder, 20)

    assert len(report.steps) == 24
    assert [step for step, _, _ in bidder.decisions] == list(range(24))
    assert [seen for _, _, seen in bidder.decisions] == list(range(24))
    assert report.steps[-1].impressions == 0


def test_bidder_failures_name_the_step():
    day = one_step_day([5], [0], [0.1], steps=6)
    with pytest.raises(DayReplayError) as info:
        run_day(day, BrokenBidder(10.0, fail_at=3), 100)
    assert info.value.step_index == 3

    for bad in (0.0, -1.0, float('nan'), 'fast'):
        with pytest.raises(DayReplayError):
            run_day(day, BrokenBidder(10.0, fail_at=2, result=bad), 100)


def test_bidder_needs_positive_lambda_base():
    with pytest.raises(InvalidParams):
        FixedLambdaBidder(0.0)


def test_days_need_matching_budgets(small_campaign, small_model):
    days = [score_day(day, small_model) for day in small_campaign.test_days]
    with pytest.raises(InvalidParams):
        run_days(days, FixedLambdaBidder(100.0), [10])


@pytest.mark.parametrize('fraction', ['1/2', '1/8', '1/32'])
def test_replay_respects_budgets_and_balances_the_books(small_campaign, small_model, fraction):
    days = [score_day(day, small_model) for day in small_campaign.test_days]
    plan = plan_budget(small_campaign, fraction)
    fit = fit_strategy('lp', small_campaign, small_model, fraction=fraction)

    reports = run_days(days, FixedLambdaBidder(fit.lambda_base), plan.per_day_budgets)

    for report, budget, day in zip(reports, plan.per_day_budgets, small_campaign.test_days):
        assert report.cost <= budget
        assert report.cost == budget - report.final_state.remaining_budget
        remaining = budget
        for step in report.steps:
            remaining -= step.cost
            assert step.remaining_budget == remaining >= 0
        assert report.impressions == day.event_count


def test_replay_is_deterministic(small_campaign, small_model):
    days = [score_day(day, small_model) for day in small_campaign.test_days]
    budgets = plan_budget(small_campaign, '1/8').per_day_budgets
    first = run_days(days, FixedLambdaBidder(2000.0), budgets)
    second = run_days(days, FixedLambdaBidder(2000.0), budgets)
    assert step_frame(first).equals(step_frame(second))


def test_click_labels_inside_a_step_do_not_change_earlier_decisions(small_campaign, small_model):
    day = score_day(small_campaign.test_days[0], small_model)
    t = max(range(day.step_count), key=lambda s: day.steps[s].impressions)
    rng = np.random.default_rng(0)
    shuffled = ScoredStep(prices=day.steps[t].prices, pctr=day.steps[t].pctr,
                          clicks=rng.permutation(day.steps[t].clicks))
    permuted = ScoredDay(day.day_index, day.day_cost, day.steps[:t] + (shuffled,) + day.steps[t + 1:])

    original, changed = RecordingBidder(3000.0), RecordingBidder(3000.0)
    run_day(day, original, day.day_cost // 4)
    run_day(permuted, changed, day.day_cost // 4)

    assert original.decisions[:t + 1] == changed.decisions[:t + 1]


def test_step_csv_and_curves(tmp_path, small_campaign, small_model):
    days = [score_day(day, small_model) for day in small_campaign.test_days]
    plan = plan_budget(small_campaign, '1/8')
    reports = run_days(days, FixedLambdaBidder(2000.0), plan.per_day_budgets)

    path = write_step_csv(reports, str(tmp_path / 'steps.csv'))
    steps = read_step_csv(path)
    assert list(steps.columns) == STEP_COLUMNS
    assert len(steps) == 3 * 24
    assert int(steps['cost'].sum()) == sum(r.cost for r in reports)
    assert steps.loc[steps['clicks'] == 0, 'cpc'].isna().all()

    budgets = {r.day_index: r.budget for r in reports}
    curve = budget_curve(steps, budgets, 'LP-baseline')
    assert (curve['bidder'] == 'LP-baseline').all()
    assert ((curve['remaining_share'] >= 0) & (curve['remaining_share'] <= 1)).all()
    last = curve.groupby('day').last()
    assert (last['cumulative_cost'] + last['remaining_budget'] == last['budget']).all()

    written = write_curves([curve, budget_curve(steps, budgets, 'other')], str(tmp_path / 'curves.csv'))
    assert len(read_step_csv(written)) == 2 * len(curve)


def test_expert_clicks_grow_with_budget():
    chains, strict = 0, 0
    seeds = range(50)
    fractions = ('1/32', '1/8', '1/2')
    for seed in seeds:
        dataset = synthesize_campaign(seed, small_params(campaign_id=f"s{seed}", days=4, events_per_day=300,
                                                         base_logit=-3.0))
        model = train(list(dataset.train_events), small_train_config(epochs=1, hash_bits=10, k=2)).model
        days = [score_day(day, model) for day in dataset.test_days]
        for kind in ('lp', 'mcpc'):
            clicks = []
            for fraction in fractions:
                fit = fit_strategy(kind, dataset, model, fraction=fraction)
                budgets = plan_budget(dataset, fraction).per_day_budgets
                reports = run_days(days, FixedLambdaBidder(fit.lambda_base), budgets)
                clicks.append(sum(r.clicks for r in reports))
            chains += clicks[0] <= clicks[1] <= clicks[2]
            strict += clicks[0] < clicks[2]
    runs = 2 * len(seeds)
    assert chains >= 0.9 * runs
    assert strict >= 0.5 * runs


def test_budgets_hold_across_randomized_replays():
    replays = 0
    for seed in range(10):
        dataset = synthesize_campaign(100 + seed, small_params(campaign_id=f"b{seed}", days=4, events_per_day=240,
                                                               base_logit=-3.0))
        model = train(list(dataset.train_events), small_train_config(epochs=1, hash_bits=10, k=2)).model
        dataset = dataset.with_theta_0(mean_train_ctr(model, list(dataset.train_events)))
        days = [score_day(day, model) for day in dataset.test_days]
        for kind in ('mcpc', 'lin', 'lp'):
            for fraction in ('1/2', '1/8', '1/32'):
                fit = fit_strategy(kind, dataset, model, fraction=fraction)
                budgets = plan_budget(dataset, fraction).per_day_budgets
                bidders = [FixedLambdaBidder(fit.lambda_base)]
                bidders += [JitterBidder(fit.lambda_base, 1000 * seed + j) for j in range(11)]
                for bidder in bidders:
                    for report, budget in zip(run_days(days, bidder, budgets), budgets):
                        # Costs are non-negative, so a bound at every step end bounds every impression.
                        spent = np.cumsum([step.cost for step in report.steps])
                        assert (spent <= budget).all()
                        assert [step.remaining_budget for step in report.steps] == (budget - spent).tolist()
                    replays += 1
    assert replays >= 1000


def test_three_large_days_replay_quickly():
    rng = np.random.default_rng(4)
    days = []
    for k in range(3):
        steps = []
        for size in rng.multinomial(10_000, np.full(24, 1 / 24)):
            steps.append(ScoredStep(prices=rng.integers(0, 300, size=size),
                                    clicks=(rng.random(size) < 0.001).astype(int),
                                    pctr=rng.uniform(0.0001, 0.01, size=size)))
        days.append(ScoredDay(day_index=k, day_cost=int(sum(s.prices.sum() for s in steps)), steps=tuple(steps)))

    started = time.perf_counter()
    reports = run_days(days, JitterBidder(20_000.0, seed=1), [day.day_cost // 8 for day in days])
    elapsed = time.perf_counter() - started

    assert sum(r.impressions for r in reports) == 30_000
    assert elapsed < 10.0

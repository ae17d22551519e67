import numpy as np

from bidwright.auction.replay import score_step
from bidwright.core import logger
from bidwright.core.exceptions import DegenerateBudget, InvalidParams
from bidwright.strategies.fit import StrategyFit

# Keeps floor(v * lambda) >= c for the critical impression despite float rounding.
RATIO_GUARD = 1e-9


def critical_ratio(values, costs, budget, strict=False):
    """
    Dual price of the fractional knapsack ``max sum(v x) s.t. sum(c x) <= budget, 0 <= x <= 1``.

    Items are taken by value-per-cost, zero-cost items first; ``r*`` is the ratio of the item at
    which the running cost first reaches the budget. When the budget exceeds the cost of every item
    the problem is degenerate and ``r*`` is the smallest ratio, so every impression is bought. A
    budget equal to the total cost is cut at the last item, which gives the same ratio.

    :param numpy.ndarray values: v_i, the pCTR of each impression.
    :param numpy.ndarray costs: c_i, the market prices.
    :param int budget: Positive budget.
    :param bool strict: Raise instead of buying everything on a degenerate budget.
    :return: ``r*`` and a record of the cut.
    :rtype: tuple[float, dict]
    :raises DegenerateBudget: When no impression has a positive cost, when ``r* <= 0``, or on a
        degenerate budget in strict mode.
    """
    values = np.asarray(values, dtype=float)
    costs = np.asarray(costs, dtype=np.int64)
    if budget is None or budget <= 0:
        raise InvalidParams(f"LP needs a positive budget, got {budget}")
    if not len(values):
        raise InvalidParams("LP needs at least one train impression")
    paid = np.flatnonzero(costs > 0)
    if not paid.size:
        raise DegenerateBudget("every train impression is free, the critical ratio is undefined")
    ratios = values[paid] / costs[paid]
    free_count = len(costs) - paid.size

    total_cost = int(costs.sum())
    if budget > total_cost:
        message = f"budget {budget} exceeds the whole train cost {total_cost}"
        if strict:
            raise DegenerateBudget(message)
        logger.warning(f"[LpFit] {message}, bidding to buy every impression")
        r_star = float(ratios.min())
        cut = {'spend_at_threshold': total_cost, 'items_taken': len(costs), 'degenerate': True}
    else:
        order = np.argsort(-ratios, kind='stable')
        spent = np.cumsum(costs[paid][order])
        stop = int(np.searchsorted(spent, budget, side='left'))
        r_star = float(ratios[order[stop]])
        cut = {'spend_at_threshold': int(spent[stop]), 'items_taken': free_count + stop + 1, 'degenerate': False}
    if not r_star > 0:
        raise DegenerateBudget(f"critical ratio {r_star} is not positive")
    cut.update(critical_ratio=r_star, budget=int(budget))
    return r_star, cut


def fit_lp(dataset, model, train_budget, strict=False, scored=None):
    """
    Optimal offline linear bidding: ``lambda_base = 1 / r*`` over the train log.

    Bidding ``v_i * lambda_base`` then wins exactly the impressions with ``v_i / c_i >= r*`` when the
    budget does not bind, which is the support of the relaxed optimum.

    :param CampaignDataset dataset: Campaign.
    :param FMModel model: CTR model giving v_i.
    :param int train_budget: Budget of the knapsack.
    :param bool strict: See :func:`critical_ratio`.
    :param ScoredStep scored: Pre-scored train log.
    :rtype: StrategyFit
    """
    if not dataset.train_events:
        raise InvalidParams("LP needs at least one train impression")
    scored = scored or score_step(dataset.train_events, model)
    r_star, cut = critical_ratio(scored.pctr, scored.prices, train_budget, strict=strict)
    return StrategyFit(kind='LP', lambda_base=(1.0 / r_star) * (1.0 + RATIO_GUARD), meta=cut)

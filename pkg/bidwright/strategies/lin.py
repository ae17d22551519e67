import numpy as np

from bidwright.auction.replay import bid_prices, replay_budgeted, score_step
from bidwright.core import logger
from bidwright.core.exceptions import EmptyGrid, InvalidParams
from bidwright.ctr.training import mean_train_ctr
from bidwright.strategies.fit import StrategyFit

GRID_POINTS = 33
GRID_STEPS_PER_OCTAVE = 4


def default_grid(anchor):
    """
    Geometric b_0 grid from ``anchor / 16`` to ``anchor * 16``, four points per doubling.
    """
    exponents = np.arange(GRID_POINTS) / GRID_STEPS_PER_OCTAVE - (GRID_POINTS - 1) / (2 * GRID_STEPS_PER_OCTAVE)
    return [float(anchor * 2.0 ** e) for e in exponents]


def grid_anchor(dataset, theta_0):
    """
    Centre of the default grid: the MCPC bid at average CTR, or the mean train market price when
    the train period has no clicks.
    """
    if dataset.total_train_clicks > 0:
        return theta_0 * dataset.total_train_cost / dataset.total_train_clicks, 'mcpc'
    return dataset.total_train_cost / max(len(dataset.train_events), 1), 'mean_price'


def replay_clicks(scored, b0, theta_0, budget):
    """
    Clicks won on a scored log when bidding ``floor(pCTR * b0 / theta_0)`` under ``budget``.
    """
    won, _ = replay_budgeted(bid_prices(scored.pctr, b0 / theta_0), scored.prices, budget)
    return int(scored.clicks[won].sum())


def fit_lin(dataset, model, train_budget, grid=None, scored=None):
    """
    Linear bidding: bid = b0 / theta_0 * pCTR, b0 picked by replaying the full train log.

    Every candidate is replayed under the same auction rules as the test replay with
    ``train_budget``; the most clicks wins and ties go to the smaller b0.

    :param CampaignDataset dataset: Campaign; ``theta_0`` is computed when the dataset has none.
    :param FMModel model: CTR model.
    :param int train_budget: Replay budget on the train log.
    :param list grid: Explicit b0 candidates; the default geometric grid when None.
    :param ScoredStep scored: Pre-scored train log, to share scoring across fits.
    :raises EmptyGrid: When ``grid`` is empty.
    :rtype: StrategyFit
    """
    if train_budget is None or train_budget <= 0:
        raise InvalidParams(f"LIN needs a positive train budget, got {train_budget}")
    theta_0 = dataset.theta_0 if dataset.theta_0 is not None else mean_train_ctr(model, dataset.train_events)
    if not theta_0 > 0:
        raise InvalidParams(f"theta_0 must be positive, got {theta_0}")
    anchor, anchor_kind = None, 'explicit'
    if grid is None:
        anchor, anchor_kind = grid_anchor(dataset, theta_0)
        grid = default_grid(anchor)
    candidates = sorted(float(b0) for b0 in grid if b0 > 0)
    if not candidates:
        raise EmptyGrid("LIN grid has no positive b0 candidate")

    scored = scored or score_step(dataset.train_events, model)
    best_b0, best_clicks = None, -1
    for b0 in candidates:
        clicks = replay_clicks(scored, b0, theta_0, train_budget)
        if clicks > best_clicks:
            best_b0, best_clicks = b0, clicks
    logger.debug(f"[LinFit] {len(candidates)} candidates, best b0={best_b0:.4f} with {best_clicks} clicks")
    return StrategyFit(kind='LIN', lambda_base=best_b0 / theta_0,
                       meta={'b0': best_b0, 'theta_0': theta_0, 'grid_score': best_clicks,
                             'grid_size': len(candidates), 'anchor': anchor, 'anchor_kind': anchor_kind,
                             'train_budget': int(train_budget)})

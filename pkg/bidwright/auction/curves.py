import os

import pandas as pd

STEP_COLUMNS = ['day', 'step', 'd_t', 'wins', 'cost', 'clicks', 'lambda_t', 'adjustment', 'remaining_budget', 'cpc']


def step_frame(day_reports):
    """
    One row per replayed step, in the step CSV column order. ``cpc`` is empty for click-less steps.

    :param list day_reports: DayReports of one run.
    :rtype: pandas.DataFrame
    """
    rows = [{
        'day': report.day_index,
        'step': report.step_index,
        'd_t': report.impressions,
        'wins': report.wins,
        'cost': report.cost,
        'clicks': report.clicks,
        'lambda_t': report.lambda_t,
        'adjustment': report.adjustment,
        'remaining_budget': report.remaining_budget,
        'cpc': report.cpc,
    } for day in day_reports for report in day.steps]
    return pd.DataFrame(rows, columns=STEP_COLUMNS)


def write_step_csv(day_reports, path):
    os.makedirs(os.path.dirname(os.path.abspath(path)), exist_ok=True)
    step_frame(day_reports).to_csv(path, index=False)
    return path


def read_step_csv(path):
    return pd.read_csv(path)


def budget_curve(steps, budgets, bidder):
    """
    Remaining budget share and running CPC per step, the shape used to plot spend pacing.

    :param pandas.DataFrame steps: Rows as produced by :func:`step_frame`.
    :param dict budgets: Day index to that day's budget B_k.
    :param str bidder: Label stored in the ``bidder`` column.
    :rtype: pandas.DataFrame
    """
    frame = steps[['day', 'step', 'cost', 'clicks', 'remaining_budget']].copy()
    frame.insert(0, 'bidder', bidder)
    by_day = frame.groupby('day', sort=False)
    frame['cumulative_cost'] = by_day['cost'].cumsum()
    frame['cumulative_clicks'] = by_day['clicks'].cumsum()
    frame['budget'] = frame['day'].map(budgets)
    frame['remaining_share'] = (frame['remaining_budget'] / frame['budget']).where(frame['budget'] > 0, 0.0)
    frame['cpc'] = (frame['cumulative_cost'] / frame['cumulative_clicks']).where(frame['cumulative_clicks'] > 0)
    return frame.drop(columns=['cost', 'clicks'])


def write_curves(curves, path):
    os.makedirs(os.path.dirname(os.path.abspath(path)), exist_ok=True)
    pd.concat(curves, ignore_index=True).to_csv(path, index=False)
    return path

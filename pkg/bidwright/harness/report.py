import math
import os
from fractions import Fraction

import pandas as pd
from rich.console import Console
from rich.table import Table

from bidwright.core.exceptions import InvalidParams

REPORT_COLUMNS = ['campaign', 'fraction', 'strategy', 'bidder', 'clicks', 'cost', 'wins', 'bids', 'win_rate',
                  'cpc', 'lambda_base', 'budget', 'fallback_steps', 'steps_path', 'transcript_path']


def results_frame(results):
    """
    One row per grid cell.

    :param list results: CellResults.
    :rtype: pandas.DataFrame
    """
    rows = []
    for result in results:
        spec = result.spec
        rows.append({
            'campaign': spec.campaign_id,
            'fraction': spec.fraction,
            'strategy': spec.strategy,
            'bidder': spec.bidder,
            'clicks': result.clicks,
            'cost': result.cost,
            'wins': result.wins,
            'bids': result.bids,
            'win_rate': result.wins / result.bids if result.bids else 0.0,
            'cpc': result.cost / result.clicks if result.clicks else None,
            'lambda_base': result.lambda_base,
            'budget': result.budget,
            'fallback_steps': result.fallback_steps,
            'steps_path': result.steps_path,
            'transcript_path': result.transcript_path,
        })
    frame = pd.DataFrame(rows, columns=REPORT_COLUMNS)
    return frame.sort_values(['campaign', 'strategy', 'bidder', 'fraction'], kind='stable', ignore_index=True)


def write_report(frame, path):
    os.makedirs(os.path.dirname(os.path.abspath(path)), exist_ok=True)
    frame.to_csv(path, index=False)
    return path


def read_report(path):
    if not os.path.isfile(path):
        raise InvalidParams(f"no report at {path}, run the grid first")
    return pd.read_csv(path, dtype={'fraction': str, 'campaign': str})


def _fraction_order(labels):
    return sorted(labels, key=lambda label: Fraction(label), reverse=True)


def clicks_table(frame):
    """
    Clicks with one row per (campaign, strategy, bidder) and one column per budget fraction,
    largest fraction first.

    :rtype: pandas.DataFrame
    """
    if frame.empty:
        return pd.DataFrame(columns=['campaign', 'strategy', 'bidder'])
    table = frame.pivot_table(index=['campaign', 'strategy', 'bidder'], columns='fraction', values='clicks',
                              aggfunc='sum')
    table = table[_fraction_order(table.columns)]
    table.columns.name = None
    return table.reset_index()


def improvement_percent(baseline, agent):
    """
    ``(agent - baseline) / baseline`` in percent, rounded to two decimals; None for a zero baseline.
    """
    if baseline == 0:
        return None
    return round((agent - baseline) / baseline * 100.0, 2)


def compare(frame):
    """
    Agent against baseline for every (campaign, strategy, fraction) holding both.

    :rtype: pandas.DataFrame
    """
    keys = ['campaign', 'strategy', 'fraction']
    baseline = frame[frame['bidder'] == 'baseline'].set_index(keys)['clicks']
    agent = frame[frame['bidder'] == 'agent'].set_index(keys)['clicks']
    joined = pd.concat({'baseline_clicks': baseline, 'agent_clicks': agent}, axis=1, join='inner').reset_index()
    joined['delta'] = joined['agent_clicks'] - joined['baseline_clicks']
    joined['percent'] = [improvement_percent(b, a) for b, a in zip(joined['baseline_clicks'], joined['agent_clicks'])]
    return joined


def check_aggregation(frame):
    """
    Cells whose report totals differ from the sums of their step CSV.

    :return: Labels of inconsistent cells; empty when every total matches.
    :rtype: list[str]
    """
    mismatches = []
    for row in frame.itertuples(index=False):
        steps = pd.read_csv(row.steps_path)
        if int(steps['clicks'].sum()) != row.clicks or int(steps['cost'].sum()) != row.cost \
                or int(steps['wins'].sum()) != row.wins or int(steps['d_t'].sum()) != row.bids:
            mismatches.append(f"{row.campaign}/{row.fraction}/{row.strategy}-{row.bidder}")
    return mismatches


def _cell(value):
    if value is None or (isinstance(value, float) and math.isnan(value)):
        return '-'
    if isinstance(value, float) and value.is_integer():
        return f"{int(value):,}"
    return f"{value:,}" if isinstance(value, int) else str(value)


def render_table(frame, title, console=None):
    console = console or Console()
    table = Table(title=title)
    for column in frame.columns:
        table.add_column(str(column), justify='right' if column not in ('campaign', 'strategy', 'bidder') else 'left')
    for row in frame.itertuples(index=False):
        table.add_row(*(_cell(value) for value in row))
    console.print(table)


def render_comparison(comparison, console=None):
    formatted = comparison.copy()
    formatted['percent'] = [f"{p:+.2f}%" if p is not None and not pd.isna(p) else '-' for p in comparison['percent']]
    render_table(formatted, 'Agent improvement over baseline', console)


def write_summary_tables(frame, output_dir):
    """
    Write ``clicks_table.csv`` and ``improvement.csv`` next to the report.
    """
    table = clicks_table(frame)
    comparison = compare(frame)
    table.to_csv(os.path.join(output_dir, 'clicks_table.csv'), index=False)
    comparison.to_csv(os.path.join(output_dir, 'improvement.csv'), index=False)
    return table, comparison

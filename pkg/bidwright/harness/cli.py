import functools
import os
import sys

import click
from exceptiongroup import ExceptionGroup
from rich.console import Console

from bidwright.auction.curves import budget_curve, read_step_csv, write_curves
from bidwright.core import logger
from bidwright.core.exceptions import BidwrightError
from bidwright.core.logger import reconfigure
from bidwright.ctr.storage import load_model, model_path, save_model
from bidwright.dataset.budget import fraction_label, parse_fraction
from bidwright.dataset.events import write_events_jsonl
from bidwright.harness.report import check_aggregation, clicks_table, read_report, render_comparison, \
    render_table, write_summary_tables
from bidwright.harness.runner import fit_for, load_source_events, prepare_campaign, run_grid
from bidwright.harness.settings import BACKEND_KINDS, load_run_config
from bidwright.strategies.fit import save_fit

console = Console()

config_option = click.option('--config', 'config_path', type=click.Path(exists=True, dir_okay=False),
                             help='Run configuration (JSON or YAML).')
campaign_option = click.option('--campaign', default=None, help='Only this campaign id.')
seed_option = click.option('--seed', type=int, default=None, help='Seed for synthetic data and CTR training.')


def handle_errors(command):
    """
    Turn library errors into one log line per failure and exit status 1.
    """

    @functools.wraps(command)
    def wrapper(*args, **kwargs):
        try:
            return command(*args, **kwargs)
        except ExceptionGroup as group:
            for error in group.exceptions:
                logger.error(f"[CLI] {type(error).__name__}: {error}")
            logger.error(f"[CLI] {group.message}")
            sys.exit(1)
        except BidwrightError as e:
            logger.error(f"[CLI] {type(e).__name__}: {e}")
            sys.exit(1)

    return wrapper


@click.group()
@click.option('--log-dir', default=None, type=click.Path(file_okay=False), help='Also write bidwright.log here.')
@click.option('--log-level', default=None, type=click.Choice(['DEBUG', 'INFO', 'WARNING', 'ERROR'], case_sensitive=False))
def cli(log_dir, log_level):
    """Replay real-time bidding logs with expert strategies and an LLM bidding agent."""
    if log_dir or log_level:
        reconfigure(log_dir=log_dir, log_level=log_level)


@cli.command('prepare-data')
@config_option
@campaign_option
@seed_option
@click.option('--out', default='data', show_default=True, type=click.Path(file_okay=False))
@handle_errors
def prepare_data(config_path, campaign, seed, out):
    """Write each campaign's events as canonical JSON lines."""
    run_config = load_run_config(config_path, campaign=campaign, seed=seed)
    for source in run_config.campaigns:
        events = load_source_events(source)
        path = os.path.join(out, source.campaign_id, 'events.jsonl')
        os.makedirs(os.path.dirname(path), exist_ok=True)
        write_events_jsonl(events, path)
        console.print(f"{source.campaign_id}: {len(events)} events -> {path}")


@cli.command('train-ctr')
@config_option
@campaign_option
@seed_option
@click.option('--out', default='models', show_default=True, type=click.Path(file_okay=False))
@handle_errors
def train_ctr(config_path, campaign, seed, out):
    """Train one CTR model per campaign and store it with its theta_0."""
    run_config = load_run_config(config_path, campaign=campaign, seed=seed)
    for source in run_config.campaigns:
        prepared = prepare_campaign(source, run_config)
        path = model_path(out, source.campaign_id)
        save_model(prepared.model, path, train_config=run_config.ctr, campaign_id=source.campaign_id,
                   theta_0=prepared.dataset.theta_0)
        console.print(f"{source.campaign_id}: log-loss {prepared.train_result.final_loss:.6f}, "
                      f"theta_0 {prepared.dataset.theta_0:.6f} -> {path}")


@cli.command('fit-strategy')
@config_option
@campaign_option
@seed_option
@click.option('--fraction', default=None, help='Budget fraction such as 1/8; every configured one when omitted.')
@click.option('--strategy', type=click.Choice(['mcpc', 'lin', 'lp'], case_sensitive=False), default=None)
@click.option('--models', 'models_dir', default=None, type=click.Path(file_okay=False),
              help='Directory of models from train-ctr; models are trained when omitted.')
@click.option('--out', default='fits', show_default=True, type=click.Path(file_okay=False))
@handle_errors
def fit_strategy_command(config_path, campaign, seed, fraction, strategy, models_dir, out):
    """Fit expert strategies and write their lambda_base as JSON."""
    run_config = load_run_config(config_path, campaign=campaign, seed=seed, fraction=fraction, strategy=strategy)
    for source in run_config.campaigns:
        model = None
        if models_dir:
            model, _ = load_model(model_path(models_dir, source.campaign_id))
        prepared = prepare_campaign(source, run_config, model=model)
        for fraction_value in run_config.fractions:
            for kind in run_config.strategies:
                fit = fit_for(prepared, kind, fraction_value, run_config)
                path = os.path.join(out, source.campaign_id, f"fit_{kind.lower()}_{fraction_label(fraction_value)}.json")
                save_fit(fit, path)
                console.print(f"{source.campaign_id} {kind} @ {fraction_value}: lambda_base {fit.lambda_base:.4f}")


@cli.command('run')
@config_option
@campaign_option
@seed_option
@click.option('--fraction', default=None, help='Budget fraction such as 1/8.')
@click.option('--bidder', type=click.Choice(['mcpc', 'lin', 'lp', 'agent'], case_sensitive=False), default=None,
              help='A single baseline, or the agent on the configured strategies.')
@click.option('--strategy', type=click.Choice(['mcpc', 'lin', 'lp'], case_sensitive=False), default=None)
@click.option('--backend', type=click.Choice(BACKEND_KINDS), default=None)
@click.option('--workers', type=int, default=None)
@click.option('--out', default=None, type=click.Path(file_okay=False))
@handle_errors
def run(config_path, campaign, seed, fraction, bidder, strategy, backend, workers, out):
    """Replay the test days for every grid cell and write the report."""
    run_config = load_run_config(config_path, campaign=campaign, seed=seed, fraction=fraction,
                                 bidder=bidder.lower() if bidder else None, strategy=strategy, backend=backend,
                                 out=out, workers=workers)
    grid = run_grid(run_config)
    render_table(clicks_table(read_report(grid.report_path)), 'Clicks by budget fraction', console)
    console.print(f"Report written to {grid.report_path}")


@cli.command('report')
@click.option('--out', default='runs', show_default=True, type=click.Path(exists=True, file_okay=False))
@handle_errors
def report(out):
    """Print the clicks table and the agent improvement table of a finished run."""
    frame = read_report(os.path.join(out, 'report.csv'))
    mismatches = check_aggregation(frame)
    for label in mismatches:
        logger.error(f"[Report] Totals of {label} do not match its step CSV")
    table, comparison = write_summary_tables(frame, out)
    render_table(table, 'Clicks by budget fraction', console)
    if not comparison.empty:
        render_comparison(comparison, console)
    if mismatches:
        sys.exit(1)


@cli.command('curves')
@click.option('--out', default='runs', show_default=True, type=click.Path(exists=True, file_okay=False))
@campaign_option
@click.option('--fraction', default=None, help='Only this budget fraction.')
@handle_errors
def curves(out, campaign, fraction):
    """Rebuild remaining-budget and CPC curves from the step CSVs of a finished run."""
    frame = read_report(os.path.join(out, 'report.csv'))
    if campaign is not None:
        frame = frame[frame['campaign'] == campaign]
    if fraction is not None:
        frame = frame[frame['fraction'] == str(parse_fraction(fraction))]
    for (campaign_id, fraction_value), group in frame.groupby(['campaign', 'fraction'], sort=True):
        collected = []
        for row in group.itertuples(index=False):
            steps = read_step_csv(row.steps_path)
            first = steps.groupby('day', sort=False).first()
            budgets = (first['remaining_budget'] + first['cost']).to_dict()
            collected.append(budget_curve(steps, budgets, f"{row.strategy}-{row.bidder}"))
        path = write_curves(collected, os.path.join(out, f"curves_{campaign_id}_{fraction_label(fraction_value)}.csv"))
        console.print(f"{campaign_id} @ {fraction_value} -> {path}")


def main():
    cli(prog_name='bidwright')

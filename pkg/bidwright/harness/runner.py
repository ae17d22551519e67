import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

from exceptiongroup import ExceptionGroup

from bidwright.agent.backends import make_backend
from bidwright.agent.bidder import AgentBidder
from bidwright.agent.pipeline import DecisionPipeline
from bidwright.agent.templates import load_templates
from bidwright.agent.transcript import TranscriptWriter
from bidwright.auction.bidders import FixedLambdaBidder
from bidwright.auction.curves import budget_curve, step_frame, write_curves, write_step_csv
from bidwright.auction.replay import run_days, score_day, score_step
from bidwright.core import logger
from bidwright.core.exceptions import BidwrightError
from bidwright.ctr.training import mean_train_ctr, train
from bidwright.dataset.budget import fraction_label, plan_budget
from bidwright.dataset.events import read_events_jsonl
from bidwright.dataset.loader import load_campaign_logs
from bidwright.dataset.partition import split_and_partition
from bidwright.dataset.synth import synthesize_events
from bidwright.harness.report import results_frame, write_report
from bidwright.harness.settings import write_resolved_config
from bidwright.memory.store import MemoryBank
from bidwright.strategies.fit import fit_strategy, save_fit, train_budget_for


@dataclass(frozen=True)
class PreparedCampaign:
    """
    A campaign ready for replay: split dataset with theta_0, its CTR model and pre-scored logs.
    """
    dataset: object
    model: object
    train_result: object
    train_scored: object
    scored_days: tuple

    @property
    def campaign_id(self):
        return self.dataset.campaign_id


@dataclass(frozen=True)
class CellSpec:
    campaign_id: str
    fraction: str
    strategy: str
    bidder: str

    @property
    def label(self):
        return f"{self.campaign_id}/{fraction_label(self.fraction)}/{self.strategy}-{self.bidder}"

    def directory(self, output_dir):
        return os.path.join(output_dir, self.campaign_id, fraction_label(self.fraction),
                            f"{self.strategy}-{self.bidder}")


@dataclass(frozen=True)
class CellResult:
    spec: CellSpec
    lambda_base: float
    budget: int
    day_reports: tuple
    steps_path: str
    transcript_path: str = None
    fallback_steps: int = 0

    @property
    def clicks(self):
        return sum(day.clicks for day in self.day_reports)

    @property
    def cost(self):
        return sum(day.cost for day in self.day_reports)

    @property
    def wins(self):
        return sum(day.wins for day in self.day_reports)

    @property
    def bids(self):
        return sum(day.impressions for day in self.day_reports)


@dataclass
class GridResult:
    output_dir: str
    results: list
    failures: list

    @property
    def report_path(self):
        return os.path.join(self.output_dir, 'report.csv')


def load_source_events(source):
    """
    Raw events of one campaign source, in log order.
    """
    if source.kind == 'synth':
        events, _ = synthesize_events(source.seed, source.synth)
        return events
    if source.kind == 'events':
        events = []
        for path in source.paths:
            events.extend(read_events_jsonl(path))
        return events
    events, stats = load_campaign_logs(list(source.paths), source.schema, campaign_id=source.campaign_id,
                                       on_error=source.on_error)
    logger.info(f"[GridRunner] Campaign '{source.campaign_id}': {stats.events} events from {stats.files} files, "
                f"{stats.skipped} malformed lines skipped")
    return events


def prepare_campaign(source, run_config, model=None):
    """
    Load, split, train the CTR model (unless one is given) and score a campaign.

    :param CampaignSource source: Where the events come from.
    :param RunConfig run_config: Split and training settings.
    :param FMModel model: Pre-trained model to reuse.
    :rtype: PreparedCampaign
    """
    events = load_source_events(source)
    dataset = split_and_partition(events, test_day_count=run_config.test_days,
                                  steps_per_day=run_config.steps_per_day, campaign_id=source.campaign_id)
    train_result = None
    if model is None:
        train_result = train(list(dataset.train_events), run_config.ctr)
        model = train_result.model
    dataset = dataset.with_theta_0(mean_train_ctr(model, list(dataset.train_events)))
    logger.info(f"[GridRunner] Campaign '{source.campaign_id}' theta_0={dataset.theta_0:.6f}")
    return PreparedCampaign(dataset=dataset, model=model, train_result=train_result,
                            train_scored=score_step(list(dataset.train_events), model),
                            scored_days=tuple(score_day(day, model) for day in dataset.test_days))


def fit_for(prepared, strategy, fraction, run_config):
    options = {}
    if strategy in ('LIN', 'LP'):
        options['scored'] = prepared.train_scored
    if strategy == 'LP':
        options['strict'] = run_config.lp_strict
    return fit_strategy(strategy, prepared.dataset, prepared.model,
                        train_budget=train_budget_for(prepared.dataset, fraction), fraction=fraction, **options)


def make_agent(fit, run_config, directory, templates=None):
    """
    An agent bidder with its own backend, memory files and transcript under ``directory``.
    """
    templates = templates or load_templates(run_config.templates_dir)
    backend = make_backend(run_config.backend, profile=templates['profile'].text)
    pipeline = DecisionPipeline(backend, templates=templates, retries=run_config.retries,
                                decision_mode=run_config.decision_mode, strategy_kind=fit.kind,
                                temperature=float(run_config.backend.get('temperature', 0.0)))
    return AgentBidder(fit.lambda_base, pipeline,
                       memory=MemoryBank(directory, scope=run_config.retrieval),
                       transcript=TranscriptWriter(os.path.join(directory, 'transcript.jsonl')))


def run_cell(prepared, spec, fit, run_config, bidder=None):
    """
    Replay the test days of one grid cell and write its step CSV.

    :param PreparedCampaign prepared: The campaign.
    :param CellSpec spec: Which fraction, strategy and bidder.
    :param StrategyFit fit: Expert fit for this fraction and strategy.
    :param RunConfig run_config: Grid settings.
    :param Bidder bidder: Overrides the bidder built from ``spec``.
    :rtype: CellResult
    """
    directory = spec.directory(run_config.output_dir)
    os.makedirs(directory, exist_ok=True)
    plan = plan_budget(prepared.dataset, spec.fraction)
    if bidder is None:
        if spec.bidder == 'agent':
            bidder = make_agent(fit, run_config, directory)
        else:
            bidder = FixedLambdaBidder(fit.lambda_base, name=f"{spec.strategy}-baseline")
    save_fit(fit, os.path.join(directory, 'fit.json'))
    reports = run_days(prepared.scored_days, bidder, plan.per_day_budgets)
    steps_path = write_step_csv(reports, os.path.join(directory, 'steps.csv'))
    transcript = getattr(bidder, 'transcript', None)
    result = CellResult(spec=spec, lambda_base=fit.lambda_base, budget=plan.total, day_reports=tuple(reports),
                        steps_path=steps_path, transcript_path=transcript.path if transcript else None,
                        fallback_steps=getattr(bidder, 'fallback_steps', 0))
    logger.info(f"[GridRunner] Cell {spec.label}: {result.clicks} clicks, {result.cost}/{plan.total} spent")
    return result


def write_cell_curves(results, output_dir):
    """
    One ``curves_{campaign}_{fraction}.csv`` per campaign and fraction, all bidders stacked.
    """
    groups = {}
    for result in results:
        groups.setdefault((result.spec.campaign_id, result.spec.fraction), []).append(result)
    paths = []
    for (campaign_id, fraction), members in sorted(groups.items()):
        curves = []
        for result in sorted(members, key=lambda r: (r.spec.strategy, r.spec.bidder)):
            budgets = {day.day_index: day.budget for day in result.day_reports}
            curves.append(budget_curve(step_frame(result.day_reports), budgets,
                                       f"{result.spec.strategy}-{result.spec.bidder}"))
        name = f"curves_{campaign_id}_{fraction_label(fraction)}.csv"
        paths.append(write_curves(curves, os.path.join(output_dir, name)))
    return paths


def run_grid(run_config, prepared=None):
    """
    Run every cell of the grid and write ``report.csv``, ``resolved_config.json`` and the curves.

    Cells run on a thread pool of ``run_config.workers``. A failing cell does not stop the others;
    once every healthy cell has written its output the failures are raised together.

    :param RunConfig run_config: Validated configuration.
    :param dict prepared: Already prepared campaigns by id, to skip loading and training.
    :raises ExceptionGroup: When one or more cells failed.
    :rtype: GridResult
    """
    output_dir = run_config.output_dir
    write_resolved_config(run_config, output_dir)
    prepared = dict(prepared or {})
    failures = []
    cells = []
    for source in run_config.campaigns:
        try:
            if source.campaign_id not in prepared:
                prepared[source.campaign_id] = prepare_campaign(source, run_config)
        except BidwrightError as e:
            logger.error(f"[GridRunner] Campaign '{source.campaign_id}' could not be prepared: {e}")
            failures.append(e)
            continue
        for fraction in run_config.fractions:
            for strategy in run_config.strategies:
                try:
                    fit = fit_for(prepared[source.campaign_id], strategy, fraction, run_config)
                except BidwrightError as e:
                    logger.error(f"[GridRunner] {strategy} fit for '{source.campaign_id}' at {fraction} failed: {e}")
                    failures.append(e)
                    continue
                for bidder in run_config.bidders:
                    cells.append((CellSpec(source.campaign_id, fraction, strategy, bidder), fit))

    logger.info(f"[GridRunner] Running {len(cells)} cells on {run_config.workers} workers")
    results = []
    with ThreadPoolExecutor(max_workers=run_config.workers) as executor:
        futures = [(spec, executor.submit(run_cell, prepared[spec.campaign_id], spec, fit, run_config))
                   for spec, fit in cells]
        for spec, future in futures:
            try:
                results.append(future.result())
            except Exception as e:
                logger.error(f"[GridRunner] Cell {spec.label} failed: {e}")
                failures.append(e)

    write_report(results_frame(results), os.path.join(output_dir, 'report.csv'))
    write_cell_curves(results, output_dir)
    grid = GridResult(output_dir=output_dir, results=results, failures=failures)
    if failures:
        raise ExceptionGroup(f"{len(failures)} grid cells failed", failures)
    return grid

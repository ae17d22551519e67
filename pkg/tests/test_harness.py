import json
import os

import pandas as pd
import pytest
from click.testing import CliRunner
from exceptiongroup import ExceptionGroup

from bidwright.agent.transcript import read_transcript
from bidwright.core.exceptions import ConfigError, InvalidParams
from bidwright.harness.cli import cli
from bidwright.harness.report import check_aggregation, clicks_table, compare, improvement_percent, read_report, \
    write_summary_tables
from bidwright.harness.runner import CellSpec, make_agent, run_grid
from bidwright.harness.settings import RunConfig, apply_overrides, load_run_config, read_document, \
    write_resolved_config
from bidwright.strategies.fit import StrategyFit

from conftest import tiny_run_document


def base_document(**changes):
    document = {'campaigns': [{'id': 'a', 'seed': 1}]}
    document.update(changes)
    return document


@pytest.mark.parametrize('changes, field_path', [
    ({'fractions': ['1/2', 2]}, 'fractions[1]'),
    ({'backend': {'kind': 'http', 'base_url': 'http://x', 'model': 'm', 'timeout_s': -1}}, 'backend.timeout_s'),
    ({'backend': {'kind': 'http', 'model': 'm'}}, 'backend.base_url'),
    ({'backend': 'gpt'}, 'backend.kind'),
    ({'campaigns': [{'id': 'a', 'source': 'synth'}]}, 'campaigns[0].seed'),
    ({'campaigns': [{'id': 'a', 'seed': 1}, {'id': 'b', 'source': 'logs'}]}, 'campaigns[1].paths'),
    ({'campaigns': [{'id': 'a', 'source': 'ftp'}]}, 'campaigns[0].source'),
    ({'campaigns': [{'id': 'a', 'seed': 1, 'synth': {'days': 2}}]}, 'campaigns[0].synth'),
    ({'campaigns': [{'id': 'a', 'seed': 1}, {'id': 'a', 'seed': 2}]}, 'campaigns'),
    ({'strategies': ['lp', 'ortb']}, 'strategies[1]'),
    ({'bidders': ['robot']}, 'bidders[0]'),
    ({'steps_per_day': 5}, 'steps_per_day'),
    ({'workers': 0}, 'workers'),
    ({'ctr': {'hash_bits': 40}}, 'ctr'),
    ({'ctr': {'epochs': 'many'}}, 'ctr'),
    ({'ctr': {'k': 2.5}}, 'ctr'),
    ({'ctr': [1]}, 'ctr'),
    ({'campaigns': [{'id': 'a', 'seed': 1, 'synth': {'price_median': 'high'}}]}, 'campaigns[0].synth'),
    ({'retrieval': {'recent_steps': [3]}}, 'retrieval'),
    ({'retrieval': {'recent_steps': -2}}, 'retrieval'),
    ({'decision_mode': 'vote'}, 'decision_mode'),
    ({'colour': 'blue'}, 'colour'),
])
def test_config_errors_name_the_field(changes, field_path):
    with pytest.raises(ConfigError) as info:
        RunConfig.from_dict(base_document(**changes))
    assert info.value.field_path == field_path


def test_config_requires_campaigns():
    with pytest.raises(ConfigError) as info:
        RunConfig.from_dict({})
    assert info.value.field_path == 'campaigns'


def test_no_strategy_mode_reaches_the_agent(tmp_path):
    config = RunConfig.from_dict(base_document(decision_mode='no_strategy', backend={'kind': 'stub-pacing'}))
    agent = make_agent(StrategyFit('LP', 250.0), config, str(tmp_path))

    assert agent.pipeline.decision_mode == 'no_strategy'
    header = read_transcript(os.path.join(str(tmp_path), 'transcript.jsonl'))[0]
    assert (header['backend'], header['model'], header['decision_mode']) == ('stub', 'stub-pacing', 'no_strategy')


def test_config_defaults_and_round_trip(tmp_path):
    config = RunConfig.from_dict(tiny_run_document(tmp_path, strategies=['lin', 'MCPC'], fractions=['0.125']))
    assert config.fractions == ('1/8',)
    assert config.strategies == ('LIN', 'MCPC')
    assert config.ctr.rng_seed == 5
    assert config.campaign('tiny').synth.events_per_day == 300
    assert RunConfig.from_dict(config.to_dict()) == config
    with pytest.raises(ConfigError):
        config.campaign('missing')


def test_overrides_fold_cli_flags_into_the_document():
    document = tiny_run_document('runs', strategies=['lp', 'lin'])
    baseline = apply_overrides(document, bidder='lin', seed=9, fraction='1/4', backend='stub-pacing', workers=3)
    assert baseline['strategies'] == ['lin']
    assert baseline['bidders'] == ['baseline']
    assert baseline['campaigns'][0]['seed'] == 9
    assert baseline['ctr_seed'] == 9
    assert baseline['fractions'] == ['1/4']
    assert baseline['backend'] == {'kind': 'stub-pacing'}
    assert baseline['workers'] == 3
    assert document['strategies'] == ['lp', 'lin']

    agent = apply_overrides(document, bidder='agent')
    assert agent['bidders'] == ['agent']
    assert agent['strategies'] == ['lp', 'lin']

    with pytest.raises(ConfigError):
        apply_overrides(document, campaign='other')


def test_config_files_and_default_grid(tmp_path):
    path = tmp_path / 'run.yaml'
    path.write_text('campaigns:\n  - id: y\n    seed: 3\nfractions: [1/2]\n', encoding='utf-8')
    assert read_document(str(path))['fractions'] == ['1/2']
    assert load_run_config(str(path)).fractions == ('1/2',)

    default = load_run_config(seed=4)
    assert default.campaigns[0].seed == 4
    assert default.fractions == ('1/2', '1/8', '1/32')

    (tmp_path / 'broken.yaml').write_text('campaigns: [\n', encoding='utf-8')
    with pytest.raises(ConfigError):
        read_document(str(tmp_path / 'broken.yaml'))


def test_resolved_config_loads_back(tmp_path):
    config = RunConfig.from_dict(tiny_run_document(str(tmp_path)))
    path = write_resolved_config(config, str(tmp_path))

    with open(path, encoding='utf-8') as f:
        assert '1e-06' in f.read()
    assert load_run_config(path) == config


def test_json_numbers_and_tabs(tmp_path):
    path = tmp_path / 'run.json'
    path.write_text('{\n\t"campaigns": [{"id": "a", "seed": 1}],\n\t"ctr": {"l2_linear": 1e-06, "epochs": 2.0}\n}\n',
                    encoding='utf-8')

    config = load_run_config(str(path))

    assert config.ctr.l2_linear == 1e-06
    assert config.ctr.epochs == 2
    assert isinstance(config.ctr.epochs, int)


def test_improvement_percent():
    assert improvement_percent(1182, 1252) == 5.92
    assert improvement_percent(100, 100) == 0.0
    assert improvement_percent(200, 150) == -25.0
    assert improvement_percent(0, 10) is None


def report_rows(rows):
    return pd.DataFrame([{'campaign': c, 'fraction': f, 'strategy': s, 'bidder': b, 'clicks': k}
                         for c, f, s, b, k in rows])


def test_compare_and_clicks_table():
    frame = report_rows([('1458', '1/32', 'LP', 'baseline', 100), ('1458', '1/32', 'LP', 'agent', 110),
                         ('1458', '1/2', 'LP', 'baseline', 1182), ('1458', '1/2', 'LP', 'agent', 1252),
                         ('1458', '1/8', 'LP', 'baseline', 0), ('1458', '1/8', 'LP', 'agent', 3)])

    comparison = compare(frame).set_index('fraction')
    assert comparison.loc['1/2', 'percent'] == 5.92
    assert comparison.loc['1/2', 'delta'] == 70
    assert comparison.loc['1/32', 'percent'] == 10.0
    assert comparison.loc['1/8', 'percent'] is None or pd.isna(comparison.loc['1/8', 'percent'])

    table = clicks_table(frame)
    assert list(table.columns) == ['campaign', 'strategy', 'bidder', '1/2', '1/8', '1/32']
    assert clicks_table(frame.iloc[0:0]).empty


def test_report_requires_a_finished_run(tmp_path):
    with pytest.raises(InvalidParams):
        read_report(str(tmp_path / 'report.csv'))


def test_cell_directories(tmp_path):
    spec = CellSpec('1458', '1/8', 'LP', 'agent')
    assert spec.label == '1458/1-8/LP-agent'
    assert spec.directory(str(tmp_path)) == os.path.join(str(tmp_path), '1458', '1-8', 'LP-agent')


@pytest.fixture(scope='module')
def grid(tmp_path_factory):
    out = tmp_path_factory.mktemp('grid')
    return run_grid(RunConfig.from_dict(tiny_run_document(str(out), workers=2)))


def test_grid_writes_every_cell(grid):
    out = grid.output_dir
    frame = read_report(grid.report_path)

    assert len(grid.results) == 6
    assert not grid.failures
    assert len(frame) == 6
    assert set(frame['bidder']) == {'baseline', 'agent'}
    assert check_aggregation(frame) == []
    assert os.path.isfile(os.path.join(out, 'resolved_config.json'))
    for result in grid.results:
        directory = result.spec.directory(out)
        assert os.path.isfile(os.path.join(directory, 'fit.json'))
        assert os.path.isfile(os.path.join(directory, 'steps.csv'))
        if result.spec.bidder == 'agent':
            assert os.path.isfile(os.path.join(directory, 'transcript.jsonl'))
            assert all(os.path.isfile(os.path.join(directory, f"memory_{k}.jsonl")) for k in ('env', 'bid', 'ref'))


def test_grid_budgets_hold(grid):
    frame = read_report(grid.report_path)
    assert (frame['cost'] <= frame['budget']).all()
    assert (frame['wins'] <= frame['bids']).all()
    assert (frame['fallback_steps'] == 0).all()


def test_zero_stub_agent_ties_the_baseline(grid):
    frame = read_report(grid.report_path)
    comparison = compare(frame)
    assert len(comparison) == 3
    assert (comparison['delta'] == 0).all()

    table, _ = write_summary_tables(frame, grid.output_dir)
    assert list(table.columns)[3:] == ['1/2', '1/8', '1/32']
    assert os.path.isfile(os.path.join(grid.output_dir, 'improvement.csv'))


def test_grid_curves(grid):
    curves = pd.read_csv(os.path.join(grid.output_dir, 'curves_tiny_1-8.csv'))
    assert set(curves['bidder']) == {'LP-agent', 'LP-baseline'}
    assert ((curves['remaining_share'] >= 0) & (curves['remaining_share'] <= 1)).all()


def test_grid_is_reproducible(grid, tmp_path):
    again = run_grid(RunConfig.from_dict(tiny_run_document(str(tmp_path), workers=1)))
    for first, second in zip(sorted(grid.results, key=lambda r: r.spec.label),
                             sorted(again.results, key=lambda r: r.spec.label)):
        assert first.spec == second.spec
        with open(first.steps_path, 'rb') as a, open(second.steps_path, 'rb') as b:
            assert a.read() == b.read()
        if first.transcript_path:
            with open(first.transcript_path, 'rb') as a, open(second.transcript_path, 'rb') as b:
                assert a.read() == b.read()


def test_failing_campaign_does_not_stop_the_others(tmp_path):
    document = tiny_run_document(str(tmp_path), strategies=['mcpc'], bidders=['baseline'], fractions=['1/2'])
    dead = json.loads(json.dumps(document['campaigns'][0]))
    dead.update(id='dead')
    dead['synth']['base_logit'] = -40.0
    document['campaigns'].append(dead)

    with pytest.raises(ExceptionGroup) as info:
        run_grid(RunConfig.from_dict(document))

    assert len(info.value.exceptions) == 1
    frame = read_report(str(tmp_path / 'report.csv'))
    assert list(frame['campaign']) == ['tiny']


def write_config(tmp_path, **changes):
    path = tmp_path / 'run.json'
    path.write_text(json.dumps(tiny_run_document(str(tmp_path / 'runs'), **changes)), encoding='utf-8')
    return str(path)


def test_cli_run_report_and_curves(tmp_path):
    runner = CliRunner()
    config_path = write_config(tmp_path)
    out = str(tmp_path / 'cli-run')

    result = runner.invoke(cli, ['run', '--config', config_path, '--bidder', 'lp', '--fraction', '1/8',
                                 '--out', out])
    assert result.exit_code == 0, result.output
    frame = read_report(os.path.join(out, 'report.csv'))
    assert list(frame['bidder']) == ['baseline']
    assert list(frame['fraction']) == ['1/8']

    result = runner.invoke(cli, ['report', '--out', out])
    assert result.exit_code == 0, result.output
    assert os.path.isfile(os.path.join(out, 'clicks_table.csv'))

    os.remove(os.path.join(out, 'curves_tiny_1-8.csv'))
    result = runner.invoke(cli, ['curves', '--out', out])
    assert result.exit_code == 0, result.output
    assert os.path.isfile(os.path.join(out, 'curves_tiny_1-8.csv'))


def test_cli_offline_pipeline(tmp_path):
    runner = CliRunner()
    config_path = write_config(tmp_path)

    result = runner.invoke(cli, ['prepare-data', '--config', config_path, '--out', str(tmp_path / 'data')])
    assert result.exit_code == 0, result.output
    with open(tmp_path / 'data' / 'tiny' / 'events.jsonl', encoding='utf-8') as f:
        assert sum(1 for _ in f) == 4 * 300

    result = runner.invoke(cli, ['train-ctr', '--config', config_path, '--out', str(tmp_path / 'models')])
    assert result.exit_code == 0, result.output
    assert os.path.isfile(tmp_path / 'models' / 'fm_tiny.npz')

    result = runner.invoke(cli, ['fit-strategy', '--config', config_path, '--strategy', 'lin', '--fraction', '1/8',
                                 '--models', str(tmp_path / 'models'), '--out', str(tmp_path / 'fits')])
    assert result.exit_code == 0, result.output
    with open(tmp_path / 'fits' / 'tiny' / 'fit_lin_1-8.json', encoding='utf-8') as f:
        fit = json.load(f)
    assert fit['kind'] == 'LIN'
    assert fit['lambda_base'] > 0


def test_cli_reports_errors_with_exit_status(tmp_path):
    runner = CliRunner()
    result = runner.invoke(cli, ['run', '--config', write_config(tmp_path, fractions=['2'])])
    assert result.exit_code == 1

    empty = tmp_path / 'empty'
    empty.mkdir()
    assert runner.invoke(cli, ['report', '--out', str(empty)]).exit_code == 1

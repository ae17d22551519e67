import json
import os
from dataclasses import dataclass, field, fields

import yaml

from bidwright.core.config import DEFAULT_FRACTIONS, DEFAULT_RETRIES, DEFAULT_STEPS_PER_DAY, DEFAULT_TEST_DAYS, \
    HOURS_PER_DAY, parse_document
from bidwright.core.exceptions import BidwrightError, ConfigError
from bidwright.ctr.training import TrainConfig
from bidwright.dataset.budget import parse_fraction
from bidwright.dataset.events import ColumnSchema
from bidwright.dataset.synth import SynthParams
from bidwright.memory.store import RetrievalScope
from bidwright.strategies.fit import normalize_kind

SOURCE_KINDS = ('synth', 'logs', 'events')
BIDDER_KINDS = ('baseline', 'agent')
BACKEND_KINDS = ('stub-zero', 'stub-pacing', 'http')
DECISION_MODES = ('two_step', 'direct', 'no_strategy')


def _require(data, key, path):
    if key not in data:
        raise ConfigError(f"{path}.{key}" if path else key, "is required")
    return data[key]


def _as_int(value, path, minimum=None):
    if isinstance(value, bool) or not isinstance(value, int):
        raise ConfigError(path, f"must be an integer, got {value!r}")
    if minimum is not None and value < minimum:
        raise ConfigError(path, f"must be >= {minimum}, got {value}")
    return value


def _as_list(value, path):
    if isinstance(value, (str, int, float)):
        return [value]
    if not isinstance(value, list) or not value:
        raise ConfigError(path, "must be a non-empty list")
    return value


@dataclass(frozen=True)
class CampaignSource:
    """
    Where one campaign's events come from.

    ``synth`` draws them from :class:`SynthParams` with a mandatory ``seed``; ``logs`` parses
    tab-separated files with a :class:`ColumnSchema`; ``events`` reads the canonical JSON-lines file
    written by ``prepare-data``.
    """
    campaign_id: str
    kind: str = 'synth'
    seed: int = None
    synth: SynthParams = None
    paths: tuple = ()
    schema: ColumnSchema = None
    on_error: str = 'skip'

    @classmethod
    def from_dict(cls, data, path):
        if not isinstance(data, dict):
            raise ConfigError(path, "must be an object")
        campaign_id = str(_require(data, 'id', path))
        kind = data.get('source', 'synth')
        if kind not in SOURCE_KINDS:
            raise ConfigError(f"{path}.source", f"must be one of {SOURCE_KINDS}, got {kind!r}")
        synth, paths, schema, seed = None, (), None, None
        if kind == 'synth':
            seed = _as_int(_require(data, 'seed', path), f"{path}.seed", minimum=0)
            try:
                synth = SynthParams.from_dict({**data.get('synth', {}), 'campaign_id': campaign_id})
                synth.validate()
            except (BidwrightError, TypeError) as e:
                raise ConfigError(f"{path}.synth", str(e)) from None
        else:
            paths = tuple(str(p) for p in _as_list(_require(data, 'paths', path), f"{path}.paths"))
            if kind == 'logs':
                try:
                    raw_schema = data.get('schema')
                    if raw_schema is None:
                        schema = ColumnSchema()
                    elif isinstance(raw_schema, str):
                        schema = ColumnSchema.from_file(raw_schema)
                    else:
                        schema = ColumnSchema.from_dict(raw_schema)
                except (BidwrightError, OSError, ValueError, TypeError) as e:
                    raise ConfigError(f"{path}.schema", str(e)) from None
        on_error = data.get('on_error', 'skip')
        if on_error not in ('skip', 'abort'):
            raise ConfigError(f"{path}.on_error", f"must be 'skip' or 'abort', got {on_error!r}")
        return cls(campaign_id=campaign_id, kind=kind, seed=seed, synth=synth, paths=paths, schema=schema,
                   on_error=on_error)

    def to_dict(self):
        data = {'id': self.campaign_id, 'source': self.kind, 'on_error': self.on_error}
        if self.kind == 'synth':
            synth = {f.name: getattr(self.synth, f.name) for f in fields(self.synth) if f.name != 'campaign_id'}
            synth['hour_weights'] = list(synth['hour_weights'])
            data.update(seed=self.seed, synth=synth)
        else:
            data['paths'] = list(self.paths)
            if self.schema is not None:
                data['schema'] = self.schema.to_dict()
        return data


@dataclass(frozen=True)
class RunConfig:
    """
    One experiment grid: campaigns x budget fractions x strategies x bidders.
    """
    campaigns: tuple
    fractions: tuple = DEFAULT_FRACTIONS
    strategies: tuple = ('LP',)
    bidders: tuple = BIDDER_KINDS
    backend: dict = field(default_factory=lambda: {'kind': 'stub-zero'})
    steps_per_day: int = DEFAULT_STEPS_PER_DAY
    test_days: int = DEFAULT_TEST_DAYS
    ctr: TrainConfig = field(default_factory=TrainConfig)
    ctr_seed: int = 0
    retrieval: RetrievalScope = field(default_factory=RetrievalScope)
    retries: int = DEFAULT_RETRIES
    decision_mode: str = 'two_step'
    templates_dir: str = None
    lp_strict: bool = False
    output_dir: str = 'runs'
    workers: int = 1

    @classmethod
    def from_dict(cls, data):
        """
        Validate a configuration document.

        :raises ConfigError: With the dotted path of the first offending field.
        """
        if not isinstance(data, dict):
            raise ConfigError('<root>', "configuration must be an object")
        unknown = set(data) - {f.name for f in fields(cls)}
        if unknown:
            raise ConfigError(sorted(unknown)[0], "unknown field")

        campaigns = tuple(CampaignSource.from_dict(c, f"campaigns[{i}]")
                          for i, c in enumerate(_as_list(_require(data, 'campaigns', ''), 'campaigns')))
        ids = [c.campaign_id for c in campaigns]
        if len(set(ids)) != len(ids):
            raise ConfigError('campaigns', f"campaign ids must be unique, got {ids}")

        fractions = []
        for i, value in enumerate(_as_list(data.get('fractions', list(DEFAULT_FRACTIONS)), 'fractions')):
            try:
                fractions.append(str(parse_fraction(value)))
            except BidwrightError as e:
                raise ConfigError(f"fractions[{i}]", str(e)) from None

        strategies = []
        for i, value in enumerate(_as_list(data.get('strategies', ['LP']), 'strategies')):
            try:
                strategies.append(normalize_kind(value))
            except BidwrightError as e:
                raise ConfigError(f"strategies[{i}]", str(e)) from None

        bidders = [str(b) for b in _as_list(data.get('bidders', list(BIDDER_KINDS)), 'bidders')]
        for i, bidder in enumerate(bidders):
            if bidder not in BIDDER_KINDS:
                raise ConfigError(f"bidders[{i}]", f"must be one of {BIDDER_KINDS}, got {bidder!r}")

        backend = data.get('backend', {'kind': 'stub-zero'})
        backend = {'kind': backend} if isinstance(backend, str) else backend
        if not isinstance(backend, dict) or backend.get('kind') not in BACKEND_KINDS:
            raise ConfigError('backend.kind', f"must be one of {BACKEND_KINDS}")
        if backend['kind'] == 'http':
            for key in ('base_url', 'model'):
                if not backend.get(key):
                    raise ConfigError(f"backend.{key}", "is required for the http backend")
            timeout = backend.get('timeout_s', 60)
            if isinstance(timeout, bool) or not isinstance(timeout, (int, float)) or timeout <= 0:
                raise ConfigError('backend.timeout_s', f"must be a positive number, got {timeout!r}")

        steps_per_day = _as_int(data.get('steps_per_day', DEFAULT_STEPS_PER_DAY), 'steps_per_day', minimum=1)
        if HOURS_PER_DAY % steps_per_day:
            raise ConfigError('steps_per_day', f"must divide {HOURS_PER_DAY}, got {steps_per_day}")

        ctr_seed = _as_int(data.get('ctr_seed', 0), 'ctr_seed', minimum=0)
        try:
            ctr = TrainConfig.from_dict({**data.get('ctr', {}), 'rng_seed': ctr_seed})
            ctr.validate()
        except (BidwrightError, TypeError) as e:
            raise ConfigError('ctr', str(e)) from None
        try:
            retrieval = RetrievalScope.from_dict(data.get('retrieval', {}))
        except BidwrightError as e:
            raise ConfigError('retrieval', str(e)) from None

        decision_mode = data.get('decision_mode', 'two_step')
        if decision_mode not in DECISION_MODES:
            raise ConfigError('decision_mode', f"must be one of {DECISION_MODES}, got {decision_mode!r}")

        return cls(
            campaigns=campaigns,
            fractions=tuple(fractions),
            strategies=tuple(strategies),
            bidders=tuple(bidders),
            backend=dict(backend),
            steps_per_day=steps_per_day,
            test_days=_as_int(data.get('test_days', DEFAULT_TEST_DAYS), 'test_days', minimum=1),
            ctr=ctr,
            ctr_seed=ctr_seed,
            retrieval=retrieval,
            retries=_as_int(data.get('retries', DEFAULT_RETRIES), 'retries', minimum=0),
            decision_mode=decision_mode,
            templates_dir=data.get('templates_dir'),
            lp_strict=bool(data.get('lp_strict', False)),
            output_dir=str(data.get('output_dir', 'runs')),
            workers=_as_int(data.get('workers', 1), 'workers', minimum=1),
        )

    def to_dict(self):
        ctr = self.ctr.to_dict()
        ctr.pop('rng_seed')
        return {
            'campaigns': [c.to_dict() for c in self.campaigns],
            'fractions': list(self.fractions),
            'strategies': list(self.strategies),
            'bidders': list(self.bidders),
            'backend': dict(self.backend),
            'steps_per_day': self.steps_per_day,
            'test_days': self.test_days,
            'ctr': ctr,
            'ctr_seed': self.ctr_seed,
            'retrieval': {f.name: getattr(self.retrieval, f.name) for f in fields(self.retrieval)},
            'retries': self.retries,
            'decision_mode': self.decision_mode,
            'templates_dir': self.templates_dir,
            'lp_strict': self.lp_strict,
            'output_dir': self.output_dir,
            'workers': self.workers,
        }

    def campaign(self, campaign_id):
        for source in self.campaigns:
            if source.campaign_id == campaign_id:
                return source
        raise ConfigError('campaigns', f"no campaign with id {campaign_id!r}")


def default_document(seed=0):
    """
    A single synthetic campaign at the default budget fractions, used when no config file is given.
    """
    return {'campaigns': [{'id': 'synth', 'source': 'synth', 'seed': seed}], 'ctr_seed': seed}


def apply_overrides(document, campaign=None, fraction=None, bidder=None, strategy=None, backend=None, seed=None,
                    out=None, workers=None):
    """
    Fold CLI flags into a configuration document before validation.

    ``bidder`` is ``mcpc``, ``lin`` or ``lp`` for that baseline alone, or ``agent`` for the agent on
    the configured strategies.
    """
    document = json.loads(json.dumps(document))
    if campaign is not None:
        document['campaigns'] = [c for c in document.get('campaigns', []) if str(c.get('id')) == campaign]
        if not document['campaigns']:
            raise ConfigError('campaigns', f"no campaign with id {campaign!r}")
    if fraction is not None:
        document['fractions'] = [fraction]
    if strategy is not None:
        document['strategies'] = [strategy]
    if bidder is not None:
        if bidder == 'agent':
            document['bidders'] = ['agent']
        else:
            document['strategies'] = [bidder]
            document['bidders'] = ['baseline']
    if backend is not None:
        current = document.get('backend', {})
        current = current if isinstance(current, dict) else {}
        document['backend'] = {**current, 'kind': backend}
    if seed is not None:
        document['ctr_seed'] = seed
        for campaign_doc in document.get('campaigns', []):
            if campaign_doc.get('source', 'synth') == 'synth':
                campaign_doc['seed'] = seed
    if out is not None:
        document['output_dir'] = out
    if workers is not None:
        document['workers'] = workers
    return document


def read_document(path):
    try:
        with open(path, 'r', encoding='utf-8') as f:
            document = parse_document(f.read())
    except OSError as e:
        raise ConfigError(path, f"cannot read configuration: {e}") from None
    except yaml.YAMLError as e:
        raise ConfigError(path, f"not valid JSON or YAML: {e}") from None
    return document or {}


def load_run_config(path=None, **overrides):
    """
    Read, override and validate a run configuration.

    :param str path: JSON (or YAML) document; the default synthetic grid when None.
    :param overrides: CLI flags, see :func:`apply_overrides`.
    :rtype: RunConfig
    """
    document = read_document(path) if path else default_document(overrides.get('seed') or 0)
    return RunConfig.from_dict(apply_overrides(document, **overrides))


def write_resolved_config(run_config, directory):
    os.makedirs(directory, exist_ok=True)
    path = os.path.join(directory, 'resolved_config.json')
    with open(path, 'w', encoding='utf-8') as f:
        json.dump(run_config.to_dict(), f, indent=2, sort_keys=True)
    return path

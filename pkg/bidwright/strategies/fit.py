import json
import math
import os
from dataclasses import dataclass, field

from bidwright.core import logger
from bidwright.core.exceptions import InvalidParams
from bidwright.dataset.budget import scaled_budget

KINDS = ('MCPC', 'LIN', 'LP')


@dataclass(frozen=True)
class StrategyFit:
    """
    An expert strategy reduced to its base scaling factor: bid = pCTR * lambda_base.

    :param str kind: One of MCPC, LIN, LP.
    :param float lambda_base: Currency per unit pCTR.
    :param dict meta: Kind-specific record of how the factor was found.
    :param str fitted_for_fraction: Budget fraction the fit was made for, e.g. ``1/8``; None when
        the fit does not depend on the budget.
    """
    kind: str
    lambda_base: float
    meta: dict = field(default_factory=dict)
    fitted_for_fraction: str = None

    def __post_init__(self):
        if self.kind not in KINDS:
            raise InvalidParams(f"unknown strategy kind {self.kind!r}, expected one of {KINDS}")
        if not (self.lambda_base > 0 and math.isfinite(self.lambda_base)):
            raise InvalidParams(f"{self.kind} lambda_base must be positive and finite, got {self.lambda_base}")

    def to_dict(self):
        return {'kind': self.kind, 'lambda_base': self.lambda_base, 'meta': dict(self.meta),
                'fitted_for_fraction': self.fitted_for_fraction}

    @classmethod
    def from_dict(cls, data):
        try:
            return cls(kind=str(data['kind']).upper(), lambda_base=float(data['lambda_base']),
                       meta=dict(data.get('meta') or {}), fitted_for_fraction=data.get('fitted_for_fraction'))
        except KeyError as e:
            raise InvalidParams(f"strategy fit record is missing {e}") from None


def base_bid(fit, pctr):
    """
    Integer bid of the expert strategy for one impression, ``floor(pCTR * lambda_base)``.
    """
    return int(math.floor(pctr * fit.lambda_base))


def normalize_kind(kind):
    upper = str(kind).upper()
    if upper not in KINDS:
        raise InvalidParams(f"unknown strategy kind {kind!r}, expected one of {', '.join(k.lower() for k in KINDS)}")
    return upper


def train_budget_for(dataset, fraction):
    """
    Budget for replaying the train log when fitting for a test budget fraction.
    """
    return scaled_budget(dataset.total_train_cost, fraction)


def fit_strategy(kind, dataset, model=None, train_budget=None, fraction=None, **options):
    """
    Fit one expert strategy by name.

    :param str kind: ``mcpc``, ``lin`` or ``lp``, any case.
    :param CampaignDataset dataset: Campaign with its train events.
    :param FMModel model: CTR model; LIN and LP need it.
    :param int train_budget: Replay budget on the train log; derived from ``fraction`` when None.
    :param fraction: Budget fraction the fit is for, recorded on the result.
    :param options: Passed to the kind's fitter (``grid`` for LIN, ``strict`` for LP).
    :rtype: StrategyFit
    """
    from bidwright.strategies.lin import fit_lin
    from bidwright.strategies.lp import fit_lp
    from bidwright.strategies.mcpc import fit_mcpc

    kind = normalize_kind(kind)
    if train_budget is None and fraction is not None:
        train_budget = train_budget_for(dataset, fraction)
    if kind == 'MCPC':
        fit = fit_mcpc(dataset)
    elif model is None:
        raise InvalidParams(f"{kind} needs a CTR model")
    elif kind == 'LIN':
        fit = fit_lin(dataset, model, train_budget, **options)
    else:
        fit = fit_lp(dataset, model, train_budget, **options)
    if fraction is not None:
        fit = StrategyFit(kind=fit.kind, lambda_base=fit.lambda_base, meta=fit.meta,
                          fitted_for_fraction=str(fraction))
    logger.info(f"[StrategyFit] {fit.kind} lambda_base={fit.lambda_base:.4f} for fraction {fraction}")
    return fit


def save_fit(fit, path):
    os.makedirs(os.path.dirname(os.path.abspath(path)), exist_ok=True)
    with open(path, 'w', encoding='utf-8') as f:
        json.dump(fit.to_dict(), f, indent=2, sort_keys=True)


def load_fit(path):
    with open(path, 'r', encoding='utf-8') as f:
        return StrategyFit.from_dict(json.load(f))

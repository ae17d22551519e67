from dataclasses import dataclass
from fractions import Fraction

from bidwright.core.exceptions import InvalidParams


@dataclass(frozen=True)
class BudgetPlan:
    fraction: Fraction
    per_day_budgets: tuple

    @property
    def K(self):
        return len(self.per_day_budgets)

    @property
    def total(self):
        return sum(self.per_day_budgets)


def parse_fraction(value):
    """
    Accept ``"1/8"``, ``0.125`` or a :class:`~fractions.Fraction` and return an exact fraction in (0, 1].
    """
    try:
        fraction = Fraction(str(value)) if not isinstance(value, Fraction) else value
    except (ValueError, ZeroDivisionError):
        raise InvalidParams(f"not a fraction: {value!r}") from None
    if not 0 < fraction <= 1:
        raise InvalidParams(f"budget fraction must be in (0, 1], got {value!r}")
    return fraction


def fraction_label(fraction):
    """
    File-name friendly label, ``1/8`` -> ``1-8``.
    """
    fraction = parse_fraction(fraction)
    return f"{fraction.numerator}-{fraction.denominator}"


def scaled_budget(amount, fraction):
    """
    ``floor(fraction * amount)`` in exact integer arithmetic.
    """
    fraction = parse_fraction(fraction)
    return (int(amount) * fraction.numerator) // fraction.denominator


def plan_budget(dataset, fraction):
    """
    Daily budgets proportional to each test day's historical cost, ``B_k ~ fraction * day_cost_k``.

    Each day gets the floor of its exact share; the few currency units lost to flooring are handed
    back one each to the days with the largest remainders (earlier day first on ties), so
    ``sum(B_k) == floor(fraction * total_test_cost)`` exactly and no ``B_k`` exceeds its day's cost.

    :param CampaignDataset dataset: The campaign.
    :param fraction: Share of the historical test cost, in (0, 1].
    :rtype: BudgetPlan
    """
    fraction = parse_fraction(fraction)
    shares = [cost * fraction for cost in dataset.day_costs()]
    budgets = [int(share) for share in shares]
    missing = scaled_budget(dataset.total_test_cost, fraction) - sum(budgets)
    by_remainder = sorted(range(len(shares)), key=lambda k: (-(shares[k] - budgets[k]), k))
    for k in by_remainder[:missing]:
        budgets[k] += 1
    return BudgetPlan(fraction=fraction, per_day_budgets=tuple(budgets))

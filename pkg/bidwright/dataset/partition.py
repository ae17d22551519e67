from dataclasses import dataclass, replace

from bidwright.core import logger
from bidwright.core.config import DEFAULT_STEPS_PER_DAY, HOURS_PER_DAY
from bidwright.core.exceptions import InsufficientDays, InvalidParams


@dataclass(frozen=True)
class DayPartition:
    """
    One test day cut into ``T`` step buckets. Bucket ``t`` holds the events whose hour maps to
    step ``t``, in log order.
    """
    day_index: int
    steps: tuple
    day_cost: int

    @property
    def step_count(self):
        return len(self.steps)

    @property
    def event_count(self):
        return sum(len(step) for step in self.steps)

    def events(self):
        return [event for step in self.steps for event in step]


@dataclass(frozen=True)
class CampaignDataset:
    campaign_id: str
    train_events: tuple
    test_days: tuple
    total_test_cost: int
    total_train_cost: int
    total_train_clicks: int
    theta_0: float = None

    @property
    def steps_per_day(self):
        return self.test_days[0].step_count if self.test_days else DEFAULT_STEPS_PER_DAY

    def day_costs(self):
        return [day.day_cost for day in self.test_days]

    def with_theta_0(self, theta_0):
        return replace(self, theta_0=float(theta_0))


def step_of_hour(hour, steps_per_day):
    """
    Step bucket index for an hour when the day is cut into ``steps_per_day`` equal steps.
    """
    return hour * steps_per_day // HOURS_PER_DAY


def partition_day(day_index, events, steps_per_day=DEFAULT_STEPS_PER_DAY):
    """
    Bucket one day's events by step, keeping log order inside each bucket.

    :param int day_index: The day the events belong to.
    :param list events: That day's events in log order.
    :param int steps_per_day: T, which must divide 24.
    :rtype: DayPartition
    """
    if steps_per_day < 1 or HOURS_PER_DAY % steps_per_day:
        raise InvalidParams(f"steps per day must divide {HOURS_PER_DAY}, got {steps_per_day}")
    buckets = [[] for _ in range(steps_per_day)]
    for event in events:
        buckets[step_of_hour(event.hour, steps_per_day)].append(event)
    return DayPartition(day_index=day_index, steps=tuple(tuple(b) for b in buckets),
                        day_cost=sum(e.market_price for e in events))


def split_and_partition(events, test_day_count=3, steps_per_day=DEFAULT_STEPS_PER_DAY, campaign_id=None):
    """
    Split a campaign's events into a train period and the last ``test_day_count`` calendar days.

    Events are stably ordered by ``(day_index, hour)`` so every step bucket is a contiguous slice
    of the day.

    :param list events: All events of one campaign.
    :param int test_day_count: Number of chronologically last days held out for testing.
    :param int steps_per_day: T.
    :param str campaign_id: Defaults to the campaign id of the first event.
    :raises InsufficientDays: When the events span fewer than ``test_day_count + 1`` days.
    :rtype: CampaignDataset
    """
    if test_day_count < 1:
        raise InvalidParams(f"test_day_count must be >= 1, got {test_day_count}")
    ordered = sorted(events, key=lambda e: (e.day_index, e.hour))
    days = sorted({e.day_index for e in ordered})
    if len(days) < test_day_count + 1:
        raise InsufficientDays(f"need at least {test_day_count + 1} distinct days, found {len(days)}")

    test_day_set = set(days[-test_day_count:])
    train_events = tuple(e for e in ordered if e.day_index not in test_day_set)
    by_day = {day: [] for day in days[-test_day_count:]}
    for event in ordered:
        if event.day_index in test_day_set:
            by_day[event.day_index].append(event)

    test_days = tuple(partition_day(day, by_day[day], steps_per_day) for day in sorted(by_day))
    if campaign_id is None:
        campaign_id = ordered[0].campaign_id if ordered else ''

    dataset = CampaignDataset(
        campaign_id=campaign_id,
        train_events=train_events,
        test_days=test_days,
        total_test_cost=sum(day.day_cost for day in test_days),
        total_train_cost=sum(e.market_price for e in train_events),
        total_train_clicks=sum(e.click for e in train_events),
    )
    logger.info(f"[Partition] Campaign '{campaign_id}': {len(days) - test_day_count} train days "
                f"({len(train_events)} events), {test_day_count} test days, T={steps_per_day}")
    return dataset

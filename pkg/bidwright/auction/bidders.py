from bidwright.core.exceptions import InvalidParams


class Bidder:
    """
    Per-step decision policy queried by :func:`bidwright.auction.replay.run_day`.

    A bidder only ever receives the running :class:`~bidwright.auction.replay.EnvState` and the
    reports of steps already settled; it never sees upcoming impressions or their labels.

    :param float lambda_base: The expert strategy's scaling factor the bidder adjusts around.
    :param str name: Label used in logs and reports.
    """

    def __init__(self, lambda_base, name=None):
        if not lambda_base > 0:
            raise InvalidParams(f"lambda_base must be positive, got {lambda_base}")
        self.lambda_base = float(lambda_base)
        self.name = name or type(self).__name__

    def start_day(self, state):
        pass

    def decide(self, state, history):
        """
        :param EnvState state: Aggregates of the day up to the current step.
        :param tuple history: StepReports of the earlier steps of this day.
        :return: lambda_t, a positive factor.
        :rtype: float
        """
        raise NotImplementedError

    def adjustment_for(self, lambda_t):
        return lambda_t / self.lambda_base - 1.0

    def observe(self, report, state):
        pass

    def end_day(self, state, history):
        pass


class FixedLambdaBidder(Bidder):
    """
    Baseline that bids with the expert strategy's factor at every step.
    """

    def decide(self, state, history):
        return self.lambda_base

    def adjustment_for(self, lambda_t):
        return 0.0

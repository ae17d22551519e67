from bidwright.agent.transcript import TranscriptWriter
from bidwright.auction.bidders import Bidder
from bidwright.core import logger
from bidwright.memory.store import MemoryBank


class AgentBidder(Bidder):
    """
    Bidder that asks a language model for the step adjustment a_t and bids with
    ``lambda_t = lambda_base * (1 + a_t)``.

    Before each step it retrieves recent memories, summarizes them, reasons over the adjustment
    bins and picks an action. After each step it stores the resulting environment snapshot and
    its own decision; after the last step of a day it writes one reflection per memory kind.

    :param float lambda_base: Expert factor.
    :param DecisionPipeline pipeline: Prompting pipeline.
    :param MemoryBank memory: Memory stores of this run.
    :param TranscriptWriter transcript: Where decisions are recorded.
    """

    def __init__(self, lambda_base, pipeline, memory=None, transcript=None, name='agent'):
        super().__init__(lambda_base, name=name)
        self.pipeline = pipeline
        self.memory = memory or MemoryBank()
        self.transcript = transcript or TranscriptWriter()
        self._pending = None
        self.fallback_steps = 0
        self.transcript.write_header({**pipeline.backend.describe(), 'decision_mode': pipeline.decision_mode,
                                      'strategy_kind': pipeline.strategy_kind, 'lambda_base': self.lambda_base})

    def decide(self, state, history):
        memories = self.memory.retrieve((state.day_index, state.step_index))
        decision = self.pipeline.decide(state, memories, self.lambda_base)
        self._pending = decision
        self.transcript.write_step(state.day_index, state.step_index, self.lambda_base, decision.lambda_t,
                                   decision.trace)
        if decision.action.fallback:
            self.fallback_steps += 1
            logger.warning(f"[AgentBidder] Day {state.day_index} step {state.step_index}: fallback action")
        logger.debug(f"[AgentBidder] Day {state.day_index} step {state.step_index}: "
                     f"a_t={decision.action.adjustment:+.2f} lambda_t={decision.lambda_t:.4f}")
        return decision.lambda_t

    def adjustment_for(self, lambda_t):
        return self._pending.action.adjustment if self._pending else 0.0

    def observe(self, report, state):
        hidden = self.pipeline.hidden_state_keys
        self.memory['env'].record(report.day_index, report.step_index,
                                  {k: v for k, v in state.to_dict().items() if k not in hidden})
        action = self._pending.action
        record = {
            'lambda_t': report.lambda_t,
            'adjustment': action.adjustment,
            'reason': action.reason,
            'outcome': {k: v for k, v in report.to_dict().items() if k not in hidden},
        }
        self.memory['bid'].record(report.day_index, report.step_index,
                                  {k: v for k, v in record.items() if k not in hidden})
        self._pending = None

    def end_day(self, state, history):
        day = state.day_index
        day_memories = {
            'bid': self.memory['bid'].entries_for_day(day),
            'env': self.memory['env'].entries_for_day(day),
            'ref': self.memory['ref'].retrieve(self.memory.scope, (day, 0)),
        }
        reflections, calls = self.pipeline.reflect(day_memories, state)
        for kind, (text, degraded) in reflections.items():
            self.memory['ref'].record(day, None, {'about': kind, 'reflection': text, 'degraded': degraded})
        self.transcript.write_reflection(day, {
            'calls': calls,
            'reflections': {kind: text for kind, (text, _) in reflections.items()},
            'degraded': [kind for kind, (_, degraded) in reflections.items() if degraded],
        })
        logger.info(f"[AgentBidder] Day {day} reflected: {state.clicks} clicks, "
                    f"{state.total_cost}/{state.total_budget} spent")

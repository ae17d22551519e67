import json
from dataclasses import dataclass, replace

from bidwright.agent.backends import CompletionRequest
from bidwright.agent.parsing import Action, FactorChoice, parse_action, parse_bid_factor, parse_insight, \
    parse_reflection, parse_summary
from bidwright.agent.templates import load_templates
from bidwright.core import logger
from bidwright.core.config import DEFAULT_RETRIES
from bidwright.core.exceptions import BackendError, InvalidParams

DECISION_MODES = ('two_step', 'direct', 'no_strategy')
SUMMARY_ORDER = ('bid', 'env', 'ref')
REMINDER = "Return only the JSON object in the requested format, with no other text."
FALLBACK_REASON = 'fallback: unparseable output'
SUMMARY_CAP = 2000
FACTOR_SPAN = 10.0
HIDDEN_WITHOUT_STRATEGY = ('lambda_base', 'last_adjustment', 'adjustment')


@dataclass(frozen=True)
class StepDecision:
    action: Action
    lambda_t: float
    trace: dict


def render_entries(entries):
    if not entries:
        return '(no records)'
    lines = []
    for entry in entries:
        where = f"day {entry.day}" if entry.step is None else f"day {entry.day} step {entry.step}"
        lines.append(f"{where}: {json.dumps(entry.payload, sort_keys=True, default=str)}")
    return '\n'.join(lines)


def environment_status(state, hidden=()):
    data = {key: value for key, value in state.to_dict().items() if key not in hidden}
    data['budget_spent_share'] = state.total_cost / state.total_budget if state.total_budget else None
    data['day_elapsed_share'] = state.step_index / state.step_count if state.step_count else None
    return json.dumps(data, indent=2, sort_keys=True)


def market_reference(state):
    """
    Going prices in pCTR terms for prompts that carry no expert factor.
    """
    if not state.bids_made:
        return "No impression has been seen yet today."
    lines = [f"{state.bids_made} impressions seen today, mean pCTR {state.mean_value_seen:.6f}."]
    if state.wins and state.mean_value_won > 0:
        lines.append(f"{state.wins} won at a mean price of {state.avg_market_price_seen:.2f} with mean pCTR "
                     f"{state.mean_value_won:.6f}; a bid factor of "
                     f"{state.avg_market_price_seen / state.mean_value_won:.2f} bids that price at that pCTR.")
    else:
        lines.append("None has been won yet.")
    return '\n'.join(lines)


class DecisionPipeline:
    """
    Prompts the backend through summary, insight and action for one step, and through daily reflection.

    Each prompt is retried ``retries`` times with a reminder appended when the backend fails or
    the answer does not fit its schema; after that a degraded substitute is used so a decision
    is always produced.

    :param LLMBackend backend: Language model.
    :param dict templates: Prompt templates by name; the shipped ones when None.
    :param int retries: Re-prompts per call after the first attempt.
    :param str decision_mode: ``two_step`` (insight then action), ``direct`` (action only) or
        ``no_strategy`` (the model names the bid factor itself, without the expert factor).
    :param str strategy_kind: Name of the expert strategy, quoted in the bidding reference.
    :param float factor_span: In ``no_strategy`` mode the chosen factor is clamped to within this
        multiple of the base factor either way.
    """

    def __init__(self, backend, templates=None, retries=DEFAULT_RETRIES, decision_mode='two_step',
                 strategy_kind='', temperature=0.0, max_tokens=None, summary_cap=SUMMARY_CAP,
                 factor_span=FACTOR_SPAN):
        if decision_mode not in DECISION_MODES:
            raise InvalidParams(f"unknown decision mode {decision_mode!r}, expected one of {DECISION_MODES}")
        if retries < 0:
            raise InvalidParams(f"retries must be >= 0, got {retries}")
        if not factor_span > 1:
            raise InvalidParams(f"factor_span must be > 1, got {factor_span}")
        self.backend = backend
        self.templates = templates or load_templates()
        self.retries = retries
        self.decision_mode = decision_mode
        self.strategy_kind = strategy_kind
        self.temperature = temperature
        self.max_tokens = max_tokens
        self.summary_cap = summary_cap
        self.factor_span = factor_span

    @property
    def hidden_state_keys(self):
        return HIDDEN_WITHOUT_STRATEGY if self.decision_mode == 'no_strategy' else ()

    def _ask(self, task, prompt, parser, context, calls):
        for attempt in range(self.retries + 1):
            text = prompt if attempt == 0 else f"{prompt}\n\n{REMINDER}"
            call = {'task': task, 'attempt': attempt, 'prompt': text, 'completion': None, 'error': None}
            if 'kind' in context:
                call['kind'] = context['kind']
            try:
                completion = self.backend.complete(CompletionRequest(
                    prompt=text, task=task, temperature=self.temperature, max_tokens=self.max_tokens,
                    context=context))
            except BackendError as e:
                call['error'] = f"{type(e).__name__}: {e}"
            else:
                call['completion'] = completion
                # Whatever the model wrote, a parser failure only costs this attempt.
                try:
                    return parser(completion)
                except Exception as e:
                    call['error'] = f"{type(e).__name__}: {e}"
            finally:
                exchange = getattr(self.backend, 'last_exchange', None)
                if exchange is not None:
                    call['http'] = exchange
                calls.append(call)
        logger.warning(f"[DecisionPipeline] '{task}' gave no usable answer after {self.retries + 1} attempts")
        return None

    def bidding_reference(self, lambda_base, state=None):
        """
        What the expert strategy contributes to a prompt: the suggested factor and, once the day has
        settled impressions, the click value the CTR model assigned to what was seen and bought.
        """
        name = f"The {self.strategy_kind} strategy" if self.strategy_kind else "The bidding algorithm"
        lines = [f"{name} suggests the bidding factor {lambda_base:.6f}. "
                 f"Each impression is bid at its predicted click-through rate times the bidding factor."]
        if state is not None and state.bids_made:
            lines.append(f"Predicted clicks over the {state.bids_made} impressions seen today: "
                         f"{state.value_seen:.4f} (mean pCTR {state.mean_value_seen:.6f}).")
            lines.append(f"Predicted clicks over the {state.wins} impressions won today: "
                         f"{state.value_won:.4f} (mean pCTR {state.mean_value_won:.6f}).")
            if state.value_per_cost is not None:
                lines.append(f"Predicted clicks bought per unit of cost: {state.value_per_cost:.6f}.")
        return '\n'.join(lines)

    def summarize(self, memories, state, calls):
        """
        One summary per memory kind, concatenated under kind headers in the order bid, env, ref.

        :return: The joined summary and the kinds that fell back to their literal records.
        :rtype: tuple[str, list]
        """
        status = environment_status(state, self.hidden_state_keys)
        parts, degraded = [], []
        for kind in SUMMARY_ORDER:
            entries = memories.get(kind, [])
            rendered = render_entries(entries)
            prompt = self.templates['sum'].render(memory_kind=kind, entries=rendered, environment_status=status)
            context = {'kind': kind, 'entries': [e.to_dict() for e in entries], 'state': state.to_dict()}
            summary = self._ask('sum', prompt, parse_summary, context, calls)
            if summary is None:
                degraded.append(kind)
                summary = rendered[:self.summary_cap]
            parts.append(f"## {kind} memory\n{summary}")
        return '\n\n'.join(parts), degraded

    def insight(self, state, summary, lambda_base, calls):
        prompt = self.templates['ins'].render(history=summary,
                                              bidding_reference=self.bidding_reference(lambda_base, state),
                                              environment_status=environment_status(state))
        analyses = self._ask('ins', prompt, parse_insight, {'state': state.to_dict()}, calls)
        return (analyses, False) if analyses is not None else ({}, True)

    def act(self, state, summary, insights, lambda_base, calls):
        rendered = json.dumps(insights, indent=2) if insights else '(no analysis available)'
        prompt = self.templates['act'].render(history=summary, insights=rendered,
                                              bidding_reference=self.bidding_reference(lambda_base, state),
                                              environment_status=environment_status(state))
        action = self._ask('act', prompt, parse_action, {'state': state.to_dict()}, calls)
        return action or Action(adjustment=0.0, reason=FALLBACK_REASON, fallback=True)

    def choose_factor(self, state, summary, lambda_base, calls):
        """
        The bid factor named by the model, clamped to ``factor_span`` around ``lambda_base``.

        The prompt never shows ``lambda_base``; an unusable answer falls back to it.

        :rtype: FactorChoice
        """
        prompt = self.templates['act_free'].render(
            history=summary, market_reference=market_reference(state),
            environment_status=environment_status(state, HIDDEN_WITHOUT_STRATEGY))
        choice = self._ask('factor', prompt, parse_bid_factor, {'state': state.to_dict()}, calls)
        if choice is None:
            return FactorChoice(bid_factor=lambda_base, reason=FALLBACK_REASON, fallback=True)
        low, high = lambda_base / self.factor_span, lambda_base * self.factor_span
        bounded = min(max(choice.bid_factor, low), high)
        if bounded != choice.bid_factor:
            logger.warning(f"[DecisionPipeline] Bid factor {choice.bid_factor:.6g} clamped to {bounded:.6g}")
        return replace(choice, bid_factor=bounded, adjustment=bounded / lambda_base - 1.0)

    def decide(self, state, memories, lambda_base):
        """
        Summary, optional insight and action for the step at ``state.step_index``. In ``no_strategy``
        mode the action is a :class:`FactorChoice` and ``lambda_t`` is its factor.

        :param EnvState state: Aggregates before the step.
        :param dict memories: Retrieved entries by memory kind.
        :param float lambda_base: Expert factor.
        :rtype: StepDecision
        """
        calls = []
        summary, summary_degraded = self.summarize(memories, state, calls)
        insights, insight_degraded = {}, False
        if self.decision_mode == 'no_strategy':
            action = self.choose_factor(state, summary, lambda_base, calls)
            lambda_t = action.bid_factor
        else:
            if self.decision_mode == 'two_step':
                insights, insight_degraded = self.insight(state, summary, lambda_base, calls)
            action = self.act(state, summary, insights, lambda_base, calls)
            lambda_t = lambda_base * (1.0 + action.adjustment)
        trace = {
            'decision_mode': self.decision_mode,
            'calls': calls,
            'summary': summary,
            'insight': insights,
            'action': action.to_dict(),
            'degraded': {'summary': summary_degraded, 'insight': insight_degraded, 'action': action.fallback},
        }
        return StepDecision(action=action, lambda_t=lambda_t, trace=trace)

    def reflect(self, day_memories, state):
        """
        One reflection per memory kind over the finished day.

        :param dict day_memories: The day's entries by memory kind.
        :param EnvState state: End-of-day aggregates.
        :return: Reflection text and degraded flag by kind, plus the call trace.
        :rtype: tuple[dict, list]
        """
        calls, reflections = [], {}
        status = environment_status(state, self.hidden_state_keys)
        for kind in SUMMARY_ORDER:
            entries = day_memories.get(kind, [])
            prompt = self.templates['ref'].render(memory_kind=kind, entries=render_entries(entries), day_summary=status)
            context = {'kind': kind, 'entries': [e.to_dict() for e in entries], 'state': state.to_dict()}
            text = self._ask('ref', prompt, parse_reflection, context, calls)
            if text is None:
                raw = {'records': len(entries), 'clicks': state.clicks, 'cost': state.total_cost,
                       'budget': state.total_budget, 'wins': state.wins, 'bids': state.bids_made}
                reflections[kind] = (f"raw aggregates: {json.dumps(raw, sort_keys=True)}", True)
            else:
                reflections[kind] = (text, False)
        return reflections, calls

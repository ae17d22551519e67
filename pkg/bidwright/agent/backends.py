import json
import os
from dataclasses import dataclass, field

import requests

from bidwright.agent.parsing import BIN_KEYS, snap_to_bin
from bidwright.core import logger
from bidwright.core.exceptions import BackendError, InvalidParams

PACING_GAIN = 0.45
STUB_POLICIES = ('zero', 'pacing')


@dataclass(frozen=True)
class CompletionRequest:
    """
    One prompt sent to a language model.

    :param str prompt: Rendered user prompt.
    :param str task: ``sum``, ``ins``, ``act``, ``factor`` or ``ref``.
    :param dict context: Structured inputs of the prompt; offline backends read it, it is never
        sent over the wire.
    """
    prompt: str
    task: str
    temperature: float = 0.0
    max_tokens: int = None
    context: dict = field(default_factory=dict)


class LLMBackend:
    name = 'backend'
    model = ''

    def complete(self, request):
        """
        :param CompletionRequest request: The prompt.
        :return: Raw completion text.
        :rtype: str
        :raises BackendError: On transport failure or timeout.
        """
        raise NotImplementedError

    def describe(self):
        return {'backend': self.name, 'model': self.model}


def pacing_adjustment(state, gain=PACING_GAIN):
    """
    Spend-versus-time pacing rule of the offline agent.

    ``a = clamp(gain * (time_share - spend_share) / max(time_share, 1/T), -gain, gain)``, snapped
    to the midpoint of its adjustment bin.

    :param dict state: Serialized EnvState.
    :rtype: float
    """
    step_count = max(int(state['step_count']), 1)
    time_share = state['step_index'] / step_count
    spend_share = state['total_cost'] / state['total_budget'] if state['total_budget'] > 0 else 1.0
    raw = gain * (time_share - spend_share) / max(time_share, 1.0 / step_count)
    return snap_to_bin(max(-gain, min(gain, raw)))


class StubBackend(LLMBackend):
    """
    Deterministic offline model answering every prompt kind with schema-valid JSON.

    ``zero`` always keeps the expert factor; ``pacing`` follows :func:`pacing_adjustment`.
    """
    name = 'stub'

    def __init__(self, policy='zero'):
        if policy not in STUB_POLICIES:
            raise InvalidParams(f"unknown stub policy {policy!r}, expected one of {STUB_POLICIES}")
        self.policy = policy
        self.model = f"stub-{policy}"

    def complete(self, request):
        context = request.context
        if request.task == 'sum':
            entries = context.get('entries', [])
            text = f"{len(entries)} {context.get('kind', '')} records" if entries else "no history"
            return json.dumps({'summary': text})
        if request.task == 'ins':
            return json.dumps({key: self._assess(key, context.get('state')) for key in BIN_KEYS})
        if request.task == 'act':
            return json.dumps(self._act(context.get('state')))
        if request.task == 'factor':
            return json.dumps(self._choose_factor(context.get('state')))
        if request.task == 'ref':
            state = context.get('state') or {}
            return json.dumps({'reflection': f"day {state.get('day_index')} {context.get('kind', '')}: "
                                             f"{state.get('clicks', 0)} clicks for {state.get('total_cost', 0)} "
                                             f"of {state.get('total_budget', 0)}"})
        raise BackendError(f"stub backend has no answer for task {request.task!r}")

    def _assess(self, key, state):
        if self.policy == 'zero' or not state:
            return 'ok'
        return f"ok, pacing suggests {pacing_adjustment(state):+.2f}"

    def _act(self, state):
        if self.policy == 'zero' or not state:
            return {'adjustment': 0, 'reason': 'keep the algorithm factor'}
        adjustment = pacing_adjustment(state)
        direction = 'behind' if adjustment > 0 else 'ahead of'
        return {'adjustment': adjustment, 'reason': f"spend is {direction} the clock"}

    def _choose_factor(self, state):
        # Reads the base factor from the context, which a real model never sees.
        action = self._act(state)
        base = (state or {}).get('lambda_base') or 1.0
        return {'bid_factor': base * (1.0 + action['adjustment']), 'reason': action['reason']}


class HttpBackend(LLMBackend):
    """
    Chat-completions endpoint over HTTP.

    :param str base_url: API root; ``/chat/completions`` is appended.
    :param str model: Model identifier sent in the request.
    :param str api_key_env: Environment variable holding the bearer token.
    :param float timeout_s: Per-request timeout.
    :param str profile: System message sent with every request.
    """
    name = 'http'

    def __init__(self, base_url, model, api_key_env='OPENAI_API_KEY', timeout_s=60.0, temperature=0.0,
                 max_tokens=None, profile=None, session=None):
        if not base_url or not model:
            raise InvalidParams("http backend needs base_url and model")
        if not timeout_s > 0:
            raise InvalidParams(f"timeout_s must be positive, got {timeout_s}")
        self.base_url = base_url.rstrip('/')
        self.model = model
        self.api_key_env = api_key_env
        self.timeout_s = float(timeout_s)
        self.temperature = float(temperature)
        self.max_tokens = max_tokens
        self.profile = profile
        self.session = session or requests.Session()
        self.last_exchange = None

    def _headers(self):
        headers = {'Content-Type': 'application/json'}
        token = os.environ.get(self.api_key_env) if self.api_key_env else None
        if token:
            headers['Authorization'] = f"Bearer {token}"
        return headers

    def complete(self, request):
        messages = [{'role': 'system', 'content': self.profile}] if self.profile else []
        messages.append({'role': 'user', 'content': request.prompt})
        body = {'model': self.model, 'messages': messages, 'temperature': self.temperature}
        max_tokens = request.max_tokens or self.max_tokens
        if max_tokens:
            body['max_tokens'] = max_tokens
        self.last_exchange = {'request': body, 'response': None}
        try:
            response = self.session.post(f"{self.base_url}/chat/completions", json=body,
                                         headers=self._headers(), timeout=self.timeout_s)
        except requests.RequestException as e:
            raise BackendError(f"{request.task} request failed: {e}") from e
        self.last_exchange['response'] = response.text
        if response.status_code >= 400:
            raise BackendError(f"{request.task} request returned HTTP {response.status_code}")
        try:
            return response.json()['choices'][0]['message']['content'] or ''
        except (ValueError, KeyError, IndexError, TypeError) as e:
            raise BackendError(f"unexpected response shape for {request.task}: {e}") from None


def make_backend(spec, profile=None):
    """
    Build a backend from its name (``stub-zero``, ``stub-pacing``, ``http``) or a config mapping
    with a ``kind`` key and the :class:`HttpBackend` arguments.
    """
    spec = {'kind': spec} if isinstance(spec, str) else dict(spec)
    kind = spec.pop('kind', 'stub-zero')
    if kind.startswith('stub-'):
        return StubBackend(policy=kind[len('stub-'):])
    if kind == 'http':
        spec.setdefault('profile', profile)
        try:
            backend = HttpBackend(**spec)
        except TypeError as e:
            raise InvalidParams(f"bad http backend settings: {e}") from None
        logger.info(f"[Backend] HTTP backend {backend.model} at {backend.base_url}")
        return backend
    raise InvalidParams(f"unknown backend {kind!r}")



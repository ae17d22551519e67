import bisect
import json
import math
import numbers
import re
from dataclasses import asdict, dataclass

from bidwright.core.exceptions import ParseError

ADJUSTMENT_MIN = -0.5
ADJUSTMENT_MAX = 0.5
BIN_EDGES = (-0.5, -0.4, -0.3, -0.2, -0.1, 0.0, 0.1, 0.2, 0.3, 0.4, 0.5)
BIN_MIDPOINTS = tuple(round((low + high) / 2, 2) for low, high in zip(BIN_EDGES, BIN_EDGES[1:]))
BIN_KEYS = tuple(
    f"adjustment range for [{low:.1f},{high:.1f}{']' if high == ADJUSTMENT_MAX else ')'}"
    for low, high in zip(BIN_EDGES, BIN_EDGES[1:])
)

_FENCE = re.compile(r"```(?:json)?\s*(.*?)```", re.DOTALL)


def bin_index(adjustment):
    """
    Index of the adjustment bin holding ``adjustment``; the last bin is closed on the right.
    """
    if not ADJUSTMENT_MIN <= adjustment <= ADJUSTMENT_MAX:
        raise ParseError(f"adjustment {adjustment} is outside [{ADJUSTMENT_MIN}, {ADJUSTMENT_MAX}]")
    return min(bisect.bisect_right(BIN_EDGES, round(adjustment, 10)) - 1, len(BIN_MIDPOINTS) - 1)


def snap_to_bin(adjustment):
    """
    Midpoint of the bin containing ``adjustment``. A value on an edge belongs to the bin it opens.
    """
    return BIN_MIDPOINTS[bin_index(adjustment)]


@dataclass(frozen=True)
class Action:
    adjustment: float
    reason: str
    bin_index: int = None
    fallback: bool = False

    def __post_init__(self):
        index = bin_index(self.adjustment)
        if self.bin_index is None:
            object.__setattr__(self, 'bin_index', index)
        elif self.bin_index != index:
            raise ParseError(f"bin {self.bin_index} does not contain adjustment {self.adjustment}")

    def to_dict(self):
        return {'adjustment': self.adjustment, 'bin_index': self.bin_index, 'reason': self.reason,
                'fallback': self.fallback}


def extract_json(text):
    """
    First JSON object in a completion, looking inside a fenced code block first.

    :raises ParseError: When no JSON object can be decoded.
    """
    if isinstance(text, bytes):
        text = text.decode('utf-8', errors='replace')
    if not isinstance(text, str):
        raise ParseError(f"completion is {type(text).__name__}, not text")
    candidates = [m.group(1) for m in _FENCE.finditer(text)] + [text]
    decoder = json.JSONDecoder()
    for candidate in candidates:
        for start in (m.start() for m in re.finditer(r"\{", candidate)):
            try:
                value, _ = decoder.raw_decode(candidate, start)
            except (ValueError, RecursionError):
                continue
            if isinstance(value, dict):
                return value
    raise ParseError("no JSON object in completion")


def _text_field(data, key):
    value = data.get(key)
    if not isinstance(value, str):
        raise ParseError(f"'{key}' must be a string, got {type(value).__name__}")
    return value


def parse_summary(text):
    return _text_field(extract_json(text), 'summary')


def parse_reflection(text):
    return _text_field(extract_json(text), 'reflection')


def parse_insight(text):
    """
    The ten per-bin analyses, keyed as in the insight template. Extra keys are dropped.

    :raises ParseError: When any of the ten keys is missing.
    """
    data = extract_json(text)
    missing = [key for key in BIN_KEYS if key not in data]
    if missing:
        raise ParseError(f"insight is missing {len(missing)} of {len(BIN_KEYS)} ranges, first '{missing[0]}'")
    return {key: str(data[key]) for key in BIN_KEYS}


def _number_field(data, key):
    value = data.get(key)
    if isinstance(value, bool) or not isinstance(value, numbers.Real):
        raise ParseError(f"'{key}' must be a number, got {type(value).__name__}")
    try:
        value = float(value)
    except (OverflowError, ValueError):
        raise ParseError(f"'{key}' does not fit a float") from None
    if not math.isfinite(value):
        raise ParseError(f"'{key}' must be finite, got {value}")
    return value


def _reason(data):
    reason = data.get('reason', '')
    if not isinstance(reason, str):
        raise ParseError("'reason' must be a string")
    return reason


def parse_action(text):
    """
    ``{"adjustment": number, "reason": string}``. Out-of-range adjustments are rejected, never clamped.

    :rtype: Action
    """
    data = extract_json(text)
    return Action(adjustment=_number_field(data, 'adjustment'), reason=_reason(data))


@dataclass(frozen=True)
class FactorChoice:
    """
    A bid factor named by the model itself, with no expert factor to adjust.

    ``adjustment`` is the factor's offset from the run's base factor, kept for reports only.
    """
    bid_factor: float
    reason: str
    adjustment: float = 0.0
    fallback: bool = False

    def to_dict(self):
        return asdict(self)


def parse_bid_factor(text):
    """
    ``{"bid_factor": number, "reason": string}`` with a positive factor.

    :rtype: FactorChoice
    """
    data = extract_json(text)
    bid_factor = _number_field(data, 'bid_factor')
    if bid_factor <= 0:
        raise ParseError(f"'bid_factor' must be positive, got {bid_factor}")
    return FactorChoice(bid_factor=bid_factor, reason=_reason(data))

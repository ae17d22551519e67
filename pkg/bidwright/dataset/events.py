import datetime
import json
from dataclasses import dataclass, field

import yaml

from bidwright.core.config import parse_document
from bidwright.core.exceptions import InvalidParams, MalformedLine

EPOCH = datetime.date(1970, 1, 1)

RESERVED_ROLES = ('click', 'price', 'hour', 'timestamp')

# Preprocessed iPinYou layout (one campaign's train.log.txt / test.log.txt).
IPINYOU_FIELDS = {
    1: 'weekday',
    2: 'hour',
    7: 'useragent',
    8: 'IP',
    9: 'region',
    10: 'city',
    11: 'adexchange',
    12: 'domain',
    13: 'url',
    15: 'slotid',
    16: 'slotwidth',
    17: 'slotheight',
    18: 'slotvisibility',
    19: 'slotformat',
    20: 'slotprice',
    21: 'creative',
}
IPINYOU_ROLES = {'click': 0, 'hour': 2, 'timestamp': 4, 'price': 23}


@dataclass(frozen=True)
class ImpressionEvent:
    """
    One logged auction opportunity.

    ``features`` is kept as a tuple of ``(field, token)`` pairs so events stay hashable and keep
    their field order; use :meth:`feature_map` for dictionary access.
    """
    campaign_id: str
    day_index: int
    hour: int
    market_price: int
    click: int
    features: tuple = ()

    def __post_init__(self):
        if self.market_price < 0:
            raise InvalidParams(f"market_price must be >= 0, got {self.market_price}")
        if self.click not in (0, 1):
            raise InvalidParams(f"click must be 0 or 1, got {self.click}")
        if not 0 <= self.hour <= 23:
            raise InvalidParams(f"hour must be in [0, 23], got {self.hour}")
        if self.day_index < 0:
            raise InvalidParams(f"day_index must be >= 0, got {self.day_index}")

    def feature_map(self):
        return dict(self.features)

    def tokens(self):
        """
        Feature tokens in field order, e.g. ``region=216``.
        """
        return [f"{name}={value}" for name, value in self.features]


@dataclass(frozen=True)
class ColumnSchema:
    """
    Where each piece of an impression lives in a tab-separated log line.

    :param int column_count: Minimum number of tab-separated fields on a valid line.
    :param dict roles: Reserved role name (click, price, hour, timestamp) to column index.
        ``timestamp`` is optional; without it the loader assigns days per file.
    :param dict fields: Column index to feature field name, in feature order.
    :param bool has_header: Whether the first line of every file is a header.
    """
    column_count: int = 24
    roles: dict = field(default_factory=lambda: dict(IPINYOU_ROLES))
    fields: dict = field(default_factory=lambda: dict(IPINYOU_FIELDS))
    has_header: bool = True

    def __post_init__(self):
        for role in ('click', 'price', 'hour'):
            if role not in self.roles:
                raise InvalidParams(f"schema is missing the required role '{role}'")
        unknown = set(self.roles) - set(RESERVED_ROLES)
        if unknown:
            raise InvalidParams(f"unknown schema roles: {sorted(unknown)}")
        highest = max(list(self.roles.values()) + list(self.fields.keys()))
        if highest >= self.column_count:
            raise InvalidParams(f"column index {highest} is outside column_count {self.column_count}")

    @classmethod
    def from_dict(cls, data):
        return cls(
            column_count=int(data.get('column_count', 24)),
            roles={str(k): int(v) for k, v in data.get('roles', IPINYOU_ROLES).items()},
            fields={int(k): str(v) for k, v in data.get('fields', IPINYOU_FIELDS).items()},
            has_header=bool(data.get('has_header', True)),
        )

    @classmethod
    def from_file(cls, path):
        with open(path, 'r', encoding='utf-8') as f:
            try:
                document = parse_document(f.read())
            except yaml.YAMLError as e:
                raise InvalidParams(f"column schema {path} is not valid JSON or YAML: {e}") from None
        if not isinstance(document or {}, dict):
            raise InvalidParams(f"column schema {path} must be an object")
        return cls.from_dict(document or {})

    def to_dict(self):
        return {
            'column_count': self.column_count,
            'roles': dict(self.roles),
            'fields': {str(k): v for k, v in self.fields.items()},
            'has_header': self.has_header,
        }


def day_index_from_timestamp(timestamp):
    """
    Days since 1970-01-01 for an iPinYou-style ``yyyymmdd...`` timestamp.

    :param str timestamp: At least eight leading digits.
    :rtype: int
    """
    date = datetime.date(int(timestamp[0:4]), int(timestamp[4:6]), int(timestamp[6:8]))
    return (date - EPOCH).days


def parse_log_line(line, schema, campaign_id='', line_number=0, day_index=0):
    """
    Turn one tab-separated log line into an :class:`ImpressionEvent`.

    :param str line: The raw line, trailing newline allowed.
    :param ColumnSchema schema: Column layout.
    :param str campaign_id: Campaign the line belongs to.
    :param int line_number: Used in error messages only.
    :param int day_index: Day to use when the schema has no timestamp role.
    :raises MalformedLine: On a short line or a non-numeric click, price, hour or timestamp.
    :rtype: ImpressionEvent
    """
    parts = line.rstrip('\r\n').split('\t')
    if len(parts) < schema.column_count:
        raise MalformedLine(line_number, f"expected {schema.column_count} fields, got {len(parts)}")

    roles = schema.roles
    try:
        click = int(parts[roles['click']])
        market_price = int(parts[roles['price']])
        hour = int(parts[roles['hour']])
        if 'timestamp' in roles:
            day_index = day_index_from_timestamp(parts[roles['timestamp']])
    except ValueError as e:
        raise MalformedLine(line_number, f"non-numeric value: {e}") from None

    features = tuple((name, parts[index]) for index, name in schema.fields.items())
    try:
        return ImpressionEvent(campaign_id=campaign_id, day_index=day_index, hour=hour,
                               market_price=market_price, click=click, features=features)
    except InvalidParams as e:
        raise MalformedLine(line_number, str(e)) from None


def event_to_json(event):
    return json.dumps({
        'campaign_id': event.campaign_id,
        'day_index': event.day_index,
        'hour': event.hour,
        'market_price': event.market_price,
        'click': event.click,
        'features': dict(event.features),
    }, ensure_ascii=False)


def event_from_json(text):
    data = json.loads(text)
    return ImpressionEvent(
        campaign_id=str(data['campaign_id']),
        day_index=int(data['day_index']),
        hour=int(data['hour']),
        market_price=int(data['market_price']),
        click=int(data['click']),
        features=tuple((str(k), str(v)) for k, v in data['features'].items()),
    )


def write_events_jsonl(events, path):
    with open(path, 'w', encoding='utf-8') as f:
        for event in events:
            f.write(event_to_json(event))
            f.write('\n')


def read_events_jsonl(path):
    events = []
    with open(path, 'r', encoding='utf-8') as f:
        for line_number, line in enumerate(f, start=1):
            if not line.strip():
                continue
            try:
                events.append(event_from_json(line))
            except (ValueError, KeyError, TypeError, InvalidParams) as e:
                raise MalformedLine(line_number, f"bad canonical event: {e}") from None
    return events

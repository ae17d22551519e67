import json
import os
from dataclasses import dataclass, field

from bidwright.core import logger
from bidwright.core.config import DEFAULT_MEMORY_WINDOW, coerce_numeric
from bidwright.core.exceptions import CorruptLine, InvalidParams, KindMismatch

MEMORY_KINDS = ('env', 'bid', 'ref')


@dataclass(frozen=True)
class MemoryEntry:
    """
    One record of a memory store.

    ``step`` is None for daily reflections. ``seq`` is assigned by the store on append.
    """
    kind: str
    day: int
    step: int = None
    payload: dict = field(default_factory=dict)
    seq: int = None

    def to_dict(self):
        data = {'seq': self.seq, 'kind': self.kind, 'day': self.day}
        if self.step is not None:
            data['step'] = self.step
        data['payload'] = self.payload
        return data

    @classmethod
    def from_dict(cls, data):
        return cls(kind=data['kind'], day=int(data['day']), step=data.get('step'),
                   payload=data.get('payload', {}), seq=int(data['seq']))


@dataclass(frozen=True)
class RetrievalScope:
    """
    :param int recent_steps: K_r, how many earlier steps of the same day are visible.
    :param bool include_yesterday_reflection: Also return the latest earlier day's reflections.
    :param int max_entries: Cap per store; the most recent entries are kept.
    """
    recent_steps: int = DEFAULT_MEMORY_WINDOW
    include_yesterday_reflection: bool = True
    max_entries: int = 24

    def __post_init__(self):
        if self.recent_steps < 0 or self.max_entries < 0:
            raise InvalidParams(f"retrieval window and cap must be >= 0, got {self.recent_steps}, {self.max_entries}")

    @classmethod
    def from_dict(cls, data):
        try:
            return cls(**coerce_numeric(cls, data))
        except (TypeError, ValueError, AttributeError, OverflowError) as e:
            raise InvalidParams(f"bad retrieval scope: {e}") from None


class MemoryStore:
    """
    Append-only log of one memory kind, optionally written through to a JSON-lines file.

    :param str kind: ``env``, ``bid`` or ``ref``.
    :param str path: File every append is flushed to; in-memory only when None.
    """

    def __init__(self, kind, path=None):
        if kind not in MEMORY_KINDS:
            raise InvalidParams(f"unknown memory kind {kind!r}")
        self.kind = kind
        self.path = path
        self._entries = []

    def __len__(self):
        return len(self._entries)

    def __iter__(self):
        return iter(self._entries)

    def __eq__(self, other):
        return isinstance(other, MemoryStore) and self.kind == other.kind and self._entries == other._entries

    @property
    def entries(self):
        return tuple(self._entries)

    @property
    def last_seq(self):
        return self._entries[-1].seq if self._entries else 0

    def append(self, entry):
        """
        :param MemoryEntry entry: Record to add; its ``seq`` is replaced by the next sequence id.
        :return: The sequence id, 1 for the first entry.
        :rtype: int
        :raises KindMismatch: When the entry belongs to another store.
        """
        if entry.kind != self.kind:
            raise KindMismatch(f"cannot append a '{entry.kind}' entry to the '{self.kind}' store")
        stored = MemoryEntry(kind=entry.kind, day=entry.day, step=entry.step, payload=entry.payload,
                             seq=self.last_seq + 1)
        self._entries.append(stored)
        if self.path:
            with open(self.path, 'a', encoding='utf-8') as f:
                f.write(json.dumps(stored.to_dict(), sort_keys=True) + '\n')
        return stored.seq

    def record(self, day, step, payload):
        return self.append(MemoryEntry(kind=self.kind, day=day, step=step, payload=payload))

    def retrieve(self, scope, now):
        """
        Entries visible at ``now = (day, step)``, oldest first.

        Same-day entries from steps ``[step - K_r, step)``; for the reflection store, the entries
        of the latest earlier day that has any. Nothing at or after ``now`` is ever returned.

        :param RetrievalScope scope: Window settings.
        :param tuple now: Current ``(day, step)``.
        :rtype: list[MemoryEntry]
        """
        day, step = now
        selected = [e for e in self._entries
                    if e.day == day and e.step is not None and step - scope.recent_steps <= e.step < step]
        if self.kind == 'ref' and scope.include_yesterday_reflection:
            earlier = [e.day for e in self._entries if e.day < day]
            if earlier:
                latest = max(earlier)
                selected = [e for e in self._entries if e.day == latest] + selected
        if scope.max_entries and len(selected) > scope.max_entries:
            selected = selected[-scope.max_entries:]
        elif scope.max_entries == 0:
            selected = []
        return selected

    def entries_for_day(self, day):
        return [e for e in self._entries if e.day == day]

    def persist(self, path):
        os.makedirs(os.path.dirname(os.path.abspath(path)), exist_ok=True)
        with open(path, 'w', encoding='utf-8') as f:
            for entry in self._entries:
                f.write(json.dumps(entry.to_dict(), sort_keys=True) + '\n')

    @classmethod
    def load(cls, kind, path):
        """
        Rebuild a store from its JSON-lines file.

        :raises CorruptLine: On unparsable JSON, a foreign kind or a non-increasing sequence id.
        """
        store = cls(kind)
        with open(path, 'r', encoding='utf-8') as f:
            for number, line in enumerate(f, start=1):
                if not line.strip():
                    continue
                try:
                    entry = MemoryEntry.from_dict(json.loads(line))
                except (ValueError, KeyError, TypeError) as e:
                    raise CorruptLine(number, f"{path}: {e}") from None
                if entry.kind != kind:
                    raise CorruptLine(number, f"{path}: '{entry.kind}' entry in the '{kind}' store")
                if entry.seq <= store.last_seq:
                    raise CorruptLine(number, f"{path}: sequence id {entry.seq} after {store.last_seq}")
                store._entries.append(entry)
        store.path = path
        return store


class MemoryBank:
    """
    The three stores of one run, backed by ``memory_{kind}.jsonl`` files in ``directory``.
    """

    def __init__(self, directory=None, scope=None):
        self.directory = directory
        self.scope = scope or RetrievalScope()
        self.stores = {kind: MemoryStore(kind, path=self.file_for(kind)) for kind in MEMORY_KINDS}
        if directory:
            os.makedirs(directory, exist_ok=True)
            for kind in MEMORY_KINDS:
                open(self.file_for(kind), 'w', encoding='utf-8').close()

    def __getitem__(self, kind):
        return self.stores[kind]

    def file_for(self, kind):
        return os.path.join(self.directory, f"memory_{kind}.jsonl") if self.directory else None

    def retrieve(self, now):
        return {kind: store.retrieve(self.scope, now) for kind, store in self.stores.items()}

    def persist(self, directory):
        for kind, store in self.stores.items():
            store.persist(os.path.join(directory, f"memory_{kind}.jsonl"))

    @classmethod
    def load(cls, directory, scope=None):
        bank = cls(scope=scope)
        bank.directory = directory
        bank.stores = {kind: MemoryStore.load(kind, os.path.join(directory, f"memory_{kind}.jsonl"))
                       for kind in MEMORY_KINDS}
        logger.debug(f"[MemoryBank] Loaded {sum(len(s) for s in bank.stores.values())} entries from {directory}")
        return bank

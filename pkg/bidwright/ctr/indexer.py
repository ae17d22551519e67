import hashlib
from dataclasses import dataclass

import numpy as np

from bidwright.core.config import DEFAULT_HASH_BITS
from bidwright.core.exceptions import InvalidParams


@dataclass(frozen=True)
class FeatureIndexer:
    """
    Stateless hashing of ``field=token`` strings into ``[0, dimension)``.

    BLAKE2b is used instead of :func:`hash` because the builtin is salted per process.
    """
    dimension: int = 2 ** DEFAULT_HASH_BITS
    salt: str = ''

    def __post_init__(self):
        if self.dimension < 1 or self.dimension & (self.dimension - 1):
            raise InvalidParams(f"hash dimension must be a power of two, got {self.dimension}")

    def index(self, token):
        digest = hashlib.blake2b(f"{self.salt}{token}".encode('utf-8'), digest_size=8).digest()
        return int.from_bytes(digest, 'little') & (self.dimension - 1)

    def to_dict(self):
        return {'dimension': self.dimension, 'salt': self.salt}


def encode(event, indexer):
    """
    Active feature indices of an event, one per feature field, in field order.

    :param ImpressionEvent event: The impression.
    :param FeatureIndexer indexer: Hashing rule.
    :rtype: numpy.ndarray
    """
    return np.fromiter((indexer.index(token) for token in event.tokens()), dtype=np.int64,
                       count=len(event.features))


def encode_all(events, indexer):
    return [encode(event, indexer) for event in events]

import math
from dataclasses import asdict, dataclass, field

import numpy as np

from bidwright.core import logger
from bidwright.core.config import DEFAULT_HASH_BITS, coerce_numeric
from bidwright.core.exceptions import InvalidParams, NumericalDivergence
from bidwright.ctr.fm import FMModel, LOGIT_CLIP, log_loss_from_logit, sparse_gradient
from bidwright.ctr.indexer import FeatureIndexer, encode_all

# Events scored per vectorized batch; bounds the (batch, fields, k) factor gather.
SCORE_BATCH = 4096


@dataclass(frozen=True)
class TrainConfig:
    epochs: int = 5
    learning_rate: float = 0.01
    l2_linear: float = 1e-6
    l2_factor: float = 1e-6
    k: int = 10
    init_sigma: float = 0.01
    rng_seed: int = 0
    hash_bits: int = DEFAULT_HASH_BITS

    def validate(self):
        if self.epochs < 1:
            raise InvalidParams(f"epochs must be >= 1, got {self.epochs}")
        if not self.learning_rate > 0:
            raise InvalidParams(f"learning_rate must be > 0, got {self.learning_rate}")
        if self.k < 1:
            raise InvalidParams(f"k must be >= 1, got {self.k}")
        if self.l2_linear < 0 or self.l2_factor < 0 or self.init_sigma < 0:
            raise InvalidParams("l2 terms and init_sigma must be non-negative")
        if not 1 <= self.hash_bits <= 30:
            raise InvalidParams(f"hash_bits must be in [1, 30], got {self.hash_bits}")

    @classmethod
    def from_dict(cls, data):
        try:
            return cls(**coerce_numeric(cls, data))
        except (TypeError, ValueError, AttributeError, OverflowError) as e:
            raise InvalidParams(f"bad training parameters: {e}") from None

    def to_dict(self):
        return asdict(self)


@dataclass
class TrainResult:
    model: FMModel
    config: TrainConfig
    epoch_losses: list = field(default_factory=list)

    @property
    def final_loss(self):
        return self.epoch_losses[-1] if self.epoch_losses else math.nan


def train(train_events, config=None, indexer=None):
    """
    Fit a factorization machine to the train events by plain SGD on the logistic loss.

    Examples are visited in a fresh permutation every epoch, drawn from ``config.rng_seed``, so
    equal seeds and data give identical parameters. L2 shrinkage is applied only to the
    parameters active in the current example.

    :param list train_events: Events carrying the click label.
    :param TrainConfig config: Hyperparameters; defaults when None.
    :param FeatureIndexer indexer: Hashing rule; built from ``config.hash_bits`` when None.
    :raises NumericalDivergence: When an epoch's mean loss is not finite.
    :rtype: TrainResult
    """
    config = config or TrainConfig()
    config.validate()
    if not train_events:
        raise InvalidParams("cannot train on an empty event list")
    indexer = indexer or FeatureIndexer(dimension=2 ** config.hash_bits)

    rng = np.random.default_rng(config.rng_seed)
    model = FMModel(w0=0.0, w=np.zeros(indexer.dimension),
                    V=rng.normal(0.0, config.init_sigma, size=(indexer.dimension, config.k)),
                    indexer=indexer)
    encoded = encode_all(train_events, indexer)
    labels = [event.click for event in train_events]
    positives = sum(labels)
    if positives == 0:
        logger.warning(f"[CTRTrainer] No positive examples among {len(labels)} events, model will learn a floor CTR")

    lr = config.learning_rate
    result = TrainResult(model=model, config=config)
    for epoch in range(config.epochs):
        total = 0.0
        for i in rng.permutation(len(encoded)):
            indices = encoded[i]
            step = sparse_gradient(model, indices, labels[i])
            total += step.loss
            reg_w = config.l2_linear * model.w[indices]
            reg_V = config.l2_factor * model.V[indices]
            model.w0 -= lr * step.g0
            np.add.at(model.w, indices, -lr * (step.g_w + reg_w))
            np.add.at(model.V, indices, -lr * (step.g_V + reg_V))
        mean_loss = total / len(encoded)
        if not math.isfinite(mean_loss) or not math.isfinite(model.w0):
            raise NumericalDivergence(f"epoch {epoch + 1}: loss {mean_loss} with learning_rate {lr}, "
                                      f"w0 {model.w0}; lower the learning rate")
        result.epoch_losses.append(mean_loss)
        logger.info(f"[CTRTrainer] Epoch {epoch + 1}/{config.epochs} log-loss {mean_loss:.6f}")
    logger.info(f"[CTRTrainer] Trained on {len(encoded)} events ({positives} clicks), "
                f"D={indexer.dimension} k={config.k}")
    return result


def _batch_logits(model, matrix):
    rows = model.V[matrix]
    summed = rows.sum(axis=1)
    pairwise = 0.5 * ((summed * summed).sum(axis=1) - (rows * rows).sum(axis=(1, 2)))
    return model.w0 + model.w[matrix].sum(axis=1) + pairwise


def score_logits(model, events):
    """
    Unclipped FM scores for many events, vectorized in batches of equal field count.
    """
    encoded = encode_all(events, model.indexer)
    logits = np.empty(len(encoded))
    if not encoded:
        return logits
    if len({len(indices) for indices in encoded}) == 1:
        matrix = np.vstack(encoded)
        for start in range(0, len(matrix), SCORE_BATCH):
            logits[start:start + SCORE_BATCH] = _batch_logits(model, matrix[start:start + SCORE_BATCH])
    else:
        for i, indices in enumerate(encoded):
            logits[i] = _batch_logits(model, indices[np.newaxis, :])[0]
    return logits


def score_events(model, events):
    """
    pCTR of each event, in event order.

    :rtype: numpy.ndarray
    """
    return 1.0 / (1.0 + np.exp(-np.clip(score_logits(model, events), -LOGIT_CLIP, LOGIT_CLIP)))


def log_loss(model, events):
    """
    Mean logistic loss of the model over labelled events.
    """
    if not events:
        raise InvalidParams("log loss of an empty event list is undefined")
    logits = score_logits(model, events)
    return float(np.mean([log_loss_from_logit(z, e.click) for z, e in zip(logits, events)]))


def mean_train_ctr(model, train_events):
    """
    theta_0, the average predicted CTR over the train events.

    :rtype: float
    """
    if not train_events:
        raise InvalidParams("theta_0 needs at least one train event")
    return float(np.mean(score_events(model, train_events)))

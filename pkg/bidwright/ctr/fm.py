from dataclasses import dataclass

import numpy as np

from bidwright.core.exceptions import InvalidParams
from bidwright.ctr.indexer import FeatureIndexer, encode

# sigmoid(+-35) is still strictly inside (0, 1) in float64.
LOGIT_CLIP = 35.0


@dataclass
class FMModel:
    """
    Second-order factorization machine over hashed binary features.

    ``w`` has one weight per hashed index and ``V`` one row of ``k`` latent factors per index.
    """
    w0: float
    w: np.ndarray
    V: np.ndarray
    indexer: FeatureIndexer

    @property
    def k(self):
        return self.V.shape[1]

    @property
    def dimension(self):
        return self.indexer.dimension

    @classmethod
    def zeros(cls, indexer, k):
        return cls(w0=0.0, w=np.zeros(indexer.dimension), V=np.zeros((indexer.dimension, k)), indexer=indexer)

    def predict_event(self, event):
        return predict(self, encode(event, self.indexer))


@dataclass
class FMGradient:
    w0: float
    w: np.ndarray
    V: np.ndarray


def sigmoid(z):
    return 1.0 / (1.0 + np.exp(-np.clip(z, -LOGIT_CLIP, LOGIT_CLIP)))


def pairwise_term(V, indices):
    """
    ``sum_{j<l} <V_j, V_l>`` over the active positions, via ``0.5 * sum_f[(sum_j V_jf)^2 - sum_j V_jf^2]``.
    """
    rows = V[indices]
    summed = rows.sum(axis=0)
    return 0.5 * float(np.dot(summed, summed) - np.einsum('ij,ij->', rows, rows))


def logit(model, indices):
    return model.w0 + float(model.w[indices].sum()) + pairwise_term(model.V, indices)


def predict(model, indices):
    """
    Click probability for one encoded impression, strictly inside (0, 1).

    :param FMModel model: Trained model.
    :param numpy.ndarray indices: Active indices from :func:`~bidwright.ctr.indexer.encode`.
    :rtype: float
    """
    indices = np.asarray(indices, dtype=np.int64)
    if indices.size and (indices.min() < 0 or indices.max() >= model.dimension):
        raise InvalidParams(f"feature index out of range for dimension {model.dimension}")
    return float(sigmoid(logit(model, indices)))


def log_loss_from_logit(z, label):
    return float(np.logaddexp(0.0, z) - label * z)


def example_loss(model, indices, label):
    """
    Logistic loss of one example, computed from the unclipped logit.
    """
    return log_loss_from_logit(logit(model, np.asarray(indices, dtype=np.int64)), label)


@dataclass
class SparseGradient:
    """
    Loss gradient restricted to the active positions of one example.

    ``g_w`` and ``g_V`` have one row per position; repeated indices accumulate with
    :func:`numpy.add.at`. ``logit`` is the unclipped score the gradient was taken at.
    """
    logit: float
    g0: float
    indices: np.ndarray
    g_w: np.ndarray
    g_V: np.ndarray
    label: int = 0

    @property
    def loss(self):
        return log_loss_from_logit(self.logit, self.label)


def sparse_gradient(model, indices, label):
    rows = model.V[indices]
    summed = rows.sum(axis=0)
    z = model.w0 + float(model.w[indices].sum()) + 0.5 * float(np.dot(summed, summed) - np.einsum('ij,ij->', rows, rows))
    g = float(sigmoid(z)) - label
    return SparseGradient(logit=z, g0=g, indices=indices, g_w=np.full(len(indices), g),
                          g_V=g * (summed[np.newaxis, :] - rows), label=label)


def gradient(model, indices, label):
    """
    Dense gradient of the logistic loss at one example.

    Inactive indices get exactly zero. Meant for verification; training uses :func:`sparse_gradient`.

    :param FMModel model: Model to differentiate.
    :param indices: Active indices of the example.
    :param int label: 0 or 1.
    :rtype: FMGradient
    """
    indices = np.asarray(indices, dtype=np.int64)
    sparse = sparse_gradient(model, indices, label)
    dense_w = np.zeros_like(model.w)
    dense_V = np.zeros_like(model.V)
    np.add.at(dense_w, sparse.indices, sparse.g_w)
    np.add.at(dense_V, sparse.indices, sparse.g_V)
    return FMGradient(w0=sparse.g0, w=dense_w, V=dense_V)

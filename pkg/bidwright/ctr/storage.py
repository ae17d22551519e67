import json
import os

import numpy as np

from bidwright.core import logger
from bidwright.core.exceptions import InvalidParams
from bidwright.ctr.fm import FMModel
from bidwright.ctr.indexer import FeatureIndexer

FORMAT_TAG = 'bidwright-fm/1'


def model_path(directory, campaign_id):
    return os.path.join(directory, f"fm_{campaign_id}.npz")


def save_model(model, path, train_config=None, campaign_id=None, theta_0=None):
    """
    Write the model as a compressed ``.npz`` holding ``w0``, ``w``, ``V`` and a JSON metadata string.

    :param FMModel model: Model to store.
    :param str path: Target file; parent directories are created.
    :param TrainConfig train_config: Recorded for provenance when given.
    :param str campaign_id: Campaign the model belongs to.
    :param float theta_0: Mean train pCTR, stored so strategy fitting can skip rescoring.
    """
    metadata = {
        'format': FORMAT_TAG,
        'dimension': model.dimension,
        'k': model.k,
        'indexer': model.indexer.to_dict(),
        'train_config': train_config.to_dict() if train_config is not None else None,
        'campaign_id': campaign_id,
        'theta_0': theta_0,
    }
    os.makedirs(os.path.dirname(os.path.abspath(path)), exist_ok=True)
    with open(path, 'wb') as f:
        np.savez_compressed(f, w0=np.array(model.w0), w=model.w, V=model.V,
                            metadata=np.array(json.dumps(metadata, sort_keys=True)))
    logger.info(f"[ModelStore] Saved FM model ({model.dimension}x{model.k}) to {path}")


def load_model(path):
    """
    Read a model written by :func:`save_model`.

    :return: The model and its metadata record.
    :rtype: tuple[FMModel, dict]
    :raises InvalidParams: On a missing format tag or shape mismatch.
    """
    with np.load(path, allow_pickle=False) as archive:
        try:
            metadata = json.loads(str(archive['metadata']))
            w0, w, V = float(archive['w0']), archive['w'].copy(), archive['V'].copy()
        except KeyError as e:
            raise InvalidParams(f"{path} is not a bidwright model file, missing {e}") from None
    if metadata.get('format') != FORMAT_TAG:
        raise InvalidParams(f"{path}: unsupported model format {metadata.get('format')!r}")
    indexer = FeatureIndexer(**metadata['indexer'])
    if w.shape != (indexer.dimension,) or V.shape != (indexer.dimension, metadata['k']):
        raise InvalidParams(f"{path}: parameter shapes do not match dimension {indexer.dimension}")
    if not (np.isfinite(w0) and np.isfinite(w).all() and np.isfinite(V).all()):
        raise InvalidParams(f"{path}: model holds non-finite parameters")
    return FMModel(w0=w0, w=w, V=V, indexer=indexer), metadata

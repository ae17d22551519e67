import json
import math

import numpy as np
import pytest
from hypothesis import given, strategies as st

from bidwright.core.exceptions import InvalidParams, NumericalDivergence
from bidwright.ctr.fm import FMModel, example_loss, gradient, pairwise_term, predict, sigmoid
from bidwright.ctr.indexer import FeatureIndexer, encode
from bidwright.ctr.storage import FORMAT_TAG, load_model, model_path, save_model
from bidwright.ctr.training import TrainConfig, log_loss, mean_train_ctr, score_events, train

from conftest import make_event, small_train_config


def random_model(rng, dimension=64, k=3, scale=0.3):
    return FMModel(w0=float(rng.normal(0, scale)), w=rng.normal(0, scale, size=dimension),
                   V=rng.normal(0, scale, size=(dimension, k)), indexer=FeatureIndexer(dimension=dimension))


def test_indexer_is_stable_and_bounded():
    indexer = FeatureIndexer(dimension=2 ** 10)
    event = make_event(5, hour=7)
    first = encode(event, indexer)

    assert first.dtype == np.int64
    assert len(first) == len(event.features)
    assert np.array_equal(first, encode(event, FeatureIndexer(dimension=2 ** 10)))
    assert ((first >= 0) & (first < 2 ** 10)).all()
    wide = FeatureIndexer(dimension=2 ** 30)
    assert wide.index('slotid=1') != FeatureIndexer(dimension=2 ** 30, salt='x').index('slotid=1')


@pytest.mark.parametrize('dimension', [0, 3, 1000])
def test_indexer_needs_power_of_two(dimension):
    with pytest.raises(InvalidParams):
        FeatureIndexer(dimension=dimension)


def test_default_hash_space_rarely_collides():
    indexer = FeatureIndexer()
    tokens = [f"domain={i}" for i in range(8_000)] + [f"slotid={i}" for i in range(2_000)]
    indices = {indexer.index(token) for token in tokens}

    assert indexer.dimension == 2 ** 20
    assert 1 - len(indices) / len(tokens) < 0.01


def test_zero_model_predicts_one_half():
    model = FMModel.zeros(FeatureIndexer(dimension=16), k=2)
    assert predict(model, [1, 2, 3]) == 0.5


def test_bias_only_model():
    model = FMModel.zeros(FeatureIndexer(dimension=16), k=2)
    model.w0 = 2.0
    assert predict(model, [4, 9]) == pytest.approx(0.8807970779778823, abs=1e-12)


def test_predict_rejects_out_of_range_indices():
    model = FMModel.zeros(FeatureIndexer(dimension=16), k=2)
    with pytest.raises(InvalidParams):
        predict(model, [16])


def test_sigmoid_stays_inside_the_open_interval():
    assert 0.0 < sigmoid(-1e6) < sigmoid(1e6) < 1.0


@given(st.integers(min_value=0, max_value=2 ** 31), st.integers(min_value=0, max_value=10))
def test_pairwise_identity_matches_the_double_sum(seed, count):
    rng = np.random.default_rng(seed)
    V = rng.normal(size=(32, 4))
    indices = rng.integers(0, 32, size=count)
    naive = sum(float(V[indices[a]] @ V[indices[b]]) for a in range(count) for b in range(a + 1, count))
    assert pairwise_term(V, indices) == pytest.approx(naive, rel=1e-9, abs=1e-9)


def test_gradient_of_zero_model_on_a_click():
    model = FMModel.zeros(FeatureIndexer(dimension=16), k=2)
    grad = gradient(model, [3, 5], 1)

    assert grad.w0 == -0.5
    assert grad.w[3] == grad.w[5] == -0.5
    assert np.count_nonzero(grad.w) == 2
    assert not grad.V.any()


def test_gradient_matches_finite_differences():
    rng = np.random.default_rng(2024)
    h = 1e-5

    def relative_error(analytic, numeric):
        return abs(analytic - numeric) / max(abs(analytic), abs(numeric), 1e-3)

    for _ in range(100):
        model = random_model(rng)
        indices = rng.integers(0, model.dimension, size=5)
        label = int(rng.integers(0, 2))
        grad = gradient(model, indices, label)

        def numeric(get, put):
            original = get()
            put(original + h)
            up = example_loss(model, indices, label)
            put(original - h)
            down = example_loss(model, indices, label)
            put(original)
            return (up - down) / (2 * h)

        def set_w0(value):
            model.w0 = value

        assert relative_error(grad.w0, numeric(lambda: model.w0, set_w0)) < 1e-4
        for j in set(indices.tolist()):
            def set_w(value, j=j):
                model.w[j] = value

            assert relative_error(grad.w[j], numeric(lambda j=j: model.w[j], set_w)) < 1e-4
            for f in range(model.k):
                def set_v(value, j=j, f=f):
                    model.V[j, f] = value

                assert relative_error(grad.V[j, f], numeric(lambda j=j, f=f: model.V[j, f], set_v)) < 1e-4

        inactive = np.setdiff1d(np.arange(model.dimension), indices)
        assert not grad.w[inactive].any()
        assert not grad.V[inactive].any()


def test_training_is_deterministic(small_dataset):
    events = list(small_dataset.train_events)[:300]
    first = train(events, small_train_config(epochs=1)).model
    second = train(events, small_train_config(epochs=1)).model

    assert first.w0 == second.w0
    assert np.array_equal(first.w, second.w)
    assert np.array_equal(first.V, second.V)


def test_training_fits_a_repeated_click():
    events = [make_event(10, click=1, hour=4)] * 10
    result = train(events, TrainConfig(epochs=50, learning_rate=0.05, hash_bits=8, k=2))

    assert result.model.predict_event(events[0]) > 0.9
    assert len(result.epoch_losses) == 50
    assert result.final_loss < result.epoch_losses[0]


def test_training_on_negatives_only_drives_ctr_down():
    events = [make_event(10, hour=h % 24, slot=str(h)) for h in range(300)]
    model = train(events, TrainConfig(epochs=20, learning_rate=0.05, hash_bits=10, k=2)).model

    assert score_events(model, events).mean() < 0.01


def test_training_reduces_loss_on_synthetic_logs(small_dataset, small_model):
    events = list(small_dataset.train_events)
    untrained = FMModel.zeros(small_model.indexer, small_model.k)
    assert log_loss(small_model, events) < log_loss(untrained, events)


def test_divergent_learning_rate_is_reported():
    events = [make_event(10 + i, click=i % 2, hour=i % 24, slot=str(i)) for i in range(50)]
    with pytest.raises(NumericalDivergence):
        train(events, TrainConfig(epochs=2, learning_rate=1e300, hash_bits=8, k=2, init_sigma=0.01))


@pytest.mark.parametrize('changes', [{'epochs': 0}, {'learning_rate': 0.0}, {'k': 0}, {'hash_bits': 31}])
def test_train_config_is_validated(changes):
    with pytest.raises(InvalidParams):
        TrainConfig(**changes).validate()


def test_train_config_dict_round_trip():
    config = small_train_config()
    assert TrainConfig.from_dict(config.to_dict()) == config


def test_train_rejects_empty_input():
    with pytest.raises(InvalidParams):
        train([], small_train_config())


def test_batched_scores_match_single_predictions(small_dataset, small_model):
    events = list(small_dataset.train_events)[:50]
    batched = score_events(small_model, events)
    single = [small_model.predict_event(e) for e in events]
    assert batched == pytest.approx(single, abs=1e-12)


def test_theta_0_is_the_mean_train_pctr(small_dataset, small_model):
    events = list(small_dataset.train_events)
    assert mean_train_ctr(small_model, events) == pytest.approx(score_events(small_model, events).mean())
    assert mean_train_ctr(FMModel.zeros(FeatureIndexer(dimension=16), 2), [make_event(1)]) == 0.5
    with pytest.raises(InvalidParams):
        mean_train_ctr(small_model, [])


def test_log_loss_of_zero_model():
    model = FMModel.zeros(FeatureIndexer(dimension=16), k=2)
    assert log_loss(model, [make_event(1, click=1), make_event(2)]) == pytest.approx(math.log(2))


def test_model_store_round_trip(tmp_path, small_dataset, small_model):
    path = model_path(str(tmp_path / 'models'), 'small')
    save_model(small_model, path, train_config=small_train_config(), campaign_id='small', theta_0=0.03)
    loaded, metadata = load_model(path)

    events = list(small_dataset.train_events)[:20]
    assert path.endswith('fm_small.npz')
    assert metadata['theta_0'] == 0.03
    assert metadata['train_config']['hash_bits'] == small_train_config().hash_bits
    assert np.array_equal(score_events(loaded, events), score_events(small_model, events))


def test_model_store_rejects_foreign_files(tmp_path):
    path = tmp_path / 'other.npz'
    metadata = {'format': 'other/1', 'indexer': {'dimension': 4, 'salt': ''}, 'k': 1}
    np.savez_compressed(path, w0=np.array(0.0), w=np.zeros(4), V=np.zeros((4, 1)),
                        metadata=np.array(json.dumps(metadata)))
    with pytest.raises(InvalidParams):
        load_model(str(path))

    metadata['format'] = FORMAT_TAG
    np.savez_compressed(path, w0=np.array(0.0), w=np.zeros(8), V=np.zeros((4, 1)),
                        metadata=np.array(json.dumps(metadata)))
    with pytest.raises(InvalidParams):
        load_model(str(path))

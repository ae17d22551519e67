import os

import hypothesis
import numpy as np
import pytest

from bidwright.ctr.training import TrainConfig, mean_train_ctr, train
from bidwright.dataset.events import ImpressionEvent
from bidwright.dataset.partition import split_and_partition
from bidwright.dataset.synth import SynthParams, synthesize_events

np.seterr(all="warn")

hypothesis.settings.register_profile("fast", max_examples=5)
hypothesis.settings.register_profile("ci", max_examples=300, deadline=None)
hypothesis.settings.register_profile("debugger", report_multiple_bugs=False)
hypothesis.settings.load_profile(os.environ.get("HYPOTHESIS_PROFILE", "default"))

SMALL_VOCABULARY = {'region': 6, 'city': 12, 'adexchange': 3, 'domain': 30, 'slotid': 20, 'creative': 4}
TEST_HASH_BITS = 12


def make_event(price, click=0, hour=0, day=0, slot='1', campaign_id='c'):
    return ImpressionEvent(campaign_id=campaign_id, day_index=day, hour=hour, market_price=price, click=click,
                           features=(('slotid', slot), ('hour', str(hour))))


def small_params(campaign_id='small', **overrides):
    values = dict(campaign_id=campaign_id, days=5, events_per_day=600, vocabulary=dict(SMALL_VOCABULARY),
                  base_logit=-3.5)
    values.update(overrides)
    return SynthParams(**values)


def small_train_config(**overrides):
    values = dict(epochs=2, learning_rate=0.05, hash_bits=TEST_HASH_BITS, k=4, rng_seed=3)
    values.update(overrides)
    return TrainConfig(**values)


def tiny_run_document(output_dir, **overrides):
    document = {
        'campaigns': [{'id': 'tiny', 'source': 'synth', 'seed': 11,
                       'synth': {'days': 4, 'events_per_day': 300, 'base_logit': -3.0,
                                 'vocabulary': dict(SMALL_VOCABULARY)}}],
        'fractions': ['1/2', '1/8', '1/32'],
        'strategies': ['lp'],
        'bidders': ['baseline', 'agent'],
        'backend': {'kind': 'stub-zero'},
        'ctr': {'epochs': 1, 'learning_rate': 0.05, 'hash_bits': 10, 'k': 2},
        'ctr_seed': 5,
        'output_dir': str(output_dir),
    }
    document.update(overrides)
    return document


@pytest.fixture(scope='session')
def small_dataset():
    events, _ = synthesize_events(7, small_params())
    return split_and_partition(events, test_day_count=3, steps_per_day=24, campaign_id='small')


@pytest.fixture(scope='session')
def small_model(small_dataset):
    return train(list(small_dataset.train_events), small_train_config()).model


@pytest.fixture(scope='session')
def small_campaign(small_dataset, small_model):
    return small_dataset.with_theta_0(mean_train_ctr(small_model, list(small_dataset.train_events)))

import numpy as np
import pytest
import torch

from vesselpipe.data import preprocess
from vesselpipe.errors import ConfigurationError
from vesselpipe.losses import ClassWeights, WeightSampler
from vesselpipe.nets import build_unet, receptive_geometry
from vesselpipe.stage1 import (
    TrainConfig,
    infer_likelihood,
    quantize,
    read_trace_csv,
    seeded_rng,
    threshold_likelihood,
    train_stage1,
    write_trace_csv,
)
from vesselpipe.synthetic import make_samples

TINY = dict(depth=2, input_size=60, base_channels=4, batch_size=4, learning_rate=3e-3)


@pytest.fixture(scope="module")
def samples():
    return [preprocess(s) for s in make_samples(4, size=(48, 48), seed=1)]


@pytest.fixture(scope="module")
def trained(samples):
    cfg = TrainConfig(epochs=8, weight_sampler=WeightSampler(1, 10, 1), **TINY)
    return train_stage1(samples[:3], samples[3:], cfg)


def test_quantize():
    assert quantize(np.array([0.0, 0.5, 1.0, 0.499])).tolist() == [0, 128, 255, 127]


def test_threshold_at_half():
    assert threshold_likelihood(np.array([127, 128])).tolist() == [0, 1]


def test_seeded_rng_streams():
    a = seeded_rng(0, 1, 2).random(3)
    assert np.array_equal(a, seeded_rng(0, 1, 2).random(3))
    assert not np.array_equal(a, seeded_rng(0, 2, 1).random(3))


def test_trace(trained):
    assert len(trained.trace) == 8
    assert [r.epoch for r in trained.trace.records] == list(range(1, 9))
    assert 1 <= trained.best_epoch <= 8
    for r in trained.trace.records:
        assert all(w in range(1, 11) for pair in r.drawn_weights for w in pair)


def test_loss_decreases(trained):
    losses = [r.train_loss for r in trained.trace.records]
    assert np.mean(losses[-3:]) < np.mean(losses[:3])


def test_deterministic(samples, trained):
    cfg = TrainConfig(epochs=8, weight_sampler=WeightSampler(1, 10, 1), **TINY)
    again = train_stage1(samples[:3], samples[3:], cfg)
    assert [r.train_loss for r in again.trace.records] == [r.train_loss for r in trained.trace.records]
    for k, v in trained.final.state_dict.items():
        assert torch.equal(v, again.final.state_dict[k])


def test_fixed_weights(samples):
    cfg = TrainConfig(epochs=1, weight_sampler=None, fixed_weights=ClassWeights(1, 5), **TINY)
    res = train_stage1(samples[:2], samples[2:3], cfg)
    assert all(pair == (1, 5) for pair in res.trace.records[0].drawn_weights)


def test_requires_one_weight_source(samples):
    cfg = TrainConfig(epochs=1, weight_sampler=WeightSampler(1, 2, 1), fixed_weights=ClassWeights(1, 1), **TINY)
    with pytest.raises(ConfigurationError):
        train_stage1(samples[:1], samples[1:2], cfg)


def test_requires_validation(samples):
    with pytest.raises(ValueError, match="validation"):
        train_stage1(samples[:1], [], TrainConfig(epochs=1, **TINY))


def test_requires_preprocessing():
    raw = make_samples(2, size=(32, 32))
    with pytest.raises(ValueError, match="preprocessed"):
        train_stage1(raw[:1], raw[1:], TrainConfig(epochs=1, **TINY))


def test_infer_dimensions(samples, trained):
    lik = infer_likelihood(trained.best, samples[0])
    assert lik.values.shape == samples[0].shape and lik.values.dtype == np.uint8
    assert lik.source_id == samples[0].id


def test_infer_odd_size():
    s = preprocess(make_samples(1, size=(37, 53))[0])
    net = build_unet(receptive_geometry(2, 60, base_channels=4))
    assert infer_likelihood(net, s).values.shape == (37, 53)


def test_trace_csv_round_trip(tmp_path, trained):
    write_trace_csv(trained.trace, tmp_path / "trace.csv")
    back = read_trace_csv(tmp_path / "trace.csv")
    assert len(back) == len(trained.trace)
    for a, b in zip(back.records, trained.trace.records):
        assert a.val_precision == pytest.approx(b.val_precision, abs=1e-6)
        assert a.drawn_weights[0][1] == pytest.approx(np.mean([w for _, w in b.drawn_weights]), abs=1e-4)

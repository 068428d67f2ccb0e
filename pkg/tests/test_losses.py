import math

import numpy as np
import pytest
import torch
from hypothesis import given, settings
from hypothesis import strategies as st

from vesselpipe.errors import ConfigurationError
from vesselpipe.losses import (
    ClassWeights,
    PixelPrediction,
    WeightSampler,
    dice_loss,
    dice_loss_grad,
    dynamic_cross_entropy,
    dynamic_dice_loss,
    f_beta_from_pr,
    f_beta_score,
    sample_class_weights,
    sample_weight,
    weighted_cross_entropy,
    weighted_cross_entropy_from_probs,
    weighted_cross_entropy_grad,
)


def one_pixel(q_vessel, target=1):
    probs = torch.tensor([[[[1 - q_vessel]], [[q_vessel]]]], dtype=torch.float64)
    return PixelPrediction(probs, torch.tensor([[[target]]]))


def random_pred(rng, shape=(2, 4, 5), with_mask=True):
    qv = rng.uniform(0.01, 0.99, size=shape)
    probs = np.stack([1 - qv, qv], axis=1)
    target = rng.integers(0, 2, size=shape)
    mask = rng.random(shape) < 0.8 if with_mask else None
    if mask is not None:
        mask.flat[0] = True
    return PixelPrediction(torch.from_numpy(probs), torch.from_numpy(target),
                           None if mask is None else torch.from_numpy(mask))


def hard_pred(tp, fp, fn, tn=0):
    """Binary prediction with the given confusion counts."""
    q = [1] * tp + [1] * fp + [0] * fn + [0] * tn
    t = [1] * tp + [0] * fp + [1] * fn + [0] * tn
    qv = torch.tensor(q, dtype=torch.float64).reshape(1, 1, -1)
    return PixelPrediction(torch.cat([1 - qv, qv]).unsqueeze(0).reshape(1, 2, 1, -1),
                           torch.tensor(t).reshape(1, 1, -1))


class TestWeightSampler:
    def test_integer_range(self):
        s = WeightSampler(1, 100, 1)
        rng = np.random.default_rng(0)
        draws = {sample_weight(s, rng) for _ in range(5000)}
        assert draws <= set(float(v) for v in range(1, 101))
        assert len(draws) > 90

    def test_singleton(self):
        rng = np.random.default_rng(1)
        assert all(sample_weight(WeightSampler(1, 1, 1), rng) == 1 for _ in range(50))

    def test_fractional_grid_is_uniform(self):
        s = WeightSampler(1, 2, 0.1)
        assert s.n_values == 11
        rng = np.random.default_rng(2)
        draws = np.array([sample_weight(s, rng) for _ in range(10_000)])
        grid = [round(1 + 0.1 * i, 12) for i in range(11)]
        for g in grid:
            assert abs(np.mean(draws == g) - 1 / 11) < 0.02
        assert set(draws) == set(grid)

    @pytest.mark.parametrize("args", [(2, 1, 1), (1, 2, 0), (1, 2, -0.5), (-1, 2, 1)])
    def test_invalid(self, args):
        with pytest.raises(ConfigurationError):
            WeightSampler(*args)

    def test_two_draws_per_call(self):
        s = WeightSampler(1, 100, 1)
        a = sample_class_weights(s, np.random.default_rng(5))
        rng = np.random.default_rng(5)
        assert a == ClassWeights(sample_weight(s, rng), sample_weight(s, rng))


class TestWeightedCrossEntropy:
    def test_perfect_prediction(self):
        pred = PixelPrediction(torch.tensor([[[[1.0, 0.0]], [[0.0, 1.0]]]], dtype=torch.float64),
                               torch.tensor([[[0, 1]]]))
        assert float(weighted_cross_entropy(pred, ClassWeights(3, 7))) == 0.0

    def test_half_vessel(self):
        assert float(weighted_cross_entropy(one_pixel(0.5), ClassWeights(1, 1))) == pytest.approx(0.6931, abs=1e-4)

    def test_weighted_half_vessel(self):
        assert float(weighted_cross_entropy(one_pixel(0.5), ClassWeights(1, 10))) == pytest.approx(10 * math.log(2), rel=1e-12)

    def test_log_floor(self):
        loss = weighted_cross_entropy(one_pixel(0.0), ClassWeights(1, 1))
        assert float(loss) == pytest.approx(-math.log(1e-12))

    def test_empty_mask(self):
        pred = random_pred(np.random.default_rng(0))
        pred.valid_mask[:] = False
        with pytest.raises(ValueError, match="no pixels to score"):
            weighted_cross_entropy(pred, ClassWeights(1, 1))

    def test_linearity(self):
        rng = np.random.default_rng(3)
        for _ in range(10):
            pred = random_pred(rng)
            c = rng.uniform(0.1, 20)
            base = float(weighted_cross_entropy(pred, ClassWeights(2, 5)))
            scaled = float(weighted_cross_entropy(pred, ClassWeights(2 * c, 5 * c)))
            assert scaled == pytest.approx(c * base, rel=1e-12)

    def test_rejects_unnormalised(self):
        with pytest.raises(ValueError):
            PixelPrediction(torch.full((1, 2, 2, 2), 0.7, dtype=torch.float64), torch.zeros(1, 2, 2))

    def test_closed_form_gradient_matches_autograd(self):
        rng = np.random.default_rng(4)
        pred = random_pred(rng)
        w = ClassWeights(3, 11)
        probs = pred.probs.clone().requires_grad_(True)
        weighted_cross_entropy_from_probs(probs, pred.target, w, pred.valid_mask).backward()
        closed = weighted_cross_entropy_grad(pred.probs.numpy(), pred.target.numpy(), w, pred.valid_mask.numpy())
        np.testing.assert_allclose(probs.grad.numpy(), closed, rtol=1e-12, atol=1e-15)


class TestDynamicCrossEntropy:
    def test_degenerate_sampler_is_plain_cross_entropy(self):
        rng = np.random.default_rng(0)
        for _ in range(20):
            pred = random_pred(rng)
            loss, drawn = dynamic_cross_entropy(pred, WeightSampler(1, 1, 1), np.random.default_rng(9))
            assert drawn == ClassWeights(1, 1)
            assert abs(float(loss) - float(weighted_cross_entropy(pred, ClassWeights(1, 1)))) < 1e-12

    def test_deterministic(self):
        pred = random_pred(np.random.default_rng(1))
        s = WeightSampler(1, 100, 1)
        a = dynamic_cross_entropy(pred, s, np.random.default_rng(42))
        b = dynamic_cross_entropy(pred, s, np.random.default_rng(42))
        assert float(a[0]) == float(b[0]) and a[1] == b[1]

    def test_replayed_draw(self):
        pred = random_pred(np.random.default_rng(2))
        s = WeightSampler(1, 100, 1)
        loss, drawn = dynamic_cross_entropy(pred, s, np.random.default_rng(123))
        replay = sample_class_weights(s, np.random.default_rng(123))
        assert drawn == replay
        assert float(loss) == float(weighted_cross_entropy(pred, replay))


class TestFBeta:
    def test_equal_precision_recall(self):
        for beta in (0.3, 1, 2, 7):
            assert f_beta_from_pr(0.8, 0.8, beta) == pytest.approx(0.8, abs=1e-6)

    def test_beta_one(self):
        assert f_beta_from_pr(0.6, 0.9, 1.0) == pytest.approx(0.72, abs=1e-6)

    def test_from_counts(self):
        # 9 of 10 vessel pixels found, 15 predicted: P = 0.6, R = 0.9
        pred = hard_pred(tp=9, fp=6, fn=1, tn=20)
        assert float(f_beta_score(pred, 1.0)) == pytest.approx(0.72, abs=1e-6)

    def test_perfect(self):
        assert float(f_beta_score(hard_pred(5, 0, 0, 5), 1.7)) == pytest.approx(1.0, abs=1e-6)

    def test_invalid_beta(self):
        with pytest.raises(ConfigurationError):
            f_beta_score(hard_pred(1, 1, 1), 0.0)

    @settings(max_examples=200, deadline=None)
    @given(st.floats(0, 1), st.floats(0, 1), st.floats(0.05, 20))
    def test_bounded(self, p, r, beta):
        assert 0 <= f_beta_from_pr(p, r, beta) <= 1

    @settings(max_examples=100, deadline=None)
    @given(st.floats(0.01, 1), st.floats(0.01, 1))
    def test_beta_one_is_harmonic_mean(self, p, r):
        assert f_beta_from_pr(p, r, 1.0, eps=0.0) == pytest.approx(2 * p * r / (p + r), rel=1e-12)


class TestDiceLoss:
    def test_perfect_any_beta(self):
        pred = hard_pred(8, 0, 0, 8)
        for seed in range(5):
            loss, beta = dynamic_dice_loss(pred, WeightSampler(1, 2, 0.1), np.random.default_rng(seed))
            assert float(loss) == pytest.approx(0, abs=1e-6)

    def test_degenerate_sampler_is_dice(self):
        pred = hard_pred(tp=9, fp=6, fn=1, tn=20)
        loss, beta = dynamic_dice_loss(pred, WeightSampler(1, 1, 1), np.random.default_rng(0))
        assert beta == 1
        assert float(loss) == pytest.approx(1 - 0.72, abs=1e-6)

    def test_seeded_beta_with_equal_precision_recall(self):
        s = WeightSampler(1, 2, 0.1)
        seed = next(i for i in range(1000) if sample_weight(s, np.random.default_rng(i)) == 1.3)
        pred = hard_pred(tp=5, fp=5, fn=5, tn=5)  # P = R = 0.5
        loss, beta = dynamic_dice_loss(pred, s, np.random.default_rng(seed))
        assert beta == 1.3
        assert float(loss) == pytest.approx(0.5, abs=1e-6)

    def test_closed_form_gradient_matches_autograd(self):
        rng = np.random.default_rng(7)
        q = torch.from_numpy(rng.uniform(0.05, 0.95, (2, 3, 4))).requires_grad_(True)
        t = torch.from_numpy(rng.integers(0, 2, (2, 3, 4)))
        probs = torch.stack([1 - q, q], dim=1)
        pred = PixelPrediction.__new__(PixelPrediction)
        pred.probs, pred.target, pred.valid_mask = probs, t, None
        dice_loss(pred, 1.6).backward()
        np.testing.assert_allclose(q.grad.numpy(), dice_loss_grad(q.detach().numpy(), t.numpy(), 1.6), rtol=1e-10)

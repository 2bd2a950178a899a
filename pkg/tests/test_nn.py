import numpy as np
import pytest

import mixtag.nn as nn
from mixtag.errors import EmptyInput, NonFiniteGradient, ShapeError
from mixtag.features import FeatureStats
from mixtag.nn import (
    ConvBlockParams,
    TrainState,
    adam_step,
    attention_pool,
    bce_loss,
    conv_block_forward,
    derive_depth,
    elu,
    grad_check,
    init_model,
    load_checkpoint,
    loss_and_grads,
    model_forward,
    save_checkpoint,
    sigmoid,
)


class TestDeriveDepth:
    def test_128_bins_gives_fig1_architecture(self):
        count, plan = derive_depth(128)
        assert count == 7
        assert plan == [8, 16, 32, 64, 64, 64, 64]

    def test_64_bins(self):
        assert derive_depth(64) == (6, [8, 16, 32, 64, 64, 64])

    def test_one_bin_minimum(self):
        assert derive_depth(1) == (1, [8])

    @pytest.mark.parametrize("bins,blocks", [(2, 1), (3, 2), (4, 2), (5, 3), (8, 3)])
    def test_ceil_halvings(self, bins, blocks):
        assert derive_depth(bins)[0] == blocks


class TestElu:
    def test_definition(self):
        x = np.array([-50.0, -1.0, 0.0, 0.5, 3.0])
        out = elu(x)
        assert out[2] == 0.0
        assert np.allclose(out[3:], x[3:])
        assert abs(out[0] - (-1.0)) < 1e-12
        assert abs(out[1] - (np.exp(-1) - 1)) < 1e-12


class TestConvBlock:
    def test_identity_kernel(self):
        # center weight 1, batch-norm + pooling excluded: conv layer alone
        kernel = np.zeros((1, 1, 3, 3))
        kernel[0, 0, 1, 1] = 1.0
        x = np.random.default_rng(0).standard_normal((2, 6, 5, 1))
        y, _ = nn._conv3x3_forward(x, kernel, np.zeros(1))
        assert np.allclose(y, x)

    def test_block_halves_frequency_preserves_time(self):
        rng = np.random.default_rng(1)
        params = init_model(128, rng=rng)
        x = rng.standard_normal((2, 1, 124, 128))
        widths = [128]
        for blk in params.blocks:
            x = conv_block_forward(x, blk, training=False)
            widths.append(x.shape[3])
            assert x.shape[2] == 124
        assert widths == [128, 64, 32, 16, 8, 4, 2, 1]
        assert x.shape[1] == 64

    def test_ceil_mode_on_odd_width(self):
        rng = np.random.default_rng(2)
        params = init_model(5, rng=rng, depth=1)
        x = rng.standard_normal((2, 1, 4, 5))
        y = conv_block_forward(x, params.blocks[0], training=False)
        assert y.shape[3] == 3

    def test_batchnorm_training_statistics(self):
        rng = np.random.default_rng(3)
        blk = ConvBlockParams(
            kernel=np.zeros((4, 1, 3, 3)), bias=np.zeros(4),
            gamma=np.ones(4), beta=np.zeros(4),
            running_mean=np.zeros(4), running_var=np.ones(4),
        )
        x = rng.standard_normal((8, 10, 6, 4)) * 3.0 + 1.5  # channels-last
        y, _ = nn._batchnorm_forward(x, blk, training=True)
        assert np.abs(y.mean(axis=(0, 1, 2))).max() < 1e-5
        assert np.abs(y.var(axis=(0, 1, 2)) - 1.0).max() < 1e-4

    def test_dropout_inference_identity(self):
        rng = np.random.default_rng(4)
        x = rng.standard_normal((3, 4, 4, 2))
        out, mask = nn._dropout_forward(x, 0.1, training=False, rng=rng)
        assert out is x and mask is None

    def test_dropout_preserves_expectation(self):
        rng = np.random.default_rng(5)
        x = rng.uniform(0.5, 2.0, (4, 4, 4))
        acc = np.zeros_like(x)
        k = 20000
        for _ in range(k):
            out, _ = nn._dropout_forward(x, 0.1, training=True, rng=rng)
            acc += out
        assert np.abs(acc / k / x - 1.0).max() < 0.02


class TestAttentionPool:
    def test_uniform_scores_equal_plain_average(self):
        rng = np.random.default_rng(6)
        logits = rng.standard_normal((3, 10, 7))
        scores = np.full((3, 10, 1), 0.77)
        out = attention_pool(scores, logits)
        assert np.allclose(out, sigmoid(logits).mean(axis=1), atol=1e-12)

    def test_saturated_score_selects_frame(self):
        rng = np.random.default_rng(7)
        logits = rng.standard_normal((1, 5, 7))
        scores = np.full((1, 5), -1.0)
        scores[0, 3] = 1e6
        out = attention_pool(scores, logits)
        assert np.abs(out[0] - sigmoid(logits[0, 3])).max() < 1e-6

    def test_against_scripted_oracle(self):
        rng = np.random.default_rng(8)
        scores = rng.standard_normal((4, 9))
        logits = rng.standard_normal((4, 9, 7))
        out = attention_pool(scores, logits)
        for i in range(4):
            e = np.exp(scores[i] - scores[i].max())
            a = e / e.sum()
            expected = sum(a[t] * 1.0 / (1.0 + np.exp(-logits[i, t])) for t in range(9))
            assert np.abs(out[i] - expected).max() < 1e-6

    def test_attention_weights_sum_to_one(self):
        rng = np.random.default_rng(9)
        _, (a, _) = nn._attention_pool_forward(rng.standard_normal((5, 12)),
                                               rng.standard_normal((5, 12, 7)))
        assert np.abs(a.sum(axis=1) - 1.0).max() < 1e-6

    def test_empty_time_axis(self):
        with pytest.raises(EmptyInput):
            attention_pool(np.zeros((2, 0)), np.zeros((2, 0, 7)))

    def test_outputs_in_unit_interval(self):
        rng = np.random.default_rng(10)
        out = attention_pool(rng.standard_normal((6, 8)) * 5,
                             rng.standard_normal((6, 8, 7)) * 5)
        assert ((out > 0) & (out < 1)).all()


class TestBceLoss:
    def test_half_prediction(self):
        loss, _ = bce_loss(np.array([0.5]), np.array([1.0]))
        assert abs(loss - np.log(2.0)) < 1e-12

    def test_perfect_prediction_after_clamp(self):
        loss, _ = bce_loss(np.array([1.0, 0.0]), np.array([1.0, 0.0]))
        assert loss <= 1e-6

    def test_gradient_against_finite_differences(self):
        rng = np.random.default_rng(11)
        p = rng.uniform(0.05, 0.95, (4, 7))
        y = (rng.random((4, 7)) < 0.5).astype(float)
        _, grad = bce_loss(p, y)
        h = 1e-7
        for idx in [(0, 0), (1, 3), (3, 6), (2, 2)]:
            pp, pm = p.copy(), p.copy()
            pp[idx] += h
            pm[idx] -= h
            numeric = (bce_loss(pp, y)[0] - bce_loss(pm, y)[0]) / (2 * h)
            assert abs(grad[idx] - numeric) / max(abs(numeric), 1e-9) < 1e-6

    def test_soft_targets_nonnegative(self):
        rng = np.random.default_rng(12)
        for _ in range(50):
            p = rng.uniform(0.01, 0.99, 7)
            y = rng.uniform(0, 1, 7)
            assert bce_loss(p, y)[0] >= 0.0

    def test_shape_mismatch(self):
        with pytest.raises(ShapeError):
            bce_loss(np.zeros((2, 7)), np.zeros((3, 7)))


class TestAdam:
    def _state(self, seed=13):
        params = init_model(4, rng=np.random.default_rng(seed), depth=1)
        return TrainState.new(params)

    def test_first_step_magnitude(self):
        state = self._state()
        grads = {name: np.ones_like(arr) * np.sign(np.random.default_rng(0).standard_normal(arr.shape) + 2)
                 for name, arr in state.params.named_parameters()}
        before = {name: arr.copy() for name, arr in state.params.named_parameters()}
        adam_step(state, grads, lr=1e-3)
        for name, arr in state.params.named_parameters():
            delta = np.abs(arr - before[name])
            assert np.abs(delta - 1e-3).max() < 1e-6
        assert state.step == 1

    def test_zero_gradients_no_change(self):
        state = self._state()
        before = {name: arr.copy() for name, arr in state.params.named_parameters()}
        adam_step(state, {name: np.zeros_like(arr) for name, arr in state.params.named_parameters()})
        for name, arr in state.params.named_parameters():
            assert np.array_equal(arr, before[name])

    def test_deterministic_runs(self):
        results = []
        for _ in range(2):
            state = self._state(seed=77)
            rng = np.random.default_rng(5)
            for _ in range(3):
                grads = {name: rng.standard_normal(arr.shape)
                         for name, arr in state.params.named_parameters()}
                adam_step(state, grads)
            results.append(np.concatenate([arr.ravel() for _, arr in state.params.named_parameters()]))
        assert np.array_equal(results[0], results[1])

    def test_non_finite_gradient(self):
        state = self._state()
        grads = {name: np.zeros_like(arr) for name, arr in state.params.named_parameters()}
        grads["cls.b"] = grads["cls.b"] + np.nan
        with pytest.raises(NonFiniteGradient):
            adam_step(state, grads)


class TestModelForward:
    def test_batch44_output_shape(self):
        rng = np.random.default_rng(14)
        params = init_model(8, rng=rng)
        probs = model_forward(rng.standard_normal((44, 20, 8)), params)
        assert probs.shape == (44, 7)

    def test_outputs_in_unit_interval(self):
        rng = np.random.default_rng(15)
        params = init_model(8, rng=rng)
        probs = model_forward(rng.standard_normal((10, 12, 8)) * 4, params)
        assert ((probs > 0) & (probs < 1)).all()

    def test_frequency_collapses_to_one_for_auto_depth(self):
        rng = np.random.default_rng(16)
        params = init_model(128, rng=rng)
        x = rng.standard_normal((2, 1, 124, 128))
        for blk in params.blocks:
            x = conv_block_forward(x, blk, training=False)
        assert x.shape[3] == 1

    def test_wrong_bins_rejected(self):
        params = init_model(8, rng=np.random.default_rng(17))
        with pytest.raises(ShapeError):
            model_forward(np.zeros((2, 10, 9)), params)

    def test_loss_decreases_over_50_steps(self):
        rng = np.random.default_rng(18)
        params = init_model(6, rng=rng, depth=2)
        state = TrainState.new(params)
        x = rng.standard_normal((16, 10, 6))
        y = (rng.random((16, 7)) < 0.4).astype(float)
        drop = np.random.default_rng(19)
        losses = []
        for _ in range(50):
            loss, grads, _ = loss_and_grads(state.params, x, y, training=True, rng=drop)
            adam_step(state, grads)
            losses.append(loss)
        assert np.isfinite(losses).all()
        assert losses[-1] < losses[0]


class TestGradCheck:
    def test_full_stack(self):
        assert grad_check(kind="full", seed=0).worst < 1e-4

    def test_dropout_frozen_mask(self):
        assert grad_check(kind="dropout", seed=1).worst < 1e-4

    def test_linear_quadratic_is_exact(self):
        assert grad_check(kind="linear", seed=2).worst < 1e-8

    def test_report_structure(self):
        rep = grad_check(kind="full", seed=3)
        assert "block0.kernel" in rep.rel_errors and "cls.w" in rep.rel_errors
        assert rep.passed(1e-4)


class TestCheckpoint:
    def test_round_trip(self, tmp_path):
        rng = np.random.default_rng(20)
        params = init_model(8, rng=rng, depth=2)
        state = TrainState.new(params)
        x = rng.standard_normal((6, 10, 8))
        y = (rng.random((6, 7)) < 0.4).astype(float)
        drop = np.random.default_rng(21)
        for _ in range(3):
            loss, grads, _ = loss_and_grads(state.params, x, y, training=True, rng=drop)
            adam_step(state, grads)
        stats = FeatureStats(mean=rng.standard_normal(8), std=rng.uniform(0.5, 2, 8))
        path = tmp_path / "model.ckpt"
        save_checkpoint(path, state, stats)
        assert path.read_bytes()[:4] == b"MTMD"

        loaded, loaded_stats = load_checkpoint(path)
        assert loaded.step == state.step
        assert loaded.params.channels == state.params.channels
        for (name, arr), (_, back) in zip(state.params.named_parameters(),
                                          loaded.params.named_parameters()):
            assert np.abs(arr - back).max() < 1e-6, name
            assert np.abs(state.m[name] - loaded.m[name]).max() < 1e-6
        assert np.abs(loaded_stats.mean - stats.mean).max() < 1e-6
        # forward pass equivalence within float32 storage precision
        a = model_forward(x, state.params)
        b = model_forward(x, loaded.params)
        assert np.abs(a - b).max() < 1e-5

    def test_checkpoint_without_stats(self, tmp_path):
        state = TrainState.new(init_model(4, rng=np.random.default_rng(22), depth=1))
        save_checkpoint(tmp_path / "m.ckpt", state)
        loaded, stats = load_checkpoint(tmp_path / "m.ckpt")
        assert stats is None
        assert loaded.step == 0

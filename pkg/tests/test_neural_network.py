"""Tests for the MLP, batch normalization and Adam."""

import numpy as np
import pytest

from neurocalib.Modules import Autodiff_Tape as ops
from neurocalib.Modules import Neural_Network as nn
from neurocalib.Modules.General_Functions import DimensionError


# ============================================================================
# INITIALIZATION
# ============================================================================


class TestInit:
    """Tests for init_mlp and MlpParameters validation."""

    def test_deterministic_per_stream(self):
        """Same seed and stream give the same weights, other streams differ."""
        a = nn.init_mlp([4, 8, 4], seed=3, stream=0)
        b = nn.init_mlp([4, 8, 4], seed=3, stream=0)
        c = nn.init_mlp([4, 8, 4], seed=3, stream=1)
        np.testing.assert_array_equal(a.weights[0], b.weights[0])
        assert not np.allclose(a.weights[0], c.weights[0])

    def test_shapes_and_bn_state(self):
        """Weights are (in, out), one BN state per hidden layer."""
        params = nn.init_mlp([6, 10, 5, 2])
        assert [w.shape for w in params.weights] == [(6, 10), (10, 5), (5, 2)]
        assert len(params.bn_gamma) == 2
        np.testing.assert_array_equal(params.bn_running_var[1], np.ones(5))
        assert params.mode == "train"

    def test_he_uniform_range(self):
        """Initial weights stay within sqrt(6 / fan_in)."""
        params = nn.init_mlp([50, 20, 3])
        assert np.max(np.abs(params.weights[0])) <= np.sqrt(6.0/50)

    def test_zero_output(self):
        """With zero_output the network starts by outputting exactly zero."""
        params = nn.init_mlp([4, 8, 4], zero_output=True)
        x = np.random.default_rng(0).standard_normal((16, 4))*5.0
        np.testing.assert_array_equal(nn.mlp_forward(params, x), np.zeros((16, 4)))

    def test_validation(self):
        """Mismatched shapes and non-positive running variances are rejected."""
        params = nn.init_mlp([3, 4, 2])
        with pytest.raises(DimensionError):
            nn.MlpParameters([3, 4, 2], [np.zeros((3, 4))], [np.zeros(4)])
        bad = params.copy()
        bad.bn_running_var[0] = np.zeros(4)
        with pytest.raises(ValueError):
            nn.MlpParameters(bad.layer_dims, bad.weights, bad.biases, bad.bn_gamma, bad.bn_beta,
                             bad.bn_running_mean, bad.bn_running_var)


# ============================================================================
# FORWARD PASS
# ============================================================================


class TestForward:
    """Tests for mlp_forward and batch normalization."""

    def test_output_shape(self):
        """A batch of rows maps to a batch of outputs."""
        params = nn.init_mlp([4, 8, 3])
        assert nn.mlp_forward(params, np.ones((5, 4))+np.arange(4.0)).shape == (5, 3)

    def test_input_dimension_check(self):
        """Inputs of the wrong width raise DimensionError."""
        with pytest.raises(DimensionError):
            nn.mlp_forward(nn.init_mlp([4, 8, 3]), np.ones((5, 3)))

    def test_running_statistics_update(self):
        """A train-mode pass blends the batch statistics into the running ones."""
        params = nn.init_mlp([2, 4, 1], bn_momentum=0.5)
        x = np.random.default_rng(1).standard_normal((64, 2))*10.0+3.0
        z = x @ params.weights[0]
        nn.mlp_forward(params, x)
        np.testing.assert_allclose(params.bn_running_mean[0], 0.5*z.mean(axis=0))
        np.testing.assert_allclose(params.bn_running_var[0], 0.5+0.5*z.var(axis=0))

    def test_train_mode_batch_statistics(self):
        """In train mode each hidden feature is standardized over the batch."""
        params = nn.init_mlp([3, 8, 2])
        x = np.random.default_rng(4).standard_normal((128, 3))*4.0+2.0
        z = x @ params.weights[0]+params.biases[0]
        normalized = nn.batch_norm(params, 0, z)
        np.testing.assert_allclose(normalized.mean(axis=0), 0.0, atol=1e-12)
        np.testing.assert_allclose(normalized.var(axis=0), 1.0, rtol=1e-4)

    def test_train_mode_forward_matches_numpy(self):
        """A train-mode pass equals Dense, batch standardization, gamma/beta and ReLU written out."""
        params = nn.init_mlp([3, 5, 2], seed=6)
        params.bn_gamma[0] = np.linspace(0.5, 1.5, 5)
        params.bn_beta[0] = np.linspace(-0.2, 0.2, 5)
        x = np.random.default_rng(5).standard_normal((16, 3))
        z = x @ params.weights[0]+params.biases[0]
        h = np.maximum((z-z.mean(axis=0))/np.sqrt(z.var(axis=0)+params.bn_eps)*params.bn_gamma[0]+params.bn_beta[0], 0.0)
        expected = h @ params.weights[1]+params.biases[1]
        np.testing.assert_allclose(nn.mlp_forward(params, x), expected, rtol=1e-12, atol=1e-12)

    def test_eval_mode_rows_are_independent(self):
        """In eval mode a row's output doesn't depend on the rest of the batch."""
        params = nn.init_mlp([3, 6, 2]).eval()
        x = np.random.default_rng(2).standard_normal((10, 3))*4.0
        np.testing.assert_allclose(nn.mlp_forward(params, x)[:1], nn.mlp_forward(params, x[:1]), atol=1e-12)

    def test_eval_mode_keeps_running_statistics(self):
        """Eval-mode passes don't touch the running statistics."""
        params = nn.init_mlp([3, 6, 2]).eval()
        before = params.bn_running_mean[0].copy()
        nn.mlp_forward(params, np.ones((4, 3))*7.0)
        np.testing.assert_array_equal(params.bn_running_mean[0], before)

    def test_weight_gradient(self):
        """Taped gradient of sum(out^2) w.r.t. a first-layer weight matches central differences."""
        params = nn.init_mlp([3, 5, 2], seed=4)
        x = np.random.default_rng(3).standard_normal((6, 3))*3.0

        def loss_value(p):
            return float(np.sum(nn.mlp_forward(p, x)**2))

        tape = ops.Tape()
        loss = ops.reduce_sum(ops.square(nn.mlp_forward(params, x, tape)))
        grad = ops.backward(tape, loss).of_parameters(params)[("weights", 0)]
        step = 1e-6
        for index in [(0, 0), (1, 3), (2, 4)]:
            plus = params.copy()
            minus = params.copy()
            plus.weights[0][index] += step
            minus.weights[0][index] -= step
            expected = (loss_value(plus)-loss_value(minus))/(2.0*step)
            assert grad[index] == pytest.approx(expected, rel=1e-4, abs=1e-7)


# ============================================================================
# ADAM
# ============================================================================


class TestAdam:
    """Tests for adam_step."""

    def test_first_step_moves_by_learning_rate(self):
        """After one step with bias correction, every entry moves by about lr."""
        params = nn.init_mlp([2, 3, 1])
        before = params.weights[0].copy()
        grads = {("weights", 0): np.ones((2, 3))}
        nn.adam_step(params, grads, nn.AdamState(), lr=0.1)
        np.testing.assert_allclose(params.weights[0], before-0.1, atol=1e-6)

    def test_missing_gradients_leave_parameters(self):
        """Parameters without a gradient don't move."""
        params = nn.init_mlp([2, 3, 1])
        before = params.weights[1].copy()
        state = nn.AdamState()
        nn.adam_step(params, {("weights", 0): np.ones((2, 3))}, state)
        np.testing.assert_array_equal(params.weights[1], before)
        assert state.step == 1

    def test_gradient_shape_check(self):
        """A gradient of the wrong shape raises DimensionError."""
        params = nn.init_mlp([2, 3, 1])
        with pytest.raises(DimensionError):
            nn.adam_step(params, {("weights", 0): np.ones((3, 2))}, nn.AdamState())

    def test_minimizes_a_quadratic(self):
        """Repeated steps on the gradient of sum(b^2) drive the output bias towards zero."""
        params = nn.init_mlp([2, 3, 1])
        params.biases[1] = np.array([1.0])
        state = nn.AdamState()
        for _ in range(300):
            nn.adam_step(params, {("biases", 1): 2.0*params.biases[1]}, state, lr=0.05)
        assert abs(params.biases[1][0]) < 0.25

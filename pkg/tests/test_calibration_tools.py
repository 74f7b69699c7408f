"""Tests for calibrated ZF, the implicit pipeline and their trainers."""

import gc
import weakref
from dataclasses import replace

import numpy as np
import pytest

from neurocalib.Modules import Autodiff_Tape as ops
from neurocalib.Modules import Calibration_Tools as ct
from neurocalib.Modules.Beamforming_Tools import zf, sum_rate
from neurocalib.Modules.Channel_Model import generate_dataset, generate_sample, default_pilots, transmit_pilots
from neurocalib.Modules.Linear_Algebra import from_complex, hermitian, permute_rows
from neurocalib.Modules.Neural_Network import init_mlp, mlp_forward
from neurocalib.Modules.General_Functions import DimensionError, DivergenceError, SingularMatrixError


def identity_model(M, stream=0):
    """Untrained calibrated ZF: its network outputs exactly zero."""
    return ct.CalibratedZf(init_mlp([2*M, 8, 2*M], 0, stream, True)).eval()


def random_model(M):
    """Calibrated ZF with a non-zero random network in eval mode."""
    return ct.CalibratedZf(init_mlp([2*M, 8, 2*M], 0, 7, False), input_scale=2.0).eval()


def random_pipeline(cfg, Y, antenna_stage=True, user_stages=True):
    """Implicit pipeline in eval mode whose chosen stages hold non-zero random networks."""
    M, L = cfg.M, cfg.L
    uplink = ct.rms_scale(hermitian(ct.ls_estimate(Y, default_pilots(cfg))))
    zf_calib = ct.CalibratedZf(init_mlp([2*M, 8, 2*M], 0, 13, not user_stages), uplink)
    pipeline = ct.ImplicitPipeline(init_mlp([2*L, 8, 2*L], 0, 11, not antenna_stage),
                                   init_mlp([2*M, 8, 2*M], 0, 12, not user_stages),
                                   zf_calib, default_pilots(cfg), ct.rms_scale(Y), uplink)
    return pipeline.eval()


# ============================================================================
# ROW CALIBRATION
# ============================================================================


class TestCalibrateRows:
    """Tests for the shared-row residual networks."""

    def test_identity_at_initialization(self, crandn):
        """The untrained calibrated ZF is plain ZF."""
        H = from_complex(crandn(3, 6))
        V = ct.calibrated_zf_beamform(H, identity_model(6), 1.0).V.to_numpy()
        np.testing.assert_allclose(V, zf(H, 1.0).V.to_numpy(), atol=1e-14)

    def test_user_permutation_equivariance(self, crandn):
        """Permuting the users permutes the beamformer columns."""
        model = random_model(5)
        H = crandn(3, 5)
        order = [1, 2, 0]
        V = ct.calibrated_zf_beamform(from_complex(H), model, 1.0).V.to_numpy()
        V_permuted = ct.calibrated_zf_beamform(from_complex(H[order]), model, 1.0).V.to_numpy()
        np.testing.assert_allclose(V_permuted, V[:, order], atol=1e-10)

    def test_user_permutations_with_random_network(self, crandn):
        """Over 200 random user orders the calibrated ZF columns follow the users."""
        model = random_model(8)
        rng = np.random.default_rng(21)
        for _ in range(200):
            H = crandn(5, 8)
            order = rng.permutation(5)
            V = ct.calibrated_zf_beamform(from_complex(H), model, 1.0).V.to_numpy()
            V_permuted = ct.calibrated_zf_beamform(permute_rows(from_complex(H), order), model, 1.0).V.to_numpy()
            np.testing.assert_allclose(V_permuted, V[:, order], rtol=0, atol=1e-9)

    def test_antenna_permutations_with_random_network(self, crandn):
        """Over 200 random antenna orders the calibrated pilot rows follow the antennas."""
        mlp = init_mlp([8, 16, 8], 0, 9, False).eval()
        rng = np.random.default_rng(22)
        for _ in range(200):
            Y = from_complex(crandn(8, 4))
            order = rng.permutation(8)
            calibrated = ct.antenna_calibrate(Y, mlp, None, 1.5).to_numpy()
            permuted = ct.antenna_calibrate(permute_rows(Y, order), mlp, None, 1.5).to_numpy()
            np.testing.assert_allclose(permuted, calibrated[order], rtol=0, atol=1e-12)

    def test_rows_are_calibrated_independently(self, crandn):
        """A row's calibrated value doesn't depend on the other rows."""
        model = random_model(4)
        H = crandn(3, 4)
        full = ct.user_calibrate(from_complex(H), model.shared_mlp, None, model.input_scale).to_numpy()
        alone = ct.user_calibrate(from_complex(H[:1]), model.shared_mlp, None, model.input_scale).to_numpy()
        np.testing.assert_allclose(full[:1], alone, atol=1e-12)

    def test_batched_rows(self, crandn):
        """Batches are calibrated element by element."""
        model = random_model(4)
        H = crandn(5, 2, 4)
        batched = ct.user_calibrate(from_complex(H), model.shared_mlp, None, 2.0).to_numpy()
        single = ct.user_calibrate(from_complex(H[3]), model.shared_mlp, None, 2.0).to_numpy()
        np.testing.assert_allclose(batched[3], single, atol=1e-12)

    def test_dimension_check(self, crandn):
        """A network for another antenna count is rejected."""
        with pytest.raises(DimensionError):
            ct.calibrated_zf_beamform(from_complex(crandn(2, 5)), identity_model(6), 1.0)

    def test_rms_scale(self, crandn):
        """rms_scale is the RMS entry magnitude, 1 for an all-zero input."""
        assert ct.rms_scale(from_complex(np.zeros((2, 3)))) == 1.0
        assert ct.rms_scale(from_complex(np.full((2, 3), 3.0+4.0j))) == pytest.approx(5.0)


# ============================================================================
# LEAST SQUARES AND THE IMPLICIT PIPELINE
# ============================================================================


class TestImplicit:
    """Tests for ls_estimate, implicit_beamform and block_by_block_beamform."""

    def test_ls_recovers_noiseless_channel(self, small_cfg):
        """With noiseless pilots LS returns the uplink channel."""
        cfg = small_cfg.with_changes(sigma_ul_sq=0.0)
        sample = generate_sample(cfg, 0)
        P = default_pilots(cfg)
        Y = transmit_pilots(sample, P, cfg)
        np.testing.assert_allclose(ct.ls_estimate(Y, P).to_numpy(), sample.H_UL.to_numpy(), atol=1e-10)

    def test_ls_rank_deficient_pilots(self, crandn):
        """Two identical pilot rows raise SingularMatrixError."""
        row = crandn(1, 4)
        P = from_complex(np.vstack([row, row]))
        with pytest.raises(SingularMatrixError):
            ct.ls_estimate(from_complex(crandn(6, 4)), P)

    def test_untrained_pipeline_is_zf_on_the_estimate(self, small_cfg):
        """Identity networks reduce the pipeline to ZF on the LS estimate."""
        cfg = small_cfg.with_changes(sigma_ul_sq=0.0)
        dataset = generate_dataset(cfg, 4)
        pipeline = ct.new_implicit_pipeline(cfg, ct.TrainingHyper(hidden_zf=(8,), hidden_ls=(8,), hidden_map=(8,))).eval()
        V = ct.implicit_beamform(dataset.Y_p, pipeline, cfg.P_DL).V.to_numpy()
        expected = zf(hermitian(dataset.H_UL), cfg.P_DL).V.to_numpy()
        np.testing.assert_allclose(V, expected, rtol=1e-8, atol=1e-12)

    def test_antenna_permutation(self, small_cfg):
        """With identity user stages, permuting the antennas of Y_p permutes the beamformer rows."""
        Y = generate_dataset(small_cfg, 1).Y_p[0]
        pipeline = random_pipeline(small_cfg, Y, antenna_stage=True, user_stages=False)
        order = np.random.default_rng(5).permutation(small_cfg.M)
        V = ct.implicit_beamform(Y, pipeline, small_cfg.P_DL).V.to_numpy()
        V_permuted = ct.implicit_beamform(permute_rows(Y, order), pipeline, small_cfg.P_DL).V.to_numpy()
        np.testing.assert_allclose(V_permuted, V[order], rtol=1e-8, atol=1e-14)

    def test_antenna_permutation_reaches_the_ls_estimate(self, small_cfg):
        """Whatever the networks, the calibrated LS estimate rows follow the antenna order."""
        dataset = generate_dataset(small_cfg, 20)
        pipeline = random_pipeline(small_cfg, dataset.Y_p)
        rng = np.random.default_rng(6)

        def estimate(Y):
            calibrated = ct.antenna_calibrate(Y, pipeline.ls_calib_mlp, None, pipeline.pilot_scale)
            return ct.ls_estimate(calibrated, pipeline.pilots).to_numpy()

        for i in range(len(dataset)):
            Y = dataset.Y_p[i]
            order = rng.permutation(small_cfg.M)
            reference = estimate(Y)
            np.testing.assert_allclose(estimate(permute_rows(Y, order)), reference[order], rtol=0, atol=1e-9*np.max(np.abs(reference)))

    def test_pilot_permutation_permutes_users(self, small_cfg):
        """Reordering the pilot rows for the same Y_p reorders the beamformer columns."""
        cfg = small_cfg.with_changes(K=3, L=3)
        dataset = generate_dataset(cfg, 10)
        pipeline = random_pipeline(cfg, dataset.Y_p)
        rng = np.random.default_rng(7)
        for i in range(len(dataset)):
            order = rng.permutation(cfg.K)
            reordered = replace(pipeline, pilots=permute_rows(pipeline.pilots, order))
            V = ct.implicit_beamform(dataset.Y_p[i], pipeline, cfg.P_DL).V.to_numpy()
            V_permuted = ct.implicit_beamform(dataset.Y_p[i], reordered, cfg.P_DL).V.to_numpy()
            np.testing.assert_allclose(V_permuted, V[:, order], rtol=0, atol=1e-9)

    def test_ls_noise_level(self, crandn):
        """With noisy pilots the LS error per antenna averages sigma_ul^2 K / (P_UL L)."""
        M, K, L, P_UL, sigma_sq = 8, 2, 4, 1e-2, 1e-3
        P = np.sqrt(P_UL)*np.exp(-2j*np.pi*np.arange(K)[:, None]*np.arange(L)[None, :]/L)
        H = crandn(5000, M, K)
        N = np.sqrt(sigma_sq)*crandn(5000, M, L)
        error = ct.ls_estimate(from_complex(H @ P+N), from_complex(P)).to_numpy()-H
        measured = np.mean(np.sum(np.abs(error)**2, axis=-1))
        assert measured == pytest.approx(sigma_sq*K/(P_UL*L), rel=0.05)

    def test_block_by_block_with_identity_map(self, small_cfg):
        """An identity channel map reduces block-by-block to ZF on LS."""
        dataset = generate_dataset(small_cfg, 3)
        channel_map = ct.ChannelMap(init_mlp([2*small_cfg.M, 8, 2*small_cfg.M], 0, 4, True)).eval()
        P = default_pilots(small_cfg)
        V = ct.block_by_block_beamform(dataset.Y_p, P, channel_map, small_cfg.P_DL).V.to_numpy()
        expected = zf(hermitian(ct.ls_estimate(dataset.Y_p, P)), small_cfg.P_DL).V.to_numpy()
        np.testing.assert_allclose(V, expected, rtol=1e-10, atol=1e-14)

    def test_pipeline_networks(self, small_cfg):
        """The pipeline exposes its three networks by name."""
        pipeline = ct.new_implicit_pipeline(small_cfg, ct.TrainingHyper(hidden_zf=(8,), hidden_ls=(8,), hidden_map=(8,)))
        networks = pipeline.networks()
        assert set(networks) == {"ls_calibration", "channel_map", "zf_calibration"}
        assert networks["ls_calibration"].in_dim == 2*small_cfg.L
        assert networks["channel_map"].in_dim == 2*small_cfg.M


# ============================================================================
# TRAINING
# ============================================================================


class TestTraining:
    """Tests for the trainers on tiny problems."""

    def test_train_networks_stops_on_nan(self, tiny_hyper):
        """A non-finite loss raises DivergenceError at the first epoch."""
        mlp = init_mlp([2, 4, 2])

        def loss_fn(indexes, tape):
            return tape.watch(np.nan), np.zeros(len(indexes))

        with pytest.raises(DivergenceError) as info:
            ct.train_networks([mlp], loss_fn, 64, tiny_hyper, verbose=False)
        assert info.value.epoch == 1

    def test_train_networks_stops_on_singular_forward(self, tiny_hyper):
        """A singular forward pass is reported as divergence."""
        def loss_fn(indexes, tape):
            raise SingularMatrixError("singular matrix")

        with pytest.raises(DivergenceError):
            ct.train_networks([init_mlp([2, 4, 2])], loss_fn, 64, tiny_hyper, verbose=False)

    def test_train_networks_curve(self, tiny_hyper):
        """The loop returns one row per epoch and updates the parameters."""
        mlp = init_mlp([2, 4, 1])
        x = np.random.default_rng(0).standard_normal((64, 2))
        before = mlp.weights[0].copy()

        def loss_fn(indexes, tape):
            out = mlp_forward(mlp, x[indexes], tape)
            per_sample = ops.value(out)[:, 0]**2
            return ops.reduce_mean(ops.square(out)), per_sample

        curve = ct.train_networks([mlp], loss_fn, 64, tiny_hyper, verbose=False)
        assert list(curve.columns) == ["epoch", "train_loss", "train_metric", "held_out_metric"]
        assert list(curve["epoch"]) == [1, 2]
        assert not np.allclose(mlp.weights[0], before)
        assert mlp.mode == "eval"

    def test_tapes_are_freed_after_each_step(self, small_cfg, tiny_hyper, monkeypatch):
        """Each batch's tape is gone once its update is applied, without the cycle collector."""
        seen = []

        class WatchedTape(ops.Tape):
            def __init__(self):
                super().__init__()
                assert all(ref() is None for ref in seen)
                seen.append(weakref.ref(self))

        monkeypatch.setattr(ct, "Tape", WatchedTape)
        dataset = generate_dataset(small_cfg, 96)
        gc.collect()
        gc.disable()
        try:
            ct.train_implicit(dataset, small_cfg, tiny_hyper, verbose=False)
        finally:
            gc.enable()
        assert len(seen) == tiny_hyper.epochs*(86//tiny_hyper.batch_size)
        assert all(ref() is None for ref in seen)

    def test_split_held_out(self, small_cfg):
        """The held-out split is the tail of the dataset."""
        dataset = generate_dataset(small_cfg, 20, with_pilots=False)
        train, test = ct.split_held_out(dataset, ct.TrainingHyper(held_out_fraction=0.1))
        assert (len(train), len(test)) == (18, 2)
        assert test.first_index == 18

    def test_train_perfect_csi(self, small_cfg, tiny_hyper):
        """A short run returns an eval-mode model and a finite curve."""
        dataset = generate_dataset(small_cfg, 96, with_pilots=False)
        model, curve = ct.train_perfect_csi(dataset, small_cfg, tiny_hyper, verbose=False)
        assert model.shared_mlp.mode == "eval"
        assert model.input_scale > 0.0
        assert list(curve.columns) == ["epoch", "train_loss", "train_sum_rate", "held_out_sum_rate"]
        assert len(curve) == 2
        assert np.all(np.isfinite(curve.to_numpy()))

    def test_train_implicit(self, small_cfg, tiny_hyper):
        """A short end-to-end run of the implicit pipeline."""
        dataset = generate_dataset(small_cfg, 96)
        pipeline, curve = ct.train_implicit(dataset, small_cfg, tiny_hyper, verbose=False)
        assert pipeline.zf_calib.input_scale == pipeline.uplink_scale
        assert np.all(np.isfinite(curve["held_out_sum_rate"]))

    def test_train_implicit_needs_pilots(self, small_cfg, tiny_hyper):
        """A dataset without received pilots is rejected."""
        dataset = generate_dataset(small_cfg, 8, with_pilots=False)
        with pytest.raises(ValueError):
            ct.train_implicit(dataset, small_cfg, tiny_hyper, verbose=False)

    def test_train_channel_map(self, small_cfg, tiny_hyper):
        """The stand-alone mapping reports normalized mean squared errors."""
        dataset = generate_dataset(small_cfg, 96)
        channel_map, curve = ct.train_channel_map(dataset, small_cfg, tiny_hyper, verbose=False)
        assert list(curve.columns) == ["epoch", "train_loss", "train_mse", "held_out_mse"]
        assert np.all(curve["held_out_mse"] >= 0.0)
        assert channel_map.mlp.mode == "eval"


# ============================================================================
# GENERALIZATION
# ============================================================================


class TestMismatch:
    """Tests for the user-count and power mismatch evaluations."""

    def test_user_count_mismatch(self, small_cfg):
        """One model serves several user counts; the untrained model equals ZF."""
        model = identity_model(small_cfg.M)

        def dataset_gen(cfg):
            return generate_dataset(cfg, 8, 100, with_pilots=False)

        table = ct.evaluate_mismatch(model, small_cfg, [1, 2, 4], dataset_gen)
        assert list(table["K_test"]) == [1, 2, 4]
        assert table.loc[1, "ratio"] == pytest.approx(1.0)
        assert np.isnan(table.loc[0, "matched_sum_rate"])
        test = dataset_gen(small_cfg.with_changes(K=4, L=4))
        H = test.downlink_rows()
        zf_rate = np.mean(sum_rate(H, zf(H, small_cfg.P_DL).V, small_cfg.sigma0_sq))
        assert table.loc[2, "mismatch_sum_rate"] == pytest.approx(zf_rate, rel=1e-9)

    def test_user_count_above_antennas(self, small_cfg):
        """Testing with more users than antennas is rejected."""
        with pytest.raises(DimensionError):
            ct.evaluate_mismatch(identity_model(small_cfg.M), small_cfg, [9], lambda cfg: None)

    def test_matched_models_fill_the_ratio(self, small_cfg):
        """With a matched model the ratio compares the two."""
        model = identity_model(small_cfg.M)

        def dataset_gen(cfg):
            return generate_dataset(cfg, 8, 100, with_pilots=False)

        table = ct.evaluate_mismatch(model, small_cfg, [3], dataset_gen, {3: identity_model(small_cfg.M, 1)})
        assert table.loc[0, "ratio"] == pytest.approx(1.0)

    def test_power_mismatch(self, small_cfg):
        """The untrained model matches ZF at every downlink power."""
        def dataset_gen(cfg):
            return generate_dataset(cfg, 6, 50, with_pilots=False)

        table = ct.evaluate_power_mismatch(identity_model(small_cfg.M), small_cfg, [0.0, 10.0], dataset_gen)
        assert list(table.columns) == ["power_dbm", "model_sum_rate", "zf_sum_rate"]
        np.testing.assert_allclose(table["model_sum_rate"], table["zf_sum_rate"], rtol=1e-9)
        assert table.loc[1, "zf_sum_rate"] > table.loc[0, "zf_sum_rate"]

    def test_uplink_power_mismatch_keeps_the_pilots(self, small_cfg):
        """Testing at other uplink powers leaves the pipeline's own pilots untouched."""
        pipeline = ct.new_implicit_pipeline(small_cfg, ct.TrainingHyper(hidden_zf=(8,), hidden_ls=(8,), hidden_map=(8,)))
        before = pipeline.pilots.to_numpy().copy()

        def dataset_gen(cfg):
            return generate_dataset(cfg, 6, 50)

        table = ct.evaluate_power_mismatch(pipeline, small_cfg, [-20.0, 0.0], dataset_gen, link="ul")
        assert len(table) == 2
        np.testing.assert_array_equal(pipeline.pilots.to_numpy(), before)

# NeuroCalib: Neural Calibration for Massive MIMO Beamforming
# Copyright (C) 2026 by the NeuroCalib developers
#
# This program is free software: you can redistribute it and/or modify
# it under the terms of the GNU General Public License as published by
# the Free Software Foundation, either version 3 of the License, or
# any later version.
#
# This program is distributed in the hope that it will be useful,
# but WITHOUT ANY WARRANTY; without even the implied warranty of
# MERCHANTABILITY or FITNESS FOR A PARTICULAR PURPOSE.  See the
# GNU General Public License for more details.
#
# You should have received a copy of the GNU General Public License
# along with this program. If not, see <https://www.gnu.org/licenses/>.

from . import Autodiff_Tape as ops
from . import General_Functions
from .Autodiff_Tape import Tape, backward
from .Linear_Algebra import ComplexMatrix, cmul, cinv, hermitian, cadd, cscale, stack_real, unstack_real, abs_squared, condition_number
from .Neural_Network import MlpParameters, init_mlp, mlp_forward, AdamState, adam_step
from .Beamforming_Tools import zf, sum_rate
from .Channel_Model import default_pilots
from .General_Functions import DimensionError, DivergenceError, SingularMatrixError, rng_stream, stream_tags, condition_limit, report
from dataclasses import dataclass, replace
from typing import Tuple
from pandas import DataFrame
import numpy

##---------------------------------------------------------------------------------------
##Data structures

@dataclass
class TrainingHyper:
    '''Hyperparameters shared by every trainer.

    Hidden widths default to desk scale; (512, 2048, 2048) reproduces the full
    size user-wise network.
    '''
    hidden_zf: Tuple[int, ...] = (128, 512, 512)
    hidden_ls: Tuple[int, ...] = (128, 512, 512)
    hidden_map: Tuple[int, ...] = (128, 512, 512)
    hidden_blackbox: Tuple[int, ...] = (128, 512, 512)
    epochs: int = 20
    batch_size: int = 1024
    lr: float = 1e-3
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    bn_momentum: float = 0.99
    bn_eps: float = 1e-5
    held_out_fraction: float = 0.1
    seed: int = 0

@dataclass
class CalibratedZf:
    '''ZF beamformer whose input is calibrated user by user by one shared MLP.

    Parameters
    ----------
    shared_mlp : MlpParameters
        phi, mapping a user's stacked (re, im) channel row (2M) to a correction (2M).

    input_scale : float
        Rows are divided by it before phi and the output multiplied by it.
    '''
    shared_mlp: MlpParameters
    input_scale: float = 1.0

    def eval(self):
        self.shared_mlp.eval()
        return self

    def train(self):
        self.shared_mlp.train()
        return self

    def networks(self):
        return {"zf_calibration": self.shared_mlp}

@dataclass
class ChannelMap:
    '''Per-user uplink-to-downlink channel mapping trained on its own.'''
    mlp: MlpParameters
    input_scale: float = 1.0

    def eval(self):
        self.mlp.eval()
        return self

    def networks(self):
        return {"channel_map": self.mlp}

@dataclass
class ImplicitPipeline:
    '''Received pilots -> calibrated LS -> channel mapping -> calibrated ZF.

    Parameters
    ----------
    ls_calib_mlp : MlpParameters
        Antenna-wise shared network on Y_p rows (2L -> 2L).

    channel_map_mlp : MlpParameters
        User-wise shared network on uplink estimate rows (2M -> 2M).

    zf_calib : CalibratedZf
        Calibrated ZF stage.

    pilots : ComplexMatrix
        Fixed K x L pilots.

    pilot_scale, uplink_scale : float
        Input scales of the LS calibration and channel mapping networks.
    '''
    ls_calib_mlp: MlpParameters
    channel_map_mlp: MlpParameters
    zf_calib: CalibratedZf
    pilots: ComplexMatrix
    pilot_scale: float = 1.0
    uplink_scale: float = 1.0

    def eval(self):
        self.ls_calib_mlp.eval()
        self.channel_map_mlp.eval()
        self.zf_calib.eval()
        return self

    def train(self):
        self.ls_calib_mlp.train()
        self.channel_map_mlp.train()
        self.zf_calib.train()
        return self

    def networks(self):
        return {"ls_calibration": self.ls_calib_mlp,
                "channel_map": self.channel_map_mlp,
                "zf_calibration": self.zf_calib.shared_mlp}

def rms_scale(A):
    '''Root mean square magnitude of the entries of a ComplexMatrix.'''
    value = float(numpy.sqrt(numpy.mean(ops.value(abs_squared(A)))))
    return value if value > 0.0 else 1.0

##---------------------------------------------------------------------------------------
##Shared-row calibration

def calibrate_rows(A, mlp, tape = None, scale = 1.0):
    '''Applies one MLP to every row of A, with a residual skip.

    Row r of the output is A_r + scale * mlp([Re A_r, Im A_r] / scale). The same
    parameters serve every row, so permuting the rows of A permutes the output
    rows in the same way.

    Parameters
    ----------
    A : ComplexMatrix
        (..., rows, cols) input.

    mlp : MlpParameters
        Network with in_dim = out_dim = 2*cols.

    tape : Tape
        Records the computation if given.

    scale : float
        Input normalization of the network.

    Returns
    -------
    ComplexMatrix
        The calibrated rows, same shape as A.
    '''
    if mlp.in_dim != 2*A.cols or mlp.out_dim != 2*A.cols:
        raise DimensionError(f"Row network is {mlp.in_dim} -> {mlp.out_dim}, rows need {2*A.cols} -> {2*A.cols}.")
    shape = A.shape
    x = ops.reshape(stack_real(A), (-1, 2*A.cols))
    out = mlp_forward(mlp, ops.div(x, scale), tape)
    correction = unstack_real(ops.reshape(out, shape[:-1]+(2*A.cols,)))
    return cadd(A, cscale(correction, scale))

def antenna_calibrate(Y_p, mlp, tape = None, scale = 1.0):
    '''Antenna-wise calibration of the received pilots (M x L, one row per antenna).'''
    return calibrate_rows(Y_p, mlp, tape, scale)

def user_calibrate(H, mlp, tape = None, scale = 1.0):
    '''User-wise calibration of a K x M row-per-user channel.'''
    return calibrate_rows(H, mlp, tape, scale)

def ls_estimate(Y_p, P):
    '''Least squares channel estimate Y_p P^H (P P^H)^-1.

    Parameters
    ----------
    Y_p : ComplexMatrix
        (..., M, L) received pilots.

    P : ComplexMatrix
        K x L pilots, full row rank.

    Returns
    -------
    ComplexMatrix
        (..., M, K) uplink channel estimate.
    '''
    gram = cmul(P, hermitian(P))
    condition = condition_number(gram.to_numpy())
    if condition > condition_limit:
        raise SingularMatrixError("rank-deficient pilots", condition)
    return cmul(Y_p, cmul(hermitian(P), cinv(gram)))

def calibrated_zf_beamform(H, model, P_DL, tape = None):
    '''ZF applied to the user-wise calibrated channel, h_ZF(F(H)).'''
    return zf(user_calibrate(H, model.shared_mlp, tape, model.input_scale), P_DL)

def implicit_beamform(Y_p, pipeline, P_DL, tape = None):
    '''Downlink beamformer straight from the received uplink pilots.

    Y_p -> antenna_calibrate -> ls_estimate -> per-user channel mapping ->
    calibrated_zf_beamform. No downlink channel is read.

    Permuting the antennas of Y_p permutes the rows of the calibrated pilots and
    of the LS estimate. The user-wise stages see each user's whole antenna
    vector, so the beamformer rows follow the permutation only while those two
    networks act as the identity.
    '''
    calibrated = antenna_calibrate(Y_p, pipeline.ls_calib_mlp, tape, pipeline.pilot_scale)
    uplink_rows = hermitian(ls_estimate(calibrated, pipeline.pilots))
    downlink_rows = user_calibrate(uplink_rows, pipeline.channel_map_mlp, tape, pipeline.uplink_scale)
    return calibrated_zf_beamform(downlink_rows, pipeline.zf_calib, P_DL, tape)

def block_by_block_beamform(Y_p, pilots, channel_map, P_DL):
    '''Plain LS, stand-alone channel mapping, plain ZF.'''
    uplink_rows = hermitian(ls_estimate(Y_p, pilots))
    return zf(user_calibrate(uplink_rows, channel_map.mlp, None, channel_map.input_scale), P_DL)

##---------------------------------------------------------------------------------------
##Training

def batched_mean(function, count, chunk = 4096):
    '''Mean over count samples of function(indexes), evaluated chunk by chunk.'''
    total = 0.0
    for start in range(0, count, chunk):
        indexes = numpy.arange(start, min(start+chunk, count))
        total += float(numpy.sum(ops.value(function(indexes))))
    return total/count

def train_step(networks, states, loss_fn, indexes, hyper, epoch, label):
    '''Forward, backward and Adam update on one mini-batch.

    The tape is released before returning, so nothing recorded for this batch
    outlives the call.

    Returns
    -------
    loss, metric : float
        Batch loss and mean per-sample metric.
    '''
    tape = Tape()
    try:
        try:
            loss, metric = loss_fn(indexes, tape)
        except SingularMatrixError as e:
            raise DivergenceError(f"Training of {label} became singular ({e})", epoch)
        loss_value = float(ops.value(loss))
        if not numpy.isfinite(loss_value):
            raise DivergenceError(f"Training of {label} produced a non-finite loss", epoch)
        grads = backward(tape, loss)
        for net, state in zip(networks, states):
            adam_step(net, grads.of_parameters(net), state, hyper.lr, hyper.beta1, hyper.beta2, hyper.eps)
        return loss_value, float(numpy.mean(ops.value(metric)))
    finally:
        tape.release()

def train_networks(networks, loss_fn, count, hyper, held_out_fn = None, verbose = True, label = "model"):
    '''Mini-batch Adam loop shared by every trainer.

    Parameters
    ----------
    networks : list
        MlpParameters trained jointly.

    loss_fn : function
        loss_fn(indexes, tape) -> (loss Variable, per-sample metric array).

    count : int
        Number of training samples.

    hyper : TrainingHyper
        Optimizer settings.

    held_out_fn : function
        Called after every epoch (networks in eval mode), returns the held-out metric.

    Returns
    -------
    curve : DataFrame
        Columns epoch, train_loss, train_metric, held_out_metric.

    Raises
    ------
    DivergenceError
        If the loss isn't finite or the forward pass becomes singular.
    '''
    states = [AdamState() for _ in networks]
    rows = []
    batches = max(1, count//hyper.batch_size)
    for epoch in range(1, hyper.epochs+1):
        for net in networks:
            net.train()
        order = rng_stream(hyper.seed, stream_tags["shuffle"], epoch).permutation(count)
        losses = []
        metrics = []
        for indexes in numpy.array_split(order, batches):
            loss_value, metric_value = train_step(networks, states, loss_fn, numpy.sort(indexes), hyper, epoch, label)
            losses.append(loss_value)
            metrics.append(metric_value)
        for net in networks:
            net.eval()
        held_out = float("nan") if held_out_fn is None else float(held_out_fn())
        rows.append({"epoch": epoch,
                     "train_loss": float(numpy.mean(losses)),
                     "train_metric": float(numpy.mean(metrics)),
                     "held_out_metric": held_out})
        report(f"{label} epoch {epoch}/{hyper.epochs}: loss {rows[-1]['train_loss']:.5f}, held-out {held_out:.5f}", verbose)
    return DataFrame(rows, columns = ["epoch", "train_loss", "train_metric", "held_out_metric"])

def split_held_out(dataset, hyper, held_out = None):
    '''Returns (train, held_out), cutting the tail of dataset if none is given.'''
    if held_out is not None:
        return dataset, held_out
    cut = len(dataset)-max(1, int(round(hyper.held_out_fraction*len(dataset))))
    if cut < 1:
        raise ValueError("Dataset too small to keep a held-out split.")
    return dataset.split(cut)

def train_perfect_csi(dataset, cfg, hyper, held_out = None, verbose = True):
    '''Trains the calibrated ZF beamformer on the negative sum-rate.

    Parameters
    ----------
    dataset : ChannelDataset
        Training channels.

    cfg : SystemConfig
        Gives P_DL and sigma0_sq.

    hyper : TrainingHyper
        Optimizer settings.

    held_out : ChannelDataset
        Held-out channels, a tail split of dataset if None.

    Returns
    -------
    model, curve
        The CalibratedZf (eval mode) and its per-epoch training curve, where the
        metric columns are mean sum-rates.
    '''
    if cfg.M < cfg.K:
        raise DimensionError("Calibrated ZF needs M >= K.")
    train, test = split_held_out(dataset, hyper, held_out)
    H_train = train.downlink_rows()
    H_test = test.downlink_rows()
    M = H_train.cols
    mlp = init_mlp([2*M, *hyper.hidden_zf, 2*M], hyper.seed, 0, True, hyper.bn_momentum, hyper.bn_eps)
    model = CalibratedZf(mlp, rms_scale(H_train))

    def loss_fn(indexes, tape):
        H = H_train[indexes]
        rates = sum_rate(H, calibrated_zf_beamform(H, model, cfg.P_DL, tape).V, cfg.sigma0_sq)
        return ops.neg(ops.reduce_mean(rates)), ops.value(rates)

    def held_out_fn():
        return batched_mean(lambda i: sum_rate(H_test[i], calibrated_zf_beamform(H_test[i], model, cfg.P_DL).V, cfg.sigma0_sq), len(test))

    report(f"Training neural calibration on {len(train)} samples...", verbose)
    curve = train_networks([mlp], loss_fn, len(train), hyper, held_out_fn, verbose, "neural_calibration")
    curve = curve.rename(columns = {"train_metric": "train_sum_rate", "held_out_metric": "held_out_sum_rate"})
    return model.eval(), curve

def new_implicit_pipeline(cfg, hyper, pilots = None):
    '''Identity-behaving pipeline (all residual networks output zero).'''
    M, L = cfg.M, cfg.L
    ls_mlp = init_mlp([2*L, *hyper.hidden_ls, 2*L], hyper.seed, 1, True, hyper.bn_momentum, hyper.bn_eps)
    map_mlp = init_mlp([2*M, *hyper.hidden_map, 2*M], hyper.seed, 2, True, hyper.bn_momentum, hyper.bn_eps)
    zf_mlp = init_mlp([2*M, *hyper.hidden_zf, 2*M], hyper.seed, 3, True, hyper.bn_momentum, hyper.bn_eps)
    return ImplicitPipeline(ls_mlp, map_mlp, CalibratedZf(zf_mlp), default_pilots(cfg) if pilots is None else pilots)

def train_implicit(dataset, cfg, hyper, held_out = None, verbose = True):
    '''Trains LS calibration, channel mapping and ZF calibration end to end.

    The loss is the negative sum-rate over the true downlink channels, which
    appear only there.

    Returns
    -------
    pipeline, curve
        The ImplicitPipeline (eval mode) and its per-epoch training curve.
    '''
    if dataset.Y_p is None:
        raise ValueError("Implicit training needs received pilots in the dataset.")
    train, test = split_held_out(dataset, hyper, held_out)
    pipeline = new_implicit_pipeline(cfg, hyper)
    pipeline.pilot_scale = rms_scale(train.Y_p)
    uplink_rows = hermitian(ls_estimate(train.Y_p, pipeline.pilots))
    pipeline.uplink_scale = rms_scale(uplink_rows)
    pipeline.zf_calib.input_scale = pipeline.uplink_scale
    H_train = train.downlink_rows()
    H_test = test.downlink_rows()

    def loss_fn(indexes, tape):
        V = implicit_beamform(train.Y_p[indexes], pipeline, cfg.P_DL, tape).V
        rates = sum_rate(H_train[indexes], V, cfg.sigma0_sq)
        return ops.neg(ops.reduce_mean(rates)), ops.value(rates)

    def held_out_fn():
        return batched_mean(lambda i: sum_rate(H_test[i], implicit_beamform(test.Y_p[i], pipeline, cfg.P_DL).V, cfg.sigma0_sq), len(test))

    report(f"Training implicit pipeline on {len(train)} samples...", verbose)
    networks = list(pipeline.networks().values())
    curve = train_networks(networks, loss_fn, len(train), hyper, held_out_fn, verbose, "implicit_pipeline")
    curve = curve.rename(columns = {"train_metric": "train_sum_rate", "held_out_metric": "held_out_sum_rate"})
    return pipeline.eval(), curve

def train_channel_map(dataset, cfg, hyper, held_out = None, verbose = True):
    '''Trains the stand-alone uplink-to-downlink mapping on mean squared error.

    Inputs are plain LS estimates, targets the true downlink rows. The loss is
    normalized by the squared input scale.

    Returns
    -------
    channel_map, curve
        The ChannelMap (eval mode) and its training curve (metric = normalized MSE).
    '''
    if dataset.Y_p is None:
        raise ValueError("The channel map needs received pilots in the dataset.")
    train, test = split_held_out(dataset, hyper, held_out)
    pilots = default_pilots(cfg)
    X_train = hermitian(ls_estimate(train.Y_p, pilots))
    X_test = hermitian(ls_estimate(test.Y_p, pilots))
    H_train = train.downlink_rows()
    H_test = test.downlink_rows()
    M = cfg.M
    channel_map = ChannelMap(init_mlp([2*M, *hyper.hidden_map, 2*M], hyper.seed, 4, True, hyper.bn_momentum, hyper.bn_eps),
                             rms_scale(X_train))
    norm = channel_map.input_scale**2

    def errors(X, H, tape = None):
        mapped = user_calibrate(X, channel_map.mlp, tape, channel_map.input_scale)
        squared = abs_squared(ComplexMatrix(ops.sub(mapped.re, H.re), ops.sub(mapped.im, H.im)))
        return ops.div(ops.reduce_mean(squared, axis = (-2, -1)), norm)

    def loss_fn(indexes, tape):
        per_sample = errors(X_train[indexes], H_train[indexes], tape)
        return ops.reduce_mean(per_sample), ops.value(per_sample)

    def held_out_fn():
        return batched_mean(lambda i: errors(X_test[i], H_test[i]), len(test))

    report(f"Training channel map on {len(train)} samples...", verbose)
    curve = train_networks([channel_map.mlp], loss_fn, len(train), hyper, held_out_fn, verbose, "channel_map")
    curve = curve.rename(columns = {"train_metric": "train_mse", "held_out_metric": "held_out_mse"})
    return channel_map.eval(), curve

##---------------------------------------------------------------------------------------
##Generalization experiments

def mean_sum_rate_calibrated(model, dataset, cfg):
    '''Mean held-out sum-rate of a CalibratedZf on a dataset.'''
    model.eval()
    H = dataset.downlink_rows()
    return batched_mean(lambda i: sum_rate(H[i], calibrated_zf_beamform(H[i], model, cfg.P_DL).V, cfg.sigma0_sq), len(dataset))

def evaluate_mismatch(model, cfg_train, K_test_list, dataset_gen, matched_models = None):
    '''Evaluates a model trained at one user count on other user counts.

    The user-wise network only depends on M, so the same parameters apply to any
    K <= M without retraining.

    Parameters
    ----------
    model : CalibratedZf
        Model trained at cfg_train.K.

    cfg_train : SystemConfig
        Training configuration.

    K_test_list : list
        User counts to test.

    dataset_gen : function
        dataset_gen(cfg) -> ChannelDataset test set for a configuration.

    matched_models : dict
        Optional K -> CalibratedZf trained at that K, for the ratio column.

    Returns
    -------
    DataFrame
        Columns K_train, K_test, mismatch_sum_rate, matched_sum_rate, ratio.
    '''
    matched_models = {} if matched_models is None else matched_models
    rows = []
    for K in K_test_list:
        if K > cfg_train.M:
            raise DimensionError(f"K_test={K} exceeds M={cfg_train.M}.")
        cfg = cfg_train.with_changes(K = K, L = max(cfg_train.L, K))
        test = dataset_gen(cfg)
        mismatch = mean_sum_rate_calibrated(model, test, cfg)
        if K in matched_models:
            matched = mean_sum_rate_calibrated(matched_models[K], test, cfg)
        elif K == cfg_train.K:
            matched = mismatch
        else:
            matched = float("nan")
        rows.append({"K_train": cfg_train.K,
                     "K_test": K,
                     "mismatch_sum_rate": mismatch,
                     "matched_sum_rate": matched,
                     "ratio": mismatch/matched if numpy.isfinite(matched) else float("nan")})
    return DataFrame(rows, columns = ["K_train", "K_test", "mismatch_sum_rate", "matched_sum_rate", "ratio"])

def evaluate_power_mismatch(model, cfg_train, powers_dbm, dataset_gen, link = "dl"):
    '''Evaluates a trained model at other downlink or uplink powers.

    Parameters
    ----------
    model : CalibratedZf or ImplicitPipeline
        Model trained at cfg_train.

    powers_dbm : list
        Powers to test, in dBm.

    link : string
        'dl' changes P_DL, 'ul' changes P_UL (and thus the received pilots).

    Returns
    -------
    DataFrame
        Columns power_dbm, model_sum_rate, zf_sum_rate (ZF on perfect CSI).
    '''
    rows = []
    model.eval()
    for dbm in powers_dbm:
        watt = General_Functions.dbm_to_watt(dbm)
        cfg = cfg_train.with_changes(P_DL = watt) if link == "dl" else cfg_train.with_changes(P_UL = watt)
        test = dataset_gen(cfg)
        H = test.downlink_rows()
        if isinstance(model, ImplicitPipeline):
            pipeline = replace(model, pilots = default_pilots(cfg)) if link == "ul" else model
            achieved = batched_mean(lambda i: sum_rate(H[i], implicit_beamform(test.Y_p[i], pipeline, cfg.P_DL).V, cfg.sigma0_sq), len(test))
        else:
            achieved = mean_sum_rate_calibrated(model, test, cfg)
        reference = batched_mean(lambda i: sum_rate(H[i], zf(H[i], cfg.P_DL).V, cfg.sigma0_sq), len(test))
        rows.append({"power_dbm": dbm, "model_sum_rate": achieved, "zf_sum_rate": reference})
    return DataFrame(rows, columns = ["power_dbm", "model_sum_rate", "zf_sum_rate"])

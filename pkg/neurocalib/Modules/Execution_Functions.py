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
from . import File_Accessing
from .General_Functions import ConfigError, DimensionError, DivergenceError, FormatError, dbm_to_watt, rng_stream, stream_tags, worker_count, report, print_sep
from .Linear_Algebra import ComplexMatrix, cscale, fro_norm
from .Channel_Model import SystemConfig, generate_dataset, default_pilots
from .Neural_Network import init_mlp, mlp_forward
from .Beamforming_Tools import Beamformer, mrt, zf, wmmse, sum_rate
from .Calibration_Tools import (TrainingHyper, CalibratedZf, ChannelMap, ImplicitPipeline, train_perfect_csi, train_implicit,
                                train_channel_map, train_networks, split_held_out, calibrated_zf_beamform, implicit_beamform,
                                block_by_block_beamform, new_implicit_pipeline, batched_mean, rms_scale)
from dataclasses import dataclass, field, asdict, replace
from typing import Any, Optional
from pandas import DataFrame
import concurrent.futures
import numpy
import time
import pathlib

def find_most_recent_version(ver1, ver2):
    '''Returns the highest of two dotted version strings.'''
    return max(ver1, ver2, key = lambda v: [int(x) for x in v.split(".")])

#fetches the version from package info or setup file, depending on use mode
version1 = "0.0.0"
version2 = "0.0.0"
try:
    import pkg_resources
    version1 = pkg_resources.get_distribution("neurocalib").version
except Exception:
    pass
try:
    version_path = pathlib.Path(__file__).parent.parent.parent.resolve()
    with open(version_path / "setup.py", "r") as f:
        for line in f:
            if line.startswith("current_version="):
                version2 = line.split("=")[1].strip().strip("'")
except Exception:
    pass
version = find_most_recent_version(version1, version2)

baseline_methods = ("mrt", "zf", "wmmse")
learned_methods = ("blackbox_mlp", "neural_calibration", "implicit_pipeline", "block_by_block")
all_methods = baseline_methods+learned_methods
pilot_methods = ("implicit_pipeline", "block_by_block")
sweep_parameters = ("antennas", "users", "power_dl_dbm", "power_ul_dbm")
report_columns = ["method", "M", "K", "P_dl_dbm", "P_ul_dbm", "mean_sum_rate_bps_hz", "std", "n_samples", "mean_inference_ms"]
'''Header of every evaluation report, in this order.
'''

##---------------------------------------------------------------------------------------
##Experiment description

@dataclass
class WmmseSettings:
    max_iters: int = 100
    tol: float = 1e-6
    init: str = "best"
    min_iters: int = 3

@dataclass
class SweepConfig:
    '''One swept parameter and its values.

    Parameters
    ----------
    parameter : string
        One of 'antennas', 'users', 'power_dl_dbm', 'power_ul_dbm'.

    values : list
        Values of the parameter, one sweep point each.

    train_at : string
        'matched' trains learned methods at every point, 'mismatch' trains once
        at the base point and reuses the models everywhere.
    '''
    parameter: str = "users"
    values: list = field(default_factory = lambda: [4])
    train_at: str = "matched"

@dataclass
class DatasetConfig:
    train_count: int = 20000
    test_count: int = 2000
    seed: int = 0
    path: Optional[str] = None

@dataclass
class ExperimentConfig:
    '''Everything needed to reproduce a report.

    The system holds the base point; powers are also kept in dBm so that
    reports show the configured values.
    '''
    system: SystemConfig = field(default_factory = SystemConfig)
    sweep: SweepConfig = field(default_factory = SweepConfig)
    methods: list = field(default_factory = lambda: ["mrt", "zf", "wmmse", "neural_calibration"])
    dataset: DatasetConfig = field(default_factory = DatasetConfig)
    hyper: TrainingHyper = field(default_factory = TrainingHyper)
    wmmse: WmmseSettings = field(default_factory = WmmseSettings)
    power_dl_dbm: float = 5.0
    power_ul_dbm: float = -10.0
    output_path: Optional[str] = None
    write_manifest: bool = True
    measure_timing: bool = False
    timing_repeats: int = 20
    checkpoints: dict = field(default_factory = dict)
    use_multiple_CPU_cores: bool = False
    number_cores: Any = 'all'

@dataclass(frozen = True)
class SweepPoint:
    system: SystemConfig
    P_dl_dbm: float
    P_ul_dbm: float

def sweep_points(cfg):
    '''Expands the sweep into validated systems.

    Returns
    -------
    points : list
        One SweepPoint per sweep value, in order.

    Raises
    ------
    ConfigError
        If the sweep is empty, names an unknown parameter or gives an invalid
        system (like K > M).
    '''
    if cfg.sweep.parameter not in sweep_parameters:
        raise ConfigError(f"Unknown sweep parameter '{cfg.sweep.parameter}', use one of {', '.join(sweep_parameters)}.", field = "sweep.parameter")
    if len(cfg.sweep.values) == 0:
        raise ConfigError("The sweep has no values.", field = "sweep.values")
    points = []
    for value in cfg.sweep.values:
        dl, ul = cfg.power_dl_dbm, cfg.power_ul_dbm
        changes = {}
        if cfg.sweep.parameter == "antennas":
            changes["M"] = int(value)
        elif cfg.sweep.parameter == "users":
            changes["K"] = int(value)
            changes["L"] = max(cfg.system.L, int(value))
        elif cfg.sweep.parameter == "power_dl_dbm":
            dl = float(value)
            changes["P_DL"] = dbm_to_watt(dl)
        else:
            ul = float(value)
            changes["P_UL"] = dbm_to_watt(ul)
        try:
            system = cfg.system.with_changes(**changes)
        except ValueError as e:
            raise ConfigError(f"Sweep value {value} gives an invalid system: {e}", field = "sweep.values")
        points.append(SweepPoint(system, dl, ul))
    return points

def validate_experiment(cfg):
    '''Checks the methods and train_at of an experiment, then expands its sweep.

    Returns
    -------
    points : list
        sweep_points(cfg).

    Raises
    ------
    ConfigError
        With the dotted field of the problem.
    '''
    unknown = [m for m in cfg.methods if m not in all_methods]
    if len(unknown) > 0:
        raise ConfigError(f"Unknown method(s) {', '.join(unknown)}, use any of {', '.join(all_methods)}.", field = "methods")
    if len(cfg.methods) == 0:
        raise ConfigError("No method selected.", field = "methods")
    if cfg.sweep.train_at not in ("matched", "mismatch"):
        raise ConfigError(f"train_at must be 'matched' or 'mismatch', got '{cfg.sweep.train_at}'.", field = "sweep.train_at")
    return sweep_points(cfg)

##---------------------------------------------------------------------------------------
##Fully data-driven baseline

@dataclass
class BlackboxModel:
    '''One monolithic MLP from the whole stacked channel (2MK) to the beamformer (2MK).'''
    mlp: Any
    M: int
    K: int
    input_scale: float = 1.0

    def eval(self):
        self.mlp.eval()
        return self

    def networks(self):
        return {"blackbox": self.mlp}

def blackbox_beamform(H, model, P_DL, tape = None):
    '''Beamformer predicted by the black-box MLP, rescaled to the power budget.

    Raises
    ------
    DimensionError
        If H isn't K_train x M_train, the network has no input for other sizes.
    '''
    if (H.rows, H.cols) != (model.K, model.M):
        raise DimensionError(f"The black-box model was trained for K={model.K}, M={model.M}, got a {H.rows} x {H.cols} channel.")
    MK = model.M*model.K
    x = ops.concat([ops.reshape(H.re, (-1, MK)), ops.reshape(H.im, (-1, MK))], axis = -1)
    out = mlp_forward(model.mlp, ops.div(x, model.input_scale), tape)
    shape = H.batch_shape+(model.M, model.K)
    V = ComplexMatrix(ops.reshape(ops.getitem(out, (slice(None), slice(0, MK))), shape),
                      ops.reshape(ops.getitem(out, (slice(None), slice(MK, 2*MK))), shape))
    return Beamformer(cscale(V, ops.div(numpy.sqrt(P_DL), fro_norm(V, keepdims = True))), P_DL)


def blackbox_baseline_train(dataset, cfg, hyper, held_out = None, verbose = True):
    '''Trains the black-box baseline with the calibration trainer's loss and optimizer.

    Returns
    -------
    model, curve
        The BlackboxModel (eval mode) and its training curve.
    '''
    train, test = split_held_out(dataset, hyper, held_out)
    H_train = train.downlink_rows()
    H_test = test.downlink_rows()
    MK = cfg.M*cfg.K
    model = BlackboxModel(init_mlp([2*MK, *hyper.hidden_blackbox, 2*MK], hyper.seed, 5, False, hyper.bn_momentum, hyper.bn_eps),
                          cfg.M, cfg.K, rms_scale(H_train))

    def loss_fn(indexes, tape):
        H = H_train[indexes]
        rates = sum_rate(H, blackbox_beamform(H, model, cfg.P_DL, tape).V, cfg.sigma0_sq)
        return ops.neg(ops.reduce_mean(rates)), ops.value(rates)

    def held_out_fn():
        return batched_mean(lambda i: sum_rate(H_test[i], blackbox_beamform(H_test[i], model, cfg.P_DL).V, cfg.sigma0_sq), len(test))

    report(f"Training black-box MLP on {len(train)} samples...", verbose)
    curve = train_networks([model.mlp], loss_fn, len(train), hyper, held_out_fn, verbose, "blackbox_mlp")
    curve = curve.rename(columns = {"train_metric": "train_sum_rate", "held_out_metric": "held_out_sum_rate"})
    return model.eval(), curve

##---------------------------------------------------------------------------------------
##Methods

def train_method(method, dataset, cfg, hyper, verbose = True):
    '''Trains a learned method, returns (model, curve).'''
    if method == "neural_calibration":
        return train_perfect_csi(dataset, cfg, hyper, verbose = verbose)
    if method == "implicit_pipeline":
        return train_implicit(dataset, cfg, hyper, verbose = verbose)
    if method == "block_by_block":
        return train_channel_map(dataset, cfg, hyper, verbose = verbose)
    if method == "blackbox_mlp":
        return blackbox_baseline_train(dataset, cfg, hyper, verbose = verbose)
    raise ValueError(f"'{method}' is not a learned method.")

def untrained_model(method, cfg, hyper):
    '''Freshly initialized model of a learned method, in eval mode.'''
    M = cfg.M
    if method == "neural_calibration":
        return CalibratedZf(init_mlp([2*M, *hyper.hidden_zf, 2*M], hyper.seed, 0, True, hyper.bn_momentum, hyper.bn_eps)).eval()
    if method == "implicit_pipeline":
        return new_implicit_pipeline(cfg, hyper).eval()
    if method == "block_by_block":
        return ChannelMap(init_mlp([2*M, *hyper.hidden_map, 2*M], hyper.seed, 4, True, hyper.bn_momentum, hyper.bn_eps)).eval()
    if method == "blackbox_mlp":
        MK = cfg.M*cfg.K
        return BlackboxModel(init_mlp([2*MK, *hyper.hidden_blackbox, 2*MK], hyper.seed, 5, False, hyper.bn_momentum, hyper.bn_eps), cfg.M, cfg.K).eval()
    raise ValueError(f"'{method}' is not a learned method.")

def method_of(model):
    '''Name of the learned method a model belongs to.'''
    if isinstance(model, CalibratedZf):
        return "neural_calibration"
    if isinstance(model, ImplicitPipeline):
        return "implicit_pipeline"
    if isinstance(model, ChannelMap):
        return "block_by_block"
    if isinstance(model, BlackboxModel):
        return "blackbox_mlp"
    raise TypeError(f"Unknown model type {type(model).__name__}.")

def _with_system_pilots(model, cfg):
    if isinstance(model, ImplicitPipeline) and model.pilots.shape == (cfg.K, cfg.L):
        return replace(model, pilots = default_pilots(cfg))
    return model

def beamform(method, H, Y_p, cfg, model = None, wmmse_settings = None):
    '''Beamformers of one method.

    Parameters
    ----------
    method : string
        One of all_methods.

    H : ComplexMatrix
        (..., K, M) downlink channels, row-per-user. Only read by methods with
        perfect CSI.

    Y_p : ComplexMatrix
        (..., M, L) received pilots, for the implicit methods.

    cfg : SystemConfig
        System of the samples.

    model : object
        Trained model for learned methods.

    Returns
    -------
    ComplexMatrix
        (..., M, K) beamformers.
    '''
    if method == "mrt":
        return mrt(H, cfg.P_DL).V
    if method == "zf":
        return zf(H, cfg.P_DL).V
    if method == "wmmse":
        settings = WmmseSettings() if wmmse_settings is None else wmmse_settings
        if len(H.batch_shape) == 0:
            return wmmse(H, cfg.P_DL, cfg.sigma0_sq, settings.max_iters, settings.tol, settings.init, min_iters = settings.min_iters)[0].V
        flat = ComplexMatrix(numpy.reshape(H.re, (-1, H.rows, H.cols)), numpy.reshape(H.im, (-1, H.rows, H.cols)))
        solved = [wmmse(flat[i], cfg.P_DL, cfg.sigma0_sq, settings.max_iters, settings.tol, settings.init, min_iters = settings.min_iters)[0].V for i in range(flat.shape[0])]
        shape = H.batch_shape+(H.cols, H.rows)
        return ComplexMatrix(numpy.stack([v.re for v in solved]).reshape(shape), numpy.stack([v.im for v in solved]).reshape(shape))
    if method not in learned_methods:
        raise ValueError(f"Unknown method '{method}'.")
    if model is None:
        raise ValueError(f"Method '{method}' needs a trained model.")
    if method == "neural_calibration":
        return calibrated_zf_beamform(H, model, cfg.P_DL).V
    if method == "blackbox_mlp":
        return blackbox_beamform(H, model, cfg.P_DL).V
    if Y_p is None:
        raise ValueError(f"Method '{method}' needs received pilots.")
    if method == "implicit_pipeline":
        return implicit_beamform(Y_p, model, cfg.P_DL).V
    return block_by_block_beamform(Y_p, default_pilots(cfg), model, cfg.P_DL).V

def evaluate_method(method, dataset, cfg, model = None, wmmse_settings = None, chunk = 1024):
    '''Sum-rate statistics of a method over a test set.

    Returns
    -------
    dict
        mean, std (population) and n of the per-sample sum-rates.
    '''
    if len(dataset) == 0:
        raise ValueError("Can't evaluate on an empty dataset.")
    if model is not None:
        model = _with_system_pilots(model, cfg)
        model.eval()
    H_all = dataset.downlink_rows()
    rates = []
    for start in range(0, len(dataset), chunk):
        index = slice(start, min(start+chunk, len(dataset)))
        H = H_all[index]
        Y_p = None if dataset.Y_p is None else dataset.Y_p[index]
        rates.append(numpy.atleast_1d(sum_rate(H, beamform(method, H, Y_p, cfg, model, wmmse_settings), cfg.sigma0_sq)))
    rates = numpy.concatenate(rates)
    return {"mean": float(numpy.mean(rates)), "std": float(numpy.std(rates)), "n": int(rates.size)}

def time_method(method, cfg, n_repeats, model = None, hyper = None, wmmse_settings = None, warmup = 2):
    '''Per-sample inference wall time of a method.

    Samples come from the benchmark random stream. Warm-up calls are run first
    and not counted; channel generation is outside the timed region. Learned
    methods without a model are timed on an untrained network of the same size.

    Parameters
    ----------
    method : string
        One of all_methods.

    cfg : SystemConfig
        System to time at.

    n_repeats : int
        Timed calls, at least 1.

    Uses
    ----
    time.perf_counter : function
        Wall clock.

    Returns
    -------
    dict
        mean_ms and median_ms over the timed calls.
    '''
    if n_repeats < 1:
        raise ValueError("n_repeats must be at least 1.")
    if method in learned_methods and model is None:
        model = untrained_model(method, cfg, TrainingHyper() if hyper is None else hyper)
    if model is not None:
        model = _with_system_pilots(model, cfg)
        model.eval()
    bench_seed = int(rng_stream(cfg.rng_seed, stream_tags["benchmark"]).integers(2**63))
    samples = generate_dataset(cfg.with_changes(rng_seed = bench_seed), warmup+n_repeats, with_pilots = method in pilot_methods)
    H = samples.downlink_rows()
    times = []
    for i in range(warmup+n_repeats):
        Y_p = None if samples.Y_p is None else samples.Y_p[i]
        start = time.perf_counter()
        beamform(method, H[i], Y_p, cfg, model, wmmse_settings)
        elapsed = time.perf_counter()-start
        if i >= warmup:
            times.append(1000.0*elapsed)
    return {"mean_ms": float(numpy.mean(times)), "median_ms": float(numpy.median(times))}

##---------------------------------------------------------------------------------------
##Model files

def save_model(model, path, cfg, hyper = None, dataset_seed = None):
    '''Saves a trained model with its provenance manifest.

    Parameters
    ----------
    model : object
        CalibratedZf, ImplicitPipeline, ChannelMap or BlackboxModel.

    path : string or Path
        Destination bundle.

    cfg : SystemConfig
        System the model was trained at.

    hyper : TrainingHyper
        Hyperparameters used.

    dataset_seed : int
        Seed of the training dataset.
    '''
    method = method_of(model)
    manifest = {"method": method,
                "M": cfg.M,
                "K_train": cfg.K,
                "L": cfg.L,
                "hyper": None if hyper is None else asdict(hyper),
                "dataset_seed": dataset_seed,
                "version": version}
    if method == "implicit_pipeline":
        manifest["scales"] = {"pilot_scale": model.pilot_scale,
                              "uplink_scale": model.uplink_scale,
                              "zf_input_scale": model.zf_calib.input_scale}
        manifest["pilots"] = [numpy.asarray(model.pilots.re), numpy.asarray(model.pilots.im)]
    else:
        manifest["scales"] = {"input_scale": model.input_scale}
    File_Accessing.save_bundle(model.networks(), manifest, path)

def load_model(path):
    '''Loads a model saved by save_model.

    Returns
    -------
    method, model, manifest
        Method name, model in eval mode and its manifest.
    '''
    networks, manifest = File_Accessing.load_bundle(path)
    method = manifest.get("method")
    scales = manifest.get("scales", {})
    try:
        if method == "neural_calibration":
            model = CalibratedZf(networks["zf_calibration"], scales["input_scale"])
        elif method == "implicit_pipeline":
            model = ImplicitPipeline(networks["ls_calibration"], networks["channel_map"],
                                     CalibratedZf(networks["zf_calibration"], scales["zf_input_scale"]),
                                     ComplexMatrix(*manifest["pilots"]), scales["pilot_scale"], scales["uplink_scale"])
        elif method == "block_by_block":
            model = ChannelMap(networks["channel_map"], scales["input_scale"])
        elif method == "blackbox_mlp":
            model = BlackboxModel(networks["blackbox"], manifest["M"], manifest["K_train"], scales["input_scale"])
        else:
            raise FormatError(f"{path} holds an unknown model kind '{method}'.")
    except KeyError as e:
        raise FormatError(f"{path} misses the entry {e}.")
    return method, model.eval(), manifest

##---------------------------------------------------------------------------------------
##Experiments

def _marker_row(method, reason, point):
    return {"method": f"{method} [{reason}]",
            "M": point.system.M,
            "K": point.system.K,
            "P_dl_dbm": point.P_dl_dbm,
            "P_ul_dbm": point.P_ul_dbm,
            "mean_sum_rate_bps_hz": float("nan"),
            "std": float("nan"),
            "n_samples": 0,
            "mean_inference_ms": float("nan")}

def point_datasets(cfg, system, with_train = True, with_pilots = True, workers = 1):
    '''Training and test sets of one sweep point.

    Test samples follow the training ones in index order, so both sets never
    share a realization. If the experiment names a dataset file, its first
    train_count samples train and the following test_count test.
    '''
    counts = cfg.dataset
    if counts.path is not None:
        stored = File_Accessing.load_dataset(counts.path, system)
        if len(stored) < counts.train_count+counts.test_count:
            raise ConfigError(f"{counts.path} holds {len(stored)} samples, {counts.train_count+counts.test_count} needed.", field = "dataset.path")
        train, rest = stored.split(counts.train_count)
        return train, rest.split(counts.test_count)[0]
    train = generate_dataset(system, counts.train_count, 0, with_pilots, workers) if with_train else None
    test = generate_dataset(system, counts.test_count, counts.train_count, with_pilots, workers)
    return train, test

def train_learned(cfg, system, methods, dataset, verbose = True):
    '''Trains the learned methods among methods.

    Returns
    -------
    models, failures
        method -> model, and method -> failure reason for diverged trainings.
    '''
    models = {}
    failures = {}
    for method in methods:
        if method not in learned_methods:
            continue
        try:
            models[method] = train_method(method, dataset, system, cfg.hyper, verbose)[0]
        except DivergenceError as e:
            report(f"{method} diverged: {e}", verbose)
            failures[method] = "diverged"
    return models, failures

def run_point(cfg, point, shared_models, shared_failures, verbose = True, workers = 1):
    '''Trains what is missing and evaluates every method at one sweep point.'''
    system = point.system.with_changes(rng_seed = cfg.dataset.seed)
    to_train = [m for m in cfg.methods if m in learned_methods and m not in shared_models and m not in shared_failures]
    with_pilots = any(m in pilot_methods for m in cfg.methods)
    report(f"Sweep point M={system.M}, K={system.K}, P_DL={point.P_dl_dbm} dBm, P_UL={point.P_ul_dbm} dBm", verbose)
    train, test = point_datasets(cfg, system, len(to_train) > 0, with_pilots, workers)
    models, failures = train_learned(cfg, system, to_train, train, verbose)
    models.update(shared_models)
    failures.update(shared_failures)
    rows = []
    for method in cfg.methods:
        if method in failures:
            rows.append(_marker_row(method, failures[method], point))
            continue
        try:
            result = evaluate_method(method, test, system, models.get(method), cfg.wmmse)
        except DimensionError as e:
            if method not in learned_methods:
                raise
            report(f"{method} can't run at this point: {e}", verbose)
            rows.append(_marker_row(method, "incompatible", point))
            continue
        timing = float("nan")
        if cfg.measure_timing:
            timing = time_method(method, system, cfg.timing_repeats, models.get(method), cfg.hyper, cfg.wmmse)["mean_ms"]
        rows.append({"method": method,
                     "M": system.M,
                     "K": system.K,
                     "P_dl_dbm": point.P_dl_dbm,
                     "P_ul_dbm": point.P_ul_dbm,
                     "mean_sum_rate_bps_hz": result["mean"],
                     "std": result["std"],
                     "n_samples": result["n"],
                     "mean_inference_ms": timing})
    return rows

def experiment_manifest(cfg):
    '''Resolved configuration and library version, JSON friendly.'''
    return {"version": version, "config": asdict(cfg)}

def run_experiment(cfg, verbose = True):
    '''Runs a whole sweep and writes its report.

    Every sweep point generates (or loads) its datasets, trains the learned
    methods it needs and evaluates every method on a common test set. Points
    are spread over worker processes when multiprocessing is enabled; rows are
    assembled in sweep order either way.

    Parameters
    ----------
    cfg : ExperimentConfig
        The experiment.

    verbose : boolean
        Print progress.

    Uses
    ----
    concurrent.futures.ProcessPoolExecutor : object
        Runs sweep points in parallel.

    Returns
    -------
    report : DataFrame
        One row per (point, method), columns report_columns. Methods whose
        training diverged or whose model doesn't fit a point get a marker row
        with empty values.

    Raises
    ------
    ConfigError
        On an empty sweep, unknown methods or invalid points. Nothing is written.
    '''
    points = validate_experiment(cfg)
    workers = worker_count(cfg.use_multiple_CPU_cores, cfg.number_cores)
    begin_time = time.perf_counter()
    if verbose:
        print_sep()
    report(f"Running {len(points)} sweep point(s) with {len(cfg.methods)} method(s)...", verbose)

    shared_models = {}
    shared_failures = {}
    for method, path in cfg.checkpoints.items():
        loaded_method, model, _ = load_model(path)
        if loaded_method != method:
            raise ConfigError(f"{path} holds a '{loaded_method}' model.", field = f"output.checkpoints.{method}")
        shared_models[method] = model
    if cfg.sweep.train_at == "mismatch":
        base = cfg.system.with_changes(rng_seed = cfg.dataset.seed)
        to_train = [m for m in cfg.methods if m in learned_methods and m not in shared_models]
        if len(to_train) > 0:
            report("Training at the base point...", verbose)
            train, _ = point_datasets(cfg, base, True, any(m in pilot_methods for m in to_train), workers)
            models, shared_failures = train_learned(cfg, base, to_train, train, verbose)
            shared_models.update(models)

    if workers > 1 and len(points) > 1:
        with concurrent.futures.ProcessPoolExecutor(max_workers = min(workers, len(points))) as executor:
            results = [executor.submit(run_point, cfg, point, shared_models, shared_failures, False, 1) for point in points]
            rows = []
            for point, result in zip(points, results):
                rows += result.result()
                report(f"Sweep point M={point.system.M}, K={point.system.K} done.", verbose)
    else:
        rows = []
        for point in points:
            rows += run_point(cfg, point, shared_models, shared_failures, verbose, workers)

    evaluation = DataFrame(rows, columns = report_columns)
    if cfg.output_path is not None:
        File_Accessing.write_report(evaluation, cfg.output_path, experiment_manifest(cfg) if cfg.write_manifest else None)
        report(f"Report written to {cfg.output_path}", verbose)
    report(f"Finished! Time elapsed: {time.perf_counter()-begin_time:.1f} s", verbose)
    return evaluation

def relative_to(evaluation, reference = "wmmse"):
    '''Adds the sum-rate of every row as a percentage of a reference method at the same point.

    Parameters
    ----------
    evaluation : DataFrame
        A report from run_experiment.

    reference : string
        Method giving 100%.

    Returns
    -------
    DataFrame
        A copy with a 'percent_of_<reference>' column.
    '''
    keys = ["M", "K", "P_dl_dbm", "P_ul_dbm"]
    base = evaluation[evaluation["method"] == reference]
    if len(base) == 0:
        raise ValueError(f"The report has no '{reference}' rows.")
    base = base[keys+["mean_sum_rate_bps_hz"]].rename(columns = {"mean_sum_rate_bps_hz": "reference_rate"})
    merged = evaluation.merge(base, on = keys, how = "left")
    merged[f"percent_of_{reference}"] = 100.0*merged["mean_sum_rate_bps_hz"]/merged["reference_rate"]
    return merged.drop(columns = ["reference_rate"])

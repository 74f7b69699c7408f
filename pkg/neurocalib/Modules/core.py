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

from . import Execution_Functions
from . import Config_Handler
from . import File_Accessing
from . import CLI
from .General_Functions import NeuroCalibError, ConfigError, worker_count, report, print_sep
from .Channel_Model import generate_dataset
from dataclasses import replace
from pandas import DataFrame, concat
from pathlib import Path
import datetime
import sys

#-----------------------------------------------------------------------------

def load_experiment(args):
    '''Reads the experiment file and applies the command-line overrides.'''
    cfg = Config_Handler.config_handler(args.config)
    if args.seed is not None:
        cfg = replace(cfg,
                      system = cfg.system.with_changes(rng_seed = args.seed),
                      dataset = replace(cfg.dataset, seed = args.seed),
                      hyper = replace(cfg.hyper, seed = args.seed))
    if getattr(args, "methods", None) is not None:
        cfg = replace(cfg, methods = args.methods)
    return cfg

def base_point(cfg):
    '''Same experiment reduced to its base point.'''
    value = {"antennas": cfg.system.M,
             "users": cfg.system.K,
             "power_dl_dbm": cfg.power_dl_dbm,
             "power_ul_dbm": cfg.power_ul_dbm}[cfg.sweep.parameter]
    return replace(cfg, sweep = replace(cfg.sweep, values = [value], train_at = "matched"))

def checkpoint_paths(paths):
    '''method -> model file, read from the manifests of the given files.'''
    found = {}
    for path in paths:
        method, _, _ = Execution_Functions.load_model(path)
        found[method] = path
    return found

def gen_data(args, verbose):
    cfg = load_experiment(args)
    system = cfg.system.with_changes(rng_seed = cfg.dataset.seed)
    count = cfg.dataset.train_count+cfg.dataset.test_count
    workers = worker_count(cfg.use_multiple_CPU_cores, cfg.number_cores)
    report(f"Generating {count} samples (M={system.M}, K={system.K}, L={system.L})...", verbose, end = "")
    dataset = generate_dataset(system, count, 0, True, workers)
    out = args.out if args.out is not None else "dataset.ncal"
    File_Accessing.save_dataset(dataset, out)
    if verbose:
        print("Done!")
    report(f"Dataset written to {out}", verbose)

def train(args, verbose):
    cfg = load_experiment(args)
    methods = [m for m in cfg.methods if m in Execution_Functions.learned_methods]
    if len(methods) == 0:
        raise ConfigError("No learned method to train.", field = "methods")
    if len(args.checkpoint) > 1 and len(args.checkpoint) != len(methods):
        raise ConfigError(f"{len(args.checkpoint)} checkpoint paths given for {len(methods)} methods.")
    system = cfg.system.with_changes(rng_seed = cfg.dataset.seed)
    workers = worker_count(cfg.use_multiple_CPU_cores, cfg.number_cores)
    dataset, _ = Execution_Functions.point_datasets(cfg, system, True, any(m in Execution_Functions.pilot_methods for m in methods), workers)
    curves = []
    for i, method in enumerate(methods):
        if verbose:
            print_sep()
        model, curve = Execution_Functions.train_method(method, dataset, system, cfg.hyper, verbose)
        if len(args.checkpoint) == len(methods):
            path = Path(args.checkpoint[i])
        elif len(args.checkpoint) == 1:
            path = Path(args.checkpoint[0])
            path = path if len(methods) == 1 else path.with_name(f"{path.stem}_{method}{path.suffix}")
        else:
            path = Path(f"{method}.ncm")
        Execution_Functions.save_model(model, path, system, cfg.hyper, cfg.dataset.seed)
        report(f"{method} saved to {path}", verbose)
        curve.insert(0, "method", method)
        curves.append(curve)
    if args.out is not None:
        File_Accessing.write_report(concat(curves, ignore_index = True), args.out)
        report(f"Training curves written to {args.out}", verbose)

def evaluate(args, verbose):
    cfg = base_point(load_experiment(args))
    checkpoints = dict(cfg.checkpoints)
    checkpoints.update(checkpoint_paths(args.checkpoint))
    cfg = replace(cfg, checkpoints = checkpoints, output_path = args.out if args.out is not None else cfg.output_path)
    evaluation = Execution_Functions.run_experiment(cfg, verbose)
    if verbose:
        print(evaluation.to_string(index = False))

def bench(args, verbose):
    cfg = load_experiment(args)
    repeats = args.repeats if args.repeats is not None else cfg.timing_repeats
    rows = []
    for method in cfg.methods:
        report(f"Timing {method}...", verbose, end = "")
        timing = Execution_Functions.time_method(method, cfg.system, repeats, None, cfg.hyper, cfg.wmmse)
        if verbose:
            print("Done!")
        rows.append({"method": method, "M": cfg.system.M, "K": cfg.system.K,
                     "mean_ms": timing["mean_ms"], "median_ms": timing["median_ms"], "n_repeats": repeats})
    table = DataFrame(rows, columns = ["method", "M", "K", "mean_ms", "median_ms", "n_repeats"])
    if args.out is not None:
        File_Accessing.write_report(table, args.out)
    if verbose:
        print(table.to_string(index = False))

def sweep(args, verbose):
    cfg = load_experiment(args)
    checkpoints = dict(cfg.checkpoints)
    checkpoints.update(checkpoint_paths(args.checkpoint))
    cfg = replace(cfg, checkpoints = checkpoints, output_path = args.out if args.out is not None else cfg.output_path)
    Execution_Functions.run_experiment(cfg, verbose)

def template(args, verbose):
    out = args.out if args.out is not None else "neurocalib_parameters.json"
    report("Creating parameters file...", verbose, end = "")
    Config_Handler.write_template(out)
    if verbose:
        print("Done!")
        print(f"Set your parameters in the file\n'{out}' and run\n'neurocalib sweep --config {out}'.")

handlers = {"gen-data": gen_data,
            "train": train,
            "evaluate": evaluate,
            "bench": bench,
            "sweep": sweep,
            "template": template}

def main(args = None):
    '''Command-line entry point. Exits with status 1 on any package error.'''
    try:
        parsed = CLI.CLI(args)
        verbose = not parsed.quiet
        if verbose:
            CLI.print_header()
        begin_time = datetime.datetime.now()
        handlers[parsed.command](parsed, verbose)
        report('Finished! Time elapsed: '+str(datetime.datetime.now() - begin_time).split(".")[0], verbose)
    except NeuroCalibError as e:
        print(f"\nError: {e}", file = sys.stderr, flush = True)
        sys.exit(1)
    except KeyboardInterrupt:
        print("\n\n----------Execution cancelled by user.----------\n", flush = True)
        sys.exit(1)

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

from .General_Functions import ConfigError, dbm_to_watt
from .Channel_Model import SystemConfig
from .Calibration_Tools import TrainingHyper
from .Execution_Functions import ExperimentConfig, SweepConfig, DatasetConfig, WmmseSettings, validate_experiment
from .. import Parameters_Template
from pathlib import Path
import json
import re
import sys

##---------------------------------------------------------------------------------------
##Experiment files are JSON. Every section and key is optional except where noted;
##missing keys take the defaults of the dataclasses they fill. Unknown keys are
##rejected so that typos don't silently fall back to defaults.

sections = {
    "system": {"antennas", "users", "pilot_length", "f_ul_hz", "f_dl_hz", "antenna_spacing_wavelengths",
               "paths", "power_dl_dbm", "power_ul_dbm", "noise_dl_dbm", "noise_ul_dbm", "distance_range_m",
               "reference_path_loss_db", "path_loss_exponent", "shared_gains", "seed"},
    "sweep": {"parameter", "values", "train_at"},
    "methods": None,
    "dataset": {"train_count", "test_count", "seed", "path"},
    "training": {"hidden_zf", "hidden_ls", "hidden_map", "hidden_blackbox", "epochs", "batch_size", "lr",
                 "beta1", "beta2", "eps", "bn_momentum", "bn_eps", "held_out_fraction", "seed"},
    "wmmse": {"max_iters", "min_iters", "tol", "init"},
    "running_modes": {"use_multiple_CPU_cores", "number_cores"},
    "output": {"path", "manifest", "measure_timing", "timing_repeats", "checkpoints"},
}

def key_line(text, path):
    '''Line (1-based) where a dotted key path is written in the JSON text, or None.

    The search follows the path: each key is looked for after the position of
    its parent.
    '''
    position = 0
    for part in path.split("."):
        match = re.compile(r'"'+re.escape(part)+r'"\s*:').search(text, position)
        if match is None:
            return None
        position = match.start()
    return text.count("\n", 0, position)+1

class _Reader(object):
    '''Typed access to one section of the parsed file, with positioned errors.'''
    def __init__(self, text, section, content):
        self.text = text
        self.section = section
        self.content = {} if content is None else content
        if not isinstance(self.content, dict):
            self.fail(section, f"'{section}' must be an object.")
        allowed = sections[section]
        for key in self.content:
            if key not in allowed:
                self.fail(f"{section}.{key}", f"Unknown key '{key}' in '{section}'.")

    def fail(self, path, message):
        raise ConfigError(message, key_line(self.text, path), path)

    def get(self, key, kind, default):
        '''Value of key checked against kind ('int', 'float', 'bool', 'str', 'list'), or default.'''
        path = f"{self.section}.{key}"
        if key not in self.content:
            return default
        value = self.content[key]
        if value is None and default is None:
            return None
        if kind == "int":
            if isinstance(value, bool) or not isinstance(value, int):
                self.fail(path, f"Expected an integer, got {json.dumps(value)}.")
        elif kind == "float":
            if isinstance(value, bool) or not isinstance(value, (int, float)):
                self.fail(path, f"Expected a number, got {json.dumps(value)}.")
            value = float(value)
        elif kind == "bool":
            if not isinstance(value, bool):
                self.fail(path, f"Expected true or false, got {json.dumps(value)}.")
        elif kind == "str":
            if not isinstance(value, str):
                self.fail(path, f"Expected a string, got {json.dumps(value)}.")
        elif kind == "list":
            if not isinstance(value, list):
                self.fail(path, f"Expected a list, got {json.dumps(value)}.")
        return value

    def positive(self, key, kind, default):
        value = self.get(key, kind, default)
        if not value > 0:
            self.fail(f"{self.section}.{key}", f"Must be strictly positive, got {value}.")
        return value

    def int_list(self, key, default):
        value = self.get(key, "list", default)
        if any(isinstance(v, bool) or not isinstance(v, int) or v < 1 for v in value):
            self.fail(f"{self.section}.{key}", "Expected a list of positive integers.")
        return tuple(value)

def parse_config(text):
    '''Parses an experiment file.

    Parameters
    ----------
    text : string
        JSON content.

    Uses
    ----
    json.loads : function
        Syntax check and parsing.

    Returns
    -------
    ExperimentConfig
        The validated experiment, powers converted from dBm to watts.

    Raises
    ------
    ConfigError
        With the line of the problem and the dotted field path when known.
    '''
    try:
        content = json.loads(text)
    except json.JSONDecodeError as e:
        raise ConfigError(f"Invalid JSON: {e.msg} (column {e.colno}).", e.lineno)
    if not isinstance(content, dict):
        raise ConfigError("The configuration must be a JSON object.", 1)
    for key in content:
        if key not in sections:
            raise ConfigError(f"Unknown section '{key}'.", key_line(text, key), key)

    system = _Reader(text, "system", content.get("system"))
    power_dl_dbm = system.get("power_dl_dbm", "float", 5.0)
    power_ul_dbm = system.get("power_ul_dbm", "float", -10.0)
    distance_range = system.get("distance_range_m", "list", [5.0, 50.0])
    if len(distance_range) != 2 or not all(isinstance(d, (int, float)) and not isinstance(d, bool) for d in distance_range):
        system.fail("system.distance_range_m", "Expected [min, max] in meters.")
    try:
        system_cfg = SystemConfig(M = system.positive("antennas", "int", 16),
                                  K = system.positive("users", "int", 4),
                                  L = system.positive("pilot_length", "int", 4),
                                  f_ul = system.positive("f_ul_hz", "float", 2.4e9),
                                  f_dl = system.positive("f_dl_hz", "float", 2.5e9),
                                  d_over_lambda = system.positive("antenna_spacing_wavelengths", "float", 0.5),
                                  Lp = system.positive("paths", "int", 5),
                                  sigma0_sq = dbm_to_watt(system.get("noise_dl_dbm", "float", -85.0)),
                                  sigma_ul_sq = dbm_to_watt(system.get("noise_ul_dbm", "float", -85.0)),
                                  P_DL = dbm_to_watt(power_dl_dbm),
                                  P_UL = dbm_to_watt(power_ul_dbm),
                                  rng_seed = system.get("seed", "int", 0),
                                  distance_range = (float(distance_range[0]), float(distance_range[1])),
                                  reference_path_loss_db = system.get("reference_path_loss_db", "float", 0.0),
                                  path_loss_exponent = system.get("path_loss_exponent", "float", 0.0),
                                  shared_gains = system.get("shared_gains", "bool", False))
    except ConfigError:
        raise
    except ValueError as e:
        raise ConfigError(str(e), key_line(text, "system"), "system")

    sweep = _Reader(text, "sweep", content.get("sweep"))
    sweep_cfg = SweepConfig(parameter = sweep.get("parameter", "str", "users"),
                            values = sweep.get("values", "list", [system_cfg.K]),
                            train_at = sweep.get("train_at", "str", "matched"))
    for value in sweep_cfg.values:
        if isinstance(value, bool) or not isinstance(value, (int, float)):
            sweep.fail("sweep.values", f"Sweep values must be numbers, got {json.dumps(value)}.")

    methods = content.get("methods", ["mrt", "zf", "wmmse", "neural_calibration"])
    if not isinstance(methods, list) or not all(isinstance(m, str) for m in methods):
        raise ConfigError("'methods' must be a list of method names.", key_line(text, "methods"), "methods")

    dataset = _Reader(text, "dataset", content.get("dataset"))
    dataset_cfg = DatasetConfig(train_count = dataset.get("train_count", "int", 20000),
                                test_count = dataset.positive("test_count", "int", 2000),
                                seed = dataset.get("seed", "int", system_cfg.rng_seed),
                                path = dataset.get("path", "str", None))
    if dataset_cfg.train_count < 0:
        dataset.fail("dataset.train_count", "Must not be negative.")

    training = _Reader(text, "training", content.get("training"))
    defaults = TrainingHyper()
    hyper = TrainingHyper(hidden_zf = training.int_list("hidden_zf", list(defaults.hidden_zf)),
                          hidden_ls = training.int_list("hidden_ls", list(defaults.hidden_ls)),
                          hidden_map = training.int_list("hidden_map", list(defaults.hidden_map)),
                          hidden_blackbox = training.int_list("hidden_blackbox", list(defaults.hidden_blackbox)),
                          epochs = training.positive("epochs", "int", defaults.epochs),
                          batch_size = training.positive("batch_size", "int", defaults.batch_size),
                          lr = training.positive("lr", "float", defaults.lr),
                          beta1 = training.get("beta1", "float", defaults.beta1),
                          beta2 = training.get("beta2", "float", defaults.beta2),
                          eps = training.positive("eps", "float", defaults.eps),
                          bn_momentum = training.get("bn_momentum", "float", defaults.bn_momentum),
                          bn_eps = training.positive("bn_eps", "float", defaults.bn_eps),
                          held_out_fraction = training.get("held_out_fraction", "float", defaults.held_out_fraction),
                          seed = training.get("seed", "int", defaults.seed))
    for name in ("beta1", "beta2", "bn_momentum"):
        if not 0.0 <= getattr(hyper, name) < 1.0:
            training.fail(f"training.{name}", f"Must be in [0, 1), got {getattr(hyper, name)}.")
    if not 0.0 < hyper.held_out_fraction < 1.0:
        training.fail("training.held_out_fraction", f"Must be in (0, 1), got {hyper.held_out_fraction}.")

    solver = _Reader(text, "wmmse", content.get("wmmse"))
    wmmse_cfg = WmmseSettings(max_iters = solver.positive("max_iters", "int", 100),
                              tol = solver.positive("tol", "float", 1e-6),
                              init = solver.get("init", "str", "best"),
                              min_iters = solver.positive("min_iters", "int", 3))
    if wmmse_cfg.init not in ("zf", "mrt", "best"):
        solver.fail("wmmse.init", f"Use 'zf', 'mrt' or 'best', got '{wmmse_cfg.init}'.")

    running = _Reader(text, "running_modes", content.get("running_modes"))
    multithreaded = running.get("use_multiple_CPU_cores", "bool", False)
    number_cores = running.get("number_cores", None, 'all')
    if number_cores != 'all' and (isinstance(number_cores, bool) or not isinstance(number_cores, int) or number_cores < 1):
        running.fail("running_modes.number_cores", f"Use 'all' or a positive integer, got {json.dumps(number_cores)}.")

    output = _Reader(text, "output", content.get("output"))
    checkpoints = output.get("checkpoints", None, {})
    if not isinstance(checkpoints, dict) or not all(isinstance(v, str) for v in checkpoints.values()):
        output.fail("output.checkpoints", "Expected an object mapping method names to model files.")

    cfg = ExperimentConfig(system = system_cfg,
                           sweep = sweep_cfg,
                           methods = methods,
                           dataset = dataset_cfg,
                           hyper = hyper,
                           wmmse = wmmse_cfg,
                           power_dl_dbm = power_dl_dbm,
                           power_ul_dbm = power_ul_dbm,
                           output_path = output.get("path", "str", None),
                           write_manifest = output.get("manifest", "bool", True),
                           measure_timing = output.get("measure_timing", "bool", False),
                           timing_repeats = output.positive("timing_repeats", "int", 20),
                           checkpoints = checkpoints,
                           use_multiple_CPU_cores = multithreaded,
                           number_cores = number_cores)
    try:
        validate_experiment(cfg)
    except ConfigError as e:
        raise ConfigError(e.message, None if e.field is None else key_line(text, e.field), e.field)
    return cfg

def config_handler(path = None):
    '''Reads the experiment file from a path, or from stdin when it is piped in.

    Parameters
    ----------
    path : string or Path
        Configuration file. If None, the configuration is read from stdin.

    Returns
    -------
    ExperimentConfig
        The parsed experiment.
    '''
    if path is None:
        if sys.stdin.isatty():
            raise ConfigError("No configuration given: use --config or pipe a file in.")
        text = sys.stdin.read()
    else:
        try:
            text = Path(path).read_text(encoding = "utf-8")
        except OSError as e:
            raise ConfigError(f"Can't read {path}: {e.strerror}.")
    return parse_config(text)

def write_template(path):
    '''Writes the JSON experiment template to path.'''
    path = Path(path)
    path.parent.mkdir(exist_ok = True, parents = True)
    path.write_text(Parameters_Template.template, encoding = "utf-8")
    return path

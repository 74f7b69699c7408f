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

# Experiment template written by 'neurocalib template'. The keys are documented
# in README.md; powers and noise levels are in dBm.
template = '''{
  "system": {
    "antennas": 16,
    "users": 4,
    "pilot_length": 4,
    "f_ul_hz": 2.4e9,
    "f_dl_hz": 2.5e9,
    "antenna_spacing_wavelengths": 0.5,
    "paths": 5,
    "power_dl_dbm": 5,
    "power_ul_dbm": -10,
    "noise_dl_dbm": -85,
    "noise_ul_dbm": -85,
    "distance_range_m": [5, 50],
    "reference_path_loss_db": 40,
    "path_loss_exponent": 3.5,
    "shared_gains": false,
    "seed": 0
  },
  "sweep": {
    "parameter": "users",
    "values": [2, 4, 6, 8],
    "train_at": "matched"
  },
  "methods": ["mrt", "zf", "wmmse", "blackbox_mlp", "neural_calibration"],
  "dataset": {
    "train_count": 20000,
    "test_count": 2000,
    "seed": 0,
    "path": null
  },
  "training": {
    "hidden_zf": [128, 512, 512],
    "hidden_ls": [128, 512, 512],
    "hidden_map": [128, 512, 512],
    "hidden_blackbox": [128, 512, 512],
    "epochs": 20,
    "batch_size": 1024,
    "lr": 0.001,
    "beta1": 0.9,
    "beta2": 0.999,
    "eps": 1e-8,
    "bn_momentum": 0.99,
    "bn_eps": 1e-5,
    "held_out_fraction": 0.1,
    "seed": 0
  },
  "wmmse": {
    "max_iters": 100,
    "min_iters": 3,
    "tol": 1e-6,
    "init": "best"
  },
  "running_modes": {
    "use_multiple_CPU_cores": true,
    "number_cores": "all"
  },
  "output": {
    "path": "results/report.csv",
    "manifest": true,
    "measure_timing": false,
    "timing_repeats": 20,
    "checkpoints": {}
  }
}
'''

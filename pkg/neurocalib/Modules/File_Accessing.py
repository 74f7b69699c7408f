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

from .General_Functions import FormatError, DimensionError
from .Channel_Model import SystemConfig, ChannelDataset
from .Linear_Algebra import ComplexMatrix
from .Neural_Network import MlpParameters
from pathlib import Path
import numpy
import struct
import io
import json
import dill

##---------------------------------------------------------------------------------------
##File formats. Everything binary is little-endian.
##
##Dataset file:
##  magic 'NCALDSET' (8 bytes), u32 version, u32 flags (bit 0: Y_p present),
##  u64 M, u64 K, u64 L, u64 count,
##  then for each sample: H_UL re, H_UL im (M x K each), H_DL re, H_DL im (M x K),
##  and if flagged Y_p re, Y_p im (M x L), all row-major float64.
##
##MLP checkpoint:
##  magic 'NCALMLP\0' (8 bytes), u32 version, u32 number of layer dims n,
##  n x u32 layer dims, f64 bn_momentum, f64 bn_eps,
##  then per layer weights (in x out) and biases, then per hidden layer
##  bn_gamma, bn_beta, bn_running_mean, bn_running_var, all float64.

dataset_magic = b"NCALDSET"
dataset_version = 1
mlp_magic = b"NCALMLP\x00"
mlp_version = 1

def _read_exact(f, size, what):
    data = f.read(size)
    if len(data) != size:
        raise FormatError(f"Truncated file while reading {what}.")
    return data

def _read_array(f, shape, what):
    count = int(numpy.prod(shape))
    return numpy.frombuffer(_read_exact(f, 8*count, what), dtype = '<f8').reshape(shape).copy()

def save_dataset(dataset, path):
    '''Writes a ChannelDataset to the binary dataset format.

    Parameters
    ----------
    dataset : ChannelDataset
        Samples to write.

    path : string or Path
        Destination file, parent folders are created.
    '''
    cfg = dataset.cfg
    count = len(dataset)
    has_pilots = dataset.Y_p is not None
    path = Path(path)
    path.parent.mkdir(exist_ok = True, parents = True)
    parts = [dataset.H_UL.re, dataset.H_UL.im, dataset.H_DL.re, dataset.H_DL.im]
    if has_pilots:
        parts += [dataset.Y_p.re, dataset.Y_p.im]
    # one row of flat per sample
    flat = numpy.concatenate([numpy.asarray(p, dtype = '<f8').reshape(count, -1) for p in parts], axis = 1)
    with open(path, 'wb') as f:
        f.write(dataset_magic)
        f.write(struct.pack('<II', dataset_version, 1 if has_pilots else 0))
        f.write(struct.pack('<QQQQ', cfg.M, cfg.K, cfg.L, count))
        f.write(numpy.ascontiguousarray(flat).tobytes())

def load_dataset(path, cfg = None):
    '''Reads a dataset file.

    Parameters
    ----------
    path : string or Path
        File written by save_dataset.

    cfg : SystemConfig
        Configuration to attach, its M, K and L must match the file. A default
        configuration with the file's dimensions is used if None.

    Returns
    -------
    ChannelDataset
        The samples, with first_index 0.

    Raises
    ------
    FormatError
        On a wrong magic, unknown version or truncated file.
    '''
    with open(path, 'rb') as f:
        if _read_exact(f, 8, "magic") != dataset_magic:
            raise FormatError(f"{path} is not a dataset file.")
        version, flags = struct.unpack('<II', _read_exact(f, 8, "header"))
        if version != dataset_version:
            raise FormatError(f"Unsupported dataset version {version}.")
        M, K, L, count = struct.unpack('<QQQQ', _read_exact(f, 32, "dimensions"))
        has_pilots = bool(flags & 1)
        sizes = [M*K]*4+([M*L]*2 if has_pilots else [])
        flat = _read_array(f, (count, sum(sizes)), "samples")
        if len(f.read(1)) != 0:
            raise FormatError("Trailing bytes after the last sample.")
    if cfg is None:
        cfg = SystemConfig(M = M, K = K, L = L)
    elif (cfg.M, cfg.K, cfg.L) != (M, K, L):
        raise DimensionError(f"Dataset holds M={M}, K={K}, L={L}, configuration has M={cfg.M}, K={cfg.K}, L={cfg.L}.")
    bounds = numpy.cumsum([0]+sizes)
    blocks = [flat[:, bounds[i]:bounds[i+1]] for i in range(len(sizes))]
    H_UL = ComplexMatrix(blocks[0].reshape(count, M, K), blocks[1].reshape(count, M, K))
    H_DL = ComplexMatrix(blocks[2].reshape(count, M, K), blocks[3].reshape(count, M, K))
    Y_p = ComplexMatrix(blocks[4].reshape(count, M, L), blocks[5].reshape(count, M, L)) if has_pilots else None
    return ChannelDataset(cfg, H_UL, H_DL, Y_p, 0)

##---------------------------------------------------------------------------------------
##Network checkpoints

def mlp_to_bytes(params):
    '''Serializes an MlpParameters to the checkpoint format.'''
    dims = params.layer_dims
    out = [mlp_magic,
           struct.pack('<II', mlp_version, len(dims)),
           struct.pack(f'<{len(dims)}I', *dims),
           struct.pack('<dd', params.bn_momentum, params.bn_eps)]
    for w, b in zip(params.weights, params.biases):
        out.append(numpy.asarray(w, dtype = '<f8').tobytes())
        out.append(numpy.asarray(b, dtype = '<f8').tobytes())
    for i in range(len(dims)-2):
        for name in ("bn_gamma", "bn_beta", "bn_running_mean", "bn_running_var"):
            out.append(numpy.asarray(getattr(params, name)[i], dtype = '<f8').tobytes())
    return b"".join(out)

def mlp_from_bytes(data):
    '''Inverse of mlp_to_bytes. The network comes back in eval mode.'''
    f = io.BytesIO(data)
    if _read_exact(f, 8, "magic") != mlp_magic:
        raise FormatError("Not an MLP checkpoint.")
    version, n = struct.unpack('<II', _read_exact(f, 8, "header"))
    if version != mlp_version:
        raise FormatError(f"Unsupported checkpoint version {version}.")
    if n < 2:
        raise FormatError(f"Checkpoint declares {n} layer dims.")
    dims = list(struct.unpack(f'<{n}I', _read_exact(f, 4*n, "layer dims")))
    momentum, eps = struct.unpack('<dd', _read_exact(f, 16, "batch norm settings"))
    weights = []
    biases = []
    for i in range(n-1):
        weights.append(_read_array(f, (dims[i], dims[i+1]), f"weights {i}"))
        biases.append(_read_array(f, (dims[i+1],), f"biases {i}"))
    bn = {"bn_gamma": [], "bn_beta": [], "bn_running_mean": [], "bn_running_var": []}
    for i in range(n-2):
        for name in bn:
            bn[name].append(_read_array(f, (dims[i+1],), f"{name} {i}"))
    if len(f.read(1)) != 0:
        raise FormatError("Trailing bytes after the checkpoint.")
    return MlpParameters(layer_dims = dims, weights = weights, biases = biases,
                         bn_momentum = momentum, bn_eps = eps, mode = "eval", **bn)

def save_checkpoint(params, path):
    '''Writes one network to a checkpoint file.'''
    path = Path(path)
    path.parent.mkdir(exist_ok = True, parents = True)
    with open(path, 'wb') as f:
        f.write(mlp_to_bytes(params))

def load_checkpoint(path):
    '''Reads a network written by save_checkpoint.'''
    with open(path, 'rb') as f:
        return mlp_from_bytes(f.read())

##---------------------------------------------------------------------------------------
##Model bundles and reports

def save_bundle(networks, manifest, path):
    '''Stores several networks and their provenance in one file.

    Parameters
    ----------
    networks : dict
        Name -> MlpParameters, each embedded in the checkpoint format.

    manifest : dict
        Model kind, dimensions, hyperparameters, input scales, seeds.

    path : string or Path
        Destination.

    Uses
    ----
    dill.dump : function
        Writes [networks, manifest] as a single object.
    '''
    path = Path(path)
    path.parent.mkdir(exist_ok = True, parents = True)
    with open(path, 'wb') as f:
        dill.dump([{name: mlp_to_bytes(net) for name, net in networks.items()}, manifest], f)

def load_bundle(path):
    '''Returns (networks, manifest) from a file written by save_bundle.'''
    with open(path, 'rb') as f:
        try:
            content = dill.load(f)
        except Exception as e:
            raise FormatError(f"Can't read model bundle {path}: {e}")
    if not isinstance(content, list) or len(content) != 2 or not isinstance(content[0], dict):
        raise FormatError(f"{path} is not a model bundle.")
    return {name: mlp_from_bytes(data) for name, data in content[0].items()}, content[1]

def write_report(report, path, manifest = None):
    '''Writes a report DataFrame as CSV, and the run manifest as JSON next to it.

    Parameters
    ----------
    report : DataFrame
        Rows to write, header included, no index column.

    path : string or Path
        CSV destination.

    manifest : dict
        If given, written to the same path with a .json suffix.

    Returns
    -------
    Path
        The CSV path.
    '''
    path = Path(path)
    path.parent.mkdir(exist_ok = True, parents = True)
    report.to_csv(path, index = False, encoding = 'utf-8', lineterminator = "\n")
    if manifest is not None:
        with open(path.with_suffix('.json'), 'w', encoding = 'utf-8') as f:
            json.dump(manifest, f, indent = 2, sort_keys = True, default = str)
    return path

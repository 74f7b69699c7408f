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
from .General_Functions import DimensionError, rng_stream, stream_tags
from dataclasses import dataclass, field
from typing import List
import numpy
import copy

trainable_fields = ("weights", "biases", "bn_gamma", "bn_beta")
'''Fields of MlpParameters updated by the optimizer, in a fixed order.
'''

@dataclass
class MlpParameters:
    '''Weights and batch normalization state of a fully connected network.

    Hidden layers are Dense -> BN -> ReLU, the output layer is a plain Dense.
    Weights are stored (in_dim, out_dim) so a batch of rows x maps to x W + b.

    Parameters
    ----------
    layer_dims : list
        [in_dim, hidden_1, ..., out_dim].

    weights, biases : list
        One matrix / vector per layer.

    bn_gamma, bn_beta, bn_running_mean, bn_running_var : list
        One vector per hidden layer.

    bn_momentum : float
        Fraction of the running statistics kept at each training batch.

    bn_eps : float
        Added to the variance before normalizing.

    mode : string
        'train' (batch statistics, running stats updated) or 'eval'.
    '''
    layer_dims: List[int]
    weights: List[numpy.ndarray]
    biases: List[numpy.ndarray]
    bn_gamma: List[numpy.ndarray] = field(default_factory = list)
    bn_beta: List[numpy.ndarray] = field(default_factory = list)
    bn_running_mean: List[numpy.ndarray] = field(default_factory = list)
    bn_running_var: List[numpy.ndarray] = field(default_factory = list)
    bn_momentum: float = 0.99
    bn_eps: float = 1e-5
    mode: str = "train"

    def __post_init__(self):
        if len(self.layer_dims) < 2:
            raise DimensionError("An MLP needs at least an input and an output dimension.")
        layers = len(self.layer_dims)-1
        if len(self.weights) != layers or len(self.biases) != layers:
            raise DimensionError(f"Expected {layers} weight matrices and bias vectors.")
        for i in range(layers):
            if self.weights[i].shape != (self.layer_dims[i], self.layer_dims[i+1]):
                raise DimensionError(f"Layer {i} weights have shape {self.weights[i].shape}, expected {(self.layer_dims[i], self.layer_dims[i+1])}.")
            if self.biases[i].shape != (self.layer_dims[i+1],):
                raise DimensionError(f"Layer {i} biases have shape {self.biases[i].shape}.")
        for name in ("bn_gamma", "bn_beta", "bn_running_mean", "bn_running_var"):
            if len(getattr(self, name)) != layers-1:
                raise DimensionError(f"Expected {layers-1} vectors in {name}.")
        if any(numpy.any(v <= 0.0) for v in self.bn_running_var):
            raise ValueError("bn_running_var entries must be strictly positive.")

    @property
    def in_dim(self):
        return self.layer_dims[0]

    @property
    def out_dim(self):
        return self.layer_dims[-1]

    def train(self):
        self.mode = "train"
        return self

    def eval(self):
        self.mode = "eval"
        return self

    def copy(self):
        return copy.deepcopy(self)

    def trainable(self):
        '''Yields ((field, layer), array) for every trainable array, in a fixed order.'''
        for name in trainable_fields:
            for i, array in enumerate(getattr(self, name)):
                yield (name, i), array

def init_mlp(layer_dims, seed = 0, stream = 0, zero_output = False, bn_momentum = 0.99, bn_eps = 1e-5):
    '''Creates an MLP with uniform He fan-in initialization.

    Parameters
    ----------
    layer_dims : list
        [in_dim, hidden..., out_dim].

    seed : int
        Experiment seed.

    stream : int
        Distinguishes several networks initialized from the same seed.

    zero_output : boolean
        Zero the output layer, so the network initially outputs exactly zero
        (used with a residual skip to start from the identity map).

    Returns
    -------
    MlpParameters
        Freshly initialized parameters in train mode.
    '''
    rng = rng_stream(seed, stream_tags["weights"], stream)
    weights = []
    biases = []
    layers = len(layer_dims)-1
    for i in range(layers):
        limit = numpy.sqrt(6.0/layer_dims[i])
        w = rng.uniform(-limit, limit, size = (layer_dims[i], layer_dims[i+1]))
        if zero_output and i == layers-1:
            w = numpy.zeros_like(w)
        weights.append(w)
        biases.append(numpy.zeros(layer_dims[i+1]))
    hidden = layer_dims[1:-1]
    return MlpParameters(layer_dims = list(layer_dims),
                         weights = weights,
                         biases = biases,
                         bn_gamma = [numpy.ones(h) for h in hidden],
                         bn_beta = [numpy.zeros(h) for h in hidden],
                         bn_running_mean = [numpy.zeros(h) for h in hidden],
                         bn_running_var = [numpy.ones(h) for h in hidden],
                         bn_momentum = bn_momentum,
                         bn_eps = bn_eps)

def batch_norm(params, i, z):
    '''Batch normalization of hidden layer i, before gamma/beta.'''
    if params.mode == "train":
        normalized, mean, var = ops.batch_normalize(z, params.bn_eps)
        keep = params.bn_momentum
        params.bn_running_mean[i] = keep*params.bn_running_mean[i]+(1.0-keep)*mean
        params.bn_running_var[i] = keep*params.bn_running_var[i]+(1.0-keep)*var
        return normalized
    return ops.div(ops.sub(z, params.bn_running_mean[i]), numpy.sqrt(params.bn_running_var[i]+params.bn_eps))

def mlp_forward(params, x, tape = None):
    '''Forward pass of a batch of rows through the network.

    Parameters
    ----------
    params : MlpParameters
        The network.

    x : ndarray or Variable
        Input of shape (batch, in_dim).

    tape : Tape
        If given, parameters are registered on it and the pass is recorded.

    Returns
    -------
    ndarray or Variable
        Output of shape (batch, out_dim).
    '''
    if numpy.shape(ops.value(x))[-1] != params.in_dim:
        raise DimensionError(f"MLP expects {params.in_dim} inputs, got shape {numpy.shape(ops.value(x))}.")

    def bind(name, i):
        array = getattr(params, name)[i]
        return array if tape is None else tape.parameter(params, (name, i), array)

    h = x
    layers = len(params.weights)
    for i in range(layers):
        z = ops.affine(h, bind("weights", i), bind("biases", i))
        if i == layers-1:
            return z
        z = batch_norm(params, i, z)
        z = ops.scale_shift(z, bind("bn_gamma", i), bind("bn_beta", i))
        h = ops.relu(z)

@dataclass
class AdamState:
    '''Moment estimates of the Adam optimizer for one MlpParameters.'''
    step: int = 0
    m: dict = field(default_factory = dict)
    v: dict = field(default_factory = dict)

def adam_step(params, grads, state, lr = 1e-3, beta1 = 0.9, beta2 = 0.999, eps = 1e-8):
    '''One Adam update with bias correction, applied in place.

    Parameters
    ----------
    params : MlpParameters
        Network to update.

    grads : dict
        Maps (field, layer) to the gradient of the loss, as returned by
        Gradients.of_parameters. Missing entries count as zero gradients.

    state : AdamState
        Moments, updated in place.

    Returns
    -------
    params, state
        The updated objects.
    '''
    state.step += 1
    correction1 = 1.0-beta1**state.step
    correction2 = 1.0-beta2**state.step
    for key, array in params.trainable():
        g = grads.get(key)
        if g is None:
            g = numpy.zeros_like(array)
        elif g.shape != array.shape:
            raise DimensionError(f"Gradient of {key} has shape {g.shape}, parameter has {array.shape}.")
        if key not in state.m:
            state.m[key] = numpy.zeros_like(array)
            state.v[key] = numpy.zeros_like(array)
        state.m[key] = beta1*state.m[key]+(1.0-beta1)*g
        state.v[key] = beta2*state.v[key]+(1.0-beta2)*(g*g)
        m_hat = state.m[key]/correction1
        v_hat = state.v[key]/correction2
        name, layer = key
        getattr(params, name)[layer] = array-lr*m_hat/(numpy.sqrt(v_hat)+eps)
    return params, state

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

from .General_Functions import TapeError, DimensionError
import numpy

##---------------------------------------------------------------------------------------
##Reverse-mode differentiation on real arrays. Every primitive below accepts plain
##numpy arrays or Variables: with no Variable among its arguments it simply returns
##the numpy result, so the same numerical code runs taped (training) or untaped
##(inference, baselines).

class Variable(object):
    '''A real array recorded on a Tape.

    Parameters
    ----------
    value : ndarray
        The forward value.

    tape : Tape
        The tape that owns this node.

    index : int
        Position of the node in the tape, which is also a topological order.
    '''
    __slots__ = ("value", "tape", "index")
    __array_priority__ = 100

    def __init__(self, value, tape, index):
        self.value = value
        self.tape = tape
        self.index = index

    @property
    def shape(self):
        return self.value.shape

    @property
    def ndim(self):
        return self.value.ndim

    def __repr__(self):
        return f"Variable(index={self.index}, shape={self.value.shape})"

    def __add__(self, other):
        return add(self, other)

    def __radd__(self, other):
        return add(other, self)

    def __sub__(self, other):
        return sub(self, other)

    def __rsub__(self, other):
        return sub(other, self)

    def __mul__(self, other):
        return mul(self, other)

    def __rmul__(self, other):
        return mul(other, self)

    def __truediv__(self, other):
        return div(self, other)

    def __rtruediv__(self, other):
        return div(other, self)

    def __neg__(self):
        return neg(self)

    def __matmul__(self, other):
        return matmul(self, other)

    def __rmatmul__(self, other):
        return matmul(other, self)

    def __getitem__(self, key):
        return getitem(self, key)

class Tape(object):
    '''Records the operations applied to Variables so their gradients can be
    obtained by a single reverse sweep.

    Parameters are registered once per (owner, name) pair, so a network applied
    several times in one forward pass shares a single leaf and gets its gradient
    contributions summed.
    '''
    def __init__(self):
        self.values = []
        self.parents = []
        self.vjps = []
        self.parameters = {}

    def __len__(self):
        return len(self.values)

    def watch(self, value):
        '''Records a leaf holding the given array and returns it as a Variable.'''
        return self._record(numpy.asarray(value, dtype = float), (), ())

    def parameter(self, owner, name, value):
        '''Returns the leaf of a trainable array, creating it on first use.

        Parameters
        ----------
        owner : object
            The object owning the array (e.g. an MlpParameters).

        name : tuple
            Identifies the array within its owner, like ('weights', 0).

        value : ndarray
            The array itself.

        Returns
        -------
        Variable
            The leaf registered for (owner, name).
        '''
        key = (id(owner), name)
        if key not in self.parameters:
            self.parameters[key] = (owner, self.watch(value))
        return self.parameters[key][1]

    def release(self):
        '''Drops every recorded node, closure and parameter leaf.

        Variables hold their tape and the parameter table holds Variables, so a
        tape left alive after an optimizer step keeps the whole forward pass in
        memory until the cycle collector runs. Training loops call this once
        the gradients have been read.
        '''
        self.values = []
        self.parents = []
        self.vjps = []
        self.parameters = {}

    def _record(self, value, parents, vjps):
        variable = Variable(value, self, len(self.values))
        self.values.append(value)
        self.parents.append(parents)
        self.vjps.append(vjps)
        return variable

def backward(tape, loss):
    '''Reverse sweep from a scalar loss.

    Nodes are visited once each, from the loss towards the leaves, in reverse
    recording order. Only leaf gradients survive the sweep, intermediate ones
    are freed as soon as they have been propagated.

    Parameters
    ----------
    tape : Tape
        The tape holding the computation.

    loss : Variable
        A scalar Variable recorded on the tape.

    Returns
    -------
    gradients : Gradients
        Gradient accumulators for every node of the tape.
    '''
    if not isinstance(loss, Variable) or loss.tape is not tape:
        raise TapeError("Loss is not recorded on this tape.")
    if loss.value.size != 1:
        raise TapeError(f"Loss must be a scalar, got shape {loss.value.shape}.")
    grads = [None]*len(tape)
    grads[loss.index] = numpy.ones_like(loss.value)
    for i in range(loss.index, -1, -1):
        g = grads[i]
        if g is None or not tape.parents[i]:
            continue
        for parent, vjp in zip(tape.parents[i], tape.vjps[i]):
            contribution = vjp(g)
            if grads[parent] is None:
                grads[parent] = contribution
            else:
                grads[parent] = grads[parent]+contribution
        grads[i] = None
    return Gradients(tape, grads)

class Gradients(object):
    '''Result of a backward sweep.'''
    def __init__(self, tape, grads):
        self.tape = tape
        self.grads = grads

    def of(self, variable):
        '''Gradient of the loss with respect to a Variable, zeros if unreachable.'''
        if variable.tape is not self.tape:
            raise TapeError("Variable belongs to another tape.")
        g = self.grads[variable.index]
        return numpy.zeros_like(variable.value) if g is None else g

    def of_parameters(self, owner):
        '''Gradients of every parameter registered for an owner.

        Returns
        -------
        dict
            Maps the parameter name (as given to Tape.parameter) to its gradient.
        '''
        found = {}
        for (owner_id, name), (registered_owner, variable) in self.tape.parameters.items():
            if registered_owner is owner:
                found[name] = self.of(variable)
        return found

##---------------------------------------------------------------------------------------
##Primitives

def value(x):
    '''Forward value of a Variable, or the input itself.'''
    return x.value if isinstance(x, Variable) else x

def _tape_of(*args):
    tape = None
    for a in args:
        if isinstance(a, Variable):
            if tape is None:
                tape = a.tape
            elif a.tape is not tape:
                raise TapeError("Operands recorded on different tapes.")
    return tape

def _unbroadcast(g, shape):
    '''Sums a gradient over the axes that broadcasting added or stretched.'''
    while g.ndim > len(shape):
        g = g.sum(axis = 0)
    for axis, size in enumerate(shape):
        if size == 1 and g.shape[axis] != 1:
            g = g.sum(axis = axis, keepdims = True)
    return g

def _apply(result, inputs, vjps):
    '''Records result on the tape of the inputs, keeping only Variable parents.'''
    tape = _tape_of(*inputs)
    if tape is None:
        return result
    parents = []
    kept = []
    for x, vjp in zip(inputs, vjps):
        if isinstance(x, Variable):
            parents.append(x.index)
            kept.append(vjp)
    return tape._record(result, tuple(parents), tuple(kept))

def add(a, b):
    av, bv = value(a), value(b)
    shape_a, shape_b = numpy.shape(av), numpy.shape(bv)
    return _apply(av+bv, (a, b),
                  (lambda g: _unbroadcast(g, shape_a),
                   lambda g: _unbroadcast(g, shape_b)))

def sub(a, b):
    av, bv = value(a), value(b)
    shape_a, shape_b = numpy.shape(av), numpy.shape(bv)
    return _apply(av-bv, (a, b),
                  (lambda g: _unbroadcast(g, shape_a),
                   lambda g: -_unbroadcast(g, shape_b)))

def mul(a, b):
    av, bv = value(a), value(b)
    shape_a, shape_b = numpy.shape(av), numpy.shape(bv)
    return _apply(av*bv, (a, b),
                  (lambda g: _unbroadcast(g*bv, shape_a),
                   lambda g: _unbroadcast(g*av, shape_b)))

def div(a, b):
    av, bv = value(a), value(b)
    shape_a, shape_b = numpy.shape(av), numpy.shape(bv)
    return _apply(av/bv, (a, b),
                  (lambda g: _unbroadcast(g/bv, shape_a),
                   lambda g: _unbroadcast(-g*av/(bv*bv), shape_b)))

def neg(a):
    return _apply(-value(a), (a,), (lambda g: -g,))

def square(a):
    av = value(a)
    return _apply(av*av, (a,), (lambda g: 2.0*g*av,))

def sqrt(a):
    result = numpy.sqrt(value(a))
    return _apply(result, (a,), (lambda g: g/(2.0*result),))

def log(a):
    av = value(a)
    return _apply(numpy.log(av), (a,), (lambda g: g/av,))

def relu(a):
    av = value(a)
    mask = av > 0.0
    return _apply(numpy.where(mask, av, 0.0), (a,), (lambda g: g*mask,))

def matmul(a, b):
    '''Matrix product over the last two axes, leading axes broadcast.'''
    av, bv = value(a), value(b)
    if numpy.shape(av)[-1] != numpy.shape(bv)[-2]:
        raise DimensionError(f"Cannot multiply shapes {numpy.shape(av)} and {numpy.shape(bv)}.")
    shape_a, shape_b = numpy.shape(av), numpy.shape(bv)
    return _apply(numpy.matmul(av, bv), (a, b),
                  (lambda g: _unbroadcast(numpy.matmul(g, numpy.swapaxes(bv, -1, -2)), shape_a),
                   lambda g: _unbroadcast(numpy.matmul(numpy.swapaxes(av, -1, -2), g), shape_b)))

def affine(x, W, b):
    '''x W + b recorded as a single node, W of shape (in, out) and b of shape (out,).

    Leading axes of x are treated as a batch.
    '''
    xv, Wv, bv = value(x), value(W), value(b)
    if numpy.shape(xv)[-1] != numpy.shape(Wv)[0]:
        raise DimensionError(f"Cannot multiply shapes {numpy.shape(xv)} and {numpy.shape(Wv)}.")
    n_in, n_out = numpy.shape(Wv)
    return _apply(numpy.matmul(xv, Wv)+bv, (x, W, b),
                  (lambda g: numpy.matmul(g, Wv.T),
                   lambda g: numpy.reshape(xv, (-1, n_in)).T@numpy.reshape(g, (-1, n_out)),
                   lambda g: numpy.reshape(g, (-1, n_out)).sum(axis = 0)))

def scale_shift(z, gamma, beta):
    '''z*gamma + beta over the last axis, recorded as a single node.'''
    zv, gv, bv = value(z), value(gamma), value(beta)
    width = numpy.shape(zv)[-1]
    return _apply(zv*gv+bv, (z, gamma, beta),
                  (lambda g: g*gv,
                   lambda g: numpy.reshape(g*zv, (-1, width)).sum(axis = 0),
                   lambda g: numpy.reshape(g, (-1, width)).sum(axis = 0)))

def batch_normalize(a, eps):
    '''Standardizes the columns of a (batch, features) array with its own statistics.

    Returns
    -------
    normalized : ndarray or Variable
        (a - mean)/sqrt(var + eps), with the biased batch variance.

    mean, var : ndarray
        Batch statistics of shape (features,), untaped.
    '''
    av = value(a)
    mean = av.mean(axis = 0)
    var = av.var(axis = 0)
    inv_std = 1.0/numpy.sqrt(var+eps)
    normalized = (av-mean)*inv_std

    def vjp(g):
        return inv_std*(g-g.mean(axis = 0)-normalized*(g*normalized).mean(axis = 0))
    return _apply(normalized, (a,), (vjp,)), mean, var

def transpose(a):
    '''Swaps the last two axes.'''
    return _apply(numpy.swapaxes(value(a), -1, -2), (a,), (lambda g: numpy.swapaxes(g, -1, -2),))

def reduce_sum(a, axis = None, keepdims = False):
    av = value(a)
    shape = numpy.shape(av)

    def vjp(g):
        if axis is not None and not keepdims:
            g = numpy.expand_dims(g, axis)
        return numpy.broadcast_to(g, shape).copy()
    return _apply(numpy.sum(av, axis = axis, keepdims = keepdims), (a,), (vjp,))

def reduce_mean(a, axis = None, keepdims = False):
    av = value(a)
    count = av.size if axis is None else numpy.prod([numpy.shape(av)[i] for i in numpy.atleast_1d(axis)])
    return div(reduce_sum(a, axis, keepdims), float(count))

def reshape(a, shape):
    av = value(a)
    original = numpy.shape(av)
    return _apply(numpy.reshape(av, shape), (a,), (lambda g: numpy.reshape(g, original),))

def getitem(a, key):
    av = value(a)

    def vjp(g):
        full = numpy.zeros_like(av)
        numpy.add.at(full, key, g)
        return full
    return _apply(av[key], (a,), (vjp,))

def concat(items, axis = -1):
    values = [value(x) for x in items]
    sizes = [numpy.shape(v)[axis] for v in values]
    bounds = numpy.cumsum([0]+sizes)

    def make_vjp(start, stop):
        def vjp(g):
            index = [slice(None)]*g.ndim
            index[axis] = slice(start, stop)
            return g[tuple(index)]
        return vjp
    vjps = tuple(make_vjp(bounds[i], bounds[i+1]) for i in range(len(items)))
    return _apply(numpy.concatenate(values, axis = axis), tuple(items), vjps)

def inv(a):
    '''Inverse of real square matrices over the last two axes.

    Uses numpy.linalg.inv, i.e. LAPACK gesv, an LU factorization with partial
    pivoting. d(A^-1) = -A^-1 dA A^-1.
    '''
    av = value(a)
    result = numpy.linalg.inv(av)
    return _apply(result, (a,),
                  (lambda g: -numpy.matmul(numpy.matmul(numpy.swapaxes(result, -1, -2), g), numpy.swapaxes(result, -1, -2)),))

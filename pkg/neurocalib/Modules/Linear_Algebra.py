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
from .General_Functions import DimensionError, SingularMatrixError, condition_limit, real_part_condition_limit, inverse_residual_limit
from dataclasses import dataclass
from typing import Any
import numpy

##---------------------------------------------------------------------------------------
##Complex linear algebra written only with real operations. A ComplexMatrix keeps its
##real and imaginary parts as two real arrays; leading axes, if any, are batch axes
##and the last two are (rows, cols). Parts may be plain arrays or tape Variables.

@dataclass(frozen = True)
class ComplexMatrix:
    '''Dense complex matrix stored as paired real arrays.

    Parameters
    ----------
    re : ndarray or Variable
        Real part, shape (..., rows, cols).

    im : ndarray or Variable
        Imaginary part, same shape as re.
    '''
    re: Any
    im: Any

    def __post_init__(self):
        if numpy.shape(ops.value(self.re)) != numpy.shape(ops.value(self.im)):
            raise DimensionError(f"Real part {numpy.shape(ops.value(self.re))} and imaginary part {numpy.shape(ops.value(self.im))} differ in shape.")
        if numpy.ndim(ops.value(self.re)) < 2:
            raise DimensionError(f"A ComplexMatrix needs at least 2 axes, got shape {numpy.shape(ops.value(self.re))}.")

    @property
    def shape(self):
        return numpy.shape(ops.value(self.re))

    @property
    def rows(self):
        return self.shape[-2]

    @property
    def cols(self):
        return self.shape[-1]

    @property
    def batch_shape(self):
        return self.shape[:-2]

    def to_numpy(self):
        '''Returns the forward value as a numpy complex array.'''
        return ops.value(self.re)+1j*ops.value(self.im)

    def __getitem__(self, key):
        '''Indexes the batch axes.'''
        return ComplexMatrix(ops.getitem(self.re, key), ops.getitem(self.im, key))

def from_complex(array):
    '''Builds a ComplexMatrix from a numpy complex array.'''
    array = numpy.asarray(array, dtype = complex)
    return ComplexMatrix(numpy.ascontiguousarray(array.real), numpy.ascontiguousarray(array.imag))

def cadd(A, B):
    return ComplexMatrix(ops.add(A.re, B.re), ops.add(A.im, B.im))

def cscale(A, factor):
    '''Multiplies by a real factor, scalar or broadcastable over the batch axes.'''
    return ComplexMatrix(ops.mul(A.re, factor), ops.mul(A.im, factor))

def abs_squared(A):
    '''Entrywise |a|^2 as a real array.'''
    return ops.add(ops.square(A.re), ops.square(A.im))

def stack_real(A):
    '''Concatenates [re, im] along the last axis (row k -> 2*cols reals).'''
    return ops.concat([A.re, A.im], axis = -1)

def unstack_real(x):
    '''Inverse of stack_real.'''
    half = numpy.shape(ops.value(x))[-1]//2
    return ComplexMatrix(ops.getitem(x, (Ellipsis, slice(0, half))), ops.getitem(x, (Ellipsis, slice(half, 2*half))))

def permute_rows(A, order):
    '''Returns Pi^T A for the permutation that brings row order[i] to row i.'''
    key = (Ellipsis, numpy.asarray(order), slice(None))
    return ComplexMatrix(ops.getitem(A.re, key), ops.getitem(A.im, key))

def permute_cols(A, order):
    '''Returns A Pi, bringing column order[i] to column i.'''
    key = (Ellipsis, numpy.asarray(order))
    return ComplexMatrix(ops.getitem(A.re, key), ops.getitem(A.im, key))

##---------------------------------------------------------------------------------------
##Core operations

def cmul(A, B):
    '''Complex matrix product through its real block form.

    [Re C; Im C] = [[Re A, -Im A], [Im A, Re A]] [Re B; Im B], evaluated block by
    block, i.e. Re C = Re A Re B - Im A Im B and Im C = Im A Re B + Re A Im B.

    Parameters
    ----------
    A : ComplexMatrix
        Left factor, shape (..., n, m).

    B : ComplexMatrix
        Right factor, shape (..., m, p).

    Returns
    -------
    C : ComplexMatrix
        The product, shape (..., n, p).
    '''
    if A.cols != B.rows:
        raise DimensionError(f"cmul: shapes {A.shape} and {B.shape} don't chain.")
    re = ops.sub(ops.matmul(A.re, B.re), ops.matmul(A.im, B.im))
    im = ops.add(ops.matmul(A.im, B.re), ops.matmul(A.re, B.im))
    return ComplexMatrix(re, im)

def hermitian(A):
    '''Conjugate transpose.'''
    return ComplexMatrix(ops.transpose(A.re), ops.neg(ops.transpose(A.im)))

def fro_norm(A, keepdims = False):
    '''Frobenius norm over the last two axes.

    Parameters
    ----------
    A : ComplexMatrix
        Input matrix or batch of matrices.

    keepdims : boolean
        Keep the two reduced axes (as size 1) so the result broadcasts against A.

    Returns
    -------
    norm : float, ndarray or Variable
        sqrt(sum(re^2+im^2)), one value per batch element.
    '''
    return ops.sqrt(ops.reduce_sum(abs_squared(A), axis = (-2, -1), keepdims = keepdims))

def condition_number(a):
    '''2-norm condition number of real or complex square matrices (max over a batch).'''
    a = numpy.asarray(a)
    if a.size == 0:
        return 1.0
    with numpy.errstate(all = 'ignore'):
        cond = numpy.linalg.cond(a)
    cond = numpy.where(numpy.isfinite(cond), cond, numpy.inf)
    return float(numpy.max(cond))

def _schur_inverse(R, I):
    '''Re E = (Re D + Im D Re D^-1 Im D)^-1, Im E = -Re D^-1 Im D Re E, or None
    if the Schur complement is ill-conditioned.'''
    R_inv = ops.inv(R)
    R_inv_I = ops.matmul(R_inv, I)
    schur = ops.add(R, ops.matmul(I, R_inv_I))
    if condition_number(ops.value(schur)) > condition_limit:
        return None
    re = ops.inv(schur)
    return ComplexMatrix(re, ops.neg(ops.matmul(R_inv_I, re)))

def _block_inverse(R, I, n):
    '''First block column of [[Re D, -Im D], [Im D, Re D]]^-1.'''
    block = ops.concat([ops.concat([R, ops.neg(I)], axis = -1),
                        ops.concat([I, R], axis = -1)], axis = -2)
    block_condition = condition_number(ops.value(block))
    if block_condition > condition_limit:
        raise SingularMatrixError("singular matrix", block_condition)
    block_inv = ops.inv(block)
    re = ops.getitem(block_inv, (Ellipsis, slice(0, n), slice(0, n)))
    im = ops.getitem(block_inv, (Ellipsis, slice(n, 2*n), slice(0, n)))
    return ComplexMatrix(re, im)

def inverse_residual(D, E):
    '''Largest ||D E - I||_F over a batch, on forward values.'''
    product = numpy.matmul(D.to_numpy(), E.to_numpy())
    residual = product-numpy.eye(D.rows)
    return float(numpy.max(numpy.sqrt(numpy.sum(numpy.abs(residual)**2, axis = (-2, -1)))))

def cinv(D):
    '''Complex matrix inverse from real inverses only.

    With D E = I written in real block form, Re E = (Re D + Im D Re D^-1 Im D)^-1
    and Im E = -Re D^-1 Im D Re E. That Schur form loses accuracy as Re D
    approaches singularity, which can happen for a perfectly invertible D. It is
    only tried while cond(Re D) stays below real_part_condition_limit and its
    result is kept only if ||D E - I||_F <= inverse_residual_limit for every
    matrix of the batch. Otherwise the stacked real block matrix
    [[Re D, -Im D], [Im D, Re D]] is inverted and E read from its first block
    column.

    Parameters
    ----------
    D : ComplexMatrix
        Square matrix or batch of square matrices.

    Uses
    ----
    Autodiff_Tape.inv : ndarray or Variable
        Real inverse through partial-pivoted LU.

    Returns
    -------
    E : ComplexMatrix
        The inverse of D.

    Raises
    ------
    SingularMatrixError
        If D itself is numerically singular.
    '''
    if D.rows != D.cols:
        raise DimensionError(f"cinv: matrix of shape {D.shape} is not square.")
    R, I = D.re, D.im
    if condition_number(ops.value(R)) <= real_part_condition_limit:
        E = _schur_inverse(R, I)
        if E is not None and inverse_residual(D, E) <= inverse_residual_limit:
            return E
    return _block_inverse(R, I, D.rows)

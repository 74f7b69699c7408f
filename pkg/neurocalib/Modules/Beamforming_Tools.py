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
from .Linear_Algebra import ComplexMatrix, from_complex, cmul, cinv, hermitian, fro_norm, cscale, abs_squared, condition_number
from .General_Functions import ZfIllPosedError, ZeroChannelError, BracketError, DimensionError, condition_limit
from dataclasses import dataclass
from math import log
import numpy

##---------------------------------------------------------------------------------------
##Model-based downlink beamformers. Channels enter in row-per-user form: H is K x M
##with row k equal to h_k^H, so (H V)[k, j] = h_k^H v_j. Leading batch axes are allowed
##everywhere except in wmmse, which works on a single instance.

ln2 = log(2.0)

@dataclass(frozen = True)
class Beamformer:
    '''Downlink beamforming matrix and the power budget it was built for.

    Parameters
    ----------
    V : ComplexMatrix
        M x K, column k is user k's beamformer.

    power_budget : float
        P_DL in W, Tr(V V^H) <= power_budget.
    '''
    V: ComplexMatrix
    power_budget: float

    def power(self):
        '''Tr(V V^H), one value per batch element.'''
        return ops.value(ops.reduce_sum(abs_squared(self.V), axis = (-2, -1)))

def _as_output(x):
    '''Plain floats for unbatched numpy results, untouched otherwise.'''
    if isinstance(x, numpy.ndarray) and x.ndim == 0:
        return float(x)
    return x

def sum_rate(H, V, sigma0_sq):
    '''System sum-rate in bits/s/Hz.

    sum_k log2(1 + |h_k^H v_k|^2 / (sum_{j!=k} |h_k^H v_j|^2 + sigma0_sq)). The
    interference is accumulated directly, not as total minus signal.

    Parameters
    ----------
    H : ComplexMatrix
        K x M downlink channel, row-per-user.

    V : ComplexMatrix
        M x K beamformer.

    sigma0_sq : float
        Downlink noise power.

    Returns
    -------
    float, ndarray or Variable
        The sum-rate, one value per batch element.
    '''
    if H.cols != V.rows or H.rows != V.cols:
        raise DimensionError(f"sum_rate: channel {H.shape} and beamformer {V.shape} don't match.")
    K = H.rows
    power = abs_squared(cmul(H, V))
    eye = numpy.eye(K)
    signal = ops.reduce_sum(ops.mul(power, eye), axis = -1)
    interference = ops.add(ops.reduce_sum(ops.mul(power, 1.0-eye), axis = -1), sigma0_sq)
    rates = ops.sub(ops.log(ops.add(signal, interference)), ops.log(interference))
    return _as_output(ops.div(ops.reduce_sum(rates, axis = -1), ln2))

def mrt(H, P_DL):
    '''Maximum ratio transmission V = gamma H^H, scaled to use the whole budget.'''
    norm = ops.value(fro_norm(H, keepdims = True))
    if numpy.any(norm == 0.0):
        raise ZeroChannelError("MRT requested for an all-zero channel.")
    return Beamformer(cscale(hermitian(H), numpy.sqrt(P_DL)/norm), P_DL)

def zf(X, P_DL):
    '''Zero-forcing beamformer V = gamma_ZF X^H (X X^H)^-1.

    Parameters
    ----------
    X : ComplexMatrix
        K x M input, the channel itself or a calibrated version of it. May hold
        tape Variables.

    P_DL : float
        Power budget, met with equality through gamma_ZF.

    Uses
    ----
    Linear_Algebra.cinv : ComplexMatrix
        Inverse of X X^H from real operations only.

    Returns
    -------
    Beamformer
        The scaled ZF solution.

    Raises
    ------
    ZfIllPosedError
        If X X^H has condition number above 1e12.
    '''
    gram = cmul(X, hermitian(X))
    condition = condition_number(gram.to_numpy())
    if condition > condition_limit:
        raise ZfIllPosedError("ZF ill-posed", condition)
    W = cmul(hermitian(X), cinv(gram))
    gamma = ops.div(numpy.sqrt(P_DL), fro_norm(W, keepdims = True))
    return Beamformer(cscale(W, gamma), P_DL)

##---------------------------------------------------------------------------------------
##Analytic gradients. Both functions return dR/dRe + j dR/dIm, i.e. twice the
##Wirtinger derivative dR/d(conj), so that central differences on the real and
##imaginary parts of the input reproduce them. The 1/ln2 factor comes from log2.

def _b_matrix(H, V, sigma0_sq):
    G = numpy.matmul(H, V)
    power = numpy.abs(G)**2
    K = G.shape[-1]
    eye = numpy.eye(K, dtype = bool)
    signal = numpy.diagonal(power, axis1 = -2, axis2 = -1)
    interference = numpy.where(eye, 0.0, power).sum(axis = -1)+sigma0_sq
    total = interference+signal
    B = -(signal/(total*interference))[..., :, None]*G
    diagonal = numpy.diagonal(G, axis1 = -2, axis2 = -1)/total
    B = numpy.where(eye, diagonal[..., None, :]*numpy.eye(K), B)
    return B

def _wirtinger_V(H, V, sigma0_sq):
    return numpy.matmul(numpy.conj(numpy.swapaxes(H, -1, -2)), _b_matrix(H, V, sigma0_sq))/ln2

def grad_sum_rate_V(H, V, sigma0_sq):
    '''Gradient of the sum-rate with respect to the beamformer.

    grad = H^H B with b_kk = h_k^H v_k / (sum_i |h_k^H v_i|^2 + sigma^2) and
    b_jk = -|h_j^H v_j|^2 h_j^H v_k / ((sum_i |h_j^H v_i|^2 + sigma^2)(sum_{i!=j} |h_j^H v_i|^2 + sigma^2)),
    scaled by 2/ln2.

    Parameters
    ----------
    H : ComplexMatrix
        K x M channel, row-per-user.

    V : ComplexMatrix
        M x K beamformer.

    sigma0_sq : float
        Noise power.

    Returns
    -------
    ComplexMatrix
        M x K gradient.
    '''
    return from_complex(2.0*_wirtinger_V(H.to_numpy(), V.to_numpy(), sigma0_sq))

def grad_sum_rate_X(H, X, P_DL, sigma0_sq):
    '''Gradient of sum_rate(H, zf(X)) with respect to the ZF input X.

    With A = X X^H, W = X^H A^-1, gamma = sqrt(P)/||W|| and G = dR/dconj(V):
        Q = gamma (G - c W),   c = Re tr(G^H W) / ||W||^2
        grad = 2 (A^-1 Q^H - W^H Q W^H - A^-1 Q^H W X)
    The c W term is the contribution of gamma's dependence on X; with it dropped
    and Q = gamma H^H B this is the fixed-gamma expression.

    Parameters
    ----------
    H : ComplexMatrix
        K x M channel used in the sum-rate.

    X : ComplexMatrix
        K x M ZF input.

    Returns
    -------
    ComplexMatrix
        K x M gradient.

    Raises
    ------
    ZfIllPosedError
        If X X^H is ill conditioned.
    '''
    Hc = H.to_numpy()
    Xc = X.to_numpy()
    A = numpy.matmul(Xc, numpy.conj(numpy.swapaxes(Xc, -1, -2)))
    condition = condition_number(A)
    if condition > condition_limit:
        raise ZfIllPosedError("ZF ill-posed", condition)
    A_inv = numpy.linalg.inv(A)
    W = numpy.matmul(numpy.conj(numpy.swapaxes(Xc, -1, -2)), A_inv)
    W_norm_sq = (numpy.abs(W)**2).sum(axis = (-2, -1), keepdims = True)
    gamma = numpy.sqrt(P_DL/W_norm_sq)
    G = _wirtinger_V(Hc, gamma*W, sigma0_sq)
    c = numpy.real((numpy.conj(G)*W).sum(axis = (-2, -1), keepdims = True))/W_norm_sq
    Q = gamma*(G-c*W)
    Q_H = numpy.conj(numpy.swapaxes(Q, -1, -2))
    W_H = numpy.conj(numpy.swapaxes(W, -1, -2))
    grad = numpy.matmul(A_inv, Q_H)-numpy.matmul(numpy.matmul(W_H, Q), W_H)-numpy.matmul(numpy.matmul(numpy.matmul(A_inv, Q_H), W), Xc)
    return from_complex(2.0*grad)

def calibration_step_gain(H, P_DL, sigma0_sq, step = None):
    '''Sum-rate of plain ZF against ZF on a slightly calibrated input.

    Takes one step of length step along the normalized gradient of the ZF input
    at X = H. A positive difference shows a better calibrated input exists
    arbitrarily close to the channel whenever the noise is non-zero.

    Parameters
    ----------
    H : ComplexMatrix
        K x M channel (single instance).

    step : float
        Step length, default 1e-3 * ||H||_F.

    Returns
    -------
    R_zf, R_calibrated : float
        Sum-rates at zf(H) and at zf(H + step * grad/||grad||).
    '''
    if step is None:
        step = 1e-3*fro_norm(H)
    grad = grad_sum_rate_X(H, H, P_DL, sigma0_sq).to_numpy()
    direction = grad/numpy.linalg.norm(grad)
    X = from_complex(H.to_numpy()+step*direction)
    R_zf = sum_rate(H, zf(H, P_DL).V, sigma0_sq)
    R_calibrated = sum_rate(H, zf(X, P_DL).V, sigma0_sq)
    return R_zf, R_calibrated

##---------------------------------------------------------------------------------------
##WMMSE

def _power_multiplier(eigenvalues, phi_energy, P_DL, tol, max_bisections = 200):
    '''Finds mu >= 0 with sum_m phi_m/(lambda_m+mu)^2 = P_DL (or mu = 0 if feasible).

    Components whose eigenvalue is numerically zero are dropped at mu = 0, which
    makes the mu = 0 candidate the minimum-norm solution.
    '''
    scale = max(float(eigenvalues.max()), 0.0)
    active = eigenvalues > 1e-12*scale if scale > 0.0 else numpy.zeros_like(eigenvalues, dtype = bool)
    if numpy.any(active):
        power_at_zero = float((phi_energy[active]/eigenvalues[active]**2).sum())
        if power_at_zero <= P_DL:
            return 0.0
    total = float(phi_energy.sum())

    def power(mu):
        return float((phi_energy/(eigenvalues+mu)**2).sum())

    low = 0.0
    high = numpy.sqrt(total/P_DL) if total > 0.0 else 1.0
    expansions = 0
    while power(high) > P_DL:
        high *= 2.0
        expansions += 1
        if expansions > 60:
            raise BracketError("WMMSE bisection failed to bracket the power multiplier", low, high)
    for _ in range(max_bisections):
        if high-low <= tol*high:
            break
        middle = 0.5*(low+high)
        if power(middle) > P_DL:
            low = middle
        else:
            high = middle
    return high

def wmmse(H, P_DL, sigma0_sq, max_iters = 100, tol = 1e-6, init = "best", V0 = None, bisection_tol = 1e-10, min_iters = 3):
    '''Iterative weighted MMSE sum-rate maximization (unit user weights).

    Each iteration updates the MMSE receivers u_k = g_kk / S_k, the MSE weights
    w_k = S_k / (S_k - |g_kk|^2) and the beamformer
    V = (H^H diag(w |u|^2) H + mu I)^-1 H^H diag(u w), with mu >= 0 found by
    bisection so that Tr(V V^H) <= P_DL. The beamformer is then brought to the full
    budget, which never lowers the sum-rate.

    Parameters
    ----------
    H : ComplexMatrix
        K x M channel, row-per-user, single instance.

    P_DL, sigma0_sq : float
        Power budget and noise power.

    max_iters : int
        Maximum number of outer iterations.

    tol : float
        Stop once an iteration changes the sum-rate by less than tol times the
        current sum-rate.

    init : string
        'zf', 'mrt' or 'best', ignored if V0 is given. 'best' runs the iterations
        from both ZF and MRT and keeps the run ending at the higher sum-rate.

    V0 : Beamformer
        Explicit starting point.

    bisection_tol : float
        Relative width at which the multiplier bisection stops.

    min_iters : int
        Iterations always performed before the stopping rule applies.

    Uses
    ----
    numpy.linalg.eigh : tuple
        Eigen-decomposition of the Hermitian weighted channel covariance, so the
        power of V(mu) is a scalar function of mu.

    Returns
    -------
    Beamformer, trace
        Final beamformer and the sum-rate before the first and after every
        iteration (numpy array).
    '''
    if max_iters < 1:
        raise ValueError("max_iters must be at least 1.")
    if H.batch_shape != ():
        raise DimensionError("wmmse works on a single channel instance.")
    if V0 is not None:
        starts = [V0]
    elif init == "mrt":
        starts = [mrt(H, P_DL)]
    elif init == "best":
        starts = [mrt(H, P_DL)]
        try:
            starts.append(zf(H, P_DL))
        except ZfIllPosedError:
            pass
    else:
        starts = [zf(H, P_DL)]
    runs = [_wmmse_iterations(H, start, P_DL, sigma0_sq, max_iters, min(min_iters, max_iters), tol, bisection_tol) for start in starts]
    return max(runs, key = lambda run: run[1][-1])

def _wmmse_iterations(H, V0, P_DL, sigma0_sq, max_iters, min_iters, tol, bisection_tol):
    Hc = H.to_numpy()
    H_h = numpy.conj(Hc.T)
    V = V0.V.to_numpy()
    rate = sum_rate(H, V0.V, sigma0_sq)
    trace = [rate]
    for iteration in range(1, max_iters+1):
        G = Hc @ V
        power = numpy.abs(G)**2
        signal = numpy.diag(power)
        total = power.sum(axis = 1)+sigma0_sq
        u = numpy.diag(G)/total
        w = total/(total-signal)
        A = H_h @ ((w*numpy.abs(u)**2)[:, None]*Hc)
        B = H_h*(u*w)[None, :]
        eigenvalues, U = numpy.linalg.eigh(A)
        eigenvalues = numpy.clip(eigenvalues, 0.0, None)
        Phi = numpy.conj(U.T) @ B
        phi_energy = (numpy.abs(Phi)**2).sum(axis = 1)
        mu = _power_multiplier(eigenvalues, phi_energy, P_DL, bisection_tol)
        if mu == 0.0:
            active = eigenvalues > 1e-12*eigenvalues.max()
            V = U[:, active] @ (Phi[active]/eigenvalues[active][:, None])
        else:
            V = U @ (Phi/(eigenvalues+mu)[:, None])
        used = float((numpy.abs(V)**2).sum())
        if 0.0 < used < P_DL:
            V = V*numpy.sqrt(P_DL/used)
        new_rate = sum_rate(H, from_complex(V), sigma0_sq)
        trace.append(new_rate)
        if iteration >= min_iters and abs(new_rate-rate) <= tol*abs(rate):
            break
        rate = new_rate
    return Beamformer(from_complex(V), P_DL), numpy.array(trace)

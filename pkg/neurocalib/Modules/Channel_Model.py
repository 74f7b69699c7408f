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

from . import General_Functions
from .General_Functions import rng_stream, stream_tags, speed_of_light, PilotPowerError, DimensionError
from .Linear_Algebra import ComplexMatrix, from_complex, cmul
from dataclasses import dataclass, replace
from typing import List, Optional, Tuple
import concurrent.futures
import numpy

##---------------------------------------------------------------------------------------
##Synthetic FDD multipath channels and uplink pilot transmission.
##
##Random streams: user k of sample n draws from rng_stream(seed, 0, n, k) in this order:
##Lp angles, Lp distances, Lp uplink gains (re, im interleaved), Lp downlink gains.
##The pilot noise of sample n draws from rng_stream(seed, 1, n). A user's channel
##therefore doesn't depend on K or on how samples are split between workers.

@dataclass(frozen = True)
class SystemConfig:
    '''Physical and dimensional parameters of the downlink system.

    Parameters
    ----------
    M, K, L : int
        Antennas, users, pilot length.

    f_ul, f_dl : float
        Uplink and downlink carrier frequencies in Hz.

    d_over_lambda : float
        Antenna spacing in wavelengths.

    Lp : int
        Propagation paths per user.

    sigma0_sq, sigma_ul_sq : float
        Downlink and uplink pilot noise powers, in W. sigma_ul_sq may be 0 for
        noiseless pilot tests.

    P_DL, P_UL : float
        Downlink power budget and uplink per-user pilot power, in W.

    rng_seed : int
        Seed of every random stream.

    distance_range : tuple
        (min, max) user path distance in meters.

    reference_path_loss_db, path_loss_exponent : float
        Path loss PL(d) = reference + 10*exponent*log10(d) in dB, applied to the
        path gains. Both 0 by default, so E[||h||^2] = M.

    shared_gains : boolean
        Reuse the uplink path gains on the downlink (test switch).
    '''
    M: int = 16
    K: int = 4
    L: int = 4
    f_ul: float = 2.4e9
    f_dl: float = 2.5e9
    d_over_lambda: float = 0.5
    Lp: int = 5
    sigma0_sq: float = 10.0**(-11.5)
    sigma_ul_sq: float = 10.0**(-11.5)
    P_DL: float = 10.0**(-2.5)
    P_UL: float = 10.0**(-4.0)
    rng_seed: int = 0
    distance_range: Tuple[float, float] = (5.0, 50.0)
    reference_path_loss_db: float = 0.0
    path_loss_exponent: float = 0.0
    shared_gains: bool = False

    def __post_init__(self):
        if not (self.M >= self.K >= 1):
            raise DimensionError(f"Need M >= K >= 1, got M={self.M}, K={self.K}.")
        if self.L < self.K:
            raise DimensionError(f"Pilot length L={self.L} must be at least K={self.K}.")
        if self.Lp < 1:
            raise DimensionError(f"Need at least one path per user, got Lp={self.Lp}.")
        for name in ("sigma0_sq", "P_DL", "P_UL", "f_ul", "f_dl", "d_over_lambda"):
            if not getattr(self, name) > 0.0:
                raise ValueError(f"{name} must be strictly positive, got {getattr(self, name)}.")
        if self.sigma_ul_sq < 0.0:
            raise ValueError(f"sigma_ul_sq must be non-negative, got {self.sigma_ul_sq}.")
        if not (0.0 < self.distance_range[0] <= self.distance_range[1]):
            raise ValueError(f"Invalid distance range {self.distance_range}.")

    def with_changes(self, **changes):
        '''Returns a validated copy with some fields replaced.'''
        return replace(self, **changes)

@dataclass(frozen = True)
class PathInfo:
    '''One propagation path of one user, shared by both link directions.'''
    gain_ul: complex
    gain_dl: complex
    angle_rad: float
    distance_m: float

@dataclass
class ChannelSample:
    '''One channel realization.

    H_UL and H_DL are M x K, column k being user k's channel. Y_p (M x L) is
    filled by transmit_pilots.
    '''
    H_UL: ComplexMatrix
    H_DL: ComplexMatrix
    paths: List[List[PathInfo]]
    Y_p: Optional[ComplexMatrix] = None

def array_response(theta, M, d_over_lambda):
    '''Transmit array response of a uniform linear array.

    Parameters
    ----------
    theta : float
        Angle of departure in radians.

    M : int
        Number of antennas.

    d_over_lambda : float
        Antenna spacing in wavelengths.

    Returns
    -------
    ComplexMatrix
        M x 1 vector with entry m equal to exp(j*2*pi*d_over_lambda*m*sin(theta)).
    '''
    if M < 1:
        raise DimensionError(f"Need at least one antenna, got M={M}.")
    phase = 2.0*numpy.pi*d_over_lambda*numpy.arange(M)*numpy.sin(theta)
    return ComplexMatrix(numpy.cos(phase).reshape(M, 1), numpy.sin(phase).reshape(M, 1))

def channel_column(paths, frequency, M, d_over_lambda, link = "dl"):
    '''Sum over a user's paths of alpha * exp(-j*2*pi*f*tau) * a_t(theta).

    Parameters
    ----------
    paths : list
        PathInfo of the user.

    frequency : float
        Carrier frequency of the link in Hz.

    link : string
        'ul' or 'dl', picks which gain of each path is used.

    Returns
    -------
    column : ndarray
        Complex vector of length M.
    '''
    column = numpy.zeros(M, dtype = complex)
    for path in paths:
        gain = path.gain_ul if link == "ul" else path.gain_dl
        delay = path.distance_m/speed_of_light
        response = array_response(path.angle_rad, M, d_over_lambda).to_numpy()[:, 0]
        column += gain*numpy.exp(-2j*numpy.pi*frequency*delay)*response
    return column

def draw_user_paths(cfg, index, user):
    '''Draws the Lp paths of one user of one sample from its own random stream.'''
    rng = rng_stream(cfg.rng_seed, stream_tags["channel"], index, user)
    low = numpy.nextafter(-numpy.pi/2, 0.0)
    angles = rng.uniform(low, numpy.pi/2, size = cfg.Lp)
    distances = rng.uniform(cfg.distance_range[0], cfg.distance_range[1], size = cfg.Lp)
    scale = 1.0/numpy.sqrt(2.0*cfg.Lp)
    ul = rng.standard_normal((cfg.Lp, 2))*scale
    dl = rng.standard_normal((cfg.Lp, 2))*scale
    path_loss_db = cfg.reference_path_loss_db+10.0*cfg.path_loss_exponent*numpy.log10(distances)
    amplitude = numpy.sqrt(General_Functions.db_to_linear(-path_loss_db))
    gains_ul = (ul[:, 0]+1j*ul[:, 1])*amplitude
    gains_dl = gains_ul if cfg.shared_gains else (dl[:, 0]+1j*dl[:, 1])*amplitude
    return [PathInfo(complex(gains_ul[i]), complex(gains_dl[i]), float(angles[i]), float(distances[i])) for i in range(cfg.Lp)]

def generate_sample(cfg, index = 0):
    '''Draws one channel realization.

    Parameters
    ----------
    cfg : SystemConfig
        System parameters, cfg.rng_seed selects the random streams.

    index : int
        Sample index, the random state of the sample is (cfg.rng_seed, index).

    Returns
    -------
    ChannelSample
        H_UL and H_DL with shared geometry, without pilots.
    '''
    H_UL = numpy.zeros((cfg.M, cfg.K), dtype = complex)
    H_DL = numpy.zeros((cfg.M, cfg.K), dtype = complex)
    paths = []
    for k in range(cfg.K):
        user_paths = draw_user_paths(cfg, index, k)
        H_UL[:, k] = channel_column(user_paths, cfg.f_ul, cfg.M, cfg.d_over_lambda, "ul")
        H_DL[:, k] = channel_column(user_paths, cfg.f_dl, cfg.M, cfg.d_over_lambda, "dl")
        paths.append(user_paths)
    return ChannelSample(from_complex(H_UL), from_complex(H_DL), paths)

def default_pilots(cfg):
    '''Orthogonal DFT pilots meeting the per-user energy budget with equality.

    Returns
    -------
    ComplexMatrix
        K x L matrix sqrt(P_UL) * F[:K, :] with F the L-point DFT matrix, so that
        P P^H = P_UL * L * I.
    '''
    k = numpy.arange(cfg.K).reshape(-1, 1)
    l = numpy.arange(cfg.L).reshape(1, -1)
    return from_complex(numpy.sqrt(cfg.P_UL)*numpy.exp(-2j*numpy.pi*k*l/cfg.L))

def check_pilot_power(P, cfg):
    '''Raises PilotPowerError if a pilot row exceeds P_UL * L.'''
    energy = (numpy.asarray(P.re)**2+numpy.asarray(P.im)**2).sum(axis = -1)
    budget = cfg.P_UL*cfg.L*(1.0+1e-9)
    for user, e in enumerate(energy):
        if e > budget:
            raise PilotPowerError(f"Pilot of user {user} has energy {e:.4e}, above the budget {cfg.P_UL*cfg.L:.4e}.", user)

def pilot_noise(cfg, index):
    '''Uplink noise matrix (M x L) of sample index, CN(0, sigma_ul_sq) entries.'''
    rng = rng_stream(cfg.rng_seed, stream_tags["pilot_noise"], index)
    draw = rng.standard_normal((cfg.M, cfg.L, 2))*numpy.sqrt(cfg.sigma_ul_sq/2.0)
    return draw[:, :, 0]+1j*draw[:, :, 1]

def transmit_pilots(sample, P, cfg, index = 0):
    '''Simulates the uplink pilot phase Y_p = H_UL P + N and stores Y_p in the sample.

    Parameters
    ----------
    sample : ChannelSample
        The realization, its Y_p is overwritten.

    P : ComplexMatrix
        K x L pilot matrix.

    cfg : SystemConfig
        System parameters.

    index : int
        Sample index selecting the noise stream.

    Returns
    -------
    ComplexMatrix
        The M x L received pilots.
    '''
    if P.shape != (cfg.K, cfg.L):
        raise DimensionError(f"Pilots must be {cfg.K} x {cfg.L}, got {P.shape}.")
    check_pilot_power(P, cfg)
    Y = cmul(sample.H_UL, P).to_numpy()+pilot_noise(cfg, index)
    sample.Y_p = from_complex(Y)
    return sample.Y_p

##---------------------------------------------------------------------------------------
##Batches of samples

@dataclass
class ChannelDataset:
    '''A batch of consecutive samples stacked along a leading axis.

    H_UL and H_DL have shape (N, M, K), Y_p (N, M, L) or None. Sample i of the
    dataset is the realization of index first_index+i.
    '''
    cfg: SystemConfig
    H_UL: ComplexMatrix
    H_DL: ComplexMatrix
    Y_p: Optional[ComplexMatrix] = None
    first_index: int = 0

    def __len__(self):
        return self.H_DL.shape[0]

    def take(self, indexes):
        '''Returns the samples at the given positions as a new dataset.'''
        indexes = numpy.asarray(indexes)
        return ChannelDataset(self.cfg, self.H_UL[indexes], self.H_DL[indexes],
                              None if self.Y_p is None else self.Y_p[indexes],
                              self.first_index)

    def split(self, count):
        '''Splits in the first count samples and the rest.'''
        head = ChannelDataset(self.cfg, self.H_UL[:count], self.H_DL[:count],
                              None if self.Y_p is None else self.Y_p[:count], self.first_index)
        tail = ChannelDataset(self.cfg, self.H_UL[count:], self.H_DL[count:],
                              None if self.Y_p is None else self.Y_p[count:], self.first_index+count)
        return head, tail

    def downlink_rows(self):
        '''H_DL in row-per-user form, shape (N, K, M), row k being h_k^H.'''
        return ComplexMatrix(numpy.swapaxes(self.H_DL.re, -1, -2), -numpy.swapaxes(self.H_DL.im, -1, -2))

def _generate_chunk(cfg, first_index, count, with_pilots):
    H_UL = numpy.zeros((count, cfg.M, cfg.K), dtype = complex)
    H_DL = numpy.zeros((count, cfg.M, cfg.K), dtype = complex)
    Y_p = numpy.zeros((count, cfg.M, cfg.L), dtype = complex) if with_pilots else None
    P = default_pilots(cfg)
    for i in range(count):
        sample = generate_sample(cfg, first_index+i)
        H_UL[i] = sample.H_UL.to_numpy()
        H_DL[i] = sample.H_DL.to_numpy()
        if with_pilots:
            Y_p[i] = transmit_pilots(sample, P, cfg, first_index+i).to_numpy()
    return H_UL, H_DL, Y_p

def generate_dataset(cfg, count, first_index = 0, with_pilots = True, workers = 1):
    '''Generates count consecutive samples, optionally with received pilots.

    Parameters
    ----------
    cfg : SystemConfig
        System parameters.

    count : int
        Number of samples.

    first_index : int
        Index of the first sample, test sets use indexes after the training ones.

    with_pilots : boolean
        Simulate Y_p with default_pilots.

    workers : int
        Worker processes. Output doesn't depend on it.

    Uses
    ----
    concurrent.futures.ProcessPoolExecutor : object
        Spreads contiguous index ranges over processes.

    Returns
    -------
    ChannelDataset
        The stacked samples.
    '''
    ranges = General_Functions.chunk_indexes(first_index, count, workers)
    if workers <= 1 or len(ranges) <= 1:
        parts = [_generate_chunk(cfg, start, amount, with_pilots) for start, amount in ranges]
    else:
        with concurrent.futures.ProcessPoolExecutor(max_workers = workers) as executor:
            results = [executor.submit(_generate_chunk, cfg, start, amount, with_pilots) for start, amount in ranges]
            parts = [r.result() for r in results]
    if count == 0:
        parts = [_generate_chunk(cfg, first_index, 0, with_pilots)]
    H_UL = numpy.concatenate([p[0] for p in parts])
    H_DL = numpy.concatenate([p[1] for p in parts])
    Y_p = numpy.concatenate([p[2] for p in parts]) if with_pilots else None
    return ChannelDataset(cfg, from_complex(H_UL), from_complex(H_DL),
                          None if Y_p is None else from_complex(Y_p), first_index)

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

import numpy
import datetime
import os

##---------------------------------------------------------------------------------------
##Hard-coded permanent information

speed_of_light = 299792458.0
'''Propagation speed used to turn path distances into delays, in m/s.
'''

condition_limit = 1e12
'''Largest condition number accepted before a matrix is treated as singular.
'''

real_part_condition_limit = 1e4
'''Above this condition number of Re{D}, the complex inverse skips the Schur-type
formula and goes straight to the stacked 2n x 2n real block inverse.
'''

inverse_residual_limit = 1e-10
'''Largest ||D E - I||_F accepted from the Schur-type complex inverse before it is
redone with the real block inverse.
'''

stream_tags = {"channel": 0,
               "pilot_noise": 1,
               "weights": 2,
               "shuffle": 3,
               "benchmark": 4}
'''First entry of every RNG spawn key. Keeps the random streams used by different
parts of the package disjoint for a same seed.
'''

##---------------------------------------------------------------------------------------
##Exceptions

class NeuroCalibError(Exception):
    '''Base class of every error raised by the package.'''

class DimensionError(NeuroCalibError, ValueError):
    '''Raised when array shapes don't chain.'''

class SingularMatrixError(NeuroCalibError, ArithmeticError):
    '''Raised when a matrix can't be inverted reliably.

    Parameters
    ----------
    message : string
        Human readable diagnostic.

    condition : float
        Condition number estimate of the offending matrix.
    '''
    def __init__(self, message, condition = numpy.inf):
        super().__init__(f"{message} (condition estimate {condition:.3e})")
        self.condition = condition

class ZfIllPosedError(SingularMatrixError):
    '''Raised when the zero-forcing input X has no usable right pseudo-inverse.'''

class ZeroChannelError(NeuroCalibError, ValueError):
    '''Raised when a beamformer is requested for an all-zero channel.'''

class PilotPowerError(NeuroCalibError, ValueError):
    '''Raised when a pilot row exceeds the uplink energy budget.'''
    def __init__(self, message, user):
        super().__init__(message)
        self.user = user

class BracketError(NeuroCalibError, ArithmeticError):
    '''Raised when the WMMSE bisection can't bracket the power multiplier.'''
    def __init__(self, message, low, high):
        super().__init__(f"{message} (bracket [{low:.3e}, {high:.3e}])")
        self.low = low
        self.high = high

class DivergenceError(NeuroCalibError, ArithmeticError):
    '''Raised when training produces a non-finite loss.'''
    def __init__(self, message, epoch):
        super().__init__(f"{message} at epoch {epoch}")
        self.epoch = epoch

class TapeError(NeuroCalibError, RuntimeError):
    '''Raised on misuse of the reverse-mode tape.'''

class FormatError(NeuroCalibError, ValueError):
    '''Raised when a dataset, checkpoint or bundle file is malformed.'''

class ConfigError(NeuroCalibError, ValueError):
    '''Raised by the configuration loader.

    Parameters
    ----------
    message : string
        What is wrong.

    line : int
        Line of the configuration file where the problem was found, if known.

    field : string
        Dotted path of the offending field, if known.
    '''
    def __init__(self, message, line = None, field = None):
        where = []
        if line is not None:
            where.append(f"line {line}")
        if field is not None:
            where.append(f"field '{field}'")
        prefix = (", ".join(where)+": ") if len(where) > 0 else ""
        super().__init__(prefix+message)
        self.message = message
        self.line = line
        self.field = field

##---------------------------------------------------------------------------------------
##General functions (these functions use only external libraries, such as numpy).

def dbm_to_watt(dbm):
    '''Converts a power in dBm to linear watts.

    Parameters
    ----------
    dbm : float or ndarray
        Power in dBm.

    Returns
    -------
    watt : float or ndarray
        10^((dbm-30)/10).
    '''
    if numpy.ndim(dbm) > 0:
        return 10.0**((numpy.asarray(dbm, dtype = float)-30.0)/10.0)
    return 10.0**((float(dbm)-30.0)/10.0)

def watt_to_dbm(watt):
    '''Inverse of dbm_to_watt.'''
    return 10.0*numpy.log10(watt)+30.0

def db_to_linear(db):
    '''Converts a gain in dB to a linear power ratio.'''
    return 10.0**(db/10.0)

def rng_stream(seed, *key):
    '''Creates an independent, portable random generator for a given seed and key.

    Every stream is a Philox counter-based generator seeded from a SeedSequence
    whose spawn key is the given key, so results are identical across platforms
    and don't depend on the order the streams are created in.

    Parameters
    ----------
    seed : int
        The experiment seed (unsigned 64-bit).

    *key : int
        Spawn key identifying the stream, first element should be one of the
        stream_tags values.

    Uses
    ----
    numpy.random.SeedSequence : object
        Derives the Philox key from (seed, key).

    numpy.random.Philox : object
        Counter-based bit generator.

    Returns
    -------
    generator : numpy.random.Generator
        The random generator of the stream.
    '''
    sequence = numpy.random.SeedSequence(entropy = int(seed), spawn_key = tuple(int(k) for k in key))
    return numpy.random.Generator(numpy.random.Philox(sequence))

def worker_count(multithreaded, number_cores):
    '''Resolves the number of worker processes to use.

    Parameters
    ----------
    multithreaded : boolean
        Whether multiple processes are allowed.

    number_cores : string or int
        'all' for cpu_count-2, or a number of cores.

    Returns
    -------
    cpu_count : int
        Number of workers, between 1 and 60.
    '''
    if not multithreaded:
        return 1
    available = (os.cpu_count() or 1)-2
    if available <= 0:
        available = 1
    if number_cores == 'all':
        cpu_count = available
    else:
        cpu_count = min(int(number_cores), available)
        if cpu_count <= 0:
            cpu_count = 1
    return cpu_count if cpu_count < 60 else 60

def chunk_indexes(start, count, chunks):
    '''Splits the index range [start, start+count) in contiguous chunks.

    Returns
    -------
    ranges : list
        A list of (first_index, amount) tuples, in order, skipping empty ones.
    '''
    chunks = max(1, min(chunks, count)) if count > 0 else 1
    base, extra = divmod(count, chunks)
    ranges = []
    current = start
    for i in range(chunks):
        amount = base+(1 if i < extra else 0)
        if amount > 0:
            ranges.append((current, amount))
        current += amount
    return ranges

def time_formatted():
    '''Returns the current wall-clock time formatted as a log prefix.

    Returns
    -------
    string
        'HH:MM:SS - '
    '''
    return str(datetime.datetime.now()).split(" ")[-1].split(".")[0]+" - "

def print_sep():
    '''Prints a separator consisting of 48 '-' character.'''
    print('------------------------------------------------')

def report(message, verbose = True, end = "\n"):
    '''Prints a timestamped progress message if verbose.'''
    if verbose:
        print(time_formatted()+message, end = end, flush = True)

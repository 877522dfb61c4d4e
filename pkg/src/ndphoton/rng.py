"""Counter-based random streams.

Every Monte Carlo trial owns an independent SplitMix64 stream whose state is
derived from ``(seed, trial_index)`` alone, so any trial can be regenerated in
isolation and results do not depend on how trials are chunked or scheduled.

Three implementations share the exact same bit stream:

* :class:`TrialStream` - scalar, pure Python, used by the object-level protocol.
* :func:`trial_keys` / :func:`uniform_at` - vectorised numpy over many trials.
* :func:`nb_trial_key` / :func:`nb_uniform` - numba scalar versions for kernels.
"""
import math

import numpy as np

from ._accel import njit

MASK64 = (1 << 64) - 1
GOLDEN = 0x9E3779B97F4A7C15
TRIAL_STRIDE = 0xD1B54A32D192ED03
MIX1 = 0xBF58476D1CE4E5B9
MIX2 = 0x94D049BB133111EB
INV_2_53 = 1.0 / 9007199254740992.0
TWO_PI = 2.0 * math.pi


def _mix(z):
    z = ((z ^ (z >> 30)) * MIX1) & MASK64
    z = ((z ^ (z >> 27)) * MIX2) & MASK64
    return z ^ (z >> 31)


def seed_base(seed):
    """Scramble a user seed (any int, masked to 64 bits) into a stream base."""
    return _mix((int(seed) + GOLDEN) & MASK64)


def trial_key(seed, index):
    return _mix((seed_base(seed) + (int(index) + 1) * TRIAL_STRIDE) & MASK64)


def normal_from_uniforms(u1, u2):
    # Box-Muller, cosine branch only; 1 - u1 lies in (0, 1]
    return math.sqrt(-2.0 * math.log(1.0 - u1)) * math.cos(TWO_PI * u2)


class TrialStream:
    """Sequential uniform/normal draws for one trial.

    Exposes the subset of the :class:`numpy.random.Generator` API used by the
    protocol operations (``random`` and ``standard_normal``), so either object
    can be passed wherever an ``rng`` is expected.
    """

    def __init__(self, seed, index=0):
        self.seed = int(seed)
        self.index = int(index)
        self.key = trial_key(seed, index)
        self.counter = 0

    def random(self):
        self.counter += 1
        x = _mix((self.key + self.counter * GOLDEN) & MASK64)
        return (x >> 11) * INV_2_53

    def standard_normal(self):
        u1 = self.random()
        u2 = self.random()
        return normal_from_uniforms(u1, u2)


# -- vectorised numpy ------------------------------------------------------

_U_GOLDEN = np.uint64(GOLDEN)
_U_STRIDE = np.uint64(TRIAL_STRIDE)
_U_MIX1 = np.uint64(MIX1)
_U_MIX2 = np.uint64(MIX2)
_S30, _S27, _S31, _S11 = (np.uint64(s) for s in (30, 27, 31, 11))


def _mix_arr(z):
    z = (z ^ (z >> _S30)) * _U_MIX1
    z = (z ^ (z >> _S27)) * _U_MIX2
    return z ^ (z >> _S31)


def trial_keys(seed, start, count):
    """Stream keys for trials ``start .. start + count - 1``."""
    idx = np.arange(start + 1, start + count + 1, dtype=np.uint64)
    return _mix_arr(np.uint64(seed_base(seed)) + idx * _U_STRIDE)


def uniform_at(keys, counter):
    """Draw number ``counter`` (1-based, scalar or per-trial array) of each stream."""
    c = np.asarray(counter, dtype=np.uint64)
    x = _mix_arr(keys + c * _U_GOLDEN)
    return (x >> _S11).astype(np.float64) * INV_2_53


def normal_at(keys, counter):
    c = np.asarray(counter, dtype=np.uint64)
    u1 = uniform_at(keys, c)
    u2 = uniform_at(keys, c + np.uint64(1))
    return np.sqrt(-2.0 * np.log(1.0 - u1)) * np.cos(TWO_PI * u2)


# -- numba scalar ------------------------------------------------------------


@njit(cache=True, nogil=True)
def _nb_mix(z):
    z = (z ^ (z >> np.uint64(30))) * np.uint64(MIX1)
    z = (z ^ (z >> np.uint64(27))) * np.uint64(MIX2)
    return z ^ (z >> np.uint64(31))


@njit(cache=True, nogil=True)
def nb_trial_key(base, index):
    return _nb_mix(np.uint64(base) + np.uint64(index + 1) * np.uint64(TRIAL_STRIDE))


@njit(cache=True, nogil=True)
def nb_uniform(key, counter):
    x = _nb_mix(np.uint64(key) + np.uint64(counter) * np.uint64(GOLDEN))
    return (x >> np.uint64(11)) * INV_2_53


@njit(cache=True, nogil=True)
def nb_normal(key, counter):
    u1 = nb_uniform(key, counter)
    u2 = nb_uniform(key, counter + 1)
    return math.sqrt(-2.0 * math.log(1.0 - u1)) * math.cos(TWO_PI * u2)


def poisson_from_uniform(u, lam, exp_neg_lam=None):
    """Inverse-CDF Poisson sample from one uniform draw."""
    p = math.exp(-lam) if exp_neg_lam is None else exp_neg_lam
    k = 0
    cdf = p
    while u >= cdf and p > 0.0:
        k += 1
        p *= lam / k
        cdf += p
    return k

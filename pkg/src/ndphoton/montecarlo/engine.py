"""Batch Monte Carlo of the nondestructive detection protocol."""
from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor

import numpy as np

from .._accel import resolve_backend
from .. import analytics
from ..atom import (Fate, apply_reflection, prepare_superposition, readout, rotate)
from ..cavity import ReflectionAmplitudes, reflection_amplitudes
from ..rng import TrialStream, poisson_from_uniform, trial_keys, uniform_at
from . import kernels as K
from .config import COUNT_KEYS, Estimate, EstimatorSet, ProtocolConfig, TrialRecord

DEFAULT_CHUNK = 65_536


def amplitudes_for(config: ProtocolConfig, detuning=None) -> ReflectionAmplitudes:
    d = config.detuning if detuning is None else detuning
    if config.amplitudes is not None:
        r1, r2 = config.amplitudes
        return ReflectionAmplitudes(d, r1, r2)
    return reflection_amplitudes(config.params, d)


def kernel_args(config: ProtocolConfig) -> K.KernelArgs:
    p, rot, prep, ro = config.params, config.rot, config.prep, config.readout
    amps = amplitudes_for(config)
    poisson_ro = ro.mode == "poisson"
    ro_dark = ro.mean_dark if poisson_ro else 0.0
    ro_bright = ro.mean_bright if poisson_ro else 0.0
    return K.KernelArgs(
        nbar=p.nbar, exp_nbar=math.exp(-p.nbar),
        forced_n=-1 if config.forced_photons is None else int(config.forced_photons),
        q=p.q, epsilon=p.epsilon, p_dark=p.p_dark,
        sigma_rot=rot.sigma, cos_phi=math.cos(rot.axis_phase), sin_phi=math.sin(rot.axis_phase),
        success_prob=prep.success_prob,
        prep_mean_dark=prep.mean_dark, exp_prep_dark=math.exp(-prep.mean_dark),
        prep_mean_bright=prep.mean_bright, exp_prep_bright=math.exp(-prep.mean_bright),
        accept_threshold=int(prep.accept_threshold),
        readout_poisson=int(poisson_ro), err_dark=ro.err_dark, err_bright=ro.err_bright,
        ro_mean_dark=ro_dark, exp_ro_dark=math.exp(-ro_dark),
        ro_mean_bright=ro_bright, exp_ro_bright=math.exp(-ro_bright),
        ro_threshold=float(ro.threshold),
        r1_re=amps.r1.real, r1_im=amps.r1.imag, r2_re=amps.r2.real, r2_im=amps.r2.imag,
        jitter_on=int(config.jitter_enabled and config.amplitudes is None),
        jitter_sigma=p.freq_jitter_sigma, detuning=config.detuning,
        g=p.g, kappa=p.kappa, kappa_ext=p.kappa_ext, gamma=p.gamma,
    )


def tally(out, postselect=True):
    """Integer counts for one block of kernel output."""
    used = out[out[:, K.ACCEPTED] == 1] if postselect else out
    n = used[:, K.N_PHOTONS]
    clicks = used[:, K.CLICKS]
    two = used[:, K.DECLARED] == 1
    ext = used[:, K.N_BYPASS] + used[:, K.N_REFL]
    one = clicks == 1
    ge1 = clicks >= 1
    c = {
        "trials": len(out),
        "used": len(used),
        "photons": n.sum(),
        "photons_ext_reflected": ext.sum(),
        "click_ge1": ge1.sum(),
        "click_ge1_two": (ge1 & two).sum(),
        "click_one": one.sum(),
        "click_one_two": (one & two).sum(),
        "n1": (n == 1).sum(),
        "n1_two": ((n == 1) & two).sum(),
        "n0": (n == 0).sum(),
        "n0_two": ((n == 0) & two).sum(),
        "one_click_dark": (one & (n == 0)).sum(),
        "one_click_single": (one & (n == 1)).sum(),
        "one_click_two_reflected": (one & (n == 2) & (ext == 2)).sum(),
        "one_click_two_one_lost": (one & (n == 2) & (ext == 1)).sum(),
        "one_click_other": (one & ((n > 2) | ((n == 2) & (ext == 0)))).sum(),
    }
    return {k: int(c[k]) for k in COUNT_KEYS}


def _blocks(n_trials, chunk):
    return [(s, min(chunk, n_trials - s)) for s in range(0, n_trials, chunk)]


def simulate(config: ProtocolConfig, *, backend="auto", workers=1, chunk=DEFAULT_CHUNK):
    """Raw per-trial kernel output, shape ``(n_trials, N_COLS)``, in trial order."""
    kern = K.KERNELS[resolve_backend(backend)]
    args = kernel_args(config)
    blocks = _blocks(config.n_trials, chunk)
    if workers > 1:
        with ThreadPoolExecutor(workers) as pool:
            parts = list(pool.map(lambda b: kern(config.seed, b[0], b[1], args), blocks))
    else:
        parts = [kern(config.seed, s, n, args) for s, n in blocks]
    return np.concatenate(parts)


def run_batch(config: ProtocolConfig, *, backend="auto", workers=1, chunk=DEFAULT_CHUNK,
              return_records=False):
    """Aggregate ``config.n_trials`` trials into an :class:`EstimatorSet`.

    Trials draw from streams keyed by ``(seed, trial index)`` and blocks are
    tallied in integers, so the result does not depend on ``workers``,
    ``chunk`` or the backend.
    """
    kern = K.KERNELS[resolve_backend(backend)]
    args = kernel_args(config)
    blocks = _blocks(config.n_trials, chunk)

    def work(b):
        out = kern(config.seed, b[0], b[1], args)
        return tally(out, config.postselect_prep), (out if return_records else None)

    if workers > 1:
        with ThreadPoolExecutor(workers) as pool:
            results = list(pool.map(work, blocks))
    else:
        results = [work(b) for b in blocks]

    total = dict.fromkeys(COUNT_KEYS, 0)
    for counts, _ in results:
        for k, v in counts.items():
            total[k] += v
    est = EstimatorSet.from_counts(total)
    if return_records:
        return est, np.concatenate([r for _, r in results])
    return est


def trial_stream(config: ProtocolConfig, index: int) -> TrialStream:
    return TrialStream(config.seed, index)


def run_trial(config: ProtocolConfig, rng) -> TrialRecord:
    """One trial through the object-level protocol operations.

    With ``rng = trial_stream(config, i)`` this reproduces row ``i`` of the
    batch kernels.
    """
    p = config.params
    state, accepted = prepare_superposition(config.rot, config.prep, rng)
    u_n = rng.random()
    n = poisson_from_uniform(u_n, p.nbar) if config.forced_photons is None else int(config.forced_photons)
    z = rng.standard_normal()
    if config.jitter_enabled and config.amplitudes is None:
        amps = reflection_amplitudes(p, config.detuning + p.freq_jitter_sigma * z)
    else:
        amps = amplitudes_for(config)
    dark = rng.random() < p.p_dark
    clicks = int(dark)
    fates = []
    for _ in range(n):
        if rng.random() < p.q:
            state, fate = apply_reflection(state, amps, rng)
        else:
            rng.random()  # reflection draw is consumed either way
            fate = Fate.BYPASSED
        fates.append(fate)
        if rng.random() < p.epsilon and fate in (Fate.BYPASSED, Fate.REFLECTED):
            clicks += 1
    state = rotate(state, math.pi / 2, config.rot, rng)
    declared = readout(state, config.readout, rng)
    return TrialRecord(n, tuple(fates), clicks, declared, bool(accepted), bool(dark))


def default_concat_inputs(config: ProtocolConfig, eta_cond_measured=0.821, r=0.66):
    """Single-device (eta, r) from the measured conditional efficiency."""
    p = config.params
    n1 = analytics.eta_cond_n1(eta_cond_measured, p.nbar, r, p.epsilon, p.p_dark)
    return analytics.eta_unconditional(n1, r), r


def concatenated_batch(config: ProtocolConfig, m: int, *, eta=None, r=None) -> Estimate:
    """Detection probability of one photon passing up to ``m`` devices in series.

    Each device independently declares the photon with probability ``eta`` and
    passes it on with probability ``r``; an undetected, unreflected photon is
    gone. Detection by any device counts.
    """
    if int(m) != m or m < 1:
        raise ValueError(f"m must be a positive integer, got {m!r}")
    if eta is None or r is None:
        d_eta, d_r = default_concat_inputs(config)
        eta = d_eta if eta is None else eta
        r = d_r if r is None else r
    n = config.n_trials
    keys = trial_keys(config.seed, 0, n)
    alive = np.ones(n, dtype=bool)
    detected = np.zeros(n, dtype=bool)
    for j in range(int(m)):
        hit = alive & (uniform_at(keys, 2 * j + 1) < eta)
        detected |= hit
        alive &= ~hit & (uniform_at(keys, 2 * j + 2) < r)
    return Estimate.binomial(int(detected.sum()), n)

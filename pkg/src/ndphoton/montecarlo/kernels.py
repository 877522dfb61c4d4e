"""Per-trial protocol kernels.

``simulate_numba`` walks trials one by one inside ``@njit``;
``simulate_numpy`` advances all trials of a block together with masks. Both
consume the per-trial counter streams from :mod:`ndphoton.rng` in the same
fixed layout, so they return identical tallies for identical input:

====================  =====================================
draw (1-based)        use
====================  =====================================
1                     pumping success
2                     herald count (inverse-CDF Poisson)
3, 4                  first pi/2 angle error (Box-Muller)
5                     photon number
6, 7                  detuning jitter
8                     SPCM dark click
9 + 3k .. 11 + 3k     photon k: bypass, reflection, SPCM click
b, b+1 (b = 9 + 3n)   second pi/2 angle error
b + 2, b + 3          readout: Born sample, detector error
====================  =====================================
"""
import math
from typing import NamedTuple

import numpy as np

from .._accel import njit
from ..cavity import reflection_parts
from ..rng import nb_normal, nb_trial_key, nb_uniform, normal_at, trial_keys, uniform_at, seed_base

HALF_PI = 0.5 * math.pi

# output columns
N_PHOTONS, N_BYPASS, N_REFL, N_LOST1, N_LOST2, CLICKS, ACCEPTED, DECLARED, DARK = range(9)
N_COLS = 9


class KernelArgs(NamedTuple):
    nbar: float
    exp_nbar: float
    forced_n: int
    q: float
    epsilon: float
    p_dark: float
    sigma_rot: float
    cos_phi: float
    sin_phi: float
    success_prob: float
    prep_mean_dark: float
    exp_prep_dark: float
    prep_mean_bright: float
    exp_prep_bright: float
    accept_threshold: int
    readout_poisson: int
    err_dark: float
    err_bright: float
    ro_mean_dark: float
    exp_ro_dark: float
    ro_mean_bright: float
    exp_ro_bright: float
    ro_threshold: float
    r1_re: float
    r1_im: float
    r2_re: float
    r2_im: float
    jitter_on: int
    jitter_sigma: float
    detuning: float
    g: float
    kappa: float
    kappa_ext: float
    gamma: float


_nb_reflection_parts = njit(cache=True, nogil=True)(reflection_parts)


@njit(cache=True, nogil=True)
def _nb_poisson(u, lam, p):
    k = 0
    cdf = p
    while u >= cdf and p > 0.0:
        k += 1
        p *= lam / k
        cdf += p
    return k


@njit(cache=True, nogil=True)
def _simulate_numba(base, start, out, nbar, exp_nbar, forced_n, q, epsilon, p_dark,
                    sigma_rot, cos_phi, sin_phi,
                    success_prob, prep_mean_dark, exp_prep_dark, prep_mean_bright, exp_prep_bright,
                    accept_threshold,
                    readout_poisson, err_dark, err_bright, ro_mean_dark, exp_ro_dark,
                    ro_mean_bright, exp_ro_bright, ro_threshold,
                    r1_re, r1_im, r2_re, r2_im,
                    jitter_on, jitter_sigma, detuning, g, kappa, kappa_ext, gamma):
    for i in range(out.shape[0]):
        key = nb_trial_key(base, start + i)

        pumped = nb_uniform(key, 1) < success_prob
        if pumped:
            counts = _nb_poisson(nb_uniform(key, 2), prep_mean_dark, exp_prep_dark)
            a_re, a_im, b_re, b_im = 0.0, 0.0, 1.0, 0.0
        else:
            counts = _nb_poisson(nb_uniform(key, 2), prep_mean_bright, exp_prep_bright)
            a_re, a_im, b_re, b_im = 1.0, 0.0, 0.0, 0.0
        accepted = counts <= accept_threshold

        theta = HALF_PI + sigma_rot * nb_normal(key, 3)
        c = math.cos(theta / 2.0)
        s = math.sin(theta / 2.0)
        na_re = c * a_re + s * (cos_phi * b_re + sin_phi * b_im)
        na_im = c * a_im + s * (cos_phi * b_im - sin_phi * b_re)
        nb_re = -s * (cos_phi * a_re - sin_phi * a_im) + c * b_re
        nb_im = -s * (cos_phi * a_im + sin_phi * a_re) + c * b_im
        a_re, a_im, b_re, b_im = na_re, na_im, nb_re, nb_im

        n = _nb_poisson(nb_uniform(key, 5), nbar, exp_nbar)
        if forced_n >= 0:
            n = forced_n

        z = nb_normal(key, 6)
        x1_re, x1_im, x2_re, x2_im = r1_re, r1_im, r2_re, r2_im
        if jitter_on:
            d = detuning + jitter_sigma * z
            x1_re, x1_im = _nb_reflection_parts(d, 0.0, kappa, kappa_ext, gamma)
            x2_re, x2_im = _nb_reflection_parts(d, g, kappa, kappa_ext, gamma)
        t1 = x1_re * x1_re + x1_im * x1_im

        dark = nb_uniform(key, 8) < p_dark
        clicks = 1 if dark else 0
        n_bypass = 0
        n_refl = 0
        n_lost1 = 0
        n_lost2 = 0
        for k in range(n):
            ctr = 9 + 3 * k
            external = False
            if nb_uniform(key, ctr) < q:
                # reflection amplitudes applied branch-wise
                f1_re = a_re * x1_re - a_im * x1_im
                f1_im = a_re * x1_im + a_im * x1_re
                f2_re = b_re * x2_re - b_im * x2_im
                f2_im = b_re * x2_im + b_im * x2_re
                pa = a_re * a_re + a_im * a_im
                p_refl = (f1_re * f1_re + f1_im * f1_im) + (f2_re * f2_re + f2_im * f2_im)
                w1 = pa * (1.0 - t1)
                u = nb_uniform(key, ctr + 1)
                if u < p_refl:
                    inv = 1.0 / math.sqrt(p_refl)
                    a_re, a_im, b_re, b_im = f1_re * inv, f1_im * inv, f2_re * inv, f2_im * inv
                    n_refl += 1
                    external = True
                elif u < p_refl + w1:
                    a_re, a_im, b_re, b_im = 1.0, 0.0, 0.0, 0.0
                    n_lost1 += 1
                else:
                    a_re, a_im, b_re, b_im = 0.0, 0.0, 1.0, 0.0
                    n_lost2 += 1
            else:
                n_bypass += 1
                external = True
            if external and nb_uniform(key, ctr + 2) < epsilon:
                clicks += 1

        b = 9 + 3 * n
        theta = HALF_PI + sigma_rot * nb_normal(key, b)
        c = math.cos(theta / 2.0)
        s = math.sin(theta / 2.0)
        na_re = c * a_re + s * (cos_phi * b_re + sin_phi * b_im)
        na_im = c * a_im + s * (cos_phi * b_im - sin_phi * b_re)
        a_re, a_im = na_re, na_im
        p1 = a_re * a_re + a_im * a_im
        phys_one = nb_uniform(key, b + 2) < p1
        uf = nb_uniform(key, b + 3)
        if readout_poisson:
            if phys_one:
                cnt = _nb_poisson(uf, ro_mean_dark, exp_ro_dark)
            else:
                cnt = _nb_poisson(uf, ro_mean_bright, exp_ro_bright)
            declared_two = cnt > ro_threshold
        elif phys_one:
            declared_two = uf < err_dark
        else:
            declared_two = not (uf < err_bright)

        out[i, N_PHOTONS] = n
        out[i, N_BYPASS] = n_bypass
        out[i, N_REFL] = n_refl
        out[i, N_LOST1] = n_lost1
        out[i, N_LOST2] = n_lost2
        out[i, CLICKS] = clicks
        out[i, ACCEPTED] = 1 if accepted else 0
        out[i, DECLARED] = 1 if declared_two else 0
        out[i, DARK] = 1 if dark else 0


def simulate_numba(seed, start, count, args: KernelArgs):
    out = np.zeros((count, N_COLS), dtype=np.int32)
    _simulate_numba(np.uint64(seed_base(seed)), np.int64(start), out, *args)
    return out


def _poisson_vec(u, lam, p):
    k = np.zeros(u.shape, dtype=np.int64)
    p = p.copy()
    cdf = p.copy()
    active = (u >= cdf) & (p > 0.0)
    while active.any():
        k[active] += 1
        p[active] *= lam[active] / k[active]
        cdf[active] += p[active]
        active &= (u >= cdf) & (p > 0.0)
    return k


def _rotate_vec(a, b, theta, cos_phi, sin_phi):
    """Returns only what the caller needs: both amplitudes as (re, im) pairs."""
    a_re, a_im = a
    b_re, b_im = b
    c = np.cos(theta / 2.0)
    s = np.sin(theta / 2.0)
    na_re = c * a_re + s * (cos_phi * b_re + sin_phi * b_im)
    na_im = c * a_im + s * (cos_phi * b_im - sin_phi * b_re)
    nb_re = -s * (cos_phi * a_re - sin_phi * a_im) + c * b_re
    nb_im = -s * (cos_phi * a_im + sin_phi * a_re) + c * b_im
    return (na_re, na_im), (nb_re, nb_im)


def simulate_numpy(seed, start, count, args: KernelArgs):
    a = args
    keys = trial_keys(seed, start, count)
    out = np.zeros((count, N_COLS), dtype=np.int32)

    pumped = uniform_at(keys, 1) < a.success_prob
    lam = np.where(pumped, a.prep_mean_dark, a.prep_mean_bright)
    p0 = np.where(pumped, a.exp_prep_dark, a.exp_prep_bright)
    accepted = _poisson_vec(uniform_at(keys, 2), lam, p0) <= a.accept_threshold

    zero = np.zeros(count)
    a_re = np.where(pumped, 0.0, 1.0)
    b_re = np.where(pumped, 1.0, 0.0)
    theta = HALF_PI + a.sigma_rot * normal_at(keys, 3)
    (a_re, a_im), (b_re, b_im) = _rotate_vec((a_re, zero), (b_re, zero), theta, a.cos_phi, a.sin_phi)

    if a.forced_n >= 0:
        n = np.full(count, a.forced_n, dtype=np.int64)
    else:
        n = _poisson_vec(uniform_at(keys, 5), np.full(count, a.nbar), np.full(count, a.exp_nbar))

    if a.jitter_on:
        d = a.detuning + a.jitter_sigma * normal_at(keys, 6)
        x1_re, x1_im = reflection_parts(d, 0.0, a.kappa, a.kappa_ext, a.gamma)
        x2_re, x2_im = reflection_parts(d, a.g, a.kappa, a.kappa_ext, a.gamma)
    else:
        x1_re, x1_im = np.full(count, a.r1_re), np.full(count, a.r1_im)
        x2_re, x2_im = np.full(count, a.r2_re), np.full(count, a.r2_im)
    t1 = x1_re * x1_re + x1_im * x1_im

    dark = uniform_at(keys, 8) < a.p_dark
    clicks = dark.astype(np.int64)
    tallies = {col: np.zeros(count, dtype=np.int64) for col in (N_BYPASS, N_REFL, N_LOST1, N_LOST2)}

    max_n = int(n.max()) if count else 0
    for k in range(max_n):
        act = np.flatnonzero(n > k)
        kk = keys[act]
        ctr = 9 + 3 * k
        interact = uniform_at(kk, ctr) < a.q
        u = uniform_at(kk, ctr + 1)
        uc = uniform_at(kk, ctr + 2)

        ar, ai, br, bi = a_re[act], a_im[act], b_re[act], b_im[act]
        y1r, y1i, y2r, y2i = x1_re[act], x1_im[act], x2_re[act], x2_im[act]
        f1_re = ar * y1r - ai * y1i
        f1_im = ar * y1i + ai * y1r
        f2_re = br * y2r - bi * y2i
        f2_im = br * y2i + bi * y2r
        pa = ar * ar + ai * ai
        p_refl = (f1_re * f1_re + f1_im * f1_im) + (f2_re * f2_re + f2_im * f2_im)
        w1 = pa * (1.0 - t1[act])

        refl = interact & (u < p_refl)
        lost1 = interact & ~refl & (u < p_refl + w1)
        lost2 = interact & ~refl & ~lost1
        bypass = ~interact

        inv = np.ones_like(p_refl)
        inv[refl] = 1.0 / np.sqrt(p_refl[refl])
        new = (np.where(refl, f1_re * inv, ar), np.where(refl, f1_im * inv, ai),
               np.where(refl, f2_re * inv, br), np.where(refl, f2_im * inv, bi))
        new = (np.where(lost1, 1.0, np.where(lost2, 0.0, new[0])),
               np.where(lost1 | lost2, 0.0, new[1]),
               np.where(lost2, 1.0, np.where(lost1, 0.0, new[2])),
               np.where(lost1 | lost2, 0.0, new[3]))
        a_re[act], a_im[act], b_re[act], b_im[act] = new

        tallies[N_BYPASS][act] += bypass
        tallies[N_REFL][act] += refl
        tallies[N_LOST1][act] += lost1
        tallies[N_LOST2][act] += lost2
        clicks[act] += (refl | bypass) & (uc < a.epsilon)

    b = 9 + 3 * n
    theta = HALF_PI + a.sigma_rot * normal_at(keys, b)
    (a_re, a_im), _ = _rotate_vec((a_re, a_im), (b_re, b_im), theta, a.cos_phi, a.sin_phi)
    phys_one = uniform_at(keys, b + 2) < a_re * a_re + a_im * a_im
    uf = uniform_at(keys, b + 3)
    if a.readout_poisson:
        lam = np.where(phys_one, a.ro_mean_dark, a.ro_mean_bright)
        p0 = np.where(phys_one, a.exp_ro_dark, a.exp_ro_bright)
        declared_two = _poisson_vec(uf, lam, p0) > a.ro_threshold
    else:
        declared_two = np.where(phys_one, uf < a.err_dark, ~(uf < a.err_bright))

    out[:, N_PHOTONS] = n
    for col, v in tallies.items():
        out[:, col] = v
    out[:, CLICKS] = clicks
    out[:, ACCEPTED] = accepted
    out[:, DECLARED] = declared_two
    out[:, DARK] = dark
    return out


KERNELS = {"numba": simulate_numba, "numpy": simulate_numpy}

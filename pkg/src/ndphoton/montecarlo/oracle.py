"""Deterministic companion to the Monte Carlo engine.

Averages the single-photon and no-photon protocol outcomes over the Gaussian
rotation errors (and detuning jitter, when enabled) by Gauss-Hermite
quadrature instead of sampling. Multi-photon pulses are then folded in with
the closed-form coherent-pulse algebra of :mod:`ndphoton.analytics`.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .. import analytics
from ..cavity import reflection_amplitudes
from .config import ProtocolConfig


@dataclass(frozen=True)
class OracleResult:
    r_eff: float            # P(photon leaves towards the SPCM)
    eta_n1: float           # P(declared |2> | one photon, externally reflected)
    eta_single: float       # P(declared |2> | one photon impinged)
    dark_rate: float        # P(declared |2> | no photon)
    eta_cond: float         # coherent-pulse conditional efficiency, exactly one click
    p_tot: float            # P(exactly one click), coherent pulse


def _nodes(sigma, n):
    if sigma == 0.0:
        return np.zeros(1), np.ones(1)
    x, w = np.polynomial.hermite_e.hermegauss(n)
    return sigma * x, w / math.sqrt(2.0 * math.pi)


def _rot(theta, phase, v1, v2):
    c, s = np.cos(theta / 2), np.sin(theta / 2)
    e = np.exp(1j * phase)
    return c * v1 + s * np.conj(e) * v2, -s * e * v1 + c * v2


def single_photon_oracle(config: ProtocolConfig, order=40) -> OracleResult:
    p, rot, ro = config.params, config.rot, config.readout
    q = p.q
    f = config.prep.unpumped_fraction(config.postselect_prep)
    d1, w1 = _nodes(rot.sigma, order)
    d2, w2 = _nodes(rot.sigma, order)
    # grid over (first error, second error)
    D1, D2 = np.meshgrid(d1, d2, indexing="ij")
    W = np.outer(w1, w2)
    th1 = math.pi / 2 + D1
    th2 = math.pi / 2 + D2
    ph = rot.axis_phase

    if config.amplitudes is not None:
        amp_list = [(1.0, *config.amplitudes)]
    elif config.jitter_enabled and p.freq_jitter_sigma > 0:
        dj, wj = _nodes(p.freq_jitter_sigma, order)
        amp_list = []
        for d, w in zip(dj, wj):
            a = reflection_amplitudes(p, config.detuning + d)
            amp_list.append((w, a.r1, a.r2))
    else:
        a = reflection_amplitudes(p, config.detuning)
        amp_list = [(1.0, a.r1, a.r2)]

    e_d, contrast = ro.err_dark, ro.contrast

    def declared(p2_joint, p_branch):
        return e_d * p_branch + contrast * p2_joint

    dark = refl_int = two_refl_int = single_uncond_int = 0.0
    for start_w, start in ((1.0 - f, (0.0, 1.0)), (f, (1.0, 0.0))):
        if start_w == 0.0:
            continue
        a, b = _rot(th1, ph, start[0] + 0j, start[1] + 0j)
        _, b_dark = _rot(th2, ph, a, b)
        dark += start_w * np.sum(W * declared(np.abs(b_dark) ** 2, 1.0))
        # |1> and |2> after the second pulse
        p2_from1 = np.abs(_rot(th2, ph, 1.0 + 0j, 0j)[1]) ** 2
        p2_from2 = np.abs(_rot(th2, ph, 0j, 1.0 + 0j)[1]) ** 2
        for aw, r1, r2 in amp_list:
            f1, f2 = a * r1, b * r2
            p_refl = np.abs(f1) ** 2 + np.abs(f2) ** 2
            l1 = np.abs(a) ** 2 * (1 - abs(r1) ** 2)
            l2 = np.abs(b) ** 2 * (1 - abs(r2) ** 2)
            _, g2 = _rot(th2, ph, f1, f2)
            joint_refl = declared(np.abs(g2) ** 2, p_refl)
            joint_lost = declared(l1 * p2_from1 + l2 * p2_from2, l1 + l2)
            refl_int += start_w * aw * np.sum(W * p_refl)
            two_refl_int += start_w * aw * np.sum(W * joint_refl)
            single_uncond_int += start_w * aw * np.sum(W * (joint_refl + joint_lost))

    r_eff = (1 - q) + q * refl_int
    joint_ext = (1 - q) * dark + q * two_refl_int
    eta_n1 = joint_ext / r_eff if r_eff > 0 else math.nan
    eta_single = (1 - q) * dark + q * single_uncond_int
    s = analytics.scenario_probs(p.nbar, r_eff, p.epsilon, p.p_dark)
    eta_cond = analytics.forward_eta_cond(min(max(eta_n1, 0.0), 1.0), p.nbar, r_eff, p.epsilon, p.p_dark)
    return OracleResult(float(r_eff), float(eta_n1), float(eta_single), float(dark), float(eta_cond),
                        float(s.p_tot))


forward_oracle = single_photon_oracle


@dataclass(frozen=True)
class PulseOracle:
    """Exact expectations for a coherent (or forced) pulse, multi-photon terms included."""

    p_one_click: float
    eta_cond: float        # exactly one click
    eta_cond_ge1: float    # at least one click
    eta_single: float
    dark_rate: float
    refl_prob: float
    truncation: float      # Poisson weight beyond the enumerated photon numbers


def _photon_weights(config, n_max):
    if config.forced_photons is not None:
        w = np.zeros(max(n_max, config.forced_photons) + 1)
        w[config.forced_photons] = 1.0
        return w, 0.0
    lam = config.params.nbar
    k = np.arange(n_max + 1)
    w = np.exp(-lam + k * math.log(lam) - np.array([math.lgamma(i + 1) for i in k])) if lam > 0 else (k == 0) * 1.0
    return w, max(0.0, 1.0 - float(w.sum()))


def pulse_oracle(config: ProtocolConfig, n_max=6, order=40) -> PulseOracle:
    """Enumerate every photon history of a pulse and average over rotation errors.

    Coherent branches are labelled by (reflections, clicks) since a bypassed
    photon leaves the atom untouched; lost photons project the atom, so those
    branches merge by (level, clicks). Clicks are capped at 2.
    """
    p, rot, ro = config.params, config.rot, config.readout
    q, eps = p.q, p.epsilon
    f = config.prep.unpumped_fraction(config.postselect_prep)
    d, w = _nodes(rot.sigma, order)
    th1 = math.pi / 2 + d
    th2 = math.pi / 2 + d
    ph = rot.axis_phase

    def final_p2(a, b):
        # a, b: arrays over first-error nodes -> average over second error
        _, g2 = _rot(th2[None, :], ph, a[:, None], b[:, None])
        p2 = np.abs(g2) ** 2 @ w
        return ro.err_dark + ro.contrast * p2

    p2_proj = {1: float(final_p2(np.ones(1, complex), np.zeros(1, complex))[0]),
               2: float(final_p2(np.zeros(1, complex), np.ones(1, complex))[0])}

    if config.amplitudes is not None:
        amp_list = [(1.0, *config.amplitudes)]
    elif config.jitter_enabled and p.freq_jitter_sigma > 0:
        dj, wj = _nodes(p.freq_jitter_sigma, order)
        amp_list = [(wt, *(lambda a: (a.r1, a.r2))(reflection_amplitudes(p, config.detuning + x)))
                    for x, wt in zip(dj, wj)]
    else:
        a = reflection_amplitudes(p, config.detuning)
        amp_list = [(1.0, a.r1, a.r2)]

    photon_w, trunc = _photon_weights(config, n_max)
    # acc[(n, clicks)] = [P, P(declared two)]
    acc = {}
    ext_refl = 0.0
    photons = 0.0

    for start_w, start in ((1.0 - f, (0.0, 1.0)), (f, (1.0, 0.0))):
        if start_w == 0.0:
            continue
        a0, b0 = _rot(th1, ph, start[0] + 0j, start[1] + 0j)
        for aw, r1, r2 in amp_list:
            base_w = start_w * aw * w  # per first-error node
            # coherent: key (j reflections, clicks) -> (weight array, a, b)
            coh = {(0, 0): (base_w.copy(), a0, b0)}
            proj = {}  # (level, clicks) -> weight array
            for n in range(len(photon_w)):
                # histories with exactly n photons end here
                for (j, c), (wt, a, b) in coh.items():
                    _add(acc, n, c, photon_w[n] * wt, photon_w[n] * wt * final_p2(a, b))
                for (lvl, c), wt in proj.items():
                    _add(acc, n, c, photon_w[n] * wt, photon_w[n] * wt * p2_proj[lvl])
                tail = photon_w[n + 1:].sum()
                if tail == 0:
                    break
                new_coh, new_proj = {}, {}
                for (j, c), (wt, a, b) in coh.items():
                    f1, f2 = a * r1, b * r2
                    p_refl = np.abs(f1) ** 2 + np.abs(f2) ** 2
                    l1 = np.abs(a) ** 2 * (1 - abs(r1) ** 2)
                    l2 = np.abs(b) ** 2 * (1 - abs(r2) ** 2)
                    norm = np.sqrt(np.where(p_refl > 0, p_refl, 1.0))
                    ext_refl += tail * float(np.sum(wt * ((1 - q) + q * p_refl)))
                    photons += tail * float(np.sum(wt))
                    for clicked, pc in ((1, eps), (0, 1 - eps)):
                        cc = min(c + clicked, 2)
                        _merge_coh(new_coh, (j, cc), wt * (1 - q) * pc, a, b)
                        _merge_coh(new_coh, (j + 1, cc), wt * q * p_refl * pc, f1 / norm, f2 / norm)
                    _merge_proj(new_proj, (1, c), wt * q * l1)
                    _merge_proj(new_proj, (2, c), wt * q * l2)
                for (lvl, c), wt in proj.items():
                    t = abs(r1) ** 2 if lvl == 1 else abs(r2) ** 2
                    ext_w = (1 - q) + q * t
                    ext_refl += tail * float(np.sum(wt * ext_w))
                    photons += tail * float(np.sum(wt))
                    for clicked, pc in ((1, eps), (0, 1 - eps)):
                        _merge_proj(new_proj, (lvl, min(c + clicked, 2)), wt * ext_w * pc)
                    _merge_proj(new_proj, (lvl, c), wt * q * (1 - t))
                coh, proj = new_coh, new_proj

    pd = p.p_dark
    # fold in the dark click
    tot = {}
    for (n, c), (pw, p2w) in acc.items():
        for dc, pdc in ((1, pd), (0, 1 - pd)):
            key = (n, min(c + dc, 2))
            prev = tot.get(key, (0.0, 0.0))
            tot[key] = (prev[0] + pdc * pw, prev[1] + pdc * p2w)

    def cond(pred_c, pred_n=lambda n: True):
        num = sum(v[1] for (n, c), v in tot.items() if pred_c(c) and pred_n(n))
        den = sum(v[0] for (n, c), v in tot.items() if pred_c(c) and pred_n(n))
        return num / den if den > 0 else math.nan, den

    eta_one, p_one = cond(lambda c: c == 1)
    eta_ge1, _ = cond(lambda c: c >= 1)
    eta_single, _ = cond(lambda c: True, lambda n: n == 1)
    dark_rate, _ = cond(lambda c: True, lambda n: n == 0)
    return PulseOracle(float(p_one), float(eta_one), float(eta_ge1), float(eta_single), float(dark_rate),
                       float(ext_refl / photons) if photons > 0 else math.nan, float(trunc))


def _add(acc, n, c, pw, p2w):
    prev = acc.get((n, c), (0.0, 0.0))
    acc[(n, c)] = (prev[0] + float(np.sum(pw)), prev[1] + float(np.sum(p2w)))


def _merge_coh(d, key, wt, a, b):
    # same key => same reflection count => same normalised state
    if key in d:
        d[key] = (d[key][0] + wt, d[key][1], d[key][2])
    else:
        d[key] = (wt, a, b)


def _merge_proj(d, key, wt):
    d[key] = d.get(key, 0.0) + wt


"""Reflection off a single-sided cavity holding one three-level atom.

All rates and detunings are angular frequencies in rad/us, i.e. ``2*pi`` times
the value in MHz. Use :func:`mhz` at the boundary.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, replace

import numpy as np

from .errors import ParameterError

TWO_PI = 2.0 * math.pi


def mhz(f):
    """Convert a frequency in MHz to angular units (rad/us)."""
    return TWO_PI * f


def to_mhz(w):
    return w / TWO_PI


@dataclass(frozen=True)
class SystemParams:
    """Physical rates, mirror budget and detection knobs of the device.

    ``kappa_ext`` is not stored: it follows from the coupling-mirror
    transmission and the remaining round-trip loss (high-reflector
    transmission, scattering, absorption).
    """

    g: float = mhz(6.7)
    kappa: float = mhz(2.5)
    gamma: float = mhz(3.0)
    mirror_transmission_ppm: float = 95.0
    loss_ppm: float = 8.0
    q: float = 0.92
    epsilon: float = 0.55
    nbar: float = 0.115
    p_dark: float = 1.6e-4
    freq_jitter_sigma: float = mhz(0.3)

    def __post_init__(self):
        for name in ("g", "kappa", "gamma"):
            v = getattr(self, name)
            if not (math.isfinite(v) and v > 0):
                raise ParameterError(f"{name} must be a positive rate, got {v!r}")
        if not self.mirror_transmission_ppm > 0:
            raise ParameterError("mirror_transmission_ppm must be positive")
        if not self.loss_ppm >= 0:
            raise ParameterError("loss_ppm must be nonnegative")
        for name in ("q", "epsilon"):
            v = getattr(self, name)
            if not 0.0 <= v <= 1.0:
                raise ParameterError(f"{name} must lie in [0, 1], got {v!r}")
        if not (math.isfinite(self.nbar) and self.nbar >= 0):
            raise ParameterError(f"nbar must be >= 0, got {self.nbar!r}")
        if not 0.0 <= self.p_dark < 1.0:
            raise ParameterError(f"p_dark must lie in [0, 1), got {self.p_dark!r}")
        if not (math.isfinite(self.freq_jitter_sigma) and self.freq_jitter_sigma >= 0):
            raise ParameterError("freq_jitter_sigma must be >= 0")

    @property
    def kappa_ext(self):
        t = self.mirror_transmission_ppm
        return self.kappa * t / (t + self.loss_ppm)

    @classmethod
    def from_mhz(cls, g=6.7, kappa=2.5, gamma=3.0, jitter=0.3, **kwargs):
        return cls(g=mhz(g), kappa=mhz(kappa), gamma=mhz(gamma),
                   freq_jitter_sigma=mhz(jitter), **kwargs)

    def replace(self, **changes):
        return replace(self, **changes)


@dataclass(frozen=True)
class ReflectionAmplitudes:
    detuning: float
    r1: complex
    r2: complex

    @property
    def phase_difference(self):
        return wrap_phase(np.angle(self.r1) - np.angle(self.r2))


def wrap_phase(phi):
    """Map angles to (-pi, pi]; a signed zero imaginary part must not yield -pi."""
    phi = np.asarray(phi, dtype=float)
    out = np.mod(phi + np.pi, 2 * np.pi) - np.pi
    out = np.where(out <= -np.pi, np.pi, out)
    return out if out.ndim else float(out)


def reflection_parts(delta, g_eff, kappa, kappa_ext, gamma):
    """Real and imaginary part of r = 1 - 2 kext / (i d + kappa + g^2 / (i d + gamma)).

    Written in real arithmetic only so the scalar, array and jitted callers
    agree to the last bit.
    """
    # g^2 / (gamma + i d) = g^2 (gamma - i d) / (gamma^2 + d^2)
    den_a = gamma * gamma + delta * delta
    a_re = kappa + g_eff * g_eff * gamma / den_a
    a_im = delta - g_eff * g_eff * delta / den_a
    # 2 kext / (a_re + i a_im)
    mag2 = a_re * a_re + a_im * a_im
    return 1.0 - 2.0 * kappa_ext * a_re / mag2, 2.0 * kappa_ext * a_im / mag2


def reflection_amplitude(params: SystemParams, coupled: bool, detuning: float = 0.0) -> complex:
    """Complex reflection coefficient for the atom in |2> (coupled) or |1>."""
    g_eff = params.g if coupled else 0.0
    re, im = reflection_parts(float(detuning), g_eff, params.kappa, params.kappa_ext, params.gamma)
    return complex(re, im)


def reflection_amplitudes(params: SystemParams, detuning: float = 0.0) -> ReflectionAmplitudes:
    return ReflectionAmplitudes(
        detuning=float(detuning),
        r1=reflection_amplitude(params, False, detuning),
        r2=reflection_amplitude(params, True, detuning),
    )


def reflection_spectrum(params: SystemParams, coupled: bool, detuning_grid):
    """Pointwise ``(detuning, |r|^2, arg r)`` over the grid, order preserved.

    Returns an ``(n, 3)`` float array.
    """
    grid = np.asarray(detuning_grid, dtype=float).ravel()
    if grid.size == 0:
        raise ParameterError("detuning grid is empty")
    if not np.all(np.isfinite(grid)):
        raise ParameterError("detuning grid contains non-finite values")
    g_eff = params.g if coupled else 0.0
    re, im = reflection_parts(grid, g_eff, params.kappa, params.kappa_ext, params.gamma)
    phase = wrap_phase(np.arctan2(im, re))
    return np.column_stack([grid, re * re + im * im, phase])


def measured_reflectivity(params: SystemParams, coupled: bool, detuning: float = 0.0) -> float:
    """Reflectivity seen by an external detector; mode-mismatched light bypasses the cavity."""
    r = reflection_amplitude(params, coupled, detuning)
    return params.q * abs(r) ** 2 + (1.0 - params.q)


def normal_mode_frequencies(params: SystemParams):
    """Real parts of the coupled-system poles, +/- sqrt(g^2 - ((kappa - gamma)/2)^2).

    Purely damped (0.0) outside strong coupling.
    """
    s = params.g ** 2 - ((params.kappa - params.gamma) / 2.0) ** 2
    w = math.sqrt(s) if s > 0 else 0.0
    return -w, w

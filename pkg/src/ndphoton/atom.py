"""Atomic qubit over {|1>, |2>}: preparation, rotations, photon reflection, readout.

Operations take an explicit ``rng`` exposing ``random()`` and
``standard_normal()``; a :class:`numpy.random.Generator` or a
:class:`ndphoton.rng.TrialStream` both work. Draw counts per call are fixed
(see each function) so the vectorised kernels can replay the same stream.
"""
from __future__ import annotations

import cmath
import math
from dataclasses import dataclass, field
from enum import Enum, IntEnum
from functools import lru_cache
from typing import Optional

from scipy import optimize, stats

from .errors import ParameterError
from .rng import poisson_from_uniform

NORM_TOL = 1e-9
INV_SQRT2 = 1.0 / math.sqrt(2.0)


class Level(IntEnum):
    ONE = 1
    TWO = 2


class Fate(str, Enum):
    BYPASSED = "bypassed"
    REFLECTED = "reflected"
    LOST_TO_1 = "lost_to_1"
    LOST_TO_2 = "lost_to_2"


@dataclass(frozen=True)
class AtomState:
    c1: complex
    c2: complex
    projected: Optional[Level] = None

    def __post_init__(self):
        n = self.norm2
        if abs(n - 1.0) > NORM_TOL:
            raise ParameterError(f"atom state not normalized (|c1|^2+|c2|^2 = {n!r})")
        if self.projected is Level.ONE and not (self.c2 == 0 and abs(abs(self.c1) - 1) <= NORM_TOL):
            raise ParameterError("state tagged as projected to |1> has weight on |2>")
        if self.projected is Level.TWO and not (self.c1 == 0 and abs(abs(self.c2) - 1) <= NORM_TOL):
            raise ParameterError("state tagged as projected to |2> has weight on |1>")

    @classmethod
    def normalized(cls, c1, c2):
        n = math.sqrt(abs(c1) ** 2 + abs(c2) ** 2)
        if n == 0:
            raise ParameterError("zero state vector")
        return cls(complex(c1) / n, complex(c2) / n)

    @classmethod
    def one(cls):
        return cls(1 + 0j, 0j, Level.ONE)

    @classmethod
    def two(cls):
        return cls(0j, 1 + 0j, Level.TWO)

    @property
    def norm2(self):
        return abs(self.c1) ** 2 + abs(self.c2) ** 2

    @property
    def p1(self):
        return abs(self.c1) ** 2

    @property
    def p2(self):
        return abs(self.c2) ** 2

    def equals_up_to_phase(self, other: "AtomState", tol=1e-9):
        overlap = self.c1.conjugate() * other.c1 + self.c2.conjugate() * other.c2
        return abs(abs(overlap) - 1.0) <= tol

    def relative_phase(self):
        """arg(c2) - arg(c1); undefined (0) when either amplitude vanishes."""
        if self.c1 == 0 or self.c2 == 0:
            return 0.0
        return cmath.phase(self.c2 / self.c1)


@dataclass(frozen=True)
class RotationModel:
    """Raman rotation with a zero-mean Gaussian angle error per pulse.

    An error of standard deviation ``sigma`` turns a Rabi fringe
    ``(1 + cos theta) / 2`` into ``(1 + V cos theta) / 2`` with
    ``V = exp(-sigma^2 / 2)``, so ``visibility`` fixes ``sigma``.

    The default is the rotation-only visibility from :func:`calibrate_models`;
    seen through the default readout and herald it gives a 0.97 fringe.
    """

    visibility: float = 0.9711340206185567
    axis_phase: float = 0.0

    def __post_init__(self):
        if not 0.0 < self.visibility <= 1.0:
            raise ParameterError(f"visibility must lie in (0, 1], got {self.visibility!r}")

    @property
    def sigma(self):
        return angle_noise_sigma(self.visibility)


@dataclass(frozen=True)
class PrepModel:
    mean_bright: float = 17.0
    mean_dark: float = 1.6
    accept_threshold: int = 5
    success_prob: float = 0.8752022954222455

    def __post_init__(self):
        if self.mean_bright < 0 or self.mean_dark < 0:
            raise ParameterError("Poisson means must be nonnegative")
        if int(self.accept_threshold) != self.accept_threshold or self.accept_threshold < 0:
            raise ParameterError("accept_threshold must be a nonnegative integer")
        if not 0.0 <= self.success_prob <= 1.0:
            raise ParameterError("success_prob must lie in [0, 1]")

    def p_accept_pumped(self):
        return float(stats.poisson.cdf(self.accept_threshold, self.mean_dark))

    def p_accept_unpumped(self):
        return float(stats.poisson.cdf(self.accept_threshold, self.mean_bright))

    def acceptance(self):
        s = self.success_prob
        return s * self.p_accept_pumped() + (1 - s) * self.p_accept_unpumped()

    def unpumped_fraction(self, postselect=True):
        """Fraction of used trials whose atom was not pumped into |2>."""
        s = self.success_prob
        if not postselect:
            return 1.0 - s
        bad = (1 - s) * self.p_accept_unpumped()
        return bad / (s * self.p_accept_pumped() + bad)


@dataclass(frozen=True)
class ReadoutModel:
    """Fluorescence state detection.

    ``mode="reduced"`` flips the true level with ``err_bright`` (|2> read as
    |1>) or ``err_dark`` (|1> read as |2>). ``mode="poisson"`` samples photon
    counts with means ``mean_bright``/``mean_dark`` and declares |2> above
    ``threshold``.
    """

    threshold: float = 2.5
    err_bright: float = 0.00048719837439192837
    err_dark: float = 0.00048719837439192837
    mode: str = "reduced"
    mean_bright: Optional[float] = None
    mean_dark: Optional[float] = None

    def __post_init__(self):
        for name in ("err_bright", "err_dark"):
            if not 0.0 <= getattr(self, name) <= 1.0:
                raise ParameterError(f"{name} must lie in [0, 1]")
        if self.mode not in ("reduced", "poisson"):
            raise ParameterError(f"unknown readout mode {self.mode!r}")
        if self.mode == "poisson":
            if self.mean_bright is None or self.mean_dark is None:
                raise ParameterError("poisson readout needs mean_bright and mean_dark")
            if self.mean_bright < 0 or self.mean_dark < 0:
                raise ParameterError("readout count means must be nonnegative")

    @classmethod
    def from_counts(cls, mean_bright, mean_dark, threshold=2.5):
        k = math.floor(threshold)
        return cls(
            threshold=threshold,
            err_bright=float(stats.poisson.cdf(k, mean_bright)),
            err_dark=float(stats.poisson.sf(k, mean_dark)),
            mode="poisson",
            mean_bright=mean_bright,
            mean_dark=mean_dark,
        )

    @property
    def contrast(self):
        return 1.0 - self.err_bright - self.err_dark


IDEAL_ROTATION = RotationModel(visibility=1.0)
IDEAL_PREP = PrepModel(success_prob=1.0)
IDEAL_READOUT = ReadoutModel(err_bright=0.0, err_dark=0.0)


def angle_noise_sigma(visibility):
    return math.sqrt(-2.0 * math.log(visibility))


def rotation_matrix(angle, axis_phase=0.0):
    c = math.cos(angle / 2.0)
    s = math.sin(angle / 2.0)
    e = cmath.exp(1j * axis_phase)
    return ((c, s * e.conjugate()), (-s * e, c))


def _apply(m, c1, c2):
    (a, b), (c, d) = m
    return a * c1 + b * c2, c * c1 + d * c2


def rotate(state: AtomState, angle: float, rot: RotationModel = IDEAL_ROTATION, rng=None) -> AtomState:
    """Rotate about the equatorial axis at ``rot.axis_phase``.

    With an ``rng`` one normal variate is drawn (always, even for V=1) and
    scaled by the model's angle-error sigma.
    """
    if rng is not None:
        angle = angle + rot.sigma * rng.standard_normal()
    c1, c2 = _apply(rotation_matrix(angle, rot.axis_phase), state.c1, state.c2)
    return AtomState.normalized(c1, c2)


def prepare_superposition(rot: RotationModel, prep: PrepModel, rng):
    """Optical pumping, herald check and pi/2 rotation into (|1> + |2>)/sqrt(2).

    Draws: pumping success, herald count, rotation error. An atom that was not
    pumped is left in the uncoupled level |1>. Returns ``(state, accepted)``.
    """
    pumped = rng.random() < prep.success_prob
    mean = prep.mean_dark if pumped else prep.mean_bright
    counts = poisson_from_uniform(rng.random(), mean)
    accepted = counts <= prep.accept_threshold
    start = AtomState.two() if pumped else AtomState.one()
    return rotate(start, math.pi / 2, rot, rng), accepted


def apply_reflection(state: AtomState, amps, rng):
    """Let one mode-matched photon hit the cavity. One uniform draw.

    Returns ``(state, fate)`` with fate REFLECTED, LOST_TO_1 or LOST_TO_2.
    Loss from the uncoupled branch means the photon entered the cavity, so the
    atom is projected to |1>; loss from the coupled branch is atomic
    scattering and projects to |2>.
    """
    r1, r2 = amps.r1, amps.r2
    a1 = state.c1 * r1
    a2 = state.c2 * r2
    p_refl = abs(a1) ** 2 + abs(a2) ** 2
    w1 = state.p1 * (1.0 - abs(r1) ** 2)
    u = rng.random()
    if u < p_refl:
        return AtomState.normalized(a1, a2), Fate.REFLECTED
    if u < p_refl + w1:
        return AtomState.one(), Fate.LOST_TO_1
    return AtomState.two(), Fate.LOST_TO_2


def reflection_branches(state: AtomState, amps):
    """Probabilities of (reflected, lost_to_1, lost_to_2)."""
    p_refl = abs(state.c1 * amps.r1) ** 2 + abs(state.c2 * amps.r2) ** 2
    w1 = state.p1 * (1.0 - abs(amps.r1) ** 2)
    w2 = state.p2 * (1.0 - abs(amps.r2) ** 2)
    return p_refl, w1, w2


def readout(state: AtomState, model: ReadoutModel, rng) -> Level:
    """Born-rule level sample, then detector error. Two uniform draws."""
    physical = Level.ONE if rng.random() < state.p1 else Level.TWO
    u = rng.random()
    if model.mode == "poisson":
        mean = model.mean_dark if physical is Level.ONE else model.mean_bright
        return Level.TWO if poisson_from_uniform(u, mean) > model.threshold else Level.ONE
    if physical is Level.ONE:
        return Level.TWO if u < model.err_dark else Level.ONE
    return Level.ONE if u < model.err_bright else Level.TWO


# -- closed forms used for calibration ---------------------------------------


def rabi_fringe(theta, rot: RotationModel, readout_model: ReadoutModel = IDEAL_READOUT):
    """Mean probability of reading |2> after rotating |2> by ``theta``."""
    import numpy as np

    p2 = 0.5 * (1.0 + rot.visibility * np.cos(theta))
    return readout_model.err_dark + readout_model.contrast * p2


def fringe_visibility(rot: RotationModel, readout_model: ReadoutModel, prep: PrepModel = IDEAL_PREP):
    """Visibility of a Rabi fringe as observed through preparation and readout."""
    f = prep.unpumped_fraction()
    return rot.visibility * readout_model.contrast * (1.0 - 2.0 * f)


def no_input_false_positive(rot: RotationModel, prep: PrepModel, readout_model: ReadoutModel, postselect=True):
    """P(declared |2>) for the full protocol without an input photon.

    A pumped atom sees a total rotation pi + d1 + d2 and ends in |2> with
    probability (1 - V^2)/2; an unpumped one (starting in |1>) with (1 + V^2)/2.
    """
    v2 = rot.visibility ** 2
    f = prep.unpumped_fraction(postselect)
    p2 = (1 - f) * (1 - v2) / 2 + f * (1 + v2) / 2
    return readout_model.err_dark + readout_model.contrast * p2


@dataclass(frozen=True)
class Calibration:
    rot: RotationModel
    prep: PrepModel
    readout: ReadoutModel
    targets: dict = field(default_factory=dict)


def calibrate_models(fringe_visibility_target=0.97, dark_rate_target=0.029, acceptance_target=0.87,
                     prep: PrepModel = PrepModel(), axis_phase=0.0) -> Calibration:
    """Fit the imperfection models to the three aggregate figures.

    * ``success_prob`` reproduces the herald acceptance fraction,
    * a symmetric readout error ``e`` and rotation visibility ``V`` satisfy
      fringe visibility ``V (1 - 2e)(1 - 2f) = target`` and the no-input
      false-positive rate ``= dark_rate_target`` simultaneously.
    """
    lo, hi = prep.p_accept_unpumped(), prep.p_accept_pumped()
    if not lo < acceptance_target < hi:
        raise ParameterError("acceptance target not reachable with these Poisson means")
    s = (acceptance_target - lo) / (hi - lo)
    prep = PrepModel(prep.mean_bright, prep.mean_dark, prep.accept_threshold, s)
    f = prep.unpumped_fraction()

    def models(e):
        v = fringe_visibility_target / ((1 - 2 * e) * (1 - 2 * f))
        return RotationModel(min(v, 1.0), axis_phase), ReadoutModel(err_bright=e, err_dark=e)

    def resid(e):
        rot, ro = models(e)
        return no_input_false_positive(rot, prep, ro) - dark_rate_target

    e_max = 0.5 * (1 - fringe_visibility_target / (1 - 2 * f))
    if resid(0.0) * resid(e_max) > 0:
        raise ParameterError("fringe visibility and dark-rate targets are incompatible")
    e = optimize.brentq(resid, 0.0, e_max, xtol=1e-16, rtol=1e-15)
    rot, ro = models(e)
    return Calibration(rot, prep, ro, {
        "fringe_visibility": fringe_visibility_target,
        "dark_rate": dark_rate_target,
        "acceptance": acceptance_target,
    })


@lru_cache(maxsize=1)
def default_calibration() -> Calibration:
    return calibrate_models()

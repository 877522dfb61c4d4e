"""Closed-form detection-efficiency algebra for coherent-pulse characterisation.

The reflection probability ``r`` is an input here (the measured pulse average),
not something recomputed from the cavity model.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Optional

from scipy import stats

from .errors import DomainError, ParameterError


def _check_prob(name, v):
    if not (math.isfinite(v) and 0.0 <= v <= 1.0):
        raise ParameterError(f"{name} must be a probability, got {v!r}")


@dataclass(frozen=True)
class PoissonStats:
    nbar: float
    p0: float
    p1: float
    p2: float
    p_ge3: float


def poisson_stats(nbar) -> PoissonStats:
    if not (math.isfinite(nbar) and nbar >= 0):
        raise ParameterError(f"nbar must be >= 0, got {nbar!r}")
    e = math.exp(-nbar)
    p0, p1, p2 = e, nbar * e, 0.5 * nbar * nbar * e
    # sf avoids the cancellation in 1 - (p0 + p1 + p2) at small nbar
    tail = float(stats.poisson.sf(2, nbar))
    return PoissonStats(nbar, p0, p1, p2, tail)


@dataclass(frozen=True)
class ScenarioProbs:
    """Probabilities behind a single SPCM click in the trigger interval."""

    p1: float
    p2: float
    p_det: float
    p_det_refl: float
    p_det_abs: float
    p_dark: float

    @property
    def single(self):
        return self.p1 * self.p_det

    @property
    def two_reflected(self):
        return self.p2 * self.p_det_refl

    @property
    def two_one_lost(self):
        return self.p2 * self.p_det_abs

    @property
    def p_tot(self):
        return self.p_dark + self.single + self.two_reflected + self.two_one_lost

    def fractions(self):
        t = self.p_tot
        return {
            "dark": self.p_dark / t,
            "single": self.single / t,
            "two_reflected": self.two_reflected / t,
            "two_one_lost": self.two_one_lost / t,
        }


def scenario_probs(nbar, r, epsilon, p_dark) -> ScenarioProbs:
    _check_prob("r", r)
    _check_prob("epsilon", epsilon)
    _check_prob("p_dark", p_dark)
    ps = poisson_stats(nbar)
    return ScenarioProbs(
        p1=ps.p1,
        p2=ps.p2,
        p_det=r * epsilon,
        p_det_refl=2.0 * r * r * epsilon * (1.0 - epsilon),
        p_det_abs=2.0 * r * epsilon * (1.0 - r),
        p_dark=p_dark,
    )


def _single_photon_limit(s, nbar):
    # nbar -> 0 without dark counts: every click comes from a lone photon, so
    # the corrected and measured efficiencies coincide (continuous extension)
    return nbar == 0.0 and s.p_dark == 0.0 and s.p_det > 0.0


def eta_cond_n1(eta_cond_measured, nbar, r, epsilon, p_dark):
    """Single-photon conditional efficiency from the coherent-pulse measurement.

    Removes dark clicks and two-photon pulses (one photon detected, the other
    reflected or lost) from the measured conditional efficiency; three or more
    photons are neglected.
    """
    _check_prob("eta_cond_measured", eta_cond_measured)
    s = scenario_probs(nbar, r, epsilon, p_dark)
    if _single_photon_limit(s, nbar):
        return float(eta_cond_measured)
    den = s.single
    if den <= 0.0:
        raise DomainError("p1 * p_det is zero: no single-photon clicks (check nbar, r, epsilon)")
    return (s.p_tot * eta_cond_measured - 0.5 * s.two_one_lost) / den


def forward_eta_cond(eta_n1, nbar, r, epsilon, p_dark):
    """Conditional efficiency a coherent-pulse experiment would measure.

    Exact inverse of :func:`eta_cond_n1`.
    """
    _check_prob("eta_cond_n1", eta_n1)
    s = scenario_probs(nbar, r, epsilon, p_dark)
    if _single_photon_limit(s, nbar):
        return float(eta_n1)
    t = s.p_tot
    if t <= 0.0:
        raise DomainError("no single-click events: p_tot is zero")
    return (s.single * eta_n1 + 0.5 * s.two_one_lost) / t


def eta_unconditional(eta_n1, r):
    """Detection probability for one impinging photon without post-selection.

    A photon that is not reflected projects the atom and leaves a 50% guess.
    """
    _check_prob("eta_cond_n1", eta_n1)
    _check_prob("r", r)
    return r * eta_n1 + 0.5 * (1.0 - r)


def concat_efficiency(eta, r, m):
    """Detection probability with ``m`` devices in series: eta * sum_i (r (1 - eta))^i."""
    _check_prob("eta", eta)
    _check_prob("r", r)
    if int(m) != m or m < 1:
        raise ParameterError(f"m must be a positive integer, got {m!r}")
    x = r * (1.0 - eta)
    return sum(eta * x ** i for i in range(int(m)))


def concat_limit(eta, r):
    _check_prob("eta", eta)
    _check_prob("r", r)
    x = r * (1.0 - eta)
    if x >= 1.0:
        raise DomainError("series diverges: r * (1 - eta) >= 1")
    return eta / (1.0 - x)


def mode_mismatch_fraction(q, r):
    """Share of SPCM-detected photons that never interacted with the cavity."""
    _check_prob("q", q)
    _check_prob("r", r)
    den = 1.0 - q + r * q
    if den == 0.0:
        raise DomainError("undefined for q = 1 and r = 0")
    return (1.0 - q) / den


def off_equator_error(r1_mag, r2_mag):
    """Readout error after one reflection with unequal amplitude magnitudes.

    The reflected state (|r1|, -|r2|)/norm is tilted off the equator; an ideal
    pi/2 pulse then leaves (|r1| - |r2|)^2 / (2 (|r1|^2 + |r2|^2)) in |1>.
    """
    a, b = abs(r1_mag), abs(r2_mag)
    if a == 0.0 and b == 0.0:
        raise DomainError("both reflection amplitudes vanish")
    return (a - b) ** 2 / (2.0 * (a * a + b * b))


@dataclass(frozen=True)
class EfficiencyReport:
    eta_cond: float
    eta_cond_n1: float
    eta_uncond: float
    r: float
    poisson: PoissonStats
    scenarios: ScenarioProbs
    breakdown: dict = field(default_factory=dict)


def efficiency_report(eta_cond_measured=0.821, nbar=0.115, r=0.66, epsilon=0.55, p_dark=1.6e-4) -> EfficiencyReport:
    s = scenario_probs(nbar, r, epsilon, p_dark)
    n1 = eta_cond_n1(eta_cond_measured, nbar, r, epsilon, p_dark)
    return EfficiencyReport(
        eta_cond=eta_cond_measured,
        eta_cond_n1=n1,
        eta_uncond=eta_unconditional(n1, r),
        r=r,
        poisson=poisson_stats(nbar),
        scenarios=s,
        breakdown={
            "p_tot * eta_cond": s.p_tot * eta_cond_measured,
            "half two-photon-loss term": 0.5 * s.two_one_lost,
            "p1 * p_det": s.single,
            "reflected, correct": r * n1,
            "not reflected, guess": 0.5 * (1.0 - r),
        },
    )


@dataclass(frozen=True)
class BudgetItem:
    name: str
    value: Optional[float]
    source: str
    note: str = ""


def imperfection_budget(params, readout=None, rot=None, *, r=0.66, amplitudes=None,
                        state_manipulation_estimate=0.03, detuning=0.0):
    """Itemised efficiency reductions.

    ``amplitudes`` overrides the cavity-model reflection amplitudes ``(r1, r2)``
    used for the unequal-reflectivity item. ``rot``/``readout`` feed the
    modelled state-manipulation item; pass ideal models to switch it off.
    """
    from . import atom, cavity

    if amplitudes is None:
        amps = cavity.reflection_amplitudes(params, detuning)
        r1, r2 = amps.r1, amps.r2
    else:
        r1, r2 = amplitudes
    rot = rot if rot is not None else atom.RotationModel()
    readout = readout if readout is not None else atom.ReadoutModel()
    # photon present: ideal final state |2>, error from two noisy pulses and readout
    manip = readout.err_bright + readout.contrast * (1.0 - rot.visibility ** 2) / 2.0
    return [
        BudgetItem("mode_mismatch", mode_mismatch_fraction(params.q, r), "computed",
                   "(1-q)/(1-q+rq) of SPCM-detected photons bypass the cavity"),
        BudgetItem("state_manipulation", state_manipulation_estimate, "configured estimate",
                   "preparation, rotation and readout"),
        BudgetItem("state_manipulation_model", manip, "computed",
                   "from rotation visibility and readout error"),
        BudgetItem("unequal_reflectivity", off_equator_error(abs(r1), abs(r2)), "computed",
                   "off-equator tilt after one reflection"),
        BudgetItem("frequency_instability", None, "not modelled", "laser/cavity jitter <= 300 kHz"),
        BudgetItem("light_shifts", None, "not modelled", "fluctuating atomic levels"),
        BudgetItem("birefringence", None, "not modelled", "non-circular polarization components"),
    ]

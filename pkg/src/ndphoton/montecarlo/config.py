from __future__ import annotations

import math
from dataclasses import asdict, dataclass, field, replace
from typing import NamedTuple, Optional, Tuple

from ..atom import (IDEAL_PREP, IDEAL_READOUT, IDEAL_ROTATION, Fate, Level, PrepModel, ReadoutModel,
                    RotationModel)
from ..cavity import SystemParams
from ..errors import ParameterError


@dataclass(frozen=True)
class ProtocolConfig:
    """Everything one Monte Carlo batch needs.

    ``forced_photons`` replaces the Poisson photon number by a fixed count and
    ``amplitudes`` replaces the cavity-model ``(r1, r2)``; both are test and
    diagnostic hooks.
    """

    params: SystemParams = field(default_factory=SystemParams)
    rot: RotationModel = field(default_factory=RotationModel)
    prep: PrepModel = field(default_factory=PrepModel)
    readout: ReadoutModel = field(default_factory=ReadoutModel)
    detuning: float = 0.0
    n_trials: int = 100_000
    seed: int = 0
    postselect_prep: bool = True
    jitter_enabled: bool = False
    forced_photons: Optional[int] = None
    amplitudes: Optional[Tuple[complex, complex]] = None

    def __post_init__(self):
        if int(self.n_trials) != self.n_trials or self.n_trials < 1:
            raise ParameterError(f"n_trials must be a positive integer, got {self.n_trials!r}")
        if not math.isfinite(self.detuning):
            raise ParameterError("detuning must be finite")
        if self.forced_photons is not None and (int(self.forced_photons) != self.forced_photons
                                                or self.forced_photons < 0):
            raise ParameterError("forced_photons must be a nonnegative integer")
        if self.amplitudes is not None:
            r1, r2 = (complex(a) for a in self.amplitudes)
            if abs(r1) > 1 + 1e-12 or abs(r2) > 1 + 1e-12:
                raise ParameterError("reflection amplitudes must satisfy |r| <= 1")
            object.__setattr__(self, "amplitudes", (r1, r2))
        if not -(2 ** 63) <= int(self.seed) < 2 ** 64:
            raise ParameterError("seed must fit in 64 bits")

    @classmethod
    def ideal(cls, params: Optional[SystemParams] = None, **kwargs):
        """Perfect preparation, rotations and readout; optics as given."""
        return cls(params=params or SystemParams(), rot=IDEAL_ROTATION, prep=IDEAL_PREP,
                   readout=IDEAL_READOUT, **kwargs)

    def replace(self, **changes):
        return replace(self, **changes)

    def to_dict(self):
        d = asdict(self)
        d["params"]["kappa_ext"] = self.params.kappa_ext
        if self.amplitudes is not None:
            d["amplitudes"] = [[a.real, a.imag] for a in self.amplitudes]
        return d


@dataclass(frozen=True)
class TrialRecord:
    n_photons: int
    fates: Tuple[Fate, ...]
    spcm_clicks: int
    declared: Level
    prep_accepted: bool
    dark_click: bool = False

    @property
    def photon_detected(self):
        return self.declared is Level.TWO


class Estimate(NamedTuple):
    value: float
    se: float
    n: int

    @classmethod
    def binomial(cls, k, n):
        """Proportion with its Wald standard error; NaN when nothing was observed."""
        if n == 0:
            return cls(math.nan, math.nan, 0)
        p = k / n
        return cls(p, math.sqrt(p * (1.0 - p) / n), int(n))


# integer tallies produced per chunk and summed; order-independent
COUNT_KEYS = (
    "trials", "used", "photons", "photons_ext_reflected",
    "click_ge1", "click_ge1_two", "click_one", "click_one_two",
    "n1", "n1_two", "n0", "n0_two",
    "one_click_dark", "one_click_single", "one_click_two_reflected", "one_click_two_one_lost",
    "one_click_other",
)


@dataclass(frozen=True)
class EstimatorSet:
    eta_cond_hat: Estimate        # declared |2> given exactly one SPCM click
    eta_cond_ge1_hat: Estimate    # declared |2> given at least one click
    eta_uncond_hat: Estimate
    dark_rate_hat: Estimate
    refl_prob_hat: Estimate
    p_one_click_hat: Estimate
    acceptance_hat: Estimate
    counts: dict

    @classmethod
    def from_counts(cls, c):
        return cls(
            eta_cond_hat=Estimate.binomial(c["click_one_two"], c["click_one"]),
            eta_cond_ge1_hat=Estimate.binomial(c["click_ge1_two"], c["click_ge1"]),
            eta_uncond_hat=Estimate.binomial(c["n1_two"], c["n1"]),
            dark_rate_hat=Estimate.binomial(c["n0_two"], c["n0"]),
            refl_prob_hat=Estimate.binomial(c["photons_ext_reflected"], c["photons"]),
            p_one_click_hat=Estimate.binomial(c["click_one"], c["used"]),
            acceptance_hat=Estimate.binomial(c["used"], c["trials"]),
            counts=dict(c),
        )

    def estimates(self):
        return {
            name: getattr(self, name)
            for name in ("eta_cond_hat", "eta_cond_ge1_hat", "eta_uncond_hat", "dark_rate_hat",
                         "refl_prob_hat", "p_one_click_hat", "acceptance_hat")
        }

    def to_dict(self):
        def clean(x):
            return None if isinstance(x, float) and math.isnan(x) else x

        out = {k: {"value": clean(e.value), "se": clean(e.se), "n": e.n} for k, e in self.estimates().items()}
        out["counts"] = dict(self.counts)
        return out

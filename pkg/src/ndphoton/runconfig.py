"""TOML run configuration: defaults, validation and conversion to model objects.

Frequencies are given in MHz in the file and converted to angular units here.
"""
from __future__ import annotations

import copy
import json
import os
import sys

if sys.version_info >= (3, 11):
    import tomllib
else:
    import tomli as tomllib

from .atom import PrepModel, ReadoutModel, RotationModel
from .cavity import SystemParams, mhz
from .errors import ParameterError
from .montecarlo import ProtocolConfig

ENV_CONFIG = "NDPHOTON_CONFIG"

_rot, _prep, _ro = RotationModel(), PrepModel(), ReadoutModel()

DEFAULTS = {
    "seed": 0,
    "trials": 100_000,
    "params": {
        "g_mhz": 6.7,
        "kappa_mhz": 2.5,
        "gamma_mhz": 3.0,
        "mirror_transmission_ppm": 95.0,
        "loss_ppm": 8.0,
        "q": 0.92,
        "epsilon": 0.55,
        "nbar": 0.115,
        "p_dark": 1.6e-4,
        "jitter_mhz": 0.3,
    },
    "rotation": {"visibility": _rot.visibility, "axis_phase": _rot.axis_phase},
    "prep": {
        "mean_bright": _prep.mean_bright,
        "mean_dark": _prep.mean_dark,
        "accept_threshold": _prep.accept_threshold,
        "success_prob": _prep.success_prob,
    },
    "readout": {
        "threshold": _ro.threshold,
        "err_bright": _ro.err_bright,
        "err_dark": _ro.err_dark,
        "mode": _ro.mode,
        "mean_bright": None,
        "mean_dark": None,
    },
    "protocol": {
        "detuning_mhz": 0.0,
        "postselect_prep": True,
        "jitter_enabled": False,
        "forced_photons": None,
        "workers": 1,
        "backend": "auto",
    },
    "analytics": {"eta_cond_measured": 0.821, "r": 0.66, "state_manipulation": 0.03},
    "spectrum": {"span_mhz": 15.0, "points": 601, "states": "both"},
}


class ConfigError(ValueError):
    pass


def _merge(base, override, path=""):
    for key, value in override.items():
        where = f"{path}{key}"
        if key not in base:
            raise ConfigError(f"unknown config key {where!r}")
        if isinstance(base[key], dict):
            if not isinstance(value, dict):
                raise ConfigError(f"config key {where!r} must be a table")
            _merge(base[key], value, where + ".")
        else:
            base[key] = value


def load(path=None, overrides=None) -> "RunConfig":
    """Resolve defaults < config file < explicit overrides.

    Without ``path`` the file named by ``$NDPHOTON_CONFIG`` is used, if set.
    """
    data = copy.deepcopy(DEFAULTS)
    path = path or os.environ.get(ENV_CONFIG) or None
    if path:
        try:
            with open(path, "rb") as fh:
                raw = tomllib.load(fh)
        except OSError as exc:
            raise ConfigError(f"cannot read config {path}: {exc}") from exc
        except tomllib.TOMLDecodeError as exc:
            raise ConfigError(f"invalid TOML in {path}: {exc}") from exc
        _merge(data, raw)
    if overrides:
        _merge(data, overrides)
    cfg = RunConfig(data, source=str(path) if path else None)
    cfg.protocol_config()  # validate eagerly
    return cfg


class RunConfig:
    def __init__(self, data, source=None):
        self.data = data
        self.source = source

    def __getitem__(self, key):
        return self.data[key]

    @property
    def seed(self):
        return int(self.data["seed"])

    @property
    def trials(self):
        return int(self.data["trials"])

    def to_json(self):
        return json.dumps(self.data, sort_keys=True, separators=(",", ":"))

    def system_params(self) -> SystemParams:
        p = self.data["params"]
        try:
            return SystemParams(
                g=mhz(float(p["g_mhz"])), kappa=mhz(float(p["kappa_mhz"])), gamma=mhz(float(p["gamma_mhz"])),
                mirror_transmission_ppm=float(p["mirror_transmission_ppm"]), loss_ppm=float(p["loss_ppm"]),
                q=float(p["q"]), epsilon=float(p["epsilon"]), nbar=float(p["nbar"]), p_dark=float(p["p_dark"]),
                freq_jitter_sigma=mhz(float(p["jitter_mhz"])),
            )
        except (TypeError, ValueError) as exc:
            if isinstance(exc, ParameterError):
                raise ConfigError(f"[params] {exc}") from exc
            raise ConfigError(f"[params] {exc}") from exc

    def models(self):
        r, pr, ro = self.data["rotation"], self.data["prep"], self.data["readout"]
        try:
            rot = RotationModel(float(r["visibility"]), float(r["axis_phase"]))
            prep = PrepModel(float(pr["mean_bright"]), float(pr["mean_dark"]), int(pr["accept_threshold"]),
                             float(pr["success_prob"]))
            readout = ReadoutModel(float(ro["threshold"]), float(ro["err_bright"]), float(ro["err_dark"]),
                                   str(ro["mode"]), ro["mean_bright"], ro["mean_dark"])
        except (TypeError, ValueError) as exc:
            raise ConfigError(f"model config: {exc}") from exc
        return rot, prep, readout

    def protocol_config(self, **changes) -> ProtocolConfig:
        rot, prep, readout = self.models()
        pc = self.data["protocol"]
        try:
            cfg = ProtocolConfig(
                params=self.system_params(), rot=rot, prep=prep, readout=readout,
                detuning=mhz(float(pc["detuning_mhz"])), n_trials=self.trials, seed=self.seed,
                postselect_prep=bool(pc["postselect_prep"]), jitter_enabled=bool(pc["jitter_enabled"]),
                forced_photons=pc["forced_photons"],
            )
            return cfg.replace(**changes) if changes else cfg
        except (TypeError, ValueError) as exc:
            raise ConfigError(str(exc)) from exc

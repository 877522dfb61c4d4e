"""``ndphoton`` command line: spectrum | simulate | analytic | sweep | concat.

Every command writes one table (CSV or JSON lines) to ``--out`` or stdout. The
resolved configuration and seed are embedded in the output so that a table
can be regenerated from itself.
"""
from __future__ import annotations

import argparse
import csv
import io
import json
import math
import sys

import numpy as np

from . import __version__, analytics, runconfig
from .cavity import mhz, reflection_spectrum
from .errors import DomainError, ParameterError
from .montecarlo import concatenated_batch, pulse_oracle, run_batch, single_photon_oracle
from .montecarlo import kernels as K
from .runconfig import ConfigError

EXIT_OK, EXIT_CONFIG, EXIT_RUNTIME = 0, 2, 3

# sweep name -> (config section, key); frequencies are in MHz
SWEEP_PARAMS = {
    "g": ("params", "g_mhz"),
    "kappa": ("params", "kappa_mhz"),
    "gamma": ("params", "gamma_mhz"),
    "jitter": ("params", "jitter_mhz"),
    "q": ("params", "q"),
    "epsilon": ("params", "epsilon"),
    "nbar": ("params", "nbar"),
    "p_dark": ("params", "p_dark"),
    "loss_ppm": ("params", "loss_ppm"),
    "mirror_transmission_ppm": ("params", "mirror_transmission_ppm"),
    "detuning": ("protocol", "detuning_mhz"),
    "visibility": ("rotation", "visibility"),
    "success_prob": ("prep", "success_prob"),
    "err_bright": ("readout", "err_bright"),
    "err_dark": ("readout", "err_dark"),
    "r": ("analytics", "r"),
    "eta_cond_measured": ("analytics", "eta_cond_measured"),
    "m": (None, None),
}


# ---------------------------------------------------------------- output

def _num(x):
    if x is None:
        return None
    if isinstance(x, (bool, np.bool_)):
        return int(x)
    if isinstance(x, (int, np.integer)):
        return int(x)
    if isinstance(x, (float, np.floating)):
        x = float(x)
        return x if not math.isfinite(x) else float(f"{x:.6g}")
    return x


def _csv_cell(x):
    x = _num(x)
    if x is None:
        return ""
    if isinstance(x, float):
        return f"{x:.6g}"
    return str(x)


def render(command, cfg, header, rows, fmt):
    buf = io.StringIO()
    if fmt == "csv":
        buf.write(f"# ndphoton {__version__} {command}\n")
        buf.write(f"# seed={cfg.seed}\n")
        buf.write(f"# config={cfg.to_json()}\n")
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(header)
        for row in rows:
            w.writerow([_csv_cell(v) for v in row])
    else:
        meta = {"command": command, "version": __version__, "seed": cfg.seed, "config": cfg.data}
        buf.write(json.dumps(meta, sort_keys=True) + "\n")
        for row in rows:
            rec = {}
            for k, v in zip(header, row):
                v = _num(v)
                rec[k] = None if isinstance(v, float) and not math.isfinite(v) else v
            buf.write(json.dumps(rec) + "\n")
    return buf.getvalue()


def emit(args, cfg, header, rows, out=None):
    text = render(args.command, cfg, header, rows, args.format)
    path = out if out is not None else args.out
    if path in (None, "-"):
        sys.stdout.write(text)
    else:
        with open(path, "w", newline="") as fh:
            fh.write(text)


# ---------------------------------------------------------------- helpers

def parse_range(spec, integer=False):
    """``start:stop:num`` (inclusive linspace) or a comma-separated list."""
    try:
        if ":" in spec:
            a, b, n = spec.split(":")
            n = int(n)
            if n < 1:
                raise ValueError
            vals = np.linspace(float(a), float(b), n)
        else:
            vals = np.array([float(v) for v in spec.split(",") if v.strip()])
    except ValueError:
        raise ConfigError(f"invalid range {spec!r}; use start:stop:num or a,b,c") from None
    if vals.size == 0 or not np.all(np.isfinite(vals)):
        raise ConfigError(f"invalid range {spec!r}")
    if integer:
        if np.any(vals != np.round(vals)):
            raise ConfigError(f"range {spec!r} must contain integers")
        return [int(v) for v in vals]
    return [float(v) for v in vals]


def _single_device(cfg):
    """(eta, r) of one device from the measured conditional efficiency."""
    a, p = cfg["analytics"], cfg["params"]
    n1 = analytics.eta_cond_n1(a["eta_cond_measured"], p["nbar"], a["r"], p["epsilon"], p["p_dark"])
    return analytics.eta_unconditional(n1, a["r"]), float(a["r"])


# ---------------------------------------------------------------- commands

def cmd_spectrum(args, cfg):
    sp = cfg["spectrum"]
    if args.grid:
        grid = parse_range(args.grid)
    else:
        span = float(args.span if args.span is not None else sp["span_mhz"])
        points = int(args.points if args.points is not None else sp["points"])
        if points < 2 or span <= 0:
            raise ConfigError("spectrum needs points >= 2 and span > 0")
        grid = np.linspace(-span, span, points)
    states = args.states or sp["states"]
    if states not in ("both", "coupled", "uncoupled"):
        raise ConfigError(f"states must be both, coupled or uncoupled, got {states!r}")
    params = cfg.system_params()
    grid_w = mhz(np.asarray(grid, dtype=float))
    header, cols = ["detuning_mhz"], [np.asarray(grid, dtype=float)]
    if states in ("both", "uncoupled"):
        s = reflection_spectrum(params, False, grid_w)
        header += ["r1_abs2", "r1_phase"]
        cols += [s[:, 1], s[:, 2]]
    if states in ("both", "coupled"):
        s = reflection_spectrum(params, True, grid_w)
        header += ["r2_abs2", "r2_phase"]
        cols += [s[:, 1], s[:, 2]]
    emit(args, cfg, header, list(zip(*cols)))


def cmd_simulate(args, cfg):
    config = cfg.protocol_config()
    pc = cfg["protocol"]
    est = run_batch(config, backend=pc["backend"], workers=int(pc["workers"]),
                    return_records=bool(args.dump_trials))
    if args.dump_trials:
        est, records = est
    oracle = pulse_oracle(config)
    ref = {
        "eta_cond_hat": oracle.eta_cond, "eta_cond_ge1_hat": oracle.eta_cond_ge1,
        "eta_uncond_hat": oracle.eta_single, "dark_rate_hat": oracle.dark_rate,
        "refl_prob_hat": oracle.refl_prob, "p_one_click_hat": oracle.p_one_click,
        "acceptance_hat": config.prep.acceptance() if config.postselect_prep else 1.0,
    }
    rows = [(name, e.value, e.se, e.n, ref[name]) for name, e in est.estimates().items()]
    rows += [(f"count_{k}", v, None, None, None) for k, v in est.counts.items()]
    emit(args, cfg, ["quantity", "value", "se", "n", "oracle"], rows)
    if args.dump_trials:
        names = ["trial", "n_photons", "n_bypassed", "n_reflected", "n_lost_to_1", "n_lost_to_2",
                 "spcm_clicks", "prep_accepted", "declared_two", "dark_click"]
        order = [K.N_PHOTONS, K.N_BYPASS, K.N_REFL, K.N_LOST1, K.N_LOST2, K.CLICKS, K.ACCEPTED,
                 K.DECLARED, K.DARK]
        dump = [(i, *(int(records[i, c]) for c in order)) for i in range(len(records))]
        emit(args, cfg, names, dump, out=args.dump_trials)


def cmd_analytic(args, cfg):
    a, p = cfg["analytics"], cfg["params"]
    params = cfg.system_params()
    rot, _, readout = cfg.models()
    rep = analytics.efficiency_report(a["eta_cond_measured"], p["nbar"], a["r"], p["epsilon"], p["p_dark"])
    ps, sc = rep.poisson, rep.scenarios
    # (section, quantity, value, decimals shown as percent, reference figure)
    rows = [
        ("poisson", "p0", ps.p0, 1, ""),
        ("poisson", "p1", ps.p1, 1, "10.3%"),
        ("poisson", "p2", ps.p2, 1, "0.6%"),
        ("poisson", "p_ge3", ps.p_ge3, 2, "0.02%"),
        ("scenarios", "dark", sc.p_dark, 3, ""),
        ("scenarios", "single", sc.single, 2, ""),
        ("scenarios", "two_reflected", sc.two_reflected, 3, ""),
        ("scenarios", "two_one_lost", sc.two_one_lost, 3, ""),
        ("scenarios", "p_tot", sc.p_tot, 2, ""),
    ]
    rows += [("scenarios", f"fraction_{k}", v, 1, "") for k, v in sc.fractions().items()]
    rows += [
        ("efficiency", "eta_cond_measured", rep.eta_cond, 1, "82.1%"),
        ("efficiency", "eta_cond_n1", rep.eta_cond_n1, 0, "87%"),
        ("efficiency", "eta_uncond", rep.eta_uncond, 0, "74%"),
    ]
    for item in analytics.imperfection_budget(params, readout, rot, r=a["r"],
                                              state_manipulation_estimate=a["state_manipulation"],
                                              detuning=mhz(cfg["protocol"]["detuning_mhz"])):
        paper = {"mode_mismatch": "12(3)%", "state_manipulation": "3%", "unequal_reflectivity": "0.4%"}
        rows.append(("budget", item.name, item.value, 1, paper.get(item.name, item.source)))
    eta, r = rep.eta_uncond, rep.r
    paper = {1: "74%", 2: "87%", 3: "89%"}
    for m in range(1, int(args.m_max) + 1):
        rows.append(("concat", f"m={m}", analytics.concat_efficiency(eta, r, m), 0, paper.get(m, "")))
    rows.append(("concat", "limit", analytics.concat_limit(eta, r), 1, ""))

    def shown(v, d):
        return "" if v is None else f"{100.0 * v:.{d}f}%"

    table = [(s, q, v, shown(v, d), ref) for s, q, v, d, ref in rows]
    emit(args, cfg, ["section", "quantity", "value", "percent", "paper"], table)


def _sweep_row(cfg, name, value, mc):
    if name == "m":
        eta, r = _single_device(cfg)
        row = [value, analytics.concat_efficiency(eta, r, value), analytics.concat_limit(eta, r)]
        if mc:
            e = concatenated_batch(cfg.protocol_config(), value, eta=eta, r=r)
            row += [e.value, e.se]
        return row
    config = cfg.protocol_config()
    o = single_photon_oracle(config)
    exact = pulse_oracle(config)
    a, p = cfg["analytics"], cfg["params"]
    corrected = analytics.eta_cond_n1(a["eta_cond_measured"], p["nbar"], a["r"], p["epsilon"], p["p_dark"])
    eta, r = analytics.eta_unconditional(corrected, a["r"]), a["r"]
    row = [
        value, o.r_eff, o.eta_n1, o.eta_cond, exact.eta_cond, o.eta_single, o.dark_rate, o.p_tot,
        a["eta_cond_measured"], corrected, corrected - a["eta_cond_measured"], eta,
        analytics.concat_efficiency(eta, r, 2), analytics.concat_efficiency(eta, r, 3),
        analytics.mode_mismatch_fraction(p["q"], a["r"]),
    ]
    if mc:
        est = run_batch(config, backend=cfg["protocol"]["backend"], workers=int(cfg["protocol"]["workers"]))
        row += [est.eta_cond_hat.value, est.eta_cond_hat.se, est.p_one_click_hat.value]
    return row


def cmd_sweep(args, cfg):
    name = args.parameter
    if name not in SWEEP_PARAMS:
        raise ConfigError(f"unknown sweep parameter {name!r}; choose from {', '.join(SWEEP_PARAMS)}")
    values = parse_range(args.range, integer=(name == "m"))
    if name == "m":
        header = ["m", "eta_concat", "eta_limit"] + (["mc_eta_concat", "mc_se"] if args.mc else [])
    else:
        header = ["value", "r_model", "eta_n1_model", "eta_cond_model", "eta_cond_exact",
                  "eta_single_model", "dark_rate_model", "p_tot_model", "eta_cond_raw",
                  "eta_cond_n1_corrected", "correction", "eta_uncond", "concat_m2", "concat_m3",
                  "mode_mismatch"]
        if args.mc:
            header += ["mc_eta_cond", "mc_eta_cond_se", "mc_p_one_click"]
    rows = []
    for v in values:
        if name == "m":
            rows.append(_sweep_row(cfg, name, v, args.mc))
            continue
        section, key = SWEEP_PARAMS[name]
        point = runconfig.RunConfig(json.loads(json.dumps(cfg.data)), cfg.source)
        point.data[section][key] = v
        point.protocol_config()  # validate the modified point
        rows.append(_sweep_row(point, name, v, args.mc))
    emit(args, cfg, [name if h == "value" else h for h in header], rows)


def cmd_concat(args, cfg):
    eta, r = _single_device(cfg)
    header = ["m", "eta_concat"] + (["mc_eta_concat", "mc_se"] if args.mc else [])
    rows = []
    config = cfg.protocol_config()
    for m in range(1, int(args.m_max) + 1):
        row = [m, analytics.concat_efficiency(eta, r, m)]
        if args.mc:
            e = concatenated_batch(config, m, eta=eta, r=r)
            row += [e.value, e.se]
        rows.append(row)
    rows.append(["inf", analytics.concat_limit(eta, r)] + ([None, None] if args.mc else []))
    emit(args, cfg, header, rows)


# ---------------------------------------------------------------- parser

def build_parser():
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help=f"TOML config file (default: ${runconfig.ENV_CONFIG})")
    common.add_argument("--seed", type=int, help="64-bit base seed")
    common.add_argument("--trials", type=int, help="Monte Carlo trials")
    common.add_argument("--out", help="output file (default: stdout)")
    common.add_argument("--format", choices=("csv", "jsonl"), default="csv")
    common.add_argument("--workers", type=int, help="Monte Carlo worker threads")
    common.add_argument("--backend", choices=("auto", "numba", "numpy"))

    parser = argparse.ArgumentParser(prog="ndphoton", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=f"ndphoton {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("spectrum", parents=[common], help="reflection spectra of both atomic states")
    p.add_argument("--states", choices=("both", "coupled", "uncoupled"))
    p.add_argument("--span", type=float, help="half-width of the grid in MHz")
    p.add_argument("--points", type=int)
    p.add_argument("--grid", help="explicit grid in MHz, start:stop:num or a,b,c (write --grid=-15:15:601 for negative starts)")
    p.set_defaults(func=cmd_spectrum)

    p = sub.add_parser("simulate", parents=[common], help="Monte Carlo of the detection protocol")
    p.add_argument("--dump-trials", metavar="PATH", help="also write one row per trial")
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("analytic", parents=[common], help="closed-form efficiency report")
    p.add_argument("--m-max", type=int, default=10)
    p.set_defaults(func=cmd_analytic)

    p = sub.add_parser("sweep", parents=[common], help="scan one parameter")
    p.add_argument("parameter", help=", ".join(SWEEP_PARAMS))
    p.add_argument("range", help="start:stop:num or a,b,c (frequencies in MHz)")
    p.add_argument("--mc", action="store_true", help="add Monte Carlo columns")
    p.set_defaults(func=cmd_sweep)

    p = sub.add_parser("concat", parents=[common], help="efficiency of devices in series")
    p.add_argument("--m-max", type=int, default=10)
    p.add_argument("--mc", action="store_true")
    p.set_defaults(func=cmd_concat)
    return parser


def _overrides(args):
    o = {}
    if args.seed is not None:
        o["seed"] = args.seed
    if args.trials is not None:
        o["trials"] = args.trials
    proto = {}
    if args.workers is not None:
        proto["workers"] = args.workers
    if args.backend is not None:
        proto["backend"] = args.backend
    if proto:
        o["protocol"] = proto
    return o


def main(argv=None):
    args = build_parser().parse_args(argv)
    try:
        cfg = runconfig.load(args.config, _overrides(args))
    except (ConfigError, ParameterError) as exc:
        print(f"ndphoton: config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    try:
        args.func(args, cfg)
    except ConfigError as exc:
        print(f"ndphoton: config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (DomainError, ParameterError, OSError, ValueError) as exc:
        print(f"ndphoton: error: {exc}", file=sys.stderr)
        return EXIT_RUNTIME
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())

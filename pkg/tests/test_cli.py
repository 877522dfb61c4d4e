import csv
import io
import json
import subprocess
import sys

import numpy as np
import pytest

from ndphoton import cli, runconfig
from ndphoton.cavity import SystemParams, mhz, reflection_amplitude


def run(argv, capsys):
    code = cli.main(argv)
    out, err = capsys.readouterr()
    return code, out, err


def table(text):
    lines = [ln for ln in text.splitlines() if not ln.startswith("#")]
    rows = list(csv.DictReader(io.StringIO("\n".join(lines))))
    return rows


def meta(text):
    return {ln[2:].split("=", 1)[0]: ln[2:].split("=", 1)[1] for ln in text.splitlines()
            if ln.startswith("# ") and "=" in ln}


def test_spectrum_rows_match_formula(capsys):
    code, out, _ = run(["spectrum", "--grid=-15:15:7"], capsys)
    assert code == 0
    rows = table(out)
    assert len(rows) == 7
    p = SystemParams()
    for row in rows:
        d = float(row["detuning_mhz"])
        r1 = reflection_amplitude(p, False, mhz(d))
        r2 = reflection_amplitude(p, True, mhz(d))
        assert float(row["r1_abs2"]) == pytest.approx(abs(r1) ** 2, rel=1e-5)
        assert float(row["r2_abs2"]) == pytest.approx(abs(r2) ** 2, rel=1e-5)
    assert float(rows[0]["detuning_mhz"]) == -15 and float(rows[-1]["detuning_mhz"]) == 15


def test_spectrum_single_state_and_default_grid(capsys):
    code, out, _ = run(["spectrum", "--states", "coupled"], capsys)
    rows = table(out)
    assert code == 0 and len(rows) == 601 and set(rows[0]) == {"detuning_mhz", "r2_abs2", "r2_phase"}


def test_outputs_embed_config_and_seed(capsys):
    _, out, _ = run(["simulate", "--trials", "2000", "--seed", "77"], capsys)
    m = meta(out)
    assert m["seed"] == "77"
    cfg = json.loads(m["config"])
    assert cfg["seed"] == 77 and cfg["trials"] == 2000 and cfg["params"]["g_mhz"] == 6.7


def test_numbers_have_six_significant_digits(capsys):
    _, out, _ = run(["analytic"], capsys)
    rows = table(out)
    for row in rows:
        if row["value"]:
            mantissa = row["value"].split("e")[0].replace("-", "").replace(".", "").lstrip("0")
            assert len(mantissa) <= 6


def test_rerun_is_byte_identical(tmp_path, capsys):
    a, b = tmp_path / "a.csv", tmp_path / "b.csv"
    for path in (a, b):
        assert cli.main(["simulate", "--trials", "20000", "--seed", "5", "--out", str(path)]) == 0
    assert a.read_bytes() == b.read_bytes()
    c = tmp_path / "c.csv"
    cli.main(["simulate", "--trials", "20000", "--seed", "5", "--workers", "3", "--out", str(c)])
    # the echoed config records the worker count; the numeric table must not change
    assert table(c.read_text()) == table(a.read_text())


def test_simulate_dump_trials(tmp_path, capsys):
    dump = tmp_path / "trials.csv"
    code, out, _ = run(["simulate", "--trials", "500", "--dump-trials", str(dump)], capsys)
    assert code == 0
    rows = table(dump.read_text())
    assert len(rows) == 500
    used = sum(int(r["prep_accepted"]) for r in rows)
    counts = {r["quantity"]: r["value"] for r in table(out)}
    assert int(counts["count_used"]) == used
    for r in rows:
        n = int(r["n_photons"])
        assert n == sum(int(r[k]) for k in ("n_bypassed", "n_reflected", "n_lost_to_1", "n_lost_to_2"))


def test_analytic_report_contains_paper_figures(capsys):
    code, out, _ = run(["analytic"], capsys)
    assert code == 0
    rows = {(r["section"], r["quantity"]): r for r in table(out)}
    assert rows[("poisson", "p1")]["percent"] == "10.3%"
    assert rows[("poisson", "p2")]["percent"] == "0.6%"
    assert rows[("efficiency", "eta_cond_n1")]["percent"] == "87%"
    assert rows[("efficiency", "eta_uncond")]["percent"] == "74%"
    assert rows[("concat", "m=2")]["percent"] == "87%"
    assert rows[("concat", "m=3")]["percent"] == "89%"
    assert rows[("budget", "mode_mismatch")]["percent"] == "11.6%"
    assert sum(1 for k in rows if k[0] == "concat" and k[1].startswith("m=")) == 10


def test_jsonl_format(capsys):
    code, out, _ = run(["concat", "--m-max", "3", "--format", "jsonl"], capsys)
    lines = [json.loads(ln) for ln in out.splitlines()]
    assert code == 0 and lines[0]["command"] == "concat" and "config" in lines[0]
    assert [ln["m"] for ln in lines[1:]] == [1, 2, 3, "inf"]
    assert lines[2]["eta_concat"] == pytest.approx(0.8677, abs=1e-4)


def test_sweep_nbar_correction_grows(capsys):
    code, out, _ = run(["sweep", "nbar", "0.01:0.5:6"], capsys)
    rows = table(out)
    corr = [float(r["correction"]) for r in rows]
    assert code == 0 and len(rows) == 6
    assert all(b > a for a, b in zip(corr, corr[1:]))
    for r in rows:
        assert float(r["correction"]) == pytest.approx(float(r["eta_cond_n1_corrected"]) - float(r["eta_cond_raw"]),
                                                       abs=2e-6)


def test_sweep_q_to_one_removes_mode_mismatch(capsys):
    _, out, _ = run(["sweep", "q", "0.9,0.95,1.0"], capsys)
    mm = [float(r["mode_mismatch"]) for r in table(out)]
    assert mm[-1] == 0.0 and mm[0] > mm[1] > 0


def test_sweep_m_reproduces_series(capsys):
    _, out, _ = run(["sweep", "m", "1,2,3", "--mc", "--trials", "100000"], capsys)
    rows = table(out)
    vals = [float(r["eta_concat"]) for r in rows]
    assert vals == pytest.approx([0.741, 0.868, 0.889], abs=1e-3)
    for r in rows:
        assert abs(float(r["mc_eta_concat"]) - float(r["eta_concat"])) < 4 * float(r["mc_se"])


def test_sweep_with_monte_carlo_columns(capsys):
    code, out, _ = run(["sweep", "g", "5,8", "--mc", "--trials", "20000"], capsys)
    rows = table(out)
    assert code == 0 and "mc_eta_cond" in rows[0] and rows[0]["g"] == "5"


def test_config_file_and_env(tmp_path, capsys, monkeypatch):
    cfg = tmp_path / "run.toml"
    cfg.write_text('seed = 9\n[params]\ng_mhz = 10.0\nq = 1.0\n[spectrum]\npoints = 11\n')
    code, out, _ = run(["spectrum", "--config", str(cfg)], capsys)
    assert code == 0 and len(table(out)) == 11
    assert json.loads(meta(out)["config"])["params"]["g_mhz"] == 10.0
    monkeypatch.setenv(runconfig.ENV_CONFIG, str(cfg))
    code, out, _ = run(["spectrum", "--seed", "4"], capsys)
    m = meta(out)
    assert len(table(out)) == 11 and m["seed"] == "4"


@pytest.mark.parametrize("text", ['bogus = 1\n', '[params]\nfoo = 1\n', '[params]\nq = 2.0\n', 'params = 3\n',
                                  '[params\n'])
def test_bad_config_exits_2(tmp_path, capsys, text):
    cfg = tmp_path / "bad.toml"
    cfg.write_text(text)
    code, _, err = run(["analytic", "--config", str(cfg)], capsys)
    assert code == 2 and "config error" in err


def test_missing_config_and_bad_arguments_exit_2(tmp_path, capsys):
    assert run(["analytic", "--config", str(tmp_path / "nope.toml")], capsys)[0] == 2
    assert run(["sweep", "unknown_param", "1,2"], capsys)[0] == 2
    assert run(["spectrum", "--grid", "1:2"], capsys)[0] == 2
    with pytest.raises(SystemExit) as exc:
        cli.main(["simulate", "--format", "xml"])
    assert exc.value.code == 2


def test_domain_error_exits_3(tmp_path, capsys):
    cfg = tmp_path / "dom.toml"
    cfg.write_text("[analytics]\nr = 0.0\n")
    code, _, err = run(["analytic", "--config", str(cfg)], capsys)
    assert code == 3 and "p1 * p_det" in err


def test_unwritable_output_exits_3(tmp_path, capsys):
    code, _, _ = run(["spectrum", "--out", str(tmp_path / "missing" / "x.csv")], capsys)
    assert code == 3


def test_console_script_entry_point():
    proc = subprocess.run([sys.executable, "-m", "ndphoton.cli", "concat", "--m-max", "2"],
                          capture_output=True, text=True)
    assert proc.returncode == 0 and "eta_concat" in proc.stdout


def test_spectrum_phase_column_at_resonance(capsys):
    _, out, _ = run(["spectrum", "--grid", "0"], capsys)
    row = table(out)[0]
    assert abs(abs(float(row["r1_phase"])) - np.pi) < 1e-5 and float(row["r2_phase"]) == 0.0

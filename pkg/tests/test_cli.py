import json

import numpy as np
import pytest

from filamentlab.cli import main


def write(path, text):
    path.write_text(text)
    return str(path)


MEDIUM_TEXT = """
medium.gamma = 1.0
medium.omega0 = 1.0
medium.omega1 = 0.0
"""


def test_dispersion_table(tmp_path, capsys):
    medium = write(tmp_path / "medium.cfg", MEDIUM_TEXT)
    out = tmp_path / "table.csv"
    assert main(["dispersion", "--medium-file", medium, "--kmin", "0",
                 "--kmax", "3", "--samples", "7", "--out", str(out)]) == 0
    lines = out.read_text().strip().splitlines()
    assert lines[0].startswith("k,curved_pp")
    assert len(lines) == 8


def test_dispersion_projector_check(tmp_path, capsys):
    medium = write(tmp_path / "medium.cfg", MEDIUM_TEXT)
    assert main(["dispersion", "--medium-file", medium, "--check", "2.0"]) == 0
    text = capsys.readouterr().out
    assert "curved_pp" in text and "seven-projector sum" in text
    residuals = [float(line.split(",")[1]) for line in text.splitlines()[1:5]]
    assert max(residuals) < 1e-9


def test_fit_dispersion_outputs(tmp_path, capsys):
    medium = write(tmp_path / "medium.cfg", MEDIUM_TEXT)
    assert main(["fit-dispersion", "--k0", "2.0", "--width", "1.5",
                 "--branch", "+-", "--medium-file", medium,
                 "--out-dir", str(tmp_path)]) == 0
    payload = json.loads((tmp_path / "fit.json").read_text())
    assert payload["sup_error"] <= 0.5 * payload["nls_sup_error"]
    table = (tmp_path / "dispersion_window.csv").read_text().splitlines()
    assert table[0] == "k,omega_exact,omega_nls,omega_imp"
    assert len(table) == 202


def test_simulate_maxwell(tmp_path):
    cfg = write(tmp_path / "run.cfg", """
grid.n = 256
grid.length = 62.83185307179586
epsilon = 0.2
medium.gamma = 1.0
medium.omega0 = 1.0
packet.amplitude = 0.1
packet.width = 5.0
packet.carrier_k = 2.0
packet.branch = ++
t_final = 0.5
snapshot_every = 0.25
""")
    out = tmp_path / "out"
    assert main(["simulate", "maxwell", "--config", cfg, "--out-dir", str(out)]) == 0
    series = (out / "series.csv").read_text().splitlines()
    assert series[0] == "t,l2_norm,max_abs_E,max_rho"
    assert (out / "report.json").exists()
    assert any(p.name.startswith("snapshot_") for p in out.iterdir())


def test_simulate_envelope_and_diagnose(tmp_path):
    cfg = write(tmp_path / "run.cfg", """
grid.n = 256
grid.length = 30.0
model = family_scalar
epsilon = 0.1
alpha1 = 1
packet.amplitude = 0.8
packet.width = 2.0
t_final = 0.2
dt = 0.001
series_stride = 10
""")
    out = tmp_path / "out"
    assert main(["simulate", "envelope", "--config", cfg, "--out-dir", str(out)]) == 0
    report = json.loads((out / "report.json").read_text())
    assert report["status"] == "completed"
    assert report["drift"]["mass"] < 1e-10
    # the recorded series passes the conservation checks
    assert main(["diagnose", "--series", str(out / "series.csv"),
                 "--mass-tol", "1e-8", "--energy-tol", "1e-5"]) == 0


def test_diagnose_flags_corrupted_series(tmp_path, capsys):
    series = write(tmp_path / "series.csv",
                   "t,mass,energy,momentum_z,max_abs_u,grad_norm,max_rho\n"
                   "0.0,1.0,2.0,0.0,1.0,1.0,0.0\n"
                   "0.1,1.5,2.0,0.0,1.0,1.0,0.0\n")
    assert main(["diagnose", "--series", series, "--mass-tol", "1e-6"]) == 2
    assert "FAIL" in capsys.readouterr().out


def test_diagnose_damping_law(tmp_path):
    alpha2 = 0.3
    t = np.linspace(0, 1, 11)
    rows = ["t,mass"] + [f"{float(ti)!r},{float(np.exp(-2 * alpha2 * ti))!r}"
                         for ti in t]
    series = write(tmp_path / "damped.csv", "\n".join(rows) + "\n")
    assert main(["diagnose", "--series", series, "--alpha2", "0.3"]) == 0
    assert main(["diagnose", "--series", series, "--alpha2", "0.5"]) == 2


def test_blowup_exit_code(tmp_path):
    body = """
grid.dims = 2
grid.n = 64, 64
grid.length = 10.0, 10.0
model = family_scalar
epsilon = 0.05
alpha1 = 1
packet.amplitude = 3.0
packet.width = 1.5
t_final = 2.0
dt = 0.001
series_stride = 20
amp_factor = 5.0
grad_factor = 10.0
"""
    cfg = write(tmp_path / "focusing.cfg", body)
    out = tmp_path / "out"
    assert main(["simulate", "envelope", "--config", cfg, "--out-dir", str(out)]) == 3
    cfg2 = write(tmp_path / "expected.cfg", body + "expect_blowup = true\n")
    assert main(["simulate", "envelope", "--config", cfg2,
                 "--out-dir", str(tmp_path / "out2")]) == 0


def test_converge_command(tmp_path):
    cfg = write(tmp_path / "conv.cfg", """
grid.n = 512
grid.length = 62.83185307179586
carrier.k = 2.0
carrier.branch = ++
medium.gamma = 1.0
medium.omega0 = 1.0
epsilons = 0.2, 0.1
models = nls
packet.amplitude = 0.3
packet.width = 4.0
horizon = 0.25
""")
    out = tmp_path / "out"
    assert main(["converge", "--config", cfg, "--out-dir", str(out),
                 "--threads", "1"]) == 0
    table = (out / "errors.csv").read_text().splitlines()
    assert table[0] == "epsilon,model,max_error"
    assert len(table) == 3
    payload = json.loads((out / "report.json").read_text())
    assert payload["errors"]["nls"][1] < payload["errors"]["nls"][0]


def test_compare_command(tmp_path):
    cfg = write(tmp_path / "cmp.cfg", """
grid.n = 256
grid.length = 24.0
models = family_scalar:zero, family_scalar:saturated
epsilon = 0.1
alpha1 = 1
r = 1.0
packet.amplitude = 1.0
packet.width = 2.0
tau_final = 0.2
dt_tau = 0.002
""")
    out = tmp_path / "out"
    assert main(["compare", "--config", cfg, "--out-dir", str(out)]) == 0
    table = (out / "compare.csv").read_text().splitlines()
    assert len(table) == 3
    payload = json.loads((out / "report.json").read_text())
    assert {row["name"] for row in payload} == {"family_scalar:zero",
                                                "family_scalar:saturated"}


def test_cli_reports_config_errors(tmp_path, capsys):
    cfg = write(tmp_path / "broken.cfg", "model = family_scalar\n")
    assert main(["simulate", "envelope", "--config", cfg,
                 "--out-dir", str(tmp_path)]) == 1
    assert "error:" in capsys.readouterr().err

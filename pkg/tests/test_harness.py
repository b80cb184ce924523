import numpy as np
import pytest

from filamentlab.dispersion import BranchId, MediumParams
from filamentlab.envelope import IonizationCoupling, ModelConfig
from filamentlab.grid import make_grid
from filamentlab.harness import (CompareCase, CompareConfig, ConvergenceConfig,
                                 build_medium_from_physical, compare_models,
                                 convergence_report_json, gaussian_envelope,
                                 physical_from_medium, run_convergence,
                                 write_convergence_csv)

MED = MediumParams(gamma=1.0, omega0=1.0)
UPPER = BranchId.curved(1, 1)


def test_builder_epsilon_and_resonance():
    eps, med = build_medium_from_physical(tbar=1e-2, Tbar=1.0, Omega0=1000.0,
                                          Omega1=0.0, b_coupling=1e4, a3=1.0, a5=0.0)
    assert eps == pytest.approx(0.01)
    assert med.omega0 == pytest.approx(10.0)
    assert med.gamma == pytest.approx(1.0)
    assert med.nonlinearity == "cubic" and med.a_tilde == 0.0


def test_builder_omega0_scaling():
    tbar = 0.05
    eps, med = build_medium_from_physical(tbar=tbar, Tbar=1.0, Omega0=10.0 / tbar,
                                          Omega1=0.0, b_coupling=1.0, a3=2.0, a5=0.0)
    assert med.omega0 == pytest.approx(10.0)


def test_builder_quintic_collapses_without_a5():
    eps, med = build_medium_from_physical(tbar=0.01, Tbar=1.0, Omega0=100.0,
                                          Omega1=0.0, b_coupling=1e4, a3=1.0, a5=0.0)
    assert med.a_tilde * eps ** med.r == 0.0


def test_builder_round_trip():
    inputs = dict(tbar=2e-3, Tbar=0.4, Omega0=700.0, Omega1=5.0,
                  b_coupling=3.3e5, a3=2.5, a5=0.8)
    eps, med = build_medium_from_physical(**inputs)
    back = physical_from_medium(eps, med, inputs["Tbar"], inputs["a3"])
    for key, val in inputs.items():
        assert back[key] == pytest.approx(val, rel=1e-12), key
    # a_tilde is O(1) by choice of r
    assert 0.1 <= med.a_tilde <= 10.0


def test_builder_rejects_inverted_scales():
    with pytest.raises(ValueError, match="Tbar"):
        build_medium_from_physical(tbar=1.0, Tbar=0.5, Omega0=1.0, Omega1=0.0,
                                   b_coupling=1.0, a3=1.0, a5=0.0)


def test_gaussian_envelope_shapes():
    grid = make_grid(2, [16, 32], [4.0, 8.0])
    env = gaussian_envelope(grid, 2.0, 1.0)
    assert env.shape == grid.shape
    assert np.max(np.abs(env)) == pytest.approx(2.0)


def small_convergence_config(models=("nls",), epsilons=(0.2, 0.1)):
    return ConvergenceConfig(grid_n=512, length=20 * np.pi, carrier_k=2.0,
                             branch=UPPER, medium=MED, epsilons=epsilons,
                             models=models, amplitude=0.3, width=4.0,
                             horizon=0.25)


def test_convergence_errors_positive_and_decreasing():
    report = run_convergence(small_convergence_config())
    errs = report.errors["nls"]
    assert all(e > 0 for e in errs)
    assert errs[1] < errs[0]  # smaller eps, smaller error
    assert report.failures == {}
    assert "nls" not in report.slopes  # needs >= 3 epsilon values


def test_convergence_deterministic_output(tmp_path):
    cc = small_convergence_config()
    r1 = run_convergence(cc)
    r2 = run_convergence(cc)
    p1, p2 = tmp_path / "a.csv", tmp_path / "b.csv"
    write_convergence_csv(r1, p1)
    write_convergence_csv(r2, p2)
    assert p1.read_bytes() == p2.read_bytes()
    payload = convergence_report_json(r1)
    assert '"errors"' in payload


def test_convergence_threads_match_serial():
    cc = small_convergence_config()
    serial = run_convergence(cc)
    threaded = run_convergence(ConvergenceConfig(**{**cc.__dict__, "threads": 2}))
    assert serial.errors == threaded.errors


def test_compare_models_row_per_case():
    grid = make_grid(1, [256], [24.0])
    ion = IonizationCoupling(c=0.8, alpha4=0.4, alpha5=0.2, K=2, c_g=0.5)
    cases = (
        CompareCase("plain", ModelConfig(model="family_scalar", epsilon=0.1, alpha1=1)),
        CompareCase("fixed", ModelConfig(model="ionized_fixed_frame", epsilon=0.1,
                                         alpha1=1, ionization=ion)),
        CompareCase("moving", ModelConfig(model="ionized_moving_frame", epsilon=0.1,
                                          alpha1=1, ionization=ion)),
    )
    cfg = CompareConfig(grid=grid, cases=cases, tau_final=0.3, dt_tau=2e-3,
                        amplitude=1.2, width=2.0)
    rows = compare_models(cfg)
    assert len(rows) == len(cases)
    assert all(r.status == "completed" for r in rows)
    by_name = {r.name: r for r in rows}
    # both density-coupled frames describe the same physics: final masses agree
    m2, m3 = by_name["fixed"].mass, by_name["moving"].mass
    assert abs(m2 - m3) / m2 < 0.10
    # and both dissipated mass relative to the source-free model
    assert m2 < by_name["plain"].mass


def test_compare_models_reports_failures_as_rows():
    grid = make_grid(1, [64], [8.0])
    # the moving-frame model needs envelope decay at the right edge; a wide
    # envelope on a small box violates it and must come back as an error row
    ion = IonizationCoupling(c=0.8, alpha4=0.4, alpha5=0.2, K=2)
    cases = (CompareCase("bad", ModelConfig(model="ionized_moving_frame",
                                            epsilon=0.1, alpha1=1, ionization=ion)),)
    cfg = CompareConfig(grid=grid, cases=cases, tau_final=0.1, dt_tau=1e-2,
                        amplitude=1.0, width=6.0)
    rows = compare_models(cfg)
    assert rows[0].status.startswith("error")

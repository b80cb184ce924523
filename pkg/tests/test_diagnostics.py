import numpy as np
import pytest

from filamentlab.dispersion import BranchId, MediumParams
from filamentlab.envelope import EnvelopeSolver, ModelConfig
from filamentlab.grid import SpectralField, make_grid
from filamentlab import diagnostics as diag

RNG = np.random.default_rng(5)
MED = MediumParams(gamma=1.0, omega0=1.0)


def field_1d(values):
    values = np.asarray(values, dtype=complex)
    grid = make_grid(1, [values.shape[0]], [2 * np.pi])
    return SpectralField(grid, values[:, None])


def family_cfg(**kw):
    base = dict(model="family_scalar", epsilon=0.1, alpha1=1)
    base.update(kw)
    return ModelConfig(**base)


def test_mass_examples():
    assert diag.mass(field_1d(np.zeros(16))) == 0.0
    grid = make_grid(1, [32], [3.0])
    const = SpectralField(grid, np.full((32, 1), 2.0 - 1.0j))
    assert diag.mass(const) == pytest.approx(5.0 * 3.0, rel=1e-14)


def test_mass_parseval_cross_check():
    grid = make_grid(2, [16, 16], [2.0, 5.0])
    f = SpectralField(grid, RNG.standard_normal((16, 16, 2))
                      + 1j * RNG.standard_normal((16, 16, 2)))
    assert diag.spectral_mass(f) == pytest.approx(diag.mass(f), rel=1e-12)


def test_energy_zero_and_plane_wave():
    grid = make_grid(1, [32], [4.0])
    zero = SpectralField(grid, np.zeros((32, 1), complex))
    cfg = family_cfg()

    class StateLike:
        def __init__(self, u):
            self.u = u
            self.density = None

    assert diag.energy(StateLike(zero), cfg) == 0.0
    amp = 1.3
    plane = SpectralField(grid, np.full((32, 1), amp, dtype=complex))
    assert diag.energy(StateLike(plane), cfg) == pytest.approx(
        -0.25 * amp ** 4 * 4.0, rel=1e-13)


def test_cubic_quintic_energy_rearrangement():
    # E + (1/2 + 3/(32 a)) mass == 1/2 ||v||_H1^2 + (a/6) int |v|^2 (|v|^2 - 3/(4a))^2
    grid = make_grid(1, [128], [10.0])
    eps, r = 0.3, 1.5
    a = eps ** r
    cfg = family_cfg(epsilon=eps, r=r, f_kind="quintic")

    class StateLike:
        def __init__(self, u):
            self.u = u
            self.density = None

    for _ in range(10):
        vals = RNG.standard_normal((128, 1)) + 1j * RNG.standard_normal((128, 1))
        state = StateLike(SpectralField(grid, vals))
        lhs = diag.energy(state, cfg) + (0.5 + 3.0 / (32 * a)) * diag.mass(state)
        mag2 = np.abs(vals[:, 0]) ** 2
        quartic_square = float(np.sum(mag2 * (mag2 - 3.0 / (4 * a)) ** 2)
                               * grid.cell_volume)
        rhs = 0.5 * diag.h1_norm(state) ** 2 + (a / 6.0) * quartic_square
        assert lhs == pytest.approx(rhs, rel=1e-12)


def test_momentum_examples():
    grid = make_grid(1, [64], [2 * np.pi])
    real = SpectralField(grid, RNG.standard_normal((64, 1)).astype(complex))
    assert diag.momentum(real)[0] == pytest.approx(0.0, abs=1e-12)
    q = 3.0  # on the wavenumber lattice of a 2*pi box
    z = grid.axis_coordinates(0)
    amp = 1.4
    wave = SpectralField(grid, (amp * np.exp(1j * q * z))[:, None])
    assert diag.momentum(wave)[0] == pytest.approx(q * amp ** 2 * 2 * np.pi, rel=1e-12)
    conj = SpectralField(grid, wave.values.conj())
    assert diag.momentum(conj)[0] == pytest.approx(-diag.momentum(wave)[0], rel=1e-12)


def test_h1_bound_examples():
    assert diag.h1_bound_cq(0.0, 0.0, 0.5, 1.0) == 0.0
    eps_r = 3.0 / 16.0
    assert diag.h1_bound_cq(1.0, 0.0, eps_r, 1.0) == pytest.approx(np.sqrt(2.0))
    with pytest.raises(ValueError):
        diag.h1_bound_cq(0.0, -1.0, 0.5, 1.0)


def test_blowup_detect_on_series():
    columns = ("t", "mass", "energy", "momentum_z", "max_abs_u", "grad_norm", "max_rho")
    flat = np.array([[i * 0.1, 1.0, -1.0, 0.0, 1.0, 2.0, 0.0] for i in range(5)])
    report = diag.build_report(flat, columns, "completed")
    assert diag.blowup_detect(report) == "completed"
    grow = flat.copy()
    grow[-1, columns.index("grad_norm")] = 5000.0
    report2 = diag.build_report(grow, columns, "completed")
    assert diag.blowup_detect(report2) == "blowup_suspected"


def test_build_report_requires_increasing_time():
    columns = ("t", "mass", "energy", "momentum_z", "max_abs_u", "grad_norm", "max_rho")
    bad = np.zeros((3, 7))
    with pytest.raises(ValueError):
        diag.build_report(bad, columns, "completed")


def test_damped_energy_balance_residual():
    # d/dt [1/2 ||grad v||^2 - 1/4 int |v|^4] = -alpha2 (||grad v||^2 - int |v|^4)
    grid = make_grid(1, [256], [30.0])
    alpha2 = 0.2
    cfg = family_cfg(alpha2=alpha2)
    solver = EnvelopeSolver(cfg, grid)
    z = grid.axis_coordinates(0)
    state = solver.initial_state(0.8 * np.exp(-(z / 3.0) ** 2) + 0j)
    dt = 1e-3
    energies, balance = [], []
    for _ in range(400):
        mag2 = np.abs(state.u.values[:, 0]) ** 2
        quartic = float(np.sum(mag2 ** 2) * grid.cell_volume)
        grad2 = diag.grad_norm(state) ** 2
        energies.append(0.5 * grad2 - 0.25 * quartic)
        balance.append(grad2 - quartic)
        state = solver.step(state, dt)
    energies = np.asarray(energies)
    balance = np.asarray(balance)
    dedt = np.gradient(energies, dt)
    residual = dedt + alpha2 * balance
    assert np.max(np.abs(residual[2:-2])) < 1e-4


def test_check_drifts():
    columns = ("t", "mass", "energy", "momentum_z", "max_abs_u", "grad_norm", "max_rho")
    series = np.array([[0.0, 1.0, 2.0, 0, 1, 1, 0], [1.0, 1.0 + 1e-9, 2.0, 0, 1, 1, 0]])
    report = diag.build_report(series, columns, "completed")
    out = diag.check_drifts(report, {"mass": 1e-8, "energy": 1e-12})
    assert out["mass"][2] is True
    assert out["energy"][2] is True
    out2 = diag.check_drifts(report, {"mass": 1e-10})
    assert out2["mass"][2] is False

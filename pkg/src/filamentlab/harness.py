"""Experiment drivers: physical-to-dimensionless builder, convergence studies
against the time-domain oracle, and cross-model comparison tables.

A convergence study fixes a scalar Gaussian envelope and a carrier, runs the
time-domain oracle to t = T/eps for each requested eps, runs every requested
envelope model on the same data, reconstructs the physical field
u e^{i(k z - w t)/eps} + c.c. from each envelope, and records the max-norm
difference on snapshot times {T/(4eps), T/(2eps), 3T/(4eps), T/eps}.  The
log-log slope over eps estimates the order of the envelope approximation.
"""

from __future__ import annotations

import json
import math
import time as _time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from . import diagnostics
from .dispersion import BranchId, MediumParams, omega_branch, polarization_vector_1d
from .dispersion_fit import FitResult, fit_improved
from .envelope import EnvelopeSolver, ModelConfig
from .grid import GridSpec, make_grid
from .maxwell import (MaxwellSolver, WavePacketSpec, init_wave_packet,
                      reconstruct_packet, run_maxwell)

MOVING_FRAME_MODELS = ("family_scalar", "family_vect", "ionized_moving_frame")


# ---------------------------------------------------------------------------
# Nondimensionalization

def build_medium_from_physical(tbar: float, Tbar: float, Omega0: float,
                               Omega1: float, b_coupling: float, a3: float,
                               a5: float, nonlinearity: str | None = None,
                               p: float = 1.0, r: float | None = None
                               ) -> tuple[float, MediumParams]:
    """Dimensionless parameters from laboratory scales.

    tbar is the optical-cycle time, Tbar the pulse duration (eps = tbar/Tbar),
    Omega0/Omega1 the oscillator resonance/damping frequencies, b_coupling the
    field-oscillator coupling, a3/a5 the cubic/quintic potential constants.
    The polarization scale is the nonlinear one, P0 = 1/(Tbar sqrt(a3)), which
    fixes a_tilde eps^r = a5 P0^2 / a3.  When r is not given it is chosen so
    a_tilde = 1 if that leaves r > 0, else r = 1.
    """
    if tbar <= 0 or Tbar <= 0 or Omega0 <= 0 or b_coupling <= 0 or a3 <= 0:
        raise ValueError("physical scales tbar, Tbar, Omega0, b_coupling, a3 must be positive")
    if Omega1 < 0 or a5 < 0:
        raise ValueError("Omega1 and a5 must be nonnegative")
    if Tbar <= tbar:
        raise ValueError("pulse duration Tbar must exceed the cycle time tbar "
                         "(otherwise eps >= 1 and the slow/fast separation is lost)")
    epsilon = tbar / Tbar
    omega0 = Omega0 * tbar
    gamma = b_coupling * tbar ** 2
    omega1 = Omega1 * tbar / epsilon ** (2.0 + p)
    s = a5 / (a3 ** 2 * Tbar ** 2)
    if r is None:
        if s == 0.0:
            r = 1.0
        else:
            candidate = math.log(s) / math.log(epsilon)
            r = candidate if candidate > 0 else 1.0
    a_tilde = 0.0 if s == 0.0 else s / epsilon ** r
    if nonlinearity is None:
        nonlinearity = "cubic" if a5 == 0 else "cubic_quintic"
    medium = MediumParams(gamma=gamma, omega0=omega0, omega1=omega1, p=p,
                          nonlinearity=nonlinearity, r=r, a_tilde=a_tilde)
    return epsilon, medium


def physical_from_medium(epsilon: float, medium: MediumParams, Tbar: float,
                         a3: float) -> dict[str, float]:
    """Invert :func:`build_medium_from_physical` given the retained scales."""
    tbar = epsilon * Tbar
    return {
        "tbar": tbar,
        "Tbar": Tbar,
        "Omega0": medium.omega0 / tbar,
        "Omega1": medium.omega1 * epsilon ** (2.0 + medium.p) / tbar,
        "b_coupling": medium.gamma / tbar ** 2,
        "a3": a3,
        "a5": medium.a_tilde * epsilon ** medium.r * a3 ** 2 * Tbar ** 2,
    }


# ---------------------------------------------------------------------------
# Initial data

def gaussian_envelope(grid: GridSpec, amplitude: float, width: float) -> np.ndarray:
    """amplitude * exp(-|x|^2 / width^2), centered in the box."""
    mesh = grid.coordinate_mesh()
    r2 = sum(m ** 2 for m in mesh)
    return amplitude * np.exp(-r2 / width ** 2) + 0j


# ---------------------------------------------------------------------------
# Convergence study

@dataclass(frozen=True)
class ConvergenceConfig:
    """Setup of an oracle-vs-models error study.

    ``well_prepared`` switches the packet preparation: by default the packet
    is polarized on the branch eigenvector at the carrier wavenumber (the
    canonical wave-packet datum, which leaves O(eps |grad u0|) of content on
    the other sheets); when True, each Fourier mode is polarized on the sheet
    at its own shifted wavenumber, so the whole datum rides one sheet and the
    comparison isolates the models' dispersion accuracy.  Reconstruction uses
    the matching lift in each case.
    """

    grid_n: int
    length: float
    carrier_k: float
    branch: BranchId
    medium: MediumParams
    epsilons: tuple[float, ...]
    models: tuple[str, ...]
    amplitude: float = 0.5
    width: float = 5.0
    horizon: float = 0.5
    dt_factor: float = 0.125
    fit_half_width: float = 1.5
    well_prepared: bool = False
    threads: int = 1


@dataclass
class ConvergenceReport:
    epsilons: tuple[float, ...]
    models: tuple[str, ...]
    errors: dict[str, list[float]]
    slopes: dict[str, float]
    runtimes: dict[str, list[float]] = field(default_factory=dict)
    failures: dict[str, list[str]] = field(default_factory=dict)


def _model_config(model: str, cc: ConvergenceConfig, epsilon: float,
                  fit: FitResult | None) -> ModelConfig:
    kwargs = dict(model=model, epsilon=epsilon, medium=cc.medium,
                  carrier_k=cc.carrier_k, branch=cc.branch)
    if model in ("nls_improved", "nls_polarized"):
        kwargs["fit"] = fit
    return ModelConfig(**kwargs)


def _modewise_lift(env: np.ndarray, grid: GridSpec, epsilon: float,
                   cc: ConvergenceConfig) -> np.ndarray:
    """Four-component envelope polarized per Fourier mode on the branch."""
    xi = grid.axis_wavenumbers(0)
    lifts = polarization_vector_1d(cc.carrier_k + epsilon * xi, cc.branch, cc.medium)
    return np.fft.ifft(np.fft.fft(env)[:, None] * lifts, axis=0)


def _run_cell(cc: ConvergenceConfig, epsilon: float, fit: FitResult | None):
    grid = make_grid(1, [cc.grid_n], [cc.length])
    env = gaussian_envelope(grid, cc.amplitude, cc.width)
    lift = polarization_vector_1d(cc.carrier_k, cc.branch, cc.medium)
    defect = None
    if cc.well_prepared:
        defect = (_modewise_lift(env, grid, epsilon, cc)
                  - env[:, None] * lift[None, :]) / epsilon
    packet = WavePacketSpec(envelope=env, carrier_k=cc.carrier_k, branch=cc.branch,
                            polarization_defect=defect)
    state0 = init_wave_packet(packet, cc.medium, epsilon, grid)
    t_final = cc.horizon / epsilon
    n_steps = 4 * max(1, round(t_final / (4 * cc.dt_factor * epsilon)))
    dt = t_final / n_steps
    snap_steps = [n_steps * i // 4 for i in (1, 2, 3, 4)]

    solver = MaxwellSolver(grid, cc.medium, epsilon, carrier_k=cc.carrier_k)
    t0 = _time.perf_counter()
    oracle = run_maxwell(solver, state0, dt, n_steps, snapshot_steps=snap_steps,
                         series_stride=n_steps)
    oracle_time = _time.perf_counter() - t0
    if oracle.status != "completed":
        raise RuntimeError(f"oracle run failed with status {oracle.status}")

    omega = float(omega_branch(cc.carrier_k, cc.branch, cc.medium))

    def scalar_to_four(values):
        if cc.well_prepared:
            return _modewise_lift(values[:, 0], grid, epsilon, cc)
        return values[:, 0:1] * lift[None, :]

    def initial_envelope(model):
        if model in ("envelope_exact", "full_dispersion"):
            return _modewise_lift(env, grid, epsilon, cc) if cc.well_prepared \
                else env[:, None] * lift[None, :]
        return env

    cell_errors: dict[str, float] = {}
    cell_times: dict[str, float] = {"oracle": oracle_time}
    cell_failures: dict[str, str] = {}
    for model in cc.models:
        config = _model_config(model, cc, epsilon, fit)
        esolver = EnvelopeSolver(config, grid)
        state = esolver.initial_state(initial_envelope(model))
        err = 0.0
        t1 = _time.perf_counter()
        try:
            idx = 0
            for n in range(1, n_steps + 1):
                state = esolver.step(state, dt)
                if n == snap_steps[idx]:
                    t_snap, oracle_state = oracle.snapshots[idx]
                    env4 = state.u.values if state.u.ncomp == 4 \
                        else scalar_to_four(state.u.values)
                    approx = reconstruct_packet(env4, grid, cc.carrier_k, omega,
                                                t_snap, epsilon)
                    err = max(err, float(np.max(np.abs(
                        oracle_state.u.values.real - approx))))
                    idx += 1
                    if idx == len(snap_steps):
                        break
            cell_errors[model] = err
        except Exception as exc:  # noqa: BLE001 - partial reports keep the failure
            cell_failures[model] = f"{type(exc).__name__}: {exc}"
        cell_times[model] = _time.perf_counter() - t1
    return cell_errors, cell_times, cell_failures


def run_convergence(cc: ConvergenceConfig) -> ConvergenceReport:
    """Oracle-vs-models error table over eps, with fitted log-log slopes."""
    fit = None
    if any(m in ("nls_improved", "nls_polarized") for m in cc.models):
        fit = fit_improved(cc.branch, cc.carrier_k, cc.fit_half_width, cc.medium)
    eps_sorted = tuple(sorted(cc.epsilons, reverse=True))

    def work(eps):
        return _run_cell(cc, eps, fit)

    if cc.threads > 1:
        with ThreadPoolExecutor(max_workers=cc.threads) as pool:
            cells = list(pool.map(work, eps_sorted))
    else:
        cells = [work(eps) for eps in eps_sorted]

    errors: dict[str, list[float]] = {m: [] for m in cc.models}
    runtimes: dict[str, list[float]] = {}
    failures: dict[str, list[str]] = {}
    for i, (cell_errors, cell_times, cell_failures) in enumerate(cells):
        for model in cc.models:
            if model in cell_errors:
                errors[model].append(cell_errors[model])
            else:
                errors[model].append(np.nan)
        for name, t in cell_times.items():
            runtimes.setdefault(name, []).append(t)
        for name, why in cell_failures.items():
            failures.setdefault(name, []).append(f"eps={eps_sorted[i]}: {why}")
    slopes = {}
    for model, errs in errors.items():
        errs_arr = np.asarray(errs, dtype=float)
        good = np.isfinite(errs_arr) & (errs_arr > 0)
        if good.sum() >= 3:
            slope, _ = np.polyfit(np.log(np.asarray(eps_sorted)[good]),
                                  np.log(errs_arr[good]), 1)
            slopes[model] = float(slope)
    return ConvergenceReport(epsilons=eps_sorted, models=cc.models, errors=errors,
                             slopes=slopes, runtimes=runtimes, failures=failures)


def slope_of(report: ConvergenceReport, model: str) -> float:
    if model not in report.slopes:
        raise KeyError(f"no slope for model '{model}' (need >= 3 clean error values)")
    return report.slopes[model]


# ---------------------------------------------------------------------------
# Cross-model comparison

@dataclass(frozen=True)
class CompareCase:
    name: str
    config: ModelConfig
    amp_factor: float = diagnostics.DEFAULT_AMP_FACTOR
    grad_factor: float = diagnostics.DEFAULT_GRAD_FACTOR


@dataclass(frozen=True)
class CompareConfig:
    grid: GridSpec
    cases: tuple[CompareCase, ...]
    tau_final: float
    dt_tau: float
    amplitude: float = 1.0
    width: float = 1.0
    series_stride: int = 10


@dataclass
class CompareRow:
    name: str
    model: str
    status: str
    final_time: float
    mass: float
    energy: float
    max_abs_u: float
    max_rho: float
    wall_time: float


def compare_models(cfg: CompareConfig) -> list[CompareRow]:
    """Run every case on the shared envelope; one summary row per case.

    Comoving models run in the slow clock to tau_final; carrier-frame models
    run in the laboratory clock to tau_final / eps with the matching step, so
    all rows describe the same physical moment.
    """
    env = gaussian_envelope(cfg.grid, cfg.amplitude, cfg.width)
    rows = []
    for case in cfg.cases:
        config = case.config
        if config.model in MOVING_FRAME_MODELS:
            t_final, dt = cfg.tau_final, cfg.dt_tau
        else:
            t_final, dt = cfg.tau_final / config.epsilon, cfg.dt_tau / config.epsilon
        n_steps = max(1, round(t_final / dt))
        u0 = env if config.model != "family_vect" else \
            np.stack([env, np.zeros_like(env)], axis=-1)
        t0 = _time.perf_counter()
        try:
            solver = EnvelopeSolver(config, cfg.grid)
            state = solver.initial_state(u0)
            result = solver.run(state, dt, n_steps, series_stride=cfg.series_stride,
                                amp_factor=case.amp_factor, grad_factor=case.grad_factor)
            report = result.report
            final = result.state
            status = report.status
        except Exception as exc:  # noqa: BLE001 - row-level failure reporting
            rows.append(CompareRow(case.name, config.model, f"error: {exc}",
                                   np.nan, np.nan, np.nan, np.nan, np.nan,
                                   _time.perf_counter() - t0))
            continue
        wall = _time.perf_counter() - t0
        try:
            e_final = diagnostics.energy(final, config)
        except ValueError:
            e_final = np.nan
        rows.append(CompareRow(
            name=case.name, model=config.model, status=status,
            final_time=final.time, mass=diagnostics.mass(final), energy=e_final,
            max_abs_u=float(np.max(np.abs(final.u.values))),
            max_rho=0.0 if final.density is None else float(np.max(final.density)),
            wall_time=wall))
    return rows


# ---------------------------------------------------------------------------
# Report writers (CSV columns are deterministic; wall times only in JSON)

def write_convergence_csv(report: ConvergenceReport, path):
    with open(path, "w") as fh:
        fh.write("epsilon,model,max_error\n")
        for model in report.models:
            for eps, err in zip(report.epsilons, report.errors[model]):
                fh.write(f"{eps!r},{model},{err!r}\n")


def convergence_report_json(report: ConvergenceReport) -> str:
    payload = {
        "epsilons": list(report.epsilons),
        "models": list(report.models),
        "errors": report.errors,
        "slopes": report.slopes,
        "runtimes_seconds": report.runtimes,
        "failures": report.failures,
    }
    return json.dumps(payload, indent=2, sort_keys=True)


def write_series_csv(report: diagnostics.RunReport, path):
    with open(path, "w") as fh:
        fh.write(",".join(report.columns) + "\n")
        for row in report.series:
            fh.write(",".join(repr(float(v)) for v in row) + "\n")

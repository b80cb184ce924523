"""Conserved quantities, dissipation laws, bounds, and blow-up indicators.

All functionals are discrete: integrals are cell-volume-weighted sums and
gradients are spectral.  ``mass`` is the squared L2 norm (so the exponential
damping law reads mass(t) = exp(-2 alpha2 t) mass(0)).  Energy functionals are
selected by the model configuration:

* normalized family models: 1/2 int (|grad_perp v|^2 + alpha1 |d_z v|^2)
  - 1/2 int G(|v|^2) with G'(s) = (1 + f(eps^r s)) s,
* carrier-frame scalar models with a cubic medium: the comoving quadratic
  form plus the quartic term scaled by the cubic gain,
* smoothing-operator models: the conserved quadratic form (P2 v, v) is
  exposed separately as :func:`quadratic_form`.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .grid import GridSpec, SpectralField, forward_transform

DEFAULT_AMP_FACTOR = 1e6
DEFAULT_GRAD_FACTOR = 1e3


def _as_field(state) -> SpectralField:
    if isinstance(state, SpectralField):
        return state
    return state.u


def mass(state) -> float:
    """Squared discrete L2 norm over all components."""
    f = _as_field(state)
    return float(np.sum(np.abs(f.values) ** 2) * f.grid.cell_volume)


def spectral_mass(state) -> float:
    """Same quantity from the Fourier side (Parseval cross-check)."""
    f = _as_field(state)
    hat = forward_transform(f)
    return float(np.sum(np.abs(hat) ** 2) * f.grid.cell_volume / f.grid.total_points)


def _odd_wavenumbers(grid: GridSpec, axis: int) -> np.ndarray:
    """Wavenumber axis with the unpaired Nyquist mode zeroed, the symmetric
    convention for odd spectral derivatives (real fields get 0 exactly)."""
    xi = grid.axis_wavenumbers(axis).copy()
    xi[grid.points[axis] // 2] = 0.0
    return xi


def momentum(state) -> tuple[float, ...]:
    """Im int grad(v) conj(v), one component per space dimension."""
    f = _as_field(state)
    grid = f.grid
    hat = forward_transform(f)
    weight = grid.cell_volume / grid.total_points
    axes = [_odd_wavenumbers(grid, d) for d in range(grid.dims)]
    mesh = np.meshgrid(*axes, indexing="ij")
    out = []
    for d in range(grid.dims):
        out.append(float(np.sum(mesh[d][..., None] * np.abs(hat) ** 2) * weight))
    return tuple(out)


def grad_norm(state) -> float:
    """L2 norm of the spectral gradient, all components and directions."""
    f = _as_field(state)
    grid = f.grid
    hat = forward_transform(f)
    weight = grid.cell_volume / grid.total_points
    mesh = grid.wavenumber_mesh()
    total = 0.0
    for d in range(grid.dims):
        total += float(np.sum(mesh[d][..., None] ** 2 * np.abs(hat) ** 2) * weight)
    return float(np.sqrt(total))


def directional_grad_sq(state) -> tuple[float, ...]:
    """int |d_d v|^2 per direction (spectral)."""
    f = _as_field(state)
    grid = f.grid
    hat = forward_transform(f)
    weight = grid.cell_volume / grid.total_points
    mesh = grid.wavenumber_mesh()
    return tuple(float(np.sum(mesh[d][..., None] ** 2 * np.abs(hat) ** 2) * weight)
                 for d in range(grid.dims))


def _potential_integral(f_kind: str, r: float, epsilon: float, mag2: np.ndarray,
                        volume: float) -> float:
    """int G(|v|^2) with G the antiderivative of s (1 + f(eps^r s))."""
    er = epsilon ** r
    if f_kind == "zero":
        g = mag2 ** 2 / 2.0
    elif f_kind == "quintic":
        g = mag2 ** 2 / 2.0 - er * mag2 ** 3 / 3.0
    elif f_kind == "saturated":
        g = mag2 / er - np.log1p(er * mag2) / er ** 2
    else:
        raise ValueError(f"unknown f_kind '{f_kind}'")
    return float(np.sum(g) * volume)


def energy(state, config) -> float:
    """Energy functional matched to the configured model's conservation law."""
    f = _as_field(state)
    grid = f.grid
    model = config.model
    if model in ("family_scalar", "family_vect", "ionized_fixed_frame",
                 "ionized_moving_frame", "general_ionized"):
        grads = directional_grad_sq(state)
        alpha1 = config.alpha1 if config.alpha1 is not None else 1
        kinetic = 0.5 * (sum(grads[:-1]) + alpha1 * grads[-1])
        mag2 = np.sum(np.abs(f.values) ** 2, axis=-1)
        if model == "family_vect":
            dot = np.sum(f.values * f.values, axis=-1)
            w = np.abs(dot) ** 2 / 6.0 + mag2 ** 2 / 3.0
            return float(kinetic - np.sum(w) * grid.cell_volume)
        f_kind = config.f_kind if model == "family_scalar" else "zero"
        potential = _potential_integral(f_kind, config.r, config.epsilon, mag2,
                                        grid.cell_volume)
        return float(kinetic - 0.5 * potential)
    if model in ("nls", "nls_improved", "nls_polarized"):
        if config.medium.nonlinearity != "cubic":
            raise ValueError("closed-form energy of the carrier-frame models "
                             "is implemented for the cubic medium only")
        from .dispersion import nls_coefficients
        co = nls_coefficients(config.carrier_k, config.branch, config.medium,
                              config.epsilon)
        grads = directional_grad_sq(state)
        eps = config.epsilon
        kinetic = (eps / 2.0) * (co.diffraction * sum(grads[:-1]) + co.gvd * grads[-1])
        mag2 = np.sum(np.abs(f.values) ** 2, axis=-1)
        quartic = float(np.sum(mag2 ** 2) * grid.cell_volume)
        return float(kinetic - (3.0 * eps * co.cubic_gain / 4.0) * quartic)
    raise ValueError(f"no closed-form energy functional for model '{model}'")


def quadratic_form(state, fit, epsilon: float) -> float:
    """Conserved quadratic form (P2(eps grad) v, v) of the smoothing models."""
    f = _as_field(state)
    grid = f.grid
    from .envelope import p2_symbol
    table = p2_symbol(grid.wavenumber_mesh(), fit, epsilon)
    hat = forward_transform(f)
    weight = grid.cell_volume / grid.total_points
    return float(np.sum(table[..., None] * np.abs(hat) ** 2) * weight)


def h1_bound_cq(mass0: float, energy0: float, epsilon: float, r: float) -> float:
    """A priori H1 bound of the cubic/quintic family:
    sqrt(2 E0 + (1 + 3/(16 eps^r)) mass0)."""
    radicand = 2.0 * energy0 + (1.0 + 3.0 / (16.0 * epsilon ** r)) * mass0
    if radicand < 0:
        raise ValueError(f"negative radicand {radicand:.6g}: inconsistent mass/energy inputs")
    return float(np.sqrt(radicand))


def h1_norm(state) -> float:
    return float(np.sqrt(mass(state) + grad_norm(state) ** 2))


@dataclass
class RunReport:
    """Scalar time series of a run plus its status and per-invariant drifts."""

    columns: tuple[str, ...]
    series: np.ndarray = field(repr=False)
    status: str
    drift: dict[str, float] = field(default_factory=dict)
    thresholds: dict[str, float] = field(default_factory=dict)

    def column(self, name: str) -> np.ndarray:
        return self.series[:, self.columns.index(name)]


def relative_drift(values: np.ndarray) -> float:
    """max_t |X(t) - X(0)| / max(|X(0)|, tiny)."""
    values = np.asarray(values, dtype=float)
    finite = values[np.isfinite(values)]
    if finite.size == 0:
        return np.nan
    base = finite[0]
    scale = max(abs(base), 1e-300)
    return float(np.max(np.abs(finite - base)) / scale)


def build_report(series: np.ndarray, columns: tuple[str, ...], status: str,
                 thresholds: dict | None = None) -> RunReport:
    t = series[:, columns.index("t")]
    if np.any(np.diff(t) <= 0):
        raise ValueError("series must be strictly increasing in t")
    drift = {}
    for name in ("mass", "energy"):
        if name in columns:
            drift[name] = relative_drift(series[:, columns.index(name)])
    return RunReport(columns=columns, series=series, status=status, drift=drift,
                     thresholds=dict(thresholds or {}))


def blowup_detect(report: RunReport, amp_factor: float = DEFAULT_AMP_FACTOR,
                  grad_factor: float = DEFAULT_GRAD_FACTOR) -> str:
    """Classify a finished series: blow-up is suspected when the gradient norm
    or the amplitude crossed its growth threshold at any sample."""
    if report.series.size == 0:
        raise ValueError("empty series")
    amp = report.column("max_abs_u")
    grad = report.column("grad_norm")
    amp_factor = report.thresholds.get("amp_factor", amp_factor)
    grad_factor = report.thresholds.get("grad_factor", grad_factor)
    if report.status == "aborted":
        return "aborted"
    if (amp[0] > 0 and np.any(amp > amp_factor * amp[0])) or \
       (grad[0] > 0 and np.any(grad > grad_factor * grad[0])):
        return "blowup_suspected"
    return "completed"


def damped_energy_residual(report: RunReport, alpha2: float,
                           quartic_series: np.ndarray) -> np.ndarray:
    """Residual of the damped-run energy balance
    dE/dt + alpha2 (||grad v||^2 - int |v|^4) (centered differences)."""
    t = report.column("t")
    e = report.column("energy")
    g2 = report.column("grad_norm") ** 2
    dedt = np.gradient(e, t)
    return dedt + alpha2 * (g2 - quartic_series)


def check_drifts(report: RunReport, tolerances: dict[str, float]) -> dict[str, tuple[float, float, bool]]:
    """Compare recorded drifts against tolerances: name -> (drift, tol, ok)."""
    out = {}
    for name, tol in tolerances.items():
        value = report.drift.get(name, np.nan)
        out[name] = (value, tol, bool(np.isfinite(value) and value <= tol))
    return out

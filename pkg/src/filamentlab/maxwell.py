"""Reference time-domain integrator for the stiff oscillator-medium system.

The 1-d transverse-polarization reduction keeps four real components
U = (B_y, E_x, Q_x, P_x) depending on z only, evolving by

    dU/dt + A1 dU/dz + (1/eps) E4 U + eps^(1+p) A0 U = eps F(U) + ionization,

with A1 the symmetric transport block, E4 the skew stiff coupling and F the
cubic-type oscillator nonlinearity acting on the P component.  The integrator
is Strang splitting: the full linear part (transport + stiff coupling) is
applied exactly per Fourier mode through a cached eigendecomposition of the
Hermitian symbol, which removes the 1/eps CFL restriction entirely; the
pointwise remainder (nonlinearity, damping, ionization sources) is advanced
with one RK4 substep per half step.  Free-electron current enters the E
equation through the regularized odd multiplier sqrt(2) i xi (1 + xi^2)^(-1/2)
evaluated at eps*xi/k_laser, plus pointwise field losses; the electron density
grows by K-photon and collisional sources and never decreases.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .dispersion import (BranchId, MediumParams, omega_branch,
                         polarization_vector_1d, reduced_hamiltonian,
                         reduced_matrices)
from .grid import GridSpec, SpectralField


class SimulationAbort(RuntimeError):
    """Non-finite state encountered; carries the simulation time."""

    def __init__(self, message: str, time: float):
        super().__init__(f"{message} (t = {time:.6g})")
        self.time = time


class CarrierError(ValueError):
    """Carrier wavenumber not representable on the periodic grid."""


@dataclass
class MaxwellState:
    """Four-component field state, optional electron density, and clock."""

    grid: GridSpec
    u: SpectralField
    rho: np.ndarray | None
    time: float
    epsilon: float
    carrier_k: float | None = None

    def copy(self) -> "MaxwellState":
        rho = None if self.rho is None else self.rho.copy()
        return MaxwellState(self.grid, self.u.copy(), rho, self.time,
                            self.epsilon, self.carrier_k)


@dataclass
class WavePacketSpec:
    """Scalar envelope of the transverse electric component riding carrier k."""

    envelope: np.ndarray
    carrier_k: float
    branch: BranchId
    polarization_defect: np.ndarray | None = None


def hilbert_symbol(xi):
    """Regularized odd multiplier sqrt(2) i xi / (1 + xi^2)^(1/2)."""
    xi = np.asarray(xi, dtype=float)
    return np.sqrt(2.0) * 1j * xi / np.sqrt(1.0 + xi ** 2)


def nonlinearity_eval(p_sharp, medium: MediumParams, epsilon: float) -> np.ndarray:
    """Oscillator nonlinearity as it feeds the Q equation (without the leading eps).

    Accepts a scalar field (any shape) or vectors along a length-3 last axis.
    The three supported kinds act on the unscaled polarization
    P = sqrt(gamma)/omega0 * P_sharp:

      cubic:          |P|^2 P
      cubic_quintic:  (1 - a*eps^r |P|^2) |P|^2 P
      saturated:      (1 + a*eps^r |P|^2/3) / (1 + 2 a*eps^r |P|^2/3)^2 |P|^2 P

    and the result is divided by sqrt(gamma), which reproduces the
    gamma/omega0^3 prefactor of the four-component system.
    """
    p_sharp = np.asarray(p_sharp)
    if medium.gamma == 0:
        return np.zeros_like(p_sharp)
    g = math.sqrt(medium.gamma)
    p = (g / medium.omega0) * p_sharp
    if p.ndim >= 1 and p.shape[-1] == 3:
        mag2 = np.sum(np.abs(p) ** 2, axis=-1)[..., None]
    else:
        mag2 = np.abs(p) ** 2
    s = medium.a_tilde * epsilon ** medium.r * mag2
    if medium.nonlinearity == "cubic":
        factor = 1.0
    elif medium.nonlinearity == "cubic_quintic":
        factor = 1.0 - s
    else:
        factor = (1.0 + s / 3.0) / (1.0 + 2.0 * s / 3.0) ** 2
    return factor * mag2 * p / g


def check_carrier_on_grid(carrier_k: float, epsilon: float, grid: GridSpec,
                          tol: float = 1e-9) -> int:
    """The fast phase k/eps must be an integer multiple of 2*pi/L."""
    k_fund = 2 * np.pi / grid.lengths[0]
    ratio = carrier_k / (epsilon * k_fund)
    m = round(ratio)
    if m < 1 or abs(ratio - m) > tol * max(1.0, abs(ratio)):
        lo, hi = math.floor(ratio), math.ceil(ratio)
        suggestions = [carrier_k / (m_try * k_fund) for m_try in (lo, hi) if m_try >= 1]
        raise CarrierError(
            f"carrier k/eps = {carrier_k / epsilon:.9g} is not on the grid lattice "
            f"(fundamental {k_fund:.9g}); nearest representable eps values: "
            + ", ".join(f"{s:.12g}" for s in suggestions))
    return m


def init_wave_packet(spec: WavePacketSpec, medium: MediumParams, epsilon: float,
                     grid: GridSpec) -> MaxwellState:
    """Real wave-packet initial state, polarized on the requested branch.

    The scalar envelope multiplies the branch eigenvector (E-component 1) and
    the carrier exponential; adding the complex conjugate makes the state real.
    The envelope must decay below 1e-8 of its peak at the box boundary.
    """
    if grid.dims != 1:
        raise ValueError("the time-domain oracle is one-dimensional")
    env = np.asarray(spec.envelope, dtype=complex)
    if env.shape != grid.shape:
        raise ValueError(f"envelope shape {env.shape} != grid shape {grid.shape}")
    peak = float(np.max(np.abs(env)))
    if peak > 0:
        edge = max(abs(env[0]), abs(env[-1]))
        if edge > 1e-8 * peak:
            raise ValueError(
                f"envelope does not decay at the box boundary (edge/peak = {edge / peak:.2e}); "
                "enlarge the domain (>= 8x pulse width recommended)")
    m = check_carrier_on_grid(spec.carrier_k, epsilon, grid)
    z = grid.axis_coordinates(0)
    phase = np.exp(1j * m * (2 * np.pi / grid.lengths[0]) * z)
    lift = polarization_vector_1d(spec.carrier_k, spec.branch, medium)
    packet = lift[None, :] * (env * phase)[:, None]
    if spec.polarization_defect is not None:
        packet = packet + epsilon * np.asarray(spec.polarization_defect) * phase[:, None]
    values = packet + packet.conj()
    rho = np.zeros(grid.shape) if medium.ionization is not None else None
    return MaxwellState(grid=grid, u=SpectralField(grid, values), rho=rho,
                        time=0.0, epsilon=epsilon, carrier_k=spec.carrier_k)


class MaxwellSolver:
    """Strang-splitting integrator with a cached exact linear propagator.

    ``carrier_k`` fixes the laser wavenumber inside the free-current multiplier
    and is required for ionization runs.  The keyword toggles switch individual
    terms off for verification runs (they default to the full system).
    """

    def __init__(self, grid: GridSpec, medium: MediumParams, epsilon: float,
                 carrier_k: float | None = None, include_transport: bool = True,
                 include_stiff: bool = True, include_hilbert: bool = True,
                 include_nonlinearity: bool = True):
        if grid.dims != 1:
            raise ValueError("the time-domain oracle is one-dimensional")
        if not (0 < epsilon <= 1):
            raise ValueError("epsilon must lie in (0, 1]")
        self.grid = grid
        self.medium = medium
        self.epsilon = epsilon
        self.carrier_k = carrier_k
        self.include_transport = include_transport
        self.include_stiff = include_stiff
        self.include_hilbert = include_hilbert
        self.include_nonlinearity = include_nonlinearity
        self._xi = grid.axis_wavenumbers(0)
        self._prop_cache: dict[float, np.ndarray] = {}
        self._hilbert_table = None
        if carrier_k is not None:
            self._hilbert_table = hilbert_symbol(epsilon * self._xi / carrier_k)

    def _propagator(self, dt: float) -> np.ndarray:
        cached = self._prop_cache.get(dt)
        if cached is not None:
            return cached
        kappa = self.epsilon * self._xi if self.include_transport else np.zeros_like(self._xi)
        if self.include_stiff:
            h = reduced_hamiltonian(kappa, self.medium) / self.epsilon
        else:
            a1, _, _ = reduced_matrices(self.medium)
            h = kappa[..., None, None] * a1 / self.epsilon
        w, v = np.linalg.eigh(h)
        phases = np.exp(-1j * dt * w)
        prop = np.einsum("nij,nj,nkj->nik", v, phases, v.conj())
        self._prop_cache[dt] = prop
        return prop

    def _rhs(self, u: np.ndarray, rho: np.ndarray | None):
        eps = self.epsilon
        med = self.medium
        du = np.zeros_like(u)
        if self.include_nonlinearity:
            du[:, 2] += eps * nonlinearity_eval(u[:, 3], med, eps)
        du[:, 2] -= eps ** (1.0 + med.p) * med.omega1 * u[:, 2]
        drho = None
        if rho is not None and med.ionization is not None:
            ion = med.ionization
            e_field = u[:, 1]
            mag2 = np.abs(e_field) ** 2
            if self.include_hilbert:
                if self._hilbert_table is None:
                    raise ValueError("ionization run needs carrier_k for the current multiplier")
                current = np.fft.ifft(self._hilbert_table * np.fft.fft(rho * e_field))
                du[:, 1] -= eps * current
            du[:, 1] -= eps * ion.c0 * (ion.c1 * mag2 ** (ion.K - 1) + ion.c2 * rho) * e_field
            drho = eps * ion.c1 * mag2 ** ion.K + eps * ion.c2 * rho * mag2
        return du, drho

    def _pointwise_substep(self, u, rho, h):
        """One RK4 step of size h on the non-stiff pointwise/current terms."""
        k1u, k1r = self._rhs(u, rho)
        k2u, k2r = self._rhs(u + 0.5 * h * k1u, None if rho is None else rho + 0.5 * h * k1r)
        k3u, k3r = self._rhs(u + 0.5 * h * k2u, None if rho is None else rho + 0.5 * h * k2r)
        k4u, k4r = self._rhs(u + h * k3u, None if rho is None else rho + h * k3r)
        u = u + (h / 6.0) * (k1u + 2 * k2u + 2 * k3u + k4u)
        if rho is not None:
            rho = rho + (h / 6.0) * (k1r + 2 * k2r + 2 * k3r + k4r)
        return u, rho

    def step(self, state: MaxwellState, dt: float) -> MaxwellState:
        if not (dt > 0):
            raise ValueError("dt must be positive")
        if dt > self.epsilon + 1e-12:
            raise ValueError(f"dt = {dt} exceeds epsilon = {self.epsilon}; "
                             "splitting error control requires dt <= epsilon")
        u = state.u.values
        rho = state.rho
        u, rho = self._pointwise_substep(u, rho, dt / 2.0)
        prop = self._propagator(dt)
        u_hat = np.fft.fft(u, axis=0)
        u_hat = np.einsum("nij,nj->ni", prop, u_hat)
        u = np.fft.ifft(u_hat, axis=0)
        u, rho = self._pointwise_substep(u, rho, dt / 2.0)
        if not np.all(np.isfinite(u)) or (rho is not None and not np.all(np.isfinite(rho))):
            raise SimulationAbort("non-finite field values in time-domain step",
                                  state.time + dt)
        return MaxwellState(state.grid, SpectralField(state.grid, u), rho,
                            state.time + dt, state.epsilon, state.carrier_k)


_SOLVER_CACHE: dict[tuple, MaxwellSolver] = {}


def _cached_solver(state: MaxwellState, medium: MediumParams) -> MaxwellSolver:
    key = (state.grid, medium, state.epsilon, state.carrier_k)
    solver = _SOLVER_CACHE.get(key)
    if solver is None:
        solver = MaxwellSolver(state.grid, medium, state.epsilon, state.carrier_k)
        _SOLVER_CACHE[key] = solver
    return solver


def maxwell_step(state: MaxwellState, dt: float, medium: MediumParams) -> MaxwellState:
    """Advance the charge-free system by one Strang step."""
    return _cached_solver(state, medium).step(state, dt)


def maxwell_ionization_step(state: MaxwellState, dt: float,
                            medium: MediumParams) -> MaxwellState:
    """Advance the system with free-electron current and density sources."""
    if state.rho is None:
        raise ValueError("state has no electron density; initialize rho")
    if medium.ionization is None:
        raise ValueError("medium has no ionization constants")
    return _cached_solver(state, medium).step(state, dt)


def demodulate(state: MaxwellState, carrier_k: float, omega: float) -> SpectralField:
    """First-harmonic complex envelope: shift off the carrier phase and keep
    modes below half the carrier wavenumber."""
    z = state.grid.axis_coordinates(0)
    phase = np.exp(-1j * (carrier_k * z - omega * state.time) / state.epsilon)
    shifted = state.u.values * phase[:, None]
    xi = state.grid.axis_wavenumbers(0)
    keep = (np.abs(xi) < carrier_k / (2 * state.epsilon)).astype(float)
    filtered = np.fft.ifft(np.fft.fft(shifted, axis=0) * keep[:, None], axis=0)
    return SpectralField(state.grid, filtered)


def reconstruct_packet(envelope4: np.ndarray, grid: GridSpec, carrier_k: float,
                       omega: float, time: float, epsilon: float) -> np.ndarray:
    """Physical field from a 4-component envelope: u e^{i(kz - wt)/eps} + c.c."""
    z = grid.axis_coordinates(0)
    phase = np.exp(1j * (carrier_k * z - omega * time) / epsilon)
    packet = envelope4 * phase[:, None]
    return (packet + packet.conj()).real


@dataclass
class MaxwellRunResult:
    state: MaxwellState
    times: np.ndarray
    series: np.ndarray = field(repr=False)
    snapshots: list[tuple[float, MaxwellState]] = field(default_factory=list)
    status: str = "completed"

    SERIES_COLUMNS = ("t", "l2_norm", "max_abs_E", "max_rho")


def run_maxwell(solver: MaxwellSolver, state: MaxwellState, dt: float,
                n_steps: int, snapshot_steps=(), series_stride: int = 1) -> MaxwellRunResult:
    """Fixed-step run collecting a scalar time series and optional snapshots."""
    snapshot_steps = set(int(s) for s in snapshot_steps)
    rows = [_series_row(state)]
    times = [state.time]
    snapshots = []
    status = "completed"
    if 0 in snapshot_steps:
        snapshots.append((state.time, state.copy()))
    for n in range(1, n_steps + 1):
        try:
            state = solver.step(state, dt)
        except SimulationAbort:
            status = "aborted"
            break
        if n % series_stride == 0 or n == n_steps:
            rows.append(_series_row(state))
            times.append(state.time)
        if n in snapshot_steps:
            snapshots.append((state.time, state.copy()))
    return MaxwellRunResult(state=state, times=np.asarray(times),
                            series=np.asarray(rows), snapshots=snapshots, status=status)


def _series_row(state: MaxwellState):
    vals = state.u.values
    l2 = np.sqrt(np.sum(np.abs(vals) ** 2) * state.grid.cell_volume)
    max_e = float(np.max(np.abs(vals[:, 1])))
    max_rho = 0.0 if state.rho is None else float(np.max(state.rho))
    return (state.time, float(l2), max_e, max_rho)

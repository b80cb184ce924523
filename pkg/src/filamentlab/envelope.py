"""Split-step spectral integrators for the envelope-model hierarchy.

Models are selected by :class:`ModelConfig` and share one Strang-splitting
skeleton: the linear part is an exact Fourier multiplier (scalar, rational, or
per-mode matrix exponential), the remainder is a pointwise or pseudo-spectral
substep.  Scalar models whose substep is a pure phase rotation use the exact
rotation (so the modulus, hence the discrete mass, is preserved to rounding);
everything else advances with one RK4 substep per half step.

Frames and clocks differ across the hierarchy and are kept explicit:

* carrier-frame models (``envelope_exact``, ``full_dispersion``, ``nls``,
  ``nls_improved``, ``nls_polarized``, ``ionized_fixed_frame``,
  ``general_ionized``) integrate in laboratory time t with the group-velocity
  transport term in the symbol;
* comoving normalized models (``family_scalar``, ``family_vect``,
  ``ionized_moving_frame``) integrate in the slow time tau = eps*t, in the
  frame moving at the group velocity, with unit coefficients.

``spectral_shift`` converts between the frames explicitly.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy.integrate import cumulative_trapezoid

from . import diagnostics
from .dispersion import (BranchId, MediumParams, NlsCoefficients, omega_branch,
                         nls_coefficients, projector_1d)
from .dispersion_fit import FitResult, check_hyp
from .grid import GridSpec, SpectralField, dealias_mask
from .maxwell import SimulationAbort, nonlinearity_eval

MODELS = ("envelope_exact", "full_dispersion", "nls", "nls_improved",
          "nls_polarized", "family_scalar", "family_vect",
          "ionized_fixed_frame", "ionized_moving_frame", "general_ionized")

_DIMENSIONAL = ("envelope_exact", "full_dispersion", "nls", "nls_improved", "nls_polarized")
_IONIZED = ("ionized_fixed_frame", "ionized_moving_frame", "general_ionized")

QUADRATURE_NODES = 64


class ModelConfigError(ValueError):
    """Inconsistent model configuration."""


# ---------------------------------------------------------------------------
# Envelope nonlinearities (first-harmonic filters)

def first_harmonic(fn, u, n_nodes: int = QUADRATURE_NODES):
    """First Fourier coefficient (in the carrier phase) of fn(u e^{i th} + c.c.).

    Trapezoidal quadrature on the periodic circle, exact for trigonometric
    polynomials of degree < n_nodes - 1.
    """
    u = np.asarray(u, dtype=complex)
    acc = np.zeros_like(u)
    for j in range(n_nodes):
        theta = 2 * np.pi * j / n_nodes
        sample = u * np.exp(1j * theta)
        acc += np.exp(-1j * theta) * fn(sample + sample.conj())
    return acc / n_nodes


def fenv_cubic(u):
    """Filtered cubic nonlinearity (u.u) conj(u) + 2 |u|^2 u for a single
    vector u (scalar input reduces to 3|u|^2 u)."""
    u = np.asarray(u, dtype=complex)
    if u.ndim == 0:
        return 3.0 * np.abs(u) ** 2 * u
    dot = np.sum(u * u)
    return dot * u.conj() + 2.0 * np.sum(np.abs(u) ** 2) * u


def family_f(f_kind: str, s):
    """Correction factor f(s) of the cubic-family nonlinearity (s >= 0)."""
    if f_kind == "zero":
        return np.zeros_like(np.asarray(s, dtype=float))
    if f_kind == "quintic":
        return -np.asarray(s, dtype=float)
    if f_kind == "saturated":
        s = np.asarray(s, dtype=float)
        return -s / (1.0 + s)
    raise ModelConfigError(f"unknown f_kind '{f_kind}'")


def fenv_general(u, f_kind: str, r: float, epsilon: float,
                 n_nodes: int = QUADRATURE_NODES):
    """First harmonic of (1 + f(eps^r |E|^2)) |E|^2 E at E = u e^{i th} + c.c.

    For f_kind = "zero" the quadrature is exact and reproduces
    :func:`fenv_cubic`.
    """
    u = np.asarray(u, dtype=complex)
    vector = u.ndim >= 1

    def fn(e_real):
        mag2 = np.sum(e_real * e_real) if vector else e_real * e_real
        return (1.0 + family_f(f_kind, (epsilon ** r * mag2).real)) * mag2 * e_real

    return first_harmonic(fn, u, n_nodes)


def genv(e, w, c1: float, c2: float, K: int, n_nodes: int = QUADRATURE_NODES):
    """First harmonic of the ionization loss term c1 |E|^{2K-2} E + c2 w E.

    Closed form for K in {1, 2}; theta-quadrature for K >= 3.
    """
    e = np.asarray(e, dtype=complex)
    if K == 1:
        return c1 * e + c2 * w * e
    if K == 2:
        return c1 * fenv_cubic(e) + c2 * w * e
    vector = e.ndim >= 1

    def fn(e_real):
        mag2 = np.sum(e_real * e_real) if vector else e_real * e_real
        return c1 * mag2 ** (K - 1) * e_real + c2 * w * e_real

    return first_harmonic(fn, e, n_nodes)


def ionization_mean_power(u, K: int):
    """Carrier-phase average of |E|^{2K} for E = u e^{i th} + c.c.:

    sum_{k=0}^{floor(K/2)} C(K,k) C(K-k,k) (2|u|^2)^{K-2k} |u.u|^{2k}.
    """
    u = np.asarray(u, dtype=complex)
    mag2 = np.sum(np.abs(u) ** 2) if u.ndim >= 1 else np.abs(u) ** 2
    dot = np.sum(u * u) if u.ndim >= 1 else u * u
    total = 0.0
    for k in range(K // 2 + 1):
        coeff = math.comb(K, k) * math.comb(K - k, k)
        total += coeff * (2.0 * mag2) ** (K - 2 * k) * np.abs(dot) ** (2 * k)
    return float(total)


def _fenv_cubic_field(v: np.ndarray) -> np.ndarray:
    """Vectorized cubic filter, components along the last axis."""
    dot = np.sum(v * v, axis=-1, keepdims=True)
    mag2 = np.sum(np.abs(v) ** 2, axis=-1, keepdims=True)
    return dot * v.conj() + 2.0 * mag2 * v


def _first_harmonic_field(fn, u, n_nodes: int = QUADRATURE_NODES):
    acc = np.zeros_like(u)
    for j in range(n_nodes):
        theta = 2 * np.pi * j / n_nodes
        sample = u * np.exp(1j * theta)
        acc += np.exp(-1j * theta) * fn(sample + sample.conj())
    return acc / n_nodes


# ---------------------------------------------------------------------------
# Model configuration

@dataclass(frozen=True)
class IonizationCoupling:
    """Envelope-level ionization coupling: loss scale c, K-photon and
    collisional source strengths, photon number, and the group speed used by
    the fixed-frame transport."""

    c: float
    alpha4: float
    alpha5: float
    K: int
    c_g: float = 0.0

    def __post_init__(self):
        if self.c < 0 or self.alpha4 < 0 or self.alpha5 < 0:
            raise ModelConfigError("ionization coupling constants must be >= 0")
        if not (isinstance(self.K, int) and self.K >= 1):
            raise ModelConfigError("photon number K must be an integer >= 1")


@dataclass(frozen=True)
class ModelConfig:
    """Which envelope model to integrate, with its coefficients.

    Normalized comoving models take explicit alpha coefficients; carrier-frame
    models derive theirs from (medium, carrier_k, branch).  ``validate`` is
    called by the solver and rejects configurations whose fields do not match
    the chosen model.
    """

    model: str
    epsilon: float
    alpha1: int | None = None
    alpha2: float = 0.0
    alpha3: tuple[float, ...] | None = None
    f_kind: str = "zero"
    r: float = 1.0
    fit: FitResult | None = None
    ionization: IonizationCoupling | None = None
    medium: MediumParams | None = None
    carrier_k: float | None = None
    branch: BranchId | None = None
    dealias: bool = False

    def validate(self, dims: int | None = None):
        if self.model not in MODELS:
            raise ModelConfigError(f"unknown model '{self.model}'; choose from {MODELS}")
        if not (self.epsilon > 0):
            raise ModelConfigError("epsilon must be > 0")
        if self.alpha2 < 0:
            raise ModelConfigError("alpha2 must be >= 0")
        if not (self.r > 0):
            raise ModelConfigError("exponent r must be > 0")
        if self.f_kind not in ("zero", "quintic", "saturated"):
            raise ModelConfigError(f"unknown f_kind '{self.f_kind}'")
        if self.fit is not None:
            ok, why = check_hyp(self.fit.b_vec(), self.fit.b_mat())
            if not ok:
                raise ModelConfigError(f"fit violates admissibility: {why}")
        if self.model in _DIMENSIONAL:
            if self.medium is None or self.carrier_k is None or self.branch is None:
                raise ModelConfigError(f"{self.model} requires medium, carrier_k and branch")
            if self.branch.family != "curved":
                raise ModelConfigError("carrier must ride a curved branch")
            if self.alpha1 is not None or self.alpha3 is not None:
                raise ModelConfigError(
                    f"{self.model} derives its coefficients from the medium; "
                    "do not set alpha1/alpha3")
            if self.ionization is not None:
                raise ModelConfigError(f"{self.model} does not couple to a density")
            if self.model in ("nls_improved", "nls_polarized") and self.fit is None:
                raise ModelConfigError(f"{self.model} requires a fit (the zero fit is allowed)")
            if self.model in ("envelope_exact", "full_dispersion"):
                if self.fit is not None:
                    raise ModelConfigError(f"{self.model} takes no fit")
                if dims is not None and dims != 1:
                    raise ModelConfigError(f"{self.model} is one-dimensional")
            if self.model == "nls" and self.fit is not None:
                raise ModelConfigError("nls takes no fit (use nls_improved)")
        else:
            if self.medium is not None or self.carrier_k is not None or self.branch is not None:
                raise ModelConfigError(
                    f"{self.model} is a normalized model; it takes alpha coefficients, "
                    "not a medium")
            if self.alpha1 not in (-1, 0, 1):
                raise ModelConfigError(f"{self.model} requires alpha1 in {{-1, 0, +1}}")
            if self.model in _IONIZED:
                if self.ionization is None:
                    raise ModelConfigError(f"{self.model} requires ionization coupling")
                if self.f_kind != "zero":
                    raise ModelConfigError(f"{self.model} is stated for the cubic nonlinearity")
                if self.model != "general_ionized" and (self.fit is not None
                                                        or self.alpha3 is not None):
                    raise ModelConfigError(f"{self.model} takes neither fit nor alpha3")
                if self.model != "general_ionized" and self.alpha2 != 0.0:
                    raise ModelConfigError(f"{self.model} has no damping term")
            else:
                if self.ionization is not None:
                    raise ModelConfigError(f"{self.model} does not couple to a density")
                if self.model == "family_vect" and self.f_kind != "zero":
                    raise ModelConfigError("the vector family model is stated for f = 0")
        if self.alpha3 is not None and dims is not None and len(self.alpha3) != dims:
            raise ModelConfigError("alpha3 must have one entry per space dimension")


@dataclass
class EnvelopeState:
    """Complex envelope (components on the last axis), optional density, clock."""

    grid: GridSpec
    u: SpectralField
    density: np.ndarray | None
    time: float

    def copy(self) -> "EnvelopeState":
        density = None if self.density is None else self.density.copy()
        return EnvelopeState(self.grid, self.u.copy(), density, self.time)


def p2_symbol(xi, fit: FitResult | None, epsilon: float):
    """Smoothing-operator symbol 1 + eps b.xi + eps^2 xi.B xi on mesh arrays.

    ``xi`` is a single wavenumber array (1-d) or a tuple of mesh arrays; with
    an admissible fit the value is positive for every real xi.
    """
    mesh = (xi,) if isinstance(xi, np.ndarray) else tuple(xi)
    if fit is None:
        return np.ones_like(mesh[0], dtype=float)
    b = fit.b_vec()
    bmat = fit.b_mat()
    if b.size != len(mesh):
        raise ModelConfigError(f"fit dimension {b.size} != mesh dimension {len(mesh)}")
    out = np.ones_like(mesh[0], dtype=float)
    for d in range(len(mesh)):
        out = out + epsilon * b[d] * mesh[d]
        for e in range(len(mesh)):
            out = out + epsilon ** 2 * bmat[d, e] * mesh[d] * mesh[e]
    return out


def ionization_rhs(u, rho, config: ModelConfig):
    """Pointwise density-coupled right side (solved for du/dt):

    du = i eps (|u|^2 - rho) u - eps c (alpha4 |u|^{2K-2} + alpha5 rho) u
    drho = eps alpha4 |u|^{2K} + eps alpha5 rho |u|^2  (never negative).
    """
    ion = config.ionization
    eps = config.epsilon
    mag2 = np.abs(u) ** 2
    loss = ion.c * (ion.alpha4 * mag2 ** (ion.K - 1) + ion.alpha5 * rho)
    du = 1j * eps * (mag2 - rho) * u - eps * loss * u
    drho = eps * ion.alpha4 * mag2 ** ion.K + eps * ion.alpha5 * rho * mag2
    return du, drho


def rho_tilde_solve(v, config: ModelConfig, grid: GridSpec) -> np.ndarray:
    """Slaved electron density of the comoving ionized model.

    Integrating the density transport backward from the right edge of the box
    (where the envelope must have decayed below 1e-8 of its peak):

        rho(z) = int_z^{Z} eps alpha4 |v|^{2K}(s)
                 exp((eps alpha5 / c) int_z^{s} |v|^2) ds.

    Trapezoidal quadrature along the propagation axis (the last one).
    """
    ion = config.ionization
    eps = config.epsilon
    v = np.asarray(v)
    mag2 = np.abs(v) ** 2
    peak = float(np.max(np.sqrt(mag2)))
    if peak > 0:
        edge = float(np.max(np.sqrt(mag2[..., -1])))
        if edge > 1e-8 * peak:
            raise ValueError(
                f"envelope does not decay at the right box edge (edge/peak = {edge / peak:.2e}); "
                "the density boundary condition needs a larger box")
    dz = grid.spacing[-1]
    beta = eps * ion.alpha5 / ion.c if ion.c > 0 else 0.0
    # S(z) = int_z^{Z} |v|^2, accumulated right-to-left
    rev = mag2[..., ::-1]
    s_rev = cumulative_trapezoid(rev, dx=dz, axis=-1, initial=0.0)
    s_int = s_rev[..., ::-1]
    integrand = mag2 ** ion.K * np.exp(-beta * s_int)
    i_rev = cumulative_trapezoid(integrand[..., ::-1], dx=dz, axis=-1, initial=0.0)
    i_int = i_rev[..., ::-1]
    rho = eps * ion.alpha4 * i_int * np.exp(beta * s_int)
    return np.maximum(rho, 0.0)


def spectral_shift(values: np.ndarray, grid: GridSpec, shift: float,
                   axis: int | None = None) -> np.ndarray:
    """Translate a periodic field by ``shift`` along one axis (spectrally exact
    for band-limited data).  Defaults to the propagation (last spatial) axis."""
    axis = grid.dims - 1 if axis is None else axis
    xi = grid.axis_wavenumbers(axis)
    shape = [1] * values.ndim
    shape[axis] = xi.size
    factor = np.exp(-1j * xi * shift).reshape(shape)
    hat = np.fft.fft(values, axis=axis)
    return np.fft.ifft(hat * factor, axis=axis)


# ---------------------------------------------------------------------------
# The solver

class EnvelopeSolver:
    """One Strang-splitting integrator per (config, grid) pair."""

    def __init__(self, config: ModelConfig, grid: GridSpec):
        config.validate(grid.dims)
        self.config = config
        self.grid = grid
        self.mesh = grid.wavenumber_mesh()
        self._lin_cache: dict[float, np.ndarray] = {}
        self._mask = dealias_mask(grid) if config.dealias else None
        self._build()

    # -- construction -------------------------------------------------------

    def _build(self):
        cfg = self.config
        model = cfg.model
        eps = cfg.epsilon
        mesh = self.mesh
        xi_z = mesh[-1]
        self._proj_table = None
        self._coeffs: NlsCoefficients | None = None
        self._nl_mult = None

        if model in _DIMENSIONAL:
            self._build_dimensional(model, eps, mesh, xi_z)
            return

        # normalized models: p2 and first-derivative multipliers share a form
        p2 = p2_symbol(mesh, cfg.fit, eps)
        if np.min(p2) <= 0:
            idx = np.unravel_index(np.argmin(p2), p2.shape)
            bad = tuple(float(m[idx]) for m in mesh)
            raise ModelConfigError(f"smoothing symbol is not positive at xi = {bad}")
        self._p2 = p2
        lap = sum(mesh[d] ** 2 for d in range(len(mesh) - 1)) + cfg.alpha1 * xi_z ** 2
        steep = np.zeros_like(p2)
        if cfg.alpha3 is not None:
            for d in range(len(mesh)):
                steep = steep + cfg.alpha3[d] * mesh[d]
        self._ncomp = 2 if model == "family_vect" else 1

        if model in ("family_scalar", "family_vect"):
            self._lin_symbol = (1j * lap + cfg.alpha2) / p2
            trivial = cfg.fit is None and cfg.alpha3 is None and not cfg.dealias
            if model == "family_scalar" and trivial:
                self._strategy = "phase"
                f_kind, r = cfg.f_kind, cfg.r
                self._phase_rate = lambda s: (1.0 + family_f(f_kind, eps ** cfg.r * s)) * s
            else:
                self._strategy = "rk4"
                self._nl_mult = (1.0 - eps * steep) / p2
                if model == "family_scalar":
                    f_kind, r = cfg.f_kind, cfg.r
                    self._nl_point = lambda v: (
                        1j * (1.0 + family_f(f_kind, eps ** r * np.abs(v) ** 2))
                        * np.abs(v) ** 2 * v)
                else:
                    self._nl_point = lambda v: 1j * _fenv_cubic_field(v) / 3.0
        elif model == "ionized_fixed_frame":
            self._lin_symbol = 1j * (cfg.ionization.c_g * xi_z + eps * lap)
            self._strategy = "rk4"
        elif model == "general_ionized":
            self._lin_symbol = (1j * (cfg.ionization.c_g * xi_z + eps * lap) + eps * cfg.alpha2) / p2
            self._strategy = "rk4"
            self._nl_mult = (1.0 - eps * steep) / p2
        elif model == "ionized_moving_frame":
            self._lin_symbol = 1j * lap
            self._strategy = "rk4"
        else:  # pragma: no cover
            raise ModelConfigError(f"unhandled model '{model}'")

    def _build_dimensional(self, model, eps, mesh, xi_z):
        cfg = self.config
        med = cfg.medium
        k0 = cfg.carrier_k
        self._omega = float(omega_branch(k0, cfg.branch, med))
        if model in ("envelope_exact", "full_dispersion"):
            # both ride the scalar branch symbol; they differ in whether the
            # nonlinearity and damping are projected onto the branch eigenspace
            self._ncomp = 4
            kappa = k0 + eps * xi_z
            omega_shift = omega_branch(kappa, cfg.branch, med)
            self._lin_symbol = 1j * (omega_shift - self._omega) / eps
            if model == "full_dispersion":
                self._proj_table = projector_1d(kappa, cfg.branch, med)
            self._strategy = "rk4"
            return
        self._ncomp = 1
        co = nls_coefficients(k0, cfg.branch, med, eps)
        self._coeffs = co
        quad = co.gvd * xi_z ** 2
        for d in range(len(mesh) - 1):
            quad = quad + co.diffraction * mesh[d] ** 2
        numerator = 1j * (co.c_g * xi_z + eps * quad) + eps * co.alpha2
        if model == "nls":
            self._lin_symbol = numerator
            self._p2 = np.ones_like(xi_z, dtype=float)
            if med.nonlinearity == "cubic":
                self._strategy = "phase"
                gain = co.cubic_gain
                self._phase_rate = lambda s: 3.0 * eps * gain * s
            else:
                self._strategy = "rk4"
                self._nl_mult = None
            return
        fit = cfg.fit
        b = fit.b_vec()
        bmat = fit.b_mat()
        p2 = p2_symbol(mesh, fit, eps)
        if np.min(p2) <= 0:
            idx = np.unravel_index(np.argmin(p2), p2.shape)
            bad = tuple(float(m[idx]) for m in mesh)
            raise ModelConfigError(f"smoothing symbol is not positive at xi = {bad}")
        self._p2 = p2
        b_dot_xi = sum(b[d] * mesh[d] for d in range(len(mesh)))
        bquad = sum(bmat[d, e] * mesh[d] * mesh[e]
                    for d in range(len(mesh)) for e in range(len(mesh)))
        cross = co.c_g * b_dot_xi * xi_z
        third = co.c_g * bquad * xi_z
        numerator = 1j * (co.c_g * xi_z + eps * (quad + cross) + eps ** 2 * third) \
            + eps * co.alpha2
        self._lin_symbol = numerator / p2
        self._strategy = "rk4"
        if model == "nls_improved":
            self._nl_mult = 1.0 / p2
        else:
            steep = co.alpha3 * xi_z
            self._nl_mult = (1.0 + eps * b_dot_xi - eps * steep) / p2

    # -- nonlinear right sides ----------------------------------------------

    def _dim_nl_point(self, e):
        """Carrier-frame reduced nonlinearity of the scalar models (per eps)."""
        co = self._coeffs
        med = self.config.medium
        if med.nonlinearity == "cubic":
            return 3j * co.cubic_gain * np.abs(e) ** 2 * e
        omega = self._omega
        denom = omega ** 2 - med.omega0 ** 2
        g = math.sqrt(med.gamma)
        pol = -med.omega0 * g / denom
        pi23 = -1j * omega * g / (denom * co.n_sq)
        eps = self.config.epsilon
        filtered = _first_harmonic_field(
            lambda x: nonlinearity_eval(x, med, eps), pol * e)
        return pi23 * filtered

    def _fenv_four(self, u):
        """Filtered oscillator nonlinearity on the 4-component envelope."""
        med = self.config.medium
        eps = self.config.epsilon
        w = u[..., 3]
        out = np.zeros_like(u)
        if med.nonlinearity == "cubic" and med.gamma > 0:
            out[..., 2] = 3.0 * (med.gamma / med.omega0 ** 3) * np.abs(w) ** 2 * w
        else:
            out[..., 2] = _first_harmonic_field(
                lambda x: nonlinearity_eval(x, med, eps), w)
        return out

    def _apply_nl_mult(self, values):
        if self._nl_mult is None and self._mask is None:
            return values
        hat = np.fft.fftn(values, axes=tuple(range(self.grid.dims)))
        if self._nl_mult is not None:
            hat = hat * self._nl_mult[..., None]
        if self._mask is not None:
            hat = hat * self._mask[..., None]
        return np.fft.ifftn(hat, axes=tuple(range(self.grid.dims)))

    def _rhs(self, u, rho):
        """du/dt (or du/dtau) from everything outside the exact linear factor."""
        cfg = self.config
        eps = cfg.epsilon
        model = cfg.model
        drho = None
        if model == "envelope_exact":
            med = cfg.medium
            du = eps * self._fenv_four(u)
            du[..., 2] -= eps ** (1.0 + med.p) * med.omega1 * u[..., 2]
        elif model == "full_dispersion":
            med = cfg.medium
            r = eps * self._fenv_four(u)
            r[..., 2] -= eps ** (1.0 + med.p) * med.omega1 * u[..., 2]
            hat = np.fft.fft(r, axis=0)
            hat = np.einsum("nij,nj->ni", self._proj_table, hat)
            if self._mask is not None:
                hat = hat * self._mask[..., None]
            du = np.fft.ifft(hat, axis=0)
        elif model in ("nls", "nls_improved", "nls_polarized"):
            du = self._apply_nl_mult(eps * self._dim_nl_point(u[..., 0])[..., None])
        elif model in ("family_scalar", "family_vect"):
            du = self._apply_nl_mult(self._nl_point(u))
        elif model == "ionized_fixed_frame":
            du0, drho = ionization_rhs(u[..., 0], rho, cfg)
            du = du0[..., None]
        elif model == "general_ionized":
            ion = cfg.ionization
            v = u[..., 0]
            mag2 = np.abs(v) ** 2
            bracket = (mag2 - rho) * v + 1j * ion.c * (
                ion.alpha4 * mag2 ** (ion.K - 1) + ion.alpha5 * rho) * v
            du = self._apply_nl_mult(1j * eps * bracket[..., None])
            drho = eps * ion.alpha4 * mag2 ** ion.K + eps * ion.alpha5 * rho * mag2
        elif model == "ionized_moving_frame":
            ion = cfg.ionization
            v = u[..., 0]
            rho_t = rho_tilde_solve(v, cfg, self.grid)
            mag2 = np.abs(v) ** 2
            loss = ion.c * (ion.alpha4 * mag2 ** (ion.K - 1) + ion.alpha5 * rho_t)
            du = (1j * (mag2 - rho_t) * v - loss * v)[..., None]
        else:  # pragma: no cover
            raise ModelConfigError(f"unhandled model '{model}'")
        return du, drho

    def _substep(self, u, rho, h):
        if self._strategy == "phase":
            s = np.sum(np.abs(u) ** 2, axis=-1)
            u = u * np.exp(1j * h * self._phase_rate(s))[..., None]
            return u, rho
        k1u, k1r = self._rhs(u, rho)
        k2u, k2r = self._rhs(u + 0.5 * h * k1u, None if rho is None else rho + 0.5 * h * k1r)
        k3u, k3r = self._rhs(u + 0.5 * h * k2u, None if rho is None else rho + 0.5 * h * k2r)
        k4u, k4r = self._rhs(u + h * k3u, None if rho is None else rho + h * k3r)
        u = u + (h / 6.0) * (k1u + 2 * k2u + 2 * k3u + k4u)
        if rho is not None and k1r is not None:
            rho = rho + (h / 6.0) * (k1r + 2 * k2r + 2 * k3r + k4r)
        return u, rho

    def _linear_factor(self, dt: float):
        cached = self._lin_cache.get(dt)
        if cached is not None:
            return cached
        factor = np.exp(-dt * self._lin_symbol)
        self._lin_cache[dt] = factor
        return factor

    # -- public stepping -----------------------------------------------------

    def initial_state(self, u0, density0=None) -> EnvelopeState:
        u0 = np.asarray(u0, dtype=complex)
        if u0.shape == self.grid.shape:
            u0 = u0[..., None]
        if u0.shape != self.grid.shape + (self._ncomp,):
            raise ModelConfigError(
                f"initial envelope shape {u0.shape} incompatible with grid "
                f"{self.grid.shape} and {self._ncomp} component(s)")
        density = None
        if self.config.model in ("ionized_fixed_frame", "general_ionized"):
            density = np.zeros(self.grid.shape) if density0 is None else np.asarray(density0, float)
            if np.any(density < 0):
                raise ModelConfigError("electron density must be nonnegative")
        elif self.config.model == "ionized_moving_frame":
            density = rho_tilde_solve(u0[..., 0], self.config, self.grid)
        return EnvelopeState(self.grid, SpectralField(self.grid, u0), density, 0.0)

    def step(self, state: EnvelopeState, dt: float) -> EnvelopeState:
        if not (dt > 0):
            raise ValueError("dt must be positive")
        u = state.u.values
        rho = state.density if self.config.model in ("ionized_fixed_frame",
                                                     "general_ionized") else None
        u, rho = self._substep(u, rho, dt / 2.0)
        factor = self._linear_factor(dt)
        axes = tuple(range(self.grid.dims))
        hat = np.fft.fftn(u, axes=axes)
        hat = hat * factor[..., None]
        u = np.fft.ifftn(hat, axes=axes)
        u, rho = self._substep(u, rho, dt / 2.0)
        if not np.all(np.isfinite(u)):
            raise SimulationAbort("non-finite envelope values", state.time + dt)
        density = state.density
        if self.config.model in ("ionized_fixed_frame", "general_ionized"):
            density = rho
        elif self.config.model == "ionized_moving_frame":
            density = rho_tilde_solve(u[..., 0], self.config, self.grid)
        return EnvelopeState(state.grid, SpectralField(state.grid, u), density,
                             state.time + dt)

    def run(self, state: EnvelopeState, dt: float, n_steps: int,
            snapshot_steps=(), series_stride: int = 1,
            amp_factor: float = 1e6, grad_factor: float = 1e3) -> "EnvelopeRunResult":
        """Fixed-step integration with diagnostics series and halt-on-blow-up.

        The run stops early with status ``blowup_suspected`` when max|u|
        exceeds ``amp_factor`` times its initial value or the gradient norm
        exceeds ``grad_factor`` times its initial value; non-finite values
        stop it with status ``aborted``.  Thresholds are recorded in the
        report.
        """
        snapshot_steps = set(int(s) for s in snapshot_steps)
        amp0 = float(np.max(np.abs(state.u.values)))
        grad0 = diagnostics.grad_norm(state.u)
        rows = [self._series_row(state)]
        snapshots = []
        if 0 in snapshot_steps:
            snapshots.append((state.time, state.copy()))
        status = "completed"
        for n in range(1, n_steps + 1):
            try:
                state = self.step(state, dt)
            except SimulationAbort:
                status = "aborted"
                break
            record = n % series_stride == 0 or n == n_steps
            amp = float(np.max(np.abs(state.u.values)))
            grad = diagnostics.grad_norm(state.u)
            if (amp0 > 0 and amp > amp_factor * amp0) or \
               (grad0 > 0 and grad > grad_factor * grad0):
                status = "blowup_suspected"
                record = True
            if record:
                rows.append(self._series_row(state))
            if n in snapshot_steps:
                snapshots.append((state.time, state.copy()))
            if status != "completed":
                break
        report = diagnostics.build_report(np.asarray(rows), self._series_columns(),
                                          status, thresholds={"amp_factor": amp_factor,
                                                              "grad_factor": grad_factor})
        return EnvelopeRunResult(state=state, report=report, snapshots=snapshots)

    def _series_columns(self):
        momentum_cols = tuple(f"momentum_{ax}" for ax in ("x", "z")[-self.grid.dims:])
        return ("t", "mass", "energy") + momentum_cols + ("max_abs_u", "grad_norm", "max_rho")

    def _series_row(self, state: EnvelopeState):
        mass = diagnostics.mass(state)
        try:
            energy = diagnostics.energy(state, self.config)
        except (ValueError, ModelConfigError):
            energy = np.nan
        mom = diagnostics.momentum(state)
        amp = float(np.max(np.abs(state.u.values)))
        grad = diagnostics.grad_norm(state.u)
        rho_max = 0.0 if state.density is None else float(np.max(state.density))
        return (state.time, mass, energy, *mom, amp, grad, rho_max)


@dataclass
class EnvelopeRunResult:
    state: EnvelopeState
    report: "diagnostics.RunReport"
    snapshots: list[tuple[float, EnvelopeState]] = field(default_factory=list)


_SOLVER_CACHE: dict[tuple, EnvelopeSolver] = {}


def make_solver(config: ModelConfig, grid: GridSpec) -> EnvelopeSolver:
    key = (config, grid)
    solver = _SOLVER_CACHE.get(key)
    if solver is None:
        solver = EnvelopeSolver(config, grid)
        _SOLVER_CACHE[key] = solver
    return solver


def envelope_step(state: EnvelopeState, dt: float, config: ModelConfig) -> EnvelopeState:
    """Advance an envelope state by one Strang step of the configured model."""
    return make_solver(config, state.grid).step(state, dt)

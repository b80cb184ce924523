"""Dispersion branches, eigenprojectors, and envelope-equation coefficients.

The linearized oscillator medium has the Hermitian symbol L0(k) = A(k) + E/i
acting on the 12-component state (magnetic field, electric field, scaled
polarization velocity, scaled polarization).  Its characteristic set has seven
sheets: three constant ones, omega in {0, +sqrt(gamma + omega0^2),
-sqrt(gamma + omega0^2)}, and four curved ones solving the quartic

    omega^4 - omega^2 (omega0^2 + gamma + k^2) + omega0^2 k^2 = 0,

namely omega_{s1,s2}(k) = s1/sqrt(2) * sqrt(omega0^2 + gamma + k^2 + s2*sqrt(D))
with D = (omega0^2 + gamma + k^2)^2 - 4 omega0^2 k^2 > 0 whenever gamma > 0.
Everything the envelope reductions need (group velocity, curvature, projector
blocks, cubic gain, self-steepening and damping coefficients) is derived here
in closed form; finite differences appear only in tests as an oracle.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

RESONANCE_TOL = 1e-8


class DispersionError(ValueError):
    """Raised for singular or out-of-domain dispersion evaluations."""


@dataclass(frozen=True)
class IonizationParams:
    """Ionization constants: field-equation losses (c0, c1, c2), density source
    exponents (K-photon, collisional), and the envelope-level coupling (c,
    alpha4, alpha5)."""

    c: float = 1.0
    c0: float = 0.0
    c1: float = 0.0
    c2: float = 0.0
    K: int = 1
    alpha4: float = 0.0
    alpha5: float = 0.0

    def __post_init__(self):
        for name in ("c", "c0", "c1", "c2", "alpha4", "alpha5"):
            if getattr(self, name) < 0:
                raise ValueError(f"ionization constant {name} must be >= 0")
        if not (isinstance(self.K, int) and self.K >= 1):
            raise ValueError("photon number K must be an integer >= 1")


NONLINEARITY_KINDS = ("cubic", "cubic_quintic", "saturated")


@dataclass(frozen=True)
class MediumParams:
    """Dimensionless medium constants of the oscillator model."""

    gamma: float
    omega0: float
    omega1: float = 0.0
    p: float = 1.0
    nonlinearity: str = "cubic"
    r: float = 1.0
    a_tilde: float = 1.0
    ionization: IonizationParams | None = None

    def __post_init__(self):
        if self.gamma < 0:
            raise ValueError("coupling gamma must be >= 0")
        if not (self.omega0 > 0):
            raise ValueError("resonance omega0 must be > 0")
        if self.omega1 < 0:
            raise ValueError("damping omega1 must be >= 0")
        if not (self.p > 0):
            raise ValueError("damping exponent p must be > 0")
        if self.nonlinearity not in NONLINEARITY_KINDS:
            raise ValueError(f"nonlinearity must be one of {NONLINEARITY_KINDS}")
        if not (self.r > 0):
            raise ValueError("saturation exponent r must be > 0")


@dataclass(frozen=True)
class BranchId:
    """One of the seven sheets: four curved (sign pair) or three constant."""

    family: str
    signs: tuple[int, int] | None = None
    level: int | None = None

    def __post_init__(self):
        if self.family == "curved":
            if self.signs is None or self.signs[0] not in (-1, 1) or self.signs[1] not in (-1, 1):
                raise ValueError("curved branch needs signs in {-1,+1}^2")
        elif self.family == "constant":
            if self.level not in (-1, 0, 1):
                raise ValueError("constant branch needs level in {-1,0,+1}")
        else:
            raise ValueError("family must be 'curved' or 'constant'")

    @staticmethod
    def curved(s1: int, s2: int) -> "BranchId":
        return BranchId("curved", signs=(s1, s2))

    @staticmethod
    def constant(level: int) -> "BranchId":
        return BranchId("constant", level=level)

    def label(self) -> str:
        if self.family == "curved":
            pm = {1: "p", -1: "m"}
            return f"curved_{pm[self.signs[0]]}{pm[self.signs[1]]}"
        names = {1: "plus", 0: "zero", -1: "minus"}
        return f"constant_{names[self.level]}"


CURVED_BRANCHES = tuple(BranchId.curved(s1, s2) for s1 in (1, -1) for s2 in (1, -1))
CONSTANT_BRANCHES = tuple(BranchId.constant(level) for level in (0, 1, -1))
ALL_BRANCHES = CURVED_BRANCHES + CONSTANT_BRANCHES


def branch_from_label(label: str) -> BranchId:
    table = {b.label(): b for b in ALL_BRANCHES}
    aliases = {"++": BranchId.curved(1, 1), "+-": BranchId.curved(1, -1),
               "-+": BranchId.curved(-1, 1), "--": BranchId.curved(-1, -1)}
    table.update(aliases)
    if label not in table:
        raise ValueError(f"unknown branch '{label}'; use one of {sorted(table)}")
    return table[label]


def omega_curved(k, signs: tuple[int, int], medium: MediumParams):
    """Curved sheet value(s) at |k| (vectorized in k).

    The discriminant is evaluated as (omega0^2 + gamma - k^2)^2 + 4 gamma k^2,
    which is cancellation-free (the equivalent difference-of-squares form
    loses all precision when gamma is small and k is near omega0).
    """
    k = np.abs(np.asarray(k, dtype=float))
    c = medium.omega0 ** 2 + medium.gamma
    disc = (c - k ** 2) ** 2 + 4 * medium.gamma * k ** 2
    inner = c + k ** 2 + signs[1] * np.sqrt(disc)
    return signs[0] * np.sqrt(np.maximum(inner, 0.0) / 2.0)


def omega_branch(k, branch: BranchId, medium: MediumParams):
    if branch.family == "curved":
        return omega_curved(k, branch.signs, medium)
    value = branch.level * np.sqrt(medium.gamma + medium.omega0 ** 2)
    return np.full_like(np.asarray(k, dtype=float), value) if np.ndim(k) else value


def omega_branches(k: float, medium: MediumParams) -> dict[BranchId, float]:
    """All seven sheet values at wavenumber modulus k >= 0."""
    if k < 0:
        raise DispersionError("wavenumber modulus must be >= 0")
    return {b: float(omega_branch(k, b, medium)) for b in ALL_BRANCHES}


def quartic_residual(omega, k, medium: MediumParams):
    """Defining polynomial of the curved sheets evaluated at (omega, k)."""
    c = medium.omega0 ** 2 + medium.gamma
    return omega ** 4 - omega ** 2 * (c + np.asarray(k) ** 2) + medium.omega0 ** 2 * np.asarray(k) ** 2


# ---------------------------------------------------------------------------
# 12x12 state machinery (3-d wavenumbers)

def _cross_matrix(v: np.ndarray) -> np.ndarray:
    x, y, z = v
    return np.array([[0.0, -z, y], [z, 0.0, -x], [-y, x, 0.0]])


def a_matrix(kvec) -> np.ndarray:
    """Symmetric symbol A(k) of the transport part (curl block structure)."""
    kvec = np.asarray(kvec, dtype=float)
    K = _cross_matrix(kvec)
    out = np.zeros((12, 12))
    out[0:3, 3:6] = K
    out[3:6, 0:3] = -K
    return out


def e_matrix(medium: MediumParams) -> np.ndarray:
    """Skew-symmetric stiff coupling matrix."""
    g = np.sqrt(medium.gamma)
    w0 = medium.omega0
    out = np.zeros((12, 12))
    eye = np.eye(3)
    out[3:6, 6:9] = g * eye
    out[6:9, 3:6] = -g * eye
    out[6:9, 9:12] = w0 * eye
    out[9:12, 6:9] = -w0 * eye
    return out


def a0_matrix(medium: MediumParams) -> np.ndarray:
    """Damping matrix acting on the polarization-velocity block."""
    out = np.zeros((12, 12))
    out[6:9, 6:9] = medium.omega1 * np.eye(3)
    return out


def l_matrix(omega: float, kvec, medium: MediumParams) -> np.ndarray:
    """Hermitian pencil -omega*I + A(k) + E/i."""
    return -omega * np.eye(12) + a_matrix(kvec) + e_matrix(medium) / 1j


def polarization_lift(e, omega: float, kvec, medium: MediumParams) -> np.ndarray:
    """Lift a transverse electric amplitude to the full 12-component state.

    Requires e orthogonal to k and omega away from {0, +-omega0}; the magnetic
    and oscillator components are slaved:
    b = (1/omega) k x e  (the sign Faraday's law forces for the carrier phase
    e^{i(k.x - w t)/eps}),
    q = i*omega*sqrt(gamma)/(omega^2 - omega0^2) e,
    p = -omega0*sqrt(gamma)/(omega^2 - omega0^2) e.
    """
    e = np.asarray(e, dtype=complex)
    kvec = np.asarray(kvec, dtype=float)
    if abs(omega) < RESONANCE_TOL or abs(omega ** 2 - medium.omega0 ** 2) < RESONANCE_TOL:
        raise DispersionError(f"lift undefined at omega={omega} (singular denominator)")
    knorm = np.linalg.norm(kvec)
    enorm = np.linalg.norm(e)
    if enorm > 0 and abs(np.dot(kvec, e)) > 1e-9 * knorm * enorm:
        raise DispersionError("electric amplitude must be orthogonal to the wavenumber")
    denom = omega ** 2 - medium.omega0 ** 2
    g = np.sqrt(medium.gamma)
    b = np.cross(kvec, e) / omega
    q = 1j * omega * g / denom * e
    p = -medium.omega0 * g / denom * e
    return np.concatenate([b, e, q, p])


def _transverse_basis(kvec: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    khat = kvec / np.linalg.norm(kvec)
    trial = np.array([0.0, 0.0, 1.0])
    if abs(np.dot(trial, khat)) > 0.9:
        trial = np.array([1.0, 0.0, 0.0])
    e1 = np.cross(khat, trial)
    e1 /= np.linalg.norm(e1)
    e2 = np.cross(khat, e1)
    return e1, e2


def projector(branch: BranchId, kvec, medium: MediumParams) -> np.ndarray:
    """Rank-2 eigenprojector of a curved sheet at kvec != 0.

    Built as sum_j v_j v_j^* / |v_j|^2 over the lifts of an orthonormal
    transverse basis; the squared lift norm equals
    N(k)^2 = k^2/omega^2 + 1 + gamma (omega^2 + omega0^2)/(omega^2 - omega0^2)^2.
    """
    if branch.family != "curved":
        raise DispersionError("projector closed form exists for curved branches only")
    kvec = np.asarray(kvec, dtype=float)
    k = np.linalg.norm(kvec)
    if k == 0:
        raise DispersionError("projector undefined at kvec = 0")
    omega = float(omega_curved(k, branch.signs, medium))
    if abs(omega) < RESONANCE_TOL:
        raise DispersionError("projector undefined where the sheet crosses omega = 0")
    out = np.zeros((12, 12), dtype=complex)
    for e in _transverse_basis(kvec):
        v = polarization_lift(e, omega, kvec, medium)
        out += np.outer(v, v.conj()) / np.vdot(v, v).real
    return out


def all_projectors(kvec, medium: MediumParams) -> dict[BranchId, np.ndarray]:
    """Curved projectors in closed form; constant-sheet ones by completing the
    spectral decomposition of A(k) + E/i numerically."""
    kvec = np.asarray(kvec, dtype=float)
    out = {b: projector(b, kvec, medium) for b in CURVED_BRANCHES}
    l0 = a_matrix(kvec) + e_matrix(medium) / 1j
    vals, vecs = np.linalg.eigh(l0)
    k = np.linalg.norm(kvec)
    curved_vals = [float(omega_curved(k, b.signs, medium)) for b in CURVED_BRANCHES]
    const_vals = {b: b.level * np.sqrt(medium.gamma + medium.omega0 ** 2)
                  for b in CONSTANT_BRANCHES}
    for b in CONSTANT_BRANCHES:
        out[b] = np.zeros((12, 12), dtype=complex)
    for i, val in enumerate(vals):
        dists = {b: abs(val - v) for b, v in const_vals.items()}
        nearest_const = min(dists, key=dists.get)
        if dists[nearest_const] < min(abs(val - cv) for cv in curved_vals):
            v = vecs[:, i]
            out[nearest_const] += np.outer(v, v.conj())
    return out


def group_velocity_and_gvd(branch: BranchId, k: float, medium: MediumParams) -> tuple[float, float]:
    """(omega'(k), omega''(k)) by implicit differentiation of the quartic."""
    if branch.family != "curved":
        return 0.0, 0.0
    if not (k > 0):
        raise DispersionError("group velocity needs k > 0")
    c = medium.omega0 ** 2 + medium.gamma
    w = float(omega_curved(k, branch.signs, medium))
    g_w = 4 * w ** 3 - 2 * w * (c + k ** 2)
    if abs(g_w) < 1e-14:
        raise DispersionError("degenerate branch point: dG/domega = 0")
    g_k = 2 * k * (medium.omega0 ** 2 - w ** 2)
    wp = -g_k / g_w
    g_ww = 12 * w ** 2 - 2 * (c + k ** 2)
    g_wk = -4 * w * k
    g_kk = 2 * (medium.omega0 ** 2 - w ** 2)
    wpp = -(g_ww * wp ** 2 + 2 * g_wk * wp + g_kk) / g_w
    return float(wp), float(wpp)


def radial_hessian(branch: BranchId, k0: float, medium: MediumParams, dims: int) -> np.ndarray:
    """Hessian of the radially symmetric sheet at k0*e_z: (omega'/k) on the
    transverse block, omega'' along the propagation axis (last coordinate)."""
    wp, wpp = group_velocity_and_gvd(branch, k0, medium)
    h = np.eye(dims) * (wp / k0)
    h[-1, -1] = wpp
    return h


def omega_nls(kprime, k0: float, branch: BranchId, medium: MediumParams):
    """Second-order Taylor approximant of the sheet around k0, evaluated at
    scalar wavenumbers along the carrier axis (kprime may be an array of
    samples).  Use :func:`omega_nls_vec` for d-dimensional wavevectors."""
    if not (k0 > 0):
        raise DispersionError("carrier k0 must be > 0")
    w0 = float(omega_branch(k0, branch, medium))
    wp, wpp = group_velocity_and_gvd(branch, k0, medium)
    delta = np.asarray(kprime, dtype=float) - k0
    return w0 + wp * delta + 0.5 * wpp * delta ** 2


def omega_nls_vec(kprime, k0: float, branch: BranchId, medium: MediumParams):
    """Taylor approximant at wavevectors stacked on the last axis; the carrier
    sits at k0 times the last coordinate direction."""
    if not (k0 > 0):
        raise DispersionError("carrier k0 must be > 0")
    w0 = float(omega_branch(k0, branch, medium))
    wp, _ = group_velocity_and_gvd(branch, k0, medium)
    kprime = np.asarray(kprime, dtype=float)
    dims = kprime.shape[-1]
    h = radial_hessian(branch, k0, medium, dims)
    kcar = np.zeros(dims)
    kcar[-1] = k0
    delta = kprime - kcar
    quad = np.einsum("...i,ij,...j->...", delta, h, delta)
    return w0 + wp * delta[..., -1] + 0.5 * quad


def omega_imp(kprime, k0: float, branch: BranchId, fit, medium: MediumParams):
    """Rational improvement of the Taylor approximant.

    With delta = k' - k0, b and B the carrier-axis fit entries and the tied
    third-order operator (the one cancelling third-order terms in the comoving
    frame),

        omega_imp = omega(k0) + [c_g delta + 1/2 (omega'' + 2 c_g b) delta^2
                     + c_g B delta^3] / (1 + b delta + B delta^2).

    ``kprime`` holds scalar samples along the carrier axis; use
    :func:`omega_imp_vec` for d-dimensional wavevectors.  Raises if the
    denominator is not positive on the requested points.
    """
    if not (k0 > 0):
        raise DispersionError("carrier k0 must be > 0")
    w0 = float(omega_branch(k0, branch, medium))
    wp, wpp = group_velocity_and_gvd(branch, k0, medium)
    b = np.asarray(fit.b, dtype=float)
    bmat = np.asarray(fit.B, dtype=float)
    delta = np.asarray(kprime, dtype=float) - k0
    bz = b[-1]
    bzz = bmat[-1, -1]
    num = wp * delta + 0.5 * (wpp + 2 * wp * bz) * delta ** 2 + wp * bzz * delta ** 3
    den = 1.0 + bz * delta + bzz * delta ** 2
    if np.any(den <= 0):
        raise DispersionError("improved-dispersion denominator is not positive on the window")
    return w0 + num / den


def omega_imp_vec(kprime, k0: float, branch: BranchId, fit, medium: MediumParams):
    """Rational approximant at wavevectors stacked on the last axis."""
    if not (k0 > 0):
        raise DispersionError("carrier k0 must be > 0")
    w0 = float(omega_branch(k0, branch, medium))
    wp, _ = group_velocity_and_gvd(branch, k0, medium)
    b = np.asarray(fit.b, dtype=float)
    bmat = np.asarray(fit.B, dtype=float)
    kprime = np.asarray(kprime, dtype=float)
    dims = b.shape[0]
    kcar = np.zeros(dims)
    kcar[-1] = k0
    delta = kprime - kcar
    h = radial_hessian(branch, k0, medium, dims)
    hb = h + 2 * wp * np.outer(_unit_z(dims), b)
    quad = np.einsum("...i,ij,...j->...", delta, hb, delta)
    bquad = np.einsum("...i,ij,...j->...", delta, bmat, delta)
    num = wp * delta[..., -1] + 0.5 * quad + wp * bquad * delta[..., -1]
    den = 1.0 + np.einsum("i,...i->...", b, delta) + bquad
    if np.any(den <= 0):
        raise DispersionError("improved-dispersion denominator is not positive on the window")
    return w0 + num / den


def _unit_z(dims: int) -> np.ndarray:
    ez = np.zeros(dims)
    ez[-1] = 1.0
    return ez


@dataclass(frozen=True)
class NlsCoefficients:
    """Coefficients of the carrier-frame cubic envelope reduction at (k, branch)."""

    c_g: float
    diffraction: float
    gvd: float
    alpha1: int
    alpha2: float
    cubic_gain: float
    alpha3: float
    n_sq: float


def n_squared(k: float, omega: float, medium: MediumParams) -> float:
    denom = omega ** 2 - medium.omega0 ** 2
    return k ** 2 / omega ** 2 + 1.0 + medium.gamma * (omega ** 2 + medium.omega0 ** 2) / denom ** 2


def nls_coefficients(k: float, branch: BranchId, medium: MediumParams,
                     epsilon: float) -> NlsCoefficients:
    """Closed-form reduction coefficients; errors at the oscillator resonance."""
    if branch.family != "curved":
        raise DispersionError("envelope reductions ride on curved branches")
    if not (k > 0):
        raise DispersionError("carrier k must be > 0")
    omega = float(omega_curved(k, branch.signs, medium))
    denom = omega ** 2 - medium.omega0 ** 2
    if abs(denom) < RESONANCE_TOL:
        raise DispersionError(f"carrier sits on the oscillator resonance (omega^2 == omega0^2)")
    wp, wpp = group_velocity_and_gvd(branch, k, medium)
    nsq = n_squared(k, omega, medium)
    alpha1 = 0 if abs(wpp) < 1e-12 else int(np.sign(wpp))
    alpha2 = epsilon ** medium.p * medium.omega1 * medium.gamma * omega ** 2 / denom ** 2
    gain = medium.gamma ** 3 * omega / (nsq * denom ** 4)
    alpha3 = 0.0 if medium.gamma == 0 else -denom / (np.sqrt(medium.gamma) * omega)
    return NlsCoefficients(c_g=wp, diffraction=wp / (2 * k), gvd=wpp / 2.0,
                           alpha1=alpha1, alpha2=float(alpha2), cubic_gain=float(gain),
                           alpha3=float(alpha3), n_sq=float(nsq))


def is_nonresonant(k: float, branch: BranchId, medium: MediumParams,
                   tol: float = 1e-6) -> bool:
    """Check that the odd harmonics (2p+3)(omega, k), for all p >= 0 with
    p*r < 1, avoid every sheet of the characteristic set.

    The quartic residual is normalized by the magnitude of its terms so the
    tolerance is scale-free; proximity to the constant sheets is checked too.
    """
    omega = float(omega_branch(k, branch, medium))
    c = medium.omega0 ** 2 + medium.gamma
    p = 0
    while p * medium.r < 1:
        n = 2 * p + 3
        for sign in (1, -1):
            wh, kh = sign * n * omega, sign * n * k
            scale = max(1.0, wh ** 4 + wh ** 2 * (c + kh ** 2)
                        + medium.omega0 ** 2 * kh ** 2)
            if abs(quartic_residual(wh, kh, medium)) / scale < tol:
                return False
            if min(abs(wh), abs(wh - np.sqrt(c)), abs(wh + np.sqrt(c))) < tol:
                return False
        p += 1
    return True


# ---------------------------------------------------------------------------
# Transverse-polarization reduction to four real components (1-d runs)

def reduced_matrices(medium: MediumParams) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """(A1, E4, A0) of the 4-component reduction (B_y, E_x, Q_x, P_x) along z."""
    g = np.sqrt(medium.gamma)
    w0 = medium.omega0
    a1 = np.array([[0.0, 1, 0, 0], [1, 0, 0, 0], [0, 0, 0, 0], [0, 0, 0, 0]])
    e4 = np.array([[0.0, 0, 0, 0], [0, 0, g, 0], [0, -g, 0, w0], [0, 0, -w0, 0]])
    a0 = np.diag([0.0, 0, medium.omega1, 0])
    return a1, e4, a0


def reduced_hamiltonian(kappa, medium: MediumParams) -> np.ndarray:
    """Hermitian symbol kappa*A1 + E4/i of the reduction, stacked over kappa."""
    a1, e4, _ = reduced_matrices(medium)
    kappa = np.asarray(kappa, dtype=float)
    return kappa[..., None, None] * a1 + (e4 / 1j)


def polarization_vector_1d(kappa, branch: BranchId, medium: MediumParams) -> np.ndarray:
    """Transverse-reduction eigenvector (E-component normalized to 1) at signed
    wavenumber kappa, stacked over kappa.

    Wavenumbers within 1e-8 of zero are clamped (keeping the sign) so sheets
    that cross omega = 0 stay evaluable; the affected mode carries no physical
    envelope content in any run this package performs.
    """
    if branch.family != "curved":
        raise DispersionError("polarized states ride on curved branches")
    kappa = np.asarray(kappa, dtype=float)
    sign = np.where(kappa >= 0, 1.0, -1.0)
    kap = sign * np.maximum(np.abs(kappa), 1e-8)
    omega = omega_curved(kap, branch.signs, medium)
    denom = omega ** 2 - medium.omega0 ** 2
    g = np.sqrt(medium.gamma)
    out = np.empty(np.shape(kap) + (4,), dtype=complex)
    out[..., 0] = kap / omega
    out[..., 1] = 1.0
    out[..., 2] = 1j * omega * g / denom
    out[..., 3] = -medium.omega0 * g / denom
    return out


def projector_1d(kappa, branch: BranchId, medium: MediumParams) -> np.ndarray:
    """Rank-1 projector table of the reduced system, stacked over kappa."""
    v = polarization_vector_1d(kappa, branch, medium)
    nsq = np.sum(np.abs(v) ** 2, axis=-1)
    return v[..., :, None] * v[..., None, :].conj() / nsq[..., None, None]

"""Fit the improved-dispersion parameters (b, B) on a wavenumber window.

The improved linear propagator replaces the quadratic Taylor approximant of a
dispersion sheet by a rational one whose parameters must keep the operator
1 - i*eps*b.grad - eps^2 div(B grad) invertible: B symmetric positive
semidefinite, b in Range(B), and 4 - b.(B^+ b) > 0.  The third-order operator
is tied to (b, B) as the choice cancelling residual third-order terms in the
comoving frame, so only (b, B) are searched.  The objective is the sup-norm
dispersion mismatch on a uniformly sampled window, evaluated through the same
code path (`omega_imp`) the solvers use.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .dispersion import (BranchId, DispersionError, MediumParams, RESONANCE_TOL,
                         omega_branch, omega_imp, omega_imp_vec, omega_nls,
                         omega_nls_vec)


class FitError(ValueError):
    """Raised when a fit window is inadmissible."""


@dataclass(frozen=True)
class FitResult:
    """Admissible improved-dispersion parameters and their window performance."""

    b: tuple[float, ...]
    B: tuple[tuple[float, ...], ...]
    k0: float
    half_width: float
    sup_error: float
    nls_sup_error: float
    c3_tied: bool = True

    @property
    def dims(self) -> int:
        return len(self.b)

    def b_vec(self) -> np.ndarray:
        return np.asarray(self.b, dtype=float)

    def b_mat(self) -> np.ndarray:
        return np.asarray(self.B, dtype=float)


def zero_fit(dims: int = 1, k0: float = 0.0, half_width: float = 0.0,
             sup_error: float = np.nan, nls_sup_error: float = np.nan) -> FitResult:
    b = tuple(0.0 for _ in range(dims))
    bmat = tuple(tuple(0.0 for _ in range(dims)) for _ in range(dims))
    return FitResult(b=b, B=bmat, k0=k0, half_width=half_width,
                     sup_error=sup_error, nls_sup_error=nls_sup_error)


def check_hyp(b, B, tol: float = 1e-10) -> tuple[bool, str]:
    """Admissibility of (b, B): returns (ok, diagnostic naming the first failure).

    Conditions: B symmetric positive semidefinite; b in Range(B);
    4 - b.(B^+ b) > 0 (the scalar is well defined through the pseudo-inverse).
    """
    b = np.atleast_1d(np.asarray(b, dtype=float))
    B = np.atleast_2d(np.asarray(B, dtype=float))
    if B.shape != (b.size, b.size):
        raise ValueError(f"shape mismatch: b has size {b.size}, B has shape {B.shape}")
    if not np.allclose(B, B.T, atol=tol):
        return False, "B is not symmetric"
    eigvals = np.linalg.eigvalsh(0.5 * (B + B.T))
    if eigvals.min() < -tol:
        return False, f"B is not positive semidefinite (min eigenvalue {eigvals.min():.3e})"
    scale = max(1.0, float(np.linalg.norm(b)))
    sol, residual, *_ = np.linalg.lstsq(B, b, rcond=None)
    if np.linalg.norm(B @ sol - b) > 1e-8 * scale:
        return False, "b is not in the range of B"
    quad = float(b @ np.linalg.pinv(B) @ b)
    if not (4.0 - quad > 0):
        return False, f"4 - b.(B^-1 b) = {4.0 - quad:.6g} is not positive"
    return True, "ok"


def _window_errors(branch: BranchId, k0: float, half_width: float,
                   medium: MediumParams, fit: FitResult, n_window: int) -> float:
    kk = np.linspace(k0 - half_width, k0 + half_width, n_window)
    exact = omega_branch(kk, branch, medium)
    return float(np.max(np.abs(omega_imp(kk, k0, branch, fit, medium) - exact)))


def _candidate_fit(b: float, B: float, k0: float, hw: float) -> FitResult:
    return FitResult(b=(float(b),), B=((float(B),),), k0=k0, half_width=hw,
                     sup_error=np.nan, nls_sup_error=np.nan)


def fit_improved(branch: BranchId, k0: float, half_width: float,
                 medium: MediumParams, dims: int = 1, n_window: int = 201,
                 grid_points: int = 64, refine: bool = True) -> FitResult:
    """Grid search + one local refinement for (b, B) minimizing the sup-norm
    dispersion mismatch over [k0 - half_width, k0 + half_width].

    The zero fit is always a candidate, so sup_error <= nls_sup_error.  Ties
    break lexicographically in (b, B) for reproducibility.  1-d search space:
    b in {0} union a log grid on [1e-3, 4], B on a log grid on [1e-6, 4];
    the log grids nest when grid_points doubles as 2n-1, so enlarging the
    search never worsens the result (with refine=False).  In 2 dimensions b
    stays along the carrier and B diagonal; the transverse entry is searched
    on a coarse log grid against a planar window.
    """
    if not (k0 - half_width > 0):
        raise FitError("window must stay inside k > 0 (sheets are radial)")
    kk = np.linspace(k0 - half_width, k0 + half_width, n_window)
    omega_sq = omega_branch(kk, branch, medium) ** 2
    if np.min(np.abs(omega_sq - medium.omega0 ** 2)) < RESONANCE_TOL:
        raise FitError("window touches the oscillator resonance")
    exact = omega_branch(kk, branch, medium)
    nls_sup = float(np.max(np.abs(omega_nls(kk, k0, branch, medium) - exact)))

    if dims == 1:
        best = _search_1d(branch, k0, half_width, medium, n_window, nls_sup,
                          grid_points, refine)
    elif dims == 2:
        best = _search_2d(branch, k0, half_width, medium, nls_sup)
    else:
        raise FitError("dims must be 1 or 2")

    ok, why = check_hyp(best.b_vec(), best.b_mat())
    if not ok:
        raise FitError(f"internal error: selected fit violates admissibility: {why}")
    return best


def _admissible_1d(b: float, B: float) -> bool:
    if b == 0.0 and B == 0.0:
        return True
    if B <= 0.0:
        return False
    return 4.0 - b * b / B > 0.0


def _search_1d(branch, k0, hw, medium, n_window, nls_sup, grid_points, refine) -> FitResult:
    b_grid = np.concatenate([[0.0], np.logspace(-3, np.log10(4.0), grid_points)])
    big_grid = np.logspace(-6, np.log10(4.0), grid_points)

    def evaluate(pairs):
        best_pair, best_err = (0.0, 0.0), nls_sup
        for b, B in pairs:
            if not _admissible_1d(b, B):
                continue
            try:
                err = _window_errors(branch, k0, hw, medium,
                                     _candidate_fit(b, B, k0, hw), n_window)
            except DispersionError:
                continue
            if err < best_err - 1e-15 or (abs(err - best_err) <= 1e-15
                                          and (b, B) < best_pair):
                best_pair, best_err = (b, B), err
        return best_pair, best_err

    pairs = [(b, B) for b in b_grid for B in big_grid]
    pairs.append((0.0, 0.0))
    (b0, B0), err0 = evaluate(pairs)
    if refine and (b0, B0) != (0.0, 0.0):
        # refinement pass around the coarse optimum, one octave each way
        bs = np.concatenate([[0.0], np.geomspace(max(b0, 1e-4) / 2, min(b0 * 2, 8.0), 17)]) \
            if b0 > 0 else np.concatenate([[0.0], np.geomspace(1e-4, 1e-2, 9)])
        Bs = np.geomspace(B0 / 2, min(B0 * 2, 8.0), 17)
        (b1, B1), err1 = evaluate([(b, B) for b in bs for B in Bs])
        if err1 < err0:
            (b0, B0), err0 = (b1, B1), err1
    return FitResult(b=(float(b0),), B=((float(B0),),), k0=k0, half_width=hw,
                     sup_error=float(err0), nls_sup_error=float(nls_sup))


def _search_2d(branch, k0, hw, medium, nls_sup_1d) -> FitResult:
    n = 41
    dx = np.linspace(-hw, hw, n)
    dz = np.linspace(-hw, hw, n)
    mesh = np.stack(np.meshgrid(dx, k0 + dz, indexing="ij"), axis=-1)
    knorm = np.linalg.norm(mesh, axis=-1)
    exact = omega_branch(knorm, branch, medium)
    nls_sup = float(np.max(np.abs(omega_nls_vec(mesh, k0, branch, medium) - exact)))

    def eval_fit(bz, Bxx, Bzz):
        fit = FitResult(b=(0.0, float(bz)), B=((float(Bxx), 0.0), (0.0, float(Bzz))),
                        k0=k0, half_width=hw, sup_error=np.nan, nls_sup_error=np.nan)
        try:
            err = float(np.max(np.abs(omega_imp_vec(mesh, k0, branch, fit, medium) - exact)))
        except DispersionError:
            return None, np.inf
        return fit, err

    best_fit = FitResult(b=(0.0, 0.0), B=((0.0, 0.0), (0.0, 0.0)), k0=k0,
                         half_width=hw, sup_error=nls_sup, nls_sup_error=nls_sup)
    best_err, best_key = nls_sup, (0.0, 0.0, 0.0)
    bz_grid = np.concatenate([[0.0], np.logspace(-3, np.log10(4.0), 15)])
    diag_grid = np.concatenate([[0.0], np.logspace(-6, np.log10(4.0), 15)])
    for bz in bz_grid:
        for Bzz in diag_grid:
            if bz > 0 and (Bzz <= 0 or 4.0 - bz * bz / Bzz <= 0):
                continue
            for Bxx in diag_grid:
                fit, err = eval_fit(bz, Bxx, Bzz)
                if fit is None:
                    continue
                key = (bz, Bxx, Bzz)
                if err < best_err - 1e-15 or (abs(err - best_err) <= 1e-15 and key < best_key):
                    best_fit, best_err, best_key = fit, err, key
    return FitResult(b=best_fit.b, B=best_fit.B, k0=k0, half_width=hw,
                     sup_error=float(best_err), nls_sup_error=float(nls_sup))

import numpy as np
import pytest

from filamentlab.dispersion import (BranchId, MediumParams, omega_branch,
                                    omega_imp, omega_imp_vec, omega_nls)
from filamentlab.dispersion_fit import (FitError, FitResult, check_hyp,
                                        fit_improved, zero_fit)

MED = MediumParams(gamma=1.0, omega0=1.0)
LOWER = BranchId.curved(1, -1)


def test_check_hyp_zero_case():
    ok, why = check_hyp([0.0], [[0.0]])
    assert ok, why


def test_check_hyp_range_violation():
    ok, why = check_hyp([0.0, 0.0, 1.0], np.zeros((3, 3)))
    assert not ok and "range" in why


def test_check_hyp_scalar_inequality():
    ok, why = check_hyp(3.0 * np.array([0.0, 0.0, 1.0]), np.eye(3))
    assert not ok and "4 -" in why


def test_check_hyp_not_psd():
    ok, why = check_hyp([0.0], [[-1.0]])
    assert not ok and "semidefinite" in why


def test_check_hyp_shape_mismatch():
    with pytest.raises(ValueError):
        check_hyp([0.0, 1.0], [[1.0]])


def test_fit_beats_taylor_by_factor_two():
    fit = fit_improved(LOWER, 2.0, 1.5, MED)
    assert fit.sup_error <= 0.5 * fit.nls_sup_error
    ok, why = check_hyp(fit.b_vec(), fit.b_mat())
    assert ok, why


def test_fit_tiny_window_all_approximants_agree():
    fit = fit_improved(LOWER, 2.0, 1e-3, MED)
    # to second order every candidate matches; errors are third order in width
    assert fit.nls_sup_error < 1e-8
    assert fit.sup_error <= fit.nls_sup_error + 1e-15


def test_fit_scale_consistency_with_evaluator():
    fit = fit_improved(LOWER, 2.0, 1.5, MED)
    kk = np.linspace(2.0 - 1.5, 2.0 + 1.5, 201)
    sup = float(np.max(np.abs(omega_imp(kk, 2.0, LOWER, fit, MED)
                              - omega_branch(kk, LOWER, MED))))
    assert sup == pytest.approx(fit.sup_error, abs=1e-12)


def test_fit_monotone_under_grid_refinement():
    coarse = fit_improved(LOWER, 2.0, 1.5, MED, grid_points=17, refine=False)
    fine = fit_improved(LOWER, 2.0, 1.5, MED, grid_points=33, refine=False)
    assert fine.sup_error <= coarse.sup_error + 1e-15


def test_fit_rejects_bad_windows():
    with pytest.raises(FitError):
        fit_improved(LOWER, 1.0, 1.5, MED)  # window crosses k = 0
    med0 = MediumParams(gamma=0.0, omega0=1.0)
    with pytest.raises(FitError, match="resonance"):
        fit_improved(LOWER, 1.2, 0.5, med0)  # sheet w = w0 inside the window


def test_fit_2d_respects_constraints():
    fit = fit_improved(LOWER, 2.0, 1.0, MED, dims=2)
    assert fit.dims == 2
    assert fit.b[0] == 0.0  # b stays along the carrier
    bmat = fit.b_mat()
    assert bmat[0, 1] == 0.0 and bmat[1, 0] == 0.0  # diagonal B
    ok, why = check_hyp(fit.b_vec(), bmat)
    assert ok, why
    assert fit.sup_error <= fit.nls_sup_error


def test_fit_2d_evaluator_consistency():
    fit = fit_improved(LOWER, 2.0, 1.0, MED, dims=2)
    n = 41
    d = np.linspace(-1.0, 1.0, n)
    mesh = np.stack(np.meshgrid(d, 2.0 + d, indexing="ij"), axis=-1)
    exact = omega_branch(np.linalg.norm(mesh, axis=-1), LOWER, MED)
    sup = float(np.max(np.abs(omega_imp_vec(mesh, 2.0, LOWER, fit, MED) - exact)))
    assert sup == pytest.approx(fit.sup_error, rel=1e-10)


def test_zero_fit_helper():
    fit = zero_fit(2)
    assert fit.b == (0.0, 0.0)
    assert np.all(fit.b_mat() == 0)
    ok, _ = check_hyp(fit.b_vec(), fit.b_mat())
    assert ok

import numpy as np
import pytest

from filamentlab.dispersion import (ALL_BRANCHES, CURVED_BRANCHES, BranchId,
                                    DispersionError, MediumParams,
                                    all_projectors, branch_from_label,
                                    e_matrix, a_matrix, group_velocity_and_gvd,
                                    is_nonresonant, l_matrix, n_squared,
                                    nls_coefficients, omega_branch,
                                    omega_branches, omega_imp, omega_nls,
                                    polarization_lift, polarization_vector_1d,
                                    projector, quartic_residual,
                                    reduced_hamiltonian, reduced_matrices)
from filamentlab.dispersion_fit import zero_fit

RNG = np.random.default_rng(42)
MED = MediumParams(gamma=1.0, omega0=1.0)
UPPER = BranchId.curved(1, 1)
LOWER = BranchId.curved(1, -1)


def test_branch_values_at_origin():
    values = omega_branches(0.0, MediumParams(gamma=3.0, omega0=1.0))
    assert values[BranchId.constant(1)] == pytest.approx(2.0)
    assert values[BranchId.constant(-1)] == pytest.approx(-2.0)
    assert values[BranchId.constant(0)] == 0.0
    assert values[UPPER] == pytest.approx(2.0)
    assert values[LOWER] == pytest.approx(0.0, abs=1e-15)


def test_decoupled_medium_factors():
    # gamma = 0: the quartic factors as (w^2 - w0^2)(w^2 - k^2)
    values = omega_branches(2.0, MediumParams(gamma=0.0, omega0=1.0))
    curved = sorted(values[b] for b in CURVED_BRANCHES)
    assert curved == pytest.approx([-2.0, -1.0, 1.0, 2.0], abs=1e-12)


def test_quartic_residual_on_random_samples():
    for _ in range(100):
        k = float(RNG.uniform(0, 8))
        med = MediumParams(gamma=float(RNG.uniform(0.05, 5)),
                           omega0=float(RNG.uniform(0.2, 4)))
        for b in CURVED_BRANCHES:
            w = float(omega_branch(k, b, med))
            assert abs(quartic_residual(w, k, med)) < 1e-10


def test_branch_ordering_and_evenness():
    ks = np.linspace(0, 6, 61)
    wpp = omega_branch(ks, UPPER, MED)
    wpm = omega_branch(ks, LOWER, MED)
    assert np.all(wpp >= wpm - 1e-14)
    assert np.all(wpm >= -1e-14)
    np.testing.assert_allclose(omega_branch(-ks, UPPER, MED), wpp, atol=1e-14)


def test_branch_separation_from_carrier():
    # the carrier frequency stays uniformly away from every other sheet
    k0 = 2.0
    w_carrier = float(omega_branch(k0, UPPER, MED))
    kk = np.linspace(0, 12, 241)
    gaps = []
    for b in ALL_BRANCHES:
        if b == UPPER:
            continue
        gaps.append(np.min(np.abs(w_carrier - omega_branch(kk, b, MED))))
    assert min(gaps) > 0.1


def random_kvec():
    v = RNG.standard_normal(3)
    return v / np.linalg.norm(v) * RNG.uniform(0.3, 4.0)


def test_projector_identities():
    for _ in range(25):
        kvec = random_kvec()
        for b in (UPPER, LOWER):
            pi = projector(b, kvec, MED)
            assert np.max(np.abs(pi @ pi - pi)) < 1e-10
            assert np.max(np.abs(pi - pi.conj().T)) < 1e-12
            assert np.trace(pi).real == pytest.approx(2.0, abs=1e-10)
            assert abs(np.trace(pi).imag) < 1e-12
            w = float(omega_branch(np.linalg.norm(kvec), b, MED))
            assert np.max(np.abs(l_matrix(w, kvec, MED) @ pi)) < 1e-9


def test_projector_cross_branch_orthogonality_and_sum():
    for _ in range(10):
        kvec = random_kvec()
        projs = all_projectors(kvec, MED)
        curved = [projs[b] for b in CURVED_BRANCHES]
        for i in range(4):
            for j in range(i + 1, 4):
                assert np.max(np.abs(curved[i] @ curved[j])) < 1e-9
        total = sum(projs.values())
        assert np.max(np.abs(total - np.eye(12))) < 1e-8


def test_projector_rejects_zero_wavenumber_and_constant_branch():
    with pytest.raises(DispersionError):
        projector(UPPER, np.zeros(3), MED)
    with pytest.raises(DispersionError):
        projector(BranchId.constant(1), np.array([0, 0, 1.0]), MED)


def test_lift_linearity_at_zero():
    out = polarization_lift(np.zeros(3), 2.0, np.array([0, 0, 2.0]), MED)
    assert np.max(np.abs(out)) == 0.0


def test_lift_is_annihilated_by_pencil():
    kvec = np.array([0.0, 0.0, 2.0])
    w = float(omega_branch(2.0, UPPER, MED))
    vec = polarization_lift(np.array([1.0, 0, 0]), w, kvec, MED)
    assert np.max(np.abs(l_matrix(w, kvec, MED) @ vec)) < 1e-9


def test_lift_matches_projector_column():
    kvec = np.array([0.0, 0.0, 2.0])
    w = float(omega_branch(2.0, UPPER, MED))
    e = np.array([1.0, 0, 0])
    vec = polarization_lift(e, w, kvec, MED)
    pi = projector(UPPER, kvec, MED)
    embedded = np.concatenate([np.zeros(3), e, np.zeros(6)]).astype(complex)
    nsq = n_squared(2.0, w, MED)
    np.testing.assert_allclose(pi @ embedded, vec / nsq, atol=1e-12)


def test_lift_rejects_singular_frequencies_and_bad_polarization():
    kvec = np.array([0.0, 0.0, 2.0])
    with pytest.raises(DispersionError):
        polarization_lift(np.array([1.0, 0, 0]), 0.0, kvec, MED)
    with pytest.raises(DispersionError):
        polarization_lift(np.array([1.0, 0, 0]), MED.omega0, kvec, MED)
    with pytest.raises(DispersionError):
        polarization_lift(np.array([0.0, 0, 1.0]), 2.0, kvec, MED)


def test_group_velocity_decoupled_branches():
    med0 = MediumParams(gamma=0.0, omega0=1.0)
    wp, wpp = group_velocity_and_gvd(UPPER, 2.0, med0)  # the w = k sheet
    assert (wp, wpp) == pytest.approx((1.0, 0.0), abs=1e-12)
    wp, wpp = group_velocity_and_gvd(LOWER, 2.0, med0)  # the w = w0 sheet
    assert (wp, wpp) == pytest.approx((0.0, 0.0), abs=1e-12)


def test_group_velocity_finite_difference_oracle():
    for b in (UPPER, LOWER):
        wp, wpp = group_velocity_and_gvd(b, 2.0, MED)
        h = 1e-5
        fd1 = (float(omega_branch(2 + h, b, MED)) -
               float(omega_branch(2 - h, b, MED))) / (2 * h)
        assert wp == pytest.approx(fd1, abs=1e-7)
        h = 1e-4
        fd2 = (float(omega_branch(2 + h, b, MED)) - 2 * float(omega_branch(2.0, b, MED))
               + float(omega_branch(2 - h, b, MED))) / h ** 2
        assert wpp == pytest.approx(fd2, abs=1e-5)


def test_taylor_approximant_base_point_and_slope():
    assert omega_nls(2.0, 2.0, UPPER, MED) == pytest.approx(
        float(omega_branch(2.0, UPPER, MED)), abs=0)
    h = 1e-6
    slope = (omega_nls(2 + h, 2.0, UPPER, MED) - omega_nls(2 - h, 2.0, UPPER, MED)) / (2 * h)
    wp, _ = group_velocity_and_gvd(UPPER, 2.0, MED)
    assert slope == pytest.approx(wp, abs=1e-8)


def test_taylor_error_grows_with_distance():
    def err(kp):
        return abs(omega_nls(kp, 2.0, LOWER, MED) - float(omega_branch(kp, LOWER, MED)))
    assert err(4.0) > err(2.1)


def test_rational_approximant_degenerations():
    kk = np.linspace(0.5, 3.5, 101)
    fit0 = zero_fit(1, k0=2.0)
    np.testing.assert_allclose(omega_imp(kk, 2.0, LOWER, fit0, MED),
                               omega_nls(kk, 2.0, LOWER, MED), rtol=0, atol=1e-14)
    fit = zero_fit(1, k0=2.0)
    assert omega_imp(2.0, 2.0, LOWER, fit, MED) == pytest.approx(
        float(omega_branch(2.0, LOWER, MED)), abs=0)


def test_rational_approximant_rejects_vanishing_denominator():
    from filamentlab.dispersion_fit import FitResult
    bad = FitResult(b=(-0.9,), B=((0.05,),), k0=2.0, half_width=1.5,
                    sup_error=np.nan, nls_sup_error=np.nan)
    with pytest.raises(DispersionError, match="denominator"):
        omega_imp(np.linspace(0.5, 3.5, 51), 2.0, LOWER, bad, MED)


def test_coefficients_cubic_gain_vanishes_with_coupling():
    gains = []
    for gamma in (1e-2, 1e-3, 1e-4):
        med = MediumParams(gamma=gamma, omega0=1.0)
        gains.append(nls_coefficients(2.0, UPPER, med, 0.1).cubic_gain)
    # proportional to gamma^3: each decade in gamma drops the gain ~10^3
    assert gains[0] / gains[1] == pytest.approx(1e3, rel=0.05)
    assert gains[1] / gains[2] == pytest.approx(1e3, rel=0.05)


def test_coefficients_closed_forms():
    co = nls_coefficients(2.0, UPPER, MED, 0.1)
    w = float(omega_branch(2.0, UPPER, MED))
    expected_nsq = 4.0 / w ** 2 + 1.0 + MED.gamma * (w ** 2 + 1.0) / (w ** 2 - 1.0) ** 2
    assert co.n_sq == pytest.approx(expected_nsq, rel=1e-12)
    # the squared norm of the lifted unit-electric eigenvector equals n_sq
    vec = polarization_lift(np.array([1.0, 0, 0]), w, np.array([0, 0, 2.0]), MED)
    assert np.vdot(vec, vec).real == pytest.approx(co.n_sq, rel=1e-12)
    assert co.alpha3 < 0  # upper branch has omega > omega0
    assert co.cubic_gain > 0
    wp, wpp = group_velocity_and_gvd(UPPER, 2.0, MED)
    assert co.c_g == wp and co.gvd == wpp / 2 and co.diffraction == wp / 4.0
    med_damped = MediumParams(gamma=1.0, omega0=1.0, omega1=0.7, p=1.0)
    co2 = nls_coefficients(2.0, UPPER, med_damped, 0.1)
    assert co2.alpha2 == pytest.approx(
        0.1 * 0.7 * MED.gamma * w ** 2 / (w ** 2 - 1.0) ** 2, rel=1e-12)


def test_coefficients_resonance_guard():
    med0 = MediumParams(gamma=0.0, omega0=1.0)
    with pytest.raises(DispersionError, match="resonance"):
        nls_coefficients(1.0, UPPER, med0, 0.1)  # omega(1) == omega0 at gamma=0


def test_nonresonance_predicate():
    assert is_nonresonant(2.0, UPPER, MED)
    assert is_nonresonant(2.0, LOWER, MED)
    # odd harmonics of the asymptotically straight sheet come back onto it
    assert not is_nonresonant(3000.0, UPPER, MED)


def test_reduced_matrices_structure():
    a1, e4, a0 = reduced_matrices(MED)
    np.testing.assert_array_equal(a1, a1.T)
    np.testing.assert_array_equal(e4, -e4.T)
    assert a0[2, 2] == MED.omega1
    full_a = a_matrix(np.array([0.0, 0.0, 1.0]))
    assert np.max(np.abs(full_a - full_a.T)) == 0
    full_e = e_matrix(MED)
    assert np.max(np.abs(full_e + full_e.T)) == 0


def test_reduced_eigenvector_consistency():
    for kap in (-2.0, 0.7, 3.1):
        h = reduced_hamiltonian(np.array([kap]), MED)[0]
        assert np.max(np.abs(h - h.conj().T)) < 1e-14
        for b in CURVED_BRANCHES:
            v = polarization_vector_1d(kap, b, MED)
            w = float(omega_branch(abs(kap), b, MED))
            assert np.max(np.abs(h @ v - w * v)) < 1e-12


def test_branch_labels_round_trip():
    for b in ALL_BRANCHES:
        assert branch_from_label(b.label()) == b
    assert branch_from_label("+-") == LOWER
    with pytest.raises(ValueError):
        branch_from_label("nope")

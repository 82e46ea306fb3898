import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from oracles import dpo_fixed_points_numeric, jacobian_numeric
from parosc.dpo import (
    DpoParams,
    build_dpo_liouvillian,
    classical_dpo_integrate,
    classical_fixed_points,
    classical_rhs,
    dpo_steady_state,
    numeric_jacobian,
    stability_matrix,
    steady_occupation,
    threshold_sweep,
)
from parosc.errors import ValidationError
from parosc.fock import annihilation, expectation, parity

# dense SVD null vector at N=40 / trace-row solve at N=60 (see tests/oracles.py)
N_ORACLE_S09_G01 = 1.6850016637831904
N_ORACLE_S2_G04 = 12.211353304424348


@pytest.mark.parametrize("kw", [dict(sigma=-0.1, g=0.1), dict(sigma=1, g=0), dict(sigma=1, g=0.1, gamma=0),
                                dict(sigma=float("nan"), g=0.1)])
def test_params_validated(kw):
    with pytest.raises(ValidationError):
        DpoParams(**kw)


def test_zero_pump_vacuum():
    rho = dpo_steady_state(DpoParams(0.0, 0.7), 12)
    assert rho.data[0, 0].real == pytest.approx(1.0, abs=1e-12)


def test_steady_occupation_oracle_below_threshold():
    assert steady_occupation(DpoParams(0.9, 0.1), 40) == pytest.approx(N_ORACLE_S09_G01, rel=1e-9)


def test_steady_occupation_oracle_above_threshold():
    assert steady_occupation(DpoParams(2.0, 0.4), 60) == pytest.approx(N_ORACLE_S2_G04, rel=1e-9)


@pytest.mark.parametrize("sigma,g,N", [(0.9, 0.1, 40), (2.0, 0.4, 60), (1.3, 0.3, 50)])
def test_steady_state_symmetry(sigma, g, N):
    rho = dpo_steady_state(DpoParams(sigma, g), N)
    U = parity(rho.space).toarray()
    assert np.linalg.norm(U @ rho.data @ U.conj().T - rho.data) < 1e-8
    assert abs(expectation(annihilation(rho.space), rho)) < 1e-8


def test_quantum_occupation_tracks_classical():
    rel = {}
    for g, N in ((0.4, 60), (0.3, 90)):
        n_cl = 2 * (2.0 - 1) / g ** 2
        rel[g] = abs(steady_occupation(DpoParams(2.0, g), N) / n_cl - 1)
    assert rel[0.4] < 0.2
    assert rel[0.3] < rel[0.4]


def test_fixed_points_below_threshold():
    (fp,) = classical_fixed_points(DpoParams(0.5, 0.1))
    assert fp.branch == "trivial" and fp.stable
    assert fp.eigenvalues == (-0.5, -1.5)


def test_fixed_points_above_threshold():
    fps = classical_fixed_points(DpoParams(2.0, 0.1))
    by = {fp.branch: fp for fp in fps}
    assert not by["trivial"].stable and by["trivial"].eigenvalues[0] == 1.0
    assert by["positive"].amplitude.real == pytest.approx(np.sqrt(2) / 0.1, rel=1e-15)
    assert by["negative"].amplitude == -by["positive"].amplitude
    assert by["positive"].eigenvalues == (-2.0, -4.0) and by["positive"].stable


def test_threshold_is_marginal():
    (fp,) = classical_fixed_points(DpoParams(1.0, 0.1))
    assert fp.eigenvalues[0] == 0.0 and not fp.stable


@given(st.floats(0, 3), st.floats(0.05, 1.0))
def test_fixed_points_are_roots_and_complete(sigma, g):
    p = DpoParams(sigma, g)
    fps = classical_fixed_points(p)
    for fp in fps:
        assert abs(classical_rhs(fp.amplitude, sigma, g)) < 1e-12 * max(1, abs(fp.amplitude) ** 3 * g * g)
    if abs(sigma - 1) > 1e-3:
        roots = dpo_fixed_points_numeric(sigma, g)
        for r in roots:
            assert min(abs(r - fp.amplitude) for fp in fps) < 1e-6 * max(1, abs(r))


@given(st.floats(0, 3), st.floats(0.05, 1.0))
def test_stability_matrix_matches_jacobian(sigma, g):
    for fp in classical_fixed_points(DpoParams(sigma, g)):
        a = fp.amplitude
        lam_num = np.sort(np.linalg.eigvals(jacobian_numeric(a, sigma, g)).real)
        lam_pkg = np.sort(np.linalg.eigvals(numeric_jacobian(a, sigma, g)).real)
        lam_mat = np.sort(np.linalg.eigvals(stability_matrix(a, sigma, g)).real)
        lam_fp = np.sort(np.real(fp.eigenvalues))
        assert np.allclose(lam_mat, lam_num, atol=1e-6)
        assert np.allclose(lam_pkg, lam_num, atol=1e-6)
        assert np.allclose(lam_fp, lam_num, atol=1e-6)


@given(st.complex_numbers(max_magnitude=50, allow_nan=False, allow_infinity=False), st.floats(0, 3),
       st.floats(0.05, 1.0))
def test_classical_rhs_is_odd(alpha, sigma, g):
    assert classical_rhs(-alpha, sigma, g) == -classical_rhs(alpha, sigma, g)


def test_integration_selects_branch_by_seed_sign():
    p = DpoParams(2.0, 0.1)
    up = classical_dpo_integrate(p, 0.01, (0, 60), n_out=2).final
    down = classical_dpo_integrate(p, -0.01, (0, 60), n_out=2).final
    assert up == pytest.approx(np.sqrt(2) / 0.1, rel=1e-8)
    assert down == pytest.approx(-np.sqrt(2) / 0.1, rel=1e-8)


def test_zero_seed_stays_zero():
    traj = classical_dpo_integrate(DpoParams(2.0, 0.1), 0.0, (0, 50))
    assert np.all(traj.alpha == 0)


def test_integration_rejects_nonfinite_seed():
    with pytest.raises(ValidationError):
        classical_dpo_integrate(DpoParams(2.0, 0.1), complex("nan"), (0, 1))


def test_threshold_sweep_kink():
    sigmas = np.linspace(0, 2.5, 11)
    res = threshold_sweep(0.1, sigmas)
    amp = res.column("alpha_abs_classical")
    expected = np.where(sigmas > 1, np.sqrt(2 * np.clip(sigmas - 1, 0, None)) / 0.1, 0.0)
    assert np.all(amp[sigmas <= 1] < 1e-6)
    assert np.allclose(amp[sigmas > 1], expected[sigmas > 1], rtol=1e-6)
    assert res.to_csv().splitlines()[0] == "sigma,alpha_abs_classical,n_quantum,trunc_N"


def test_threshold_sweep_quantum_columns():
    res = threshold_sweep(0.4, [0.5, 2.0], quantum=True)
    n = res.column("n_quantum")
    assert n[1] == pytest.approx(N_ORACLE_S2_G04, rel=1e-3)
    assert np.all(res.column("trunc_N") >= 10)


def test_generator_is_static():
    L = build_dpo_liouvillian(DpoParams(1.5, 0.2), 6)
    assert L.is_static() and L.omega == 0

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from conftest import random_density
from oracles import wigner_displaced_parity
from parosc.dpo import DpoParams, dpo_steady_state
from parosc.errors import GridTooSmallError, ValidationError
from parosc.fock import DensityMatrix, FockSpaceSpec, coherent_state, fock_state, product_state
from parosc.phase_space import WIGNER_NORMALIZATION, detect_lobes, make_grid, marginal, wigner

# displaced-parity oracle on the sigma=2, g=0.4 steady state (N=60)
LOBE_X_ORACLE = 7.007657888507809


def test_vacuum_and_one_photon_at_origin():
    s = FockSpaceSpec(4)
    assert wigner(fock_state(0, s), [0.0]).W[0, 0] == pytest.approx(1 / np.pi, abs=1e-10)
    assert wigner(fock_state(1, s), [0.0]).W[0, 0] == pytest.approx(-1 / np.pi, abs=1e-10)


def test_vacuum_is_isotropic_gaussian():
    x, p = make_grid(4, 41)
    W = wigner(fock_state(0, FockSpaceSpec(3)), x, p).W
    X, P = np.meshgrid(x, p, indexing="ij")
    assert np.max(np.abs(W - np.exp(-(X ** 2 + P ** 2) / 2) / np.pi)) < 1e-12


@pytest.mark.parametrize("beta", [1.0, 0.7 - 1.2j])
def test_coherent_state_is_displaced_vacuum(beta):
    s = FockSpaceSpec(40)
    x, p = make_grid(6, 61)
    W = wigner(coherent_state(beta, s), x, p).W
    X, P = np.meshgrid(x, p, indexing="ij")
    ref = np.exp(-((X - 2 * beta.real) ** 2 + (P - 2 * beta.imag) ** 2) / 2) / np.pi
    assert np.max(np.abs(W - ref)) < 1e-9
    ((loc, h),) = detect_lobes(wigner(coherent_state(beta, s), x, p))
    assert loc == pytest.approx((2 * beta.real, 2 * beta.imag), abs=0.02)


@given(st.integers(0, 2**31 - 1), st.floats(-3, 3), st.floats(-3, 3))
def test_matches_displaced_parity_oracle(seed, x, p):
    rho = random_density(np.random.default_rng(seed), 6)
    W = wigner(DensityMatrix(rho, FockSpaceSpec(6)), [x], [p]).W[0, 0]
    assert W == pytest.approx(wigner_displaced_parity(rho, x, p), abs=1e-9)


def test_linearity(rng):
    s = FockSpaceSpec(6)
    r1, r2 = random_density(rng, 6), random_density(rng, 6)
    x, p = make_grid(4, 21)
    a, b = 0.3, 0.7
    mix = wigner(DensityMatrix(a * r1 + b * r2, s), x, p).W
    sep = a * wigner(DensityMatrix(r1, s), x, p).W + b * wigner(DensityMatrix(r2, s), x, p).W
    assert np.max(np.abs(mix - sep)) < 1e-10


def test_mass_is_state_independent():
    x, p = make_grid(16, 321)
    states = {
        "vacuum": fock_state(0, FockSpaceSpec(40)),
        "one": fock_state(1, FockSpaceSpec(40)),
        "coherent": coherent_state(1.0, FockSpaceSpec(40)),
        "dpo_below": dpo_steady_state(DpoParams(0.9, 0.1), 40),
        "dpo_above": dpo_steady_state(DpoParams(2.0, 0.4), 60),
    }
    masses = {k: wigner(v, x, p).mass() for k, v in states.items()}
    for k, m in masses.items():
        assert m == pytest.approx(WIGNER_NORMALIZATION, abs=1e-6), k


def test_fock_diagonal_state_is_rotationally_invariant():
    s = FockSpaceSpec(8)
    rho = DensityMatrix(np.diag(np.linspace(1, 2, 8) / np.linspace(1, 2, 8).sum()), s)
    r = 1.7
    th = np.linspace(0, 2 * np.pi, 13)
    vals = [wigner(rho, [r * np.cos(t)], [r * np.sin(t)]).W[0, 0] for t in th]
    assert np.var(vals) < 1e-8


def test_vacuum_marginal_has_unit_variance():
    x, p = make_grid(10, 401)
    c, P, mass = marginal(wigner(fock_state(0, FockSpaceSpec(2)), x, p), "x")
    assert mass == pytest.approx(2.0, abs=1e-8)
    assert np.trapezoid(P * c ** 2, c) == pytest.approx(1.0, abs=1e-8)


def test_marginal_parity_of_dpo_state():
    x, p = make_grid(14, 141)
    W = wigner(dpo_steady_state(DpoParams(1.5, 0.3), 50), x, p)
    for axis in ("x", "p"):
        _, P, _ = marginal(W, axis)
        assert np.max(np.abs(P - P[::-1])) < 1e-8


def test_marginal_rejects_small_grid():
    x, p = make_grid(1, 21)
    with pytest.raises(GridTooSmallError):
        marginal(wigner(fock_state(0, FockSpaceSpec(2)), x, p))
    with pytest.raises(ValidationError):
        marginal(wigner(fock_state(0, FockSpaceSpec(2)), x, p), "z")


def test_single_lobe_below_threshold():
    x, p = make_grid(8, 81)
    lobes = detect_lobes(wigner(dpo_steady_state(DpoParams(0.9, 0.1), 40), x, p))
    assert len(lobes) == 1
    assert np.allclose(lobes[0][0], (0, 0), atol=1e-9)


def test_two_symmetric_lobes_above_threshold():
    x = np.linspace(-12, 12, 241)
    p = np.linspace(-6, 6, 121)
    lobes = detect_lobes(wigner(dpo_steady_state(DpoParams(2.0, 0.4), 60), x, p))
    assert len(lobes) == 2
    (l1, h1), (l2, h2) = lobes
    assert abs(h1 - h2) / max(h1, h2) < 0.01
    assert l1[0] == pytest.approx(-LOBE_X_ORACLE, abs=0.02)
    assert l2[0] == pytest.approx(LOBE_X_ORACLE, abs=0.02)
    assert abs(l2[0] / (2 * np.sqrt(2) / 0.4) - 1) < 0.1


def test_lobes_in_marginal():
    c = np.linspace(-5, 5, 101)
    y = np.exp(-(c - 2) ** 2) + np.exp(-(c + 2) ** 2) + 0.01 * np.exp(-c ** 2)
    lobes = detect_lobes(y, c)
    assert [round(loc, 2) for loc, _ in lobes] == [-2.0, 2.0]


def test_rejects_two_mode_and_bad_grid():
    rho = product_state(fock_state(0, FockSpaceSpec(2, "optical")), fock_state(0, FockSpaceSpec(2)))
    with pytest.raises(ValidationError):
        wigner(rho, [0.0])
    with pytest.raises(ValidationError):
        wigner(fock_state(0, FockSpaceSpec(2)), [np.inf])


def test_csv_and_metadata():
    x, p = make_grid(1, 3)
    W = wigner(fock_state(0, FockSpaceSpec(2)), x, p)
    lines = W.to_csv().splitlines()
    assert lines[0] == "x,p,W" and len(lines) == 10
    assert W.metadata()["normalization"] == 2.0

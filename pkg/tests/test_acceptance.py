"""Acceptance criteria 1-8 at their stated tolerances.

Each test prints one PASS/FAIL line; the lines are repeated in the terminal
summary.  Criteria 3 and 4 fail at their stated tolerances (analysis in the
decisions ledger); they are left red on purpose.
"""

import time

import numpy as np
import pytest
from scipy.sparse.linalg import norm as spnorm

from conftest import random_density, random_hermitian
from oracles import correlator_regression, dissipator_dense
from parosc.dpo import (
    DpoParams,
    build_dpo_liouvillian,
    classical_fixed_points,
    dpo_steady_state,
    relaxation_time,
    classical_dpo_integrate,
)
from parosc.effective import (
    correlation_functions,
    effective_occupation,
    gamma_rates,
    map_parameters,
    rate_quadrature,
    rate_triple,
    regime_check,
    static_rates_formula,
)
from parosc.fock import (
    DensityMatrix,
    FockSpaceSpec,
    annihilation,
    coherent_state,
    devectorize,
    expectation,
    fock_state,
    parity,
    superop_left,
    superop_right,
    vectorize,
)
from parosc.lindblad import DissipatorSpec, build_liouvillian, lindblad_superop
from parosc.optomech import (
    OptomechParams,
    benchmark_params,
    classical_static_phonons,
    coherent_moment_check,
    harris15_params,
    n1_for_sigma,
    om_quantum_asymptotics,
)
from parosc.phase_space import WIGNER_NORMALIZATION, detect_lobes, make_grid, marginal, wigner

RESULTS = []

# displaced-parity oracle on the N=60 steady state at sigma=2, g=0.4
LOBE_X_ORACLE = 7.007657888507809


@pytest.fixture
def report(capsys):
    def emit(number, title, checks, t0):
        failed = [k for k, (ok, _) in checks.items() if not ok]
        status = "PASS" if not failed else "FAIL"
        detail = "; ".join(f"{k}={v}" for k, (_, v) in checks.items())
        line = f"criterion {number} [{status}] {title} ({time.perf_counter() - t0:.1f}s): {detail}"
        RESULTS.append(line)
        with capsys.disabled():
            print("\n" + line)
        assert not failed, f"criterion {number} failed checks: {failed}"
    return emit


def test_criterion_1_classical_phase_transition(report):
    t0 = time.perf_counter()
    g = 0.1
    sigmas = np.round(np.arange(0.0, 2.5001, 0.05), 10)
    worst_below, worst_above, worst_eig = 0.0, 0.0, 0.0
    for s in sigmas:
        p = DpoParams(float(s), g)
        amp = abs(classical_dpo_integrate(p, 1e-8, (0.0, relaxation_time(p, 1e-8)), n_out=2).final)
        if s <= 1:
            worst_below = max(worst_below, amp)
        else:
            worst_above = max(worst_above, abs(amp / (np.sqrt(2 * (s - 1)) / g) - 1))
        for fp in classical_fixed_points(p):
            expect = (-1 + s, -1 - s) if fp.branch == "trivial" else (-2 * s + 1 + 1, -2 * s + 1 - 1)
            worst_eig = max(worst_eig, max(abs(a - b) for a, b in zip(fp.eigenvalues, expect)))
    report(1, "classical DPO threshold", {
        "max|alpha| sigma<=1": (worst_below < 1e-6, f"{worst_below:.1e}"),
        "max rel err sigma>1": (worst_above < 1e-6, f"{worst_above:.1e}"),
        "eigenvalue error": (worst_eig == 0.0, f"{worst_eig:.1e}"),
    }, t0)


def test_criterion_2_quantum_symmetry_and_bimodality(report):
    t0 = time.perf_counter()
    checks = {}
    rho = dpo_steady_state(DpoParams(0.9, 0.1), 40)
    U = parity(rho.space).toarray()
    a = abs(expectation(annihilation(rho.space), rho))
    par = np.linalg.norm(U @ rho.data @ U.conj().T - rho.data)
    x, p = make_grid(8, 81)
    lobes = detect_lobes(wigner(rho, x, p))
    checks["|<a>| (0.9)"] = (a < 1e-8, f"{a:.1e}")
    checks["parity (0.9)"] = (par < 1e-8, f"{par:.1e}")
    checks["lobes (0.9)"] = (len(lobes) == 1 and np.allclose(lobes[0][0], 0, atol=1e-6), len(lobes))

    rho = dpo_steady_state(DpoParams(2.0, 0.4), 60)
    U = parity(rho.space).toarray()
    a = abs(expectation(annihilation(rho.space), rho))
    par = np.linalg.norm(U @ rho.data @ U.conj().T - rho.data)
    lobes = detect_lobes(wigner(rho, np.linspace(-12, 12, 241), np.linspace(-6, 6, 121)))
    classical = 2 * np.sqrt(2 * (2.0 - 1)) / 0.4
    checks["|<a>| (2.0)"] = (a < 1e-8, f"{a:.1e}")
    checks["parity (2.0)"] = (par < 1e-8, f"{par:.1e}")
    ok2 = len(lobes) == 2
    checks["lobes (2.0)"] = (ok2, len(lobes))
    if ok2:
        (l1, h1), (l2, h2) = lobes
        asym = abs(h1 - h2) / max(h1, h2)
        off = max(abs(abs(l1[0]) / classical - 1), abs(abs(l2[0]) / classical - 1))
        oracle = max(abs(abs(l1[0]) - LOBE_X_ORACLE), abs(abs(l2[0]) - LOBE_X_ORACLE))
        checks["height asymmetry"] = (asym < 0.01, f"{asym:.1e}")
        checks["center vs classical"] = (off < 0.1, f"{off:.3f}")
        checks["center vs oracle"] = (oracle < 0.02, f"{oracle:.1e}")
    report(2, "quantum DPO symmetry and bimodality", checks, t0)


def test_criterion_3_parameter_map_reference(report):
    t0 = time.perf_counter()
    h = harris15_params()
    ep = map_parameters(h)
    rep = regime_check(h, expected_n=1e10, reference=True)
    C_q, g, sigma = ep.breakdown["C_q"], ep.g, ep.sigma
    kerr = rep.info["kerr_bound"]
    ratio = rep.info["gamma_q_over_gamma_eff"]
    inv = rep.info["gamma_eff_over_gamma_q"]
    report(3, "parameter map on the membrane reference set", {
        "C_q": (abs(C_q / 3.3e-7 - 1) <= 0.03, f"{C_q:.4g} ({C_q / 3.3e-7 - 1:+.2%})"),
        "g": (abs(g / 1e-5 - 1) <= 0.15, f"{g:.4g} ({g / 1e-5 - 1:+.1%})"),
        "sigma_max": (abs(sigma / 2.5 - 1) <= 0.05, f"{sigma:.4g}"),
        "kerr bound": (0.1 <= kerr / 1e13 <= 10, f"{kerr:.3g}"),
        "gamma_q/gamma_eff": (145 <= ratio <= 170, f"{ratio:.4g}"),
        "gamma_eff/gamma_q": (abs(inv / 6e-3 - 1) <= 0.1, f"{inv:.4g}"),
        "regime checks": (rep.passed, "all pass" if rep.passed else "some fail"),
    }, t0)


def test_criterion_4_full_model_classical_sweep(report):
    t0 = time.perf_counter()
    h = harris15_params()
    checks = {}
    worst, worst_s = 0.0, None
    for s in np.round(np.arange(1.2, 2.5001, 0.1), 10):
        fit, _ = classical_static_phonons(h.with_photon_numbers(n1=n1_for_sigma(h, s)))
        err = abs(fit.n_bar / fit.extras["expected"] - 1)
        if err > worst:
            worst, worst_s = err, s
        checks.setdefault("above", [])
        checks["above"].append((s, err))
    bad = [f"{s:.1f}:{e:.1%}" for s, e in checks.pop("above") if e > 0.02]
    checks["max rel err sigma in [1.2,2.5]"] = (worst <= 0.02, f"{worst:.2%} at sigma={worst_s:.1f}")
    checks["points over 2%"] = (not bad, ",".join(bad) or "none")
    g = map_parameters(h).g
    floor = 1e-3 * 2 * 1.5 / g ** 2
    top = 0.0
    for s in (0.0, 0.3, 0.6, 0.9):
        fit, _ = classical_static_phonons(h.with_photon_numbers(n1=n1_for_sigma(h, s)))
        top = max(top, fit.n_bar)
    checks["max n_bar sigma<=0.9"] = (top < floor, f"{top:.2e} < {floor:.2e}")
    report(4, "full-model classical sweep on the reference set", checks, t0)


def test_criterion_5_full_quantum_vs_effective(report):
    t0 = time.perf_counter()
    checks = {}
    for s in (0.3, 0.5, 0.8, 0.95):
        p = benchmark_params(s)
        fit, _ = om_quantum_asymptotics(p, 12, 3, rho0="dpo")
        n_eff, _ = effective_occupation(p, 30, "dpo")
        rel = fit.n_bar / n_eff - 1
        mod = fit.delta_n / fit.n_bar
        checks[f"sigma={s}"] = (abs(rel) < 0.1 and mod < 0.2, f"dn={rel:+.2%},mod={mod:.3f}")
        checks[f"n_opt sigma={s}"] = (fit.extras["n_opt_max"] < 0.5, f"{fit.extras['n_opt_max']:.3f}")
    report(5, "full quantum model vs effective DPO (benchmark scale)", checks, t0)


def test_criterion_6_rate_oracles(report):
    t0 = time.perf_counter()
    checks = {}
    worst = 0.0
    for p in (benchmark_params(0.8), harris15_params()):
        for w in (p.Omega_eff, -p.Omega_eff, 0.0):
            exact = gamma_rates(p, w).static
            worst = max(worst, abs(rate_quadrature(p, w, 0) / exact - 1))
    checks["static vs quadrature"] = (worst < 1e-6, f"{worst:.1e}")
    p = benchmark_params(0.8)
    reg = max(abs(correlation_functions(p, tau)[0][0, 1] - correlator_regression(p.gamma_q, p.delta_q, tau))
              for tau in (0.0, 0.2, 0.7, 1.5, 4.0))
    checks["K12 vs regression"] = (reg < 1e-8, f"{reg:.1e}")
    diff = 0.0
    for q in (harris15_params(), benchmark_params(0.8)):
        q0 = q.with_photon_numbers(n1=0.0)
        f = static_rates_formula(q0)
        diff = max(diff, max(abs(a - b) / b for a, b in zip(rate_triple(q0).static_real(), f)))
    checks["static triple vs formula"] = (diff < 1e-12, f"{diff:.1e}")
    report(6, "rate-formula oracles", checks, t0)


def test_criterion_7_wigner_suite(report):
    t0 = time.perf_counter()
    s = FockSpaceSpec(60)
    w0 = wigner(fock_state(0, s), [0.0]).W[0, 0]
    w1 = wigner(fock_state(1, s), [0.0]).W[0, 0]
    x, p = make_grid(16, 321)
    states = [fock_state(0, s), fock_state(1, s), coherent_state(1.0, s),
              dpo_steady_state(DpoParams(0.9, 0.1), 40), dpo_steady_state(DpoParams(2.0, 0.4), 60)]
    grids = [wigner(r, x, p) for r in states]
    masses = np.array([W.mass() for W in grids])
    spread = masses.max() - masses.min()
    sym = 0.0
    for W in grids[3:]:
        _, P, _ = marginal(W, "x")
        sym = max(sym, np.max(np.abs(P - P[::-1])))
    report(7, "Wigner suite", {
        "W_vac(0)": (abs(w0 - 1 / np.pi) < 1e-10, f"{w0 - 1 / np.pi:.1e}"),
        "W_1(0)": (abs(w1 + 1 / np.pi) < 1e-10, f"{w1 + 1 / np.pi:.1e}"),
        "mass spread": (spread < 1e-6, f"{spread:.1e}"),
        "mass vs normalization": (abs(masses[0] - WIGNER_NORMALIZATION) < 1e-6, f"{masses[0]:.8f}"),
        "marginal parity": (sym < 1e-8, f"{sym:.1e}"),
    }, t0)


def test_criterion_8_engine_properties(report):
    t0 = time.perf_counter()
    rng = np.random.default_rng(8)
    worst = dict(trace=0.0, herm=0.0, vec=0.0, left=0.0, right=0.0, diss=0.0, dpo_moment=0.0)
    for trial in range(40):
        N = int(rng.integers(2, 9))
        s = FockSpaceSpec(N)
        a = annihilation(s)
        H1 = rng.normal(size=(N, N)) + 1j * rng.normal(size=(N, N))
        from parosc.fock import OperatorMatrix

        J = OperatorMatrix(rng.normal(size=(N, N)) + 1j * rng.normal(size=(N, N)), s)
        c = 0.3 * complex(rng.normal(), rng.normal())
        L = build_liouvillian(
            {0: OperatorMatrix(random_hermitian(rng, N), s), 1: OperatorMatrix(H1, s),
             -1: OperatorMatrix(H1.conj().T, s)},
            [DissipatorSpec(a, 0.5), DissipatorSpec(J, {0: 1.0, 1: c, -1: np.conj(c)}),
             DissipatorSpec(a, 0.2, form="quadrature")], 1.7)
        X = random_hermitian(rng, N)
        for t in rng.uniform(0, 5, 3):
            out = L.apply_to(X, t)
            scale = max(1.0, np.abs(out).max())
            worst["trace"] = max(worst["trace"], abs(np.trace(out)) / scale)
            worst["herm"] = max(worst["herm"], np.abs(out - out.conj().T).max() / scale)
        rho = random_density(rng, N)
        worst["vec"] = max(worst["vec"], np.abs(devectorize(vectorize(rho)).data - rho).max())
        A = rng.normal(size=(N, N)) + 1j * rng.normal(size=(N, N))
        v = vectorize(rho)
        worst["left"] = max(worst["left"], np.abs(superop_left(A) @ v - vectorize(A @ rho)).max())
        worst["right"] = max(worst["right"], np.abs(superop_right(A) @ v - vectorize(rho @ A)).max())
        worst["diss"] = max(worst["diss"], np.abs(lindblad_superop(A).toarray() - dissipator_dense(A)).max())
        alpha = 2 * rng.uniform() * np.exp(2j * np.pi * rng.uniform())
        sig, g = rng.uniform(0, 2.5), rng.uniform(0.05, 0.8)
        sN = FockSpaceSpec(45)
        d = DensityMatrix(build_dpo_liouvillian(DpoParams(sig, g), 45).apply_to(coherent_state(alpha, sN)), sN,
                          check=False)
        rhs = sig * np.conj(alpha) - 0.5 * g * g * abs(alpha) ** 2 * alpha - alpha
        worst["dpo_moment"] = max(worst["dpo_moment"], abs(expectation(annihilation(sN), d) - rhs))
    om = coherent_moment_check(benchmark_params(0.5), 0.5, 0.5 + 0.2j, mech_dissipator="quadrature")
    tol = dict(trace=1e-12, herm=1e-12, vec=0.0, left=1e-12, right=1e-12, diss=1e-12, dpo_moment=1e-8)
    checks = {k: (worst[k] <= tol[k], f"{worst[k]:.1e}") for k in worst}
    checks["om_moment"] = (om.residual_zero_point < 1e-6, f"{om.residual_zero_point:.1e}")
    report(8, "engine property suite", checks, t0)

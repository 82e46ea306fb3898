"""Adiabatic elimination of the optical mode: parameter map, rates and effective generators."""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp
from scipy.integrate import quad
from scipy.sparse.linalg import expm_multiply

from .dpo import DpoParams
from .errors import ValidationError
from .fock import FockSpaceSpec, annihilation, fock_state, identity, number, vectorize
from .lindblad import DissipatorSpec, HarmonicLiouvillian, build_liouvillian
from .optomech import OptomechParams, alpha_harmonics, alpha_q

#: physical constants, used by power_conversion only
CONSTANTS = {"hbar": 1.054571817e-34}


@dataclass(frozen=True)
class EffectiveDpoParams:
    omega0: float
    gamma: float
    g: float
    sigma: float
    breakdown: dict = field(default_factory=dict, compare=False)

    def dpo_params(self) -> DpoParams:
        return DpoParams(self.sigma, self.g, self.gamma, self.omega0)

    def to_dict(self):
        return {"omega0": self.omega0, "gamma": self.gamma, "g": self.g, "sigma": self.sigma,
                **self.breakdown}


def map_parameters(p: OptomechParams) -> EffectiveDpoParams:
    """omega0 = Omega_eff, gamma = gamma_eff, g^2 = 4 C_q / C_l, sigma = g sqrt(n1 gamma_q / gamma_eff)."""
    g = math.sqrt(4 * p.C_q / p.C_l)
    sigma = g * math.sqrt(p.n1 * p.gamma_q / p.gamma_eff)
    return EffectiveDpoParams(
        p.Omega_eff, p.gamma_eff, g, sigma,
        {"C_q": p.C_q, "gamma_eff": p.gamma_eff, "Omega_eff": p.Omega_eff, "n0": p.n0, "n1": p.n1,
         "r": p.r, "convention": p.convention},
    )


@dataclass(frozen=True)
class PowerConversion:
    E: float
    n: float


def power_conversion(P, gamma_q, omega_cavity, detuning=0.0, *, hbar=None) -> PowerConversion:
    """E ~ sqrt(2 gamma_q P / (hbar omega)) and the photon number E^2 / (gamma_q^2 + detuning^2)."""
    if P < 0 or gamma_q <= 0 or omega_cavity <= 0:
        raise ValidationError("power_conversion needs P >= 0 and positive gamma_q, omega")
    hbar = CONSTANTS["hbar"] if hbar is None else hbar
    E = math.sqrt(2 * gamma_q * P / (hbar * omega_cavity))
    return PowerConversion(E, E * E / (gamma_q ** 2 + detuning ** 2))


# optical correlators

def correlation_functions(p: OptomechParams, tau):
    """Closed-form K_jl(tau), H_jl(tau) for B = (a, a^dag, a^dag a) (indices 0-based)."""
    if tau < 0:
        raise ValidationError("tau must be >= 0")
    K = np.zeros((3, 3), complex)
    H = np.zeros((3, 3), complex)
    K[0, 1] = np.exp(-(p.gamma_q + 1j * p.delta_q) * tau)
    H[1, 0] = np.exp(-(p.gamma_q - 1j * p.delta_q) * tau)
    return K, H


def correlation_oracle(p: OptomechParams, tau, N_opt=4):
    """K_jl = tr{B_l e^{L_q tau}[rho B_j]}, H_jl = tr{B_l e^{L_q tau}[B_j rho]} by direct propagation.

    L_q = i[Delta_q a^dag a, .] + gamma_q D_a with its vacuum steady state rho.
    """
    spec = FockSpaceSpec(N_opt, "optical")
    a = annihilation(spec)
    B = [a, a.dag(), a.dag() @ a]
    Lq = build_liouvillian({0: (-p.delta_q) * number(spec)}, [DissipatorSpec(a, p.gamma_q)], space=spec).L0
    rho = fock_state(0, spec).data
    K = np.zeros((3, 3), complex)
    H = np.zeros((3, 3), complex)
    for j, Bj in enumerate(B):
        mj = Bj.toarray()
        for target, seed in ((K, rho @ mj), (H, mj @ rho)):
            v = expm_multiply(Lq * tau, vectorize(seed)) if tau > 0 else vectorize(seed)
            m = v.reshape(N_opt, N_opt, order="F")
            for l, Bl in enumerate(B):
                target[j, l] = np.trace(Bl.toarray() @ m)
    return K, H


# rates

@dataclass
class RateComponent:
    """Gamma(t; omega) = sum_k c_k e^{i k Omega_q t}."""
    omega: float
    harmonics: dict

    @property
    def static(self) -> complex:
        return self.harmonics[0]

    def real_harmonics(self) -> dict:
        """Harmonics of Re Gamma(t; omega)."""
        c1 = (self.harmonics[1] + np.conj(self.harmonics[-1])) / 2
        return {0: complex(self.harmonics[0].real), 1: complex(c1), -1: complex(np.conj(c1))}

    def imag_harmonics(self) -> dict:
        c1 = (self.harmonics[1] - np.conj(self.harmonics[-1])) / 2j
        return {0: complex(self.harmonics[0].imag), 1: complex(c1), -1: complex(np.conj(c1))}

    def __call__(self, t, omega_q):
        return sum(c * np.exp(1j * k * omega_q * np.asarray(t)) for k, c in self.harmonics.items())


@dataclass
class RateTriple:
    cooling: RateComponent  # omega = +Omega_eff
    heating: RateComponent  # omega = -Omega_eff
    dephasing: RateComponent  # omega = 0

    def static_real(self):
        return tuple(c.static.real for c in (self.cooling, self.heating, self.dephasing))

    def static_imag(self):
        return tuple(c.static.imag for c in (self.cooling, self.heating, self.dephasing))


def gamma_rates(p: OptomechParams, omega: float, *, expanded=False) -> RateComponent:
    """Harmonics of Gamma(t; omega).

    The exact form follows from the asymptotic alpha_q(t) for any sideband
    phase.  ``expanded`` gives the leading-order expansion in sqrt(r) valid at
    Delta_q = -2 Omega_eff, Omega_q = 2 Omega_eff, for omega in {+-Omega_eff, 0}.
    """
    if expanded:
        return _expanded_rate(p, omega)
    a0, am1 = alpha_harmonics(p)
    g2 = p.g_q ** 2
    d1 = p.gamma_q - 1j * (p.delta_q + 2 * omega)
    d2 = p.gamma_q - 1j * (p.delta_q + p.omega_q + 2 * omega)
    h = {
        0: g2 * abs(a0) ** 2 / d1 + g2 * abs(am1) ** 2 / d2,
        1: g2 * a0 * np.conj(am1) / d1,
        -1: g2 * np.conj(a0) * am1 / d2,
    }
    return RateComponent(omega, {k: complex(v) for k, v in h.items()})


def _expanded_rate(p: OptomechParams, omega: float) -> RateComponent:
    gc = p.gamma_m * p.C_q
    rho1 = math.sqrt(p.n1 / p.n0) if p.n0 > 0 else 0.0
    sr = math.sqrt(p.r)
    w = p.Omega_eff
    if math.isclose(omega, w, rel_tol=1e-12):
        h = {0: gc * (1 + 1j * sr * rho1 ** 2), 1: 1j * gc * rho1, -1: gc * sr * rho1}
    elif math.isclose(omega, -w, rel_tol=1e-12):
        h = {0: -0.5j * sr * gc, 1: 0.5 * sr * gc * rho1, -1: -sr * gc * rho1}
    elif omega == 0:
        h = {0: gc * (rho1 ** 2 - 1j * sr), 1: gc * sr * rho1, -1: -1j * gc * rho1}
    else:
        raise ValidationError("expanded rates exist only for omega in {+Omega_eff, -Omega_eff, 0}")
    return RateComponent(omega, {k: complex(v) for k, v in h.items()})


def rate_triple(p: OptomechParams, *, expanded=False) -> RateTriple:
    w = p.Omega_eff
    return RateTriple(gamma_rates(p, w, expanded=expanded), gamma_rates(p, -w, expanded=expanded),
                      gamma_rates(p, 0.0, expanded=expanded))


def static_rates_formula(p: OptomechParams):
    """Leading static (cooling, heating, dephasing) at Delta_q = -2 Omega_eff."""
    gc = p.gamma_m * p.C_q
    x = p.Omega_eff ** 2 / p.gamma_q ** 2
    return gc, gc / (1 + 16 * x), gc / (1 + 4 * x)


def leading_static_rates(p: OptomechParams):
    """Real static rates without sideband photons (n1 -> 0) at the given detuning."""
    w = p.Omega_eff
    gc = p.gamma_m * p.C_q
    return tuple((gc / (1 - 1j * (p.delta_q + 2 * om) / p.gamma_q)).real for om in (w, -w, 0.0))


def rate_quadrature(p: OptomechParams, omega: float, k: int = 0, *, n_t=8, span=60.0):
    """k-th harmonic of g_q^2 int_0^inf dtau alpha*(t) alpha(t - tau) e^{-(gamma_q - i Delta_q) tau} e^{2 i omega tau}.

    The t-harmonic is extracted by a DFT of the closed-form alpha_q(t) on
    ``n_t`` points; the tau integral runs to ``span``/gamma_q by adaptive quadrature.
    """
    T = 2 * np.pi / p.omega_q
    ts = np.arange(n_t) * T / n_t
    phase_k = np.exp(-1j * k * p.omega_q * ts)

    def integrand(s):
        tau = s / p.gamma_q
        corr = np.conj(alpha_q(ts, p)) * alpha_q(ts - tau, p)
        ck = np.mean(corr * phase_k)
        return ck * np.exp(-(p.gamma_q - 1j * p.delta_q) * tau + 2j * omega * tau)

    opts = dict(limit=4000, epsabs=1e-14 * (p.n0 + p.n1), epsrel=1e-12)
    re = quad(lambda s: integrand(s).real, 0.0, span, **opts)[0]
    im = quad(lambda s: integrand(s).imag, 0.0, span, **opts)[0]
    return p.g_q ** 2 * complex(re, im) / p.gamma_q


# effective generator

TIERS = ("dpo", "kerr", "nrw")


def _sandwich(a, b):
    return sp.kron(b.T, a, format="csr")


def _nrw_superop(b, n, rates: RateTriple):
    """RWA-resonant part of L_NRW: the e^{+i Omega_q t} harmonic acting on single-b^2 terms.

    Gamma*(t) contributes conj(Gamma_{-1}) at this harmonic.  b^4 and b^2 . b^2
    terms have no resonant partner and drop out.  Returns the superoperator X
    with L_NRW ~ e^{i Omega_q t} X + H.c.
    """
    b2 = b @ b
    one = sp.identity(b.shape[0], format="csr")
    m = 2 * n + one
    Gw = rates.cooling.harmonics[1]
    G0 = rates.dephasing.harmonics[1]
    G0c = np.conj(rates.dephasing.harmonics[-1])
    Gmc = np.conj(rates.heating.harmonics[-1])
    X = ((Gw + G0c) * _sandwich(b2, m) - Gw * _sandwich(m @ b2, one) - G0c * _sandwich(one, m @ b2)
         + (G0 + Gmc) * _sandwich(m, b2) - G0 * _sandwich(b2 @ m, one) - Gmc * _sandwich(one, b2 @ m))
    return X.tocsr()


def _hc_superop(X, d):
    """Superoperator of rho -> (X[rho^dag])^dag."""
    from .fock import transpose_permutation

    P = transpose_permutation(d)
    return (P @ X.conj() @ P).tocsr()


def build_effective_liouvillian(p: OptomechParams, N_mech: int, tier="dpo", *, frame="rotating",
                                rates="exact", omega_q_tol=1e-9) -> HarmonicLiouvillian:
    """Effective mechanical generator in units of gamma_eff.

    Tiers are cumulative: 'dpo' = -i[H_DPO, .] + D_b + (gamma_m C_q / gamma_eff) D_{b^2};
    'kerr' adds the static H_perp ~ -sqrt(r) gamma_m C_q (11 + 9n) n / 2;
    'nrw' swaps the static two-phonon loss for the harmonic-rate dissipators
    Gamma_R(t; Omega_eff) D_{b^2} + Gamma_R(t; -Omega_eff) D_{b^dag 2} + 4 Gamma_R(t; 0) D_n
    and adds the RWA-resonant part of L_NRW.
    ``frame='rotating'`` works in the frame rotating at Omega_eff (static for
    'dpo' and 'kerr'); ``frame='lab'`` keeps Omega_eff n and e^{+-i Omega_q t}.
    """
    if tier not in TIERS:
        raise ValidationError(f"unknown tier {tier!r}; use one of {TIERS}")
    if frame not in ("rotating", "lab"):
        raise ValidationError(f"unknown frame {frame!r}")
    if abs(p.omega_q - 2 * p.Omega_eff) > omega_q_tol * abs(p.Omega_eff):
        raise ValidationError(
            f"effective model needs Omega_q = 2 Omega_eff (got {p.omega_q:.9g} vs {2 * p.Omega_eff:.9g})"
        )
    s = 1.0 / p.gamma_eff
    spec = FockSpaceSpec(N_mech, "mechanical")
    b = annihilation(spec)
    n = b.dag() @ b
    b2 = b @ b
    a0, am1 = alpha_harmonics(p)
    c_m1 = np.conj(a0) * am1  # e^{-i Omega_q t} harmonic of |alpha_q|^2
    Hm = (-p.g_q * c_m1 * s) * b2.dag()  # pairs with e^{-i Omega_q t}
    Hp = Hm.dag()
    zero = 0 * n
    H0 = (p.Omega_eff * s) * n if frame == "lab" else zero
    if tier in ("kerr", "nrw"):
        kerr = -math.sqrt(p.r) * p.gamma_m * p.C_q * s / 2
        H0 = H0 + kerr * ((11 * identity(spec) + 9 * n) @ n)
    if frame == "rotating":
        H = {0: H0 + Hm + Hp}
    else:
        H = {0: H0, 1: Hp, -1: Hm}

    diss = [DissipatorSpec(b, 1.0)]
    extra = None
    if tier in ("dpo", "kerr"):
        diss.append(DissipatorSpec(b2, p.gamma_m * p.C_q * s))
    else:
        trip = rate_triple(p, expanded=(rates == "expanded"))
        for comp, op, w in ((trip.cooling, b2, 1.0), (trip.heating, b2.dag(), 1.0), (trip.dephasing, n, 4.0)):
            rh = comp.real_harmonics()
            diss.append(DissipatorSpec(op, {k: w * v * s for k, v in rh.items()}))
        X = _nrw_superop(b.data, n.data, trip) * s
        Xh = _hc_superop(X, N_mech)
        extra = {0: X + Xh} if frame == "rotating" else {1: X, -1: Xh}
    return build_liouvillian(H, diss, p.omega_q * s, extra=extra, space=spec)


# regime validation

@dataclass
class RegimeCheck:
    name: str
    value: float
    threshold: float
    grade: str
    paper_reference_value: float | None = None
    description: str = ""

    def to_dict(self):
        return {"name": self.name, "value": self.value, "threshold": self.threshold, "grade": self.grade,
                "paper_reference_value": self.paper_reference_value, "description": self.description}


@dataclass
class RegimeReport:
    checks: list
    info: dict

    @property
    def passed(self) -> bool:
        return all(c.grade == "pass" for c in self.checks)

    def by_name(self, name) -> RegimeCheck:
        for c in self.checks:
            if c.name == name:
                return c
        raise KeyError(name)

    def to_dict(self):
        return {"checks": [c.to_dict() for c in self.checks], "info": self.info, "passed": self.passed}


def _grade(value, pass_thr, warn_thr):
    if not np.isfinite(value):
        return "fail"
    if value < pass_thr:
        return "pass"
    return "warn" if value < warn_thr else "fail"


#: values quoted for the membrane reference set, for side-by-side reporting
REFERENCE_VALUES = {
    "rwa": 2 * 1e-5 * 3.3e9 / 4.4e6,
    "resolved_sideband": 1 / (4 * 3.5 ** 2),
    "markov": 6e-3,
    "kerr": 1e10 / 1e13,
    "omega_eff_over_gamma_q": 3.5,
    "gamma_q_over_gamma_eff": 150.0,
    "gamma_eff_over_gamma_q": 6e-3,
    "weak_sideband": 3e8 / 3.3e9,
    "kerr_bound": 1e13,
    "expected_n": 1e10,
    "C_q": 3.3e-7,
    "g": 1e-5,
    "sigma_max": 2.5,
}


def regime_check(p: OptomechParams, expected_n=None, *, pass_threshold=0.1, warn_threshold=0.3,
                 reference=False) -> RegimeReport:
    """Grade the approximations behind the effective model; each ratio must be << 1."""
    ep = map_parameters(p)
    gc = p.gamma_m * p.C_q
    if expected_n is None:
        expected_n = max(2 * (ep.sigma - 1) / ep.g ** 2, 1.0)
    kerr_bound = p.Omega_eff / (4.5 * math.sqrt(p.r) * gc) if gc > 0 else math.inf
    markov_rates = {"gamma_eff": p.gamma_eff, "gamma_m C_q": gc, "g_q sqrt(n0 n1)": p.g_q * math.sqrt(p.n0 * p.n1)}
    ref = REFERENCE_VALUES if reference else {}
    values = [
        ("rwa", 2 * p.g_q * p.n0 / p.Omega_eff, "2 g_q n0 / Omega_eff"),
        ("resolved_sideband", p.gamma_q ** 2 / (4 * p.Omega_eff ** 2), "gamma_q^2 / (4 Omega_eff^2)"),
        ("weak_sideband", p.n1 / p.n0 if p.n0 > 0 else math.inf, "n1 / n0"),
        ("markov", max(markov_rates.values()) / p.gamma_q, "max(gamma_eff, gamma_m C_q, g_q sqrt(n0 n1)) / gamma_q"),
        ("kerr", expected_n / kerr_bound, "<n> / (Omega_eff / (4.5 sqrt(r) gamma_m C_q))"),
    ]
    checks = [RegimeCheck(name, float(v), pass_threshold, _grade(v, pass_threshold, warn_threshold),
                          ref.get(name), desc) for name, v, desc in values]
    info = {
        "omega_eff_over_gamma_q": p.Omega_eff / p.gamma_q,
        "gamma_q_over_gamma_eff": p.gamma_q / p.gamma_eff,
        "gamma_eff_over_gamma_q": p.gamma_eff / p.gamma_q,
        "kerr_bound": kerr_bound,
        "expected_n": expected_n,
        "markov_rates": markov_rates,
        "C_q": p.C_q,
        "g": ep.g,
        "sigma": ep.sigma,
    }
    if reference:
        info["reference_values"] = dict(REFERENCE_VALUES)
    return RegimeReport(checks, info)


def effective_occupation(p: OptomechParams, N_mech: int, tier="dpo", *, frame="rotating", rates="exact",
                         rel_tol=1e-8, samples=64):
    """Long-time phonon number of the effective model as (period mean, peak-to-peak / 2).

    Static generators go through steady_state; otherwise the periodic
    asymptotic state is integrated from vacuum.
    """
    from .fock import expectation
    from .lindblad import asymptotic_periodic_state, steady_state

    L = build_effective_liouvillian(p, N_mech, tier, frame=frame, rates=rates)
    spec = L.space
    nop = number(spec)
    if L.is_static():
        rho = steady_state(L)
        return float(expectation(nop, rho).real), 0.0
    _, report = asymptotic_periodic_state(L, fock_state(0, spec), {"n": nop}, samples=samples, rel_tol=rel_tol)
    n = report.observables["n"].real[:-1]
    return float(n.mean()), float((n.max() - n.min()) / 2)

"""Bichromatically driven membrane with quadratic optomechanical coupling.

Quantum runs use the frame displaced by the classical intracavity amplitude
alpha_q(t); classical runs integrate the coherent-state equations for
(x, p, alpha).  Internally time is measured in units of 1/gamma_q.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace

import numpy as np

from . import kernels
from .errors import NonConvergedError, RunawayError, StiffnessError, ValidationError
from .fock import (
    DensityMatrix,
    FockSpaceSpec,
    ProductSpace,
    annihilation,
    coherent_ket,
    embed,
    expectation,
    fock_state,
    number,
    product_state,
)
from .lindblad import DissipatorSpec, HarmonicLiouvillian, asymptotic_periodic_state, build_liouvillian

CONVENTIONS = ("sideband", "carrier")


def effective_frequency(Omega, g_q, n0, n1, convention="sideband"):
    """Omega_eff = Omega - 2 g_q (n0 + n1); 'carrier' drops the sideband photons."""
    if convention == "sideband":
        return Omega - 2 * g_q * (n0 + n1)
    if convention == "carrier":
        return Omega - 2 * g_q * n0
    raise ValidationError(f"unknown convention {convention!r}; use one of {CONVENTIONS}")


def optimal_phase(gamma_q, delta_q, omega_q):
    """Sideband phase that puts alpha_q(t) in the form e^{i theta}[sqrt(n0) - i sqrt(n1) e^{-i Omega_q t}]."""
    return -math.pi / 2 + math.atan(delta_q / gamma_q) - math.atan((delta_q + omega_q) / gamma_q)


@dataclass(frozen=True)
class OptomechParams:
    """Physical parameters in one consistent frequency unit.

    Derived quantities (gamma_eff, n0, n1, C_q, Omega_eff, r) are properties
    and never stored.  ``phi=None`` selects the optimal sideband phase.
    """

    Omega: float
    gamma_m: float
    gamma_q: float
    delta_q: float
    omega_q: float
    g_q: float
    E0: float
    E1: float
    C_l: float = 1.0
    phi: float | None = None
    convention: str = "sideband"
    omega_cavity: float | None = None

    def __post_init__(self):
        for name in ("Omega", "gamma_m", "gamma_q", "delta_q", "omega_q", "g_q", "E0", "E1", "C_l"):
            v = getattr(self, name)
            if not np.isfinite(v):
                raise ValidationError(f"{name} must be finite, got {v}")
        for name in ("Omega", "gamma_m", "gamma_q", "C_l"):
            if getattr(self, name) <= 0:
                raise ValidationError(f"{name} must be > 0, got {getattr(self, name)}")
        for name in ("g_q", "E0", "E1"):
            if getattr(self, name) < 0:
                raise ValidationError(f"{name} must be >= 0, got {getattr(self, name)}")
        if self.omega_q <= 0:
            raise ValidationError(f"omega_q must be > 0, got {self.omega_q}")
        if self.convention not in CONVENTIONS:
            raise ValidationError(f"unknown convention {self.convention!r}; use one of {CONVENTIONS}")

    @classmethod
    def from_photon_numbers(cls, Omega, gamma_m, gamma_q, g_q, n0, n1, C_l=1.0, *, delta_q=None,
                            omega_q=None, phi=None, convention="sideband", omega_cavity=None):
        """Build from intracavity photon numbers.

        Without explicit ``delta_q`` / ``omega_q`` the drive is locked to the
        two-phonon sidebands: delta_q = -2 Omega_eff and omega_q = 2 Omega_eff.
        """
        if n0 < 0 or n1 < 0:
            raise ValidationError("photon numbers must be >= 0")
        w_eff = effective_frequency(Omega, g_q, n0, n1, convention)
        if delta_q is None:
            delta_q = -2 * w_eff
        if omega_q is None:
            omega_q = 2 * w_eff
        E0 = math.sqrt(n0 * (gamma_q ** 2 + delta_q ** 2))
        E1 = math.sqrt(n1 * (gamma_q ** 2 + (delta_q + omega_q) ** 2))
        return cls(Omega, gamma_m, gamma_q, delta_q, omega_q, g_q, E0, E1, C_l, phi, convention, omega_cavity)

    # derived
    @property
    def gamma_eff(self) -> float:
        return self.C_l * self.gamma_m

    @property
    def n0(self) -> float:
        return self.E0 ** 2 / (self.gamma_q ** 2 + self.delta_q ** 2)

    @property
    def n1(self) -> float:
        return self.E1 ** 2 / (self.gamma_q ** 2 + (self.delta_q + self.omega_q) ** 2)

    @property
    def C_q(self) -> float:
        return self.g_q ** 2 * self.n0 / (self.gamma_q * self.gamma_m)

    @property
    def Omega_eff(self) -> float:
        return effective_frequency(self.Omega, self.g_q, self.n0, self.n1, self.convention)

    @property
    def r(self) -> float:
        return 1.0 / (1.0 + 4 * self.Omega_eff ** 2 / self.gamma_q ** 2)

    @property
    def phase(self) -> float:
        return optimal_phase(self.gamma_q, self.delta_q, self.omega_q) if self.phi is None else self.phi

    @property
    def theta(self) -> float:
        return math.atan(self.delta_q / self.gamma_q)

    def with_photon_numbers(self, n0=None, n1=None, relock=True) -> "OptomechParams":
        n0 = self.n0 if n0 is None else n0
        n1 = self.n1 if n1 is None else n1
        return OptomechParams.from_photon_numbers(
            self.Omega, self.gamma_m, self.gamma_q, self.g_q, n0, n1, self.C_l,
            delta_q=None if relock else self.delta_q, omega_q=None if relock else self.omega_q,
            phi=self.phi, convention=self.convention, omega_cavity=self.omega_cavity,
        )

    def derived(self) -> dict:
        return {
            "gamma_eff": self.gamma_eff, "n0": self.n0, "n1": self.n1, "C_q": self.C_q,
            "Omega_eff": self.Omega_eff, "r": self.r, "phi": self.phase,
        }

    def to_dict(self) -> dict:
        return {
            "Omega": self.Omega, "gamma_m": self.gamma_m, "gamma_q": self.gamma_q,
            "delta_q": self.delta_q, "omega_q": self.omega_q, "g_q": self.g_q, "E0": self.E0,
            "E1": self.E1, "C_l": self.C_l, "phi": self.phi, "convention": self.convention,
            "omega_cavity": self.omega_cavity,
        }


def harris15_params(n1=3e8, n0=3.3e9, convention="sideband") -> OptomechParams:
    """Membrane-in-the-middle reference set (rates in s^-1, sidebands locked)."""
    return OptomechParams.from_photon_numbers(
        4.4e6, 0.8, 1.3e6, 1e-5, n0, n1, 1e4, convention=convention, omega_cavity=1.77e15,
    )


def n1_for_sigma(p: OptomechParams, sigma: float) -> float:
    """Sideband photon number giving effective pump ``sigma`` (inverse of the parameter map)."""
    g = math.sqrt(4 * p.C_q / p.C_l)
    return (sigma / g) ** 2 * p.gamma_eff / p.gamma_q


def benchmark_params(sigma, *, g=0.8, ratio=30.0, omega_eff_over_gamma_q=5.0, n0=2.0, C_l=1e4,
                     gamma_q=1.0, convention="sideband") -> OptomechParams:
    """Desk-scale set reaching effective pump ``sigma``.

    gamma_q / gamma_eff = ratio, Omega_eff / gamma_q fixed, n0 photons; g_q and
    n1 follow from the parameter map, and the bare Omega is back-solved so that
    the chosen Omega_eff holds in the selected convention.
    """
    if sigma < 0 or g <= 0 or ratio <= 0 or n0 <= 0:
        raise ValidationError("benchmark needs sigma >= 0 and positive g, ratio, n0")
    gamma_eff = gamma_q / ratio
    gamma_m = gamma_eff / C_l
    g_q = math.sqrt(g * g * gamma_q * gamma_eff / (4 * n0))
    n1 = (sigma / g) ** 2 * gamma_eff / gamma_q
    w_eff = omega_eff_over_gamma_q * gamma_q
    Omega = w_eff + 2 * g_q * (n0 + (n1 if convention == "sideband" else 0.0))
    return OptomechParams.from_photon_numbers(Omega, gamma_m, gamma_q, g_q, n0, n1, C_l,
                                              convention=convention)


# intracavity amplitude

def alpha_harmonics(p: OptomechParams):
    """(alpha_0, alpha_-1) with alpha(t) = alpha_0 + alpha_-1 e^{-i Omega_q t} asymptotically."""
    a0 = p.E0 / (p.gamma_q - 1j * p.delta_q)
    am1 = p.E1 * np.exp(1j * p.phase) / (p.gamma_q - 1j * (p.delta_q + p.omega_q))
    return complex(a0), complex(am1)


def drive(t, p: OptomechParams):
    return p.E0 + p.E1 * np.exp(-1j * p.omega_q * np.asarray(t) + 1j * p.phase)


def alpha_q(t, p: OptomechParams, alpha0=None):
    """Intracavity amplitude; ``alpha0=None`` gives the asymptotic (t >> 1/gamma_q) form."""
    t = np.asarray(t, float)
    a0, am1 = alpha_harmonics(p)
    asym = a0 + am1 * np.exp(-1j * p.omega_q * t)
    if alpha0 is None:
        return asym
    decay = np.exp(-(p.gamma_q - 1j * p.delta_q) * t)
    return alpha0 * decay + a0 * (1 - decay) + am1 * (np.exp(-1j * p.omega_q * t) - decay)


# quantum model

@dataclass(frozen=True)
class OmOperators:
    space: ProductSpace
    a: object
    b: object
    x: object
    p: object
    n_a: object
    n_b: object


def om_operators(N_mech: int, N_opt: int) -> OmOperators:
    space = ProductSpace(FockSpaceSpec(N_opt, "optical"), FockSpaceSpec(N_mech, "mechanical"))
    a = embed(annihilation(space.optical), "optical", space)
    b = embed(annihilation(space.mechanical), "mechanical", space)
    x = b + b.dag()
    p = 1j * (b.dag() - b)
    return OmOperators(space, a, b, x, p, a.dag() @ a, b.dag() @ b)


def build_om_liouvillian(p: OptomechParams, N_mech: int, N_opt: int, *, frame="displaced",
                         mech_dissipator="lindblad") -> HarmonicLiouvillian:
    """Harmonic generator of the full model in units of gamma_q.

    ``frame='displaced'`` removes the asymptotic alpha_q(t); ``frame='lab'``
    keeps the explicit drive (only useful for small drive amplitudes).
    """
    ops = om_operators(N_mech, N_opt)
    s = 1.0 / p.gamma_q
    x2 = ops.x @ ops.x
    H0 = (-p.delta_q * s) * ops.n_a + (p.Omega * s) * ops.n_b - (p.g_q * s) * (ops.n_a @ x2)
    if frame == "displaced":
        a0, am1 = alpha_harmonics(p)
        ap1c = np.conj(am1)  # (alpha*)_{+1}
        c1 = np.conj(a0) * am1  # |alpha|^2 harmonic at e^{-i Omega_q t}
        H0 = H0 - (p.g_q * s * (abs(a0) ** 2 + abs(am1) ** 2)) * x2
        H0 = H0 - (p.g_q * s) * ((np.conj(a0) * ops.a + a0 * ops.a.dag()) @ x2)
        Hp = (-p.g_q * s * np.conj(c1)) * x2 - (p.g_q * s * ap1c) * (ops.a @ x2)
    elif frame == "lab":
        H0 = H0 + (1j * p.E0 * s) * (ops.a.dag() - ops.a)
        Hp = (-1j * p.E1 * s * np.exp(-1j * p.phase)) * ops.a
    else:
        raise ValidationError(f"unknown frame {frame!r}")
    Hm = Hp.dag()
    diss = [
        DissipatorSpec(ops.a, 1.0),
        DissipatorSpec(ops.b, p.gamma_eff * s, form="quadrature" if mech_dissipator == "quadrature" else "lindblad"),
    ]
    if mech_dissipator not in ("lindblad", "quadrature"):
        raise ValidationError(f"unknown mechanical dissipator {mech_dissipator!r}")
    return build_liouvillian({-1: Hm, 0: H0, 1: Hp}, diss, p.omega_q * s, space=ops.space)


@dataclass
class AsymptoticFit:
    n_bar: float
    delta_n: float
    theta: float = 0.0
    residual: float = 0.0
    extras: dict = field(default_factory=dict)

    @property
    def modulation_ok(self) -> bool:
        """The expected regime has delta_n well below n_bar."""
        return self.delta_n < 0.5 * self.n_bar if self.n_bar > 0 else self.delta_n == 0

    def to_dict(self):
        return {"n_bar": self.n_bar, "delta_n": self.delta_n, "theta": self.theta,
                "residual": self.residual, **self.extras}


def fit_periodic(times, values, omega) -> AsymptoticFit:
    """n_bar + delta_n sin(omega t + theta) from samples spanning whole periods.

    The first Fourier coefficient is taken on the uniform grid (endpoint excluded).
    """
    t = np.asarray(times, float)
    v = np.asarray(values, float)
    if len(t) > 2 and np.isclose((t[-1] - t[0]) * omega / (2 * np.pi), round((t[-1] - t[0]) * omega / (2 * np.pi))):
        t, v = t[:-1], v[:-1]
    n_bar = float(v.mean())
    c1 = 2 * np.mean(v * np.exp(-1j * omega * t))
    delta_n = float(abs(c1))
    theta = float(np.angle(c1) + np.pi / 2)
    model = n_bar + delta_n * np.sin(omega * t + theta)
    resid = float(np.sqrt(np.mean((v - model) ** 2)))
    return AsymptoticFit(n_bar, delta_n, theta, resid)


def initial_state(kind, N_mech, N_opt, p: OptomechParams | None = None, beta=0.0):
    """'vacuum', 'coherent' (mechanics in |beta>) or 'dpo' (mechanics in the effective DPO steady state)."""
    space = ProductSpace(FockSpaceSpec(N_opt, "optical"), FockSpaceSpec(N_mech, "mechanical"))
    opt = fock_state(0, space.optical)
    if kind == "vacuum":
        mech = fock_state(0, space.mechanical)
    elif kind == "coherent":
        psi = coherent_ket(beta, space.mechanical)
        mech = DensityMatrix(np.outer(psi, psi.conj()), space.mechanical, check=False)
    elif kind == "dpo":
        from .dpo import dpo_steady_state
        from .effective import map_parameters

        ep = map_parameters(p)
        mech = dpo_steady_state(ep.dpo_params(), N_mech)
    else:
        raise ValidationError(f"unknown initial state {kind!r}")
    rho = product_state(opt, mech)
    return DensityMatrix(rho.data, space, check=False)


def om_quantum_asymptotics(p: OptomechParams, N_mech: int, N_opt: int, *, rho0="vacuum", samples=64,
                           rel_tol=1e-6, max_periods=10_000, mech_dissipator="lindblad", rtol=1e-8,
                           atol=1e-12, progress=None):
    """Asymptotic phonon number of the full quantum model, fitted as n_bar + delta_n sin(Omega_q t + theta)."""
    L = build_om_liouvillian(p, N_mech, N_opt, mech_dissipator=mech_dissipator)
    ops = om_operators(N_mech, N_opt)
    if isinstance(rho0, str):
        rho0 = initial_state(rho0, N_mech, N_opt, p)
    states, report = asymptotic_periodic_state(
        L, rho0, {"n_b": ops.n_b, "n_a": ops.n_a}, samples=samples, rel_tol=rel_tol,
        max_periods=max_periods, rtol=rtol, atol=atol, progress=progress,
    )
    n_b = report.observables["n_b"].real
    fit = fit_periodic(report.times, n_b, L.omega)
    top = max(abs(s.ptrace("mechanical").data[-1, -1]) for s in states)
    fit.extras = {
        "n_opt_mean": float(report.observables["n_a"].real[:-1].mean()),
        "n_opt_max": float(report.observables["n_a"].real.max()),
        "top_mech_population": float(top),
        "periods": report.periods,
        "N_mech": N_mech,
        "N_opt": N_opt,
    }
    return fit, report


# classical model

@dataclass(frozen=True)
class ClassicalOMState:
    x: float
    p: float
    alpha: complex

    def __post_init__(self):
        if not all(np.isfinite(v) for v in (self.x, self.p, self.alpha)):
            raise ValidationError("classical state must be finite")

    @property
    def phonons(self) -> float:
        return (self.x ** 2 + self.p ** 2) / 4

    def as_array(self):
        return np.array([self.x, self.p, self.alpha.real, self.alpha.imag])


def classical_rhs(t, y, p: OptomechParams):
    """Right-hand side in physical time units; y = (x, p, Re alpha, Im alpha)."""
    x, pm, ar, ai = y
    a = complex(ar, ai)
    da = drive(t, p) - (p.gamma_q - 1j * p.delta_q - 1j * p.g_q * x * x) * a
    return np.array([
        p.Omega * pm,
        -2 * p.gamma_eff * pm - (p.Omega - 4 * p.g_q * abs(a) ** 2) * x,
        da.real,
        da.imag,
    ])


def _kernel_params(p: OptomechParams):
    s = 1.0 / p.gamma_q
    return np.array([p.Omega * s, p.gamma_eff * s, 1.0, p.delta_q * s, p.g_q * s,
                     p.E0 * s, p.E1 * s, p.omega_q * s, p.phase])


@dataclass
class ClassicalOMTrajectory:
    t: np.ndarray  # physical time units
    y: np.ndarray  # columns x, p, Re alpha, Im alpha
    n_accepted: int
    n_rejected: int

    @property
    def phonons(self):
        return (self.y[:, 0] ** 2 + self.y[:, 1] ** 2) / 4

    @property
    def alpha(self):
        return self.y[:, 2] + 1j * self.y[:, 3]

    def final_state(self) -> ClassicalOMState:
        x, pm, ar, ai = self.y[-1]
        return ClassicalOMState(float(x), float(pm), complex(ar, ai))


def classical_om_integrate(p: OptomechParams, state0: ClassicalOMState, t_span, *, n_out=400,
                           fit_periods=4, samples_per_period=64, rtol=1e-8, atol=1e-12,
                           max_steps=50_000_000, runaway=1e12, backend=None):
    """Trajectory of the classical equations plus a fit of (x^2 + p^2)/4 over the last periods."""
    t0, t1 = map(float, t_span)
    if not t1 > t0:
        raise ValidationError("t_span must be increasing")
    s = p.gamma_q
    T = 2 * np.pi / p.omega_q
    n_fit = fit_periods * samples_per_period
    t_fit0 = max(t0, t1 - fit_periods * T)
    coarse = np.linspace(t0, t_fit0, n_out, endpoint=False)
    fine = np.linspace(t_fit0, t1, n_fit + 1)
    t_out = np.concatenate([coarse, fine]) * s
    impl = kernels.get_backend(backend)
    Y, na, nr, status, t_reached = impl.om_classical_trajectory(
        _kernel_params(p), state0.as_array(), np.ascontiguousarray(t_out), rtol, atol, max_steps, runaway,
    )
    if status == kernels.STATUS_RUNAWAY:
        raise RunawayError(t_reached / s, float(np.linalg.norm(Y[-1])) if len(Y) else float("inf"))
    if status == kernels.STATUS_UNDERFLOW:
        raise StiffnessError(t_reached / s, float("nan"))
    if status == kernels.STATUS_BUDGET:
        raise NonConvergedError(f"step budget exhausted at t={t_reached / s:.6g}")
    if status != kernels.STATUS_OK:
        raise RunawayError(t_reached / s, float("inf"))
    traj = ClassicalOMTrajectory(t_out / s, np.asarray(Y), int(na), int(nr))
    k = len(coarse)
    fit = fit_periodic(traj.t[k:], traj.phonons[k:], p.omega_q)
    return traj, fit


def classical_static_phonons(p: OptomechParams, *, seed_phonons=None, horizon=12.0, **kwargs):
    """Static phonon background of the classical model from a seeded long run.

    The mechanics starts at x = 2 sqrt(seed), p = 0 and the optics at its
    asymptotic amplitude; the run lasts ``horizon`` slowest relaxation times
    of the effective DPO (1 / (2 gamma_eff |sigma - 1|), floored at 0.1 gamma_eff).
    """
    from .effective import map_parameters

    ep = map_parameters(p)
    expected = 2 * max(ep.sigma - 1, 0) / ep.g ** 2
    if seed_phonons is None:
        seed_phonons = expected if expected > 0 else 1e-2 * 3.0 / ep.g ** 2
    a0 = complex(alpha_q(0.0, p))
    state0 = ClassicalOMState(2 * math.sqrt(seed_phonons), 0.0, a0)
    T = horizon / (p.gamma_eff * max(2 * abs(ep.sigma - 1), 0.2))
    traj, fit = classical_om_integrate(p, state0, (0.0, T), **kwargs)
    fit.extras = {"sigma": ep.sigma, "g": ep.g, "expected": expected, "T": T,
                  "steps": traj.n_accepted}
    return fit, traj


# moment identities

@dataclass
class MomentCheck:
    quantum: dict
    classical: dict
    residuals: dict
    residual: float
    residual_zero_point: float


def coherent_moment_check(p: OptomechParams, alpha, beta, t=0.0, *, N_mech=40, N_opt=30,
                          mech_dissipator="quadrature") -> MomentCheck:
    """Compare tr(O L[rho]) on a product coherent state with the classical right-hand side.

    Evaluated in the undisplaced frame (explicit drive).  ``residual`` uses the
    classical equations verbatim; ``residual_zero_point`` adds the vacuum
    contribution g_q * alpha that <x^2> = x^2 + 1 feeds into d<a>/dt.
    Residuals are relative to max(|classical|, 1) per component.
    """
    L = build_om_liouvillian(p, N_mech, N_opt, frame="lab", mech_dissipator=mech_dissipator)
    ops = om_operators(N_mech, N_opt)
    psi = np.kron(coherent_ket(alpha, ops.space.optical), coherent_ket(beta, ops.space.mechanical))
    rho = DensityMatrix(np.outer(psi, psi.conj()), ops.space, check=False)
    tq = t * p.gamma_q
    drho = DensityMatrix(L.apply_to(rho, tq) * p.gamma_q, ops.space, check=False)
    q = {
        "x": expectation(ops.x, drho).real,
        "p": expectation(ops.p, drho).real,
        "a": expectation(ops.a, drho),
    }
    x0, p0 = 2 * complex(beta).real, 2 * complex(beta).imag
    rhs = classical_rhs(t, [x0, p0, complex(alpha).real, complex(alpha).imag], p)
    c = {"x": rhs[0], "p": rhs[1], "a": complex(rhs[2], rhs[3])}
    res = {k: abs(q[k] - c[k]) / max(abs(c[k]), 1.0) for k in c}
    zp = c["a"] + 1j * p.g_q * complex(alpha)
    res_zp = dict(res, a=abs(q["a"] - zp) / max(abs(c["a"]), 1.0))
    return MomentCheck(q, c, res, max(res.values()), max(res_zp.values()))

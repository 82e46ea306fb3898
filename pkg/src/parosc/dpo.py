"""Degenerate parametric oscillator: quantum generator, classical limit and sweeps.

Times are in units of 1/gamma throughout.
"""

from __future__ import annotations

import csv
import io
from dataclasses import dataclass, field

import numpy as np
from scipy.integrate import solve_ivp

from .errors import StiffnessError, ValidationError
from .fock import FockSpaceSpec, annihilation, expectation, number
from .lindblad import DissipatorSpec, HarmonicLiouvillian, build_liouvillian, steady_state


@dataclass(frozen=True)
class DpoParams:
    sigma: float
    g: float
    gamma: float = 1.0
    omega0: float = 0.0  # bookkeeping only, absent in the rotating frame

    def __post_init__(self):
        for name in ("sigma", "g", "gamma", "omega0"):
            v = getattr(self, name)
            if not np.isfinite(v):
                raise ValidationError(f"{name} must be finite, got {v}")
        if self.gamma <= 0:
            raise ValidationError(f"gamma must be > 0, got {self.gamma}")
        if self.g <= 0:
            raise ValidationError(f"g must be > 0, got {self.g}")
        if self.sigma < 0:
            raise ValidationError(f"sigma must be >= 0, got {self.sigma}")


@dataclass(frozen=True)
class ClassicalFixedPoint:
    amplitude: complex
    branch: str
    eigenvalues: tuple
    stable: bool


def build_dpo_liouvillian(p: DpoParams, N: int) -> HarmonicLiouvillian:
    """-i[H,.] + D_a + (g^2/4) D_{a^2} with H = i sigma (a^dag^2 - a^2)/2 (units of gamma)."""
    spec = FockSpaceSpec(N, "mechanical")
    a = annihilation(spec)
    a2 = a @ a
    H = {0: (0.5j * p.sigma) * (a2.dag() - a2)}
    diss = [DissipatorSpec(a, 1.0), DissipatorSpec(a2, p.g ** 2 / 4)]
    return build_liouvillian(H, diss, 0.0, space=spec)


def dpo_steady_state(p: DpoParams, N: int, **kwargs):
    return steady_state(build_dpo_liouvillian(p, N), **kwargs)


def steady_occupation(p: DpoParams, N: int, **kwargs) -> float:
    rho = dpo_steady_state(p, N, **kwargs)
    return expectation(number(rho.space), rho).real


# classical limit

def classical_rhs(alpha, sigma, g):
    """d alpha / d(gamma t) = sigma alpha* - (g^2/2)|alpha|^2 alpha - alpha."""
    return sigma * np.conj(alpha) - 0.5 * g * g * abs(alpha) ** 2 * alpha - alpha


def stability_matrix(alpha, sigma, g) -> np.ndarray:
    """Jacobian in (delta alpha, delta alpha*)."""
    a = complex(alpha)
    diag = -1.0 - g * g * abs(a) ** 2
    return np.array([[diag, sigma - 0.5 * g * g * a * a],
                     [sigma - 0.5 * g * g * np.conj(a) ** 2, diag]])


def numeric_jacobian(alpha, sigma, g, h=1e-6) -> np.ndarray:
    """Central-difference Jacobian of the real 2-d system (Re alpha, Im alpha)."""
    def f(v):
        z = classical_rhs(complex(v[0], v[1]), sigma, g)
        return np.array([z.real, z.imag])

    v0 = np.array([complex(alpha).real, complex(alpha).imag])
    J = np.zeros((2, 2))
    for j in range(2):
        e = np.zeros(2)
        e[j] = h
        J[:, j] = (f(v0 + e) - f(v0 - e)) / (2 * h)
    return J


def _sorted_eigs(M):
    lam = np.linalg.eigvals(M)
    lam = lam[np.argsort(-lam.real)]
    return tuple(complex(z) if abs(z.imag) > 0 else float(z.real) for z in lam)


def classical_fixed_points(p: DpoParams) -> list[ClassicalFixedPoint]:
    """Trivial branch (lambda = -1 +/- sigma) and, above threshold, +/- sqrt(2(sigma-1))/g."""
    s, g = p.sigma, p.g
    out = [ClassicalFixedPoint(0j, "trivial", (-1.0 + s, -1.0 - s), -1.0 + s < 0)]
    if s > 1:
        amp = np.sqrt(2 * (s - 1)) / g
        lam = (-2 * s + 2.0, -2 * s)
        for branch, sign in (("positive", 1), ("negative", -1)):
            out.append(ClassicalFixedPoint(complex(sign * amp), branch, lam, max(lam) < 0))
    return out


def stable_amplitude(p: DpoParams) -> float:
    """|alpha| of the stable classical branch."""
    return max(abs(fp.amplitude) for fp in classical_fixed_points(p) if fp.stable or p.sigma == 1)


@dataclass
class ClassicalTrajectory:
    t: np.ndarray
    alpha: np.ndarray
    nfev: int

    @property
    def final(self) -> complex:
        return complex(self.alpha[-1])


def classical_dpo_integrate(p: DpoParams, alpha0, t_span, *, n_out=200, rtol=1e-10, atol=1e-14):
    """Adaptive RK (Dormand-Prince 5(4)) trajectory of the classical amplitude."""
    alpha0 = complex(alpha0)
    if not np.isfinite(alpha0):
        raise ValidationError(f"initial amplitude must be finite, got {alpha0}")
    s, g = p.sigma, p.g

    def rhs(t, y):
        z = classical_rhs(complex(y[0], y[1]), s, g)
        return [z.real, z.imag]

    t_eval = np.linspace(t_span[0], t_span[1], n_out)
    sol = solve_ivp(rhs, t_span, [alpha0.real, alpha0.imag], method="RK45", t_eval=t_eval,
                    rtol=rtol, atol=atol)
    if sol.status != 0:
        raise StiffnessError(float(sol.t[-1]) if len(sol.t) else t_span[0], float("nan"), sol.message)
    return ClassicalTrajectory(sol.t, sol.y[0] + 1j * sol.y[1], sol.nfev)


def relaxation_time(p: DpoParams, seed: float) -> float:
    """Integration time that settles a seed of size ``seed`` onto its attractor to ~1e-10."""
    rate = max(abs(1 - p.sigma), 0.02)
    if p.sigma > 1:
        rate = min(p.sigma - 1, 2 * (p.sigma - 1))
        grow = np.log(max(stable_amplitude(p), 1.0) / abs(seed)) / (p.sigma - 1)
        return grow + 30.0 / rate
    return 30.0 / rate


@dataclass
class SweepResult:
    rows: list = field(default_factory=list)
    header: tuple = ("sigma", "alpha_abs_classical", "n_quantum", "trunc_N")

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(self.header)
        for row in self.rows:
            w.writerow([_fmt(v) for v in row])
        return buf.getvalue()

    def column(self, name):
        i = self.header.index(name)
        return np.array([r[i] for r in self.rows], dtype=float)


def _fmt(v):
    if v is None:
        return ""
    if isinstance(v, (float, np.floating)):
        return repr(float(v)) if np.isfinite(v) else str(float(v))
    return str(v)


def threshold_sweep(g, sigmas, *, quantum=False, trunc="auto", seed=1e-8, integrate=True,
                    n_start=10, n_step=10, n_max=120):
    """Classical stable |alpha| over a sigma grid, optionally with the quantum steady <n>.

    With ``integrate`` the classical amplitude is the end point of a trajectory
    from a small real seed; otherwise the closed-form stable branch is reported.
    """
    from .lindblad import adapt_truncation

    res = SweepResult()
    for s in sigmas:
        p = DpoParams(float(s), float(g))
        if integrate:
            T = relaxation_time(p, seed)
            amp = abs(classical_dpo_integrate(p, seed, (0.0, T), n_out=2).final)
        else:
            amp = stable_amplitude(p)
        n_q, N = None, None
        if quantum:
            if trunc == "auto":
                N, n_q, _ = adapt_truncation(lambda n: steady_occupation(p, n), n_start, n_step, n_max)
            else:
                N = int(trunc)
                n_q = steady_occupation(p, N)
        res.rows.append((float(s), float(amp), n_q, N))
    return res

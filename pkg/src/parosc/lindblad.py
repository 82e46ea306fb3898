"""Liouvillian assembly, time evolution and stationary / asymptotic states.

A time-periodic generator is stored by its Fourier components

    L(t) = L_{-1} e^{-i w t} + L_0 + L_{+1} e^{+i w t}

on the column-major superspace of :mod:`parosc.fock`.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field
from functools import cached_property
from typing import Callable, Mapping

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from . import kernels
from .errors import (
    AmbiguousSteadyStateError,
    BudgetExhaustedError,
    CompositionError,
    ConvergenceTimeoutError,
    InvalidStateError,
    NonConvergedError,
    NonHermitianError,
    RunawayError,
    StiffnessError,
    ValidationError,
)
from .fock import DensityMatrix, OperatorMatrix, Space, devectorize, vectorize

HARMONICS = (-1, 0, 1)


def _sandwich(a, b):
    """Superoperator of X -> a X b (a, b sparse)."""
    return sp.kron(b.T, a, format="csr")


def commutator_superop(h) -> sp.csr_matrix:
    """-i[H, .] as a superoperator."""
    h = h.data if isinstance(h, OperatorMatrix) else sp.csr_matrix(h)
    one = sp.identity(h.shape[0], format="csr")
    return (-1j * (_sandwich(h, one) - _sandwich(one, h))).tocsr()


def lindblad_superop(j) -> sp.csr_matrix:
    """D_J[X] = 2 J X J^dag - J^dag J X - X J^dag J."""
    j = j.data if isinstance(j, OperatorMatrix) else sp.csr_matrix(j)
    one = sp.identity(j.shape[0], format="csr")
    jd = j.conj().T.tocsr()
    jdj = jd @ j
    return (2 * _sandwich(j, jd) - _sandwich(jdj, one) - _sandwich(one, jdj)).tocsr()


def quadrature_superop(x, p) -> sp.csr_matrix:
    """[x, {p, X}] / (2i): damps p only, leaving x undamped."""
    x = x.data if isinstance(x, OperatorMatrix) else sp.csr_matrix(x)
    p = p.data if isinstance(p, OperatorMatrix) else sp.csr_matrix(p)
    one = sp.identity(x.shape[0], format="csr")
    s = _sandwich(x @ p, one) + _sandwich(x, p) - _sandwich(p, x) - _sandwich(one, p @ x)
    return (s / 2j).tocsr()


@dataclass(frozen=True)
class DissipatorSpec:
    """Jump operator with a (possibly harmonic) rate.

    ``rate`` is a non-negative float, or a mapping ``{-1, 0, 1} -> complex``
    for a real rate oscillating at the base frequency (R_{-1} = conj R_{+1}).
    ``form='quadrature'`` uses the p-damping variant built from
    x = J + J^dag and p = i(J^dag - J) unless ``quadratures`` is given.
    """

    operator: OperatorMatrix
    rate: float | Mapping[int, complex]
    form: str = "lindblad"
    quadratures: tuple | None = None

    def __post_init__(self):
        if self.form not in ("lindblad", "quadrature"):
            raise ValidationError(f"unknown dissipator form {self.form!r}")
        rates = self.rate_harmonics
        if set(rates) - set(HARMONICS):
            raise ValidationError(f"rate harmonics must be among {HARMONICS}")
        r0 = complex(rates.get(0, 0.0))
        if abs(r0.imag) > 1e-14 * max(1.0, abs(r0)) or r0.real < 0:
            raise ValidationError(f"static rate must be real and >= 0, got {r0}")
        if abs(complex(rates.get(-1, 0)) - np.conj(complex(rates.get(1, 0)))) > 1e-12 * max(1.0, abs(r0)):
            raise ValidationError("rate harmonics must satisfy R_{-1} = conj(R_{+1})")
        if self.form == "quadrature" and self.quadratures is None:
            j = self.operator
            object.__setattr__(self, "quadratures", (j + j.dag(), 1j * (j.dag() - j)))

    @property
    def rate_harmonics(self) -> dict:
        if isinstance(self.rate, Mapping):
            return {int(k): complex(v) for k, v in self.rate.items()}
        return {0: float(self.rate)}

    def superop(self) -> sp.csr_matrix:
        if self.form == "quadrature":
            return quadrature_superop(*self.quadratures)
        return lindblad_superop(self.operator)


@dataclass(frozen=True)
class HarmonicLiouvillian:
    omega: float
    components: Mapping[int, sp.csr_matrix]
    space: Space

    @property
    def dim(self) -> int:
        return self.space.dim ** 2

    @property
    def L0(self) -> sp.csr_matrix:
        return self.components[0]

    def is_static(self, rtol=1e-14) -> bool:
        ref = spla.norm(self.L0) or 1.0
        return all(spla.norm(self.components[k]) <= rtol * ref for k in (-1, 1))

    def at(self, t: float) -> sp.csr_matrix:
        c = np.exp(1j * self.omega * t)
        return (self.components[0] + c * self.components[1] + np.conj(c) * self.components[-1]).tocsr()

    def apply(self, y, t: float = 0.0) -> np.ndarray:
        c = np.exp(1j * self.omega * t)
        return self.components[0] @ y + c * (self.components[1] @ y) + np.conj(c) * (self.components[-1] @ y)

    def apply_to(self, rho, t: float = 0.0) -> np.ndarray:
        """L(t)[rho] as a matrix."""
        arr = rho.data if isinstance(rho, DensityMatrix) else np.asarray(rho)
        return devectorize(self.apply(vectorize(arr), t))

    @cached_property
    def fused(self):
        """Union CSR pattern with the three data arrays aligned to it."""
        mats = [self.components[k].tocsr() for k in (0, 1, -1)]
        for m in mats:
            m.sum_duplicates()
            m.sort_indices()
        pattern = (abs(mats[0]) + abs(mats[1]) + abs(mats[2])).tocsr()
        pattern.sort_indices()
        n = pattern.shape[0]
        rows = np.repeat(np.arange(n), np.diff(pattern.indptr))
        keys = rows.astype(np.int64) * n + pattern.indices
        out = []
        for m in mats:
            mr = np.repeat(np.arange(n), np.diff(m.indptr))
            mk = mr.astype(np.int64) * n + m.indices
            data = np.zeros(pattern.nnz, complex)
            data[np.searchsorted(keys, mk)] = m.data
            out.append(data)
        return (pattern.indptr.astype(np.int32), pattern.indices.astype(np.int32), *out)

    def __add__(self, other: "HarmonicLiouvillian") -> "HarmonicLiouvillian":
        if other.space != self.space or other.omega != self.omega:
            raise CompositionError("cannot add Liouvillians on different spaces or frequencies")
        comps = {k: (self.components[k] + other.components[k]).tocsr() for k in HARMONICS}
        return HarmonicLiouvillian(self.omega, comps, self.space)


def build_liouvillian(
    hamiltonian_harmonics: Mapping[int, OperatorMatrix],
    dissipators,
    omega: float = 0.0,
    *,
    extra: Mapping[int, sp.spmatrix] | None = None,
    space: Space | None = None,
    herm_tol: float = 1e-12,
) -> HarmonicLiouvillian:
    """Assemble L_k = -i[H_k, .] + sum of dissipator parts (+ optional raw superoperators)."""
    ops = list(hamiltonian_harmonics.values()) + [d.operator for d in dissipators]
    if space is None:
        if not ops:
            raise ValidationError("cannot infer the space of an empty Liouvillian")
        space = ops[0].space
    for op in ops:
        if op.space != space:
            raise CompositionError(f"operator on {op.space} mixed with {space}")
    if set(hamiltonian_harmonics) - set(HARMONICS):
        raise ValidationError(f"Hamiltonian harmonics must be among {HARMONICS}")

    d = space.dim
    zero = OperatorMatrix(sp.csr_matrix((d, d)), space)
    H = {k: hamiltonian_harmonics.get(k, zero) for k in HARMONICS}
    scale = max(1.0, max(float(np.abs(h.data).max()) if h.data.nnz else 0.0 for h in H.values()))
    for k in (0, 1):
        diff = (H[-k].data - H[k].data.conj().T)
        if diff.nnz and np.abs(diff.data).max() > herm_tol * scale:
            raise NonHermitianError(f"H_{-k} != H_{k}^dagger (max deviation {np.abs(diff.data).max():.2e})")

    comps = {k: commutator_superop(H[k]) for k in HARMONICS}
    for diss in dissipators:
        sop = diss.superop()
        for k, r in diss.rate_harmonics.items():
            if r != 0:
                comps[k] = comps[k] + (r if k else r.real) * sop
    if extra:
        for k, m in extra.items():
            if k not in HARMONICS:
                raise ValidationError(f"extra harmonic {k} not among {HARMONICS}")
            if m.shape != (d * d, d * d):
                raise CompositionError("extra superoperator has the wrong dimension")
            comps[k] = comps[k] + m
    comps = {k: sp.csr_matrix(v, dtype=complex) for k, v in comps.items()}
    for v in comps.values():
        v.eliminate_zeros()
    return HarmonicLiouvillian(float(omega), comps, space)


@dataclass
class EvolutionReport:
    times: np.ndarray
    observables: dict
    final_state: DensityMatrix
    n_accepted: int = 0
    n_rejected: int = 0
    h_min: float = math.inf
    trace_drift: float = 0.0
    converged: bool = True
    periods: int = 0
    drift: float | None = None
    settings: dict = field(default_factory=dict)

    def summary(self) -> dict:
        return {
            "n_accepted": int(self.n_accepted),
            "n_rejected": int(self.n_rejected),
            "h_min": float(self.h_min),
            "trace_drift": float(self.trace_drift),
            "converged": bool(self.converged),
            "periods": int(self.periods),
            "drift": None if self.drift is None else float(self.drift),
            **self.settings,
        }


def _obs_rows(observables, space):
    rows = {}
    for name, op in (observables or {}).items():
        if op.space != space:
            raise CompositionError(f"observable {name!r} lives on {op.space}, not {space}")
        # tr(O rho) = vec(O^T) . vec(rho)
        rows[name] = vectorize(op.toarray().T)
    return rows


def _hermitize_vec(y, d):
    m = y.reshape(d, d, order="F")
    return ((m + m.conj().T) / 2).reshape(-1, order="F")


class _Stepper:
    """Carries step size and statistics across successive kernel calls."""

    def __init__(self, L: HarmonicLiouvillian, rtol, atol, max_steps):
        self.L = L
        self.fused = L.fused
        self.rtol, self.atol, self.max_steps = rtol, atol, max_steps
        self.h = 0.0
        self.n_acc = 0
        self.n_rej = 0
        self.h_min = math.inf

    def advance(self, y, t0, t1):
        indptr, indices, d0, dp, dm = self.fused
        budget = max(1, self.max_steps - self.n_acc - self.n_rej)
        y, h, na, nr, hmin, status, t = kernels.propagate_harmonic(
            indptr, indices, d0, dp, dm, self.L.omega, y, t0, t1, self.h, self.rtol, self.atol, budget
        )
        self.n_acc += na
        self.n_rej += nr
        self.h_min = min(self.h_min, hmin)
        self.h = h
        if status == kernels.STATUS_UNDERFLOW:
            raise StiffnessError(t, h)
        if status == kernels.STATUS_BUDGET:
            raise NonConvergedError(f"step budget of {self.max_steps} exhausted at t={t:.6g}")
        if status != kernels.STATUS_OK:
            raise RunawayError(t, float("inf"))
        return np.asarray(y)


def _state_vec(rho0, L):
    if not isinstance(rho0, DensityMatrix):
        raise InvalidStateError("initial state must be a DensityMatrix")
    if rho0.space != L.space:
        raise CompositionError(f"state on {rho0.space}, generator on {L.space}")
    rho0.validate(pos_tol=1e-8)
    return vectorize(rho0.data)


def evolve(
    L: HarmonicLiouvillian,
    rho0: DensityMatrix,
    t_span,
    observables: Mapping[str, OperatorMatrix] | None = None,
    *,
    n_out: int = 101,
    t_eval=None,
    rtol: float = 1e-8,
    atol: float = 1e-12,
    max_steps: int = 10_000_000,
    trace_tol: float = 1e-8,
) -> EvolutionReport:
    """Integrate d vec(rho)/dt = L(t) vec(rho) and sample observables."""
    t0, t1 = map(float, t_span)
    if not t1 > t0:
        raise ValidationError(f"t_span must be increasing, got {t_span}")
    times = np.linspace(t0, t1, n_out) if t_eval is None else np.asarray(t_eval, float)
    if times[0] != t0 or np.any(np.diff(times) <= 0):
        raise ValidationError("output grid must start at t0 and increase")
    d = L.space.dim
    y = _state_vec(rho0, L)
    rows = _obs_rows(observables, L.space)
    series = {k: np.zeros(len(times), complex) for k in rows}
    stepper = _Stepper(L, rtol, atol, max_steps)
    drift = 0.0
    for i, t in enumerate(times):
        if i:
            y = _hermitize_vec(stepper.advance(y, times[i - 1], t), d)
        drift = max(drift, abs(y[:: d + 1].sum() - 1))
        for k, row in rows.items():
            series[k][i] = row @ y
    if drift > trace_tol:
        raise NonConvergedError(f"trace drift {drift:.2e} exceeds {trace_tol:.0e}", residual=drift)
    final = DensityMatrix(devectorize(y), L.space, check=False)
    return EvolutionReport(
        times, series, final, stepper.n_acc, stepper.n_rej, stepper.h_min, drift,
        settings={"rtol": rtol, "atol": atol},
    )


def _trace_row(d):
    row = np.zeros(d * d, complex)
    row[:: d + 1] = 1.0
    return row


def steady_state(
    L,
    *,
    method: str = "auto",
    residual_tol: float = 1e-8,
    degeneracy_tol: float = 1e-10,
    check_unique: bool = True,
    dense_max: int = 900,
) -> DensityMatrix:
    """Null vector of a static generator, normalised to unit trace.

    ``method``: 'dense' (LAPACK solve), 'direct' (sparse LU), 'arnoldi'
    (shift-invert eigenpair) or 'auto' (dense for small superspaces, sparse LU
    otherwise, Arnoldi if the LU fails).
    """
    if not isinstance(L, HarmonicLiouvillian):
        raise ValidationError("steady_state expects a HarmonicLiouvillian")
    if not L.is_static():
        raise ValidationError("steady_state needs a time-independent generator")
    L0 = L.L0.tocsr()
    d = L.space.dim
    n = d * d
    if method == "auto":
        method = "dense" if n <= dense_max else "direct"
    if method not in ("dense", "direct", "arnoldi"):
        raise ValidationError(f"unknown steady-state method {method!r}")

    rhs = np.zeros(n, complex)
    rhs[0] = 1.0
    v = None
    if method == "dense":
        A = L0.toarray()
        A[0, :] = _trace_row(d)
        try:
            v = np.linalg.solve(A, rhs)
        except np.linalg.LinAlgError:
            if check_unique:
                _check_unique(L0, d, degeneracy_tol)
            raise NonConvergedError("trace-constrained steady-state system is singular", residual=math.inf) from None
    elif method == "direct":
        A = sp.vstack([sp.csr_matrix(_trace_row(d)), L0[1:]]).tocsc()
        with warnings.catch_warnings():
            warnings.simplefilter("error", spla.MatrixRankWarning)
            try:
                v = spla.spsolve(A, rhs)
            except (spla.MatrixRankWarning, RuntimeError):
                method = "arnoldi"
        if v is not None and not np.all(np.isfinite(v)):
            method, v = "arnoldi", None
    if method == "arnoldi":
        vals, vecs = spla.eigs(L0.tocsc(), k=1, sigma=-1e-9, which="LM")
        v = vecs[:, 0]
        v = v / v[:: d + 1].sum()

    norm_L = spla.norm(L0)
    res = np.linalg.norm(L0 @ v)
    if res > residual_tol * norm_L:
        raise NonConvergedError(f"steady-state residual {res:.2e} above {residual_tol:.0e}*|L|_F", residual=res)

    if check_unique:
        _check_unique(L0, d, degeneracy_tol)

    rho = devectorize(v)
    rho = (rho + rho.conj().T) / 2
    rho /= np.trace(rho).real
    return DensityMatrix(rho, L.space, check=False)


def liouvillian_gap(L, k: int = 2):
    """Eigenvalues of the static generator closest to zero, sorted by modulus."""
    L0 = L.L0 if isinstance(L, HarmonicLiouvillian) else L
    n = L0.shape[0]
    if n <= 900:
        vals = np.linalg.eigvals(L0.toarray())
    else:
        vals = spla.eigs(L0.tocsc(), k=k, sigma=-1e-9, which="LM", return_eigenvectors=False)
    return vals[np.argsort(np.abs(vals))][:k]


def _check_unique(L0, d, tol):
    vals = liouvillian_gap(L0, k=2)
    if len(vals) > 1 and abs(vals[1]) < tol:
        raise AmbiguousSteadyStateError(vals)


def asymptotic_periodic_state(
    L: HarmonicLiouvillian,
    rho0: DensityMatrix,
    observables: Mapping[str, OperatorMatrix],
    *,
    samples: int = 64,
    rel_tol: float = 1e-6,
    abs_floor: float = 1e-10,
    max_periods: int = 10_000,
    min_periods: int = 2,
    rtol: float = 1e-8,
    atol: float = 1e-12,
    max_steps: int = 100_000_000,
    progress: Callable | None = None,
):
    """Integrate period by period until stroboscopic convergence, then record one period.

    Convergence: the largest relative change of any observable between
    successive stroboscopic samples t = kT is below ``rel_tol`` (with
    ``abs_floor`` guarding observables that vanish).
    Returns (states over the recorded period, EvolutionReport of that period).
    """
    if not L.omega > 0:
        raise ValidationError("asymptotic_periodic_state needs a positive base frequency")
    if not observables:
        raise ValidationError("at least one observable is needed to judge convergence")
    T = 2 * np.pi / L.omega
    d = L.space.dim
    y = _state_vec(rho0, L)
    rows = _obs_rows(observables, L.space)
    stepper = _Stepper(L, rtol, atol, max_steps)

    def measure(vec):
        return np.array([row @ vec for row in rows.values()])

    prev = measure(y)
    t = 0.0
    drift = math.inf
    periods = 0
    while periods < max_periods:
        y = _hermitize_vec(stepper.advance(y, t, t + T), d)
        t += T
        periods += 1
        cur = measure(y)
        drift = float(np.max(np.abs(cur - prev) / np.maximum(np.abs(cur), abs_floor)))
        prev = cur
        if progress is not None:
            progress(periods, drift)
        if periods >= min_periods and drift < rel_tol:
            break
    else:
        raise ConvergenceTimeoutError(periods, drift)

    times = t + np.linspace(0.0, T, samples + 1)
    series = {k: np.zeros(len(times), complex) for k in rows}
    states = []
    trace_drift = 0.0
    for i, ti in enumerate(times):
        if i:
            y = _hermitize_vec(stepper.advance(y, times[i - 1], ti), d)
        trace_drift = max(trace_drift, abs(y[:: d + 1].sum() - 1))
        for k, row in rows.items():
            series[k][i] = row @ y
        states.append(DensityMatrix(devectorize(y), L.space, check=False))
    if trace_drift > 1e-8:
        raise NonConvergedError(f"trace drift {trace_drift:.2e} exceeds 1e-08", residual=trace_drift)
    report = EvolutionReport(
        times, series, states[-1], stepper.n_acc, stepper.n_rej, stepper.h_min, trace_drift,
        converged=True, periods=periods, drift=drift,
        settings={"rtol": rtol, "atol": atol, "stroboscopic_rel_tol": rel_tol,
                  "abs_floor": abs_floor, "max_periods": max_periods, "samples": samples},
    )
    return states, report


def adapt_truncation(
    builder: Callable[[int], float],
    start: int,
    step: int,
    max_N: int,
    rel_tol: float = 1e-3,
    abs_tol: float = 1e-10,
):
    """Grow N until the observable returned by ``builder(N)`` is stable to ``rel_tol``.

    Returns (N*, value, history) where N* is the smallest truncation whose
    value agrees with the next rung of the ladder.
    """
    if start < 2 or step < 1:
        raise ValidationError("truncation ladder needs start >= 2 and step >= 1")
    history = []
    N = start
    prev = None
    while N <= max_N:
        val = float(builder(N))
        history.append((N, val))
        if prev is not None:
            pN, pv = prev
            if abs(val - pv) <= max(rel_tol * abs(val), abs_tol):
                return pN, pv, history
        prev = (N, val)
        N += step
    raise BudgetExhaustedError(history)


__all__ = [
    "DissipatorSpec", "HarmonicLiouvillian", "EvolutionReport", "build_liouvillian", "evolve",
    "steady_state", "asymptotic_periodic_state", "adapt_truncation", "commutator_superop",
    "lindblad_superop", "quadrature_superop", "liouvillian_gap",
]

"""Pure-Python fallback for the compiled kernels (same signatures, same status codes).

Time stepping is delegated to scipy's RK45, which is the same Dormand-Prince
5(4) pair with the same error norm as the compiled loop, so results agree to
integration tolerance (not bitwise).
"""

from __future__ import annotations

import numpy as np
import scipy.sparse as sp
from scipy.integrate import solve_ivp
from scipy.special import gammaln

OK, UNDERFLOW, BUDGET, RUNAWAY, NONFINITE = 0, 1, 2, 3, 4


def _status_from(sol):
    if sol.status == 0:
        return OK
    msg = (sol.message or "").lower()
    if "step size" in msg:
        return UNDERFLOW
    return NONFINITE


def propagate_harmonic(indptr, indices, d0, dp, dm, omega, y0, t0, t1, h, rtol, atol, max_steps):
    n = len(y0)
    y0 = np.array(y0, dtype=complex)
    if t1 <= t0:
        return y0, h, 0, 0, h, OK, t0
    shape = (n, n)
    L0 = sp.csr_matrix((d0, indices, indptr), shape=shape)
    Lp = sp.csr_matrix((dp, indices, indptr), shape=shape)
    Lm = sp.csr_matrix((dm, indices, indptr), shape=shape)
    has_harmonics = bool(np.any(dp) or np.any(dm))
    nfev = [0]

    def rhs(t, y):
        nfev[0] += 1
        if nfev[0] > 7 * max_steps:
            raise _Budget(t)
        out = L0 @ y
        if has_harmonics:
            c = np.exp(1j * omega * t)
            out += c * (Lp @ y) + np.conj(c) * (Lm @ y)
        return out

    kwargs = {"rtol": rtol, "atol": atol}
    if h > 0:
        kwargs["first_step"] = min(h, t1 - t0)
    try:
        sol = solve_ivp(rhs, (t0, t1), y0, method="RK45", **kwargs)
    except _Budget as exc:
        return y0, h, 0, 0, h, BUDGET, exc.t
    if sol.status != 0:
        return sol.y[:, -1], h, 0, 0, h, _status_from(sol), float(sol.t[-1])
    steps = np.diff(sol.t)
    h_min = float(steps.min()) if steps.size else h
    h_next = float(steps[-2]) if steps.size > 1 else float(steps[-1])
    return sol.y[:, -1], h_next, len(steps), 0, h_min, OK, float(sol.t[-1])


class _Budget(Exception):
    def __init__(self, t):
        self.t = t


def om_rhs(params, t, y):
    Om, ge, gq, dq, g, E0, E1, wq, phi = params
    x, p, ar, ai = y
    n_opt = ar * ar + ai * ai
    ph = phi - wq * t
    det = dq + g * x * x
    return np.array([
        Om * p,
        -2.0 * ge * p - (Om - 4.0 * g * n_opt) * x,
        E0 + E1 * np.cos(ph) - gq * ar - det * ai,
        E1 * np.sin(ph) - gq * ai + det * ar,
    ])


def om_classical_trajectory(params, y0, t_out, rtol, atol, max_steps, runaway):
    params = [float(v) for v in params]
    t_out = np.asarray(t_out, float)
    if not np.sqrt(np.dot(y0, y0)) <= runaway:
        # the event below only sees crossings, not a start beyond the bound
        return np.array([y0], float), 0, 0, RUNAWAY, t_out[0]
    if len(t_out) == 1:
        return np.array([y0], float), 0, 0, OK, t_out[0]

    def blowup(t, y):
        return runaway - np.sqrt(np.dot(y, y))

    blowup.terminal = True
    sol = solve_ivp(lambda t, y: om_rhs(params, t, y), (t_out[0], t_out[-1]), np.asarray(y0, float),
                    method="RK45", t_eval=t_out, rtol=rtol, atol=atol, events=blowup)
    Y = sol.y.T
    n_steps = sol.nfev // 6
    if sol.status == 1:
        return Y, n_steps, 0, RUNAWAY, float(sol.t_events[0][0])
    if sol.status != 0:
        return Y, n_steps, 0, _status_from(sol), float(sol.t[-1]) if len(sol.t) else t_out[0]
    if n_steps > max_steps:
        return Y, n_steps, 0, BUDGET, float(t_out[-1])
    return Y, n_steps, 0, OK, float(t_out[-1])


def wigner_grid(rho, xs, ps):
    rho = np.asarray(rho, complex)
    N = rho.shape[0]
    X, P = np.meshgrid(np.asarray(xs, float), np.asarray(ps, float), indexing="ij")
    u = X * X + P * P
    r = np.sqrt(u)
    phi = np.arctan2(P, X)
    with np.errstate(divide="ignore"):
        lr = np.where(r > 0, np.log(np.where(r > 0, r, 1.0)), 0.0)
    acc = np.zeros(X.shape, complex)
    for k in range(N):
        if k == 0:
            f0 = np.exp(-0.5 * u)
        else:
            f0 = np.where(r > 0, np.exp(k * lr - 0.5 * u - 0.5 * gammaln(k + 1.0)), 0.0)
        ph = np.exp(-1j * k * phi)
        f_prev, f_cur = None, f0
        sign = 1.0
        for n in range(N - k):
            if n == 1:
                f_prev, f_cur = f_cur, f0 * (1.0 + k - u) / np.sqrt(k + 1.0)
            elif n >= 2:
                f_prev, f_cur = f_cur, (
                    (2.0 * n - 1 + k - u) * f_cur - np.sqrt((n - 1.0) * (n - 1.0 + k)) * f_prev
                ) / np.sqrt(n * (n + k + 0.0))
            if not np.all(np.isfinite(f_cur)):
                bad = np.argwhere(~np.isfinite(f_cur))[0]
                return (acc.real, acc.imag, NONFINITE, n + k, n, float(r[tuple(bad)]))
            w = sign * f_cur / np.pi * ph
            if k == 0:
                acc += rho[n, n] * w
            else:
                acc += rho[n + k, n] * w + rho[n, n + k] * np.conj(w)
            sign = -sign
    return acc.real, acc.imag, OK, 0, 0, 0.0

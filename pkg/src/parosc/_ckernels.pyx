# cython: boundscheck=False, wraparound=False, cdivision=True, initializedcheck=False
"""Compiled hot loops.

* ``propagate_harmonic``: Dormand-Prince 5(4) for dy/dt = L(t) y with
  L(t) = L0 + e^{i w t} L1 + e^{-i w t} L-1 stored on one fused CSR pattern.
* ``om_classical_trajectory``: the same integrator for the real 4-d classical
  optomechanical system (x, p, Re a, Im a).
* ``wigner_grid``: single-mode Wigner function from Fock components using a
  normalised Laguerre recurrence.

Status codes returned to Python: 0 ok, 1 step underflow, 2 step budget
exhausted, 3 runaway, 4 non-finite value.
"""

import numpy as np
cimport numpy as cnp
from libc.math cimport sqrt, exp, log, fabs, cos, sin, lgamma, atan2, isfinite, M_PI

cnp.import_array()

cdef double C2 = 1.0 / 5, C3 = 3.0 / 10, C4 = 4.0 / 5, C5 = 8.0 / 9
cdef double A21 = 1.0 / 5
cdef double A31 = 3.0 / 40, A32 = 9.0 / 40
cdef double A41 = 44.0 / 45, A42 = -56.0 / 15, A43 = 32.0 / 9
cdef double A51 = 19372.0 / 6561, A52 = -25360.0 / 2187, A53 = 64448.0 / 6561, A54 = -212.0 / 729
cdef double A61 = 9017.0 / 3168, A62 = -355.0 / 33, A63 = 46732.0 / 5247, A64 = 49.0 / 176
cdef double A65 = -5103.0 / 18656
cdef double B1 = 35.0 / 384, B3 = 500.0 / 1113, B4 = 125.0 / 192, B5 = -2187.0 / 6784, B6 = 11.0 / 84
cdef double E1 = 71.0 / 57600, E3 = -71.0 / 16695, E4 = 71.0 / 1920, E5 = -17253.0 / 339200
cdef double E6 = 22.0 / 525, E7 = -1.0 / 40

cdef double SAFETY = 0.9, MIN_FACTOR = 0.2, MAX_FACTOR = 10.0
cdef double EPS = 2.220446049250313e-16


cdef inline void _fused_matvec(int n, const int[::1] indptr, const int[::1] indices,
                               const double complex[::1] d0, const double complex[::1] dp,
                               const double complex[::1] dm, double complex cp,
                               double complex cm, bint static, const double complex[::1] y,
                               double complex[::1] out) noexcept nogil:
    cdef int i, j
    cdef double complex acc
    for i in range(n):
        acc = 0
        if static:
            for j in range(indptr[i], indptr[i + 1]):
                acc = acc + d0[j] * y[indices[j]]
        else:
            for j in range(indptr[i], indptr[i + 1]):
                acc = acc + (d0[j] + cp * dp[j] + cm * dm[j]) * y[indices[j]]
        out[i] = acc


cdef inline void _rhs_harmonic(int n, const int[::1] indptr, const int[::1] indices,
                               const double complex[::1] d0, const double complex[::1] dp,
                               const double complex[::1] dm, double w, double t, bint static,
                               const double complex[::1] y, double complex[::1] out) noexcept nogil:
    cdef double complex cp = cos(w * t) + 1j * sin(w * t)
    cdef double complex cm = cos(w * t) - 1j * sin(w * t)
    _fused_matvec(n, indptr, indices, d0, dp, dm, cp, cm, static, y, out)


def propagate_harmonic(int[::1] indptr, int[::1] indices,
                       double complex[::1] d0, double complex[::1] dp, double complex[::1] dm,
                       double omega, double complex[::1] y0, double t0, double t1, double h,
                       double rtol, double atol, long max_steps):
    """Advance y from t0 to t1. Returns (y, h_next, n_accepted, n_rejected, h_min, status, t)."""
    cdef int n = y0.shape[0]
    cdef int i
    cdef long n_acc = 0, n_rej = 0
    cdef double t = t0, err, sc, ay, an, factor, h_min = 1e300
    cdef int status = 0
    cdef bint rejected = False, clipped = False
    cdef double h_save = 0.0
    y_arr = np.array(y0, dtype=np.complex128)
    cdef double complex[::1] y = y_arr
    cdef double complex[:, ::1] k = np.zeros((7, n), dtype=np.complex128)
    cdef double complex[::1] tmp = np.zeros(n, dtype=np.complex128)
    cdef double complex[::1] ynew = np.zeros(n, dtype=np.complex128)
    cdef double complex e

    cdef bint static = True
    for i in range(d0.shape[0]):
        if dp[i] != 0 or dm[i] != 0:
            static = False
            break

    if t1 <= t0:
        return y_arr, h, 0, 0, h, 0, t
    if h <= 0:
        h = (t1 - t0) * 1e-3

    with nogil:
        _rhs_harmonic(n, indptr, indices, d0, dp, dm, omega, t, static, y, k[0])
        while t < t1:
            if n_acc + n_rej >= max_steps:
                status = 2
                break
            if h < 10 * EPS * fabs(t) or h < 1e-300:
                status = 1
                break
            clipped = False
            if t + h > t1:
                h_save = h
                h = t1 - t
                clipped = True
            for i in range(n):
                tmp[i] = y[i] + h * A21 * k[0, i]
            _rhs_harmonic(n, indptr, indices, d0, dp, dm, omega, t + C2 * h, static, tmp, k[1])
            for i in range(n):
                tmp[i] = y[i] + h * (A31 * k[0, i] + A32 * k[1, i])
            _rhs_harmonic(n, indptr, indices, d0, dp, dm, omega, t + C3 * h, static, tmp, k[2])
            for i in range(n):
                tmp[i] = y[i] + h * (A41 * k[0, i] + A42 * k[1, i] + A43 * k[2, i])
            _rhs_harmonic(n, indptr, indices, d0, dp, dm, omega, t + C4 * h, static, tmp, k[3])
            for i in range(n):
                tmp[i] = y[i] + h * (A51 * k[0, i] + A52 * k[1, i] + A53 * k[2, i] + A54 * k[3, i])
            _rhs_harmonic(n, indptr, indices, d0, dp, dm, omega, t + C5 * h, static, tmp, k[4])
            for i in range(n):
                tmp[i] = y[i] + h * (A61 * k[0, i] + A62 * k[1, i] + A63 * k[2, i]
                                     + A64 * k[3, i] + A65 * k[4, i])
            _rhs_harmonic(n, indptr, indices, d0, dp, dm, omega, t + h, static, tmp, k[5])
            for i in range(n):
                ynew[i] = y[i] + h * (B1 * k[0, i] + B3 * k[2, i] + B4 * k[3, i]
                                      + B5 * k[4, i] + B6 * k[5, i])
            _rhs_harmonic(n, indptr, indices, d0, dp, dm, omega, t + h, static, ynew, k[6])
            err = 0.0
            for i in range(n):
                e = h * (E1 * k[0, i] + E3 * k[2, i] + E4 * k[3, i] + E5 * k[4, i]
                         + E6 * k[5, i] + E7 * k[6, i])
                ay = sqrt(y[i].real * y[i].real + y[i].imag * y[i].imag)
                an = sqrt(ynew[i].real * ynew[i].real + ynew[i].imag * ynew[i].imag)
                sc = atol + rtol * (ay if ay > an else an)
                err += (e.real * e.real + e.imag * e.imag) / (sc * sc)
            err = sqrt(err / n)
            if not isfinite(err):
                status = 4
                break
            if err <= 1.0:
                t = t + h
                for i in range(n):
                    y[i] = ynew[i]
                    k[0, i] = k[6, i]
                n_acc += 1
                if h < h_min:
                    h_min = h
                if err == 0.0:
                    factor = MAX_FACTOR
                else:
                    factor = SAFETY * err ** -0.2
                    if factor > MAX_FACTOR:
                        factor = MAX_FACTOR
                if rejected and factor > 1.0:
                    factor = 1.0
                rejected = False
                if clipped and t >= t1:
                    h = h_save  # hand the unclipped step to the next call
                else:
                    h = h * factor
            else:
                n_rej += 1
                factor = SAFETY * err ** -0.2
                if factor < MIN_FACTOR:
                    factor = MIN_FACTOR
                h = h * factor
                rejected = True
    return y_arr, h, n_acc, n_rej, h_min, status, t


cdef inline void _om_rhs(const double* par, double t, const double* y, double* out) noexcept nogil:
    # par: Omega, gamma_eff, gamma_q, delta_q, g_q, E0, E1, omega_q, phi
    cdef double x = y[0], p = y[1], ar = y[2], ai = y[3]
    cdef double n_opt = ar * ar + ai * ai
    cdef double ph = par[8] - par[7] * t
    cdef double det = par[3] + par[4] * x * x
    out[0] = par[0] * p
    out[1] = -2.0 * par[1] * p - (par[0] - 4.0 * par[4] * n_opt) * x
    out[2] = par[5] + par[6] * cos(ph) - par[2] * ar - det * ai
    out[3] = par[6] * sin(ph) - par[2] * ai + det * ar


def om_classical_trajectory(double[::1] params, double[::1] y0, double[::1] t_out,
                            double rtol, double atol, long max_steps, double runaway):
    """Integrate the classical optomechanical equations and sample at t_out.

    Returns (Y[len(t_out), 4], n_accepted, n_rejected, status, t_reached).
    """
    cdef int n_out = t_out.shape[0]
    cdef int i, j, s, idx = 0
    cdef long n_acc = 0, n_rej = 0
    cdef int status = 0
    cdef double t = t_out[0], h, err, sc, ay, an, factor, e, nrm, target
    cdef bint rejected = False, clipped = False
    cdef double h_save = 0.0
    cdef double y[4]
    cdef double tmp[4]
    cdef double ynew[4]
    cdef double k[7][4]
    cdef double par[9]
    out_arr = np.zeros((n_out, 4))
    cdef double[:, ::1] out = out_arr

    for i in range(9):
        par[i] = params[i]
    for i in range(4):
        y[i] = y0[i]
        out[0, i] = y[i]
    idx = 1
    if n_out == 1:
        return out_arr, 0, 0, 0, t

    with nogil:
        _om_rhs(par, t, y, k[0])
        # initial step from the local time scale
        nrm = 0.0
        for i in range(4):
            sc = atol + rtol * fabs(y[i])
            nrm += (k[0][i] / sc) ** 2
        nrm = sqrt(nrm / 4)
        h = 0.01 / nrm if nrm > 1e-300 else (t_out[n_out - 1] - t) * 1e-6
        while idx < n_out:
            target = t_out[idx]
            if n_acc + n_rej >= max_steps:
                status = 2
                break
            if h < 10 * EPS * fabs(t) or h < 1e-300:
                status = 1
                break
            clipped = False
            if t + h >= target:
                h_save = h
                h = target - t
                clipped = True
            for i in range(4):
                tmp[i] = y[i] + h * A21 * k[0][i]
            _om_rhs(par, t + C2 * h, tmp, k[1])
            for i in range(4):
                tmp[i] = y[i] + h * (A31 * k[0][i] + A32 * k[1][i])
            _om_rhs(par, t + C3 * h, tmp, k[2])
            for i in range(4):
                tmp[i] = y[i] + h * (A41 * k[0][i] + A42 * k[1][i] + A43 * k[2][i])
            _om_rhs(par, t + C4 * h, tmp, k[3])
            for i in range(4):
                tmp[i] = y[i] + h * (A51 * k[0][i] + A52 * k[1][i] + A53 * k[2][i] + A54 * k[3][i])
            _om_rhs(par, t + C5 * h, tmp, k[4])
            for i in range(4):
                tmp[i] = y[i] + h * (A61 * k[0][i] + A62 * k[1][i] + A63 * k[2][i]
                                     + A64 * k[3][i] + A65 * k[4][i])
            _om_rhs(par, t + h, tmp, k[5])
            for i in range(4):
                ynew[i] = y[i] + h * (B1 * k[0][i] + B3 * k[2][i] + B4 * k[3][i]
                                      + B5 * k[4][i] + B6 * k[5][i])
            _om_rhs(par, t + h, ynew, k[6])
            err = 0.0
            for i in range(4):
                e = h * (E1 * k[0][i] + E3 * k[2][i] + E4 * k[3][i] + E5 * k[4][i]
                         + E6 * k[5][i] + E7 * k[6][i])
                ay = fabs(y[i])
                an = fabs(ynew[i])
                sc = atol + rtol * (ay if ay > an else an)
                err += (e / sc) ** 2
            err = sqrt(err / 4)
            if not isfinite(err):
                status = 4
                break
            if err <= 1.0:
                t = t + h
                nrm = 0.0
                for i in range(4):
                    y[i] = ynew[i]
                    k[0][i] = k[6][i]
                    nrm += y[i] * y[i]
                n_acc += 1
                if sqrt(nrm) > runaway:
                    status = 3
                    break
                factor = MAX_FACTOR if err == 0.0 else SAFETY * err ** -0.2
                if factor > MAX_FACTOR:
                    factor = MAX_FACTOR
                if rejected and factor > 1.0:
                    factor = 1.0
                rejected = False
                if t >= target:
                    t = target
                    for i in range(4):
                        out[idx, i] = y[i]
                    idx += 1
                h = h_save if clipped else h * factor
            else:
                n_rej += 1
                factor = SAFETY * err ** -0.2
                if factor < MIN_FACTOR:
                    factor = MIN_FACTOR
                h = h * factor
                rejected = True
    return out_arr[:idx], n_acc, n_rej, status, t


def wigner_grid(double complex[:, ::1] rho, double[::1] xs, double[::1] ps):
    """W[ix, ip] for a single-mode density matrix.

    Returns (W_real, W_imag, status, m, n, r); status 4 flags a non-finite
    basis function at Fock indices (m, n) and radius r.
    """
    cdef int N = rho.shape[0]
    cdef int nx = xs.shape[0], npp = ps.shape[0]
    cdef int ix, ip, kk, n, m
    cdef double x, p, u, r, phi, f0, f1, f2, sign, lr
    cdef double complex ph, acc
    cdef int status = 0, bad_m = 0, bad_n = 0
    cdef double bad_r = 0.0
    re_arr = np.zeros((nx, npp))
    im_arr = np.zeros((nx, npp))
    # recurrence coefficients, indexed [k, n]
    nn = np.arange(N, dtype=float)[None, :]
    kk_ = np.arange(N, dtype=float)[:, None]
    with np.errstate(divide="ignore"):
        inv_arr = np.where(nn > 0, 1.0 / np.sqrt(nn * (nn + kk_)), 0.0)
    back_arr = np.sqrt(np.maximum(nn - 1, 0) * (nn - 1 + kk_))
    lgk_arr = np.array([0.5 * lgamma(k + 1.0) for k in range(N)])
    cdef double[:, ::1] inv = np.ascontiguousarray(inv_arr)
    cdef double[:, ::1] back = np.ascontiguousarray(back_arr)
    cdef double[::1] lgk = lgk_arr
    cdef double[:, ::1] wre = re_arr
    cdef double[:, ::1] wim = im_arr

    with nogil:
        for ix in range(nx):
            x = xs[ix]
            for ip in range(npp):
                p = ps[ip]
                u = x * x + p * p
                r = sqrt(u)
                phi = atan2(p, x)
                lr = log(r) if r > 0 else 0.0
                acc = 0
                for kk in range(N):
                    # f_n = sqrt(n!/(n+k)!) r^k L_n^k(u) e^{-u/2}
                    if r > 0:
                        f0 = exp(kk * lr - 0.5 * u - lgk[kk])
                    else:
                        f0 = 1.0 if kk == 0 else 0.0
                    ph = cos(kk * phi) - 1j * sin(kk * phi)
                    f1 = 0.0
                    f2 = 0.0
                    sign = 1.0
                    for n in range(N - kk):
                        m = n + kk
                        if n == 0:
                            f2 = f0
                        elif n == 1:
                            f1 = f2
                            f2 = f0 * (1.0 + kk - u) / sqrt(kk + 1.0)
                        else:
                            f0 = f1
                            f1 = f2
                            f2 = ((2.0 * n - 1 + kk - u) * f1 - back[kk, n] * f0) * inv[kk, n]
                        if not isfinite(f2):
                            status = 4
                            bad_m = m
                            bad_n = n
                            bad_r = r
                            break
                        if kk == 0:
                            acc = acc + sign * f2 * rho[n, n]
                        else:
                            acc = acc + sign * f2 * (rho[m, n] * ph + rho[n, m] * ph.conjugate())
                        sign = -sign
                    if status != 0:
                        break
                wre[ix, ip] = acc.real / M_PI
                wim[ix, ip] = acc.imag / M_PI
                if status != 0:
                    break
            if status != 0:
                break
    return re_arr, im_arr, status, bad_m, bad_n, bad_r

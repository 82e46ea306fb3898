#!/usr/bin/env python3
"""Compiled vs pure-Python kernels: wall time and agreement.

    python3 benchmarks/bench_kernels.py [--repeat 3]
"""

import argparse
import time

import numpy as np

from parosc import kernels
from parosc.dpo import DpoParams, build_dpo_liouvillian, dpo_steady_state
from parosc.fock import fock_state, vectorize
from parosc.optomech import _kernel_params, alpha_q, benchmark_params, harris15_params, n1_for_sigma


def timed(fn, repeat):
    best, out = np.inf, None
    for _ in range(repeat):
        t0 = time.perf_counter()
        out = fn()
        best = min(best, time.perf_counter() - t0)
    return best, out


def case_propagate():
    L = build_dpo_liouvillian(DpoParams(0.9, 0.1), 30)
    indptr, indices, d0, dp, dm = L.fused
    y0 = vectorize(fock_state(0, L.space))

    def run(impl):
        return lambda: impl.propagate_harmonic(indptr, indices, d0, dp, dm, 0.0, y0, 0.0, 20.0, 1e-3,
                                               1e-8, 1e-12, 10_000_000)[0]
    return "DPO N=30 propagate to t=20", run


def case_propagate_periodic():
    from parosc.optomech import build_om_liouvillian, initial_state

    p = benchmark_params(0.8)
    L = build_om_liouvillian(p, 12, 3)
    indptr, indices, d0, dp, dm = L.fused
    y0 = vectorize(initial_state("vacuum", 12, 3))
    T = 2 * np.pi / L.omega

    def run(impl):
        return lambda: impl.propagate_harmonic(indptr, indices, d0, dp, dm, L.omega, y0, 0.0, 20 * T, 1e-3,
                                               1e-8, 1e-12, 10_000_000)[0]
    return "full OM 12x3, 20 drive periods", run


def case_om_classical():
    h = harris15_params()
    p = h.with_photon_numbers(n1=n1_for_sigma(h, 1.5))
    y0 = np.array([2 * np.sqrt(7.9e9), 0.0, alpha_q(0.0, p).real, alpha_q(0.0, p).imag])
    t_out = np.linspace(0.0, 2000.0, 200)

    def run(impl):
        return lambda: impl.om_classical_trajectory(_kernel_params(p), y0, t_out, 1e-8, 1e-12, 50_000_000, 1e12)[0]
    return "classical OM, Harris15 sigma=1.5, 2000/gamma_q", run


def case_wigner():
    rho = dpo_steady_state(DpoParams(2.0, 0.4), 60).data
    xs = np.linspace(-12, 12, 201)

    def run(impl):
        return lambda: impl.wigner_grid(np.ascontiguousarray(rho), xs, xs)[0]
    return "Wigner N=60 on 201x201", run


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--repeat", type=int, default=3)
    args = ap.parse_args()
    try:
        compiled = kernels.get_backend("compiled")
    except ImportError:
        print("compiled kernels not built; only the fallback is available")
        return
    python = kernels.get_backend("python")
    print(f"{'case':<48s} {'compiled [s]':>12s} {'python [s]':>11s} {'speedup':>8s} {'max rel diff':>13s}")
    for make in (case_propagate, case_propagate_periodic, case_om_classical, case_wigner):
        name, run = make()
        tc, yc = timed(run(compiled), args.repeat)
        tp, yp = timed(run(python), max(1, args.repeat // 3))
        diff = np.max(np.abs(np.asarray(yc) - np.asarray(yp))) / max(np.max(np.abs(yc)), 1e-300)
        print(f"{name:<48s} {tc:12.4f} {tp:11.4f} {tp / tc:8.1f} {diff:13.2e}")


if __name__ == "__main__":
    main()

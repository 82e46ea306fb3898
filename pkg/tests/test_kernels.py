import os
import subprocess
import sys

import numpy as np
import pytest

from parosc import kernels
from parosc.dpo import DpoParams, build_dpo_liouvillian, dpo_steady_state
from parosc.fock import fock_state, vectorize
from parosc.optomech import _kernel_params, alpha_q, benchmark_params, build_om_liouvillian, initial_state

try:
    compiled = kernels.get_backend("compiled")
except ImportError:  # pragma: no cover - build without the extension
    compiled = None

python = kernels.get_backend("python")
needs_ext = pytest.mark.skipif(compiled is None, reason="compiled kernels not built")


@needs_ext
def test_compiled_backend_is_default():
    assert kernels.BACKEND == "compiled"


def test_unknown_backend():
    with pytest.raises(ValueError):
        kernels.get_backend("fortran")


@pytest.mark.parametrize("value,expected", [("python", "python"), ("", None)])
def test_backend_env_switch(value, expected):
    env = dict(os.environ, PAROSC_BACKEND=value)
    out = subprocess.run([sys.executable, "-c", "from parosc import kernels; print(kernels.BACKEND)"],
                         env=env, capture_output=True, text=True, check=True).stdout.strip()
    assert out == (expected or ("compiled" if compiled else "python"))


@needs_ext
@pytest.mark.parametrize("static", [True, False])
def test_propagation_agrees(static):
    if static:
        L = build_dpo_liouvillian(DpoParams(0.9, 0.1), 12)
        y0 = vectorize(fock_state(0, L.space))
        t1 = 5.0
    else:
        L = build_om_liouvillian(benchmark_params(0.5), 6, 2)
        y0 = vectorize(initial_state("vacuum", 6, 2))
        t1 = 3 * 2 * np.pi / L.omega
    args = (*L.fused, L.omega, y0, 0.0, t1, 1e-3, 1e-10, 1e-13, 10_000_000)
    yc, yp = compiled.propagate_harmonic(*args)[0], python.propagate_harmonic(*args)[0]
    assert np.max(np.abs(yc - yp)) < 1e-8 * np.max(np.abs(yc))


@needs_ext
def test_classical_trajectory_agrees():
    p = benchmark_params(1.5)
    y0 = np.array([1.0, 0.0, alpha_q(0.0, p).real, alpha_q(0.0, p).imag])
    t = np.linspace(0, 200, 50)
    args = (_kernel_params(p), y0, t, 1e-10, 1e-13, 10_000_000, 1e12)
    Yc, Yp = compiled.om_classical_trajectory(*args)[0], python.om_classical_trajectory(*args)[0]
    assert np.max(np.abs(np.asarray(Yc) - np.asarray(Yp))) < 1e-6 * np.max(np.abs(Yc))


@needs_ext
def test_classical_runaway_status_agrees():
    p = benchmark_params(1.5)
    y0 = np.array([1.0, 0.0, 0.0, 0.0])
    args = (_kernel_params(p), y0, np.linspace(0, 50, 5), 1e-8, 1e-12, 10_000_000, 1e-2)
    assert compiled.om_classical_trajectory(*args)[3] == python.om_classical_trajectory(*args)[3] \
        == kernels.STATUS_RUNAWAY


@needs_ext
def test_wigner_agrees():
    rho = np.ascontiguousarray(dpo_steady_state(DpoParams(1.5, 0.3), 40).data)
    xs = np.linspace(-9, 9, 37)
    Wc, Wp = compiled.wigner_grid(rho, xs, xs)[0], python.wigner_grid(rho, xs, xs)[0]
    assert np.max(np.abs(np.asarray(Wc) - np.asarray(Wp))) < 1e-12


@pytest.mark.parametrize("name", ["python"] + (["compiled"] if compiled else []))
def test_wigner_large_truncation_is_finite(name):
    # log-gamma prefactors and the Laguerre recurrence must survive N near 200
    N = 200
    rho = np.zeros((N, N), complex)
    rho[N - 1, N - 1] = 1.0
    W, _, status = kernels.get_backend(name).wigner_grid(rho, np.array([0.0, 5.0]), np.array([0.0]))[:3]
    assert status == 0
    assert np.asarray(W)[0, 0] == pytest.approx(-1 / np.pi, abs=1e-10)

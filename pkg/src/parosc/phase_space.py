"""Single-mode Wigner functions on (x, p) grids, marginals and lobe detection.

Quadratures follow x = a + a^dag, p = i(a^dag - a): the vacuum is
W = exp(-(x^2 + p^2)/2)/pi, whose x-marginal has unit variance and whose
total mass on the (x, p) plane is 2.  A coherent state |beta> peaks at
(2 Re beta, 2 Im beta).
"""

from __future__ import annotations

import csv
import hashlib
import io
from dataclasses import dataclass

import numpy as np

from . import kernels
from .errors import GridTooSmallError, NumericStabilityError, ValidationError
from .fock import DensityMatrix, FockSpaceSpec

#: total mass of any normalised state, fixed by integrating the vacuum analytically
WIGNER_NORMALIZATION = 2.0


@dataclass
class WignerGrid:
    x: np.ndarray
    p: np.ndarray
    W: np.ndarray  # W[ix, ip]
    imag_max: float
    source_hash: str

    def mass(self) -> float:
        return float(np.trapezoid(np.trapezoid(self.W, self.p, axis=1), self.x))

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(("x", "p", "W"))
        for i, xv in enumerate(self.x):
            for j, pv in enumerate(self.p):
                w.writerow((repr(float(xv)), repr(float(pv)), repr(float(self.W[i, j]))))
        return buf.getvalue()

    def metadata(self) -> dict:
        return {
            "x": [float(self.x[0]), float(self.x[-1]), len(self.x)],
            "p": [float(self.p[0]), float(self.p[-1]), len(self.p)],
            "mass": self.mass(),
            "normalization": WIGNER_NORMALIZATION,
            "imag_max": self.imag_max,
            "source_hash": self.source_hash,
        }


def state_hash(rho) -> str:
    arr = np.ascontiguousarray(rho.data if isinstance(rho, DensityMatrix) else rho, dtype=complex)
    return hashlib.sha256(arr.tobytes()).hexdigest()[:16]


def make_grid(extent: float, n: int):
    g = np.linspace(-extent, extent, n)
    return g, g.copy()


def wigner(rho: DensityMatrix, x, p=None, *, imag_tol=1e-10, backend=None) -> WignerGrid:
    """Evaluate W(x, p) on the tensor grid x by p."""
    if not isinstance(rho.space, FockSpaceSpec):
        raise ValidationError("wigner needs a single-mode state; take a partial trace first")
    x = np.ascontiguousarray(x, dtype=float)
    p = x.copy() if p is None else np.ascontiguousarray(p, dtype=float)
    if not (np.all(np.isfinite(x)) and np.all(np.isfinite(p))):
        raise ValidationError("grid must be finite")
    impl = kernels.get_backend(backend)
    re, im, status, m, n, r = impl.wigner_grid(np.ascontiguousarray(rho.data, dtype=complex), x, p)
    if status != 0:
        raise NumericStabilityError(m, n, r)
    imag_max = float(np.max(np.abs(im))) if im.size else 0.0
    if imag_max > imag_tol:
        raise ValidationError(f"Wigner function has imaginary part {imag_max:.2e}; state not Hermitian?")
    return WignerGrid(x, p, np.asarray(re), imag_max, state_hash(rho))


def marginal(W: WignerGrid, axis: str = "x", *, max_deficit=1e-3):
    """P(x) = int dp W(x, p) (or P(p)), renormalised to unit mass.

    Returns (coordinates, density, normalization) where normalization is the
    measured total mass before renormalisation.
    """
    if axis == "x":
        coords, dens = W.x, np.trapezoid(W.W, W.p, axis=1)
    elif axis == "p":
        coords, dens = W.p, np.trapezoid(W.W, W.x, axis=0)
    else:
        raise ValidationError(f"axis must be 'x' or 'p', got {axis!r}")
    mass = float(np.trapezoid(dens, coords))
    deficit = abs(1 - mass / WIGNER_NORMALIZATION)
    if deficit > max_deficit:
        raise GridTooSmallError(deficit)
    return coords, dens / mass, mass


def _refine_1d(c, y, i):
    if 0 < i < len(y) - 1:
        y0, y1, y2 = y[i - 1], y[i], y[i + 1]
        den = y0 - 2 * y1 + y2
        if den < 0:
            off = 0.5 * (y0 - y2) / den
            h = c[i + 1] - c[i]
            return c[i] + off * h, y1 - 0.25 * (y0 - y2) * off
    return c[i], y[i]


def detect_lobes(data, coords=None, *, rel_height=0.05):
    """Local maxima above ``rel_height`` of the global maximum, refined by quadratic fits.

    ``data`` is a WignerGrid (2-d search; locations are (x, p)) or a 1-d
    density with its ``coords``.  Returns [(location, height)] sorted by location.
    """
    if isinstance(data, WignerGrid):
        Z = data.W
        top = Z.max()
        lobes = []
        nx, npp = Z.shape
        for i in range(nx):
            for j in range(npp):
                v = Z[i, j]
                if v < rel_height * top:
                    continue
                nb = Z[max(i - 1, 0):i + 2, max(j - 1, 0):j + 2]
                if v < nb.max() or np.count_nonzero(nb == v) > 1:
                    continue
                xr, hx = _refine_1d(data.x, Z[:, j], i)
                pr, hp = _refine_1d(data.p, Z[i, :], j)
                lobes.append(((float(xr), float(pr)), float(max(hx, hp))))
        return sorted(lobes)
    y = np.asarray(data, float)
    c = np.arange(len(y), dtype=float) if coords is None else np.asarray(coords, float)
    top = y.max()
    lobes = []
    for i in range(len(y)):
        if y[i] < rel_height * top:
            continue
        left = y[i - 1] if i > 0 else -np.inf
        right = y[i + 1] if i < len(y) - 1 else -np.inf
        if y[i] > left and y[i] >= right:
            loc, h = _refine_1d(c, y, i)
            lobes.append((float(loc), float(h)))
    return sorted(lobes)

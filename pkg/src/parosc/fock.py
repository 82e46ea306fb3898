"""Operators and states on truncated Fock spaces.

Conventions fixed library-wide:

* basis ``|0>, ..., |N-1>`` in ascending order;
* two-mode spaces are ordered ``optical (x) mechanical``;
* superspace vectors stack density-matrix *columns* (column-major), so that
  ``vec(A X B) = (B^T (x) A) vec(X)``.

Operators are built exactly on the truncated space; nothing is renormalised at
the truncation edge.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Union

import numpy as np
import scipy.sparse as sp
from scipy.special import gammaln

from .errors import CompositionError, InvalidSpaceError, InvalidStateError

MECHANICAL = "mechanical"
OPTICAL = "optical"
_MODES = (MECHANICAL, OPTICAL)


@dataclass(frozen=True)
class FockSpaceSpec:
    N: int
    mode: str = MECHANICAL

    def __post_init__(self):
        if int(self.N) != self.N or self.N < 2:
            raise InvalidSpaceError(f"truncation must be an integer >= 2, got {self.N}")
        if self.mode not in _MODES:
            raise InvalidSpaceError(f"unknown mode label {self.mode!r}")

    @property
    def dim(self) -> int:
        return self.N

    def to_dict(self):
        return {"N": self.N, "mode": self.mode}


@dataclass(frozen=True)
class ProductSpace:
    optical: FockSpaceSpec
    mechanical: FockSpaceSpec

    def __post_init__(self):
        if self.optical.mode != OPTICAL or self.mechanical.mode != MECHANICAL:
            raise InvalidSpaceError("product space expects (optical, mechanical) factors")

    @property
    def dim(self) -> int:
        return self.optical.N * self.mechanical.N

    def factor(self, mode: str) -> FockSpaceSpec:
        if mode == OPTICAL:
            return self.optical
        if mode == MECHANICAL:
            return self.mechanical
        raise InvalidSpaceError(f"unknown mode label {mode!r}")

    def to_dict(self):
        return {"optical": self.optical.to_dict(), "mechanical": self.mechanical.to_dict()}


Space = Union[FockSpaceSpec, ProductSpace]


def product_space(n_opt: int, n_mech: int) -> ProductSpace:
    return ProductSpace(FockSpaceSpec(n_opt, OPTICAL), FockSpaceSpec(n_mech, MECHANICAL))


def space_from_dict(d) -> Space:
    if "optical" in d:
        return ProductSpace(FockSpaceSpec(**d["optical"]), FockSpaceSpec(**d["mechanical"]))
    return FockSpaceSpec(**d)


class OperatorMatrix:
    """Sparse complex operator tied to a space descriptor.

    Treat instances as immutable: arithmetic always returns new objects.
    """

    __slots__ = ("data", "space")

    def __init__(self, data, space: Space):
        m = sp.csr_matrix(data, dtype=complex)
        if m.shape != (space.dim, space.dim):
            raise CompositionError(
                f"matrix shape {m.shape} does not match space dimension {space.dim}"
            )
        if m.nnz and not np.all(np.isfinite(m.data)):
            raise CompositionError("operator has non-finite entries")
        m.sum_duplicates()
        m.eliminate_zeros()
        self.data = m
        self.space = space

    @property
    def dim(self) -> int:
        return self.space.dim

    def dag(self) -> "OperatorMatrix":
        return OperatorMatrix(self.data.conj().T, self.space)

    def toarray(self) -> np.ndarray:
        return self.data.toarray()

    def is_hermitian(self, tol=1e-12) -> bool:
        diff = self.data - self.data.conj().T
        return diff.nnz == 0 or float(np.max(np.abs(diff.data))) <= tol

    def _check(self, other):
        if not isinstance(other, OperatorMatrix):
            return NotImplemented
        if other.space != self.space:
            raise CompositionError(f"space mismatch: {self.space} vs {other.space}")
        return other

    def __add__(self, other):
        if self._check(other) is NotImplemented:
            return NotImplemented
        return OperatorMatrix(self.data + other.data, self.space)

    def __sub__(self, other):
        if self._check(other) is NotImplemented:
            return NotImplemented
        return OperatorMatrix(self.data - other.data, self.space)

    def __neg__(self):
        return OperatorMatrix(-self.data, self.space)

    def __mul__(self, scalar):
        if isinstance(scalar, OperatorMatrix):
            raise TypeError("use @ for operator products")
        return OperatorMatrix(self.data * complex(scalar), self.space)

    __rmul__ = __mul__

    def __truediv__(self, scalar):
        return OperatorMatrix(self.data / complex(scalar), self.space)

    def __matmul__(self, other):
        if isinstance(other, OperatorMatrix):
            self._check(other)
            return OperatorMatrix(self.data @ other.data, self.space)
        return self.data @ other

    def __pow__(self, k: int):
        out = identity(self.space)
        for _ in range(int(k)):
            out = out @ self
        return out

    def __repr__(self):
        return f"OperatorMatrix(dim={self.dim}, nnz={self.data.nnz}, space={self.space})"


def annihilation(spec: FockSpaceSpec) -> OperatorMatrix:
    if not isinstance(spec, FockSpaceSpec):
        raise InvalidSpaceError("annihilation needs a single-mode FockSpaceSpec")
    n = np.arange(1, spec.N)
    return OperatorMatrix(sp.diags(np.sqrt(n), 1, shape=(spec.N, spec.N)), spec)


def creation(spec: FockSpaceSpec) -> OperatorMatrix:
    return annihilation(spec).dag()


def number(spec: FockSpaceSpec) -> OperatorMatrix:
    return OperatorMatrix(sp.diags(np.arange(spec.N, dtype=float)), spec)


def identity(space: Space) -> OperatorMatrix:
    return OperatorMatrix(sp.identity(space.dim, format="csr"), space)


def position(spec: FockSpaceSpec) -> OperatorMatrix:
    """x = a + a^dagger (vacuum variance 1)."""
    a = annihilation(spec)
    return a + a.dag()


def momentum(spec: FockSpaceSpec) -> OperatorMatrix:
    """p = i(a^dagger - a)."""
    a = annihilation(spec)
    return 1j * (a.dag() - a)


def parity(spec: FockSpaceSpec) -> OperatorMatrix:
    return OperatorMatrix(sp.diags((-1.0) ** np.arange(spec.N)), spec)


def embed(op: OperatorMatrix, which_mode: str, product: ProductSpace) -> OperatorMatrix:
    """Lift a single-mode operator into the (optical x mechanical) product space."""
    factor = product.factor(which_mode)
    if op.space != factor:
        raise CompositionError(f"operator lives on {op.space}, not on the {which_mode} factor {factor}")
    if which_mode == OPTICAL:
        data = sp.kron(op.data, sp.identity(product.mechanical.N), format="csr")
    else:
        data = sp.kron(sp.identity(product.optical.N), op.data, format="csr")
    return OperatorMatrix(data, product)


def tensor(op_opt: OperatorMatrix, op_mech: OperatorMatrix) -> OperatorMatrix:
    product = ProductSpace(op_opt.space, op_mech.space)
    return OperatorMatrix(sp.kron(op_opt.data, op_mech.data, format="csr"), product)


class DensityMatrix:
    """Dense density matrix with its space descriptor.

    Validation (on by default) enforces Hermiticity and unit trace to
    ``tol`` and a smallest eigenvalue above ``-pos_tol`` (truncation leakage).
    """

    __slots__ = ("data", "space")

    def __init__(self, data, space: Space, *, check=True, tol=1e-10, pos_tol=1e-8):
        arr = np.array(data, dtype=complex)
        if arr.ndim != 2 or arr.shape[0] != arr.shape[1]:
            raise InvalidStateError(f"density matrix must be square, got shape {arr.shape}")
        if arr.shape[0] != space.dim:
            raise CompositionError(f"state dimension {arr.shape[0]} != space dimension {space.dim}")
        self.data = arr
        self.space = space
        if check:
            self.validate(tol=tol, pos_tol=pos_tol)

    @property
    def dim(self) -> int:
        return self.space.dim

    def validate(self, tol=1e-10, pos_tol=1e-8):
        if not np.all(np.isfinite(self.data)):
            raise InvalidStateError("density matrix has non-finite entries")
        herm = np.max(np.abs(self.data - self.data.conj().T))
        if herm > tol:
            raise InvalidStateError(f"not Hermitian (max deviation {herm:.2e})")
        tr = np.trace(self.data)
        if abs(tr - 1) > tol:
            raise InvalidStateError(f"trace {tr:.12g} differs from 1")
        lam = self.min_eigenvalue()
        if lam < -pos_tol:
            raise InvalidStateError(f"negative eigenvalue {lam:.2e}")

    def min_eigenvalue(self) -> float:
        h = (self.data + self.data.conj().T) / 2
        return float(np.linalg.eigvalsh(h)[0])

    def hermitized(self) -> "DensityMatrix":
        return DensityMatrix((self.data + self.data.conj().T) / 2, self.space, check=False)

    def normalized(self) -> "DensityMatrix":
        return DensityMatrix(self.data / np.trace(self.data).real, self.space, check=False)

    def clamped(self) -> "DensityMatrix":
        """Project onto the PSD cone (used only for phase-space export)."""
        h = (self.data + self.data.conj().T) / 2
        w, v = np.linalg.eigh(h)
        w = np.clip(w, 0.0, None)
        out = (v * w) @ v.conj().T
        return DensityMatrix(out / np.trace(out).real, self.space, check=False)

    def ptrace(self, keep: str) -> "DensityMatrix":
        if not isinstance(self.space, ProductSpace):
            raise CompositionError("partial trace needs a product space")
        no, nm = self.space.optical.N, self.space.mechanical.N
        r = self.data.reshape(no, nm, no, nm)
        if keep == MECHANICAL:
            out = np.einsum("imik->mk", r)
        elif keep == OPTICAL:
            out = np.einsum("imjm->ij", r)
        else:
            raise InvalidSpaceError(f"unknown mode label {keep!r}")
        return DensityMatrix(out, self.space.factor(keep), check=False)

    def to_json_dict(self):
        flat = self.data.reshape(-1)  # row-major
        return {
            "dimension": self.dim,
            "space": self.space.to_dict(),
            "entries": [[float(z.real), float(z.imag)] for z in flat],
        }

    @classmethod
    def from_json_dict(cls, d, check=True):
        space = space_from_dict(d["space"])
        arr = np.array([complex(re, im) for re, im in d["entries"]]).reshape(d["dimension"], d["dimension"])
        return cls(arr, space, check=check)

    def __repr__(self):
        return f"DensityMatrix(dim={self.dim}, space={self.space})"


def fock_state(n: int, spec: FockSpaceSpec) -> DensityMatrix:
    if not 0 <= n < spec.N:
        raise InvalidStateError(f"Fock index {n} outside truncation {spec.N}")
    rho = np.zeros((spec.N, spec.N), complex)
    rho[n, n] = 1.0
    return DensityMatrix(rho, spec)


def coherent_ket(beta: complex, spec: FockSpaceSpec) -> np.ndarray:
    """Truncated coherent-state amplitudes, renormalised on the truncated space."""
    n = np.arange(spec.N)
    beta = complex(beta)
    if beta == 0:
        psi = np.zeros(spec.N, complex)
        psi[0] = 1.0
        return psi
    logmag = -abs(beta) ** 2 / 2 + n * np.log(abs(beta)) - 0.5 * gammaln(n + 1)
    psi = np.exp(logmag) * np.exp(1j * n * np.angle(beta))
    return psi / np.linalg.norm(psi)


def coherent_state(beta: complex, spec: FockSpaceSpec) -> DensityMatrix:
    psi = coherent_ket(beta, spec)
    return DensityMatrix(np.outer(psi, psi.conj()), spec, check=False)


def product_state(rho_opt: DensityMatrix, rho_mech: DensityMatrix) -> DensityMatrix:
    space = ProductSpace(rho_opt.space, rho_mech.space)
    return DensityMatrix(np.kron(rho_opt.data, rho_mech.data), space, check=False)


def expectation(op: OperatorMatrix, rho: DensityMatrix) -> complex:
    if op.space != rho.space:
        raise CompositionError(f"operator space {op.space} != state space {rho.space}")
    # tr(O rho) = sum_ij O_ij rho_ji
    return complex(op.data.multiply(rho.data.T).sum())


def vectorize(rho) -> np.ndarray:
    arr = rho.data if isinstance(rho, DensityMatrix) else np.asarray(rho)
    if arr.ndim != 2 or arr.shape[0] != arr.shape[1]:
        raise InvalidStateError(f"cannot vectorize non-square array of shape {arr.shape}")
    return arr.reshape(-1, order="F").astype(complex)


def devectorize(v, space: Space | None = None, *, check=False):
    v = np.asarray(v)
    d = int(round(np.sqrt(v.size)))
    if d * d != v.size:
        raise InvalidStateError(f"vector of length {v.size} is not a square matrix")
    arr = v.reshape(d, d, order="F")
    if space is None:
        return arr
    return DensityMatrix(arr, space, check=check)


def _matrix(op):
    return op.data if isinstance(op, OperatorMatrix) else sp.csr_matrix(op)


def superop_left(op) -> sp.csr_matrix:
    """Superoperator of X -> A X."""
    a = _matrix(op)
    if a.shape[0] != a.shape[1]:
        raise CompositionError("superop_left needs a square operator")
    return sp.kron(sp.identity(a.shape[0]), a, format="csr")


def superop_right(op) -> sp.csr_matrix:
    """Superoperator of X -> X B."""
    b = _matrix(op)
    if b.shape[0] != b.shape[1]:
        raise CompositionError("superop_right needs a square operator")
    return sp.kron(b.T, sp.identity(b.shape[0]), format="csr")


def superop_sandwich(a, b) -> sp.csr_matrix:
    """Superoperator of X -> A X B."""
    a, b = _matrix(a), _matrix(b)
    return sp.kron(b.T, a, format="csr")


def transpose_permutation(dim: int) -> sp.csr_matrix:
    """Permutation P with P vec(X) = vec(X^T)."""
    idx = np.arange(dim * dim)
    i, j = idx % dim, idx // dim
    return sp.csr_matrix((np.ones(dim * dim), (i * dim + j, idx)), shape=(dim * dim, dim * dim))

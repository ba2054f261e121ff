"""Dense complex linear algebra: Haar sampling, unitary spectra, SVD, Kronecker products.

Index convention used throughout the package: in a Kronecker product the first
factor owns the most significant block of the row/column index, and qubit 0 is
the most significant bit of a basis-state index.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Sequence

import numpy as np
import scipy.linalg

from .errors import InvalidArgument, InvalidDimension, InvalidOperator

UNITARITY_TOL = 1e-10
RECONSTRUCTION_TOL = 1e-9
CLUSTER_GAP = 1e-8


def as_rng(seed) -> np.random.Generator:
    """Accept an int, SeedSequence, Generator or None and return a Generator."""
    if isinstance(seed, np.random.Generator):
        return seed
    return np.random.default_rng(seed)


def _as_matrix(m) -> np.ndarray:
    if isinstance(m, UnitaryMatrix):
        return m.data
    a = np.asarray(m, dtype=complex)
    if a.ndim != 2:
        raise InvalidArgument(f"expected a 2-D matrix, got shape {a.shape}")
    if not np.all(np.isfinite(a)):
        raise InvalidArgument("matrix has non-finite entries")
    return a


def unitarity_error(a: np.ndarray) -> float:
    a = np.asarray(a)
    return float(np.max(np.abs(a.conj().T @ a - np.eye(a.shape[0]))))


class UnitaryMatrix:
    """Square unitary matrix, validated on construction.

    The underlying array is copied and marked read-only so instances can be
    shared freely.
    """

    __slots__ = ("data",)

    def __init__(self, data, *, check: bool = True, tol: float | None = None):
        a = np.array(data, dtype=complex, copy=True)
        if a.ndim != 2 or a.shape[0] != a.shape[1]:
            raise InvalidOperator(f"unitary must be square, got shape {a.shape}")
        if a.shape[0] == 0:
            raise InvalidDimension("dimension must be >= 1")
        if check:
            bound = (UNITARITY_TOL if tol is None else tol) * a.shape[0]
            err = unitarity_error(a)
            if not err <= bound:
                raise InvalidOperator(f"||U^dag U - I||_max = {err:.3e} exceeds {bound:.3e}")
        a.flags.writeable = False
        self.data = a

    @property
    def dim(self) -> int:
        return self.data.shape[0]

    @property
    def num_qubits(self) -> int:
        n = self.dim.bit_length() - 1
        if 1 << n != self.dim:
            raise InvalidDimension(f"dimension {self.dim} is not a power of two")
        return n

    def dag(self) -> "UnitaryMatrix":
        return UnitaryMatrix(self.data.conj().T, check=False)

    def __matmul__(self, other):
        if isinstance(other, UnitaryMatrix):
            return UnitaryMatrix(self.data @ other.data, check=False)
        return self.data @ other

    def __array__(self, dtype=None, copy=None):
        return self.data if dtype is None else self.data.astype(dtype)

    def __repr__(self) -> str:
        return f"UnitaryMatrix(dim={self.dim})"

    @classmethod
    def identity(cls, dim: int) -> "UnitaryMatrix":
        if dim < 1:
            raise InvalidDimension("dimension must be >= 1")
        return cls(np.eye(dim), check=False)


@dataclass(frozen=True)
class SpectralDecomposition:
    eigenvalues: np.ndarray
    eigenphases: np.ndarray
    eigenvectors: np.ndarray  # columns
    clusters: tuple[tuple[int, ...], ...] = field(default=())

    def reconstruct(self) -> np.ndarray:
        v = self.eigenvectors
        return (v * self.eigenvalues) @ v.conj().T

    @property
    def dim(self) -> int:
        return len(self.eigenvalues)


@dataclass(frozen=True)
class SingularDecomposition:
    left: UnitaryMatrix
    singulars: np.ndarray
    right: UnitaryMatrix

    def reconstruct(self) -> np.ndarray:
        m, n = self.left.dim, self.right.dim
        s = np.zeros((m, n))
        k = len(self.singulars)
        s[:k, :k] = np.diag(self.singulars)
        return self.left.data @ s @ self.right.data.conj().T


def haar_unitary(dim: int, seed=None) -> UnitaryMatrix:
    """Sample from the Haar measure on U(dim).

    QR of a complex Ginibre matrix, with the phases of R's diagonal pushed
    back into Q so that the result is exactly Haar distributed.
    """
    if dim < 1:
        raise InvalidDimension("dimension must be >= 1")
    rng = as_rng(seed)
    z = (rng.standard_normal((dim, dim)) + 1j * rng.standard_normal((dim, dim))) / np.sqrt(2)
    q, r = np.linalg.qr(z)
    d = np.diag(r)
    q = q * (d / np.abs(d))
    return UnitaryMatrix(q, check=False)


def principal_phase(z) -> np.ndarray:
    """Argument in (-pi, pi]."""
    ph = np.angle(z)
    return np.where(ph <= -np.pi, ph + 2 * np.pi, ph)


def _phase_clusters(phases: np.ndarray, gap: float) -> list[list[int]]:
    order = np.argsort(phases, kind="stable")
    groups: list[list[int]] = [[int(order[0])]]
    for prev, cur in zip(order[:-1], order[1:]):
        if phases[cur] - phases[prev] < gap:
            groups[-1].append(int(cur))
        else:
            groups.append([int(cur)])
    # clusters straddling the branch cut at +-pi
    if len(groups) > 1 and phases[order[0]] + 2 * np.pi - phases[order[-1]] < gap:
        groups[0] = groups.pop() + groups[0]
    return groups


def eigendecompose_unitary(u) -> SpectralDecomposition:
    """Spectral data of a unitary via its complex Schur form.

    For a normal matrix the Schur factor is diagonal up to roundoff, so the
    Schur vectors are an orthonormal eigenbasis. Eigenvalues are projected
    onto the unit circle and sorted by eigenphase.
    """
    if not isinstance(u, UnitaryMatrix):
        u = UnitaryMatrix(u)  # raises InvalidOperator for non-unitary input
    a = u.data
    if a.shape[0] == 1:
        lam = a[0, 0] / abs(a[0, 0])
        return SpectralDecomposition(
            np.array([lam]), principal_phase(np.array([lam])), np.eye(1, dtype=complex), ((0,),)
        )
    t, z = scipy.linalg.schur(a, output="complex")
    lam = np.diag(t).copy()
    lam /= np.abs(lam)
    phases = principal_phase(lam)
    groups = _phase_clusters(phases, CLUSTER_GAP)
    vecs = z.copy()
    for g in groups:
        if len(g) > 1:
            q, _ = np.linalg.qr(vecs[:, g])
            vecs[:, g] = q
    order = np.argsort(phases, kind="stable")
    inverse = np.empty_like(order)
    inverse[order] = np.arange(len(order))
    clusters = tuple(sorted(tuple(sorted(int(inverse[i]) for i in g)) for g in groups))
    return SpectralDecomposition(lam[order], phases[order], vecs[:, order], clusters)


def reconstruction_residual(spec: SpectralDecomposition, u) -> float:
    return float(np.max(np.abs(spec.reconstruct() - _as_matrix(u))))


def svd(m) -> SingularDecomposition:
    a = _as_matrix(m)
    left, s, right_h = np.linalg.svd(a, full_matrices=True)
    return SingularDecomposition(
        UnitaryMatrix(left, check=False), s, UnitaryMatrix(right_h.conj().T, check=False)
    )


def singular_values(m) -> np.ndarray:
    return np.linalg.svd(_as_matrix(m), compute_uv=False)


def kron(factors: Sequence) -> np.ndarray:
    """Kronecker product; the first factor is the most significant index block."""
    factors = list(factors)
    if not factors:
        raise InvalidArgument("kron needs at least one factor")
    out = _as_matrix(factors[0])
    for f in factors[1:]:
        out = np.kron(out, _as_matrix(f))
    return out


def kron_unitary(factors: Sequence[UnitaryMatrix]) -> UnitaryMatrix:
    return UnitaryMatrix(kron(factors), check=False)


def polar_unitary(a: np.ndarray) -> np.ndarray:
    """Closest unitary in Frobenius norm (unitary factor of the polar decomposition)."""
    w, _, vh = np.linalg.svd(a)
    return w @ vh


def matrix_to_json(m, *, unitary: bool = False) -> dict:
    a = _as_matrix(m)
    flat = [[float(z.real), float(z.imag)] for z in a.reshape(-1)]
    if unitary or isinstance(m, UnitaryMatrix):
        if a.shape[0] != a.shape[1]:
            raise InvalidOperator("unitary must be square")
        return {"dim": a.shape[0], "entries": flat}
    return {"rows": a.shape[0], "cols": a.shape[1], "entries": flat}


def matrix_from_json(obj: dict) -> np.ndarray:
    """Inverse of :func:`matrix_to_json`; returns a plain complex array."""
    if "dim" in obj:
        rows = cols = int(obj["dim"])
    else:
        rows, cols = int(obj["rows"]), int(obj["cols"])
    entries = obj["entries"]
    if len(entries) != rows * cols:
        raise InvalidArgument(f"expected {rows * cols} entries, got {len(entries)}")
    arr = np.array([complex(re, im) for re, im in entries], dtype=complex).reshape(rows, cols)
    if not np.all(np.isfinite(arr)):
        raise InvalidArgument("matrix has non-finite entries")
    return arr

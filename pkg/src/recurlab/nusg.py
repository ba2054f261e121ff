"""Spectral-gap instances built from toy verifier circuits.

Register layout, most significant first: one top ancilla, the input register
(its first qubit is the acceptance qubit), then the verifier's lower
ancillas. The verifier U_x acts on input (x) lower ancillas.

    Z = H U^dag Y U V H

with H on the top ancilla. V applies diag(e^{-i phi}, e^{i phi}) to the top
ancilla when the lower ancillas are all |0>, and the scalar e^{2 i phi}
otherwise. Y applies diag(e^{i phi}, e^{-i phi}) to the top ancilla exactly
when the acceptance qubit is |1>. A witness accepted with probability
1 - eps gives ||Z Psi - Psi|| <= 2 sqrt(eps); if every witness is accepted
with probability at most eps*, all eigenphases of Z stay at least
sin(phi) - 2 sqrt(eps*) away from 0.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
import scipy.linalg

from .errors import InvalidArgument, PremiseViolation, SizingError
from .linalg import UnitaryMatrix, as_rng, eigendecompose_unitary, haar_unitary, matrix_from_json, matrix_to_json
from .statevector import QubitState, sample_counts

MAX_QUBITS = 10
UNITARY_TOL = 1e-9
PHI_MARGIN = 10.0
_H = np.array([[1, 1], [1, -1]], dtype=complex) / np.sqrt(2)


@dataclass(frozen=True)
class VerifierInstance:
    verifier: UnitaryMatrix
    input_qubits: int
    ancilla_qubits: int

    def __post_init__(self):
        u = self.verifier if isinstance(self.verifier, UnitaryMatrix) else UnitaryMatrix(self.verifier)
        if self.input_qubits < 1 or self.ancilla_qubits < 0:
            raise InvalidArgument("need >= 1 input qubit and >= 0 ancillas")
        if u.dim != 2 ** (self.input_qubits + self.ancilla_qubits):
            raise InvalidArgument(f"verifier dim {u.dim} does not match {self.input_qubits}+{self.ancilla_qubits} qubits")
        object.__setattr__(self, "verifier", u)

    @property
    def dim(self) -> int:
        return self.verifier.dim

    @property
    def total_qubits(self) -> int:
        return 1 + self.input_qubits + self.ancilla_qubits

    def accept_projector(self) -> np.ndarray:
        """P1 on input (x) ancillas: acceptance qubit reads 1."""
        n = self.input_qubits + self.ancilla_qubits
        bits = (np.arange(self.dim) >> (n - 1)) & 1
        return np.diag(bits.astype(float))

    def witness_embedding(self) -> np.ndarray:
        """J: |w> -> |w> (x) |0...0> on the lower ancillas."""
        j = np.zeros((self.dim, 2**self.input_qubits))
        j[np.arange(2**self.input_qubits) * 2**self.ancilla_qubits, np.arange(2**self.input_qubits)] = 1
        return j

    def acceptance(self, witness: QubitState) -> float:
        w = self.witness_embedding() @ witness.amplitudes
        out = self.verifier.data @ w
        return float(np.real(np.vdot(out, self.accept_projector() @ out)))

    def to_json(self) -> dict:
        return {
            "input_qubits": self.input_qubits,
            "ancilla_qubits": self.ancilla_qubits,
            "verifier": matrix_to_json(self.verifier),
        }

    @classmethod
    def from_json(cls, obj: dict) -> "VerifierInstance":
        return cls(UnitaryMatrix(matrix_from_json(obj["verifier"]), tol=1e-8), int(obj["input_qubits"]), int(obj["ancilla_qubits"]))


@dataclass(frozen=True)
class NusgParams:
    phi: float
    epsilon: float = 0.0
    delta0: float = 0.005
    enforce_margin: bool = True  # case-1 residual checks hold for any phi

    def __post_init__(self):
        if not 0 < self.phi < math.pi / 4:
            raise InvalidArgument("phi must lie in (0, pi/4)")
        if not 0 <= self.epsilon < 1:
            raise InvalidArgument("epsilon must lie in [0, 1)")
        if not 0 < self.delta0 < 0.01:
            raise InvalidArgument("delta0 must lie in (0, 0.01)")
        if self.enforce_margin and self.phi < PHI_MARGIN * math.sqrt(self.epsilon):
            raise InvalidArgument(f"need phi >= {PHI_MARGIN:g} sqrt(epsilon)")


@dataclass(frozen=True)
class ZCircuit:
    z: UnitaryMatrix
    v: np.ndarray  # diagonal of V
    y: np.ndarray  # diagonal of Y
    instance: VerifierInstance
    phi: float


def _check_size(instance: VerifierInstance):
    if instance.total_qubits > MAX_QUBITS:
        raise SizingError(f"{instance.total_qubits} qubits exceed the cap {MAX_QUBITS}")


def build_v(phi: float, input_qubits: int, ancilla_qubits: int) -> UnitaryMatrix:
    d = 2 ** (input_qubits + ancilla_qubits)
    clean = (np.arange(d) % 2**ancilla_qubits) == 0
    diag = np.empty(2 * d, dtype=complex)
    for top, sign in ((0, -1), (1, 1)):
        diag[top * d:(top + 1) * d] = np.where(clean, np.exp(sign * 1j * phi), np.exp(2j * phi))
    return UnitaryMatrix(np.diag(diag), check=False)


def build_y(phi: float, input_qubits: int, ancilla_qubits: int) -> UnitaryMatrix:
    """Phases on the top ancilla, conditioned on the acceptance qubit.

    Which qubit receives the phase is a modelling choice (top ancilla, by
    symmetry with V); it is isolated here.
    """
    n = input_qubits + ancilla_qubits
    d = 2**n
    accepted = ((np.arange(d) >> (n - 1)) & 1) == 1
    diag = np.empty(2 * d, dtype=complex)
    for top, sign in ((0, 1), (1, -1)):
        diag[top * d:(top + 1) * d] = np.where(accepted, np.exp(sign * 1j * phi), 1.0)
    return UnitaryMatrix(np.diag(diag), check=False)


def build_z(instance: VerifierInstance, phi: float | NusgParams) -> ZCircuit:
    _check_size(instance)
    phi = phi.phi if isinstance(phi, NusgParams) else float(phi)
    d = instance.dim
    h = np.kron(_H, np.eye(d))
    u = np.kron(np.eye(2), instance.verifier.data)
    v = np.diag(build_v(phi, instance.input_qubits, instance.ancilla_qubits).data)
    y = np.diag(build_y(phi, instance.input_qubits, instance.ancilla_qubits).data)
    z = h @ u.conj().T @ (y[:, None] * (u @ (v[:, None] * h)))
    return ZCircuit(UnitaryMatrix(z, tol=UNITARY_TOL), v, y, instance, phi)


# -- gaps and decisions --------------------------------------------------------

def gap_around_one(u) -> float:
    """Smallest |eigenphase| of a unitary."""
    return float(np.min(np.abs(eigendecompose_unitary(u).eigenphases)))


def nusg_decide(u, delta0: float) -> str:
    g = gap_around_one(u)
    if g < delta0:
        return "member"
    if g >= 10 * delta0:
        return "non-member"
    return "undetermined"


def max_acceptance(instance: VerifierInstance, *, method: str = "exact", samples: int = 1000, seed=None) -> tuple[float, QubitState]:
    """Largest acceptance probability over witnesses, with a maximizing witness.

    ``exact``: squared top singular value of P1 U J. ``sampled``: best of
    Haar-random witnesses.
    """
    if method == "exact":
        m = instance.accept_projector() @ instance.verifier.data @ instance.witness_embedding()
        _, s, vh = np.linalg.svd(m)
        return float(s[0] ** 2), QubitState(vh[0].conj())
    if method == "sampled":
        rng = as_rng(seed)
        best, arg = -1.0, None
        for _ in range(samples):
            w = QubitState.random(instance.input_qubits, rng)
            a = instance.acceptance(w)
            if a > best:
                best, arg = a, w
        return best, arg
    raise InvalidArgument("method must be 'exact' or 'sampled'")


def lifted_witness(instance: VerifierInstance, witness: QubitState) -> QubitState:
    """|0>_top (x) |w> (x) |0...0>."""
    w = instance.witness_embedding() @ witness.amplitudes
    return QubitState(np.concatenate([w, np.zeros_like(w)]))


def residual_case1(instance: VerifierInstance, witness: QubitState, params: NusgParams, *, zc: ZCircuit | None = None) -> float:
    """||Z Psi - Psi|| for the lifted witness; requires acceptance >= 1 - epsilon."""
    acc = instance.acceptance(witness)
    if acc < 1 - params.epsilon - 1e-12:
        raise PremiseViolation(f"witness acceptance {acc:.6g} < 1 - epsilon = {1 - params.epsilon:.6g}")
    zc = zc or build_z(instance, params)
    psi = lifted_witness(instance, witness).amplitudes
    return float(np.linalg.norm(zc.z.data @ psi - psi))


def case2_bound(phi: float, eps_star: float) -> float:
    return math.sin(phi) - 2 * math.sqrt(eps_star)


# -- swap test ------------------------------------------------------------------

@dataclass(frozen=True)
class SwapEstimate:
    estimate: float
    stderr: float
    p0_hat: float
    shots: int


def swap_test_probability(a: QubitState, b: QubitState) -> float:
    """P(ancilla = 0) from a full ancilla (x) a (x) b simulation."""
    if a.num_qubits != b.num_qubits:
        raise InvalidArgument("swap test needs equal dimensions")
    ab = np.kron(a.amplitudes, b.amplitudes)
    swapped = np.kron(b.amplitudes, a.amplitudes)  # SWAP |a>|b> = |b>|a>
    branch0 = (ab + swapped) / 2
    return float(np.vdot(branch0, branch0).real)


def swap_test_estimate(a: QubitState, b: QubitState, shots: int, seed=None) -> SwapEstimate:
    """Estimate |<a|b>| as sqrt(2 P0 - 1) from sampled swap-test outcomes.

    stderr is min(s / est, sqrt(s)) with s the standard error of 2 P0 - 1;
    either branch bounds |est - |<a|b>|| / 3 whenever the sampled 2 P0 - 1
    lies within 3 s of its mean.
    """
    if shots < 1:
        raise InvalidArgument("shots must be >= 1")
    p0 = min(1.0, max(0.0, swap_test_probability(a, b)))
    hits = int(sample_counts(np.array([p0, 1 - p0]), shots, seed)[0])
    ph = hits / shots
    x = 2 * ph - 1
    est = math.sqrt(max(0.0, x))
    s = 2 * math.sqrt(ph * (1 - ph) / shots)
    err = math.sqrt(s) if est == 0 else min(s / est, math.sqrt(s))
    return SwapEstimate(est, err, ph, shots)


# -- toy verifiers ------------------------------------------------------------------

def _permutation(n: int, perm) -> np.ndarray:
    """Unitary moving qubit q to position perm[q] on n qubits."""
    d = 2**n
    out = np.zeros((d, d))
    for b in range(d):
        bits = [(b >> (n - 1 - i)) & 1 for i in range(n)]
        new = [0] * n
        for q, p in enumerate(perm):
            new[p] = bits[q]
        out[sum(v << (n - 1 - i) for i, v in enumerate(new)), b] = 1
    return out


def accept_all_verifier(input_qubits: int = 1, ancilla_qubits: int = 1) -> VerifierInstance:
    """X on the acceptance qubit: every witness with that qubit at |0> is accepted."""
    n = input_qubits + ancilla_qubits
    x = np.kron(np.array([[0, 1], [1, 0]]), np.eye(2 ** (n - 1)))
    return VerifierInstance(UnitaryMatrix(x, check=False), input_qubits, ancilla_qubits)


def reject_all_verifier(input_qubits: int = 1, ancilla_qubits: int = 1) -> VerifierInstance:
    """SWAP the acceptance qubit with a clean ancilla, so it always reads 0."""
    if ancilla_qubits < 1:
        raise InvalidArgument("the reject-all construction needs an ancilla")
    n = input_qubits + ancilla_qubits
    perm = list(range(n))
    perm[0], perm[input_qubits] = input_qubits, 0
    return VerifierInstance(UnitaryMatrix(_permutation(n, perm), check=False), input_qubits, ancilla_qubits)


def _gue(dim: int, rng) -> np.ndarray:
    a = rng.standard_normal((dim, dim)) + 1j * rng.standard_normal((dim, dim))
    return (a + a.conj().T) / 2


def random_verifier(input_qubits: int, ancilla_qubits: int, *, accept: bool, eta: float = 0.003, seed=None) -> VerifierInstance:
    """Near-deterministic toy verifier: a Haar scramble of the input, then accept-all or reject-all, then a small random kick."""
    rng = as_rng(seed)
    base = accept_all_verifier(input_qubits, ancilla_qubits) if accept else reject_all_verifier(input_qubits, ancilla_qubits)
    scramble = np.kron(haar_unitary(2**input_qubits, rng).data, np.eye(2**ancilla_qubits))
    kick = scipy.linalg.expm(1j * eta * _gue(base.dim, rng))
    u = kick @ base.verifier.data @ scramble
    return VerifierInstance(UnitaryMatrix(u, tol=1e-8), input_qubits, ancilla_qubits)


def tilted_verifier(alpha: float, input_qubits: int = 1, ancilla_qubits: int = 1) -> VerifierInstance:
    """Rotation on the acceptance qubit: witness |0...0> is accepted with probability sin^2(alpha)."""
    c, s = math.cos(alpha), math.sin(alpha)
    r = np.array([[c, -s], [s, c]])
    n = input_qubits + ancilla_qubits
    u = np.kron(r, np.eye(2 ** (n - 1)))
    return VerifierInstance(UnitaryMatrix(u), input_qubits, ancilla_qubits)

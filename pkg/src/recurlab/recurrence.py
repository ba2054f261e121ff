"""Recurrence statistics for (hidden-tensor) unitaries.

Angles are radians throughout: a CC-phase factor with angle ``theta`` is
diag(1, ..., 1, e^{i theta}) on three qubits.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np
import scipy.linalg

from .errors import InvalidArgument, SizingError, UnreachableConfidence
from .linalg import (
    UnitaryMatrix,
    as_rng,
    eigendecompose_unitary,
    haar_unitary,
    kron,
    principal_phase,
)
from .statevector import (
    CircuitSpec,
    GateOp,
    QubitState,
    RegisterLayout,
    phase_diag,
    recurrence_circuit,
    run_circuit,
    sample_counts,
)

# Dense replicas of hidden-tensor instances stop here; larger ones are
# handled analytically.
DENSE_STATE_CAP = 12
UNIT_EIGENVALUE_TOL = 1e-9
NEGLIGIBLE_RESIDUAL_QUBITS = 40


@dataclass(frozen=True)
class HiddenTensorUnitary:
    factors: tuple[UnitaryMatrix, ...]
    conjugator: UnitaryMatrix | None
    assembled: UnitaryMatrix
    thetas: tuple[float, ...] = ()

    @property
    def dim(self) -> int:
        return self.assembled.dim

    @property
    def num_qubits(self) -> int:
        return self.assembled.num_qubits


@dataclass(frozen=True)
class OverlapProfile:
    weights: np.ndarray
    eigenphases: np.ndarray

    def __post_init__(self):
        w = np.asarray(self.weights, dtype=float)
        if abs(w.sum() - 1) > 1e-9:
            raise InvalidArgument(f"weights sum to {w.sum()!r}, not 1")
        object.__setattr__(self, "weights", w / w.sum())
        object.__setattr__(self, "eigenphases", np.asarray(self.eigenphases, dtype=float))


@dataclass(frozen=True)
class NoiseModel:
    per_gate_epsilon: float = 0.0
    seed: int | None = None

    def __post_init__(self):
        if not 0 <= self.per_gate_epsilon <= 1:
            raise InvalidArgument("per_gate_epsilon must lie in [0, 1]")


@dataclass(frozen=True)
class RecurrenceEstimate:
    probability: float
    stderr: float
    shots: int
    k_zero_included: bool = True
    exact: float | None = field(default=None, compare=False)


def cc_phase(theta: float) -> UnitaryMatrix:
    return UnitaryMatrix(phase_diag(3, theta), check=False)


def sample_thetas(count: int, seed=None, *, max_denominator: int = 8, exclusion: float = 1e-6) -> np.ndarray:
    """Uniform angles in [0, 2pi) kept away from 2pi*a/b for b <= ``max_denominator``."""
    rng = as_rng(seed)
    rationals = sorted({2 * math.pi * a / b for b in range(1, max_denominator + 1) for a in range(b + 1)})
    grid = np.array(rationals)
    out = []
    while len(out) < count:
        t = rng.uniform(0, 2 * math.pi)
        if np.min(np.abs(grid - t)) > exclusion:
            out.append(t)
    return np.array(out)


def build_hidden_tensor(
    thetas: Sequence[float] | None = None,
    *,
    factors: Sequence | None = None,
    conjugator=None,
    conjugator_seed=None,
    cap: int = DENSE_STATE_CAP,
) -> HiddenTensorUnitary:
    """Assemble U' = V (U_1 (x) ... (x) U_r) V^dag.

    Factors are either CC-phase gates (one per entry of ``thetas``) or the
    explicitly supplied unitaries. ``conjugator`` may be a UnitaryMatrix,
    ``"identity"``/None, or ``"haar"`` (drawn from ``conjugator_seed``).
    """
    if factors is None:
        if thetas is None:
            raise InvalidArgument("need thetas or factors")
        facs = tuple(cc_phase(t) for t in thetas)
        thetas = tuple(float(t) for t in thetas)
    else:
        facs = tuple(f if isinstance(f, UnitaryMatrix) else UnitaryMatrix(f) for f in factors)
        thetas = ()
    if not facs:
        raise InvalidArgument("need at least one factor")
    for f in facs:
        f.num_qubits  # power-of-two dims only
    total = sum(f.num_qubits for f in facs)
    if total > cap:
        raise SizingError(
            f"{total} state qubits exceeds the dense cap of {cap}; use the factored "
            "routines (frac_period, bias_to_born) for larger instances"
        )
    core = kron(facs)
    dim = core.shape[0]
    if isinstance(conjugator, UnitaryMatrix):
        v = conjugator
    elif conjugator == "haar" or (conjugator is None and conjugator_seed is not None):
        v = haar_unitary(dim, conjugator_seed)
    elif conjugator in (None, "identity"):
        v = None
    else:
        raise InvalidArgument(f"unknown conjugator {conjugator!r}")
    if v is not None and v.dim != dim:
        raise InvalidArgument(f"conjugator dim {v.dim} != {dim}")
    assembled = core if v is None else v.data @ core @ v.data.conj().T
    return HiddenTensorUnitary(facs, v, UnitaryMatrix(assembled, tol=1e-9), thetas)


def _as_unitary(u) -> UnitaryMatrix:
    if isinstance(u, HiddenTensorUnitary):
        return u.assembled
    if isinstance(u, UnitaryMatrix):
        return u
    return UnitaryMatrix(u)


def overlap_profile(u, psi0: int = 0) -> OverlapProfile:
    """Weights |<psi_i|psi0>|^2 and eigenphases of U for a basis state psi0."""
    u = _as_unitary(u)
    if not 0 <= psi0 < u.dim:
        raise InvalidArgument(f"basis index {psi0} outside dimension {u.dim}")
    spec = eigendecompose_unitary(u)
    w = np.abs(spec.eigenvectors[psi0, :]) ** 2
    return OverlapProfile(w, spec.eigenphases)


def overlap_series(profile: OverlapProfile, k_max: int) -> np.ndarray:
    """c_k = sum_i w_i e^{i k theta_i} for k = 0..k_max (length k_max + 1)."""
    if k_max < 1:
        raise InvalidArgument("k_max must be >= 1")
    ks = np.arange(k_max + 1)
    out = np.empty(k_max + 1, dtype=complex)
    # chunk over k to bound memory at large dimension
    step = max(1, 2**22 // max(1, len(profile.weights)))
    for start in range(0, k_max + 1, step):
        kk = ks[start:start + step, None]
        out[start:start + step] = np.exp(1j * kk * profile.eigenphases[None, :]) @ profile.weights
    out[0] = 1.0
    return out


def unit_bias(profile: OverlapProfile, tol: float = UNIT_EIGENVALUE_TOL) -> float:
    """Total weight of psi0 on eigenvalues equal to 1 (within ``tol`` in phase)."""
    return float(profile.weights[np.abs(profile.eigenphases) <= tol].sum())


def _factor_phases(factors) -> list[np.ndarray]:
    out = []
    for f in factors:
        f = _as_unitary(f)
        out.append(eigendecompose_unitary(f).eigenphases)
    return out


def _phase_sum_table(phase_lists: list[np.ndarray], m: int) -> tuple[np.ndarray, np.ndarray]:
    """Distinct values of m * (sum of one phase per list) mod 2pi, with multiplicities."""
    vals = np.zeros(1)
    counts = np.ones(1, dtype=np.int64)
    for ph in phase_lists:
        p = np.mod(m * ph, 2 * np.pi)
        v = np.mod(vals[:, None] + p[None, :], 2 * np.pi).reshape(-1)
        c = np.repeat(counts, len(p))
        key = np.round(v, 12)
        uniq, inv = np.unique(key, return_inverse=True)
        vals = np.mod(uniq, 2 * np.pi)
        counts = np.bincount(inv, weights=c, minlength=len(uniq)).astype(np.int64)
    return vals, counts


def _count_near_zero_sum(a_vals, a_counts, b_vals, b_counts, tol: float) -> int:
    """Count pairs with circular distance of a + b from 0 at most ``tol``."""
    order = np.argsort(b_vals)
    bv = b_vals[order]
    cum = np.concatenate([[0], np.cumsum(b_counts[order])])
    total = 0
    two_pi = 2 * np.pi
    for a, ca in zip(a_vals, a_counts):
        target = np.mod(-a, two_pi)
        lo, hi = target - tol, target + tol
        n = 0
        for l, h in ((lo, hi), (lo + two_pi, hi + two_pi), (lo - two_pi, hi - two_pi)):
            i = np.searchsorted(bv, l, side="left")
            j = np.searchsorted(bv, h, side="right")
            n += cum[j] - cum[i]
        total += int(ca) * int(n)
    return total


def frac_period(u_or_factors, m: int = 1, tol: float = UNIT_EIGENVALUE_TOL) -> float:
    """Fraction of eigenvalues lambda with |arg(lambda^m)| <= tol.

    Factored input (a HiddenTensorUnitary or a list of factors) is counted
    combinatorially from the factor spectra by meet-in-the-middle, so the
    2^n-dimensional product is never formed.
    """
    if m < 1 or tol <= 0:
        raise InvalidArgument("need m >= 1 and tol > 0")
    if isinstance(u_or_factors, HiddenTensorUnitary):
        factors = list(u_or_factors.factors)
    elif isinstance(u_or_factors, (list, tuple)):
        factors = list(u_or_factors)
    else:
        spec = eigendecompose_unitary(_as_unitary(u_or_factors))
        ph = principal_phase(np.exp(1j * m * spec.eigenphases))
        return float(np.mean(np.abs(ph) <= tol))
    lists = _factor_phases(factors)
    half = len(lists) // 2
    a_vals, a_counts = _phase_sum_table(lists[:half], m)
    b_vals, b_counts = _phase_sum_table(lists[half:], m)
    hits = _count_near_zero_sum(a_vals, a_counts, b_vals, b_counts, tol)
    total = math.prod(len(p) for p in lists)
    return hits / total


def frac_period_from_thetas(thetas: Sequence[float], m: int = 1, tol: float = UNIT_EIGENVALUE_TOL) -> float:
    """frac_period for a product of CC-phase factors, without building any matrix."""
    lists = [np.array([0.0] * 7 + [float(t)]) for t in thetas]
    half = len(lists) // 2
    a = _phase_sum_table(lists[:half], m)
    b = _phase_sum_table(lists[half:], m)
    return _count_near_zero_sum(*a, *b, tol) / 8 ** len(lists)


def bias_to_born(bias: float, n: int) -> float:
    """Detection probability (f + r)^2 with walk residual r = (1 - f) 2^{-n/2}.

    The residual is dropped for n >= 40, where it is below 1e-6 relative.
    """
    if not 0 <= bias <= 1:
        raise InvalidArgument("bias must lie in [0, 1]")
    residual = 0.0 if n >= NEGLIGIBLE_RESIDUAL_QUBITS else (1 - bias) * 2.0 ** (-n / 2)
    return (bias + residual) ** 2


def detection_probability(p: float, runs: int) -> float:
    """Probability of at least one detection in ``runs`` independent runs."""
    if not 0 <= p <= 1:
        raise InvalidArgument("p must lie in [0, 1]")
    if runs < 0:
        raise InvalidArgument("runs must be >= 0")
    if p == 1:
        return 1.0 if runs > 0 else 0.0
    return float(-math.expm1(runs * math.log1p(-p)))


def runs_for_confidence(p: float, conf: float) -> int:
    if not 0 < conf < 1:
        raise InvalidArgument("confidence must lie in (0, 1)")
    if p <= 0:
        raise UnreachableConfidence("p = 0: no number of runs reaches positive confidence")
    if p >= 1:
        return 1
    r = max(1, math.ceil(math.log1p(-conf) / math.log1p(-p)))
    while r > 1 and detection_probability(p, r - 1) >= conf:
        r -= 1
    while detection_probability(p, r) < conf:
        r += 1
    return r


def ec_approx(z: float) -> float:
    """Two-exponential approximation (1/6) e^{-z^2} + (1/2) e^{-4 z^2 / 3} of the Gaussian tail."""
    if z < 0:
        raise InvalidArgument("z must be >= 0")
    return math.exp(-z * z) / 6 + math.exp(-4 * z * z / 3) / 2


def exact_recurrence_probability(u_or_profile, number_qubits: int, *, include_k0: bool = True, psi0: int = 0) -> float:
    """Probability that the state register reads psi0: mean of |c_k|^2 over k < 2^j.

    Without k = 0 the mean runs over k = 1..2^j - 1 (the conditional
    probability given a nonzero number register).
    """
    prof = u_or_profile if isinstance(u_or_profile, OverlapProfile) else overlap_profile(u_or_profile, psi0)
    kmax = max(1, 2**number_qubits - 1)
    c2 = np.abs(overlap_series(prof, kmax)) ** 2
    c2 = c2[: 2**number_qubits]
    if include_k0:
        return float(c2.mean())
    if number_qubits == 0:
        raise InvalidArgument("no k != 0 terms with an empty number register")
    return float(c2[1:].mean())


# -- noise --------------------------------------------------------------------

def _gue(dim: int, rng: np.random.Generator) -> np.ndarray:
    a = rng.standard_normal((dim, dim)) + 1j * rng.standard_normal((dim, dim))
    k = (a + a.conj().T) / 2
    # unit mean-square action on a Haar-random state: tr(K^2)/dim = 1
    return k / np.sqrt(np.trace(k @ k).real / dim)


def perturbation(dim: int, epsilon: float, rng) -> np.ndarray:
    """exp(i epsilon K) with K a normalized Gaussian Hermitian sample."""
    return scipy.linalg.expm(1j * epsilon * _gue(dim, as_rng(rng)))


def perturb_circuit(circuit: CircuitSpec, noise: NoiseModel) -> CircuitSpec:
    """Replace every gate G by G exp(i eps K) acting on the gate's qubits.

    Controlled gates become uncontrolled gates on ``controls + targets``
    because the perturbation does not respect the control structure.
    """
    eps = noise.per_gate_epsilon
    if eps < 0:
        raise InvalidArgument("epsilon must be >= 0")
    if eps == 0:
        return circuit
    rng = as_rng(noise.seed)
    ops = []
    for g in circuit.gates:
        full = g.full_matrix()
        noisy = full @ perturbation(full.shape[0], eps, rng)
        ops.append(GateOp(UnitaryMatrix(noisy, check=False), g.qubits, (), name="noisy"))
    return CircuitSpec(circuit.layout, tuple(ops))


# -- Monte Carlo ----------------------------------------------------------------

def circuit_output(u, number_qubits: int, noise: NoiseModel | None = None) -> QubitState:
    u = _as_unitary(u)
    circ = recurrence_circuit(u, number_qubits)
    if noise is not None:
        circ = perturb_circuit(circ, noise)
    return run_circuit(circ, QubitState.zero(circ.layout.total))


def _hit_table(state: QubitState, layout: RegisterLayout, psi0: int = 0) -> np.ndarray:
    """Rows k of the number register: [P(k, state=psi0), P(k, state!=psi0)]."""
    amps = state.amplitudes.reshape(2**layout.number_qubits, 2**layout.state_qubits)
    p = np.abs(amps) ** 2
    hit = p[:, psi0]
    return np.stack([hit, p.sum(axis=1) - hit], axis=1)


def recurrence_counts(u, number_qubits: int, shots: int, seed=None, *, noise: NoiseModel | None = None) -> tuple[np.ndarray, np.ndarray]:
    """Exact (k, hit/miss) probability table and sampled counts with the same shape."""
    u = _as_unitary(u)
    layout = RegisterLayout(number_qubits, u.num_qubits)
    table = _hit_table(circuit_output(u, number_qubits, noise), layout)
    counts = sample_counts(table.reshape(-1), shots, seed).reshape(table.shape)
    return table, counts


def estimate_recurrence(
    u,
    number_qubits: int,
    shots: int,
    seed=None,
    *,
    noise: NoiseModel | None = None,
    include_k0: bool = True,
) -> RecurrenceEstimate:
    """Monte Carlo frequency of reading |0...0> on the state register.

    The circuit is simulated exactly; shots are iid Born samples of the
    number register and the hit/miss outcome on the state register.
    """
    table, counts = recurrence_counts(u, number_qubits, shots, seed, noise=noise)
    if include_k0:
        hits, n = int(counts[:, 0].sum()), shots
        exact = float(table[:, 0].sum())
    else:
        hits, n = int(counts[1:, 0].sum()), int(counts[1:].sum())
        exact = float(table[1:, 0].sum() / table[1:].sum())
    if n == 0:
        raise InvalidArgument("no shots landed outside k = 0")
    p = hits / n
    return RecurrenceEstimate(p, math.sqrt(p * (1 - p) / n), n, include_k0, exact)


def haar_averaged_bias(thetas: Sequence[float], draws: int, seed=None, tol: float = UNIT_EIGENVALUE_TOL) -> np.ndarray:
    """Unit-eigenvalue weight of |0> for ``draws`` independent Haar conjugators."""
    root = seed if isinstance(seed, np.random.SeedSequence) else np.random.SeedSequence(seed)
    out = []
    for child in root.spawn(draws):
        h = build_hidden_tensor(thetas, conjugator="haar", conjugator_seed=np.random.default_rng(child))
        out.append(unit_bias(overlap_profile(h), tol))
    return np.array(out)


def haar_overlap_samples(num_qubits: int, unitaries: int, ks: Sequence[int], seed=None) -> np.ndarray:
    """|<0|U^k|0>| for independent Haar U (rows) and each k in ``ks`` (columns)."""
    root = seed if isinstance(seed, np.random.SeedSequence) else np.random.SeedSequence(seed)
    out = np.empty((unitaries, len(ks)))
    for row, child in enumerate(root.spawn(unitaries)):
        u = haar_unitary(2**num_qubits, np.random.default_rng(child)).data
        v = np.zeros(u.shape[0], dtype=complex)
        v[0] = 1
        series = [1.0]
        for _ in range(max(ks)):
            v = u @ v
            series.append(v[0])
        out[row] = np.abs(np.array(series)[list(ks)])
    return out

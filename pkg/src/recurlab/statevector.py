"""Dense pure-state simulation of qubit registers.

Qubit 0 is the most significant bit of a basis index. In the recurrence
layout, qubits ``0..j-1`` form the number register and ``j..j+n-1`` the state
register.
"""
from __future__ import annotations

import os
from collections import Counter
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Iterable, Sequence

import numpy as np

from .errors import (
    DimensionMismatch,
    IndexOutOfRange,
    InvalidArgument,
    SizingError,
)
from .linalg import UnitaryMatrix, polar_unitary

DEFAULT_QUBIT_CAP = 24
NORM_TOL = 1e-10
SHOT_CHUNK = 1 << 16


def _check_cap(total: int, cap: int = DEFAULT_QUBIT_CAP) -> None:
    if total > cap:
        mem = 16 * 2**total / 2**30
        raise SizingError(
            f"{total} qubits exceeds the dense simulator cap of {cap} "
            f"(state vector would need {mem:.1f} GiB)"
        )


@dataclass(frozen=True)
class RegisterLayout:
    number_qubits: int
    state_qubits: int
    cap: int = DEFAULT_QUBIT_CAP

    def __post_init__(self):
        if self.number_qubits < 0 or self.state_qubits < 1:
            raise InvalidArgument("need number_qubits >= 0 and state_qubits >= 1")
        _check_cap(self.total, self.cap)

    @property
    def total(self) -> int:
        return self.number_qubits + self.state_qubits

    @property
    def number_register(self) -> tuple[int, ...]:
        return tuple(range(self.number_qubits))

    @property
    def state_register(self) -> tuple[int, ...]:
        return tuple(range(self.number_qubits, self.total))


class QubitState:
    """Normalized state vector; immutable."""

    __slots__ = ("amplitudes",)

    def __init__(self, amplitudes, *, check: bool = True):
        a = np.array(amplitudes, dtype=complex, copy=True).reshape(-1)
        n = a.size.bit_length() - 1
        if a.size == 0 or 1 << n != a.size:
            raise DimensionMismatch(f"state length {a.size} is not a power of two")
        if check:
            nrm = np.linalg.norm(a)
            if abs(nrm - 1) > NORM_TOL:
                raise InvalidArgument(f"state norm {nrm!r} differs from 1 by more than {NORM_TOL}")
        a.flags.writeable = False
        self.amplitudes = a

    @property
    def num_qubits(self) -> int:
        return self.amplitudes.size.bit_length() - 1

    @classmethod
    def basis(cls, num_qubits: int, index: int = 0, cap: int = DEFAULT_QUBIT_CAP) -> "QubitState":
        _check_cap(num_qubits, cap)
        if not 0 <= index < 2**num_qubits:
            raise IndexOutOfRange(f"basis index {index} out of range")
        a = np.zeros(2**num_qubits, dtype=complex)
        a[index] = 1
        return cls(a, check=False)

    @classmethod
    def zero(cls, num_qubits: int) -> "QubitState":
        return cls.basis(num_qubits, 0)

    @classmethod
    def random(cls, num_qubits: int, seed=None) -> "QubitState":
        rng = np.random.default_rng(seed) if not isinstance(seed, np.random.Generator) else seed
        z = rng.standard_normal(2**num_qubits) + 1j * rng.standard_normal(2**num_qubits)
        return cls(z / np.linalg.norm(z), check=False)

    def inner(self, other: "QubitState") -> complex:
        return complex(np.vdot(self.amplitudes, other.amplitudes))

    def __repr__(self) -> str:
        return f"QubitState(num_qubits={self.num_qubits})"


@dataclass(frozen=True)
class GateOp:
    matrix: UnitaryMatrix
    targets: tuple[int, ...]
    controls: tuple[int, ...] = ()
    name: str | None = None
    params: tuple[float, ...] = ()

    def __post_init__(self):
        object.__setattr__(self, "targets", tuple(int(t) for t in self.targets))
        object.__setattr__(self, "controls", tuple(int(c) for c in self.controls))
        if not isinstance(self.matrix, UnitaryMatrix):
            object.__setattr__(self, "matrix", UnitaryMatrix(self.matrix))
        if not self.targets:
            raise InvalidArgument("gate needs at least one target")
        qs = self.targets + self.controls
        if len(set(qs)) != len(qs):
            raise InvalidArgument("targets and controls must be distinct")
        if self.matrix.dim != 2 ** len(self.targets):
            raise DimensionMismatch(
                f"matrix dim {self.matrix.dim} does not match {len(self.targets)} target qubits"
            )

    @property
    def qubits(self) -> tuple[int, ...]:
        return self.controls + self.targets

    def full_matrix(self) -> np.ndarray:
        """Matrix on ``controls + targets`` (in that order), controls most significant."""
        k = len(self.controls)
        d = self.matrix.dim
        out = np.eye(d * 2**k, dtype=complex)
        out[-d:, -d:] = self.matrix.data
        return out


@dataclass(frozen=True)
class CircuitSpec:
    layout: RegisterLayout
    gates: tuple[GateOp, ...] = field(default_factory=tuple)

    def __post_init__(self):
        object.__setattr__(self, "gates", tuple(self.gates))
        for g in self.gates:
            for q in g.qubits:
                if not 0 <= q < self.layout.total:
                    raise IndexOutOfRange(f"qubit {q} outside layout of {self.layout.total}")


# -- primitives ---------------------------------------------------------------

_H = np.array([[1, 1], [1, -1]], dtype=complex) / np.sqrt(2)
_X = np.array([[0, 1], [1, 0]], dtype=complex)
_Y = np.array([[0, -1j], [1j, 0]], dtype=complex)
_Z = np.diag([1, -1]).astype(complex)


def phase_diag(num_qubits: int, alpha: float) -> np.ndarray:
    """diag(1, ..., 1, e^{i alpha}) on ``num_qubits`` qubits."""
    d = np.ones(2**num_qubits, dtype=complex)
    d[-1] = np.exp(1j * alpha)
    return np.diag(d)


def primitive_matrix(name: str, params: Sequence[float] = ()) -> np.ndarray:
    name = name.upper()
    if name == "H":
        return _H
    if name == "X":
        return _X
    if name == "Y":
        return _Y
    if name == "Z":
        return _Z
    if name == "CPHASE":
        return phase_diag(2, float(params[0]))
    if name == "CCPHASE":
        return phase_diag(3, float(params[0]))
    raise InvalidArgument(f"unknown primitive gate {name!r}")


def gate(name: str, targets: Iterable[int], controls: Iterable[int] = (), params: Sequence[float] = ()) -> GateOp:
    return GateOp(
        UnitaryMatrix(primitive_matrix(name, params), check=False),
        tuple(targets),
        tuple(controls),
        name=name.upper(),
        params=tuple(float(p) for p in params),
    )


# -- kernels ------------------------------------------------------------------

def _apply(amps: np.ndarray, n: int, matrix: np.ndarray, targets: Sequence[int], controls: Sequence[int]) -> np.ndarray:
    psi = amps.reshape((2,) * n).copy()
    idx: list = [slice(None)] * n
    for c in controls:
        idx[c] = 1
    idx = tuple(idx)
    sub = psi[idx]
    # axes of ``sub`` are the non-control qubits in increasing order
    remaining = [q for q in range(n) if q not in set(controls)]
    pos = [remaining.index(t) for t in targets]
    k = len(targets)
    moved = np.moveaxis(sub, pos, list(range(k)))
    shape = moved.shape
    out = (matrix @ moved.reshape(2**k, -1)).reshape(shape)
    psi[idx] = np.moveaxis(out, list(range(k)), pos)
    return psi.reshape(-1)


def apply_gate(state: QubitState, op: GateOp) -> QubitState:
    n = state.num_qubits
    for q in op.qubits:
        if not 0 <= q < n:
            raise IndexOutOfRange(f"qubit {q} out of range for {n}-qubit state")
    out = _apply(state.amplitudes, n, op.matrix.data, op.targets, op.controls)
    return QubitState(out, check=False)


def run_circuit(circuit: CircuitSpec, initial: QubitState) -> QubitState:
    if initial.num_qubits != circuit.layout.total:
        raise DimensionMismatch(
            f"input has {initial.num_qubits} qubits, layout has {circuit.layout.total}"
        )
    amps = initial.amplitudes
    n = initial.num_qubits
    for op in circuit.gates:
        amps = _apply(amps, n, op.matrix.data, op.targets, op.controls)
    return QubitState(amps, check=False)


def dyadic_power(u: UnitaryMatrix, i: int) -> np.ndarray:
    """U^(2^i) by repeated squaring, re-unitarized after every squaring."""
    if i < 0:
        raise InvalidArgument("exponent index must be >= 0")
    a = np.array(u.data)
    for _ in range(i):
        a = polar_unitary(a @ a)
    return a


def controlled_power(u: UnitaryMatrix, i: int, control: int, state_targets: Sequence[int]) -> GateOp:
    if not isinstance(u, UnitaryMatrix):
        u = UnitaryMatrix(u)
    if u.dim != 2 ** len(state_targets):
        raise DimensionMismatch(f"U has dim {u.dim} but {len(state_targets)} target qubits")
    return GateOp(
        UnitaryMatrix(dyadic_power(u, i), check=False),
        tuple(state_targets),
        (control,),
        name=f"CU^{2**i}",
    )


def recurrence_circuit(u: UnitaryMatrix, number_qubits: int) -> CircuitSpec:
    """Hadamards on the number register, then controlled dyadic powers of U.

    Number qubit ``j-1-i`` controls U^(2^i), so the number register holds k in
    big-endian order and the output is (1/sqrt(2^j)) sum_k |k> (x) U^k|0>.
    """
    n = u.num_qubits
    layout = RegisterLayout(number_qubits, n)
    ops = [gate("H", [q]) for q in layout.number_register]
    for i in range(number_qubits):
        ops.append(controlled_power(u, i, number_qubits - 1 - i, layout.state_register))
    return CircuitSpec(layout, tuple(ops))


# -- measurement --------------------------------------------------------------

def _parse_outcome(outcome, length: int) -> tuple[int, ...]:
    if isinstance(outcome, str):
        bits = tuple(int(b) for b in outcome)
    else:
        bits = tuple(int(b) for b in outcome)
    if len(bits) != length:
        raise DimensionMismatch(f"outcome has {len(bits)} bits, register has {length}")
    if any(b not in (0, 1) for b in bits):
        raise InvalidArgument("outcome bits must be 0 or 1")
    return bits


def marginal_distribution(state: QubitState, register: Sequence[int]) -> np.ndarray:
    """Born probabilities of all outcomes on ``register``, indexed big-endian in register order."""
    n = state.num_qubits
    register = list(register)
    for q in register:
        if not 0 <= q < n:
            raise IndexOutOfRange(f"qubit {q} out of range for {n}-qubit state")
    p = np.abs(state.amplitudes.reshape((2,) * n)) ** 2
    others = tuple(q for q in range(n) if q not in set(register))
    m = p.sum(axis=others) if others else p
    # remaining axes are the register qubits in increasing order
    kept = sorted(register)
    m = np.transpose(m, [kept.index(q) for q in register])
    return m.reshape(-1)


def born_probability(state: QubitState, register: Sequence[int], outcome) -> float:
    bits = _parse_outcome(outcome, len(register))
    n = state.num_qubits
    idx: list = [slice(None)] * n
    for q, b in zip(register, bits):
        if not 0 <= q < n:
            raise IndexOutOfRange(f"qubit {q} out of range for {n}-qubit state")
        idx[q] = b
    sub = state.amplitudes.reshape((2,) * n)[tuple(idx)]
    return float(np.sum(np.abs(sub) ** 2))


def thread_count() -> int:
    try:
        return max(1, int(os.environ.get("RECURLAB_THREADS", "1")))
    except ValueError:
        return 1


def _seed_sequence(seed) -> np.random.SeedSequence:
    if isinstance(seed, np.random.SeedSequence):
        return seed
    if isinstance(seed, np.random.Generator):
        return np.random.SeedSequence(int(seed.integers(2**63)))
    return np.random.SeedSequence(seed)


def sample_counts(probs: np.ndarray, shots: int, seed) -> np.ndarray:
    """Multinomial counts, drawn in fixed-size chunks with one child stream per chunk.

    The result depends only on (probs, shots, seed): chunk streams are merged
    by index, so the thread count never changes the output.
    """
    if shots < 1:
        raise InvalidArgument("shots must be >= 1")
    p = np.clip(np.asarray(probs, dtype=float), 0, None)
    p = p / p.sum()
    nchunks = -(-shots // SHOT_CHUNK)
    sizes = [SHOT_CHUNK] * (nchunks - 1) + [shots - SHOT_CHUNK * (nchunks - 1)]
    children = _seed_sequence(seed).spawn(nchunks)

    def draw(i: int) -> np.ndarray:
        return np.random.default_rng(children[i]).multinomial(sizes[i], p)

    workers = min(thread_count(), nchunks)
    if workers > 1:
        with ThreadPoolExecutor(workers) as ex:
            parts = list(ex.map(draw, range(nchunks)))
    else:
        parts = [draw(i) for i in range(nchunks)]
    return np.sum(parts, axis=0)


def sample_measurement(state: QubitState, register: Sequence[int], shots: int, seed=None) -> Counter:
    """Histogram ``{bitstring: count}`` of iid Z-basis measurements on ``register``."""
    probs = marginal_distribution(state, register)
    counts = sample_counts(probs, shots, seed)
    width = len(register)
    return Counter({format(i, f"0{width}b") if width else "": int(c) for i, c in enumerate(counts) if c})


def histogram_csv(hist: Counter) -> str:
    lines = ["outcome,count"]
    for k in sorted(hist):
        lines.append(f"{k},{hist[k]}")
    return "\n".join(lines) + "\n"


# -- serialization ------------------------------------------------------------

def circuit_to_json(circuit: CircuitSpec) -> dict:
    from .linalg import matrix_to_json

    gates = []
    for g in circuit.gates:
        entry: dict = {"targets": list(g.targets), "controls": list(g.controls)}
        if g.name in ("H", "X", "Y", "Z", "CPHASE", "CCPHASE"):
            entry["name"] = g.name
            if g.params:
                entry["params"] = list(g.params)
        else:
            entry["matrix"] = matrix_to_json(g.matrix)
        gates.append(entry)
    lay = circuit.layout
    return {
        "layout": {"number_qubits": lay.number_qubits, "state_qubits": lay.state_qubits},
        "gates": gates,
    }


def circuit_from_json(obj: dict) -> CircuitSpec:
    from .linalg import matrix_from_json

    lay = RegisterLayout(int(obj["layout"]["number_qubits"]), int(obj["layout"]["state_qubits"]))
    ops = []
    for entry in obj["gates"]:
        if "name" in entry:
            ops.append(gate(entry["name"], entry["targets"], entry.get("controls", ()), entry.get("params", ())))
        else:
            ops.append(GateOp(UnitaryMatrix(matrix_from_json(entry["matrix"])), tuple(entry["targets"]), tuple(entry.get("controls", ()))))
    return CircuitSpec(lay, tuple(ops))

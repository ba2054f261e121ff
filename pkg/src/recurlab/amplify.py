"""Amplitude amplification on the joint number (x) state register.

Two choices of "good" projector are supported:

* ``"theta"``: the rank-one projector onto Theta = 2^{-j/2} sum_k |k>|0...0>;
* ``"marked"``: the projector onto every basis state whose state register
  reads 0...0, i.e. the event the recurrence circuit actually measures.

Either way Q = -S_Psi S_P rotates by 2 theta in a fixed plane, with
sin(theta) = ||P Psi||. Reflections are rank-one updates or sign masks on
the dense amplitude vector.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import DimensionMismatch, InvalidArgument
from .recurrence import RecurrenceEstimate, _as_unitary, circuit_output
from .statevector import QubitState, RegisterLayout, sample_counts

TARGET_KINDS = ("theta", "marked")


@dataclass(frozen=True)
class AmplifierSetup:
    psi: QubitState
    target: QubitState
    theta: float
    kind: str = "theta"
    marked_mask: np.ndarray | None = None

    @property
    def num_qubits(self) -> int:
        return self.psi.num_qubits


def uniform_target(layout: RegisterLayout) -> QubitState:
    """Theta: uniform superposition on the number register, |0...0> on the state register."""
    a = np.zeros((2**layout.number_qubits, 2**layout.state_qubits), dtype=complex)
    a[:, 0] = 2 ** (-layout.number_qubits / 2)
    return QubitState(a.reshape(-1), check=False)


def setup_from_states(psi: QubitState, target: QubitState, *, kind: str = "theta", marked_mask=None) -> AmplifierSetup:
    if psi.num_qubits != target.num_qubits:
        raise DimensionMismatch("psi and target live in different registers")
    if kind not in TARGET_KINDS:
        raise InvalidArgument(f"kind must be one of {TARGET_KINDS}")
    if kind == "theta":
        ov = target.inner(psi)
        # rotate Theta so that <Theta|Psi> is real and non-negative
        phase = ov / abs(ov) if abs(ov) > 0 else 1.0
        target = QubitState(target.amplitudes * phase, check=False)
        sin_theta = abs(ov)
        mask = None
    else:
        if marked_mask is None:
            raise InvalidArgument("marked kind needs a mask")
        mask = np.asarray(marked_mask, dtype=bool)
        sin_theta = float(np.linalg.norm(psi.amplitudes[mask]))
    theta = math.asin(min(1.0, sin_theta))
    return AmplifierSetup(psi, target, theta, kind, mask)


def recurrence_setup(u, number_qubits: int, *, kind: str = "theta") -> AmplifierSetup:
    """Psi from the recurrence circuit for U; Theta / marked set on |0...0>."""
    u = _as_unitary(u)
    layout = RegisterLayout(number_qubits, u.num_qubits)
    psi = circuit_output(u, number_qubits)
    mask = np.zeros((2**number_qubits, 2**layout.state_qubits), dtype=bool)
    mask[:, 0] = True
    return setup_from_states(psi, uniform_target(layout), kind=kind, marked_mask=mask.reshape(-1))


def _reflect_good(setup: AmplifierSetup, x: np.ndarray) -> np.ndarray:
    if setup.kind == "theta":
        t = setup.target.amplitudes
        return x - 2 * t * np.vdot(t, x)
    out = x.copy()
    out[setup.marked_mask] *= -1
    return out


def grover_step(setup: AmplifierSetup, state: QubitState) -> QubitState:
    """One application of Q = -S_Psi S_P."""
    if state.num_qubits != setup.num_qubits:
        raise DimensionMismatch("state does not match the amplifier registers")
    y = _reflect_good(setup, state.amplitudes)
    p = setup.psi.amplitudes
    y = y - 2 * p * np.vdot(p, y)
    return QubitState(-y, check=False)


def good_overlap(setup: AmplifierSetup, state: QubitState) -> float:
    """||P state||: |<Theta|state>| for the rank-one target, mask norm otherwise."""
    if setup.kind == "theta":
        return abs(setup.target.inner(state))
    return float(np.linalg.norm(state.amplitudes[setup.marked_mask]))


def iterate(setup: AmplifierSetup, m: int) -> QubitState:
    if m < 0:
        raise InvalidArgument("m must be >= 0")
    s = setup.psi
    for _ in range(m):
        s = grover_step(setup, s)
    return s


def q_matrix(setup: AmplifierSetup) -> np.ndarray:
    """Dense Q, for small instances and verification only."""
    d = 2**setup.num_qubits
    cols = [grover_step(setup, QubitState(np.eye(d, dtype=complex)[:, i], check=False)).amplitudes for i in range(d)]
    return np.stack(cols, axis=1)


def amplified_recurrence(
    u,
    number_qubits: int,
    m: int,
    shots: int,
    seed=None,
    *,
    kind: str = "marked",
) -> RecurrenceEstimate:
    """Detection frequency after m rounds of amplification.

    With the default ``"marked"`` projector, detection means reading 0...0 on
    the state register and m = 0 reproduces the unamplified recurrence
    probability exactly.
    """
    setup = recurrence_setup(u, number_qubits, kind=kind)
    state = iterate(setup, m)
    p = min(1.0, good_overlap(setup, state) ** 2)
    hits = int(sample_counts(np.array([p, 1 - p]), shots, seed)[0])
    ph = hits / shots
    return RecurrenceEstimate(ph, math.sqrt(ph * (1 - ph) / shots), shots, True, p)


def predicted_detection(theta: float, m: int) -> float:
    return math.sin((2 * m + 1) * theta) ** 2


def first_iteration_reaching(theta: float, threshold: float = 0.5, max_m: int = 10**6) -> int | None:
    """Smallest m with sin^2((2m+1) theta) >= threshold."""
    for m in range(max_m + 1):
        if predicted_detection(theta, m) >= threshold:
            return m
    return None


def guess_schedule(max_m: int) -> list[int]:
    """Geometric guesses 1, 2, 4, ... not exceeding ``max_m``."""
    if max_m < 1:
        raise InvalidArgument("max_m must be >= 1")
    out, m = [], 1
    while m <= max_m:
        out.append(m)
        m *= 2
    return out


def auto_schedule(u, number_qubits: int, max_m: int, shots: int, seed=None, *, kind: str = "marked") -> list[tuple[int, RecurrenceEstimate]]:
    """Run :func:`amplified_recurrence` at every scheduled guess, each with its own stream."""
    sched = guess_schedule(max_m)
    root = seed if isinstance(seed, np.random.SeedSequence) else np.random.SeedSequence(seed)
    streams = root.spawn(len(sched))
    return [(m, amplified_recurrence(u, number_qubits, m, shots, s, kind=kind)) for m, s in zip(sched, streams)]

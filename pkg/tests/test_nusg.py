import math

import numpy as np
import pytest

from recurlab.errors import InvalidArgument, PremiseViolation, SizingError
from recurlab.linalg import eigendecompose_unitary, haar_unitary
from recurlab.nusg import (
    NusgParams,
    VerifierInstance,
    accept_all_verifier,
    build_v,
    build_y,
    build_z,
    case2_bound,
    gap_around_one,
    lifted_witness,
    max_acceptance,
    nusg_decide,
    random_verifier,
    reject_all_verifier,
    residual_case1,
    swap_test_estimate,
    swap_test_probability,
    tilted_verifier,
)
from recurlab.statevector import QubitState


def test_build_v_examples():
    phi = 0.3
    d = np.diag(build_v(phi, 1, 1).data)
    # top=0: clean ancilla (index 0, 2) -> e^{-i phi}, dirty -> e^{2i phi}
    assert np.allclose(d[:4], np.exp(1j * np.array([-phi, 2 * phi, -phi, 2 * phi])))
    assert np.allclose(d[4:], np.exp(1j * np.array([phi, 2 * phi, phi, 2 * phi])))
    assert np.allclose(np.diag(build_v(phi, 2, 0).data), np.exp(1j * phi * np.repeat([-1, 1], 4)))


def test_build_y_examples():
    phi = 0.2
    d = np.diag(build_y(phi, 1, 1).data)
    assert np.allclose(d[:4], [1, 1, np.exp(1j * phi), np.exp(1j * phi)])
    assert np.allclose(d[4:], [1, 1, np.exp(-1j * phi), np.exp(-1j * phi)])


def test_build_z_unitary_and_sized():
    inst = random_verifier(2, 2, accept=True, seed=1)
    zc = build_z(inst, 0.4)
    assert zc.z.dim == 2 ** inst.total_qubits
    assert np.linalg.norm(zc.z.data @ zc.z.data.conj().T - np.eye(zc.z.dim)) < 1e-10
    big = VerifierInstance(haar_unitary(2**10, seed=0), 5, 5)
    with pytest.raises(SizingError):
        build_z(big, 0.3)


def test_gap_examples():
    assert gap_around_one(np.diag(np.exp(1j * np.array([0.3, -0.2, 1.0])))) == pytest.approx(0.2)
    assert nusg_decide(np.diag([1.0, -1.0]), 0.005) == "member"
    assert nusg_decide(np.diag(np.exp(1j * np.array([0.1, 2.0]))), 0.005) == "non-member"
    assert nusg_decide(np.diag(np.exp(1j * np.array([0.01, 2.0]))), 0.005) == "undetermined"


def test_accept_all_has_unit_eigenvalue():
    zc = build_z(accept_all_verifier(1, 1), 0.3)
    assert gap_around_one(zc.z) <= 1e-9
    eps, w = max_acceptance(accept_all_verifier(1, 1))
    assert eps == pytest.approx(1.0)
    assert residual_case1(accept_all_verifier(1, 1), w, NusgParams(0.3)) <= 1e-9


def test_reject_all_gap():
    inst = reject_all_verifier(1, 1)
    eps, _ = max_acceptance(inst)
    assert eps == pytest.approx(0.0, abs=1e-12)
    phi = 0.3
    assert gap_around_one(build_z(inst, phi).z) >= math.sin(phi) - 1e-9


def test_params_validation():
    with pytest.raises(InvalidArgument):
        NusgParams(1.0)
    with pytest.raises(InvalidArgument):
        NusgParams(0.3, epsilon=0.01)  # 0.3 < 10 * sqrt(0.01)
    NusgParams(0.3, epsilon=0.01, enforce_margin=False)
    with pytest.raises(InvalidArgument):
        NusgParams(0.3, delta0=0.02)


@pytest.mark.parametrize("eps", [1e-4, 1e-2])
def test_case1_tilted(eps):
    alpha = math.asin(math.sqrt(1 - eps))
    inst = tilted_verifier(alpha, 1, 1)
    w = QubitState.basis(1, 0)
    assert inst.acceptance(w) == pytest.approx(1 - eps)
    params = NusgParams(0.7, epsilon=eps, enforce_margin=False)
    assert residual_case1(inst, w, params) <= 2 * math.sqrt(eps) + 1e-12


def test_case1_premise_violation():
    inst = tilted_verifier(0.5, 1, 1)
    with pytest.raises(PremiseViolation):
        residual_case1(inst, QubitState.basis(1, 0), NusgParams(0.3, epsilon=1e-4))


def test_case2_random_verifiers():
    for seed in range(6):
        inst = random_verifier(2, 2, accept=False, seed=seed)
        eps, _ = max_acceptance(inst)
        phi = 0.5
        phases = eigendecompose_unitary(build_z(inst, phi).z).eigenphases
        assert np.min(np.abs(phases)) >= case2_bound(phi, eps) - 1e-9


def test_max_acceptance_sampled_below_exact():
    inst = random_verifier(2, 1, accept=True, seed=3)
    exact, w = max_acceptance(inst)
    sampled, _ = max_acceptance(inst, method="sampled", samples=200, seed=0)
    assert sampled <= exact + 1e-12
    assert inst.acceptance(w) == pytest.approx(exact)


def test_lifted_witness():
    inst = accept_all_verifier(1, 1)
    psi = lifted_witness(inst, QubitState.basis(1, 1)).amplitudes
    assert psi[1 * 2] == 1 and np.count_nonzero(psi) == 1


def test_swap_test_examples():
    a = QubitState.basis(1, 0)
    assert swap_test_probability(a, a) == pytest.approx(1.0)
    assert swap_test_probability(a, QubitState.basis(1, 1)) == pytest.approx(0.5)
    with pytest.raises(InvalidArgument):
        swap_test_probability(a, QubitState.basis(2, 0))
    with pytest.raises(InvalidArgument):
        swap_test_estimate(a, a, 0)


def test_swap_test_coverage():
    rng = np.random.default_rng(7)
    inside = 0
    trials = 1000
    for t in range(trials):
        a = QubitState.random(2, rng)
        b = QubitState.random(2, rng)
        exact = abs(np.vdot(a.amplitudes, b.amplitudes))
        est = swap_test_estimate(a, b, 2000, seed=t)
        inside += abs(est.estimate - exact) <= 3 * est.stderr
    assert inside / trials >= 0.99


def test_verifier_json_round_trip():
    inst = random_verifier(1, 2, accept=True, seed=4)
    back = VerifierInstance.from_json(inst.to_json())
    assert np.allclose(back.verifier.data, inst.verifier.data)
    assert (back.input_qubits, back.ancilla_qubits) == (1, 2)


def test_verifier_validation():
    with pytest.raises(InvalidArgument):
        VerifierInstance(np.eye(4), 1, 2)
    with pytest.raises(InvalidArgument):
        reject_all_verifier(2, 0)

import itertools
import math

import numpy as np
import pytest
from hypothesis import given, strategies as st

from recurlab.errors import InvalidArgument, RankDeficiency, SearchLimitExceeded
from recurlab.linalg import haar_unitary, kron
from recurlab.tensorfactor import (
    Budget,
    SetSumInstance,
    SetSumSolution,
    TensorFormat,
    _incidence,
    detect_hidden_tensor_matrix,
    detect_hidden_tensor_unitary,
    forward,
    gauge_normalize,
    log_singular_values,
    solve_approx,
    solve_exact,
    solve_greedy,
    verify,
)

FORMATS = [(2, 2), (2, 3), (3, 3), (2, 2, 2)]


def brute_force_solvable(values, fmt, tol=1e-9) -> bool:
    """Oracle: try every bijection; solvable iff some permutation lies in range(A)."""
    a = _incidence(TensorFormat(fmt))
    proj = np.eye(len(a)) - a @ np.linalg.pinv(a)
    v = np.asarray(values, dtype=float)
    perms = np.array(list(itertools.permutations(range(len(v)))))
    resid = np.abs(v[perms] @ proj.T).max(axis=1)
    return bool(resid.min() <= tol)


def random_axes(fmt, rng, integer=False):
    if integer:
        return [rng.integers(0, 4, size=k).astype(float) for k in fmt]
    return [rng.normal(size=k) for k in fmt]


def test_forward_examples():
    assert list(forward([[0, 2], [0, 1]])) == [3, 2, 1, 0]
    assert np.allclose(forward([[1.5], [3, 1, 2]]), [4.5, 3.5, 2.5])
    with pytest.raises(InvalidArgument):
        forward([[0, 1]], TensorFormat((3,)))


def test_solve_exact_examples():
    sol = solve_exact(SetSumInstance([0, 1, 2, 3], TensorFormat((2, 2))))
    assert sol is not None
    assert sorted(sorted(a) for a in sol.axis_values) == [[0, 1], [0, 2]]
    assert solve_exact(SetSumInstance([0, 0, 0, 1], TensorFormat((2, 2)))) is None
    # parity check for {0,0,0,1}: in a 2x2 sum array the two diagonals have equal sums,
    # but 0+1 != 0+0 for every pairing
    assert not brute_force_solvable([0, 0, 0, 1], (2, 2))


@given(st.lists(st.floats(-5, 5), min_size=1, max_size=9))
def test_single_axis_always_solvable(vals):
    inst = SetSumInstance(vals, TensorFormat((len(vals),)))
    sol = solve_exact(inst)
    assert verify(inst, sol) and solve_greedy(inst).bijection == sol.bijection


@pytest.mark.parametrize("fmt", FORMATS)
@pytest.mark.parametrize("integer", [False, True])
def test_round_trip(fmt, integer):
    rng = np.random.default_rng(hash((fmt, integer)) % 2**32)
    for _ in range(100):
        axes = random_axes(fmt, rng, integer)
        inst = SetSumInstance(forward(axes), TensorFormat(fmt))
        sol = solve_exact(inst)
        assert sol is not None and verify(inst, sol)
        assert np.max(np.abs(forward(sol.axis_values) - inst.values)) <= 1e-9


@given(st.sampled_from([(2, 2), (2, 3), (3, 2), (2, 4), (2, 2, 2)]), st.lists(st.integers(0, 3), min_size=8, max_size=8))
def test_certification_matches_brute_force(fmt, raw):
    k = math.prod(fmt)
    vals = raw[:k]
    sol = solve_exact(SetSumInstance(vals, TensorFormat(fmt)))
    assert (sol is not None) == brute_force_solvable(vals, fmt)


@given(st.sampled_from(FORMATS), st.integers(0, 2**31))
def test_greedy_decaying_spectra(fmt, seed):
    rng = np.random.default_rng(seed)
    # log singular values of factors with well separated, decaying spectra
    noise = 1e-4
    # label gaps of at least 0.01 > 10 x noise, decaying like a log spectrum
    axes = [-np.cumsum(rng.uniform(0.01, 2.0, size=k)) for k in fmt]
    clean = forward(axes)
    inst = SetSumInstance(clean + rng.uniform(-noise, noise, size=len(clean)), TensorFormat(fmt))
    sol = solve_greedy(inst, noise=noise)
    assert sol is not None
    assert np.max(np.abs(forward(sol.axis_values) - np.sort(clean)[::-1])) <= 2 * len(fmt) * noise
    assert solve_greedy(SetSumInstance(clean, TensorFormat(fmt))) is not None


@given(st.sampled_from(FORMATS), st.integers(0, 2**31))
def test_greedy_never_lies(fmt, seed):
    rng = np.random.default_rng(seed)
    vals = rng.integers(0, 3, size=math.prod(fmt)).astype(float)
    inst = SetSumInstance(vals, TensorFormat(fmt))
    sol = solve_greedy(inst)
    if sol is not None:
        assert verify(inst, sol)
        assert brute_force_solvable(vals, fmt) if len(vals) <= 8 else True


def test_approx_examples():
    rng = np.random.default_rng(4)
    for fmt in FORMATS:
        axes = random_axes(fmt, rng)
        noisy = forward(axes) + rng.uniform(-1e-4, 1e-4, size=math.prod(fmt))
        inst = SetSumInstance(noisy, TensorFormat(fmt))
        sol = solve_approx(inst, Budget("max", 1e-3))
        assert sol is not None and np.max(np.abs(sol.residuals)) <= 1e-3
        assert solve_approx(inst, Budget("max", 1e-7)) is None
        assert solve_exact(inst) is None


def test_approx_other_budgets():
    rng = np.random.default_rng(5)
    axes = random_axes((3, 3), rng)
    vals = forward(axes) + rng.uniform(-1e-4, 1e-4, size=9)
    inst = SetSumInstance(vals, TensorFormat((3, 3)))
    assert solve_approx(inst, Budget("rms", 1e-3)) is not None
    assert solve_approx(inst, Budget("fraction", 1e-3, 0.8)) is not None
    vals[0] += 0.5
    out = solve_approx(SetSumInstance(vals, TensorFormat((3, 3))), Budget("fraction", 1e-2, 0.75))
    assert out is None or verify(SetSumInstance(vals, TensorFormat((3, 3))), out, Budget("fraction", 1e-2, 0.75))


@given(st.lists(st.floats(-3, 3), min_size=6, max_size=6))
def test_approx_infinite_budget(vals):
    inst = SetSumInstance(vals, TensorFormat((2, 3)))
    sol = solve_approx(inst, Budget("max", math.inf))
    assert sol is not None
    # the least-squares fill is the projection onto the sum space
    a = _incidence(inst.format)
    target = np.array([inst.values[sol.bijection[c]] for c in inst.format.cells()])
    assert np.allclose(a @ np.linalg.lstsq(a, target, rcond=None)[0] - target, sol.residuals, atol=1e-9)


@given(st.sampled_from(FORMATS), st.integers(0, 2**31), st.floats(1e-4, 1e-2))
def test_approx_monotone_in_budget(fmt, seed, eps):
    rng = np.random.default_rng(seed)
    vals = forward(random_axes(fmt, rng)) + rng.uniform(-3e-3, 3e-3, size=math.prod(fmt))
    inst = SetSumInstance(vals, TensorFormat(fmt))
    if solve_approx(inst, Budget("max", eps)) is not None:
        for bigger in (2 * eps, 10 * eps):
            assert solve_approx(inst, Budget("max", bigger)) is not None


def test_budget_validation():
    with pytest.raises(InvalidArgument):
        Budget("max", 0.0)
    with pytest.raises(InvalidArgument):
        Budget("median", 1.0)
    with pytest.raises(InvalidArgument):
        SetSumInstance([1, 2, 3], TensorFormat((2, 2)))


def test_gauge_normalize():
    sol = SetSumSolution((np.array([5.0, 7.0]), np.array([-5.0, -4.0])), {}, np.zeros(4))
    g = gauge_normalize(sol)
    assert np.allclose(g.axis_values[1], [0, 1]) and np.allclose(g.axis_values[0], [0, 2])
    assert np.array_equal(forward(gauge_normalize(g).axis_values), forward(g.axis_values))
    assert all(np.array_equal(a, b) for a, b in zip(gauge_normalize(g).axis_values, g.axis_values))


@given(st.sampled_from(FORMATS), st.integers(0, 2**31))
def test_gauge_preserves_forward(fmt, seed):
    rng = np.random.default_rng(seed)
    sol = SetSumSolution(tuple(random_axes(fmt, rng)), {}, np.zeros(math.prod(fmt)))
    g = gauge_normalize(sol)
    assert np.allclose(forward(g.axis_values), forward(sol.axis_values), atol=1e-12)
    assert all(np.min(a) == 0 for a in g.axis_values[1:])


def test_tie_canonicalization():
    inst = SetSumInstance([1, 1, 1, 1], TensorFormat((2, 2)))
    sol = solve_exact(inst)
    assert [sol.bijection[c] for c in sorted(sol.bijection)] == [0, 1, 2, 3]


def test_search_limit_and_heuristic():
    rng = np.random.default_rng(0)
    fmt = (2, 2, 2, 2)
    vals = rng.integers(0, 3, size=16).astype(float)
    inst = SetSumInstance(vals, TensorFormat(fmt))
    with pytest.raises(SearchLimitExceeded):
        solve_exact(inst, node_limit=1, brute_force_cap=4)
    out = solve_exact(inst, node_limit=1, brute_force_cap=4, heuristic=True)
    assert out is None or verify(inst, out)


def test_matrix_detection_and_rank_deficiency():
    rng = np.random.default_rng(1)
    a, b = rng.normal(size=(2, 2)), rng.normal(size=(3, 3))
    sol = detect_hidden_tensor_matrix(kron([a, b]), TensorFormat((2, 3)))
    assert sol is not None
    assert detect_hidden_tensor_matrix(rng.normal(size=(6, 6)), TensorFormat((2, 3))) is None
    with pytest.raises(RankDeficiency):
        log_singular_values(np.diag([1.0, 0.0]))


def test_unitary_detection():
    rng = np.random.default_rng(2)
    fmt = TensorFormat((2, 2))
    for _ in range(20):
        u = kron([haar_unitary(2, rng), haar_unitary(2, rng)])
        v = haar_unitary(4, rng).data
        assert detect_hidden_tensor_unitary(u, fmt).is_tensor
        verdict = detect_hidden_tensor_unitary(v @ u @ v.conj().T, fmt)
        assert verdict.is_tensor and verdict.max_error <= 1e-6
    assert detect_hidden_tensor_unitary(kron([haar_unitary(2, rng)] * 3), TensorFormat((2, 2, 2))).is_tensor
    assert detect_hidden_tensor_unitary(kron([haar_unitary(2, rng), haar_unitary(4, rng)]), TensorFormat((2, 4))).is_tensor


def test_unitary_detection_degenerate_factors():
    from recurlab.recurrence import cc_phase

    u = kron([cc_phase(0.4), cc_phase(1.1)])
    assert detect_hidden_tensor_unitary(u, TensorFormat((8, 8))).is_tensor


@given(st.integers(0, 2**31))
def test_unitary_detection_conjugation_invariant(seed):
    rng = np.random.default_rng(seed)
    u = haar_unitary(4, rng) if rng.random() < 0.5 else kron([haar_unitary(2, rng), haar_unitary(2, rng)])
    v = haar_unitary(4, rng).data
    fmt = TensorFormat((2, 2))
    assert detect_hidden_tensor_unitary(u, fmt).is_tensor == detect_hidden_tensor_unitary(v @ u @ v.conj().T, fmt).is_tensor

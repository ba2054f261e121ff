"""Acceptance criteria 1-9, one pass/fail line each.

Run with ``pytest tests/test_acceptance.py -s`` or ``python tests/test_acceptance.py``.
"""
import itertools
import math
import sys
import time

import numpy as np
import pytest

from recurlab import amplify, nusg, recurrence, sternfeld, tensorfactor
from recurlab.cli import main as cli_main, split_output
from recurlab.linalg import haar_unitary, kron
from recurlab.statevector import QubitState, RegisterLayout


@pytest.fixture
def record(request):
    def _record(n: int, ok: bool, detail: str):
        line = f"criterion {n}: {'PASS' if ok else 'FAIL'} {detail}"
        request.config.acceptance_lines.append(line)
        print(line)
        assert ok, line

    return _record


def test_criterion_1_closed_form_numbers(record):
    t0 = time.perf_counter()
    frac1 = recurrence.frac_period_from_thetas(np.full(24, 1.0))
    born = recurrence.bias_to_born(0.040569, 72)
    det = recurrence.detection_probability(born, 6000)
    dt = time.perf_counter() - t0
    ok = (
        abs(frac1 - 0.040569) <= 1e-6
        and abs(frac1 - (7 / 8) ** 24) <= 1e-15
        and abs(born - 1 / 607.59) <= 1e-5
        and det >= 0.999
        and dt < 1.0
    )
    record(1, ok, f"frac1={frac1:.9f} 1/born={1 / born:.3f} detection@6000={det:.6f} time={dt:.3f}s")


def test_criterion_2_desk_replica(record):
    thetas = recurrence.sample_thetas(3, 1)
    h = recurrence.build_hidden_tensor(thetas, conjugator="haar", conjugator_seed=2)
    est = recurrence.estimate_recurrence(h, 10, 200_000, 3)
    exact = recurrence.exact_recurrence_probability(h, 10)
    z = abs(est.probability - exact) / est.stderr
    bias = recurrence.haar_averaged_bias(thetas, 20, 4).mean()
    rel = abs(bias - (7 / 8) ** 3) / (7 / 8) ** 3
    ok = z <= 3 and rel <= 0.05
    record(2, ok, f"p_hat={est.probability:.5f} exact={exact:.5f} z={z:.2f} haar_bias={bias:.5f} rel_err={rel:.4f}")


def test_criterion_3_haar_baseline(record):
    vals = recurrence.haar_overlap_samples(10, 25, range(1, 41), 5)
    rms = float(np.sqrt(np.mean(vals**2)))
    rel = abs(rms - 2**-5) / 2**-5
    closed = {z: math.exp(-z * z) / 6 + math.exp(-4 * z * z / 3) / 2 for z in (0, 1, 2, 6)}
    ec_err = max(abs(recurrence.ec_approx(z) - v) for z, v in closed.items())
    ok = vals.size == 1000 and rel <= 0.05 and ec_err <= 1e-12
    record(3, ok, f"rms*2^5={rms * 32:.4f} samples={vals.size} ec_err={ec_err:.1e}")


def test_criterion_4_circuit_mixture_identity(record):
    rng = np.random.default_rng(6)
    worst = 0.0
    for _ in range(20):
        n, j = int(rng.integers(1, 5)), int(rng.integers(1, 5))
        u = haar_unitary(2**n, rng)
        state = recurrence.circuit_output(u, j)
        table = recurrence._hit_table(state, RegisterLayout(j, n))
        worst = max(worst, abs(table[:, 0].sum() - recurrence.exact_recurrence_probability(u, j)))
    record(4, worst <= 1e-10, f"max |circuit - mixture| = {worst:.1e} over 20 instances")


def _synthetic(sin_theta: float, n: int = 8, seed: int = 0):
    rng = np.random.default_rng(seed)
    target = QubitState.basis(n, 0)
    perp = rng.normal(size=2**n) + 1j * rng.normal(size=2**n)
    perp[0] = 0
    perp /= np.linalg.norm(perp)
    psi = sin_theta * np.exp(0.3j) * target.amplitudes + math.sqrt(1 - sin_theta**2) * perp
    return amplify.setup_from_states(QubitState(psi), target)


def test_criterion_5_amplification(record):
    worst = 0.0
    m_half = []
    for eps in (0.2, 0.1, 0.05, 0.025):
        setup = _synthetic(eps)
        state, m, reached = setup.psi, 0, None
        while m <= 64:
            ov = amplify.good_overlap(setup, state)
            worst = max(worst, abs(ov - abs(math.sin((2 * m + 1) * setup.theta))))
            if reached is None and ov**2 >= 0.5:
                reached = m
            state = amplify.grover_step(setup, state)
            m += 1
        m_half.append(reached)
    ratios = [b / a for a, b in zip(m_half, m_half[1:])]
    ok = worst <= 1e-9 and all(abs(r - 2) / 2 <= 0.15 for r in ratios)
    record(5, ok, f"overlap_err={worst:.1e} m_half={m_half} ratios={[round(r, 3) for r in ratios]}")


def test_criterion_6_tensor_factor(record):
    rng = np.random.default_rng(7)
    per_format = {}
    for fmt in [(2, 2), (2, 3), (3, 3), (2, 2, 2)]:
        good = 0
        for _ in range(100):
            axes = [rng.normal(size=k) for k in fmt]
            inst = tensorfactor.SetSumInstance(tensorfactor.forward(axes), tensorfactor.TensorFormat(fmt))
            sol = tensorfactor.solve_exact(inst)
            good += sol is not None and np.max(np.abs(tensorfactor.forward(sol.axis_values) - inst.values)) <= 1e-9
        per_format[fmt] = good
    unsolvable = tensorfactor.solve_exact(tensorfactor.SetSumInstance([0, 0, 0, 1], tensorfactor.TensorFormat((2, 2)))) is None
    fmt = tensorfactor.TensorFormat((2, 2))
    yes = 0
    for _ in range(50):
        v = haar_unitary(4, rng).data
        u = v @ kron([haar_unitary(2, rng), haar_unitary(2, rng)]) @ v.conj().T
        yes += tensorfactor.detect_hidden_tensor_unitary(u, fmt, 1e-6).is_tensor
    false = sum(tensorfactor.detect_hidden_tensor_unitary(haar_unitary(4, rng), fmt, 1e-6).is_tensor for _ in range(100))
    ok = all(g == 100 for g in per_format.values()) and unsolvable and yes == 50 and false == 0
    fmt_txt = " ".join(f"{'x'.join(map(str, f))}:{g}/100" for f, g in per_format.items())
    record(6, ok, f"{fmt_txt} 0001_unsolvable={unsolvable} conj_yes={yes}/50 haar_false={false}/100")


def test_criterion_7_sternfeld(record):
    square = sternfeld.SignedGridMeasure({(0, 0): 1.0, (0, 1): -1.0, (1, 0): -1.0, (1, 1): 1.0})
    square_ok = all(np.all(m == 0) for m in sternfeld.marginals(square)) and sternfeld.is_dsa_measure(square)
    bound_ok = equiv_ok = True
    for p, q in itertools.product(range(1, 5), repeat=2):
        r = sternfeld.check_wrc_bound(p, q)
        bound_ok &= r.max_wrc_size == p + q - 1
        grid = sternfeld.Grid((p, q))
        cells = grid.sites()
        for mask in range(1 << len(cells)):
            s = sternfeld.GridSubset(grid, tuple(c for b, c in enumerate(cells) if mask >> b & 1))
            if sternfeld.is_wrc(s) != sternfeld.is_wdsa(s, exact=False):
                equiv_ok = False
    rng = np.random.default_rng(8)
    grid = sternfeld.Grid((2, 3))
    wdsas = [
        sternfeld.GridSubset(grid, c)
        for size in range(1, 5)
        for c in itertools.combinations(grid.sites(), size)
        if sternfeld.is_wdsa(sternfeld.GridSubset(grid, c))
    ]
    worst = 0.0
    for t in range(20):
        s = wdsas[int(rng.integers(len(wdsas)))]
        r = len(s)
        m = (rng.normal(size=(6, r)) + 1j * rng.normal(size=(6, r))) @ rng.normal(size=(r, 6))
        worst = max(worst, sternfeld.partial_tensor_embed(m, s).residual)
    ok = square_ok and bound_ok and equiv_ok and worst <= 1e-9
    record(7, ok, f"square_measure={square_ok} max_wrc=p+q-1:{bound_ok} wrc<=>wdsa:{equiv_ok} embed_residual={worst:.1e}")


def test_criterion_8_nusg(record):
    sizes = [(1, 1), (2, 1), (1, 2), (2, 2), (3, 1), (2, 3), (3, 2), (3, 3), (4, 2), (2, 4)]
    phi = 0.5
    bound_ok, resid_ok, n_witness = True, True, 0
    for i, (nin, nanc) in enumerate(sizes):
        inst = nusg.random_verifier(nin, nanc, accept=bool(i % 2), seed=100 + i)
        eps_star, w = nusg.max_acceptance(inst)
        zc = nusg.build_z(inst, phi)
        phases = np.abs(np.angle(np.linalg.eigvals(zc.z.data)))
        # eps* is the largest acceptance; the gap bound is only informative when it is small
        bound_ok &= phases.min() >= nusg.case2_bound(phi, eps_star) - 1e-9
        eps = 1 - inst.acceptance(w)
        if eps <= 0.01:
            n_witness += 1
            params = nusg.NusgParams(phi, epsilon=max(eps, 0.0), enforce_margin=False)
            resid_ok &= nusg.residual_case1(inst, w, params, zc=zc) <= 2 * math.sqrt(max(eps, 0.0)) + 1e-12
    accept_gap = nusg.gap_around_one(nusg.build_z(nusg.accept_all_verifier(2, 1), phi).z)
    rng = np.random.default_rng(9)
    swap_ok = 0
    for t in range(50):
        a, b = QubitState.random(3, rng), QubitState.random(3, rng)
        est = nusg.swap_test_estimate(a, b, 5000, seed=t)
        swap_ok += abs(est.estimate - abs(np.vdot(a.amplitudes, b.amplitudes))) <= 3 * est.stderr
    ok = bound_ok and resid_ok and n_witness > 0 and accept_gap <= 1e-9 and swap_ok == 50
    record(8, ok, f"gap_bound={bound_ok} residual<=2sqrt(eps)={resid_ok} ({n_witness} witnesses) "
                  f"accept_all_gap={accept_gap:.1e} swap_within_3se={swap_ok}/50")


def test_criterion_9_determinism(record, tmp_path, monkeypatch):
    runs = [
        ["recur", "--factors", "1", "--number-qubits", "4", "--shots", "2000", "--instances", "2", "--seed", "3"],
        ["haar-baseline", "--qubits", "4", "--unitaries", "3", "--k-max", "5", "--seed", "3"],
        ["amplify", "--factors", "1", "--number-qubits", "3", "--shots", "500", "--seed", "3"],
        ["nusg", "swap", "--shots", "300", "--seed", "3"],
        ["tensor-factor", "--format", "2,2", "--values", "VALUES"],
    ]
    vals = tmp_path / "vals.txt"
    vals.write_text("\n".join(map(repr, np.ravel(tensorfactor.forward([[1.0, 0.2], [0.5, -0.3]])).tolist())) + "\n")
    same = 0
    for i, argv in enumerate(runs):
        argv = [str(vals) if a == "VALUES" else a for a in argv]
        outs = []
        for rep, epoch in enumerate(("0", "1700000000")):
            monkeypatch.setenv("SOURCE_DATE_EPOCH", epoch)
            path = tmp_path / f"run{i}_{rep}.out"
            assert cli_main([*argv, "--output", str(path)]) == 0
            outs.append(split_output(path.read_bytes().decode())[1].encode())
        same += outs[0] == outs[1] and len(outs[0]) > 0
    record(9, same == len(runs), f"{same}/{len(runs)} subcommand reruns byte-identical")


if __name__ == "__main__":
    sys.exit(pytest.main([__file__, "-s", "-q"]))

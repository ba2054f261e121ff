"""Iterations to reach detection probability 1/2 as the initial overlap halves.

For each sin(theta) the amplifier is run step by step on a synthetic state;
the count should roughly double with every halving.
"""
import argparse
import math
from dataclasses import dataclass, field

import numpy as np

from recurlab import amplify
from recurlab.statevector import QubitState


@dataclass
class ScanConfig:
    overlaps: list[float] = field(default_factory=lambda: [0.2, 0.1, 0.05, 0.025, 0.0125])
    qubits: int = 10
    threshold: float = 0.5
    seed: int = 0


def synthetic_setup(sin_theta: float, n: int, rng) -> amplify.AmplifierSetup:
    target = QubitState.basis(n, 0)
    perp = rng.normal(size=2**n) + 1j * rng.normal(size=2**n)
    perp[0] = 0
    perp /= np.linalg.norm(perp)
    psi = sin_theta * target.amplitudes + math.sqrt(1 - sin_theta**2) * perp
    return amplify.setup_from_states(QubitState(psi), target)


def iterations_to(setup: amplify.AmplifierSetup, threshold: float, max_m: int = 10_000) -> int | None:
    state = setup.psi
    for m in range(max_m + 1):
        if amplify.good_overlap(setup, state) ** 2 >= threshold:
            return m
        state = amplify.grover_step(setup, state)
    return None


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--overlaps", type=float, nargs="+", default=ScanConfig().overlaps)
    ap.add_argument("--qubits", type=int, default=ScanConfig.qubits)
    ap.add_argument("--threshold", type=float, default=ScanConfig.threshold)
    ap.add_argument("--seed", type=int, default=ScanConfig.seed)
    cfg = ScanConfig(**vars(ap.parse_args()))
    rng = np.random.default_rng(cfg.seed)
    prev = None
    print("sin_theta  m  predicted_m  ratio")
    for eps in cfg.overlaps:
        setup = synthetic_setup(eps, cfg.qubits, rng)
        m = iterations_to(setup, cfg.threshold)
        pred = amplify.first_iteration_reaching(setup.theta, cfg.threshold)
        ratio = "" if prev in (None, 0) or m is None else f"{m / prev:.3f}"
        print(f"{eps:<10g} {m} {pred} {ratio}")
        prev = m


if __name__ == "__main__":
    main()

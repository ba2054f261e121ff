"""Return amplitudes |<0|U^k|0>| for Haar-random U against the 2^{-n/2} scale."""
import argparse
from dataclasses import asdict, dataclass

import numpy as np

from recurlab import recurrence


@dataclass
class HaarConfig:
    qubits: tuple[int, ...] = (4, 6, 8, 10)
    unitaries: int = 25
    k_max: int = 40
    seed: int = 0


def run(cfg: HaarConfig) -> list[tuple[int, float, float]]:
    out = []
    for n, child in zip(cfg.qubits, np.random.SeedSequence(cfg.seed).spawn(len(cfg.qubits))):
        vals = recurrence.haar_overlap_samples(n, cfg.unitaries, range(1, cfg.k_max + 1), child)
        rms = float(np.sqrt(np.mean(vals**2)))
        out.append((n, rms, rms * 2 ** (n / 2)))
    return out


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    d = asdict(HaarConfig())
    ap.add_argument("--qubits", type=int, nargs="+", default=list(d["qubits"]))
    for k in ("unitaries", "k_max", "seed"):
        ap.add_argument(f"--{k.replace('_', '-')}", type=int, default=d[k])
    a = ap.parse_args()
    cfg = HaarConfig(tuple(a.qubits), a.unitaries, a.k_max, a.seed)
    print("n  rms  rms*2^(n/2)")
    for n, rms, scaled in run(cfg):
        print(f"{n:2d} {rms:.5f} {scaled:.4f}")


if __name__ == "__main__":
    main()

"""Command-line front end: ``recurlab <subcommand> [options]``.

Every output file starts with ``# ``-prefixed manifest lines (subcommand,
merged flags, master seed, version, timestamp); the data section that follows
depends only on the manifest's flags and seed, so reruns are byte-identical
below the header.
"""
from __future__ import annotations

import argparse
import csv
import hashlib
import io
import json
import math
import os
import sys
import time
from dataclasses import dataclass, field
from importlib.metadata import PackageNotFoundError, version

import numpy as np

from . import amplify, nusg, recurrence, sternfeld, tensorfactor
from .errors import RecurlabError
from .linalg import UnitaryMatrix, haar_unitary, matrix_from_json
from .statevector import QubitState

SUBCOMMANDS = ("recur", "haar-baseline", "amplify", "tensor-factor", "sternfeld", "nusg", "paper-numbers")
EMIT_FORMATS = ("csv", "json", "svg-histogram")


def tool_version() -> str:
    try:
        return version("recurlab")
    except PackageNotFoundError:
        return "0+unknown"


def component_seed(master: int, label: str) -> np.random.SeedSequence:
    """Independent stream per named component: adding a component never shifts the others."""
    digest = hashlib.sha256(label.encode()).digest()
    words = [int.from_bytes(digest[i:i + 4], "little") for i in range(0, 16, 4)]
    return np.random.SeedSequence([int(master) & 0xFFFFFFFF, *words])


# -- results and emission -------------------------------------------------------

@dataclass
class ResultTable:
    columns: list[str]
    rows: list[list] = field(default_factory=list)
    histogram: tuple[str, str] | None = None  # (bucket column, count column) for svg output

    def add(self, *cells):
        if len(cells) != len(self.columns):
            raise ValueError("row width does not match the schema")
        self.rows.append([_cell(c) for c in cells])


def _cell(c):
    if isinstance(c, (bool, np.bool_)):
        return bool(c)
    if isinstance(c, (int, np.integer)):
        return int(c)
    if isinstance(c, (float, np.floating)):
        c = float(c)
        return "nan" if math.isnan(c) else c
    return c if c is None else str(c)


def kv_table(obj: dict) -> ResultTable:
    t = ResultTable(["key", "value"])
    for k, v in obj.items():
        t.add(k, v if isinstance(v, (int, float, str, bool)) else json.dumps(v, sort_keys=True))
    return t


def _fmt(v) -> str:
    if isinstance(v, float):
        return repr(v)
    return "" if v is None else str(v)


def render_csv(table: ResultTable) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(table.columns)
    for r in table.rows:
        w.writerow([_fmt(c) for c in r])
    return buf.getvalue()


def render_json(payload) -> str:
    if isinstance(payload, ResultTable):
        payload = {"columns": payload.columns, "rows": payload.rows}
    return json.dumps(payload, indent=2, sort_keys=True) + "\n"


def render_svg(table: ResultTable, width: int = 640, height: int = 320) -> str:
    """Bar chart of one count column; bucket order is the table's row order."""
    if table.histogram is None:
        raise RecurlabError("this result has no histogram view")
    bcol, ccol = (table.columns.index(c) for c in table.histogram)
    buckets = [str(r[bcol]) for r in table.rows]
    counts = [int(r[ccol]) for r in table.rows]
    top = max(counts, default=0) or 1
    bw = width / max(1, len(counts))
    out = [
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{width}" height="{height + 20}" '
        f'data-total="{sum(counts)}">'
    ]
    for i, (b, c) in enumerate(zip(buckets, counts)):
        h = height * c / top
        out.append(
            f'  <rect x="{i * bw:.3f}" y="{height - h:.3f}" width="{bw * 0.9:.3f}" height="{h:.3f}" '
            f'data-bucket="{b}" data-count="{c}"/>'
        )
    out.append("</svg>")
    return "\n".join(out) + "\n"


def manifest_header(manifest: dict, comment: str = "#") -> str:
    text = json.dumps(manifest, sort_keys=True)
    if comment == "<!--":
        return f"<!-- manifest {text} -->\n"
    return f"{comment} manifest {text}\n"


def emit(payload, fmt: str, path: str | None, manifest: dict | None = None) -> str:
    """Write ``payload`` (ResultTable or dict) with a manifest header; returns the data section."""
    if fmt == "csv":
        data = render_csv(payload if isinstance(payload, ResultTable) else kv_table(payload))
        head = manifest_header(manifest) if manifest else ""
    elif fmt == "json":
        data = render_json(payload)
        head = manifest_header(manifest) if manifest else ""
    elif fmt == "svg-histogram":
        if not isinstance(payload, ResultTable):
            raise RecurlabError("svg-histogram needs tabular output")
        data = render_svg(payload)
        head = manifest_header(manifest, "<!--") if manifest else ""
    else:
        raise RecurlabError(f"unknown emit format {fmt!r}")
    if path in (None, "-"):
        sys.stdout.write(head + data)
    else:
        with open(path, "w", encoding="utf-8", newline="\n") as fh:
            fh.write(head + data)
    return data


def split_output(text: str) -> tuple[list[str], str]:
    """Separate manifest header lines from the data section of an output file."""
    lines = text.splitlines(keepends=True)
    n = 0
    while n < len(lines) and (lines[n].startswith("# manifest ") or lines[n].startswith("<!-- manifest ")):
        n += 1
    return lines[:n], "".join(lines[n:])


# -- input helpers -----------------------------------------------------------------

def _read_json(path: str):
    with open(path, encoding="utf-8") as fh:
        return json.load(fh)


def _read_values(path: str) -> np.ndarray:
    with open(path, encoding="utf-8") as fh:
        return np.array([float(t) for t in fh.read().split() if t.strip()])


def _read_sites(path: str) -> list[tuple[int, ...]]:
    out = []
    with open(path, encoding="utf-8") as fh:
        for line in fh:
            line = line.strip().strip("()")
            if line and not line.startswith("#"):
                out.append(tuple(int(t) for t in line.replace(",", " ").split()))
    return out


def _floats(text: str) -> list[float]:
    return [float(t) for t in text.split(",") if t.strip()]


# -- subcommands ------------------------------------------------------------------

def _theta_stream(a, i: int) -> np.random.SeedSequence:
    if a.theta_seed is not None:
        return np.random.SeedSequence([a.theta_seed, i])
    return component_seed(a.seed, f"recur/thetas/{i}")


def _conjugator(a, i: int):
    kind, _, seed = a.conjugator.partition(":")
    if kind == "identity":
        return "identity", None
    if kind != "haar":
        raise RecurlabError(f"unknown conjugator {a.conjugator!r}")
    if seed:
        return "haar", np.random.SeedSequence([int(seed), i])
    return "haar", component_seed(a.seed, f"recur/conjugator/{i}")


def cmd_recur(a) -> ResultTable:
    thetas = _floats(a.thetas) if a.thetas else None
    table = ResultTable(
        ["instance_id", "shots", "p_hat", "stderr", "p_exact", "frac1", "bias_born_prediction"]
    )
    hist = ResultTable(["k", "count", "hits"], histogram=("k", "count"))
    totals = None
    for i in range(a.instances):
        th = thetas if thetas else recurrence.sample_thetas(a.factors, _theta_stream(a, i))
        conj, cseed = _conjugator(a, i)
        h = recurrence.build_hidden_tensor(th, conjugator=conj, conjugator_seed=cseed)
        noise = recurrence.NoiseModel(a.noise, int(component_seed(a.seed, f"recur/noise/{i}").generate_state(1)[0])) if a.noise else None
        est = recurrence.estimate_recurrence(
            h, a.number_qubits, a.shots, component_seed(a.seed, f"recur/shots/{i}"), noise=noise, include_k0=not a.exclude_k0
        )
        bias = recurrence.unit_bias(recurrence.overlap_profile(h))
        frac1 = recurrence.frac_period_from_thetas(th)
        table.add(i, est.shots, est.probability, est.stderr, est.exact, frac1, recurrence.bias_to_born(bias, h.num_qubits))
        if a.emit == "svg-histogram":
            _, counts = recurrence.recurrence_counts(h, a.number_qubits, a.shots, component_seed(a.seed, f"recur/shots/{i}"), noise=noise)
            totals = counts if totals is None else totals + counts
    if a.emit == "svg-histogram":
        for k, (hit, miss) in enumerate(totals):
            hist.add(k, int(hit + miss), int(hit))
        return hist
    return table


def cmd_haar_baseline(a) -> ResultTable:
    ks = list(range(1, a.k_max + 1))
    vals = recurrence.haar_overlap_samples(a.qubits, a.unitaries, ks, component_seed(a.seed, "haar-baseline"))
    table = ResultTable(["unitary_id", "k", "overlap_abs"])
    for u in range(a.unitaries):
        for j, k in enumerate(ks):
            table.add(u, k, vals[u, j])
    rms = float(np.sqrt(np.mean(vals**2)))
    print(f"rms |<0|U^k|0>| = {rms:.6g}, 2^(-n/2) = {2 ** (-a.qubits / 2):.6g}", file=sys.stderr)
    return table


def cmd_amplify(a) -> ResultTable:
    if a.haar_qubits:
        u = haar_unitary(2**a.haar_qubits, np.random.default_rng(component_seed(a.seed, "amplify/unitary")))
    else:
        th = _floats(a.thetas) if a.thetas else recurrence.sample_thetas(a.factors, component_seed(a.seed, "amplify/thetas"))
        u = recurrence.build_hidden_tensor(th, conjugator="haar", conjugator_seed=component_seed(a.seed, "amplify/conjugator"))
    setup = amplify.recurrence_setup(u, a.number_qubits, kind=a.kind)
    table = ResultTable(["m", "shots", "p_hat", "stderr", "p_predicted", "theta"])
    ms = sorted(set(int(m) for m in _floats(a.iterations))) if a.iterations else [0] + amplify.guess_schedule(a.max_m)
    for m in ms:
        est = amplify.amplified_recurrence(u, a.number_qubits, m, a.shots, component_seed(a.seed, f"amplify/shots/{m}"), kind=a.kind)
        table.add(m, est.shots, est.probability, est.stderr, amplify.predicted_detection(setup.theta, m), setup.theta)
    return table


def cmd_tensor_factor(a) -> dict:
    fmt = tensorfactor.TensorFormat.parse(a.format)
    if a.mode == "phase":
        if not a.matrix:
            raise RecurlabError("phase mode needs --matrix")
        u = UnitaryMatrix(matrix_from_json(_read_json(a.matrix)), tol=1e-8)
        return tensorfactor.detect_hidden_tensor_unitary(u, fmt, a.tol).to_json()
    if a.matrix:
        values = tensorfactor.log_singular_values(matrix_from_json(_read_json(a.matrix)))
    elif a.values:
        values = _read_values(a.values)
    else:
        raise RecurlabError("need --values or --matrix")
    inst = tensorfactor.SetSumInstance(values, fmt)
    if a.mode == "exact":
        sol = tensorfactor.solve_exact(inst, heuristic=a.heuristic)
    elif a.mode == "greedy":
        sol = tensorfactor.solve_greedy(inst)
    elif a.mode.startswith("approx:"):
        eps = float(a.mode.split(":", 1)[1])
        sol = tensorfactor.solve_approx(inst, tensorfactor.Budget(a.budget, eps, a.fraction))
    else:
        raise RecurlabError(f"unknown mode {a.mode!r}")
    if sol is None:
        return {"verdict": "no-solution", "mode": a.mode}
    return {"verdict": "solved", "mode": a.mode, **sol.to_json()}


def cmd_sternfeld(a) -> dict:
    grid = sternfeld.Grid.parse(a.grid)
    if a.mode == "bound-scan":
        if grid.rank != 2:
            raise RecurlabError("bound-scan needs a 2-D grid")
        return sternfeld.check_wrc_bound(*grid.dims).to_json()
    sites = _read_sites(a.sites) if a.sites else grid.sites()
    s = sternfeld.GridSubset(grid, tuple(sites))
    if a.mode == "rc":
        rc = sternfeld.find_rook_circuit(s)
        return {"is_wrc": rc is None, "circuit": None if rc is None else [list(p) for p in rc.turning_points]}
    if a.mode == "wdsa":
        return sternfeld.wdsa_report(s).to_json()
    if a.mode == "labels":
        if not a.values:
            raise RecurlabError("labels mode needs --values")
        labels = sternfeld.solve_labels_on_subset(s, _read_values(a.values))
        return {"solvable": labels is not None, "labels": None if labels is None else [list(map(float, x)) for x in labels]}
    if a.mode == "embed":
        if not a.matrix:
            raise RecurlabError("embed mode needs --matrix")
        emb = sternfeld.partial_tensor_embed(matrix_from_json(_read_json(a.matrix)), s)
        return {
            "residual": emb.residual,
            "sites": [list(p) for p in emb.sites],
            "factor_singular_values": [list(map(float, np.abs(np.diag(f)))) for f in emb.factors],
        }
    raise RecurlabError(f"unknown mode {a.mode!r}")


def _verifier(a) -> nusg.VerifierInstance:
    if a.verifier:
        return nusg.VerifierInstance.from_json(_read_json(a.verifier))
    if a.builtin == "accept":
        return nusg.accept_all_verifier(a.input_qubits, a.ancilla_qubits)
    if a.builtin == "reject":
        return nusg.reject_all_verifier(a.input_qubits, a.ancilla_qubits)
    return nusg.random_verifier(a.input_qubits, a.ancilla_qubits, accept=False, seed=component_seed(a.seed, "nusg/verifier"))


def cmd_nusg(a) -> dict:
    inst = _verifier(a)
    params = nusg.NusgParams(a.phi, a.epsilon, a.delta0, enforce_margin=a.mode != "case1")
    if a.mode == "swap":
        rng = np.random.default_rng(component_seed(a.seed, "nusg/swap-states"))
        x, y = QubitState.random(inst.input_qubits, rng), QubitState.random(inst.input_qubits, rng)
        est = nusg.swap_test_estimate(x, y, a.shots, component_seed(a.seed, "nusg/swap-shots"))
        exact = abs(x.inner(y))
        return {"estimate": est.estimate, "stderr": est.stderr, "exact": exact,
                "satisfied": abs(est.estimate - exact) <= 3 * est.stderr}
    zc = nusg.build_z(inst, params)
    gap = nusg.gap_around_one(zc.z)
    if a.mode == "gap":
        return {"gap": gap, "decision": nusg.nusg_decide(zc.z, params.delta0)}
    eps_star, witness = nusg.max_acceptance(inst)
    if a.mode == "case1":
        res = nusg.residual_case1(inst, witness, params, zc=zc)
        bound = 2 * math.sqrt(params.epsilon)
        return {"gap": gap, "residual": res, "bound": bound, "satisfied": res <= bound + 1e-12, "acceptance": eps_star}
    if a.mode == "case2":
        bound = nusg.case2_bound(params.phi, eps_star)
        return {"gap": gap, "bound": bound, "eps_star": eps_star, "satisfied": gap >= bound - 1e-9}
    raise RecurlabError(f"unknown mode {a.mode!r}")


def cmd_paper_numbers(a) -> dict:
    frac1 = recurrence.frac_period_from_thetas(np.full(a.factors, a.theta))
    born = recurrence.bias_to_born(frac1, 3 * a.factors)
    return {
        "frac1": frac1,
        "frac1_closed_form": (7 / 8) ** a.factors,
        "born_probability": born,
        "one_over_born": 1 / born,
        "detection_at_runs": recurrence.detection_probability(born, a.runs),
        "runs": a.runs,
        "runs_for_0.999": recurrence.runs_for_confidence(born, 0.999),
    }


COMMANDS = {
    "recur": cmd_recur,
    "haar-baseline": cmd_haar_baseline,
    "amplify": cmd_amplify,
    "tensor-factor": cmd_tensor_factor,
    "sternfeld": cmd_sternfeld,
    "nusg": cmd_nusg,
    "paper-numbers": cmd_paper_numbers,
}
DEFAULT_EMIT = {"tensor-factor": "json", "sternfeld": "json", "nusg": "json", "paper-numbers": "json"}


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--seed", type=int, default=0, help="master seed")
    common.add_argument("--config", help="JSON file mirroring the flags; flags win")
    common.add_argument("--output", "--out", "-o", dest="output", help="output path (default stdout)")
    common.add_argument("--emit", choices=EMIT_FORMATS, help="output format")

    p = argparse.ArgumentParser(prog="recurlab", description="Recurrence, amplification and spectral-structure experiments.")
    sub = p.add_subparsers(dest="command", metavar="SUBCOMMAND")

    s = sub.add_parser("recur", parents=[common], help="recurrence detection on hidden-tensor unitaries")
    s.add_argument("--factors", type=int, default=3, help="number of CC-phase factors (n = 3 * factors)")
    s.add_argument("--thetas", help="comma-separated angles in radians (default: random)")
    s.add_argument("--theta-seed", type=int, help="seed for random angles (default: derived from --seed)")
    s.add_argument("--number-qubits", type=int, default=10)
    s.add_argument("--shots", type=int, default=100_000)
    s.add_argument("--instances", type=int, default=1)
    s.add_argument("--conjugator", default="haar", help="identity | haar | haar:SEED")
    s.add_argument("--noise-eps", "--noise", dest="noise", type=float, default=0.0, help="per-gate perturbation strength")
    s.add_argument("--exclude-k0", action="store_true")

    s = sub.add_parser("haar-baseline", parents=[common], help="|<0|U^k|0>| for Haar-random U")
    s.add_argument("--qubits", type=int, default=10)
    s.add_argument("--unitaries", type=int, default=50)
    s.add_argument("--k-max", type=int, default=20)

    s = sub.add_parser("amplify", parents=[common], help="amplitude-amplified recurrence detection")
    s.add_argument("--factors", type=int, default=2)
    s.add_argument("--thetas")
    s.add_argument("--haar-qubits", type=int, default=0, help="use a Haar unitary on this many qubits instead")
    s.add_argument("--number-qubits", type=int, default=4)
    s.add_argument("--iterations", help="comma-separated iteration counts (overrides the schedule)")
    s.add_argument("--auto-schedule", action="store_true", help="m = 0 plus 1, 2, 4, ... <= --max-m (the default)")
    s.add_argument("--max-m", type=int, default=8)
    s.add_argument("--shots", type=int, default=10_000)
    s.add_argument("--kind", choices=amplify.TARGET_KINDS, default="marked")

    s = sub.add_parser("tensor-factor", parents=[common], help="set-sum / hidden tensor format detection")
    s.add_argument("--values", help="file with one real per line")
    s.add_argument("--matrix", help="matrix JSON")
    s.add_argument("--format", required=True, help="k1,k2,...")
    s.add_argument("--mode", default="exact", help="exact | greedy | approx:EPS | phase")
    s.add_argument("--budget", choices=("max", "rms", "fraction"), default="max")
    s.add_argument("--fraction", type=float, default=1.0)
    s.add_argument("--tol", type=float, default=1e-6, help="phase tolerance")
    s.add_argument("--heuristic", action="store_true", help="fall back to greedy past the search limit")

    s = sub.add_parser("sternfeld", parents=[common], help="rook circuits, WDSA tests and embeddings")
    s.add_argument("mode", choices=("rc", "wdsa", "labels", "embed", "bound-scan"))
    s.add_argument("--grid", required=True, help="p,q[,r...]")
    s.add_argument("--sites", help="file with one site tuple per line (default: full grid)")
    s.add_argument("--values", help="file with one value per site")
    s.add_argument("--matrix", help="matrix JSON")

    s = sub.add_parser("nusg", parents=[common], help="spectral-gap instances from toy verifiers")
    s.add_argument("mode", choices=("gap", "case1", "case2", "swap"))
    s.add_argument("--verifier", help="verifier JSON {input_qubits, ancilla_qubits, verifier}")
    s.add_argument("--builtin", choices=("accept", "reject", "random"), default="random")
    s.add_argument("--input-qubits", type=int, default=2)
    s.add_argument("--ancilla-qubits", type=int, default=1)
    s.add_argument("--phi", type=float, default=0.3)
    s.add_argument("--epsilon", type=float, default=0.0)
    s.add_argument("--delta0", type=float, default=0.005)
    s.add_argument("--shots", type=int, default=10_000)

    s = sub.add_parser("paper-numbers", parents=[common], help="closed-form bias, Born probability and run counts")
    s.add_argument("--factors", type=int, default=24)
    s.add_argument("--theta", type=float, default=1.0, help="generic CC-phase angle (radians)")
    s.add_argument("--runs", type=int, default=6000)
    return p


def _config_path(argv: list[str]) -> str | None:
    pre = argparse.ArgumentParser(add_help=False)
    pre.add_argument("--config")
    return pre.parse_known_args(argv)[0].config


def parse(argv: list[str]) -> argparse.Namespace:
    parser = build_parser()
    subs = parser._subparsers._group_actions[0].choices
    cfg_path = _config_path(argv)
    command = next((t for t in argv if t in subs), None)
    if cfg_path and command:
        # config values become defaults, so explicit flags still win
        cfg = _read_json(cfg_path)
        sub = subs[command]
        actions = {a.dest: a for a in sub._actions}
        unknown = set(cfg) - set(actions)
        if unknown:
            sub.error(f"unknown config keys: {', '.join(sorted(unknown))}")
        for key in cfg:
            actions[key].required = False
        sub.set_defaults(**cfg)
    args = parser.parse_args(argv)
    if args.command is None:
        parser.print_usage(sys.stderr)
        raise SystemExit(2)
    if args.emit is None:
        args.emit = DEFAULT_EMIT.get(args.command, "csv")
    return args


def make_manifest(args: argparse.Namespace) -> dict:
    flags = {k: v for k, v in sorted(vars(args).items()) if k not in ("command", "output")}
    stamp = os.environ.get("SOURCE_DATE_EPOCH")
    ts = time.strftime("%Y-%m-%dT%H:%M:%SZ", time.gmtime(int(stamp) if stamp else None))
    return {"subcommand": args.command, "flags": flags, "seed": args.seed, "version": tool_version(), "timestamp": ts}


def main(argv: list[str] | None = None) -> int:
    argv = sys.argv[1:] if argv is None else list(argv)
    try:
        args = parse(argv)
    except SystemExit as e:
        return int(e.code) if isinstance(e.code, int) else 2
    except (OSError, ValueError) as e:
        print(f"recurlab: bad config: {e}", file=sys.stderr)
        return 2
    try:
        payload = COMMANDS[args.command](args)
        emit(payload, args.emit, args.output, make_manifest(args))
    except (RecurlabError, OSError, ValueError) as e:
        print(f"recurlab {args.command}: error: {e}", file=sys.stderr)
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())

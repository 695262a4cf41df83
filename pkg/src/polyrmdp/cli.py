"""``rmdp`` command line: gen, reduce, solve, verify, bench.

Exit codes for ``solve``: 0 ok, 2 invalid input, 3 timeout, 4 solver error.
``verify`` exits 0 when the threshold holds, 1 when it does not, 2 on bad input.
"""

from __future__ import annotations

import argparse
import csv
import io
import json
import math
import multiprocessing as mp
import sys
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

from . import benchgen
from .errors import BudgetExceeded, IterationLimitError, NumericalError, ValidationError
from .game_engine import PPE_TOL, rppi, verify_agent_policy
from .model import Algorithm, Objective, SolveReport, dumps_rmdp, loads_rmdp, policy_from_json, tbsg_to_dict
from .oracle import EnumerationBudget, brute_force_value
from .reduction import reduce
from .robust_baselines import rrvi, rvi, solve_discounted_rmdp

EXIT_OK, EXIT_FAIL, EXIT_INVALID, EXIT_TIMEOUT, EXIT_SOLVER = 0, 1, 2, 3, 4
CSV_COLUMNS = ["family", "n", "seed", "algorithm", "value", "wall_clock_seconds", "status"]
FAMILIES = ("contamination", "frozen-lake-unichain", "frozen-lake-multichain")


@dataclass
class RunConfig:
    timeout_seconds: float | None = 10800.0
    ppe_tol: float = PPE_TOL
    baseline_gap: float = 1e-3
    seeds: list = field(default_factory=lambda: [0])
    jobs: int = 1
    output: str | None = None

    def __post_init__(self):
        if self.ppe_tol <= 0 or self.baseline_gap <= 0:
            raise ValueError("tolerances must be positive")


@dataclass
class BenchRow:
    family: str
    n: int
    seed: int
    algorithm: str
    value: float | None
    wall_clock_seconds: float
    status: str  # Ok | Timeout | Inapplicable | Error

    def as_csv(self):
        return {
            "family": self.family,
            "n": self.n,
            "seed": self.seed,
            "algorithm": self.algorithm,
            "value": "" if self.value is None else repr(float(self.value)),
            "wall_clock_seconds": f"{self.wall_clock_seconds:.3f}",
            "status": self.status,
        }

    @classmethod
    def from_csv(cls, row):
        return cls(row["family"], int(row["n"]), int(row["seed"]), row["algorithm"],
                   None if row["value"] == "" else float(row["value"]),
                   float(row["wall_clock_seconds"]), row["status"])


class SolverTimeout(Exception):
    pass


# --- solver dispatch (runs in a child process when a timeout is set) ---------

def _solve(model_json, algorithm, params):
    m = loads_rmdp(model_json)
    start = time.perf_counter()
    if algorithm == "rppi":
        report = rppi(m, params.get("ppe_tol", PPE_TOL))
    elif algorithm in ("rvi", "rrvi"):
        ref = params.get("reference", "auto")
        if ref == "auto":
            ref = rppi(m, params.get("ppe_tol", PPE_TOL)).value_at_initial
            start = time.perf_counter()
        fn = rvi if algorithm == "rvi" else rrvi
        report = fn(m, float(ref), params.get("gap", 1e-3))
    elif algorithm == "brute":
        budget = int(params.get("budget", 10**7))
        res = brute_force_value(m, EnumerationBudget(budget, budget))
        report = SolveReport(res.maxmin, res.argmax_policy, Algorithm.BRUTE, initial=m.initial,
                             inner_iterations=res.evaluations,
                             extra={"mode": res.mode, "fell_back": res.fell_back, "minmax": res.minmax})
    elif algorithm == "vi":
        report = solve_discounted_rmdp(m, float(params["gamma"]), params.get("tol", 1e-9))
    else:
        raise ValueError(f"unknown algorithm {algorithm!r}")
    report.wall_clock_seconds = time.perf_counter() - start
    return report.to_dict(m)


def _guarded(model_json, algorithm, params):
    """Never raises: returns ``(status, payload)`` so results cross process
    boundaries without pickling custom exceptions."""
    try:
        return "ok", _solve(model_json, algorithm, params)
    except ValidationError as exc:
        return "invalid", str(exc)
    except (BudgetExceeded, IterationLimitError, NumericalError, ValueError) as exc:
        return "error", f"{type(exc).__name__}: {exc}"


def run_with_timeout(fn, args, timeout):
    if timeout is None or timeout <= 0:
        return fn(*args)
    with mp.get_context("fork").Pool(1) as pool:
        pending = pool.apply_async(fn, args)
        try:
            return pending.get(timeout)
        except mp.TimeoutError:
            raise SolverTimeout(f"no result within {timeout:g} s") from None


# --- subcommands -------------------------------------------------------------------

def _write(text, output):
    if output:
        Path(output).write_text(text)
    else:
        sys.stdout.write(text if text.endswith("\n") else text + "\n")


def _read_model(path):
    try:
        return loads_rmdp(Path(path).read_text())
    except OSError as exc:
        raise ValidationError([f"cannot read {path}: {exc}"]) from None


def parse_holes(text):
    if text is None:
        return None
    text = text.strip()
    if not text:
        return ()
    return tuple(tuple(int(x) for x in cell.split(",")) for cell in text.split(";"))


def parse_sizes(text):
    """``"2-4"``, ``"2..4"`` or ``"2,3,5"``."""
    for sep in ("..", "-"):
        if sep in text:
            lo, hi = text.split(sep)
            return list(range(int(lo), int(hi) + 1))
    return [int(x) for x in text.split(",") if x]


def cmd_gen(args):
    if args.family == "contamination":
        m = benchgen.gen_contamination(benchgen.ContaminationSpec(args.n, args.r, args.seed))
    elif args.family == "frozen-lake":
        m = benchgen.gen_frozen_lake(benchgen.FrozenLakeSpec(args.n, parse_holes(args.holes), args.d,
                                                             args.variant, args.seed))
    else:
        m = benchgen.gen_random_tiny(args.n, args.actions, args.vertices, args.seed)
    _write(dumps_rmdp(m), args.output)
    return EXIT_OK


def cmd_reduce(args):
    try:
        m = _read_model(args.input)
        g, _ = reduce(m, Objective(args.objective))
    except ValidationError as exc:
        print(f"invalid model: {exc}", file=sys.stderr)
        return EXIT_INVALID
    _write(json.dumps(tbsg_to_dict(g)), args.output)
    return EXIT_OK


def cmd_solve(args):
    try:
        model_json = Path(args.input).read_text()
    except OSError as exc:
        print(f"cannot read {args.input}: {exc}", file=sys.stderr)
        return EXIT_INVALID
    params = {"ppe_tol": args.ppe_tol, "gap": args.gap, "budget": args.budget, "gamma": args.gamma}
    if args.reference is not None:
        params["reference"] = args.reference if args.reference == "auto" else float(args.reference)
    if args.algorithm == "vi" and args.gamma is None:
        print("--gamma is required for --algorithm vi", file=sys.stderr)
        return EXIT_INVALID
    try:
        status, payload = run_with_timeout(_guarded, (model_json, args.algorithm, params), args.timeout)
    except SolverTimeout as exc:
        print(f"timeout: {exc}", file=sys.stderr)
        return EXIT_TIMEOUT
    if status == "invalid":
        print(f"invalid model: {payload}", file=sys.stderr)
        return EXIT_INVALID
    if status == "error":
        print(f"solver error: {payload}", file=sys.stderr)
        return EXIT_SOLVER
    _write(json.dumps(payload, indent=2), args.output)
    return EXIT_OK


def cmd_verify(args):
    try:
        m = _read_model(args.input)
        policy = policy_from_json(json.loads(Path(args.policy).read_text()), m)
    except (ValidationError, ValueError, OSError) as exc:
        print(f"invalid input: {exc}", file=sys.stderr)
        return EXIT_INVALID
    res = verify_agent_policy(m, policy, args.threshold, args.ppe_tol)
    print(repr(res.inf_value))
    return EXIT_OK if res.holds else EXIT_FAIL


def _instance(family, n, seed, args):
    if family == "contamination":
        return benchgen.gen_contamination(benchgen.ContaminationSpec(n, args.r, seed))
    variant = "unichain" if family.endswith("unichain") and not family.endswith("multichain") else "multichain"
    return benchgen.gen_frozen_lake(benchgen.FrozenLakeSpec(n, parse_holes(args.holes), args.d, variant, seed))


def applicable(family, algorithm):
    """RVI needs unichain models, RRVI unichain and aperiodic ones."""
    if algorithm == "rvi":
        return family != "frozen-lake-multichain"
    if algorithm == "rrvi":
        return family == "contamination"
    return True


def bench_instance(family, n, seed, algorithms, config: RunConfig, args):
    m = _instance(family, n, seed, args)
    model_json = dumps_rmdp(m)
    rows = []
    reference = None
    ordered = sorted(algorithms, key=lambda a: a != "rppi")
    for alg in ordered:
        if not applicable(family, alg):
            rows.append(BenchRow(family, n, seed, alg, None, 0.0, "Inapplicable"))
            continue
        params = {"ppe_tol": config.ppe_tol, "gap": config.baseline_gap}
        if alg in ("rvi", "rrvi"):
            params["reference"] = "auto" if reference is None else reference
        try:
            status, payload = run_with_timeout(_guarded, (model_json, alg, params), config.timeout_seconds)
        except SolverTimeout:
            rows.append(BenchRow(family, n, seed, alg, None, float(config.timeout_seconds), "Timeout"))
            continue
        if status != "ok":
            rows.append(BenchRow(family, n, seed, alg, None, 0.0, "Error"))
            continue
        value = payload["value_at_initial"]
        if alg == "rppi":
            reference = value
        rows.append(BenchRow(family, n, seed, alg, value, round(payload["wall_clock_seconds"], 3), "Ok"))
    return rows


def run_bench(family, sizes, algorithms, config: RunConfig, args):
    tasks = [(family, n, seed) for n in sizes for seed in config.seeds]
    if config.jobs > 1:
        with ThreadPoolExecutor(config.jobs) as ex:
            chunks = list(ex.map(lambda t: bench_instance(*t, algorithms, config, args), tasks))
    else:
        chunks = [bench_instance(*t, algorithms, config, args) for t in tasks]
    rows = [r for chunk in chunks for r in chunk]
    rows.sort(key=lambda r: (r.family, r.n, r.algorithm, r.seed))
    return rows


def rows_to_csv(rows):
    buf = io.StringIO()
    w = csv.DictWriter(buf, CSV_COLUMNS, lineterminator="\n")
    w.writeheader()
    for r in rows:
        w.writerow(r.as_csv())
    return buf.getvalue()


def csv_to_rows(text):
    return [BenchRow.from_csv(r) for r in csv.DictReader(io.StringIO(text))]


def cmd_bench(args):
    config = RunConfig(args.timeout, args.ppe_tol, args.gap,
                       [int(s) for s in args.seeds.split(",")] if args.seeds else [args.seed],
                       args.jobs, args.output)
    algorithms = [a.strip() for a in args.algorithms.split(",") if a.strip()]
    rows = run_bench(args.family, parse_sizes(args.sizes), algorithms, config, args)
    _write(rows_to_csv(rows), args.output)
    ok = any(r.status == "Ok" for r in rows)
    return EXIT_OK if ok else EXIT_SOLVER


# --- parser ------------------------------------------------------------------------------

def _timeout(text):
    v = float(text)
    return None if v <= 0 or math.isinf(v) else v


def build_parser():
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--seed", type=int, default=0)
    common.add_argument("--timeout", type=_timeout, default=10800.0, help="seconds; 0 disables")
    common.add_argument("--jobs", type=int, default=1)
    common.add_argument("--output", default=None)

    p = argparse.ArgumentParser(prog="rmdp", description=__doc__.splitlines()[0])
    sub = p.add_subparsers(dest="command", required=True)

    gen = sub.add_parser("gen", parents=[common], help="generate a benchmark RMDP")
    gen.add_argument("family", choices=["contamination", "frozen-lake", "tiny"])
    gen.add_argument("--n", type=int, required=True, help="states / grid side")
    gen.add_argument("--r", type=float, default=0.4, help="contamination level")
    gen.add_argument("--d", type=float, default=0.2, help="Frozen Lake perturbation")
    gen.add_argument("--variant", choices=["unichain", "multichain"], default="unichain")
    gen.add_argument("--holes", default=None, help='e.g. "1,1;2,0"')
    gen.add_argument("--actions", type=int, default=2, help="tiny: action count")
    gen.add_argument("--vertices", type=int, default=2, help="tiny: max vertices per pair")
    gen.set_defaults(func=cmd_gen)

    red = sub.add_parser("reduce", parents=[common], help="build the induced stochastic game")
    red.add_argument("--input", required=True)
    red.add_argument("--objective", choices=["avg", "disc"], default="avg")
    red.set_defaults(func=cmd_reduce)

    sol = sub.add_parser("solve", parents=[common], help="solve an RMDP")
    sol.add_argument("--input", required=True)
    sol.add_argument("--algorithm", choices=["rppi", "rvi", "rrvi", "brute", "vi"], default="rppi")
    sol.add_argument("--ppe-tol", type=float, default=PPE_TOL)
    sol.add_argument("--reference", default=None, help="float or 'auto' (run RPPI first)")
    sol.add_argument("--gap", type=float, default=1e-3)
    sol.add_argument("--budget", type=float, default=1e7)
    sol.add_argument("--gamma", type=float, default=None, help="discount for --algorithm vi")
    sol.set_defaults(func=cmd_solve)

    ver = sub.add_parser("verify", parents=[common], help="check Val(policy) >= threshold")
    ver.add_argument("--input", required=True)
    ver.add_argument("--policy", required=True)
    ver.add_argument("--threshold", type=float, required=True)
    ver.add_argument("--ppe-tol", type=float, default=PPE_TOL)
    ver.set_defaults(func=cmd_verify)

    ben = sub.add_parser("bench", parents=[common], help="runtime table as CSV")
    ben.add_argument("--family", choices=FAMILIES, required=True)
    ben.add_argument("--sizes", required=True, help='"2-4", "2..4" or "2,3,4"')
    ben.add_argument("--algorithms", default="rppi,rvi,rrvi")
    ben.add_argument("--seeds", default=None, help="comma-separated; overrides --seed")
    ben.add_argument("--r", type=float, default=0.4)
    ben.add_argument("--d", type=float, default=0.2)
    ben.add_argument("--holes", default=None)
    ben.add_argument("--ppe-tol", type=float, default=PPE_TOL)
    ben.add_argument("--gap", type=float, default=1e-3)
    ben.set_defaults(func=cmd_bench)
    return p


def main(argv=None):
    args = build_parser().parse_args(argv)
    return args.func(args)


if __name__ == "__main__":
    sys.exit(main())

"""Command line: solve | bench | verify | gen.

Reports are JSON with floats written to 17 significant digits and non-finite
values as null. Exit codes: 0 when a valid solution was returned, 1 on
width-cap, search-failure or a failed verify check, 2 on bad arguments or paths.
"""

from __future__ import annotations

import argparse
import json
import math
import sys
from importlib import resources
from pathlib import Path
from typing import List, Optional

import numpy as np

from .mwu import ALGOS, BACKENDS, SolverParams, solve_auto
from .problem import DISTRIBUTIONS, InstanceError, from_json, generate, write_instance

FAIL_STATUSES = ("width-cap", "search-failure")
EXAMPLE = "example"


class UsageError(Exception):
    pass


def dumps(obj) -> str:
    """JSON text with 17-significant-digit floats and null for nan/inf."""
    if obj is None or isinstance(obj, bool):
        return json.dumps(obj)
    if isinstance(obj, (int, np.integer)):
        return str(int(obj))
    if isinstance(obj, (float, np.floating)):
        v = float(obj)
        return format(v, ".17g") if math.isfinite(v) else "null"
    if isinstance(obj, str):
        return json.dumps(obj)
    if isinstance(obj, dict):
        return "{" + ", ".join(f"{json.dumps(str(k))}: {dumps(v)}" for k, v in obj.items()) + "}"
    if isinstance(obj, (list, tuple, np.ndarray)):
        return "[" + ", ".join(dumps(v) for v in obj) + "]"
    raise TypeError(f"cannot serialize {type(obj).__name__}")


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(message)


def _eps(text: str) -> float:
    v = float(text)
    if not 0 < v < 0.5:
        raise argparse.ArgumentTypeError("epsilon must lie in (0, 0.5)")
    return v


def _int_list(text: str) -> List[int]:
    return [int(t) for t in text.replace(",", " ").split()]


def build_parser() -> argparse.ArgumentParser:
    common = _Parser(add_help=False)
    common.add_argument("--algo", choices=ALGOS, default="monotone")
    common.add_argument("--backend", choices=BACKENDS, default="direct")
    common.add_argument("--eps", type=_eps, default=0.1)
    common.add_argument("--seed", type=int, default=0)
    common.add_argument("--input")
    common.add_argument("--output")
    common.add_argument("--trace")
    common.add_argument("--a0", type=float, default=0.75)
    common.add_argument("--a1", type=float, default=0.5)
    for name in ("eta", "alpha", "tau", "rho"):
        common.add_argument(f"--{name}", type=float)
    common.add_argument("--b", type=int)
    common.add_argument("--max-iters", type=int)
    common.add_argument("--exact-l3", action=argparse.BooleanOptionalAction, default=True)
    common.add_argument("--jl-psi", action="store_true")
    common.add_argument("--refresh-hh", action="store_true")
    common.add_argument("--fault-inject", action="store_true")

    p = _Parser(prog="linf-mwu", description="Width-reduced MWU solvers for l-infinity regression.")
    sub = p.add_subparsers(dest="subcommand", required=True, parser_class=_Parser)
    sub.add_parser("solve", parents=[common], help="solve an instance with the outer OPT search")
    b = sub.add_parser("bench", parents=[common], help="iteration scaling over an n-grid")
    b.add_argument("--ns", type=_int_list, default=[32, 64, 128, 256])
    b.add_argument("--seeds", type=int, default=10)
    b.add_argument("--algos", default="monotone,baseline-unaccelerated")
    v = sub.add_parser("verify", parents=[common], help="run the invariant suite")
    v.add_argument("--traces", type=int, default=90)
    g = sub.add_parser("gen", parents=[common], help="write a seeded random instance")
    g.add_argument("--n", type=int, default=40)
    g.add_argument("--d", type=int, default=3)
    g.add_argument("--distribution", choices=DISTRIBUTIONS, default="gaussian")
    g.add_argument("--kappa", type=float, default=1e6)
    return p


def solver_params(a) -> SolverParams:
    return SolverParams(epsilon=a.eps, seed=a.seed, eta=a.eta, alpha=a.alpha, tau=a.tau, rho=a.rho, b=a.b,
                        max_iters=a.max_iters, exact_l3=a.exact_l3, jl_psi=a.jl_psi, refresh_hh=a.refresh_hh,
                        a0=a.a0, a1=a.a1, fault_inject=a.fault_inject)


def _read_input(path: Optional[str]):
    if path is None:
        raise UsageError("--input is required")
    if path == EXAMPLE:
        text = resources.files("linf_mwu").joinpath("data/example_instance.json").read_text()
    else:
        p = Path(path)
        if not p.is_file():
            raise UsageError(f"input file not found: {path}")
        text = p.read_text()
    try:
        return from_json(json.loads(text))
    except json.JSONDecodeError as exc:
        raise UsageError(f"input is not valid JSON: {exc}") from exc


def _emit(text: str, path: Optional[str]) -> None:
    if path:
        Path(path).write_text(text + "\n")
    else:
        sys.stdout.write(text + "\n")


def run_solve(a) -> int:
    inst = _read_input(a.input)
    run = solve_auto(inst, solver_params(a), a.algo, a.backend)
    report = {
        "x": run.x_hat,
        "residual_inf": inst.residual_inf(run.x_hat),
        "iterations": {"primal": run.T_done, "width": run.K_done},
        "status": run.status,
        "op_counts": run.op_counts,
        "params_used": run.params_used,
    }
    if a.trace:
        run.trace.to_csv(a.trace)
    _emit(dumps(report), a.output)
    return 1 if run.status in FAIL_STATUSES else 0


def run_bench_cmd(a) -> int:
    from .bench import run_bench

    algos = [s for s in a.algos.split(",") if s]
    bad = [s for s in algos if s not in ALGOS]
    if bad:
        raise UsageError(f"unknown algorithms: {bad}")
    overrides = dict(eta=a.eta, alpha=a.alpha, tau=a.tau, rho=a.rho, b=a.b, a0=a.a0, a1=a.a1,
                     exact_l3=a.exact_l3, jl_psi=a.jl_psi, refresh_hh=a.refresh_hh)
    overrides = {k: v for k, v in overrides.items() if v is not None}
    kw = {} if a.max_iters is None else {"max_iters": a.max_iters}
    res = run_bench(ns=a.ns, seeds=range(a.seed, a.seed + a.seeds), algos=algos, eps=a.eps,
                    backend=a.backend, **kw, **overrides)
    if a.output:
        res.to_csv(a.output)
    sys.stdout.write(dumps({"slopes": res.slopes, "mean_iterations": res.means}) + "\n")
    return 0


def run_verify_cmd(a) -> int:
    from .verify import run_verify

    rep = run_verify(seed=a.seed, eps=a.eps, traces=a.traces, fault_inject=a.fault_inject)
    _emit(dumps(rep.to_json()), a.output)
    return 0 if rep.passed else 1


def run_gen(a) -> int:
    if a.output is None:
        raise UsageError("--output is required")
    inst = generate(a.seed, a.n, a.d, a.distribution, a.kappa)
    write_instance(inst, a.output)
    return 0


COMMANDS = {"solve": run_solve, "bench": run_bench_cmd, "verify": run_verify_cmd, "gen": run_gen}


def main(argv: Optional[List[str]] = None) -> int:
    try:
        a = build_parser().parse_args(argv)
        return COMMANDS[a.subcommand](a)
    except (UsageError, InstanceError, ValueError, OSError) as exc:
        sys.stdout.write(dumps({"error": type(exc).__name__, "message": str(exc)}) + "\n")
        return 2


if __name__ == "__main__":
    sys.exit(main())

"""Command-line experiment runner.

Subcommands: ``opt``, ``nlls``, ``lls solve``, ``sketch-bench`` and
``verify``.  A config file of ``key = value`` lines (``--config``) supplies
defaults; explicit flags override it.  Exit codes: 0 success, 1 failed
verification, 2 bad configuration or input, 3 numerical breakdown.
"""
from __future__ import annotations

import argparse
import configparser
import csv
import io
import math
import os
import sys
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Optional, Sequence

import numpy as np

from . import acceptance
from .arc import ArcEngine, ArcTruthSpec
from .errors import (BoundInfeasible, DegenerateSketch, InvalidConfig, InvalidInput, MaxIterations,
                     NumericalBreakdown, SingularTriangular, Stagnation, SubproblemFailure)
from .firstorder import FirstOrderEngine, SketchSpec, TrueIterationSpec
from .framework import StepControl, run
from .lls import LlsConfig, sketch_solve
from .mmio import read_matrix, read_vector, write_vector
from .nlls import data_profile, profile_csv, results_csv, solve_sgn
from .problems import problem_by_name
from .sketch import canonical_ensemble, gaussian_jl_delta, jl_failure_rate, make_sketch, non_uniformity, \
    s_max_bound, sampling_jl_delta
from . import rng as rngmod

EXIT_OK, EXIT_VERIFY, EXIT_CONFIG, EXIT_BREAKDOWN = 0, 1, 2, 3
CONFIG_ERRORS = (InvalidConfig, InvalidInput, BoundInfeasible, FileNotFoundError)
BREAKDOWNS = (NumericalBreakdown, DegenerateSketch, MaxIterations, Stagnation, SubproblemFailure, SingularTriangular)


@dataclass
class ExperimentConfig:
    """Resolved settings shared by ``opt`` and ``nlls``."""

    command: str
    problems: list[str]
    engine: str = "tr"
    ensemble: str = "gaussian"
    l: Optional[int] = None
    s: int = 1
    d: int = 8
    seeds: list[int] = field(default_factory=lambda: [0])
    budget: Optional[int] = None
    ctrl: StepControl = field(default_factory=StepControl)
    kappa_T: float = 0.0
    kappa_S: float = 0.0
    out: Path = Path(".")

    def __post_init__(self):
        if self.d < 1:
            raise InvalidConfig("d must be positive")
        if self.l is not None and self.l < 1:
            raise InvalidConfig("l must be positive")
        if self.s < 1:
            raise InvalidConfig("s must be positive")
        if not self.seeds:
            raise InvalidConfig("no seeds given")


def parse_seeds(text: str) -> list[int]:
    """'0..19' (inclusive), '3' or '0,2,5'; ranges and lists may be mixed."""
    out: list[int] = []
    try:
        for part in str(text).split(","):
            part = part.strip()
            if not part:
                continue
            if ".." in part:
                a, b = part.split("..")
                out.extend(range(int(a), int(b) + 1))
            else:
                out.append(int(part))
    except ValueError as exc:
        raise InvalidConfig(f"bad seed list {text!r}") from exc
    if not out or min(out) < 0:
        raise InvalidConfig(f"bad seed list {text!r}")
    return sorted(set(out))


def thread_cap() -> int:
    raw = os.environ.get("SUBSPACE_OPT_THREADS", "1")
    try:
        n = int(raw)
    except ValueError as exc:
        raise InvalidConfig(f"SUBSPACE_OPT_THREADS must be an integer, got {raw!r}") from exc
    return max(1, n)


def parallel_map(fn: Callable, items: Sequence) -> list:
    """Map in input order; each item carries its own seed so scheduling cannot change results."""
    n = min(thread_cap(), len(items))
    if n <= 1:
        return [fn(i) for i in items]
    with ThreadPoolExecutor(max_workers=n) as ex:
        return list(ex.map(fn, items))


def _write(path: Path, text: str) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", newline="") as fh:
        fh.write(text)


def _csv(header: Sequence[str], rows: Sequence[Sequence]) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    w.writerows(rows)
    return buf.getvalue()


def _num(v) -> str:
    if v is None:
        return ""
    if isinstance(v, (bool, np.bool_)):
        return str(int(v))
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    return repr(float(v))


# ------------------------------------------------------------------ parser

def _add_control(p: argparse.ArgumentParser) -> None:
    p.add_argument("--gamma1", type=float, default=0.5)
    p.add_argument("--c", type=int, default=1)
    p.add_argument("--theta", type=float, default=0.1)
    p.add_argument("--alpha-max", type=float, default=100.0)
    p.add_argument("--p", type=int, default=7)
    p.add_argument("--kappa-t", type=float, default=0.0)
    p.add_argument("--kappa-s", type=float, default=0.0)


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="subspace_opt", description="Random-subspace optimisation experiments.")
    ap.add_argument("--config", help="file of 'key = value' defaults; flags override it")
    sub = ap.add_subparsers(dest="command", required=True)

    p = sub.add_parser("opt", help="run a framework engine and write one trace CSV per seed")
    p.add_argument("--engine", choices=("qr", "tr", "arc"), default="tr")
    p.add_argument("--ensemble", default="gaussian")
    p.add_argument("--l", type=int, default=None)
    p.add_argument("--s", type=int, default=1)
    p.add_argument("--problem", default="rosenbrock")
    p.add_argument("--d", type=int, default=8)
    p.add_argument("--seeds", default="0")
    p.add_argument("--budget", type=int, default=1000)
    p.add_argument("--eps", type=float, default=1e-5)
    p.add_argument("--curvature", choices=("zero", "gauss_newton"), default="zero",
                   help="B_k for the quadratic-regularisation and trust-region engines")
    p.add_argument("--truth-variant", "--truth", dest="truth_variant", default="norm_only",
                   help="true-iteration variant for the cubic engine")
    p.add_argument("--arc-second-order", action="store_true",
                   help="check the second-order model condition on each cubic step")
    p.add_argument("--eps-s", type=float, default=0.5)
    p.add_argument("--s-max", type=float, default=math.inf)
    p.add_argument("--out", default="out")
    _add_control(p)

    p = sub.add_parser("nlls", help="R-SGN on a problem set; writes results.csv and profile.csv")
    p.add_argument("--problems", default="rosenbrock,broyden,powell,trigonometric")
    p.add_argument("--engine", choices=("qr", "tr"), default="tr")
    p.add_argument("--ensembles", default="gaussian")
    p.add_argument("--l", default=None, help="comma-separated sketch sizes (default d)")
    p.add_argument("--s", type=int, default=1)
    p.add_argument("--d", type=int, default=8)
    p.add_argument("--seeds", default="0")
    p.add_argument("--tau", type=float, default=0.1)
    p.add_argument("--budget-factor", type=float, default=50.0, help="Jacobian-action budget per unit of d")
    p.add_argument("--alpha-grid", default="0..50", help="data-profile grid 'a..b' (integers) or a list")
    p.add_argument("--timing", action="store_true", help="fill the wall_time column (not reproducible)")
    p.add_argument("--out", default="out")
    _add_control(p)

    p = sub.add_parser("lls", help="linear least squares")
    lsub = p.add_subparsers(dest="lls_command", required=True)
    q = lsub.add_parser("solve", help="sketch-preconditioned LSQR solve")
    q.add_argument("--matrix", required=True)
    q.add_argument("--rhs", default=None, help="defaults to the all-ones vector")
    q.add_argument("--ensemble", default=None)
    q.add_argument("--m", type=int, default=None)
    q.add_argument("--m-ratio", type=float, default=None)
    q.add_argument("--s", type=int, default=None)
    q.add_argument("--tau-a", type=float, default=1e-8)
    q.add_argument("--tau-r", type=float, default=1e-6)
    q.add_argument("--it-max", type=int, default=10_000)
    q.add_argument("--rcond", type=float, default=1e-12)
    q.add_argument("--perturb", type=float, default=1e-10)
    q.add_argument("--min-norm", action="store_true")
    q.add_argument("--seed", type=int, default=0)
    q.add_argument("--out-x", default="x.vec")
    q.add_argument("--out-diag", default="diagnostics.csv")

    p = sub.add_parser("sketch-bench", help="empirical JL failure rate and norm bound of a sketch ensemble")
    p.add_argument("--ensemble", default="gaussian")
    p.add_argument("--s", type=int, default=1)
    p.add_argument("--l", type=int, required=True)
    p.add_argument("--d", type=int, required=True)
    p.add_argument("--trials", type=int, default=10_000)
    p.add_argument("--eps-s", type=float, default=0.5)
    p.add_argument("--vector", choices=("random", "e1"), default="random")
    p.add_argument("--norm-trials", type=int, default=200, help="draws used for the max ||S||_2 column")
    p.add_argument("--delta2", type=float, default=math.exp(-2.0), help="Gaussian norm-bound failure level")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", default="sketch_bench.csv")

    p = sub.add_parser("verify", help="run acceptance checks and print a pass/fail table")
    p.add_argument("--suite", choices=tuple(acceptance.SUITES) + ("all",), default="all")
    p.add_argument("--scale", type=float, default=1.0, help="fraction of the full trial counts")
    p.add_argument("--seeds", type=int, default=None, help="seeds per engine and problem for the trace suite")
    return ap


BOOL_KEYS = {"timing", "min_norm", "arc_second_order"}


def read_config(path: str) -> dict[str, str]:
    """Parse ``key = value`` lines; a section header is optional and ignored."""
    text = Path(path).read_text()
    cp = configparser.ConfigParser(interpolation=None)
    try:
        cp.read_string("[__top__]\n" + text)
    except configparser.Error as exc:
        raise InvalidConfig(f"cannot parse config file {path}: {exc}") from exc
    out: dict[str, str] = {}
    for sec in cp.sections():
        for k, v in cp.items(sec):
            out[k.strip().replace("-", "_")] = v.strip()
    return out


def _subparser(parser: argparse.ArgumentParser, argv: list[str]) -> Optional[argparse.ArgumentParser]:
    """The (innermost) subcommand parser named in ``argv``, found without parsing."""
    cur = parser
    found = None
    for tok in argv:
        subs = [a for a in cur._actions if isinstance(a, argparse._SubParsersAction)]
        if subs and tok in subs[0].choices:
            cur = found = subs[0].choices[tok]
    return found


def apply_config(parser: argparse.ArgumentParser, argv: list[str], cfg: dict[str, str]) -> None:
    """Install config values as defaults of the selected subcommand."""
    sub = _subparser(parser, argv)
    if sub is None:
        return
    actions = {a.dest: a for a in sub._actions}
    defaults: dict[str, object] = {}
    for k, v in cfg.items():
        if k not in actions or k == "help":
            raise InvalidConfig(f"config key {k!r} is not an option of this command")
        if k in BOOL_KEYS:
            if v.lower() not in ("1", "0", "true", "false", "yes", "no", "on", "off"):
                raise InvalidConfig(f"config key {k!r} needs a boolean, got {v!r}")
            defaults[k] = v.lower() in ("1", "true", "yes", "on")
        else:
            defaults[k] = v
        actions[k].required = False
    # string defaults are converted by each option's type when the flag is absent
    sub.set_defaults(**defaults)


def _control(a) -> StepControl:
    return StepControl(gamma1=a.gamma1, c=a.c, theta=a.theta, alpha_max=a.alpha_max, p=a.p)


# ---------------------------------------------------------------- commands

def cmd_opt(a) -> int:
    ens = "identity" if a.ensemble == "identity" else canonical_ensemble(a.ensemble)
    cfg = ExperimentConfig("opt", [a.problem], a.engine, ens, a.l, a.s, a.d, parse_seeds(a.seeds), a.budget, _control(a), a.kappa_t, a.kappa_s, Path(a.out))
    l = cfg.l if cfg.l is not None else cfg.d
    spec = SketchSpec(cfg.ensemble, l, cfg.s)
    if cfg.engine == "arc":
        truth = ArcTruthSpec(a.truth_variant, a.eps_s, a.s_max, eps=a.eps, alpha_max=cfg.ctrl.alpha_max)
        engine = ArcEngine(spec, truth, kappa_T=cfg.kappa_T, kappa_S=cfg.kappa_S, second_order=a.arc_second_order)
    else:
        engine = FirstOrderEngine(cfg.engine, spec, TrueIterationSpec(a.eps_s, a.s_max), a.curvature, cfg.kappa_T)
    problem = problem_by_name(cfg.problems[0], cfg.d)

    def one(seed):
        # each worker gets its own problem instance so counters are not shared
        P = problem_by_name(cfg.problems[0], cfg.d)
        return seed, run(P, engine, cfg.ctrl, cfg.budget, a.eps, seed=seed)

    rows = []
    for seed, tr in sorted(parallel_map(one, cfg.seeds), key=lambda t: t[0]):
        _write(cfg.out / f"trace_{problem.name}_{cfg.engine}_seed{seed}.csv", tr.to_csv())
        rows.append([problem.name, seed, cfg.engine, cfg.ensemble, l, len(tr), _num(tr.n_eps), _num(tr.f_final),
                     _num(tr.grad_norm_final), tr.stop_reason])
    _write(cfg.out / "summary.csv", _csv(("problem", "seed", "engine", "ensemble", "l", "iterations", "n_eps",
                                          "f_final", "grad_norm_final", "stop_reason"), rows))
    print(f"wrote {len(rows)} trace CSVs to {cfg.out}")
    return EXIT_OK


def parse_grid(text: str) -> np.ndarray:
    text = str(text).strip()
    try:
        if ".." in text and "," not in text:
            a, b = text.split("..")
            return np.arange(int(a), int(b) + 1, dtype=float)
        return np.array([float(t) for t in text.split(",") if t.strip()], dtype=float)
    except ValueError as exc:
        raise InvalidConfig(f"bad grid {text!r}") from exc


def cmd_nlls(a) -> int:
    names = [n.strip() for n in a.problems.split(",") if n.strip()]
    ensembles = [canonical_ensemble(e) if e.strip() != "identity" else "identity"
                 for e in a.ensembles.split(",") if e.strip()]
    cfg = ExperimentConfig("nlls", names, a.engine, ensembles[0] if ensembles else "", None, a.s, a.d,
                           parse_seeds(a.seeds), None, _control(a), out=Path(a.out))
    if not names or not ensembles:
        raise InvalidConfig("need at least one problem and one ensemble")
    if not a.tau > 0 or not a.tau < 1:
        raise InvalidConfig("tau must lie in (0, 1)")
    ls = [None] if a.l is None else [int(t) for t in str(a.l).split(",") if t.strip()]
    grid = parse_grid(a.alpha_grid)
    jobs = [(p, e, l, seed) for p in names for e in ensembles for l in ls for seed in cfg.seeds]

    def one(job):
        pname, ens, l, seed = job
        P = problem_by_name(pname, cfg.d)
        budget = int(a.budget_factor * P.d)
        res = solve_sgn(P, cfg.engine, ens, l, cfg.ctrl, budget, a.tau, seed=seed, s=cfg.s)
        return job, P, res

    done = parallel_map(one, jobs)
    # target from the best value any run reached, or the known optimum if lower
    best: dict[str, float] = {}
    f0: dict[str, float] = {}
    dims: dict[str, int] = {}
    for (pname, *_), P, res in done:
        known = P.f_star if P.f_star is not None else math.inf
        best[pname] = min(best.get(pname, math.inf), known, min(f for _, f in res.history))
        f0[pname] = P.f(P.x0)
        dims[pname] = P.d
    rows, per_solver = [], {}
    for (pname, ens, l, seed), P, res in done:
        lval = P.d if (l is None or ens == "identity") else l
        solver = f"{ens}-l{lval}"
        N = res.actions_to_target(f0[pname], best[pname], a.tau)
        rows.append({"problem": pname, "solver": solver, "seed": seed, "l": lval, "N_p": N, "wall_time": res.wall_time})
        per_solver[(f"{pname}#{seed}", solver)] = N
    _write(cfg.out / "results.csv", results_csv(rows, timing=a.timing))
    pdims = {f"{p}#{seed}": dims[p] for p in names for seed in cfg.seeds}
    _write(cfg.out / "profile.csv", profile_csv(data_profile(per_solver, pdims, grid)))
    print(f"wrote results.csv ({len(rows)} runs) and profile.csv to {cfg.out}")
    return EXIT_OK


DIAG_COLUMNS = ("m", "ensemble", "rank", "eps_measured", "early_exit", "lsqr_iterations", "residual_sketch",
                "residual", "norm_W", "converged")


def _diag_csv(diag, converged: bool) -> str:
    return _csv(DIAG_COLUMNS, [[diag.m, diag.ensemble, diag.p, _num(diag.eps_measured), int(diag.early_exit),
                                diag.lsqr_iterations, _num(diag.residual_sketch), _num(diag.residual),
                                _num(diag.norm_W), int(converged)]])


def cmd_lls(a) -> int:
    A = read_matrix(a.matrix)
    n = A.shape[0]
    b = np.ones(n) if a.rhs is None else read_vector(a.rhs)
    cfg = LlsConfig(m=a.m, m_ratio=a.m_ratio, ensemble=None if a.ensemble is None else canonical_ensemble(a.ensemble),
                    s=a.s, tau_a=a.tau_a, tau_r=a.tau_r, it_max=a.it_max, rcond=a.rcond, perturb=a.perturb,
                    min_norm=a.min_norm)
    try:
        x, diag = sketch_solve(A, b, cfg, seed=a.seed)
    except (MaxIterations, Stagnation) as exc:
        # keep the best iterate on disk before reporting the breakdown
        if isinstance(exc.result, tuple):
            x, diag = exc.result
            write_vector(a.out_x, x)
            _write(Path(a.out_diag), _diag_csv(diag, False))
        raise
    write_vector(a.out_x, x)
    _write(Path(a.out_diag), _diag_csv(diag, True))
    print(f"residual {diag.residual:.6e} after {diag.lsqr_iterations} LSQR iterations (rank {diag.p})")
    return EXIT_OK


BENCH_COLUMNS = ("ensemble", "l", "d", "s", "eps_S", "trials", "vector", "failure_rate", "failure_bound",
                 "norm_trials", "max_norm", "norm_bound")


def cmd_sketch_bench(a) -> int:
    ens = canonical_ensemble(a.ensemble)
    if a.l < 1 or a.d < 1 or a.trials < 1 or a.norm_trials < 0:
        raise InvalidConfig("l, d and trials must be positive")
    if not (0.0 < a.eps_s < 1.0):
        raise InvalidConfig("eps_s must lie in (0, 1)")
    y = None
    if a.vector == "e1":
        y = np.zeros(a.d)
        y[0] = 1.0
    rate = jl_failure_rate(ens, a.l, a.d, a.eps_s, a.trials, seed=a.seed, s=a.s, y=y)
    if ens == "gaussian":
        bound = gaussian_jl_delta(a.eps_s, a.l)
    elif ens == "sampling":
        yy = y if y is not None else rngmod.stream(a.seed, 0).standard_normal(a.d)
        bound = sampling_jl_delta(a.eps_s, a.l, a.d, non_uniformity(yy))
    else:
        bound = None  # hashing-type bounds carry unspecified constants
    worst = 0.0
    for t in range(a.norm_trials):
        S = make_sketch(ens, a.l, a.d, s=a.s, seed=rngmod.derive_seed(a.seed, 3, t), pad=True)
        worst = max(worst, float(np.linalg.svd(S.dense(), compute_uv=False)[0]))
    try:
        nb = s_max_bound(ens, a.l, a.d, s=a.s, delta2=a.delta2)
    except InvalidConfig:
        nb = None
    row = [ens, a.l, a.d, a.s, _num(a.eps_s), a.trials, a.vector, _num(rate), _num(bound), a.norm_trials,
           _num(worst if a.norm_trials else None), _num(nb)]
    _write(Path(a.out), _csv(BENCH_COLUMNS, [row]))
    print(f"{ens} l={a.l} d={a.d}: failure rate {rate:.5f}" + ("" if bound is None else f" (bound {bound:.5f})"))
    return EXIT_OK


def cmd_verify(a) -> int:
    if not a.scale > 0:
        raise InvalidConfig("scale must be positive")
    if a.suite == "all":
        numbers = sorted(n for ns in acceptance.SUITES.values() for n in ns)
    else:
        numbers = list(acceptance.SUITES[a.suite])
    results = acceptance.run_criteria(numbers, scale=a.scale, seeds=a.seeds)
    for r in results:
        print(r.line(), flush=True)
    failed = [r.number for r in results if not r.passed]
    print(f"{len(results) - len(failed)}/{len(results)} passed" + (f"; failed {failed}" if failed else ""))
    return EXIT_OK if not failed else EXIT_VERIFY


COMMANDS = {"opt": cmd_opt, "nlls": cmd_nlls, "lls": cmd_lls, "sketch-bench": cmd_sketch_bench, "verify": cmd_verify}


def main(argv: Optional[Sequence[str]] = None) -> int:
    argv = list(sys.argv[1:] if argv is None else argv)
    parser = build_parser()
    try:
        pre = argparse.ArgumentParser(add_help=False)
        pre.add_argument("--config")
        known, _ = pre.parse_known_args(argv)
        if known.config:
            apply_config(parser, argv, read_config(known.config))
        args = parser.parse_args(argv)
        return COMMANDS[args.command](args)
    except SystemExit as exc:
        return int(exc.code) if isinstance(exc.code, int) else EXIT_CONFIG
    except CONFIG_ERRORS as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except BREAKDOWNS as exc:
        print(f"numerical breakdown: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_BREAKDOWN

"""Command line entry point.

Exit status: 0 success, 1 invalid input, 2 solver non-convergence,
3 a certified critical point failed the local-minimality checks (which
cannot happen for a correct l0 pipeline and so signals a bug).
"""
from __future__ import annotations

import argparse
import os
import sys
import time
from dataclasses import dataclass, field

import numpy as np

from . import __version__
from .certify import certify_critical, default_radius, verify_theorem_crlo
from .io import ProblemFormatError, dumps, load_matrix, load_point, load_problem
from .landscape import EnumerateOptions, enumerate_landscape, verify_local_by_sampling
from .problem import DimensionError, L0ScopeError, evaluate, support_of
from .rank import (
    EXAMPLE_A,
    EXAMPLE_B,
    RankProblem,
    certify_critical_rank,
    contrast_report,
    counterexample_decrease,
    numerical_rank,
    refute_local_min_rank,
    two_by_two_curve,
)
from .solvers import IHTOptions, PDOptions, solve_iht, solve_pd
from .subproblem import NotConvergedError, SolverOptions

EXIT_OK, EXIT_INVALID, EXIT_NOT_CONVERGED, EXIT_INCONSISTENT = 0, 1, 2, 3

ENV_PREFIX = "L0SCOPE_"

TOLERANCES = {
    # name: default (None means "chosen by the solver")
    "kkt_tol": None,
    "crit_tol": 1e-8,
    "zero_tol": 1e-9,
    "feas_tol": 1e-9,
    "dedup_tol": 1e-7,
    "sv_tol": 1e-10,
}

COMMANDS = ("enumerate", "solve", "certify", "verify-local", "rank-demo", "rank-certify")


@dataclass
class RunConfig:
    command: str
    kkt_tol: float | None = None
    crit_tol: float = 1e-8
    zero_tol: float = 1e-9
    feas_tol: float = 1e-9
    dedup_tol: float = 1e-7
    sv_tol: float = 1e-10
    max_iters: int = 20000
    rng_seed: int = 0
    output: str | None = None
    format: str = "table"
    extra: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.command not in COMMANDS:
            raise ValueError(f"unknown command {self.command!r}")
        for name in TOLERANCES:
            v = getattr(self, name)
            if v is not None and not v > 0:
                raise ValueError(f"{name} must be positive, got {v}")
        if self.format not in ("structured", "table", "both"):
            raise ValueError(f"unknown output format {self.format!r}")

    def solver_options(self) -> SolverOptions:
        return SolverOptions(kkt_tol=self.kkt_tol, feas_tol=self.feas_tol,
                             zero_tol=self.zero_tol, max_iters=self.max_iters)


def _env_float(name):
    raw = os.environ.get(ENV_PREFIX + name.upper())
    if raw is None:
        return None
    try:
        return float(raw)
    except ValueError:
        raise ValueError(f"environment variable {ENV_PREFIX + name.upper()}={raw!r} "
                         "is not a number") from None


class _Parser(argparse.ArgumentParser):
    # usage errors are invalid input (exit 1); 2 means non-convergence here
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_INVALID, f"{self.prog}: error: {message}\n")


def build_parser() -> argparse.ArgumentParser:
    common = _Parser(add_help=False)
    tol = common.add_argument_group("tolerances (env overrides: L0SCOPE_<NAME>)")
    for name in TOLERANCES:
        tol.add_argument("--" + name.replace("_", "-"), type=float, default=None)
    common.add_argument("--max-iters", type=int, default=None)
    common.add_argument("--seed", type=int, default=None, help="RNG seed (default 0)")
    common.add_argument("--format", choices=("structured", "table", "both"), default="table")
    common.add_argument("--output", "-o", default=None, help="write the report here")

    ap = _Parser(prog="l0scope", description=__doc__.splitlines()[0])
    ap.add_argument("--version", action="version", version=__version__)
    sub = ap.add_subparsers(dest="command", required=True)

    s = sub.add_parser("enumerate", parents=[common], help="list all local minimizers")
    s.add_argument("problem")
    s.add_argument("--max-M", dest="max_m", type=int, default=24)
    s.add_argument("--workers", type=int, default=1)

    s = sub.add_parser("solve", parents=[common], help="run IHT or penalty decomposition")
    s.add_argument("problem")
    s.add_argument("--method", choices=("iht", "pd"), default="iht")
    s.add_argument("--x0", default="zero", help="zero | random:SEED | JSON file")
    s.add_argument("--eta", type=float, default=None)
    s.add_argument("--rho0", type=float, default=1.0)
    s.add_argument("--sigma", type=float, default=4.0)
    s.add_argument("--trace", action="store_true", help="include per-iteration rows")

    for name, helptext in (("certify", "criticality certificate for a point"),
                           ("verify-local", "try to refute local minimality by sampling")):
        s = sub.add_parser(name, parents=[common], help=helptext)
        s.add_argument("problem")
        s.add_argument("--point", required=True, help="zero | random:SEED | JSON file")
        s.add_argument("--radius", type=float, default=None)
        s.add_argument("--samples", type=int, default=1000)

    s = sub.add_parser("rank-demo", parents=[common],
                       help="criticality without local minimality for rank")
    s.add_argument("--eps", type=float, nargs="+", default=[0.1, 0.05, 0.01])

    s = sub.add_parser("rank-certify", parents=[common], help="rank criticality and refutation")
    s.add_argument("B")
    s.add_argument("A")
    return ap


def config_from_args(args) -> RunConfig:
    values = {}
    for name, default in TOLERANCES.items():
        v = getattr(args, name)
        if v is None:
            v = _env_float(name)
        values[name] = default if v is None else v
    seed = args.seed
    if seed is None:
        env = os.environ.get(ENV_PREFIX + "SEED")
        seed = int(env) if env is not None else 0
    max_iters = args.max_iters if args.max_iters is not None else 20000
    extra = {k: v for k, v in vars(args).items()
             if k not in TOLERANCES and k not in ("command", "seed", "format", "output",
                                                   "max_iters")}
    return RunConfig(args.command, rng_seed=seed, output=args.output, format=args.format,
                     max_iters=max_iters, extra=extra, **values)


# --- table rendering -------------------------------------------------------

def _vec(x) -> str:
    return "(" + ", ".join(f"{v:.10g}" for v in np.asarray(x, dtype=float)) + ")"


def _kv(rows) -> str:
    w = max(len(k) for k, _ in rows)
    return "\n".join(f"{k.ljust(w)}  {v}" for k, v in rows)


def _certificate_table(cert) -> str:
    lam = ", ".join(f"{i}: {v:.10g}" for i, v in zip(cert.constrained_rows, cert.lam))
    return _kv([
        ("x", _vec(cert.x)),
        ("support", "{" + ", ".join(map(str, cert.omega_bar.indices)) + "}"),
        ("lambda", "{" + lam + "}"),
        ("nu", _vec(cert.nu)),
        ("residual", f"{cert.residual:.3e} (tolerance {cert.tolerance:.3e})"),
        ("verdict", cert.verdict),
    ])


def _theorem_table(check) -> str:
    s = check.sampling
    return _kv([
        ("Q_support status", check.subproblem.status),
        ("f1(x) - f1*", f"{check.f1_gap:.3e}"),
        ("solves Q_support", str(check.solves_subproblem)),
        ("sampling", f"{'refuted' if s.refuted else 'not refuted'} "
                     f"({s.samples} samples, radius {s.radius:.3g})"),
        ("consistent", str(check.consistent)),
    ])


# --- commands --------------------------------------------------------------

def _cmd_enumerate(cfg: RunConfig):
    p = load_problem(cfg.extra["problem"])
    opts = EnumerateOptions(cfg.dedup_tol, cfg.extra["max_m"], cfg.extra["workers"],
                            cfg.solver_options())
    report = enumerate_landscape(p, opts)
    return report.to_dict(), report.table(), EXIT_OK


def _cmd_solve(cfg: RunConfig):
    p = load_problem(cfg.extra["problem"])
    x0 = load_point(cfg.extra["x0"], p.n, "x0")
    sopts = cfg.solver_options()
    if cfg.extra["method"] == "iht":
        trace = solve_iht(p, x0, IHTOptions(eta=cfg.extra["eta"], zero_tol=cfg.zero_tol,
                                            max_iters=max(cfg.max_iters, 1)))
    else:
        trace = solve_pd(p, x0, PDOptions(rho0=cfg.extra["rho0"], sigma=cfg.extra["sigma"],
                                          zero_tol=cfg.zero_tol, subproblem=sopts))
    out = trace.to_dict(p if cfg.extra["trace"] else None)
    x = trace.final
    out["f"] = evaluate(p, x, cfg.zero_tol, cfg.feas_tol)
    out["support"] = list(support_of(p, x, cfg.zero_tol).indices)
    rows = [("method", trace.method), ("final", _vec(x)), ("f", f"{out['f']:.12g}"),
            ("support", str(out["support"])), ("converged", str(trace.converged)),
            ("stop reason", trace.stop_reason), ("iterations", str(out["iterations"]))]
    text = _kv(rows)
    status = EXIT_OK
    if trace.converged:
        cert = certify_critical(p, x, cfg.crit_tol, zero_tol=cfg.zero_tol,
                                feas_tol=cfg.feas_tol)
        out["certificate"] = cert.to_dict()
        text += "\n\ncertificate\n" + _certificate_table(cert)
        if cert.critical:
            check = verify_theorem_crlo(p, x, cert, rng_seed=cfg.rng_seed, opts=sopts)
            out["theorem_check"] = check.to_dict()
            text += "\n\nlocal minimality\n" + _theorem_table(check)
            if not check.consistent:
                status = EXIT_INCONSISTENT
    else:
        status = EXIT_NOT_CONVERGED
    if cfg.extra["trace"]:
        text += "\n\n" + "\n".join(f"{k:6d}  {f:.12g}  {s}" for k, f, s in trace.rows(p))
    return out, text, status


def _cmd_certify(cfg: RunConfig):
    p = load_problem(cfg.extra["problem"])
    x = load_point(cfg.extra["point"], p.n)
    cert = certify_critical(p, x, cfg.crit_tol, zero_tol=cfg.zero_tol, feas_tol=cfg.feas_tol)
    out = {"certificate": cert.to_dict(), "f": evaluate(p, x, cfg.zero_tol, cfg.feas_tol)}
    text = _certificate_table(cert)
    status = EXIT_OK
    if cert.critical:
        check = verify_theorem_crlo(p, x, cert, radius=cfg.extra["radius"],
                                    samples=cfg.extra["samples"], rng_seed=cfg.rng_seed,
                                    opts=cfg.solver_options())
        out["theorem_check"] = check.to_dict()
        text += "\n\nlocal minimality\n" + _theorem_table(check)
        if not check.consistent:
            status = EXIT_INCONSISTENT
    return out, text, status


def _cmd_verify_local(cfg: RunConfig):
    p = load_problem(cfg.extra["problem"])
    x = load_point(cfg.extra["point"], p.n)
    radius = cfg.extra["radius"]
    if radius is None:
        radius = default_radius(p, x, zero_tol=cfg.zero_tol)
    v = verify_local_by_sampling(p, x, radius, cfg.extra["samples"], cfg.rng_seed,
                                 cfg.zero_tol, cfg.feas_tol)
    rows = [("x", _vec(x)), ("f(x)", f"{v.f_ref:.12g}"), ("radius", f"{v.radius:.6g}"),
            ("samples", str(v.samples)), ("verdict", "refuted" if v.refuted else "not refuted")]
    if v.refuted:
        rows += [("witness", _vec(v.witness)), ("f(witness)", f"{v.witness_value:.12g}")]
    return v.to_dict(), _kv(rows), EXIT_OK


def rank_demo(eps_values=(0.1, 0.05, 0.01), sv_tol: float = 1e-10, seed: int = 0) -> dict:
    """The 2x2 counterexample end to end."""
    t0 = time.perf_counter()
    rp = RankProblem(EXAMPLE_B, sv_tol)
    analysis = certify_critical_rank(rp, EXAMPLE_A)
    base = rp.f1(EXAMPLE_A)
    curve = []
    for eps in eps_values:
        Ae = two_by_two_curve(EXAMPLE_A, eps)
        direct = rp.f1(Ae) - base
        formula = float(counterexample_decrease(eps))
        curve.append({
            "eps": float(eps),
            "A_eps": Ae.tolist(),
            "det": float(np.linalg.det(Ae)),
            "rank": numerical_rank(Ae, sv_tol),
            "decrease_direct": direct,
            "decrease_formula": formula,
            "abs_diff": abs(direct - formula),
            "negative": bool(direct < 0),
        })
    refutation = refute_local_min_rank(rp, EXAMPLE_A, analysis, seed=seed)
    contrast = contrast_report(rp, EXAMPLE_A, seed=seed)
    return {
        "B": EXAMPLE_B.tolist(),
        "A": EXAMPLE_A.tolist(),
        "critical": analysis.critical,
        "criticality_residual": analysis.criticality_residual,
        "neg_gradient": (-analysis.gradient).tolist(),
        "rank": analysis.r,
        "curve": curve,
        "refutation": None if refutation is None else refutation.to_dict(),
        "local_minimizer": refutation is None,
        "vector_analogue": contrast["vector_analogue"],
        "runtime_s": time.perf_counter() - t0,
    }


def _cmd_rank_demo(cfg: RunConfig):
    out = rank_demo(cfg.extra["eps"], cfg.sv_tol, cfg.rng_seed)
    lines = [
        "B = [[2, 1], [1, 2]],  A = [[0.5, -0.5], [-0.5, 0.5]],  F(A) = ||A - B||_F^2 + rank A",
        _kv([("rank A", str(out["rank"])),
             ("-grad F1(A)", str(out["neg_gradient"])),
             ("residual", f"{out['criticality_residual']:.3e}"),
             ("critical", str(out["critical"]))]),
        "",
        "rank-one curve A_eps = [[0.5 + eps, -0.5], [-0.5, 0.25 / (0.5 + eps)]]",
        f"{'eps':>8}  {'rank':>4}  {'F1(A_eps) - F1(A)':>22}  {'closed form':>22}  {'|diff|':>9}",
    ]
    for row in out["curve"]:
        lines.append(f"{row['eps']:>8g}  {row['rank']:>4d}  {row['decrease_direct']:>22.15g}"
                     f"  {row['decrease_formula']:>22.15g}  {row['abs_diff']:>9.2e}")
    vec = out["vector_analogue"]
    lines += ["",
              f"local minimizer of F: {out['local_minimizer']}",
              f"diagonal l0 analogue at {vec['point']}: "
              f"{vec['certificate']['verdict']}, local minimizer: "
              f"{vec.get('critical_implies_local_min')}"]
    # runtime varies between runs; keep structured output byte-stable
    timing = out.pop("runtime_s")
    lines.append(f"runtime {timing:.3f} s")
    return out, "\n".join(lines), EXIT_OK


def _cmd_rank_certify(cfg: RunConfig):
    rp = RankProblem(load_matrix(cfg.extra["B"]), cfg.sv_tol)
    A = load_matrix(cfg.extra["A"])
    if A.shape != rp.shape:
        raise ProblemFormatError(f"A has shape {A.shape} but B has shape {rp.shape}",
                                 cfg.extra["A"], "matrix")
    out = contrast_report(rp, A, seed=cfg.rng_seed)
    rk = out["rank"]
    rows = [("rank", str(rk["rank"])), ("F(A)", f"{out['F']:.12g}"),
            ("residual", f"{rk['criticality_residual']:.3e}"),
            ("critical", str(out["critical"])), ("refuted", str(out["refuted"]))]
    if rk["refutation"]:
        rf = rk["refutation"]
        rows += [("curve", rf["kind"]), ("eps", f"{rf['eps']:g}"),
                 ("F decrease", f"{rf['decrease']:.6g}")]
    if out["note"]:
        rows.append(("note", out["note"]))
    return out, _kv(rows), EXIT_OK


DISPATCH = {
    "enumerate": _cmd_enumerate,
    "solve": _cmd_solve,
    "certify": _cmd_certify,
    "verify-local": _cmd_verify_local,
    "rank-demo": _cmd_rank_demo,
    "rank-certify": _cmd_rank_certify,
}


def run(cfg: RunConfig, stdout=None, stderr=None) -> int:
    stdout = stdout or sys.stdout
    stderr = stderr or sys.stderr
    try:
        out, text, status = DISPATCH[cfg.command](cfg)
    except ProblemFormatError as exc:
        stderr.write(dumps(exc.to_dict()))
        return EXIT_INVALID
    except NotConvergedError as exc:
        stderr.write(dumps({"error": "not-converged", "message": str(exc),
                            "residual": exc.residual,
                            "best": None if exc.best is None else np.asarray(exc.best)}))
        return EXIT_NOT_CONVERGED
    except (DimensionError, ValueError, L0ScopeError) as exc:
        stderr.write(dumps({"error": "validation", "message": str(exc)}))
        return EXIT_INVALID

    if cfg.format == "structured":
        rendered = dumps(out)
    elif cfg.format == "table":
        rendered = text + "\n"
    else:
        rendered = text + "\n\n" + dumps(out)
    if cfg.output:
        with open(cfg.output, "w") as fh:
            fh.write(rendered)
    else:
        stdout.write(rendered)
    return status


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        cfg = config_from_args(args)
    except ValueError as exc:
        sys.stderr.write(dumps({"error": "validation", "message": str(exc)}))
        return EXIT_INVALID
    return run(cfg)


if __name__ == "__main__":
    sys.exit(main())

"""Enumeration of all local minimizers.

Every local minimizer of f solves one of the convex subproblems Q_omega and,
conversely, every solution of some Q_omega is a local minimizer.  Solving all
2^M subproblems therefore lists the local minimizers exactly (one
representative per subproblem when its solution set is not a singleton).
"""
from __future__ import annotations

import logging
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from .problem import (
    FEAS_TOL,
    ZERO_TOL,
    L0ScopeError,
    ProblemInstance,
    Support,
    evaluate,
    support_of,
    supports,
)
from .subproblem import (
    INFEASIBLE,
    SOLVED,
    UNBOUNDED,
    NotConvergedError,
    SolverOptions,
    nullspace_of,
    solve_subproblem,
)

__all__ = [
    "MAX_M",
    "TooManySubproblemsError",
    "EnumerateOptions",
    "LandscapeEntry",
    "LandscapeReport",
    "SamplingVerdict",
    "enumerate_landscape",
    "verify_local_by_sampling",
    "sample_feasible_ball",
]

log = logging.getLogger(__name__)

MAX_M = 24


class TooManySubproblemsError(L0ScopeError, ValueError):
    pass


@dataclass(frozen=True)
class EnumerateOptions:
    dedup_tol: float = 1e-7
    max_m: int = MAX_M
    workers: int = 1
    solver: SolverOptions = field(default_factory=SolverOptions)


@dataclass(frozen=True)
class LandscapeEntry:
    x: np.ndarray
    omega_solved: Support
    supp_actual: Support
    f_value: float

    def to_dict(self) -> dict:
        return {
            "x": [float(v) for v in self.x],
            "omega_solved": list(self.omega_solved.indices),
            "supp_actual": list(self.supp_actual.indices),
            "f_value": float(self.f_value),
        }

    @classmethod
    def from_dict(cls, d: dict, m: int) -> "LandscapeEntry":
        return cls(np.asarray(d["x"], dtype=float), Support(tuple(d["omega_solved"]), m),
                   Support(tuple(d["supp_actual"]), m), float(d["f_value"]))

    def __eq__(self, other):
        if not isinstance(other, LandscapeEntry):
            return NotImplemented
        return (np.array_equal(self.x, other.x)
                and self.omega_solved == other.omega_solved
                and self.supp_actual == other.supp_actual
                and self.f_value == other.f_value)

    __hash__ = None


@dataclass
class LandscapeReport:
    n: int
    m: int
    minimizers: list
    global_min: int | None
    num_subproblems_solved: int
    dedup_tol: float
    status_counts: dict = field(default_factory=dict)
    warnings: list = field(default_factory=list)

    @property
    def best(self) -> LandscapeEntry | None:
        return None if self.global_min is None else self.minimizers[self.global_min]

    def to_dict(self) -> dict:
        return {
            "n": self.n,
            "m": self.m,
            "minimizers": [e.to_dict() for e in self.minimizers],
            "global_min": self.global_min,
            "num_subproblems_solved": self.num_subproblems_solved,
            "dedup_tol": self.dedup_tol,
            "status_counts": dict(self.status_counts),
            "warnings": list(self.warnings),
        }

    @classmethod
    def from_dict(cls, d: dict) -> "LandscapeReport":
        m = int(d["m"])
        return cls(
            n=int(d["n"]),
            m=m,
            minimizers=[LandscapeEntry.from_dict(e, m) for e in d["minimizers"]],
            global_min=d["global_min"],
            num_subproblems_solved=int(d["num_subproblems_solved"]),
            dedup_tol=float(d["dedup_tol"]),
            status_counts=dict(d.get("status_counts", {})),
            warnings=list(d.get("warnings", [])),
        )

    def table(self) -> str:
        """Aligned text table: support, x, f."""
        rows = [("#", "omega", "support", "x", "f")]
        for i, e in enumerate(self.minimizers):
            mark = "*" if i == self.global_min else ""
            rows.append((
                f"{i}{mark}",
                str(e.omega_solved),
                str(e.supp_actual),
                "(" + ", ".join(f"{v:.6g}" for v in e.x) + ")",
                f"{e.f_value:.10g}",
            ))
        widths = [max(len(r[j]) for r in rows) for j in range(5)]
        lines = ["  ".join(r[j].ljust(widths[j]) for j in range(5)).rstrip() for r in rows]
        lines.insert(1, "  ".join("-" * w for w in widths))
        lines.append(f"{len(self.minimizers)} local minimizers from "
                     f"{self.num_subproblems_solved} subproblems"
                     + (f"; global minimum is #{self.global_min}"
                        if self.global_min is not None else ""))
        lines.extend(f"warning: {w}" for w in self.warnings)
        return "\n".join(lines)


def _select_global(entries: list) -> int | None:
    if not entries:
        return None
    fmin = min(e.f_value for e in entries)
    tie = 1e-12 * (1.0 + abs(fmin))
    cands = [i for i, e in enumerate(entries) if e.f_value <= fmin + tie]
    return min(cands, key=lambda i: (entries[i].supp_actual.indices, i))


def enumerate_landscape(p: ProblemInstance,
                        opts: EnumerateOptions | None = None) -> LandscapeReport:
    """Solve every Q_omega and collect the distinct solutions."""
    opts = opts or EnumerateOptions()
    if p.m > opts.max_m:
        raise TooManySubproblemsError(
            f"g has {p.m} components, which means 2^{p.m} subproblems; the cap is "
            f"M <= {opts.max_m}. Use the iterative solvers plus `certify` instead.")

    def run(omega):
        try:
            return omega, solve_subproblem(p, omega, opts.solver), None
        except NotConvergedError as exc:
            return omega, None, exc

    omegas = supports(p.m)
    if opts.workers > 1:
        with ThreadPoolExecutor(opts.workers) as pool:
            results = list(pool.map(run, omegas))
    else:
        results = [run(w) for w in omegas]

    entries: list[LandscapeEntry] = []
    counts = {SOLVED: 0, UNBOUNDED: 0, INFEASIBLE: 0, "not-converged": 0}
    warnings = []
    for omega, sol, exc in results:
        if exc is not None:
            counts["not-converged"] += 1
            warnings.append(f"Q_{omega} not converged: {exc}")
            continue
        counts[sol.status] += 1
        if sol.status != SOLVED:
            continue
        x = sol.x_star + 0.0  # drop signed zeros
        if any(np.abs(x - e.x).max(initial=0.0) <= opts.dedup_tol for e in entries):
            continue
        entries.append(LandscapeEntry(
            x, omega, support_of(p, x, opts.solver.zero_tol),
            evaluate(p, x, opts.solver.zero_tol, opts.solver.feas_tol)))
    for w in warnings:
        log.warning(w)
    return LandscapeReport(p.n, p.m, entries, _select_global(entries), len(results),
                           opts.dedup_tol, counts, warnings)


@dataclass(frozen=True)
class SamplingVerdict:
    refuted: bool
    f_ref: float
    samples: int
    radius: float
    witness: np.ndarray | None = None
    witness_value: float | None = None

    def to_dict(self) -> dict:
        return {
            "refuted": self.refuted,
            "f_ref": self.f_ref,
            "samples": self.samples,
            "radius": self.radius,
            "witness": None if self.witness is None else [float(v) for v in self.witness],
            "witness_value": self.witness_value,
        }


def _uniform_ball(rng, count: int, dim: int, radius: float) -> np.ndarray:
    d = rng.standard_normal((count, dim))
    d /= np.linalg.norm(d, axis=1, keepdims=True)
    return d * (radius * rng.random(count) ** (1.0 / dim))[:, None]


def sample_feasible_ball(p: ProblemInstance, xbar, radius: float, samples: int,
                         rng, zero_tol: float = ZERO_TOL) -> np.ndarray:
    """Points of X within ``radius`` of ``xbar``.

    Half are uniform in the ball and clipped to X (clipping cannot leave the
    ball since xbar is in X).  The other half lie on the stratum
    X /\\ C_supp(xbar), drawn uniformly in the ball and pulled back along the
    segment to xbar until they are feasible, so that moves which keep the
    l0 term constant are exercised too.
    """
    xbar = np.asarray(xbar, dtype=float)
    Z = nullspace_of(p.g, support_of(p, xbar, zero_tol)).Z
    n_stratum = samples // 2 if Z.shape[1] else 0
    amb = xbar + _uniform_ball(rng, samples - n_stratum, p.n, radius)
    amb = p.X.project(amb)
    if not n_stratum:
        return amb
    steps = _uniform_ball(rng, n_stratum, Z.shape[1], radius) @ Z.T
    with np.errstate(divide="ignore", invalid="ignore"):
        room_up = np.where(steps > 0, (p.X.upper - xbar) / steps, np.inf)
        room_lo = np.where(steps < 0, (p.X.lower - xbar) / steps, np.inf)
    t = np.minimum(1.0, np.minimum(room_up, room_lo).min(axis=1))
    t = np.maximum(t, 0.0)
    return np.vstack([amb, xbar + t[:, None] * steps])


def verify_local_by_sampling(p: ProblemInstance, xbar, radius: float,
                             samples: int = 1000, rng_seed: int = 0,
                             zero_tol: float = ZERO_TOL,
                             feas_tol: float = FEAS_TOL) -> SamplingVerdict:
    """Try to refute local minimality of ``xbar`` by random feasible sampling."""
    if not radius > 0:
        raise ValueError("radius must be positive")
    if samples < 1:
        raise ValueError("samples must be at least 1")
    xbar = np.asarray(xbar, dtype=float)
    f_ref = evaluate(p, xbar, zero_tol, feas_tol)
    rng = np.random.default_rng(rng_seed)
    pts = sample_feasible_ball(p, xbar, radius, samples, rng, zero_tol)
    for x in pts:
        fx = evaluate(p, x, zero_tol, feas_tol)
        if fx < f_ref - 1e-10:
            return SamplingVerdict(True, f_ref, samples, radius, x, fx)
    return SamplingVerdict(False, f_ref, samples, radius)

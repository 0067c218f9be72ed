"""Iterative solvers whose limit points are fed to the certifier.

``solve_iht`` is proximal gradient with the l0 proximal map (hard
thresholding) for g = identity.  ``solve_pd`` is a penalty decomposition
for general linear g: it splits y ~ Gx and alternates exact minimization over
x and y while the penalty parameter grows.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .problem import (
    FEAS_TOL,
    ZERO_TOL,
    ConstraintSet,
    L0ScopeError,
    ProblemInstance,
    QuadraticTerm,
    Support,
    evaluate,
    support_of,
)
from .subproblem import (
    SOLVED,
    NotConvergedError,
    SolverOptions,
    minimize_quadratic,
    solve_subproblem,
)

__all__ = [
    "UnboundedProblemError",
    "IHTOptions",
    "PDOptions",
    "SolverTrace",
    "prox_l0",
    "solve_iht",
    "solve_pd",
]


class UnboundedProblemError(L0ScopeError):
    pass


@dataclass(frozen=True)
class IHTOptions:
    eta: float | None = None  # default 0.99 / lambda_max(Q)
    step_tol: float = 1e-10
    patience: int = 5
    max_iters: int = 50000
    zero_tol: float = ZERO_TOL


@dataclass(frozen=True)
class PDOptions:
    rho0: float = 1.0
    sigma: float = 4.0
    rho_max: float = 1e12
    pd_tol: float = 1e-6
    inner_tol: float = 1e-10
    max_inner: int = 500
    zero_tol: float = ZERO_TOL
    subproblem: SolverOptions = field(default_factory=SolverOptions)


@dataclass
class SolverTrace:
    method: str
    iterates: list  # (k, x, f(x))
    final: np.ndarray
    converged: bool
    stop_reason: str  # tolerance | max_iters | stagnation
    penalty_history: list = field(default_factory=list)  # pd only: (rho, value)

    @property
    def objective(self) -> np.ndarray:
        return np.array([f for _, _, f in self.iterates])

    def rows(self, p: ProblemInstance, zero_tol: float = ZERO_TOL) -> list:
        """(k, f, support size) per recorded iterate."""
        return [(k, f, len(support_of(p, x, zero_tol))) for k, x, f in self.iterates]

    def to_dict(self, p: ProblemInstance | None = None) -> dict:
        d = {
            "method": self.method,
            "final": [float(v) for v in self.final],
            "converged": self.converged,
            "stop_reason": self.stop_reason,
            "iterations": self.iterates[-1][0] if self.iterates else 0,
        }
        if p is not None:
            d["trace"] = [{"k": k, "f": f, "support_size": s} for k, f, s in self.rows(p)]
        return d


def prox_l0(v, eta: float, weight: float = 1.0, X: ConstraintSet | None = None) -> np.ndarray:
    """Componentwise argmin of (x_i - v_i)^2 / (2 eta) + weight [x_i != 0] over X.

    Ties go to zero.
    """
    if not eta > 0:
        raise ValueError("eta must be positive")
    v = np.asarray(v, dtype=float)
    lo = np.full(v.shape, -np.inf) if X is None else X.lower
    up = np.full(v.shape, np.inf) if X is None else X.upper
    keep = np.clip(v, lo, up)
    cost_keep = (keep - v) ** 2 / (2 * eta) + weight * (keep != 0)
    cost_zero = v ** 2 / (2 * eta)
    zero_ok = (lo <= 0) & (up >= 0)
    to_zero = zero_ok & (cost_zero <= cost_keep + 1e-12 * np.maximum(1.0, cost_zero))
    return np.where(to_zero, 0.0, keep)


def _is_identity(p: ProblemInstance) -> bool:
    return p.g.kind == "identity" or (
        p.g.m == p.n and np.array_equal(p.g.G, np.eye(p.n)))


def _check_linear_bounded(p: ProblemInstance):
    # f1 is affine here; unbounded iff some c_i pushes toward an open side
    c = p.f1.c
    if np.any((c < 0) & np.isinf(p.X.upper)) or np.any((c > 0) & np.isinf(p.X.lower)):
        raise UnboundedProblemError("f1 is linear and unbounded below on X")


def solve_iht(p: ProblemInstance, x0, opts: IHTOptions | None = None) -> SolverTrace:
    """Iterative hard thresholding x+ = prox_l0(x - eta grad f1(x))."""
    opts = opts or IHTOptions()
    if not _is_identity(p):
        raise ValueError("solve_iht requires g = identity; use solve_pd")
    L = p.f1.lipschitz()
    if L <= 1e-14:
        _check_linear_bounded(p)
        L = 1.0
    eta = opts.eta if opts.eta is not None else 0.99 / L
    if not 0 < eta <= 1.0 / L:
        raise ValueError(f"step eta={eta} must lie in (0, 1/L] with L={L}")

    def f(x):
        return evaluate(p, x, opts.zero_tol)

    x = p.X.project(np.asarray(x0, dtype=float))
    iterates = [(0, x, f(x))]
    supp = np.abs(x) > opts.zero_tol
    stable = 0
    for k in range(1, opts.max_iters + 1):
        x_new = prox_l0(x - eta * p.f1.gradient(x), eta, p.weight, p.X)
        step = float(np.abs(x_new - x).max(initial=0.0))
        supp_new = np.abs(x_new) > opts.zero_tol
        stable = stable + 1 if np.array_equal(supp_new, supp) else 0
        x, supp = x_new, supp_new
        iterates.append((k, x, f(x)))
        if step == 0.0 or (step <= opts.step_tol and stable >= opts.patience):
            return SolverTrace("iht", iterates, x, True, "tolerance")
        if k > 10 * opts.patience and step > opts.step_tol:
            # floating-point floor: the objective no longer moves at all
            recent = [it[2] for it in iterates[-10 * opts.patience:]]
            if max(recent) - min(recent) == 0.0 and stable >= opts.patience:
                return SolverTrace("iht", iterates, x, False, "stagnation")
    return SolverTrace("iht", iterates, x, False, "max_iters")


def _threshold(v, rho, weight):
    return np.where(0.5 * rho * v ** 2 > weight, v, 0.0)


def _unconstrained_step(Q, sub_opts: SolverOptions):
    """Minimum-norm minimizer of (1/2) x'Qx + c'x as a function of c, or None
    when c has a component in ker Q (unbounded below)."""
    w, V = np.linalg.eigh(Q)
    keep = w > 1e-10 * max(w.max(initial=0.0), 1e-300)
    Vk, inv = V[:, keep], 1.0 / w[keep]
    q_norm = float(w.max(initial=0.0))
    tol = sub_opts.kkt_tol_for(ConstraintSet.all_space(Q.shape[0]))

    def step(c):
        x = -Vk @ (inv * (Vk.T @ c))
        res = float(np.linalg.norm(Q @ x + c))
        scale = 1.0 + q_norm * float(np.linalg.norm(x)) + float(np.linalg.norm(c))
        return x if res <= tol * scale else None

    return step


def solve_pd(p: ProblemInstance, x0, opts: PDOptions | None = None) -> SolverTrace:
    """Penalty decomposition for min f1(x) + weight ||y||_0, y = Gx, x in X.

    The split variable is initialized by thresholding G applied to one
    forward (gradient) step from ``x0``.  Once ||Gx - y||_inf <= pd_tol the
    final point is the exact solution of Q_{supp(y)} ("polish").
    """
    opts = opts or PDOptions()
    if not opts.sigma > 1 or not opts.rho0 > 0:
        raise ValueError("need rho0 > 0 and sigma > 1")
    G = p.g.G
    Q, c, w = p.f1.Q, p.f1.c, p.weight
    L = p.f1.lipschitz()
    empty = np.zeros((0, p.n))
    all_space = p.X.kind == "all-space"

    def penalty(x, y, rho):
        r = G @ x - y
        return p.f1(x) + w * np.count_nonzero(y) + 0.5 * rho * (r @ r)

    x = p.X.project(np.asarray(x0, dtype=float))
    x_fwd = p.X.project(x - (0.99 / L if L > 1e-14 else 1.0) * p.f1.gradient(x))
    rho = opts.rho0
    y = _threshold(G @ x_fwd, rho, w)
    iterates = [(0, x, evaluate(p, x, opts.zero_tol))]
    history = []
    k = 0
    while True:
        k += 1
        Q_aug = Q + rho * G.T @ G
        x_step = _unconstrained_step(Q_aug, opts.subproblem) if all_space else None
        for _ in range(opts.max_inner):
            c_aug = c - rho * G.T @ y
            if all_space:
                x_new = x_step(c_aug)
            else:
                aug = QuadraticTerm(Q_aug, c_aug, p.f1.d)
                x_new = minimize_quadratic(aug, empty, p.X, opts.subproblem, x_start=x).x
            if x_new is None:
                raise UnboundedProblemError(
                    f"penalized x-step is unbounded below at rho={rho:g}")
            history.append((rho, penalty(x_new, y, rho)))
            y_new = _threshold(G @ x_new, rho, w)
            history.append((rho, penalty(x_new, y_new, rho)))
            change = max(np.abs(x_new - x).max(initial=0.0),
                         np.abs(y_new - y).max(initial=0.0))
            x, y = x_new, y_new
            if change <= opts.inner_tol * (1.0 + np.abs(x).max(initial=0.0)):
                break
        iterates.append((k, x, evaluate(p, x, opts.zero_tol)))
        if np.abs(G @ x - y).max(initial=0.0) <= opts.pd_tol:
            break
        rho *= opts.sigma
        if rho > opts.rho_max:
            trace = SolverTrace("pd", iterates, x, False, "max_iters", history)
            raise NotConvergedError(
                f"penalty parameter exceeded {opts.rho_max:g} with "
                f"||Gx - y||_inf = {np.abs(G @ x - y).max():.3e}", x, trace=trace)

    omega = Support(tuple(np.flatnonzero(y)), p.m)
    sol = solve_subproblem(p, omega, opts.subproblem)
    if sol.status != SOLVED:
        trace = SolverTrace("pd", iterates, x, False, "tolerance", history)
        raise NotConvergedError(
            f"polish subproblem Q_{omega} is {sol.status}", x, trace=trace)
    final = np.array(sol.x_star)
    iterates.append((k + 1, final, evaluate(p, final, opts.zero_tol)))
    return SolverTrace("pd", iterates, final, True, "tolerance", history)

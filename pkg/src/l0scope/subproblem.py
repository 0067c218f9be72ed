"""Exact solution of the convex subproblems

    Q_omega:  minimize f1(x)  over x in X  with  g_i(x) = 0 for i outside omega.

For X = R^N the feasible set is the linear subspace ker G_{omega^c}; the
problem is reduced onto an orthonormal basis of that subspace and solved with
a pseudoinverse.  For boxes we run projected gradient in x-space.  The
projection onto box /\\ subspace has no closed form for general G, so it is
computed through its one-dimensional-per-row dual with a semismooth Newton
method.  Every few iterations the active face of the current iterate is
solved exactly ("polish"), which terminates the method once the optimal face
has been identified.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
import scipy.linalg
from scipy.optimize import linprog, lsq_linear

from .problem import (
    FEAS_TOL,
    ZERO_TOL,
    ConstraintSet,
    L0ScopeError,
    LinearMap,
    ProblemInstance,
    QuadraticTerm,
    Support,
)

__all__ = [
    "SOLVED",
    "UNBOUNDED",
    "INFEASIBLE",
    "NotConvergedError",
    "SolverOptions",
    "NullspaceBasis",
    "SubproblemSolution",
    "QPResult",
    "nullspace_of",
    "project_onto",
    "minimize_quadratic",
    "solve_subproblem",
]

SOLVED = "solved"
UNBOUNDED = "unbounded-below"
INFEASIBLE = "infeasible"


class NotConvergedError(L0ScopeError):
    """An iterative solve stopped before meeting its tolerance."""

    def __init__(self, message, best=None, residual=np.inf, trace=None):
        super().__init__(message)
        self.best = best
        self.residual = residual
        self.trace = trace


@dataclass(frozen=True)
class SolverOptions:
    kkt_tol: float | None = None  # None: 1e-10 for all-space, 1e-8 for boxes
    feas_tol: float = FEAS_TOL
    zero_tol: float = ZERO_TOL
    max_iters: int = 20000
    polish_every: int = 3
    record_history: bool = False

    def kkt_tol_for(self, X: ConstraintSet) -> float:
        if self.kkt_tol is not None:
            return self.kkt_tol
        return 1e-10 if X.kind == "all-space" else 1e-8


@dataclass(frozen=True)
class NullspaceBasis:
    Z: np.ndarray
    x0: np.ndarray

    @property
    def k(self) -> int:
        return self.Z.shape[1]


@dataclass(frozen=True)
class SubproblemSolution:
    omega: Support
    status: str
    x_star: np.ndarray | None
    f1_star: float
    f_star: float
    kkt_residual: float
    iterations: int = 0
    history: tuple = field(default=(), repr=False)

    @property
    def solved(self) -> bool:
        return self.status == SOLVED


@dataclass(frozen=True)
class QPResult:
    status: str
    x: np.ndarray | None
    residual: float
    iterations: int
    history: tuple = ()


def _canonical_signs(Z: np.ndarray) -> np.ndarray:
    # first significant entry of each column positive, for reproducible output
    Z = Z.copy()
    for j in range(Z.shape[1]):
        col = Z[:, j]
        nz = np.flatnonzero(np.abs(col) > 1e-12)
        if nz.size and col[nz[0]] < 0:
            Z[:, j] = -col
    return Z


def _kernel(E: np.ndarray, n: int, rcond: float = 1e-10) -> np.ndarray:
    """Orthonormal basis of ker E (n x k)."""
    if E.shape[0] == 0:
        return np.eye(n)
    if np.all(np.count_nonzero(E, axis=1) <= 1):
        # coordinate rows: the kernel is spanned by untouched unit vectors
        touched = np.any(E != 0, axis=0)
        return np.eye(n)[:, ~touched]
    return _canonical_signs(scipy.linalg.null_space(E, rcond=rcond))


def nullspace_of(g: LinearMap, omega: Support) -> NullspaceBasis:
    """Orthonormal basis of C_omega = ker G_{omega^c}."""
    E = g.rows(omega.complement)
    Z = _kernel(E, g.n)
    Z.setflags(write=False)
    return NullspaceBasis(Z, np.zeros(g.n))


def _sym_pinv(H: np.ndarray, rcond: float = 1e-10) -> np.ndarray:
    if H.size == 0:
        return np.zeros_like(H)
    return np.linalg.pinv(H, rcond=rcond, hermitian=True)


def _solve_on_subspace(Q, c, xp, W, rcond=1e-10):
    """Minimize 0.5 x'Qx + c'x over xp + range(W); None if unbounded below."""
    if W.shape[1] == 0:
        return xp.copy()
    H = W.T @ Q @ W
    h = W.T @ (Q @ xp + c)
    w = -_sym_pinv(H, rcond) @ h
    # one step of refinement
    r = H @ w + h
    w = w - _sym_pinv(H, rcond) @ r
    r = H @ w + h
    scale = 1.0 + np.linalg.norm(h) + np.linalg.norm(H, 2) * np.linalg.norm(w)
    if np.linalg.norm(r) > 1e-8 * scale:
        return None
    return xp + W @ w


def project_onto(v, E: np.ndarray, lower, upper, lam0=None, tol=1e-13,
                 max_iter=200, return_dual=False):
    """Euclidean projection of v onto {x : E x = 0, lower <= x <= upper}.

    The set must be nonempty.  Solved through the concave dual in the row
    multipliers, x(lam) = clip(v - E' lam), by semismooth Newton with an
    Armijo backtracking line search.
    """
    v = np.asarray(v, dtype=float)
    lower = np.asarray(lower, dtype=float)
    upper = np.asarray(upper, dtype=float)
    m = E.shape[0]
    if m == 0:
        x = np.clip(v, lower, upper)
        return (x, np.zeros(0)) if return_dual else x
    scale = 1.0 + np.abs(v[np.isfinite(v)]).max(initial=0.0)
    stop = tol * scale
    # a stall below this is rounding noise in the line search, not failure
    stall_ok = 1e-10 * scale

    def primal(lam):
        return np.clip(v - E.T @ lam, lower, upper)

    def dual(lam, x):
        d = x - v
        return 0.5 * d @ d + lam @ (E @ x)

    def newton(lam):
        x = primal(lam)
        for _ in range(max_iter):
            r = E @ x
            if np.abs(r).max() <= stop:
                return lam, x, True
            u = v - E.T @ lam
            free = (u > lower) & (u < upper)
            Ef = E[:, free]
            H = Ef @ Ef.T
            # residual-sized regularization keeps rows without free
            # coordinates (singular generalized Hessian) well posed
            mu = 1e-12 * max(1.0, np.trace(H)) + min(1.0, float(np.linalg.norm(r)))
            step = np.linalg.solve(H + mu * np.eye(m), r)
            slope = r @ step
            th0 = dual(lam, x)
            # once the predicted gain is below rounding in the dual value,
            # Armijo cannot be decided; fall back to residual decrease
            tiny = slope <= 1e-13 * (1.0 + abs(th0))
            r_norm = float(np.linalg.norm(r))
            t = 1.0
            while True:
                lam_t = lam + t * step
                x_t = primal(lam_t)
                if tiny:
                    if np.linalg.norm(E @ x_t) < r_norm:
                        break
                elif dual(lam_t, x_t) >= th0 + 1e-4 * t * slope:
                    break
                t *= 0.5
                if t < 1e-20:
                    return lam, x, np.abs(r).max() <= stall_ok
            lam, x = lam_t, x_t
        return lam, x, np.abs(E @ x).max() <= stall_ok

    lam, x, ok = newton(np.zeros(m) if lam0 is None else np.array(lam0, dtype=float))
    if not ok and lam0 is not None:
        lam, x, ok = newton(np.zeros(m))
    if not ok:
        raise NotConvergedError(
            f"projection onto box /\\ ker E stalled with ||Ex|| = "
            f"{np.abs(E @ x).max():.3e}", x, float(np.abs(E @ x).max()))
    return (x, lam) if return_dual else x


def _fix_split(lower, upper):
    fixed = lower == upper
    return fixed, ~fixed


def _feasible_point(E, lower, upper):
    """Minimize ||E x||^2 over the box; returns (x, ||E x||_inf)."""
    n = lower.shape[0]
    if E.shape[0] == 0:
        x = np.clip(np.zeros(n), lower, upper)
        return x, 0.0
    fixed, free = _fix_split(lower, upper)
    x = np.where(fixed, lower, 0.0)
    if np.any(free):
        rhs = -E[:, fixed] @ lower[fixed]
        res = lsq_linear(E[:, free], rhs, bounds=(lower[free], upper[free]),
                         method="bvls", tol=1e-14, lsmr_tol="auto")
        x[free] = res.x
    x = np.clip(x, lower, upper)
    return x, float(np.abs(E @ x).max(initial=0.0))


def _has_descent_ray(Q, c, E, lower, upper) -> bool:
    """True if f1 is unbounded below on the (nonempty) polyhedron."""
    n = c.shape[0]
    W = _kernel(np.vstack([Q, E]), n) if Q.size else np.eye(n)
    if W.shape[1] == 0:
        return False
    lo_only = np.isfinite(lower) & ~np.isfinite(upper)
    up_only = ~np.isfinite(lower) & np.isfinite(upper)
    both = np.isfinite(lower) & np.isfinite(upper)
    A_ub = np.vstack([-W[lo_only], W[up_only]])
    A_eq = W[both]
    res = linprog(
        W.T @ c,
        A_ub=A_ub if A_ub.shape[0] else None,
        b_ub=np.zeros(A_ub.shape[0]) if A_ub.shape[0] else None,
        A_eq=A_eq if A_eq.shape[0] else None,
        b_eq=np.zeros(A_eq.shape[0]) if A_eq.shape[0] else None,
        bounds=[(-1.0, 1.0)] * W.shape[1],
        method="highs",
    )
    return bool(res.status == 0 and res.fun < -1e-9 * (1.0 + np.linalg.norm(c)))


def _polish(Q, c, E, lower, upper, active_lo, active_up):
    """Exact minimizer on the face where the flagged bounds hold with equality."""
    n = c.shape[0]
    C_rows = [E]
    d = [np.zeros(E.shape[0])]
    idx_lo = np.flatnonzero(active_lo)
    idx_up = np.flatnonzero(active_up & ~active_lo)
    if idx_lo.size:
        C_rows.append(np.eye(n)[idx_lo])
        d.append(lower[idx_lo])
    if idx_up.size:
        C_rows.append(np.eye(n)[idx_up])
        d.append(upper[idx_up])
    C = np.vstack(C_rows)
    d = np.concatenate(d)
    if C.shape[0]:
        xp = np.linalg.lstsq(C, d, rcond=None)[0]
        if np.abs(C @ xp - d).max() > 1e-10 * (1.0 + np.abs(d).max(initial=0.0)):
            return None
    else:
        xp = np.zeros(n)
    W = _kernel(C, n) if C.shape[0] else np.eye(n)
    return _solve_on_subspace(Q, c, xp, W)


def minimize_quadratic(f1: QuadraticTerm, E: np.ndarray, X: ConstraintSet,
                       opts: SolverOptions | None = None,
                       x_start=None) -> QPResult:
    """Minimize f1 over X /\\ ker E.

    Returns status ``solved`` with the minimizer (minimum-norm representative
    when X is the whole space), ``unbounded-below`` or ``infeasible``.
    Raises NotConvergedError if projected gradient exhausts ``max_iters``.
    """
    opts = opts or SolverOptions()
    Q, c, n = f1.Q, f1.c, f1.n
    E = np.asarray(E, dtype=float).reshape(-1, n)
    kkt_tol = opts.kkt_tol_for(X)
    q_norm = float(np.linalg.norm(Q))  # Frobenius, a cheap upper bound on ||Q||_2
    c_norm = float(np.linalg.norm(c))

    def _scale(x):
        # residuals are judged relative to the size of the gradient terms
        return 1.0 + q_norm * float(np.linalg.norm(x)) + c_norm

    if X.kind == "all-space":
        Z = _kernel(E, n)
        x = _solve_on_subspace(Q, c, np.zeros(n), Z)
        if x is None:
            return QPResult(UNBOUNDED, None, np.inf, 0)
        res = float(np.linalg.norm(Z.T @ (Q @ x + c)))
        if res > kkt_tol * _scale(x):
            raise NotConvergedError(
                f"reduced normal equations solved only to {res:.3e}", x, res)
        return QPResult(SOLVED, x, res, 1)

    lower, upper = X.lower, X.upper
    x_feas, viol = _feasible_point(E, lower, upper)
    if viol > opts.feas_tol:
        return QPResult(INFEASIBLE, None, np.inf, 0)
    if not X.is_bounded and _has_descent_ray(Q, c, E, lower, upper):
        return QPResult(UNBOUNDED, None, np.inf, 0)

    L = f1.lipschitz()
    if L <= 1e-14:
        L = 1.0
    lam = None

    def proj(v):
        nonlocal lam
        out, lam = project_onto(v, E, lower, upper, lam0=lam, return_dual=True)
        return out

    def grad_map(x):
        y = proj(x - (Q @ x + c) / L)
        return y, L * float(np.linalg.norm(x - y))

    def polished(*points):
        # exact minimizer on the active face guessed from each point, if valid
        for z in points:
            xp = _polish(Q, c, E, lower, upper, z <= lower, z >= upper)
            if xp is None or not X.contains(xp, opts.feas_tol):
                continue
            if E.shape[0] and np.abs(E @ xp).max() > opts.feas_tol:
                continue
            xp = np.clip(xp, lower, upper)
            _, res_p = grad_map(xp)
            if res_p <= kkt_tol * _scale(xp):
                return xp, res_p
        return None

    x = proj(x_feas if x_start is None else np.asarray(x_start, dtype=float))
    history = [f1(x)] if opts.record_history else None
    best, best_res = x, np.inf
    for k in range(opts.max_iters):
        y, res = grad_map(x)
        if res < best_res:
            best, best_res = x, res
        if res <= kkt_tol * _scale(x):
            hit = polished(y, x)
            if hit is not None and hit[1] <= res:
                x, res = hit
            return QPResult(SOLVED, x, res, k, tuple(history or ()))
        if (k + 1) % opts.polish_every == 0:
            hit = polished(y, x)
            if hit is not None:
                if history is not None:
                    history.append(f1(hit[0]))
                return QPResult(SOLVED, hit[0], hit[1], k + 1, tuple(history or ()))
        x = y
        if history is not None:
            history.append(f1(x))
    raise NotConvergedError(
        f"projected gradient stopped after {opts.max_iters} iterations "
        f"with residual {best_res:.3e}", best, best_res)


def solve_subproblem(p: ProblemInstance, omega: Support,
                     opts: SolverOptions | None = None) -> SubproblemSolution:
    """Solve Q_omega for the instance ``p``."""
    opts = opts or SolverOptions()
    if omega.m != p.m:
        raise ValueError(f"support is over {omega.m} indices, problem has {p.m}")
    E = p.g.rows(omega.complement)
    r = minimize_quadratic(p.f1, E, p.X, opts)
    if r.status == SOLVED:
        x = r.x
        x.setflags(write=False)
        f1_star = p.f1(x)
        f_star = f1_star + p.weight * p.l0(x, opts.zero_tol)
        return SubproblemSolution(omega, SOLVED, x, f1_star, f_star,
                                  r.residual, r.iterations, r.history)
    bound = -np.inf if r.status == UNBOUNDED else np.inf
    return SubproblemSolution(omega, r.status, None, bound, bound, np.inf,
                              r.iterations)

"""Criticality certificates for l0-composite problems.

At x with support w = supp_g(x) the limiting subdifferential splits as

    df(x) = grad f1(x) + N_{X /\\ C_w}(x),

and for a box X and linear g the normal cone is
{G_{w^c}' lam + nu : nu in N_X(x)}.  So x is critical iff the sign-constrained
least-squares problem below has zero residual.  Criticality then implies that
x solves Q_w, hence that x is a local minimizer; ``verify_theorem_crlo``
checks both consequences independently.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.optimize import lsq_linear

from .landscape import SamplingVerdict, verify_local_by_sampling
from .problem import (
    FEAS_TOL,
    ZERO_TOL,
    ProblemInstance,
    Support,
    gradient_f1,
    support_of,
)
from .subproblem import NotConvergedError, SolverOptions, SubproblemSolution, solve_subproblem

__all__ = [
    "CRITICAL",
    "NOT_CRITICAL",
    "CriticalityCertificate",
    "TheoremCheck",
    "certify_critical",
    "verify_theorem_crlo",
    "support_stability_radius",
    "default_radius",
]

CRITICAL = "critical"
NOT_CRITICAL = "not-critical"


@dataclass(frozen=True)
class CriticalityCertificate:
    x: np.ndarray
    omega_bar: Support
    constrained_rows: tuple  # the indices of omega_bar^c that lam is indexed by
    lam: np.ndarray
    nu: np.ndarray
    residual: float
    tolerance: float
    verdict: str
    feasible: bool = True

    @property
    def critical(self) -> bool:
        return self.verdict == CRITICAL

    def to_dict(self) -> dict:
        return {
            "x": [float(v) for v in self.x],
            "omega_bar": list(self.omega_bar.indices),
            "lambda": {str(i): float(v) for i, v in zip(self.constrained_rows, self.lam)},
            "nu": [float(v) for v in self.nu],
            "residual": float(self.residual),
            "tolerance": float(self.tolerance),
            "feasible": self.feasible,
            "verdict": self.verdict,
        }


def certify_critical(p: ProblemInstance, xbar, crit_tol: float = 1e-8,
                     active_tol: float = 1e-9, zero_tol: float = ZERO_TOL,
                     feas_tol: float = FEAS_TOL) -> CriticalityCertificate:
    """Decide whether 0 lies in the limiting subdifferential of f at ``xbar``.

    Solves  min || grad f1(x) + G_{w^c}' lam + nu ||  over free ``lam`` and
    ``nu`` in the normal cone of the box at x (nu_i >= 0 at an active upper
    bound, <= 0 at an active lower bound, 0 for inactive coordinates).
    The verdict is critical iff the residual is at most
    ``crit_tol * (1 + ||grad f1(x)||)``.
    """
    x = np.asarray(xbar, dtype=float)
    omega = support_of(p, x, zero_tol)
    rows = omega.complement
    E = p.g.rows(rows)
    grad = gradient_f1(p, x)
    tol = crit_tol * (1.0 + np.linalg.norm(grad))
    nu = np.zeros(p.n)
    lam = np.zeros(len(rows))
    if not p.X.contains(x, feas_tol):
        return CriticalityCertificate(x, omega, rows, lam, nu, np.inf, tol,
                                      NOT_CRITICAL, feasible=False)

    at_lo = x <= p.X.lower + active_tol
    at_up = x >= p.X.upper - active_tol
    active = np.flatnonzero(at_lo | at_up)
    lb = np.concatenate([np.full(len(rows), -np.inf),
                         np.where(at_up[active], 0.0, -np.inf) if active.size else []])
    ub = np.concatenate([np.full(len(rows), np.inf),
                         np.where(at_lo[active], 0.0, np.inf) if active.size else []])
    # an index active at both bounds (lower == upper) leaves nu_i free
    both = at_lo[active] & at_up[active]
    lb[len(rows):][both] = -np.inf
    ub[len(rows):][both] = np.inf

    A = np.hstack([E.T, np.eye(p.n)[:, active]])
    if A.shape[1] == 0:
        sol = np.zeros(0)
    elif np.all(np.isinf(lb)) and np.all(np.isinf(ub)):
        sol = np.linalg.lstsq(A, -grad, rcond=None)[0]
    else:
        res = lsq_linear(A, -grad, bounds=(lb, ub), method="bvls", tol=1e-15)
        if res.status <= 0:
            best = float(np.linalg.norm(A @ res.x + grad))
            raise NotConvergedError(
                f"sign-constrained least squares did not converge (residual {best:.3e})",
                res.x, best)
        sol = np.clip(res.x, lb, ub)
    lam = sol[:len(rows)]
    nu[active] = sol[len(rows):]
    residual = float(np.linalg.norm(grad + E.T @ lam + nu))
    verdict = CRITICAL if residual <= tol else NOT_CRITICAL
    return CriticalityCertificate(x, omega, rows, lam, nu, residual, tol, verdict)


def support_stability_radius(p: ProblemInstance, xbar, zero_tol: float = ZERO_TOL) -> float:
    """Radius within which supp_g(x) contains supp_g(xbar)."""
    x = np.asarray(xbar, dtype=float)
    omega = support_of(p, x, zero_tol)
    if not len(omega):
        return np.inf
    gx = p.g(x)
    idx = list(omega.indices)
    return float(np.min(np.abs(gx[idx]) / np.linalg.norm(p.g.G[idx], axis=1)))


def default_radius(p: ProblemInstance, xbar, cap: float = 0.1,
                   zero_tol: float = ZERO_TOL) -> float:
    return float(min(0.9 * support_stability_radius(p, xbar, zero_tol), cap))


@dataclass(frozen=True)
class TheoremCheck:
    certificate: CriticalityCertificate
    subproblem: SubproblemSolution
    f1_gap: float
    solves_subproblem: bool
    sampling: SamplingVerdict

    @property
    def consistent(self) -> bool:
        return self.solves_subproblem and not self.sampling.refuted

    def to_dict(self) -> dict:
        return {
            "omega_bar": list(self.certificate.omega_bar.indices),
            "subproblem_status": self.subproblem.status,
            "f1_star": float(self.subproblem.f1_star),
            "f1_gap": float(self.f1_gap),
            "solves_subproblem": self.solves_subproblem,
            "sampling": self.sampling.to_dict(),
            "consistent": self.consistent,
        }


def verify_theorem_crlo(p: ProblemInstance, xbar,
                        certificate: CriticalityCertificate | None = None,
                        radius: float | None = None, samples: int = 1000,
                        rng_seed: int = 0, gap_tol: float = 1e-8,
                        opts: SolverOptions | None = None) -> TheoremCheck:
    """Check that a critical point solves Q_{supp(x)} and survives sampling.

    Both must hold for any critical point; a failure is an inconsistency in
    the software, not a property of the instance.
    """
    opts = opts or SolverOptions()
    x = np.asarray(xbar, dtype=float)
    cert = certificate or certify_critical(p, x, zero_tol=opts.zero_tol,
                                           feas_tol=opts.feas_tol)
    if not cert.critical:
        raise ValueError("verify_theorem_crlo requires a certified critical point")
    sol = solve_subproblem(p, cert.omega_bar, opts)
    if sol.solved:
        gap = p.f1(x) - sol.f1_star
    else:
        gap = np.inf
    if radius is None:
        radius = default_radius(p, x, zero_tol=opts.zero_tol)
    verdict = verify_local_by_sampling(p, x, radius, samples, rng_seed,
                                       opts.zero_tol, opts.feas_tol)
    return TheoremCheck(cert, sol, float(gap), bool(gap <= gap_tol), verdict)

"""Rank-regularized objective F(A) = ||A - B||_F^2 + rank(A).

Here criticality and local minimality come apart.  The indicator of the
fixed-rank manifold C_r has subdifferential U_perp (x) V_perp at A (matrices
whose columns are orthogonal to the column space of A and whose rows are
orthogonal to its row space), so A is critical iff -grad F1(A) lies in that
space.  Because C_r is not convex, a critical point may still admit a
rank-preserving descent curve.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .certify import certify_critical, verify_theorem_crlo
from .problem import ConstraintSet, LinearMap, ProblemInstance, QuadraticTerm

__all__ = [
    "SV_TOL",
    "EXAMPLE_B",
    "EXAMPLE_A",
    "RankProblem",
    "RankPointAnalysis",
    "Refutation",
    "numerical_rank",
    "membership_residual",
    "certify_critical_rank",
    "refute_local_min_rank",
    "contrast_report",
    "vector_analogue",
    "two_by_two_curve",
    "counterexample_decrease",
]

SV_TOL = 1e-10

EXAMPLE_B = np.array([[2.0, 1.0], [1.0, 2.0]])
EXAMPLE_A = np.array([[0.5, -0.5], [-0.5, 0.5]])


def numerical_rank(A, sv_tol: float = SV_TOL) -> int:
    s = np.linalg.svd(np.asarray(A, dtype=float), compute_uv=False)
    if s.size == 0 or s[0] == 0:
        return 0
    return int(np.count_nonzero(s > sv_tol * s[0]))


@dataclass(frozen=True)
class RankProblem:
    B: np.ndarray
    sv_tol: float = SV_TOL

    def __post_init__(self):
        B = np.array(self.B, dtype=float)
        if B.ndim != 2:
            raise ValueError(f"B must be a matrix, got shape {B.shape}")
        B.setflags(write=False)
        object.__setattr__(self, "B", B)

    @property
    def shape(self) -> tuple:
        return self.B.shape

    def f1(self, A) -> float:
        D = np.asarray(A, dtype=float) - self.B
        return float(np.sum(D * D))

    def gradient(self, A) -> np.ndarray:
        return 2.0 * (np.asarray(A, dtype=float) - self.B)

    def __call__(self, A) -> float:
        return self.f1(A) + numerical_rank(A, self.sv_tol)


@dataclass(frozen=True)
class Refutation:
    kind: str  # "two-by-two" or "two-sided"
    eps: float
    A_eps: np.ndarray
    decrease: float  # F(A_eps) - F(A), negative
    rank: int
    left: np.ndarray | None = None
    right: np.ndarray | None = None

    def to_dict(self) -> dict:
        d = {
            "kind": self.kind,
            "eps": self.eps,
            "A_eps": self.A_eps.tolist(),
            "decrease": self.decrease,
            "rank": self.rank,
        }
        if self.left is not None:
            d["E"] = self.left.tolist()
            d["F"] = self.right.tolist()
        return d


@dataclass(frozen=True)
class RankPointAnalysis:
    A: np.ndarray
    r: int
    U_r: np.ndarray
    V_r: np.ndarray
    gradient: np.ndarray
    critical: bool
    criticality_residual: float
    tolerance: float
    refutation: Refutation | None = None

    def to_dict(self) -> dict:
        return {
            "A": self.A.tolist(),
            "rank": self.r,
            "column_space": self.U_r.tolist(),
            "row_space": self.V_r.tolist(),
            "neg_gradient": (-self.gradient).tolist(),
            "critical": self.critical,
            "criticality_residual": self.criticality_residual,
            "tolerance": self.tolerance,
            "refutation": None if self.refutation is None else self.refutation.to_dict(),
        }


def _bases(A, sv_tol):
    U, s, Vt = np.linalg.svd(A)
    r = 0 if s.size == 0 or s[0] == 0 else int(np.count_nonzero(s > sv_tol * s[0]))
    return r, U[:, :r], Vt[:r].T


def membership_residual(W, U_r, V_r) -> float:
    """|| W - P_{U_perp} W P_{V_perp} ||_F: zero iff W lies in U_perp (x) V_perp."""
    W = np.asarray(W, dtype=float)
    PU = np.eye(W.shape[0]) - U_r @ U_r.T
    PV = np.eye(W.shape[1]) - V_r @ V_r.T
    return float(np.linalg.norm(W - PU @ W @ PV))


def certify_critical_rank(rp: RankProblem, A, rank_crit_tol: float = 1e-10) -> RankPointAnalysis:
    """Test 0 in grad F1(A) + U_perp (x) V_perp."""
    A = np.array(A, dtype=float)
    if A.shape != rp.shape:
        raise ValueError(f"A has shape {A.shape}, B has shape {rp.shape}")
    r, U_r, V_r = _bases(A, rp.sv_tol)
    grad = rp.gradient(A)
    res = membership_residual(-grad, U_r, V_r)
    tol = rank_crit_tol * (1.0 + float(np.linalg.norm(grad)))
    return RankPointAnalysis(A, r, U_r, V_r, grad, res <= tol, res, tol)


def two_by_two_curve(A, eps: float) -> np.ndarray:
    """Rank-one 2x2 curve through A: shift a11 by eps and re-solve a22 so det = 0."""
    A = np.asarray(A, dtype=float)
    a11 = A[0, 0] + eps
    return np.array([[a11, A[0, 1]], [A[1, 0], A[0, 1] * A[1, 0] / a11]])


def counterexample_decrease(eps):
    """Closed form of F1(A_eps) - F1(A) along ``two_by_two_curve`` for EXAMPLE_A, EXAMPLE_B."""
    eps = np.asarray(eps, dtype=float)
    return eps ** 2 * (eps ** 2 - 2 * eps - 1) / (0.5 + eps) ** 2


def _eps_grid(count: int = 12) -> list:
    mags = [10.0 ** -(k + 1) for k in range(count // 2)]
    return [s * m for m in mags for s in (1.0, -1.0)]


def refute_local_min_rank(rp: RankProblem, A, analysis: RankPointAnalysis | None = None,
                          pairs: int = 200, eps_values=None, seed: int = 0,
                          min_decrease: float = 1e-10,
                          explicit: bool = True) -> Refutation | None:
    """Search for a rank-preserving curve through A along which F decreases.

    Tries the explicit 2x2 rank-one curve first (when A is 2x2 of rank one
    with a11 != 0), then two-sided perturbations (I + eps E) A (I + eps F)
    with Gaussian E, F.  Returns None when nothing is found within budget;
    that is evidence of local minimality, not a proof.
    """
    A = np.array(A, dtype=float)
    analysis = analysis or certify_critical_rank(rp, A)
    r = analysis.r
    base = rp(A)
    eps_values = _eps_grid() if eps_values is None else list(eps_values)

    def accept(Ae):
        rk = numerical_rank(Ae, rp.sv_tol)
        if rk != r:
            return None
        dec = rp(Ae) - base
        return dec if dec < -min_decrease else None

    if explicit and A.shape == (2, 2) and r == 1 and abs(A[0, 0]) > 1e-12:
        for eps in eps_values:
            if abs(A[0, 0] + eps) < 1e-12:
                continue
            Ae = two_by_two_curve(A, eps)
            dec = accept(Ae)
            if dec is not None:
                return Refutation("two-by-two", float(eps), Ae, float(dec), r)

    rng = np.random.default_rng(seed)
    M, N = A.shape
    for _ in range(pairs):
        E = rng.standard_normal((M, M))
        F = rng.standard_normal((N, N))
        for eps in eps_values:
            Ae = (np.eye(M) + eps * E) @ A @ (np.eye(N) + eps * F)
            dec = accept(Ae)
            if dec is not None:
                return Refutation("two-sided", float(eps), Ae, float(dec), r, E, F)
    return None


def vector_analogue(rp: RankProblem, A):
    """Diagonal embedding in the singular basis of B.

    With B = U diag(s) V', returns the l0 problem ||x - s||^2 + ||x||_0 and the
    point x = diag(U' A V).  When A is diagonal in that basis, F(A) equals the
    l0 objective at x.
    """
    U, s, Vt = np.linalg.svd(rp.B)
    n = s.size
    f1 = QuadraticTerm(2.0 * np.eye(n), -2.0 * s, float(s @ s))
    p = ProblemInstance(f1, LinearMap.identity(n), ConstraintSet.all_space(n), 1.0)
    x = np.diag(U.T @ np.asarray(A, dtype=float) @ Vt.T)[:n].copy()
    return p, x


def contrast_report(rp: RankProblem, A, seed: int = 0) -> dict:
    """Does criticality imply local minimality here?  Rank case next to its l0 analogue."""
    analysis = certify_critical_rank(rp, A)
    refutation = None
    if analysis.critical and analysis.r >= 1:
        refutation = refute_local_min_rank(rp, A, analysis, seed=seed)
    analysis = RankPointAnalysis(**{**analysis.__dict__, "refutation": refutation})

    p, x = vector_analogue(rp, A)
    cert = certify_critical(p, x)
    vector = {"point": x.tolist(), "certificate": cert.to_dict()}
    if cert.critical:
        check = verify_theorem_crlo(p, x, cert, rng_seed=seed)
        vector["theorem_check"] = check.to_dict()
        vector["critical_implies_local_min"] = check.consistent

    return {
        "rank": analysis.to_dict(),
        "F": rp(A),
        "critical": analysis.critical,
        "refuted": refutation is not None,
        "critical_implies_local_min": (None if not analysis.critical
                                       else refutation is None),
        "note": ("no rank-preserving descent curve found within budget; this is "
                 "evidence of local minimality, not a certificate"
                 if analysis.critical and refutation is None else ""),
        "vector_analogue": vector,
    }


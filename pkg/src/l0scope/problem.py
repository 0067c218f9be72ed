"""Problem data model for l0-composite minimization.

The objective handled throughout the package is

    f(x) = f1(x) + weight * ||G x||_0 + delta_X(x)

with ``f1`` a convex quadratic, ``G`` a dense linear map and ``X`` either the
whole space or a (possibly one-sided) box.  Supports are stored 0-based.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Iterable, Sequence

import numpy as np

__all__ = [
    "ZERO_TOL",
    "FEAS_TOL",
    "L0ScopeError",
    "DimensionError",
    "QuadraticTerm",
    "LinearMap",
    "ConstraintSet",
    "ProblemInstance",
    "Support",
    "evaluate",
    "support_of",
    "gradient_f1",
    "least_squares_problem",
]

ZERO_TOL = 1e-9
FEAS_TOL = 1e-9


class L0ScopeError(Exception):
    """Base class for all package errors."""


class DimensionError(L0ScopeError, ValueError):
    """Array shapes are inconsistent with the problem dimensions."""


def _frozen(a) -> np.ndarray:
    arr = np.array(a, dtype=float)
    arr.setflags(write=False)
    return arr


def _as_vector(x, n: int, name: str = "x") -> np.ndarray:
    x = np.asarray(x, dtype=float)
    if x.ndim != 1 or x.shape[0] != n:
        raise DimensionError(f"{name} must have shape ({n},), got {x.shape}")
    return x


@dataclass(frozen=True)
class QuadraticTerm:
    """f1(x) = 0.5 x'Qx + c'x + d with Q symmetric positive semidefinite."""

    Q: np.ndarray
    c: np.ndarray
    d: float = 0.0

    def __post_init__(self):
        Q = _frozen(self.Q)
        c = _frozen(self.c)
        if Q.ndim != 2 or Q.shape[0] != Q.shape[1]:
            raise DimensionError(f"Q must be square, got shape {Q.shape}")
        if c.ndim != 1 or c.shape[0] != Q.shape[0]:
            raise DimensionError(
                f"c must have length {Q.shape[0]}, got shape {c.shape}")
        scale = max(np.abs(Q).max(initial=0.0), 1.0)
        if np.abs(Q - Q.T).max(initial=0.0) > 1e-12 * scale:
            raise ValueError("Q is not symmetric")
        if Q.size:
            lam_min = np.linalg.eigvalsh(Q).min()
            if lam_min < -1e-10 * np.linalg.norm(Q, 2):
                raise ValueError(
                    f"Q is not positive semidefinite (min eigenvalue {lam_min:.3e})")
        object.__setattr__(self, "Q", Q)
        object.__setattr__(self, "c", c)
        object.__setattr__(self, "d", float(self.d))

    @classmethod
    def from_least_squares(cls, A, b, alpha: float = 1.0) -> "QuadraticTerm":
        """Build (alpha/2) ||Ax - b||^2."""
        A = np.atleast_2d(np.asarray(A, dtype=float))
        b = np.asarray(b, dtype=float)
        if b.ndim != 1 or b.shape[0] != A.shape[0]:
            raise DimensionError(
                f"b must have length {A.shape[0]}, got shape {b.shape}")
        if not alpha > 0:
            raise ValueError("alpha must be positive")
        Q = alpha * A.T @ A
        Q = 0.5 * (Q + Q.T)
        return cls(Q, -alpha * A.T @ b, 0.5 * alpha * float(b @ b))

    @property
    def n(self) -> int:
        return self.Q.shape[0]

    def __call__(self, x) -> float:
        x = np.asarray(x, dtype=float)
        return float(0.5 * x @ self.Q @ x + self.c @ x + self.d)

    def gradient(self, x) -> np.ndarray:
        return self.Q @ np.asarray(x, dtype=float) + self.c

    def lipschitz(self) -> float:
        """Largest eigenvalue of Q."""
        if self.n == 0:
            return 0.0
        return float(max(np.linalg.eigvalsh(self.Q).max(), 0.0))


@dataclass(frozen=True)
class LinearMap:
    """The map g(x) = G x, tagged by how it was built."""

    G: np.ndarray
    kind: str = "custom"

    KINDS = ("identity", "forward-difference", "custom")

    def __post_init__(self):
        if self.kind not in self.KINDS:
            raise ValueError(f"unknown linear map kind {self.kind!r}")
        G = _frozen(self.G)
        if G.ndim != 2:
            raise DimensionError(f"G must be a matrix, got shape {G.shape}")
        object.__setattr__(self, "G", G)

    @classmethod
    def identity(cls, n: int) -> "LinearMap":
        return cls(np.eye(n), "identity")

    @classmethod
    def forward_difference(cls, n: int) -> "LinearMap":
        """Rows e_{i+1} - e_i, i = 0..n-2."""
        G = np.zeros((max(n - 1, 0), n))
        for i in range(n - 1):
            G[i, i] = -1.0
            G[i, i + 1] = 1.0
        return cls(G, "forward-difference")

    @classmethod
    def custom(cls, G) -> "LinearMap":
        return cls(G, "custom")

    @property
    def m(self) -> int:
        return self.G.shape[0]

    @property
    def n(self) -> int:
        return self.G.shape[1]

    @property
    def is_coordinate(self) -> bool:
        """True when every row is a signed multiple of a unit vector."""
        return bool(np.all(np.count_nonzero(self.G, axis=1) <= 1))

    def __call__(self, x) -> np.ndarray:
        return self.G @ np.asarray(x, dtype=float)

    def rows(self, idx: Sequence[int]) -> np.ndarray:
        return self.G[list(idx), :]


@dataclass(frozen=True)
class ConstraintSet:
    """Either the whole space or a box lower <= x <= upper (bounds may be infinite)."""

    kind: str
    lower: np.ndarray
    upper: np.ndarray

    def __post_init__(self):
        if self.kind not in ("all-space", "box"):
            raise ValueError(f"unknown constraint kind {self.kind!r}")
        lo, up = _frozen(self.lower), _frozen(self.upper)
        if lo.shape != up.shape or lo.ndim != 1:
            raise DimensionError("lower and upper must be vectors of equal length")
        if np.any(lo == np.inf) or np.any(up == -np.inf) or np.any(np.isnan(lo)) \
                or np.any(np.isnan(up)):
            raise ValueError("bounds must satisfy lower < +inf and upper > -inf")
        if np.any(lo > up):
            raise ValueError("box is empty: lower > upper somewhere")
        if self.kind == "all-space" and (np.any(np.isfinite(lo)) or np.any(np.isfinite(up))):
            raise ValueError("all-space constraint must have infinite bounds")
        object.__setattr__(self, "lower", lo)
        object.__setattr__(self, "upper", up)

    @classmethod
    def all_space(cls, n: int) -> "ConstraintSet":
        return cls("all-space", np.full(n, -np.inf), np.full(n, np.inf))

    @classmethod
    def box(cls, lower, upper) -> "ConstraintSet":
        return cls("box", lower, upper)

    @classmethod
    def nonnegative(cls, n: int) -> "ConstraintSet":
        return cls("box", np.zeros(n), np.full(n, np.inf))

    @property
    def n(self) -> int:
        return self.lower.shape[0]

    @property
    def is_bounded(self) -> bool:
        return bool(np.all(np.isfinite(self.lower)) and np.all(np.isfinite(self.upper)))

    def project(self, v) -> np.ndarray:
        return np.clip(np.asarray(v, dtype=float), self.lower, self.upper)

    def contains(self, x, tol: float = FEAS_TOL) -> bool:
        x = np.asarray(x, dtype=float)
        return bool(np.all(x >= self.lower - tol) and np.all(x <= self.upper + tol))


@dataclass(frozen=True, order=True)
class Support:
    """Sorted subset of {0, ..., m-1}; indexes the subproblem family."""

    indices: tuple
    m: int = field(compare=False)

    def __post_init__(self):
        idx = tuple(sorted(set(int(i) for i in self.indices)))
        if idx and (idx[0] < 0 or idx[-1] >= self.m):
            raise ValueError(f"support indices {idx} outside 0..{self.m - 1}")
        object.__setattr__(self, "indices", idx)

    @classmethod
    def full(cls, m: int) -> "Support":
        return cls(tuple(range(m)), m)

    @classmethod
    def empty(cls, m: int) -> "Support":
        return cls((), m)

    @property
    def complement(self) -> tuple:
        inside = set(self.indices)
        return tuple(i for i in range(self.m) if i not in inside)

    def __len__(self) -> int:
        return len(self.indices)

    def __iter__(self):
        return iter(self.indices)

    def __contains__(self, i) -> bool:
        return i in self.indices

    def issubset(self, other: "Support") -> bool:
        return set(self.indices) <= set(other.indices)

    def __str__(self) -> str:
        return "{" + ", ".join(map(str, self.indices)) + "}"


@dataclass(frozen=True)
class ProblemInstance:
    """f(x) = f1(x) + weight * ||g(x)||_0 + delta_X(x)."""

    f1: QuadraticTerm
    g: LinearMap
    X: ConstraintSet
    weight: float = 1.0

    def __post_init__(self):
        n = self.f1.n
        if self.g.n != n:
            raise DimensionError(f"G has {self.g.n} columns but f1 acts on R^{n}")
        if self.X.n != n:
            raise DimensionError(f"bounds have length {self.X.n} but f1 acts on R^{n}")
        if not self.weight > 0:
            raise ValueError("weight must be positive")
        object.__setattr__(self, "weight", float(self.weight))

    @property
    def n(self) -> int:
        return self.f1.n

    @property
    def m(self) -> int:
        return self.g.m

    def l0(self, x, zero_tol: float = ZERO_TOL) -> int:
        return int(np.count_nonzero(np.abs(self.g(x)) > zero_tol))

    def f2(self, x, zero_tol: float = ZERO_TOL, feas_tol: float = FEAS_TOL) -> float:
        if not self.X.contains(x, feas_tol):
            return np.inf
        return self.weight * self.l0(x, zero_tol)

    def scaled(self, t: float) -> "ProblemInstance":
        """Multiply both f1 and the l0 weight by t > 0."""
        f1 = QuadraticTerm(t * self.f1.Q, t * self.f1.c, t * self.f1.d)
        return ProblemInstance(f1, self.g, self.X, t * self.weight)


def evaluate(p: ProblemInstance, x, zero_tol: float = ZERO_TOL,
             feas_tol: float = FEAS_TOL) -> float:
    """Objective value, +inf outside X."""
    x = _as_vector(x, p.n)
    if not p.X.contains(x, feas_tol):
        return np.inf
    return p.f1(x) + p.weight * p.l0(x, zero_tol)


def support_of(p: ProblemInstance, x, zero_tol: float = ZERO_TOL) -> Support:
    x = _as_vector(x, p.n)
    if zero_tol < 0:
        raise ValueError("zero_tol must be nonnegative")
    gx = p.g(x)
    return Support(tuple(np.flatnonzero(np.abs(gx) > zero_tol)), p.m)


def gradient_f1(p: ProblemInstance, x) -> np.ndarray:
    return p.f1.gradient(_as_vector(x, p.n))


def least_squares_problem(A, b, alpha: float = 1.0, g: LinearMap | None = None,
                          X: ConstraintSet | None = None,
                          weight: float = 1.0) -> ProblemInstance:
    """(alpha/2)||Ax - b||^2 + weight ||g(x)||_0 + delta_X, identity g by default."""
    f1 = QuadraticTerm.from_least_squares(A, b, alpha)
    n = f1.n
    return ProblemInstance(
        f1,
        g if g is not None else LinearMap.identity(n),
        X if X is not None else ConstraintSet.all_space(n),
        weight,
    )


def supports(m: int) -> Iterable[Support]:
    """All subsets of {0..m-1}, by size then lexicographically."""
    from itertools import combinations

    for k in range(m + 1):
        for idx in combinations(range(m), k):
            yield Support(idx, m)

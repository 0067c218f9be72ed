"""JSON problem files, point files and report serialization.

Problem file layout::

    {
      "f1": {"Q": [[...]], "c": [...], "d": 0.0}      # or {"A", "b", "alpha"}
      "g":  {"kind": "identity" | "forward-difference" | "custom", "G": [[...]]},
      "X":  {"kind": "all-space" | "box", "lower": [...], "upper": [...]},
      "weight": 1.0
    }

Infinite bounds may be written as null (meaning -inf for lower, +inf for
upper) or as the strings "inf" / "-inf".
"""
from __future__ import annotations

import json
import math
import re
from importlib import resources
from pathlib import Path

import numpy as np

from .problem import (
    ConstraintSet,
    L0ScopeError,
    LinearMap,
    ProblemInstance,
    QuadraticTerm,
)

__all__ = [
    "ProblemFormatError",
    "parse_problem",
    "load_problem",
    "problem_to_dict",
    "dump_problem",
    "load_point",
    "load_matrix",
    "to_jsonable",
    "dumps",
    "builtin_path",
]


class ProblemFormatError(L0ScopeError, ValueError):
    """Invalid input file; carries the source, field and line when known."""

    def __init__(self, message, source="<input>", field=None, line=None):
        self.source, self.field, self.line, self.message = source, field, line, message
        loc = source if line is None else f"{source}:{line}"
        where = f" [{field}]" if field else ""
        super().__init__(f"{loc}:{where} {message}")

    def to_dict(self) -> dict:
        return {"error": "validation", "file": self.source, "line": self.line,
                "field": self.field, "message": self.message}


def builtin_path(name: str) -> Path:
    """Path of a packaged instance file, e.g. ``cs3`` or ``rank_B``."""
    fname = name if name.endswith(".json") else name + ".json"
    return Path(str(resources.files("l0scope") / "instances" / fname))


def _resolve(path) -> Path:
    s = str(path)
    if s.startswith("builtin:"):
        return builtin_path(s.split(":", 1)[1])
    return Path(s)


class _Ctx:
    def __init__(self, text: str, source: str):
        self.text, self.source = text, source

    def line_of(self, key: str) -> int | None:
        m = re.search(r'"%s"\s*:' % re.escape(key), self.text)
        return None if m is None else self.text.count("\n", 0, m.start()) + 1

    def fail(self, field: str, message: str):
        raise ProblemFormatError(message, self.source, field, self.line_of(field.split(".")[-1]))


def _number(v, ctx, field, inf_default=None):
    if v is None and inf_default is not None:
        return inf_default
    if isinstance(v, str) and v.strip().lower() in ("inf", "+inf", "infinity", "-inf", "-infinity"):
        return -math.inf if v.strip().startswith("-") else math.inf
    if isinstance(v, bool) or not isinstance(v, (int, float)):
        ctx.fail(field, f"expected a number, got {v!r}")
    return float(v)


def _vector(v, ctx, field, n=None, inf_default=None):
    if not isinstance(v, list):
        ctx.fail(field, "expected an array of numbers")
    out = np.array([_number(e, ctx, field, inf_default) for e in v], dtype=float)
    if inf_default is None and not np.all(np.isfinite(out)):
        ctx.fail(field, "entries must be finite")
    if n is not None and out.shape[0] != n:
        ctx.fail(field, f"expected length {n}, got {out.shape[0]}")
    return out


def _matrix(v, ctx, field, shape=None):
    if not isinstance(v, list) or not all(isinstance(r, list) for r in v):
        ctx.fail(field, "expected an array of arrays (row-major matrix)")
    widths = {len(r) for r in v}
    if len(widths) > 1:
        ctx.fail(field, f"rows have differing lengths {sorted(widths)}")
    rows = [_vector(r, ctx, field) for r in v]
    out = np.array(rows, dtype=float).reshape(len(v), widths.pop() if widths else 0)
    if shape is not None:
        for want, got, what in zip(shape, out.shape, ("rows", "columns")):
            if want is not None and want != got:
                ctx.fail(field, f"expected {want} {what}, got {got}")
    return out


def _parse_f1(d, ctx) -> QuadraticTerm:
    if not isinstance(d, dict):
        ctx.fail("f1", "expected an object")
    if "Q" in d:
        Q = _matrix(d["Q"], ctx, "f1.Q")
        n = Q.shape[0]
        if Q.shape[1] != n:
            ctx.fail("f1.Q", f"Q must be square, got {Q.shape[0]}x{Q.shape[1]}")
        c = _vector(d["c"], ctx, "f1.c", n) if "c" in d else np.zeros(n)
        dd = _number(d.get("d", 0.0), ctx, "f1.d")
        try:
            return QuadraticTerm(Q, c, dd)
        except ValueError as exc:
            ctx.fail("f1.Q", str(exc))
    if "A" in d and "b" in d:
        A = _matrix(d["A"], ctx, "f1.A")
        b = _vector(d["b"], ctx, "f1.b", A.shape[0])
        alpha = _number(d.get("alpha", 1.0), ctx, "f1.alpha")
        if not alpha > 0:
            ctx.fail("f1.alpha", "alpha must be positive")
        return QuadraticTerm.from_least_squares(A, b, alpha)
    ctx.fail("f1", 'needs either "Q" (with optional "c", "d") or "A", "b" (and optional "alpha")')


def _parse_g(d, ctx, n) -> LinearMap:
    if d is None:
        return LinearMap.identity(n)
    if not isinstance(d, dict):
        ctx.fail("g", "expected an object")
    kind = d.get("kind", "custom" if "G" in d else "identity")
    if kind == "identity":
        return LinearMap.identity(n)
    if kind == "forward-difference":
        return LinearMap.forward_difference(n)
    if kind == "custom":
        if "G" not in d:
            ctx.fail("g", 'kind "custom" requires "G"')
        return LinearMap.custom(_matrix(d["G"], ctx, "g.G", (None, n)))
    ctx.fail("g.kind", f"unknown kind {kind!r}")


def _parse_X(d, ctx, n) -> ConstraintSet:
    if d is None:
        return ConstraintSet.all_space(n)
    if not isinstance(d, dict):
        ctx.fail("X", "expected an object")
    kind = d.get("kind", "box" if ("lower" in d or "upper" in d) else "all-space")
    if kind == "all-space":
        return ConstraintSet.all_space(n)
    if kind != "box":
        ctx.fail("X.kind", f"unknown kind {kind!r}")
    lo = _vector(d["lower"], ctx, "X.lower", n, -math.inf) if "lower" in d else np.full(n, -np.inf)
    up = _vector(d["upper"], ctx, "X.upper", n, math.inf) if "upper" in d else np.full(n, np.inf)
    try:
        return ConstraintSet.box(lo, up)
    except ValueError as exc:
        ctx.fail("X.lower", str(exc))


def parse_problem(text: str, source: str = "<string>") -> ProblemInstance:
    try:
        data = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ProblemFormatError(exc.msg, source, None, exc.lineno) from None
    ctx = _Ctx(text, source)
    if not isinstance(data, dict):
        raise ProblemFormatError("top level must be an object", source, None, 1)
    if "f1" not in data:
        raise ProblemFormatError('missing "f1"', source, "f1", 1)
    f1 = _parse_f1(data["f1"], ctx)
    g = _parse_g(data.get("g"), ctx, f1.n)
    X = _parse_X(data.get("X"), ctx, f1.n)
    weight = _number(data.get("weight", 1.0), ctx, "weight")
    if not weight > 0:
        ctx.fail("weight", "weight must be positive")
    return ProblemInstance(f1, g, X, weight)


def load_problem(path) -> ProblemInstance:
    p = _resolve(path)
    try:
        text = p.read_text()
    except OSError as exc:
        raise ProblemFormatError(f"cannot read file: {exc.strerror}", str(path)) from None
    return parse_problem(text, str(path))


def _bound_list(v):
    return [None if math.isinf(e) else float(e) for e in v]


def problem_to_dict(p: ProblemInstance) -> dict:
    g = {"kind": p.g.kind}
    if p.g.kind == "custom":
        g["G"] = p.g.G.tolist()
    X = {"kind": p.X.kind}
    if p.X.kind == "box":
        X["lower"] = _bound_list(p.X.lower)
        X["upper"] = _bound_list(p.X.upper)
    return {
        "f1": {"Q": p.f1.Q.tolist(), "c": p.f1.c.tolist(), "d": p.f1.d},
        "g": g,
        "X": X,
        "weight": p.weight,
    }


def dump_problem(p: ProblemInstance, path) -> None:
    Path(path).write_text(dumps(problem_to_dict(p)))


def load_point(spec: str, n: int, source_name: str = "point") -> np.ndarray:
    """``zero``, ``random:SEED`` (standard normal) or a JSON file holding an
    array or an object with key ``x``."""
    if spec == "zero":
        return np.zeros(n)
    if spec.startswith("random:"):
        try:
            seed = int(spec.split(":", 1)[1])
        except ValueError:
            raise ProblemFormatError(f"bad seed in {spec!r}", source_name) from None
        return np.random.default_rng(seed).standard_normal(n)
    path = _resolve(spec)
    try:
        text = path.read_text()
    except OSError as exc:
        raise ProblemFormatError(f"cannot read file: {exc.strerror}", spec) from None
    try:
        data = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ProblemFormatError(exc.msg, spec, None, exc.lineno) from None
    ctx = _Ctx(text, spec)
    if isinstance(data, dict):
        if "x" not in data:
            ctx.fail("x", 'point object needs key "x"')
        data = data["x"]
    return _vector(data, ctx, "x", n)


def load_matrix(spec: str) -> np.ndarray:
    path = _resolve(spec)
    try:
        text = path.read_text()
    except OSError as exc:
        raise ProblemFormatError(f"cannot read file: {exc.strerror}", spec) from None
    try:
        data = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ProblemFormatError(exc.msg, spec, None, exc.lineno) from None
    ctx = _Ctx(text, spec)
    if isinstance(data, dict):
        key = next((k for k in ("A", "B", "matrix") if k in data), None)
        if key is None:
            ctx.fail("matrix", 'matrix object needs key "A", "B" or "matrix"')
        data = data[key]
    return _matrix(data, ctx, "matrix")


def to_jsonable(obj):
    """Recursively convert numpy values; non-finite floats become strings."""
    if isinstance(obj, dict):
        return {str(k): to_jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [to_jsonable(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return to_jsonable(obj.tolist())
    if isinstance(obj, (np.bool_, bool)):
        return bool(obj)
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, (float, np.floating)):
        v = float(obj)
        if math.isnan(v):
            return "nan"
        if math.isinf(v):
            return "inf" if v > 0 else "-inf"
        return v
    return obj


def dumps(obj) -> str:
    return json.dumps(to_jsonable(obj), indent=2) + "\n"

"""Graphons, step graphons and the integral operators they induce.

A graphon is a symmetric kernel ``W: [0,1]^2 -> [0,1]``.  It acts on
``L^2[0,1]`` by ``(T_W x)(a) = int_0^1 W(a, b) x(b) db``.  On a uniform grid of
``n_s`` midpoints this operator is represented by the matrix
``W(a_i, a_j) / n_s`` so that the quadrature weight is folded into the entries.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np

from .errors import CapacityError, DomainError, RefinementError, ValidationError

Kernel = Callable[[np.ndarray, np.ndarray], np.ndarray]

EXACT_CUT_MAX_PARTS = 14
_BOUNDARY_TOL = 1e-12


@dataclass(frozen=True, eq=False)
class GraphonSpec:
    """A symmetric kernel on the unit square.

    ``kind`` is ``"analytic"`` (closed-form ``evaluator``) or ``"step"``
    (piecewise constant on a uniform ``parts x parts`` partition with values
    ``weights``).  ``signed`` graphons take values in ``[-1, 1]`` instead of
    ``[0, 1]``; they arise as differences of graphons.
    """

    kind: str
    evaluator: Optional[Kernel] = None
    weights: Optional[np.ndarray] = None
    name: str = ""
    signed: bool = False

    def __post_init__(self):
        if self.kind == "step":
            if self.weights is None:
                raise ValidationError("step graphon needs a weight matrix")
            w = np.array(self.weights, dtype=float)
            _validate_weights(w, self.signed)
            w.setflags(write=False)
            object.__setattr__(self, "weights", w)
        elif self.kind == "analytic":
            if self.evaluator is None:
                raise ValidationError("analytic graphon needs an evaluator")
        else:
            raise ValidationError(f"unknown graphon kind {self.kind!r}")

    @property
    def parts(self) -> Optional[int]:
        return None if self.weights is None else self.weights.shape[0]

    def __call__(self, a, b):
        return eval_graphon(self, a, b)

    def __eq__(self, other):
        if not isinstance(other, GraphonSpec) or self.kind != other.kind:
            return NotImplemented
        if self.kind == "step":
            return self.signed == other.signed and np.array_equal(self.weights, other.weights)
        return self.evaluator is other.evaluator

    __hash__ = None


def _validate_weights(w: np.ndarray, signed: bool) -> None:
    if w.ndim != 2 or w.shape[0] != w.shape[1] or w.shape[0] == 0:
        raise ValidationError(f"weight matrix must be square and non-empty, got shape {w.shape}")
    if not np.all(np.isfinite(w)):
        raise ValidationError("weight matrix has non-finite entries")
    if not np.array_equal(w, w.T):
        raise ValidationError("weight matrix is not symmetric")
    lo = -1.0 if signed else 0.0
    if w.min() < lo or w.max() > 1.0:
        raise ValidationError(f"weights must lie in [{lo:g}, 1]")


def cell_index(x, n: int) -> np.ndarray:
    """0-based index of the cell ``P_i`` containing ``x``; the last cell is closed."""
    idx = np.floor(np.asarray(x, dtype=float) * n + 1e-10).astype(int)
    return np.clip(idx, 0, n - 1)


def eval_graphon(g: GraphonSpec, a, b):
    """Evaluate ``g`` at ``(a, b)``; scalars give a float, arrays broadcast."""
    a_arr = np.asarray(a, dtype=float)
    b_arr = np.asarray(b, dtype=float)
    for v in (a_arr, b_arr):
        if np.any(~np.isfinite(v)) or np.any(v < 0.0) or np.any(v > 1.0):
            raise DomainError("graphon coordinates must lie in [0, 1]")
    if g.kind == "step":
        n = g.parts
        out = g.weights[cell_index(a_arr, n), cell_index(b_arr, n)]
    else:
        out = np.asarray(g.evaluator(a_arr, b_arr), dtype=float)
        out = np.broadcast_to(out, np.broadcast(a_arr, b_arr).shape)
    if out.ndim == 0:
        return float(out)
    return np.array(out)


def step_graphon_from_adjacency(a, name: str = "", signed: bool = False) -> GraphonSpec:
    """The step graphon ``W_G`` equal to ``a[i, j]`` on ``P_i x P_j``."""
    return GraphonSpec("step", weights=np.asarray(a, dtype=float), name=name, signed=signed)


# -- built-in kernels ------------------------------------------------------

def _example1(a, b):
    return (1.0 - np.maximum(a, b)) * np.minimum(a, b)


def _halfplane(a, b):
    # The value on the null line a + b = 1 is set to 1/2 so that midpoint
    # nodes falling on the jump see its average.
    s = a + b
    return np.where(np.abs(s - 1.0) <= _BOUNDARY_TOL, 0.5, (s < 1.0).astype(float))


def constant_graphon(c: float = 1.0) -> GraphonSpec:
    if not 0.0 <= c <= 1.0:
        raise ValidationError("constant graphon value must lie in [0, 1]")
    c = float(c)
    return GraphonSpec("analytic", evaluator=lambda a, b: np.full(np.broadcast(a, b).shape, c),
                       name=f"constant({c:g})" if c != 1.0 else "constant")


EXAMPLE1 = GraphonSpec("analytic", evaluator=_example1, name="example1")
HALFPLANE = GraphonSpec("analytic", evaluator=_halfplane, name="halfplane")

BUILTIN_NAMES = ("example1", "constant", "halfplane", "example3")


def builtin_graphon(name: str, **params) -> GraphonSpec:
    """Look up a named kernel: example1, constant (param ``c``), halfplane (alias example3)."""
    allowed = {"constant": {"c", "value"}}.get(name, set())
    if name in BUILTIN_NAMES and set(params) - allowed:
        raise ValidationError(f"graphon {name!r} takes no parameters {sorted(set(params) - allowed)}")
    if name == "example1":
        return EXAMPLE1
    if name == "constant":
        return constant_graphon(params.get("c", params.get("value", 1.0)))
    if name in ("halfplane", "example3"):
        return HALFPLANE
    raise ValidationError(f"unknown graphon id {name!r}; choose from {', '.join(BUILTIN_NAMES)}")


# -- discretization --------------------------------------------------------

def midpoints(n: int) -> np.ndarray:
    return (np.arange(n) + 0.5) / n


@dataclass(frozen=True, eq=False)
class OperatorMatrix:
    """Quadrature matrix of an integral operator on ``n_s`` midpoints."""

    entries: np.ndarray
    source: str = field(default="")

    @property
    def n_s(self) -> int:
        return self.entries.shape[0]

    @property
    def grid(self) -> np.ndarray:
        return midpoints(self.n_s)

    def apply(self, x: np.ndarray) -> np.ndarray:
        return self.entries @ x


def refine_weights(w: np.ndarray, n_s: int) -> np.ndarray:
    n = w.shape[0]
    if n_s % n:
        raise RefinementError(f"grid size {n_s} is not a multiple of the {n} step parts")
    r = n_s // n
    return np.repeat(np.repeat(w, r, axis=0), r, axis=1)


def discretize_operator(g: GraphonSpec, n_s: int) -> OperatorMatrix:
    """Midpoint-rule matrix ``W(a_i, a_j) / n_s`` of the operator ``T_W``.

    For a step graphon ``n_s`` must be a multiple of its part count, and the
    result then acts exactly on lifted step functions.
    """
    if n_s < 1:
        raise ValidationError("n_s must be positive")
    if g.kind == "step":
        m = refine_weights(g.weights, n_s) / n_s
    else:
        a = midpoints(n_s)
        m = np.asarray(g.evaluator(a[:, None], a[None, :]), dtype=float)
        m = np.broadcast_to(m, (n_s, n_s)) / n_s
        m = 0.5 * (m + m.T)
    return OperatorMatrix(np.ascontiguousarray(m), source=g.name)


def operator_norm(m, rtol: float = 1e-8, max_iter: int = 5000, seed: int = 0) -> float:
    """Largest absolute eigenvalue of a symmetric matrix.

    Power iteration on ``M^2`` with a residual test; when the top of the
    spectrum is too clustered to converge in ``max_iter`` steps the dense
    symmetric eigensolver is used instead.
    """
    a = m.entries if isinstance(m, OperatorMatrix) else np.asarray(m, dtype=float)
    if a.size == 0 or not np.any(a):
        return 0.0
    x = np.random.default_rng(seed).standard_normal(a.shape[0])
    x /= np.linalg.norm(x)
    for _ in range(max_iter):
        y = a @ (a @ x)
        rho = float(x @ y)
        if rho <= 0.0:
            break
        resid = np.linalg.norm(y - rho * x)
        if resid <= 1e-3 * rtol * rho:
            return math.sqrt(rho)
        x = y / np.linalg.norm(y)
    return float(np.max(np.abs(np.linalg.eigvalsh(a))))


def project_to_step(g: GraphonSpec, parts: int, sub: int = 4) -> GraphonSpec:
    """Block averages of ``g`` on a ``parts x parts`` grid.

    Analytic kernels are averaged over a ``sub x sub`` midpoint sub-sample of
    each block; step graphons whose part count divides ``parts`` are refined
    exactly and otherwise sub-sampled the same way.
    """
    if g.kind == "step":
        if parts % g.parts == 0:
            return GraphonSpec("step", weights=refine_weights(g.weights, parts),
                               name=g.name, signed=g.signed)
    offs = (np.arange(sub) + 0.5) / sub
    pts = ((np.arange(parts)[:, None] + offs[None, :]) / parts).ravel()
    vals = eval_graphon(g, pts[:, None], pts[None, :])
    w = vals.reshape(parts, sub, parts, sub).mean(axis=(1, 3))
    w = 0.5 * (w + w.T)
    return GraphonSpec("step", weights=w, name=f"{g.name}@{parts}", signed=g.signed)


def graphon_difference(g1: GraphonSpec, g2: GraphonSpec, parts: int) -> GraphonSpec:
    """Signed step graphon ``g1 - g2`` on a common ``parts`` refinement."""
    w = project_to_step(g1, parts).weights - project_to_step(g2, parts).weights
    w = 0.5 * (w + w.T)
    return GraphonSpec("step", weights=np.clip(w, -1.0, 1.0), name=f"{g1.name}-{g2.name}", signed=True)


# -- cut norm --------------------------------------------------------------

@dataclass(frozen=True)
class CutNormResult:
    value: float
    certificate: str  # "exact" or "lower_bound"
    rows: tuple = ()
    cols: tuple = ()


def _best_cols(colsums: np.ndarray):
    pos = np.clip(colsums, 0.0, None).sum(axis=-1)
    neg = np.clip(-colsums, 0.0, None).sum(axis=-1)
    return np.maximum(pos, neg), pos >= neg


def _as_step(g: GraphonSpec, parts: Optional[int]) -> np.ndarray:
    if g.kind == "step":
        return g.weights
    if parts is None:
        raise ValidationError("analytic kernels need a refinement 'parts' for the cut norm")
    return project_to_step(g, parts).weights


def cut_norm(g: GraphonSpec, mode: str = "exact", parts: Optional[int] = None,
             restarts: int = 32, seed: int = 0) -> CutNormResult:
    """Cut norm ``sup_{S,T} |int_{SxT} W|`` of a (signed) step graphon.

    Given the row set ``S`` the best column set takes every column whose
    partial sum has the dominant sign, so only ``S`` is searched: exhaustively
    in ``"exact"`` mode, by randomized single-index flips in ``"heuristic"``
    mode (which yields a lower bound).
    """
    w = _as_step(g, parts)
    n = w.shape[0]
    if mode == "exact":
        if n > EXACT_CUT_MAX_PARTS:
            raise CapacityError(f"exact cut norm supports at most {EXACT_CUT_MAX_PARTS} parts "
                                f"(got {n}); use mode='heuristic'")
        masks = ((np.arange(2 ** n)[:, None] >> np.arange(n)[None, :]) & 1).astype(float)
        colsums = masks @ w
        vals, use_pos = _best_cols(colsums)
        k = int(np.argmax(vals))
        sign = 1.0 if use_pos[k] else -1.0
        rows = tuple(int(i) for i in np.flatnonzero(masks[k]))
        cols = tuple(int(i) for i in np.flatnonzero(sign * colsums[k] > 0))
        return CutNormResult(float(vals[k]) / n ** 2, "exact", rows, cols)
    if mode != "heuristic":
        raise ValidationError(f"unknown cut-norm mode {mode!r}")
    return _cut_norm_local_search(w, max(restarts, 32), seed)


def _cut_norm_local_search(w: np.ndarray, restarts: int, seed: int,
                           max_flips: int = 25) -> CutNormResult:
    # Alternating ascent (best T given S, best S given T) from random row
    # sets, then single-index flips of S until no flip improves.
    n = w.shape[0]
    rng = np.random.default_rng(seed)
    best_val, best_s = -1.0, None
    starts = [np.ones(n, dtype=bool)] + [rng.random(n) < 0.5 for _ in range(restarts)]
    for s0 in starts:
        for sigma in (1.0, -1.0):
            s = s0.copy()
            for _ in range(100):
                t = sigma * w[s].sum(axis=0) > 0
                s_new = sigma * w[:, t].sum(axis=1) > 0
                if np.array_equal(s_new, s) or not s_new.any():
                    break
                s = s_new
            c = w[s].sum(axis=0)
            val = _best_cols(c)[0]
            for _ in range(max_flips):
                sgn = np.where(s, -1.0, 1.0)
                cand, _ = _best_cols(c[None, :] + sgn[:, None] * w)
                i = int(np.argmax(cand))
                if cand[i] <= val * (1.0 + 1e-14) + 1e-300:
                    break
                s[i] = not s[i]
                c = c + sgn[i] * w[i]
                val = cand[i]
            if val > best_val:
                best_val, best_s = float(val), s
    c = w[best_s].sum(axis=0)
    _, use_pos = _best_cols(c)
    cols = np.flatnonzero(c > 0) if use_pos else np.flatnonzero(c < 0)
    return CutNormResult(best_val / n ** 2, "lower_bound", tuple(int(i) for i in np.flatnonzero(best_s)),
                         tuple(int(i) for i in cols))


def l1_norm(g: GraphonSpec, parts: Optional[int] = None) -> float:
    """``int |W|`` of a step graphon; an upper bound on its cut norm."""
    w = _as_step(g, parts)
    return float(np.abs(w).sum()) / w.shape[0] ** 2


@dataclass(frozen=True)
class SandwichReport:
    cut: float
    op: float
    upper: float
    holds: bool
    certificate: str
    lower_ok: Optional[bool]
    upper_ok: bool


def check_sandwich(g: GraphonSpec, mode: str = "exact", tol: float = 1e-6,
                   parts: Optional[int] = None, seed: int = 0) -> SandwichReport:
    """Check ``|W|_cut <= |T_W|_op <= 2 sqrt(2) |W|_cut^(1/2)``.

    With a heuristic (lower-bound) cut norm only the right inequality can be
    certified, so the left one is skipped.
    """
    w = _as_step(g, parts)
    if np.abs(w).max() > 1.0:
        raise ValidationError("kernel must be bounded by 1 in absolute value")
    res = cut_norm(GraphonSpec("step", weights=w, signed=True), mode=mode, seed=seed)
    op = operator_norm(w / w.shape[0])
    upper = 2.0 * math.sqrt(2.0) * math.sqrt(res.value)
    upper_ok = op <= upper + tol
    lower_ok = res.value <= op + tol if res.certificate == "exact" else None
    holds = upper_ok and (lower_ok is not False)
    return SandwichReport(res.value, op, upper, holds, res.certificate, lower_ok, upper_ok)


# -- CSV -------------------------------------------------------------------

def save_step_csv(g: GraphonSpec, path) -> None:
    """Write the weight matrix, one row per line, shortest round-trip floats."""
    if g.kind != "step":
        raise ValidationError("only step graphons serialize to CSV")
    with open(path, "w", encoding="ascii") as fh:
        for row in g.weights:
            fh.write(",".join(repr(float(v)) for v in row) + "\n")


def load_step_csv(path, signed: bool = False, name: str = "") -> GraphonSpec:
    rows = []
    with open(path, encoding="ascii") as fh:
        for line in fh:
            line = line.strip()
            if line:
                rows.append([float(v) for v in line.split(",")])
    if not rows or any(len(r) != len(rows) for r in rows):
        raise ValidationError(f"{path}: expected an n x n matrix")
    return step_graphon_from_adjacency(np.array(rows), name=name or str(path), signed=signed)

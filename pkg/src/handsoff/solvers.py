"""Solvers for the L1 and non-convex sparse control problems, cost functionals,
bang-off-bang certificates and an exhaustive oracle for tiny instances.

After time discretization both problems read

    minimize  delta * sum_kj pen(u_kj) + lam * ||free + G u - xf||^2,  |u| <= 1,

where ``G`` is the terminal map of the system and ``||.||`` the quadrature
weighted L^2 norm.  The gradient of the terminal term with respect to
``u_kj`` equals ``delta`` times the interval average of the switching
function, so the threshold rule on theta is the exact optimality condition
of the discrete L1 problem.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .dynamics import ControlSignal, DiscretizedSystem, switching_function
from .errors import CapacityError, DivergenceError, PenaltyError, ValidationError
from .graphon import operator_norm
from .io import write_csv, write_kv
from .penalties import PenaltySpec, prox_l1_box, validate_penalty
from .qp import box_l1_qp

ZERO_TOL = 1e-6
BRUTE_FORCE_LIMIT = 3 ** 12


@dataclass
class SolverOptions:
    """Solver settings.

    ``method`` selects the L1 algorithm: ``"ipm"`` (interior point on the
    equivalent box QP, the default) or ``"fista"`` (accelerated proximal
    gradient with function-value restart).
    """

    method: str = "ipm"
    rel_tol: float = 1e-9
    max_iter: int = 20000
    ipm_tol: float = 1e-10
    ipm_max_iter: int = 200
    zero_tol: float = ZERO_TOL
    disc_tol: float = 1e-3
    theta_tol: float = 1e-2

    def __post_init__(self):
        if self.method not in ("ipm", "fista"):
            raise ValidationError(f"unknown L1 method {self.method!r}")
        if not self.rel_tol > 0 or self.max_iter < 1:
            raise ValidationError("rel_tol must be positive and max_iter >= 1")


@dataclass
class BangOffBangReport:
    purity: float
    violations: list  # (k, j, u, theta)
    consistency: bool


@dataclass
class SolveReport:
    control: ControlSignal
    terminal_state: np.ndarray
    costs: dict
    theta: np.ndarray
    certificate: BangOffBangReport
    iterations: list  # (iter, objective, step)
    method: str = ""
    converged: bool = True
    start: str = ""

    def scalar_metrics(self) -> dict:
        out = {"method": self.method, "converged": self.converged}
        if self.start:
            out["start"] = self.start
        out.update(self.costs)
        out.update(purity=self.certificate.purity,
                   consistency=self.certificate.consistency,
                   violations=len(self.certificate.violations),
                   iterations=len(self.iterations) - 1)
        return out

    def write_control_csv(self, path):
        c = self.control
        header = ["t"] + [f"u_{j + 1}" for j in range(c.m)]
        return write_csv(path, header, (np.concatenate(([t], row)) for t, row in zip(c.times, c.values)))

    def write_report(self, path):
        return write_kv(path, self.scalar_metrics())

    def write_iterations_csv(self, path):
        return write_csv(path, ["iter", "objective"], ((it, obj) for it, obj, _ in self.iterations))


# -- costs -------------------------------------------------------------------

def _values(sys: DiscretizedSystem, u) -> np.ndarray:
    return sys.control(u).values


def terminal_error_sq(sys: DiscretizedSystem, u) -> float:
    xT = sys.terminal_map.terminal_state(_values(sys, u))
    return sys.norm_sq(xT - sys.xf)


def evaluate_cost(sys: DiscretizedSystem, u, kind: str = "J1",
                  penalty: Optional[PenaltySpec] = None, zero_tol: float = ZERO_TOL) -> float:
    """``J0``, ``J1`` or ``Jpsi`` of a piecewise-constant control."""
    v = _values(sys, u)
    term = sys.lam * terminal_error_sq(sys, v) if sys.lam > 0 else 0.0
    return sys.delta * _penalty_sum(v, kind, penalty, zero_tol) + term


def _penalty_sum(v, kind, penalty, zero_tol):
    if kind == "J0":
        return float(np.count_nonzero(np.abs(v) > zero_tol))
    if kind == "J1":
        return float(np.abs(v).sum())
    if kind == "Jpsi":
        if penalty is None:
            raise ValidationError("Jpsi needs a penalty")
        return float(penalty.evaluate(v).sum())
    raise ValidationError(f"unknown cost kind {kind!r}")


def sparsity_rate(sys: DiscretizedSystem, u, zero_tol: float = ZERO_TOL) -> float:
    v = _values(sys, u)
    support = sys.delta * np.count_nonzero(np.abs(v) > zero_tol)
    return 1.0 - support / (sys.m * sys.T)


def cost_table(sys, u, penalty=None, zero_tol=ZERO_TOL) -> dict:
    v = _values(sys, u)
    err = terminal_error_sq(sys, v)
    out = {
        "J0": evaluate_cost(sys, v, "J0", zero_tol=zero_tol),
        "J1": evaluate_cost(sys, v, "J1"),
    }
    if penalty is not None:
        out["Jpsi"] = evaluate_cost(sys, v, "Jpsi", penalty)
    out["terminal_error_sq"] = err
    out["sparsity_rate"] = sparsity_rate(sys, v, zero_tol)
    return out


# -- certificate -------------------------------------------------------------

def bang_off_bang_certificate(u, theta, disc_tol: float = 1e-3,
                              theta_tol: float = 1e-2) -> BangOffBangReport:
    """Purity of ``u`` in ``{0, +-1}`` and agreement with the threshold rule.

    Samples with ``| |theta| - 1 | <= theta_tol`` are not checked.
    """
    u = np.atleast_2d(np.asarray(u.values if isinstance(u, ControlSignal) else u, dtype=float))
    theta = np.atleast_2d(np.asarray(theta, dtype=float))
    if u.shape != theta.shape:
        raise ValidationError(f"control {u.shape} and theta {theta.shape} differ in shape")
    dist = np.min(np.abs(u[..., None] - np.array([-1.0, 0.0, 1.0])), axis=-1)
    purity = float(np.mean(dist <= disc_tol)) if u.size else 1.0
    target = np.where(theta > 1 + theta_tol, -1.0, np.where(theta < -1 - theta_tol, 1.0, 0.0))
    checked = np.abs(np.abs(theta) - 1.0) > theta_tol
    bad = checked & (np.abs(u - target) > theta_tol)
    violations = [(int(k), int(j), float(u[k, j]), float(theta[k, j])) for k, j in zip(*np.nonzero(bad))]
    return BangOffBangReport(purity, violations, not violations)


# -- quadratic model ---------------------------------------------------------

class _Model:
    """``f(u) = lam ||Gw u - cw||^2`` in the flattened control, ``Gw = G / sqrt(n_s)``."""

    def __init__(self, sys: DiscretizedSystem):
        tm = sys.terminal_map
        root = math.sqrt(sys.n_s)
        self.sys = sys
        self.Gw = tm.matrix() / root
        self.cw = (sys.xf - tm.free) / root
        self.Q = 2.0 * sys.lam * (self.Gw.T @ self.Gw)
        self.q = 2.0 * sys.lam * (self.Gw.T @ self.cw)
        self.shape = (sys.K, sys.m)

    def smooth(self, u):
        r = self.Gw @ u - self.cw
        return self.sys.lam * float(r @ r)

    def grad(self, u):
        return self.Q @ u - self.q

    def lipschitz(self) -> float:
        return operator_norm(self.Q) if self.sys.lam > 0 else 0.0


def _check_finite(value, where):
    if not math.isfinite(value):
        raise DivergenceError(f"non-finite objective in {where}")


def _fista(model: _Model, delta: float, opts: SolverOptions, u0=None):
    L = model.lipschitz()
    step = 1.0 / L if L > 0 else 1.0
    u = np.zeros(model.q.shape) if u0 is None else u0.copy()

    def F(v):
        return model.smooth(v) + delta * np.abs(v).sum()

    y, t, Fu = u.copy(), 1.0, F(u)
    log = [(0, Fu, step)]
    converged = False
    restarted = False
    for it in range(1, opts.max_iter + 1):
        un = prox_l1_box(y - step * model.grad(y), step * delta)
        Fn = F(un)
        _check_finite(Fn, "FISTA")
        if Fn > Fu:
            if restarted:
                converged = True
                break
            y, t, restarted = u.copy(), 1.0, True
            continue
        restarted = False
        dec = (Fu - Fn) / max(abs(Fu), 1e-300)
        tn = 0.5 * (1.0 + math.sqrt(1.0 + 4.0 * t * t))
        y = un + ((t - 1.0) / tn) * (un - u)
        u, Fu, t = un, Fn, tn
        log.append((it, Fu, step))
        if dec < opts.rel_tol:
            converged = True
            break
    return u, log, converged


def _snap(u, F, tol):
    """Round entries within ``tol`` of ``{0, +-1}`` unless the objective grows."""
    cand = u.copy()
    cand[np.abs(cand) <= tol] = 0.0
    near = np.abs(cand) >= 1.0 - tol
    cand[near] = np.sign(cand[near])
    base = F(u)
    return cand if F(cand) <= base + 1e-12 * max(1.0, abs(base)) else u


def _report(sys, vals, log, opts, method, converged, penalty=None, start="") -> SolveReport:
    ctrl = sys.control(np.clip(vals.reshape(sys.K, sys.m), -1.0, 1.0))
    xT = sys.terminal_map.terminal_state(ctrl.values)
    theta = switching_function(sys, xT)
    cert = bang_off_bang_certificate(ctrl.values, theta, opts.disc_tol, opts.theta_tol)
    costs = cost_table(sys, ctrl, penalty, opts.zero_tol)
    return SolveReport(ctrl, xT, costs, theta, cert, log, method, converged, start)


# -- L1 problem ----------------------------------------------------------------

def solve_l1(sys: DiscretizedSystem, opts: Optional[SolverOptions] = None) -> SolveReport:
    """Minimize ``J1`` over admissible piecewise-constant controls."""
    opts = opts or SolverOptions()
    N = sys.K * sys.m
    if sys.lam == 0:
        return _report(sys, np.zeros(N), [(0, 0.0, 0.0)], opts, opts.method, True)
    model = _Model(sys)
    delta = sys.delta

    def F(v):
        return model.smooth(v) + delta * np.abs(v).sum()

    if opts.method == "ipm":
        res = box_l1_qp(model.Q, model.q, delta, tol=opts.ipm_tol, max_iter=opts.ipm_max_iter)
        u = np.clip(res.u, -1.0, 1.0)
        _check_finite(F(u), "interior point")
        u = _snap(u, F, opts.zero_tol)
        const = model.smooth(np.zeros(N))
        log = [(it, obj + const, st) for it, obj, st in res.log]
        log.append((res.iterations + 1, F(u), 0.0))
        converged = res.converged
    else:
        u, log, converged = _fista(model, delta, opts)
    return _report(sys, u, log, opts, opts.method, converged)


# -- non-convex problem --------------------------------------------------------

def _rounded_start(u: np.ndarray) -> np.ndarray:
    """Concentrate the positive and negative mass of each channel on its largest entries.

    Per channel the total positive mass ``P`` becomes ``floor(P)`` entries at
    +1 plus one fractional remainder, placed on the largest positive entries
    (earlier index first on ties); likewise for the negative mass.
    """
    out = np.zeros_like(u)
    for j in range(u.shape[1]):
        col = u[:, j]
        for sgn in (1.0, -1.0):
            part = np.maximum(sgn * col, 0.0)
            mass = part.sum()
            if mass <= 0:
                continue
            order = np.argsort(-part, kind="stable")
            full = int(math.floor(mass + 1e-12))
            out[order[:full], j] = sgn
            rest = mass - full
            if rest > 1e-12 and full < len(order):
                out[order[full], j] = sgn * rest
    return out


def _prox_gradient(model, penalty, delta, u0, opts, L):
    """Monotone proximal gradient; a step is accepted only on strict decrease."""
    shape = model.shape
    base = 1.0 / L if L > 0 else 1.0

    def F(v):
        return model.smooth(v) + delta * float(penalty.evaluate(v.reshape(shape)).sum())

    u = u0.copy()
    Fu = F(u)
    _check_finite(Fu, "proximal gradient")
    log = [(0, Fu, base)]
    step = base
    converged = False
    for it in range(1, opts.max_iter + 1):
        g = model.grad(u)
        while True:
            un = penalty.prox_apply((u - step * g).reshape(shape), step * delta).reshape(-1)
            Fn = F(un)
            _check_finite(Fn, "proximal gradient")
            if Fn < Fu or np.array_equal(un, u):
                break
            step *= 0.5
            if step < 1e-12 * base:
                break
        if not Fn < Fu:
            converged = True
            break
        dec = (Fu - Fn) / max(abs(Fu), 1e-300)
        u, Fu = un, Fn
        log.append((it, Fu, step))
        step = min(2.0 * step, base)
        if dec < opts.rel_tol:
            converged = True
            break
    return u, Fu, log, converged


def _coordinate_polish(model, penalty, delta, u, max_sweeps=50):
    """Exact coordinate minimization sweeps; each update solves a scalar prox."""
    shape = model.shape
    u = u.copy()
    m = shape[1]
    diag = np.diag(model.Q)
    g = model.grad(u)
    for _ in range(max_sweeps):
        changed = False
        for i in range(u.size):
            if diag[i] <= 0:
                continue
            psi, prox = penalty.channel(i % m)
            v = u[i] - g[i] / diag[i]
            w = float(np.asarray(prox(np.array([v]), delta / diag[i])).reshape(-1)[0])
            if w == u[i]:
                continue
            # Keep the update only if the exact objective change is negative.
            d = w - u[i]
            change = g[i] * d + 0.5 * diag[i] * d * d + delta * float(
                np.asarray(psi(np.array([w]))).reshape(-1)[0] - np.asarray(psi(np.array([u[i]]))).reshape(-1)[0])
            if change < -1e-15 * max(1.0, abs(model.smooth(u))):
                g += model.Q[:, i] * d
                u[i] = w
                changed = True
        if not changed:
            break
    return u


def solve_nonconvex(sys: DiscretizedSystem, penalty: PenaltySpec,
                    opts: Optional[SolverOptions] = None,
                    l1_report: Optional[SolveReport] = None) -> SolveReport:
    """Minimize ``Jpsi`` by monotone proximal gradient from several starts.

    Starts: zero, the L1 solution, ``-sign(theta)`` at ``u = 0``, a rounding
    of the L1 solution that keeps each channel's mass and the nearest point
    of ``{0, +-1}`` to the L1 solution.  Every run
    is finished with exact coordinate-descent sweeps; the best point wins.
    """
    opts = opts or SolverOptions()
    check = validate_penalty(penalty, sys.m)
    if not check.ok:
        raise PenaltyError("penalty rejected: " + "; ".join(check.failures))
    N = sys.K * sys.m
    if sys.lam == 0:
        return _report(sys, np.zeros(N), [(0, 0.0, 0.0)], opts, "prox-gradient", True, penalty, "zero")
    model = _Model(sys)
    delta = sys.delta
    L = model.lipschitz()
    if l1_report is None:
        l1_report = solve_l1(sys, opts)
    u_l1 = l1_report.control.values.reshape(-1)
    theta0 = switching_function(sys, sys.terminal_map.free)
    starts = {
        "zero": np.zeros(N),
        "l1": u_l1,
        "sign": np.clip(-np.sign(theta0), -1.0, 1.0).reshape(-1),
        "rounded-l1": _rounded_start(l1_report.control.values).reshape(-1),
        "nearest-l1": np.round(u_l1),
    }

    def F(v):
        return model.smooth(v) + delta * float(penalty.evaluate(v.reshape(model.shape)).sum())

    best = None
    for name, u0 in starts.items():
        u, Fu, log, conv = _prox_gradient(model, penalty, delta, u0, opts, L)
        u = _coordinate_polish(model, penalty, delta, u)
        Fu = F(u)
        log.append((log[-1][0] + 1, Fu, 0.0))
        if best is None or Fu < best[1]:
            best = (u, Fu, log, conv, name)
    u, _, log, conv, name = best
    return _report(sys, u, log, opts, "prox-gradient", conv, penalty, name)


# -- exhaustive oracle ---------------------------------------------------------

def brute_force_l0(sys: DiscretizedSystem, kind: str = "J0",
                   penalty: Optional[PenaltySpec] = None, chunk: int = 65536):
    """Exhaustive minimum of a cost over ``u`` in ``{-1, 0, 1}^(K x m)``.

    Controls are enumerated in lexicographic order of the flattened array
    and the first minimizer is kept.
    """
    N = sys.K * sys.m
    if 3 ** N > BRUTE_FORCE_LIMIT:
        raise CapacityError(f"3^{N} controls exceed the enumeration limit {BRUTE_FORCE_LIMIT}")
    if kind not in ("J0", "J1", "Jpsi"):
        raise ValidationError(f"unknown cost kind {kind!r}")
    G = sys.terminal_map.matrix()
    c = sys.xf - sys.terminal_map.free
    # On {0, +-1} every admissible penalty counts the support.
    allc = np.array(list(itertools.product((-1.0, 0.0, 1.0), repeat=N)))
    best_cost, best_idx = math.inf, 0
    for s in range(0, len(allc), chunk):
        block = allc[s:s + chunk]
        r = block @ G.T - c
        cost = sys.delta * np.count_nonzero(block, axis=1) + sys.lam * np.einsum("ij,ij->i", r, r) / sys.n_s
        k = int(np.argmin(cost))
        if cost[k] < best_cost:
            best_cost, best_idx = float(cost[k]), s + k
    u = allc[best_idx].reshape(sys.K, sys.m)
    return sys.control(u), evaluate_cost(sys, u, kind, penalty)

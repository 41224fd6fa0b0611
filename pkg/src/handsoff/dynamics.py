"""Time discretization of ``x' = A x + B u`` under piecewise-constant controls.

States live on an ``n_s``-point midpoint grid of [0,1] and L^2 inner products
use the quadrature weight ``1/n_s``.  Controls are constant on ``K`` uniform
intervals of width ``delta = T / K``, which makes the terminal state an affine
function of the control values (the mild solution evaluated exactly).
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from functools import cached_property
from typing import Optional, Union

import numpy as np

from .errors import AdmissibilityError, ShapeError, ValidationError
from .graphon import OperatorMatrix
from .io import write_csv

ADMISSIBLE_SLACK = 1e-12

# Pade(13,13) numerator coefficients and the 1-norm bound below which no
# scaling is needed (Higham 2005).
_PADE13 = (64764752532480000.0, 32382376266240000.0, 7771770303897600.0,
           1187353796428800.0, 129060195264000.0, 10559470521600.0,
           670442572800.0, 33522128640.0, 1323241920.0, 40840800.0,
           960960.0, 16380.0, 182.0, 1.0)
_THETA13 = 5.371920351148152


def matrix_exponential(m, t: float = 1.0) -> np.ndarray:
    """``exp(t M)`` by scaling and squaring with the order-13 Pade approximant."""
    a = np.asarray(m.entries if isinstance(m, OperatorMatrix) else m, dtype=float)
    if a.ndim != 2 or a.shape[0] != a.shape[1]:
        raise ShapeError(f"matrix exponential needs a square matrix, got shape {a.shape}")
    if not np.all(np.isfinite(a)):
        raise ValidationError("matrix has non-finite entries")
    a = a * t
    n = a.shape[0]
    norm1 = np.abs(a).sum(axis=0).max() if n else 0.0
    if norm1 == 0.0:
        return np.eye(n)
    s = max(0, math.ceil(math.log2(norm1 / _THETA13))) if norm1 > _THETA13 else 0
    a = a / 2.0 ** s
    b = _PADE13
    ident = np.eye(n)
    a2 = a @ a
    a4 = a2 @ a2
    a6 = a4 @ a2
    u = a @ (a6 @ (b[13] * a6 + b[11] * a4 + b[9] * a2) + b[7] * a6 + b[5] * a4 + b[3] * a2 + b[1] * ident)
    v = a6 @ (b[12] * a6 + b[10] * a4 + b[8] * a2) + b[6] * a6 + b[4] * a4 + b[2] * a2 + b[0] * ident
    r = np.linalg.solve(v - u, v + u)
    for _ in range(s):
        r = r @ r
    return r


@dataclass(frozen=True, eq=False)
class ControlSignal:
    """``K x m`` control values, constant on uniform intervals of ``[0, T]``."""

    values: np.ndarray
    T: float

    def __post_init__(self):
        v = np.atleast_2d(np.asarray(self.values, dtype=float))
        if np.any(~np.isfinite(v)) or np.abs(v).max(initial=0.0) > 1.0 + ADMISSIBLE_SLACK:
            raise AdmissibilityError("control values must lie in [-1, 1]")
        object.__setattr__(self, "values", np.clip(v, -1.0, 1.0))

    @property
    def K(self) -> int:
        return self.values.shape[0]

    @property
    def m(self) -> int:
        return self.values.shape[1]

    @property
    def delta(self) -> float:
        return self.T / self.K

    @property
    def times(self) -> np.ndarray:
        return np.arange(self.K) * self.delta


@dataclass(frozen=True, eq=False)
class DiscretizedSystem:
    """System ``(A; B; x0)`` with target ``xf``, horizon ``T`` and weight ``lam``.

    ``A`` is an ``n_s x n_s`` matrix acting on grid samples (quadrature
    weight folded in), ``b_cols`` holds the ``m`` input profiles as columns.
    """

    A: np.ndarray
    b_cols: np.ndarray
    x0: np.ndarray
    xf: np.ndarray
    T: float
    lam: float
    K: int
    name: str = ""
    _tmap: Optional["TerminalMap"] = field(default=None, repr=False)

    def __post_init__(self):
        a = np.asarray(self.A.entries if isinstance(self.A, OperatorMatrix) else self.A, dtype=float)
        if a.ndim != 2 or a.shape[0] != a.shape[1]:
            raise ShapeError("A must be square")
        n = a.shape[0]
        b = np.asarray(self.b_cols, dtype=float)
        if b.ndim == 1:
            b = b[:, None]
        if b.shape[0] != n or b.shape[1] < 1:
            raise ShapeError(f"b_cols must be {n} x m with m >= 1, got {b.shape}")
        x0 = np.asarray(self.x0, dtype=float).reshape(-1)
        xf = np.asarray(self.xf, dtype=float).reshape(-1)
        if x0.shape != (n,) or xf.shape != (n,):
            raise ShapeError("x0 and xf must have length n_s")
        if not (self.T > 0 and math.isfinite(self.T)):
            raise ValidationError("horizon T must be positive")
        if not (self.lam >= 0 and math.isfinite(self.lam)):
            raise ValidationError("lambda must be non-negative")
        if int(self.K) != self.K or self.K < 1:
            raise ValidationError("K must be a positive integer")
        for name, val in (("A", a), ("b_cols", b), ("x0", x0), ("xf", xf)):
            object.__setattr__(self, name, val)
        object.__setattr__(self, "K", int(self.K))
        object.__setattr__(self, "T", float(self.T))
        object.__setattr__(self, "lam", float(self.lam))

    @property
    def n_s(self) -> int:
        return self.A.shape[0]

    @property
    def m(self) -> int:
        return self.b_cols.shape[1]

    @property
    def delta(self) -> float:
        return self.T / self.K

    @property
    def times(self) -> np.ndarray:
        """Grid ``t_0 = 0, ..., t_K = T``."""
        return np.linspace(0.0, self.T, self.K + 1)

    @property
    def midtimes(self) -> np.ndarray:
        return (np.arange(self.K) + 0.5) * self.delta

    def inner(self, x, y) -> float:
        return float(np.dot(x, y)) / self.n_s

    def norm_sq(self, x) -> float:
        return float(np.dot(x, x)) / self.n_s

    @cached_property
    def terminal_map(self) -> "TerminalMap":
        return self._tmap if self._tmap is not None else build_terminal_map(self)

    def with_lambda(self, lam: float) -> "DiscretizedSystem":
        """Same dynamics with another weight; the terminal map is shared."""
        return replace(self, lam=lam, _tmap=self.terminal_map)

    def control(self, values) -> ControlSignal:
        """Wrap and check a ``K x m`` array against this system's grid."""
        if isinstance(values, ControlSignal):
            sig = values
        else:
            v = np.asarray(values, dtype=float)
            if v.ndim == 1 and self.m == 1:
                v = v[:, None]
            if v.ndim != 2:
                raise ShapeError(f"control must be K x m = {self.K} x {self.m}")
            sig = ControlSignal(v, self.T)
        if sig.values.shape != (self.K, self.m) or not math.isclose(sig.T, self.T):
            raise ShapeError(f"control grid {sig.values.shape} over T={sig.T:g} does not match "
                             f"system grid ({self.K}, {self.m}) over T={self.T:g}")
        return sig


@dataclass(frozen=True, eq=False)
class TerminalMap:
    """Affine map ``u -> x(T) = free + sum_k gamma[k] @ u_k``.

    ``phi = exp(A delta)``, ``psi = int_0^delta exp(A s) ds`` and
    ``gamma[k] = phi^(K-1-k) psi B``.
    """

    phi: np.ndarray
    psi: np.ndarray
    phi_half: np.ndarray
    gamma: np.ndarray  # K x n_s x m
    free: np.ndarray

    def matrix(self) -> np.ndarray:
        """``n_s x (K m)`` matrix acting on the row-major flattened control."""
        K, n, m = self.gamma.shape
        return self.gamma.transpose(1, 0, 2).reshape(n, K * m)

    def terminal_state(self, values: np.ndarray) -> np.ndarray:
        return self.free + np.einsum("kij,kj->i", self.gamma, values)


def build_terminal_map(sys: DiscretizedSystem) -> TerminalMap:
    n, d = sys.n_s, sys.delta
    phi = matrix_exponential(sys.A, d)
    # exp([[A, I], [0, 0]] d) carries int_0^d exp(A s) ds in its upper-right
    # block; this avoids inverting A, which may be singular.
    aug = np.zeros((2 * n, 2 * n))
    aug[:n, :n] = sys.A
    aug[:n, n:] = np.eye(n)
    psi = matrix_exponential(aug, d)[:n, n:]
    phi_half = matrix_exponential(sys.A, d / 2)
    gamma = np.empty((sys.K, n, sys.m))
    gamma[-1] = psi @ sys.b_cols
    for k in range(sys.K - 2, -1, -1):
        gamma[k] = phi @ gamma[k + 1]
    free = matrix_exponential(sys.A, sys.T) @ sys.x0
    return TerminalMap(phi, psi, phi_half, gamma, free)


def propagate(sys: DiscretizedSystem, u: Union[ControlSignal, np.ndarray]) -> np.ndarray:
    """States at ``t_0, ..., t_K`` as a ``(K+1) x n_s`` array."""
    vals = sys.control(u).values
    tm = sys.terminal_map
    drive = (tm.psi @ sys.b_cols) @ vals.T  # n_s x K
    x = np.empty((sys.K + 1, sys.n_s))
    x[0] = sys.x0
    for k in range(sys.K):
        x[k + 1] = tm.phi @ x[k] + drive[:, k]
    return x


def terminal_state(sys: DiscretizedSystem, u) -> np.ndarray:
    return sys.terminal_map.terminal_state(sys.control(u).values)


def switching_function(sys: DiscretizedSystem, xT: np.ndarray) -> np.ndarray:
    """``theta[k, j] = 2 lam (xT - xf, exp(A (T - t_k)) b_j)`` at interval midpoints ``t_k``.

    ``exp(A (T - t_k)) = phi^(K-1-k) phi_half``; the adjoint powers are applied
    to the residual so each step costs one matrix-vector product.
    """
    xT = np.asarray(xT, dtype=float)
    if xT.shape != (sys.n_s,):
        raise ShapeError(f"terminal state must have length {sys.n_s}")
    tm = sys.terminal_map
    r = tm.phi_half.T @ (xT - sys.xf)
    theta = np.empty((sys.K, sys.m))
    for k in range(sys.K - 1, -1, -1):
        theta[k] = r @ sys.b_cols
        r = tm.phi.T @ r
    return (2.0 * sys.lam / sys.n_s) * theta


def write_trajectory_csv(path, sys: DiscretizedSystem, states: np.ndarray):
    header = ["t"] + [f"x_{i + 1}" for i in range(sys.n_s)]
    return write_csv(path, header, (np.concatenate(([t], x)) for t, x in zip(sys.times, states)))


def write_theta_csv(path, sys: DiscretizedSystem, theta: np.ndarray):
    header = ["t"] + [f"theta_{j + 1}" for j in range(sys.m)]
    return write_csv(path, header, (np.concatenate(([t], th)) for t, th in zip(sys.midtimes, theta)))

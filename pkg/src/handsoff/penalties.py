"""Separable sparsity penalties ``psi(u) = sum_j psi_j(u_j)`` and their proximal maps.

A penalty is admissible for the non-convex formulation when every channel
function satisfies ``psi_j(0) = 0``, ``psi_j(+-1) = 1`` and
``|u| < psi_j(u) <= 1`` on ``(-1, 1) \\ {0}``.  All proximal maps here are
restricted to ``[-1, 1]``:

    prox(v, s) = argmin_{|w| <= 1}  s * psi(w) + (w - v)^2 / 2
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Sequence, Union

import numpy as np

from .errors import ValidationError

Scalar = Callable[[np.ndarray], np.ndarray]
Prox = Callable[[np.ndarray, np.ndarray], np.ndarray]


def soft_threshold(v, s):
    v = np.asarray(v, dtype=float)
    return np.sign(v) * np.maximum(np.abs(v) - s, 0.0)


def prox_l1_box(v, step):
    """Prox of ``step*|.|`` plus the indicator of ``[-1, 1]``."""
    out = np.clip(soft_threshold(v, step), -1.0, 1.0)
    return float(out) if out.ndim == 0 else out


@dataclass(frozen=True)
class PenaltySpec:
    """Per-channel penalty functions with matching proximal maps.

    ``psi`` and ``prox`` are either single callables shared by all channels or
    sequences with one entry per channel.  Both must accept numpy arrays.
    """

    psi: Union[Scalar, Sequence[Scalar]]
    prox: Union[Prox, Sequence[Prox]]
    name: str = "custom"
    params: dict = field(default_factory=dict)

    @property
    def channels(self):
        """Number of explicit channels, or None when shared."""
        return len(self.psi) if isinstance(self.psi, (list, tuple)) else None

    def channel(self, j: int):
        psi = self.psi[j] if isinstance(self.psi, (list, tuple)) else self.psi
        prox = self.prox[j] if isinstance(self.prox, (list, tuple)) else self.prox
        return psi, prox

    def evaluate(self, u: np.ndarray) -> np.ndarray:
        """Entrywise ``psi_j(u[:, j])`` for a ``K x m`` array."""
        u = np.atleast_2d(u)
        out = np.empty_like(u, dtype=float)
        for j in range(u.shape[1]):
            out[:, j] = self.channel(j)[0](u[:, j])
        return out

    def prox_apply(self, v: np.ndarray, step) -> np.ndarray:
        v = np.atleast_2d(v)
        out = np.empty_like(v, dtype=float)
        for j in range(v.shape[1]):
            out[:, j] = self.channel(j)[1](v[:, j], step)
        return out


# -- built-in penalties ----------------------------------------------------

def _argmin_candidates(v, cands, obj):
    """Pick per entry the candidate with the smallest objective (first wins ties)."""
    vals = np.stack([obj(c) for c in cands])
    k = np.argmin(vals, axis=0)
    return np.choose(k, np.stack(cands))


def mcp_penalty(a: float = 0.1) -> PenaltySpec:
    """``psi(u) = (|u| - a u^2) / (1 - a)`` for ``0 < a <= 1/2``.

    With ``a = 0.1`` this is ``(10/9)(|u| - 0.1 u^2)``.
    """
    if not 0.0 < a <= 0.5:
        raise ValidationError("MCP-style penalty needs 0 < a <= 1/2")
    c = 1.0 / (1.0 - a)

    def psi(u):
        u = np.abs(np.asarray(u, dtype=float))
        return c * (u - a * u * u)

    def prox(v, step):
        v = np.asarray(v, dtype=float)
        s = np.broadcast_to(np.asarray(step, dtype=float), v.shape)
        av = np.abs(v)
        curv = 1.0 - 2.0 * a * c * s
        with np.errstate(divide="ignore", invalid="ignore"):
            stat = np.where(curv > 0, (av - c * s) / curv, 0.0)
        stat = np.clip(np.nan_to_num(stat), 0.0, 1.0)

        def obj(w):
            return s * c * (w - a * w * w) + 0.5 * (w - av) ** 2

        w = _argmin_candidates(av, [np.zeros_like(av), stat, np.ones_like(av)], obj)
        return np.sign(v) * w

    return PenaltySpec(psi, prox, name=f"mcp(a={a:g})", params={"a": a})


def lp_penalty(p: float = 0.5) -> PenaltySpec:
    """``psi(u) = |u|^p`` for ``0 < p < 1``."""
    if not 0.0 < p < 1.0:
        raise ValidationError("l^p penalty needs 0 < p < 1")

    def psi(u):
        return np.abs(np.asarray(u, dtype=float)) ** p

    def prox(v, step):
        v = np.asarray(v, dtype=float)
        s = np.broadcast_to(np.asarray(step, dtype=float), v.shape)
        av = np.abs(v)
        # h(w) = s w^p + (w - av)^2 / 2 is convex for w > w_c; its stationary
        # point there is found by bisection on h'.
        w_c = np.minimum((s * p * (1.0 - p)) ** (1.0 / (2.0 - p)), 1.0)
        lo, hi = w_c.copy(), np.ones_like(av)

        def dh(w):
            with np.errstate(divide="ignore"):
                return s * p * np.where(w > 0, w ** (p - 1.0), np.inf) + w - av

        for _ in range(80):
            mid = 0.5 * (lo + hi)
            neg = dh(mid) < 0
            lo = np.where(neg, mid, lo)
            hi = np.where(neg, hi, mid)
        stat = 0.5 * (lo + hi)

        def obj(w):
            return s * w ** p + 0.5 * (w - av) ** 2

        w = _argmin_candidates(av, [np.zeros_like(av), stat, np.ones_like(av)], obj)
        return np.sign(v) * w

    return PenaltySpec(psi, prox, name=f"lp(p={p:g})", params={"p": p})


def l1_penalty() -> PenaltySpec:
    """``psi(u) = |u|``; convex, so it does not pass the strict bound check."""
    return PenaltySpec(lambda u: np.abs(np.asarray(u, dtype=float)), prox_l1_box, name="l1")


def numeric_prox(psi: Scalar, grid: int = 4001) -> Prox:
    """Prox by grid search on ``[-1, 1]`` refined with golden-section search."""
    w = np.linspace(-1.0, 1.0, grid)
    pw = psi(w)
    h = 2.0 / (grid - 1)
    gr = (np.sqrt(5.0) - 1.0) / 2.0

    def prox(v, step):
        v = np.atleast_1d(np.asarray(v, dtype=float))
        s = np.broadcast_to(np.asarray(step, dtype=float), v.shape)
        out = np.empty_like(v)
        for i, (vi, si) in enumerate(zip(v, s)):
            k = int(np.argmin(si * pw + 0.5 * (w - vi) ** 2))
            a, b = max(-1.0, w[k] - h), min(1.0, w[k] + h)

            def f(x):
                return si * float(psi(np.array([x]))[0]) + 0.5 * (x - vi) ** 2

            c, d = b - gr * (b - a), a + gr * (b - a)
            for _ in range(40):
                if f(c) < f(d):
                    b = d
                else:
                    a = c
                c, d = b - gr * (b - a), a + gr * (b - a)
            x = 0.5 * (a + b)
            out[i] = x if f(x) <= f(w[k]) else w[k]
        return out

    return prox


BUILTIN_PENALTIES = ("mcp", "lp", "l1")


def builtin_penalty(name: str, **params) -> PenaltySpec:
    if name == "mcp":
        return mcp_penalty(params.get("a", 0.1))
    if name == "lp":
        return lp_penalty(params.get("p", 0.5))
    if name == "l1":
        return l1_penalty()
    raise ValidationError(f"unknown penalty id {name!r}; choose from {', '.join(BUILTIN_PENALTIES)}")


# -- validation ------------------------------------------------------------

@dataclass
class PenaltyReport:
    ok: bool
    failures: list
    max_prox_deviation: float


def validate_penalty(penalty: PenaltySpec, m: int = 1, n_prox: int = 50, seed: int = 0,
                     atol: float = 1e-9) -> PenaltyReport:
    """Grid-check the structural conditions and the prox of every channel.

    The conditions are checked on a 1e-3 grid of ``[-1, 1]``.  The prox is
    compared at ``n_prox`` random ``(v, step)`` pairs against brute-force
    minimization on a 1e-4 grid; a deviation above 2e-4 counts as a failure
    unless the two points tie in objective (non-unique minimizer).
    Failures are returned, not raised.
    """
    if penalty.channels is not None:
        m = penalty.channels
    failures = []
    u = np.round(np.linspace(-1.0, 1.0, 2001), 12)
    fine = np.linspace(-1.0, 1.0, 20001)
    rng = np.random.default_rng(seed)
    max_dev = 0.0
    for j in range(m):
        psi, prox = penalty.channel(j)
        tag = f"channel {j + 1}"
        try:
            vals = np.asarray(psi(u), dtype=float)
        except Exception as exc:  # noqa: BLE001 - reported, not raised
            failures.append(f"{tag}: evaluator raised {exc!r}")
            continue
        if vals.shape != u.shape or not np.all(np.isfinite(vals)):
            failures.append(f"{tag}: evaluator must return finite values elementwise")
            continue
        zero = u == 0.0
        inner = (~zero) & (np.abs(u) < 1.0)
        if abs(vals[zero][0]) > atol:
            failures.append(f"{tag}: psi(0) = {vals[zero][0]:.3g}, expected 0")
        for end in (-1.0, 1.0):
            v_end = vals[u == end][0]
            if abs(v_end - 1.0) > atol:
                failures.append(f"{tag}: psi({end:+g}) = {v_end:.6g}, expected 1")
        gap = vals[inner] - np.abs(u[inner])
        if np.any(gap <= 0.0):
            k = np.flatnonzero(gap <= 0.0)[0]
            failures.append(f"{tag}: |u| < psi(u) violated at u = {u[inner][k]:.3f}")
        if np.any(vals[inner] > 1.0 + atol):
            k = np.flatnonzero(vals[inner] > 1.0 + atol)[0]
            failures.append(f"{tag}: psi(u) <= 1 violated at u = {u[inner][k]:.3f}")
        if np.max(np.abs(np.diff(vals))) > 0.1:
            failures.append(f"{tag}: psi jumps by more than 0.1 between 1e-3 grid points "
                            "(not continuous)")

        pf = np.asarray(psi(fine), dtype=float)
        vs = rng.uniform(-2.0, 2.0, n_prox)
        ss = rng.uniform(0.0, 2.0, n_prox)
        try:
            got = np.asarray(prox(vs, ss), dtype=float).reshape(-1)
        except Exception as exc:  # noqa: BLE001
            failures.append(f"{tag}: prox raised {exc!r}")
            continue
        bad = 0
        for v, s, w in zip(vs, ss, got):
            obj = s * pf + 0.5 * (fine - v) ** 2
            k = int(np.argmin(obj))
            dev = abs(w - fine[k])
            if dev > 2e-4:
                h_w = s * float(np.asarray(psi(np.array([w])))[0]) + 0.5 * (w - v) ** 2
                if abs(w) <= 1.0 and h_w <= obj[k] + 1e-9:
                    dev = 0.0  # tie between distinct minimizers
            max_dev = max(max_dev, dev)
            bad += dev > 2e-4
        if bad:
            failures.append(f"{tag}: prox deviates from grid minimizer by more than 2e-4 "
                            f"at {bad} of {n_prox} points")
    return PenaltyReport(not failures, failures, max_dev)

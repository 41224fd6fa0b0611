"""Primal-dual interior point method for the box-constrained l1 QP

    minimize  0.5 u'Q u - q'u + w * ||u||_1   subject to  -1 <= u <= 1

with ``Q`` symmetric positive semidefinite.  The split ``u = p - n`` with
``0 <= p, n <= 1`` turns it into a bound-constrained QP; Mehrotra's
predictor-corrector is applied to that form and the Newton systems are
reduced back to size ``len(u)``.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
import scipy.linalg as sla


@dataclass
class QPResult:
    u: np.ndarray
    iterations: int
    converged: bool
    log: list = field(default_factory=list)  # (iter, objective, step)


def _max_step(x, dx):
    neg = dx < 0
    if not neg.any():
        return 1.0
    return min(1.0, float(np.min(-x[neg] / dx[neg])))


def box_l1_qp(Q: np.ndarray, q: np.ndarray, weight: float, tol: float = 1e-10,
              max_iter: int = 200) -> QPResult:
    N = q.shape[0]
    gp, gn = weight - q, weight + q
    # Duals scale with the l1 weight, so complementarity is measured against
    # it; this keeps entries that belong at a bound within ~tol of it.
    qmax = float(np.abs(q).max(initial=0.0))
    mu_tol = tol * (weight if weight > 0 else max(qmax, 1e-300))
    res_tol = tol * max(qmax, weight, 1e-300)
    scale = max(qmax, weight, 1e-300)

    def objective(u):
        return 0.5 * u @ (Q @ u) - q @ u + weight * np.abs(u).sum()

    p = np.full(N, 0.5)
    n = np.full(N, 0.5)
    # Upper slacks are iterated separately; recomputing 1 - p cancels to 0
    # once p rounds to 1.
    sp = np.full(N, 0.5)
    sn = np.full(N, 0.5)
    yp, wp, yn, wn = (np.full(N, scale) for _ in range(4))
    log = []
    converged = False
    step = 0.0
    it = 0
    for it in range(max_iter + 1):
        u = p - n
        Qu = Q @ u
        rp = Qu + gp - yp + wp
        rn = -Qu + gn - yn + wn
        mu = (p @ yp + sp @ wp + n @ yn + sn @ wn) / (4 * N)
        log.append((it, float(objective(u)), step))
        if mu <= mu_tol and max(np.abs(rp).max(), np.abs(rn).max()) <= res_tol:
            converged = True
            break
        if it == max_iter:
            break
        Sp = yp / p + wp / sp
        Sn = yn / n + wn / sn
        cf = sla.cho_factor(Q + np.diag(Sp * Sn / (Sp + Sn)))

        def newton(cyp, cwp, cyn, cwn):
            # Complementarity rows: p dyp + yp dp = cyp, sp dwp - wp dp = cwp.
            r1 = -rp + cyp / p - cwp / sp
            r2 = -rn + cyn / n - cwn / sn
            du = sla.cho_solve(cf, r1 - Sp * (r1 + r2) / (Sp + Sn))
            dp = (Sn * du + r1 + r2) / (Sp + Sn)
            dn = dp - du
            return (dp, dn, (cyp - yp * dp) / p, (cwp + wp * dp) / sp,
                    (cyn - yn * dn) / n, (cwn + wn * dn) / sn)

        def lengths(d):
            dp, dn, dyp, dwp, dyn, dwn = d
            prim = min(_max_step(p, dp), _max_step(n, dn), _max_step(sp, -dp), _max_step(sn, -dn))
            dual = min(_max_step(yp, dyp), _max_step(wp, dwp), _max_step(yn, dyn), _max_step(wn, dwn))
            return prim, dual

        aff = newton(-p * yp, -sp * wp, -n * yn, -sn * wn)
        ap, ad = lengths(aff)
        dp, dn, dyp, dwp, dyn, dwn = aff
        mu_aff = ((p + ap * dp) @ (yp + ad * dyp) + (sp - ap * dp) @ (wp + ad * dwp)
                  + (n + ap * dn) @ (yn + ad * dyn) + (sn - ap * dn) @ (wn + ad * dwn)) / (4 * N)
        sm = (mu_aff / mu) ** 3 * mu
        d = newton(sm - p * yp - dp * dyp, sm - sp * wp + dp * dwp,
                   sm - n * yn - dn * dyn, sm - sn * wn + dn * dwn)
        ap, ad = lengths(d)
        ap, ad = min(1.0, 0.995 * ap), min(1.0, 0.995 * ad)
        dp, dn, dyp, dwp, dyn, dwn = d
        p, n = p + ap * dp, n + ap * dn
        sp, sn = sp - ap * dp, sn - ap * dn
        yp, wp, yn, wn = yp + ad * dyp, wp + ad * dwp, yn + ad * dyn, wn + ad * dwn
        step = ap
    return QPResult(p - n, it, converged, log)

"""Acceptance gate: one test and one printed PASS/FAIL line per criterion.

Criterion 4 cannot pass as stated: the first input of Example 1 is exactly
orthogonal to every fourth eigenfunction, so the spectral test must reject
it.  That test is a strict expected failure; see the decisions ledger.
"""

import itertools
import math
import time

import numpy as np
import pytest
import scipy.linalg as sla

from handsoff import (EXAMPLE1, DiscretizedSystem, FiniteNetwork, build_lifted_system, builtin_graphon, check_sandwich,
                      discretize_operator, evaluate_cost, lift, matrix_exponential, midpoints, mcp_penalty,
                      l1_penalty, lp_penalty, propagate, prox_l1_box, solve_l1, solve_nonconvex, spectral_check,
                      step_graphon_from_adjacency, switching_function, terminal_state, validate_penalty)
from handsoff.config import PRESETS, parse_config
from handsoff.network import convergence_experiment, example3_limit, example3_network

from conftest import random_symmetric, rk4_piecewise, tiny_system


@pytest.fixture
def announce(capsys):
    def emit(number, ok, detail):
        with capsys.disabled():
            print(f"\ncriterion {number}: {'PASS' if ok else 'FAIL'} - {detail}")
    return emit


def preset(name):
    return parse_config(PRESETS[name])


# 1 ----------------------------------------------------------------------------

def test_criterion_1_example1_golden(announce):
    t0 = time.perf_counter()
    r = solve_l1(preset("example1").system())
    elapsed = time.perf_counter() - t0
    rate, purity = r.costs["sparsity_rate"], r.certificate.purity
    ok = abs(rate - 0.7837) <= 0.05 and purity >= 0.98 and elapsed <= 60
    announce(1, ok, f"sparsity_rate={rate:.4f} (0.7837 +- 0.05), purity={purity:.4f} (>= 0.98), "
                    f"{elapsed:.2f} s (<= 60 s)")
    assert ok


# 2 ----------------------------------------------------------------------------

def test_criterion_2_example2_golden(announce):
    t0 = time.perf_counter()
    cfg = preset("example2-mcp")
    s = cfg.system()
    l1 = solve_l1(s, cfg.options)
    nc = solve_nonconvex(s, cfg.penalty, cfg.options, l1_report=l1)
    elapsed = time.perf_counter() - t0
    err = nc.costs["terminal_error_sq"]
    rate_nc, rate_l1 = nc.costs["sparsity_rate"], l1.costs["sparsity_rate"]
    ok = abs(err - 0.02194) <= 0.005 and rate_nc > rate_l1 and elapsed <= 60
    announce(2, ok, f"terminal_error_sq={err:.5f} (0.02194 +- 0.005), sparsity nonconvex={rate_nc:.4f} "
                    f"> l1={rate_l1:.4f}, {elapsed:.2f} s (<= 60 s)")
    assert ok


# 3 ----------------------------------------------------------------------------

def test_criterion_3_example3_trend(announce):
    exp = preset("example3").raw["experiment"]
    t0 = time.perf_counter()
    res = convergence_experiment(example3_limit(), example3_network, exp["n_list"], exp["lambda_list"],
                                 T=exp["T"], K=exp["K"], n_s=exp["n_s"])
    elapsed = time.perf_counter() - t0
    first, last = min(exp["n_list"]), max(exp["n_list"])
    shrink = {lam: (res.gaps(lam)[first], res.gaps(lam)[last]) for lam in exp["lambda_list"]}
    decreasing = all(g[1] < g[0] for g in shrink.values())
    min_gap = min(r.gap for r in res.records)
    ok = decreasing and min_gap >= -1e-6 and elapsed <= 600
    summary = ", ".join(f"lam={lam:g}: {g[0]:.3g}->{g[1]:.3g}" for lam, g in shrink.items())
    announce(3, ok, f"gap(n=10)->gap(n=500) {summary}; min gap={min_gap:.3g}; {elapsed:.1f} s (<= 600 s)")
    assert ok


# 4 ----------------------------------------------------------------------------

def criterion_4_verdicts():
    s1, s2 = preset("example1").system(), preset("example2-mcp").system()
    return spectral_check(s1.A, s1.b_cols), spectral_check(s2.A, s2.b_cols)


@pytest.mark.xfail(strict=True, reason="Example 1 input 1 is orthogonal to sqrt(2) sin(4 k pi a); "
                                       "the spectral test is correctly negative")
def test_criterion_4_controllability_verdicts(announce):
    r1, r2 = criterion_4_verdicts()
    ok = r1.overall and not r2.overall
    announce(4, ok, f"example1 overall={r1.overall} (expected True; min |(b_j, phi_i)| per channel "
                    f"{', '.join(f'{v:.1e}' for v in r1.min_b_projection)}, min_gap={r1.min_gap:.1e}), "
                    f"example2 overall={r2.overall} (expected False)")
    assert ok


def test_criterion_4_example2_part_and_example1_diagnosis():
    r1, r2 = criterion_4_verdicts()
    assert not r2.overall and r2.min_abs_eigenvalue < 1e-12
    # The negative Example 1 verdict is the exact orthogonality, not noise.
    a = midpoints(100)
    phi4 = math.sqrt(2) * np.sin(4 * math.pi * a)
    b1 = preset("example1").system().b_cols[:, 0]
    assert abs(b1 @ phi4 / 100) < 1e-14
    assert r1.min_b_projection[0] < 1e-12


# 5 ----------------------------------------------------------------------------

def independent_costs(s, u, psi):
    """Costs recomputed with scipy's expm on the augmented generator."""
    n, K = s.n_s, s.K
    aug = np.zeros((2 * n, 2 * n))
    aug[:n, :n], aug[:n, n:] = s.A, np.eye(n)
    e = sla.expm(aug * s.delta)
    phi, psi_int = e[:n, :n], e[:n, n:]
    x = s.x0.copy()
    for k in range(K):
        x = phi @ x + psi_int @ (s.b_cols @ u[k])
    term = s.lam * np.sum((x - s.xf) ** 2) / n
    return {"J0": s.delta * np.count_nonzero(np.abs(u) > 1e-6) + term,
            "J1": s.delta * np.abs(u).sum() + term,
            "Jpsi": s.delta * psi(u).sum() + term}


def test_criterion_5_oracle_equivalence(announce):
    pen = mcp_penalty(0.1)
    worst_l1 = worst_nc = -math.inf
    for i in range(25):
        s = tiny_system(1000 + i)
        oracle = min(independent_costs(s, np.reshape(v, (s.K, 1)), pen.psi)["J0"]
                     for v in itertools.product((-1.0, 0.0, 1.0), repeat=s.K))
        l1 = solve_l1(s)
        nc = solve_nonconvex(s, pen, l1_report=l1)
        worst_l1 = max(worst_l1, independent_costs(s, l1.control.values, pen.psi)["J1"] - oracle)
        worst_nc = max(worst_nc, independent_costs(s, nc.control.values, pen.psi)["Jpsi"] - oracle)
    ok = worst_l1 <= 1e-6 and worst_nc <= 1e-6
    announce(5, ok, f"25 instances; max(J1 - oracle)={worst_l1:.2e}, max(Jpsi - oracle)={worst_nc:.2e} "
                    "(<= 1e-6)")
    assert ok


# 6 ----------------------------------------------------------------------------

def test_criterion_6_eigenvalue_convergence(announce):
    e1 = np.linalg.eigvalsh(discretize_operator(EXAMPLE1, 200).entries)
    e3 = np.linalg.eigvalsh(discretize_operator(builtin_graphon("halfplane"), 200).entries)
    d1 = abs(np.abs(e1).max() - 1 / math.pi ** 2)
    d3 = abs(np.abs(e3).max() - 2 / math.pi)
    ok = d1 <= 1e-3 and d3 <= 1e-3
    announce(6, ok, f"n_s=200: |top - 1/pi^2|={d1:.2e}, |top - 2/pi|={d3:.2e} (<= 1e-3)")
    assert ok


# 7 ----------------------------------------------------------------------------

def _sandwich_suite():
    rng = np.random.default_rng(7)
    for _ in range(100):
        n = int(rng.integers(1, 13))
        g = step_graphon_from_adjacency(random_symmetric(rng, n, -1, 1), signed=True)
        r = check_sandwich(g, mode="exact")
        if not (r.holds and r.certificate == "exact"):
            return False
    return True


def _j1_below_j0():
    rng = np.random.default_rng(8)
    s = tiny_system(8, K=10, m=2)
    for _ in range(100):
        u = rng.uniform(-1, 1, (s.K, s.m)) * (rng.random((s.K, s.m)) < 0.6)
        if evaluate_cost(s, u, "J1") > evaluate_cost(s, u, "J0") + 1e-12:
            return False
    return True


def _random_system(seed, n=8, m=2, K=10):
    rng = np.random.default_rng(seed)
    return DiscretizedSystem(random_symmetric(rng, n, -1, 1) / n, rng.uniform(-1, 1, (n, m)),
                             rng.uniform(-1, 1, n), rng.uniform(-1, 1, n), 1.5, 3.0, K)


def _linear_identities():
    rng = np.random.default_rng(9)
    for seed in range(10):
        m = random_symmetric(rng, 5, -1, 1)
        t, r = rng.uniform(0, 2, 2)
        lhs = matrix_exponential(m, t + r)
        if np.linalg.norm(lhs - matrix_exponential(m, t) @ matrix_exponential(m, r), 2) > 1e-10:
            return False
        s = _random_system(seed)
        free = propagate(s, np.zeros((s.K, s.m)))
        u1, u2 = rng.uniform(-0.5, 0.5, (2, s.K, s.m))
        sup = (propagate(s, u1 + u2) - free) - (propagate(s, u1) - free) - (propagate(s, u2) - free)
        if np.abs(sup).max() > 1e-10:
            return False
        if np.abs(propagate(s, u1)[-1] - terminal_state(s, u1)).max() > 1e-10:
            return False
    return True


def _theta_derivative():
    n = 100
    a = midpoints(n)
    A = discretize_operator(EXAMPLE1, n).entries * 5.0
    s = DiscretizedSystem(A, np.stack([(a <= 0.5) * 1.0, np.sin(3 * a)], 1), np.cos(a), -a * (a - 1),
                          2.0, 7.0, 400)
    xT = terminal_state(s, np.zeros((s.K, s.m)))
    th = switching_function(s, xT)
    fd = (th[2:] - th[:-2]) / (2 * s.delta)
    exact = np.array([-2 * s.lam * (xT - s.xf) @ sla.expm(A * (s.T - t)) @ A @ s.b_cols / n
                      for t in s.midtimes[1:-1]])
    return np.max(np.abs(fd - exact) / np.abs(exact).max(axis=0)) <= 1e-4


def _lift_correspondence():
    for seed in range(20):
        rng = np.random.default_rng(seed)
        net = FiniteNetwork(random_symmetric(rng, 6), rng.uniform(-1, 1, (6, 2)), rng.uniform(-1, 1, 6),
                            rng.uniform(-1, 1, 6))
        s = build_lifted_system(net, 1.5, 1.0, 6, 12)
        u = np.random.default_rng(100 + seed).uniform(-1, 1, (6, 2))
        finite = rk4_piecewise(net.adjacency / 6, net.B_mat, net.x0_vec, u, 1.5, sub=20)
        lifted = propagate(s, u)
        if max(math.sqrt(np.mean((lift(f, 12) - x) ** 2)) for f, x in zip(finite, lifted)) > 1e-6:
            return False
    return True


def _prox_oracle():
    grid = np.linspace(-1.0, 1.0, 20001)
    rng = np.random.default_rng(10)
    cases = [(np.abs, lambda v, s: prox_l1_box(v, s))]
    cases += [(p.psi, p.prox) for p in (mcp_penalty(0.1), lp_penalty(0.5))]
    for psi, prox in cases:
        pv = psi(grid)
        for v, s in zip(rng.uniform(-2, 2, 200), rng.uniform(0, 2, 200)):
            h = s * pv + 0.5 * (grid - v) ** 2
            w = float(np.asarray(prox(np.array([v]), s)).ravel()[0])
            ref = grid[np.argmin(h)]
            obj = s * psi(np.array([w]))[0] + 0.5 * (w - v) ** 2
            if abs(w - ref) > 2e-4 and obj > h.min() + 1e-9:
                return False
    return True


def _validator():
    return validate_penalty(mcp_penalty(0.1), m=2).ok and not validate_penalty(l1_penalty()).ok


def test_criterion_7_property_suites(announce):
    suites = {"sandwich": _sandwich_suite, "J1<=J0": _j1_below_j0, "semigroup/superposition/terminal":
              _linear_identities, "theta-derivative": _theta_derivative, "lift": _lift_correspondence,
              "prox-oracle": _prox_oracle, "validator": _validator}
    results = {name: bool(fn()) for name, fn in suites.items()}
    ok = all(results.values())
    failed = [k for k, v in results.items() if not v]
    announce(7, ok, f"{len(results) - len(failed)}/{len(results)} suites pass"
                    + (f"; failing: {', '.join(failed)}" if failed else ""))
    assert ok


# 8 ----------------------------------------------------------------------------

def test_criterion_8_threshold_consistency(announce):
    systems = []
    cfg = preset("example3")
    base = cfg.system()
    systems += [base.with_lambda(lam) for lam in cfg.lambda_list]
    for seed in range(30):
        rng = np.random.default_rng(seed)
        A = random_symmetric(rng, 8, -1, 1) / 8
        systems.append(DiscretizedSystem(A, rng.uniform(-1, 1, (8, 2)), rng.uniform(-1, 1, 8),
                                         rng.uniform(-1, 1, 8), 2.0, float(10 ** rng.uniform(0, 3)), 100))
    checked = bad = 0
    for s in systems:
        if not spectral_check(s.A, s.b_cols).overall:
            continue
        checked += 1
        bad += not solve_l1(s).certificate.consistency
    ok = checked > 0 and bad == 0
    announce(8, ok, f"{checked} systems pass spectral_check; {bad} fail threshold consistency")
    assert ok

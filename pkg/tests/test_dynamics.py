import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from handsoff import (ControlSignal, DiscretizedSystem, EXAMPLE1, build_terminal_map, discretize_operator,
                      matrix_exponential, midpoints, propagate, switching_function, terminal_state)
from handsoff.dynamics import write_theta_csv, write_trajectory_csv
from handsoff.errors import AdmissibilityError, ShapeError, ValidationError
from handsoff.io import read_csv

from conftest import random_symmetric, rk4_piecewise, tiny_system


def taylor_expm(m, t, terms=60):
    out = np.eye(m.shape[0])
    term = np.eye(m.shape[0])
    for k in range(1, terms):
        term = term @ (m * t) / k
        out = out + term
    return out


def random_system(seed, n=8, m=2, K=10, T=1.5, lam=3.0):
    rng = np.random.default_rng(seed)
    A = random_symmetric(rng, n, -1, 1) / n
    return DiscretizedSystem(A, rng.uniform(-1, 1, (n, m)), rng.uniform(-1, 1, n), rng.uniform(-1, 1, n),
                             T, lam, K)


class TestMatrixExponential:
    def test_zero_is_identity(self):
        assert np.array_equal(matrix_exponential(np.zeros((3, 3))), np.eye(3))

    def test_diagonal(self):
        d = np.array([-2.0, 0.5, 3.0])
        assert np.allclose(matrix_exponential(np.diag(d), 0.7), np.diag(np.exp(0.7 * d)), rtol=1e-13)

    def test_taylor_oracle(self, rng):
        for _ in range(5):
            m = random_symmetric(rng, 3, -1, 1)
            assert np.allclose(matrix_exponential(m, 1.0), taylor_expm(m, 1.0), rtol=0, atol=1e-10)

    def test_relative_accuracy_vs_eigendecomposition(self, rng):
        for scale in (0.1, 1.0, 10.0):
            m = random_symmetric(rng, 6, -1, 1)
            m *= scale / np.abs(np.linalg.eigvalsh(m)).max()
            lam, v = np.linalg.eigh(m)
            ref = (v * np.exp(lam)) @ v.T
            assert np.linalg.norm(matrix_exponential(m) - ref) <= 1e-12 * np.linalg.norm(ref) * 10

    def test_non_square(self):
        with pytest.raises(ShapeError):
            matrix_exponential(np.zeros((2, 3)))

    def test_non_finite(self):
        with pytest.raises(ValidationError):
            matrix_exponential(np.array([[np.inf]]))

    def test_semigroup(self, rng):
        for _ in range(10):
            m = random_symmetric(rng, 5, -1, 1)
            t, s = rng.uniform(0, 2, 2)
            lhs = matrix_exponential(m, t + s)
            rhs = matrix_exponential(m, t) @ matrix_exponential(m, s)
            assert np.linalg.norm(lhs - rhs, 2) <= 1e-10

    @settings(max_examples=30, deadline=None)
    @given(st.integers(0, 2 ** 31 - 1), st.floats(0.0, 3.0))
    def test_norm_growth(self, seed, t):
        rng = np.random.default_rng(seed)
        m = random_symmetric(rng, 4, -1, 1)
        x = rng.standard_normal(4)
        bound = math.exp(np.abs(np.linalg.eigvalsh(m)).max() * t) * np.linalg.norm(x)
        assert np.linalg.norm(matrix_exponential(m, t) @ x) <= bound * (1 + 1e-12)


class TestSystemValidation:
    def base(self, **kw):
        args = dict(A=np.zeros((2, 2)), b_cols=np.ones(2), x0=np.zeros(2), xf=np.ones(2), T=1.0, lam=1.0, K=3)
        args.update(kw)
        return DiscretizedSystem(**args)

    def test_valid(self):
        s = self.base()
        assert (s.n_s, s.m, s.delta) == (2, 1, pytest.approx(1 / 3))
        assert np.allclose(s.times, [0, 1 / 3, 2 / 3, 1])

    @pytest.mark.parametrize("kw,err", [
        (dict(A=np.zeros((2, 3))), ShapeError),
        (dict(b_cols=np.ones(3)), ShapeError),
        (dict(x0=np.zeros(3)), ShapeError),
        (dict(T=0.0), ValidationError),
        (dict(lam=-1.0), ValidationError),
        (dict(K=0), ValidationError),
        (dict(K=2.5), ValidationError),
    ])
    def test_invalid(self, kw, err):
        with pytest.raises(err):
            self.base(**kw)

    def test_inner_product_weight(self):
        s = self.base(A=np.zeros((4, 4)), b_cols=np.ones(4), x0=np.zeros(4), xf=np.ones(4))
        assert s.inner(np.ones(4), np.full(4, 2.0)) == pytest.approx(2.0)
        assert s.norm_sq(np.ones(4)) == pytest.approx(1.0)

    def test_control_admissibility(self):
        with pytest.raises(AdmissibilityError):
            ControlSignal(np.array([[1.5]]), 1.0)
        sig = ControlSignal(np.array([[1.0 + 1e-13]]), 1.0)
        assert sig.values[0, 0] == 1.0

    def test_control_grid_mismatch(self):
        s = self.base()
        with pytest.raises(ShapeError):
            s.control(np.zeros((4, 1)))
        with pytest.raises(ShapeError):
            s.control(ControlSignal(np.zeros((3, 1)), 2.0))


class TestTerminalMap:
    def test_zero_generator(self):
        s = DiscretizedSystem(np.zeros((3, 3)), np.eye(3)[:, :2], np.zeros(3), np.zeros(3), 2.0, 1.0, 4)
        tm = build_terminal_map(s)
        assert np.allclose(tm.phi, np.eye(3))
        assert np.allclose(tm.psi, 0.5 * np.eye(3))
        assert np.allclose(tm.gamma, 0.5 * s.b_cols)

    def test_single_step(self):
        s = random_system(1, K=1)
        u = np.array([[0.3, -0.7]])
        expected = matrix_exponential(s.A, s.T) @ s.x0 + s.terminal_map.psi @ s.b_cols @ u[0]
        assert np.allclose(terminal_state(s, u), expected, atol=1e-13)

    def test_matches_propagation(self):
        for seed in range(5):
            s = random_system(seed)
            u = np.random.default_rng(seed).uniform(-1, 1, (s.K, s.m))
            assert np.max(np.abs(propagate(s, u)[-1] - terminal_state(s, u))) <= 1e-10

    def test_matches_rk4(self):
        for seed in range(3):
            s = random_system(seed, K=8)
            u = np.random.default_rng(seed + 10).uniform(-1, 1, (s.K, s.m))
            ref = rk4_piecewise(s.A, s.b_cols, s.x0, u, s.T, sub=10)
            assert np.max(np.abs(ref[-1] - terminal_state(s, u))) <= 1e-7
            assert np.max(np.abs(ref - propagate(s, u))) <= 1e-7

    def test_singular_generator(self):
        # Rank-one averaging operator: exp(A t) = I + (e^t - 1) P on the mean.
        n = 6
        s = DiscretizedSystem(np.full((n, n), 1.0 / n), np.ones(n), np.zeros(n), np.zeros(n), 1.0, 1.0, 5)
        assert np.allclose(s.terminal_map.psi @ np.ones(n), (math.exp(0.2) - 1) * np.ones(n))

    def test_with_lambda_shares_map(self):
        s = random_system(3)
        s2 = s.with_lambda(10.0)
        assert s2.terminal_map is s.terminal_map and s2.lam == 10.0


class TestPropagate:
    def test_zero_control_is_free_response(self):
        s = random_system(4)
        x = propagate(s, np.zeros((s.K, s.m)))
        assert np.allclose(x[-1], matrix_exponential(s.A, s.T) @ s.x0, atol=1e-13)

    def test_zero_generator_constant_control(self):
        n, T = 4, 3.0
        b = np.random.default_rng(0).uniform(-1, 1, (n, 2))
        x0 = np.arange(n, dtype=float)
        s = DiscretizedSystem(np.zeros((n, n)), b, x0, np.zeros(n), T, 1.0, 6)
        assert np.allclose(propagate(s, np.ones((6, 2)))[-1], x0 + T * b.sum(axis=1))

    def test_shape_and_admissibility_errors(self):
        s = random_system(5)
        with pytest.raises(ShapeError):
            propagate(s, np.zeros((s.K + 1, s.m)))
        with pytest.raises(AdmissibilityError):
            propagate(s, np.full((s.K, s.m), 2.0))

    def test_superposition(self, rng):
        s = random_system(6)
        free = propagate(s, np.zeros((s.K, s.m)))
        u1 = rng.uniform(-0.5, 0.5, (s.K, s.m))
        u2 = rng.uniform(-0.5, 0.5, (s.K, s.m))
        lhs = propagate(s, u1 + u2) - free
        rhs = (propagate(s, u1) - free) + (propagate(s, u2) - free)
        assert np.max(np.abs(lhs - rhs)) <= 1e-10

    def test_csv_exports(self, tmp_path):
        s = random_system(7, n=3, m=2, K=4)
        u = np.zeros((4, 2))
        header, data = read_csv(write_trajectory_csv(tmp_path / "x.csv", s, propagate(s, u)))
        assert header == ["t", "x_1", "x_2", "x_3"] and data.shape == (5, 4)
        header, data = read_csv(write_theta_csv(tmp_path / "th.csv", s, switching_function(s, s.xf)))
        assert header == ["t", "theta_1", "theta_2"] and np.allclose(data[:, 0], s.midtimes)


def theta_direct(s, xT, t):
    """2 lam (xT - xf, exp(A (T - t)) b_j) with the quadrature weight."""
    e = matrix_exponential(s.A, s.T - t)
    return 2 * s.lam * (xT - s.xf) @ e @ s.b_cols / s.n_s


class TestSwitchingFunction:
    def test_zero_at_target(self):
        s = random_system(8)
        assert np.all(switching_function(s, s.xf) == 0.0)

    def test_linear_in_lambda(self):
        s = random_system(9)
        xT = terminal_state(s, np.zeros((s.K, s.m)))
        assert np.allclose(switching_function(s.with_lambda(2 * s.lam), xT), 2 * switching_function(s, xT),
                           rtol=1e-14)

    def test_midpoint_definition(self):
        s = random_system(10)
        xT = terminal_state(s, np.zeros((s.K, s.m)))
        th = switching_function(s, xT)
        for k in (0, 3, s.K - 1):
            assert np.allclose(th[k], theta_direct(s, xT, s.midtimes[k]), rtol=1e-11)

    def test_length_check(self):
        s = random_system(11)
        with pytest.raises(ShapeError):
            switching_function(s, np.zeros(s.n_s + 1))

    def test_derivative_identity(self):
        # d theta_j / dt = -2 lam (xT - xf, exp(A (T - t)) A b_j).
        n = 100
        a = midpoints(n)
        A = discretize_operator(EXAMPLE1, n).entries * 5.0
        s = DiscretizedSystem(A, np.stack([(a <= 0.5) * 1.0, np.sin(3 * a)], 1), np.cos(a), -a * (a - 1),
                              2.0, 7.0, 400)
        xT = terminal_state(s, np.zeros((s.K, s.m)))
        th = switching_function(s, xT)
        fd = (th[2:] - th[:-2]) / (2 * s.delta)
        exact = np.array([-2 * s.lam * (xT - s.xf) @ matrix_exponential(A, s.T - t) @ A @ s.b_cols / n
                          for t in s.midtimes[1:-1]])
        assert np.max(np.abs(fd - exact) / np.abs(exact).max(axis=0)) <= 1e-4

    def test_divided_difference_bounds(self):
        # |theta^(k)| <= 2 lam ||xT - xf|| e^{|A| T} |A|^k ||b|| for k = 1, 2.
        s = random_system(12, n=20, K=400, T=2.0)
        xT = terminal_state(s, np.zeros((s.K, s.m)))
        th = switching_function(s, xT)
        norm_a = np.abs(np.linalg.eigvalsh(s.A)).max()
        d1 = np.diff(th, axis=0) / s.delta
        d2 = np.diff(th, 2, axis=0) / s.delta ** 2
        for k, d in ((1, d1), (2, d2)):
            for j in range(s.m):
                bound = (2 * s.lam * math.sqrt(s.norm_sq(xT - s.xf)) * math.exp(norm_a * s.T)
                         * norm_a ** k * math.sqrt(s.norm_sq(s.b_cols[:, j])))
                assert np.abs(d[:, j]).max() <= bound * (1 + 1e-9)


def test_tiny_system_helper_is_valid():
    s = tiny_system(0)
    assert s.K == 4 and s.m == 1 and 2 <= s.n_s <= 6

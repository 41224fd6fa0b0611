import numpy as np
import pytest
from scipy.stats import ortho_group

from handsoff import spectral_check
from handsoff.config import PRESETS, parse_config
from handsoff.errors import ShapeError, ValidationError
from handsoff.io import read_csv, read_kv

from conftest import random_symmetric


def preset_system(name):
    return parse_config(PRESETS[name]).system()


class TestVerdicts:
    def test_diagonal_distinct(self):
        n = 3
        rep = spectral_check(np.diag([1.0, 2.0, 3.0]) / n, np.ones(n))
        assert rep.overall and rep.verdicts == [True] and rep.truncation_rank == 3
        assert np.allclose(rep.eigenvalues, [1 / 3, 2 / 3, 1.0])
        assert rep.min_b_projection[0] == pytest.approx(1 / np.sqrt(3))

    def test_zero_eigenvalue(self):
        rep = spectral_check(np.diag([0.0, 1.0, 2.0]), np.ones(3))
        assert not rep.overall and rep.min_abs_eigenvalue == 0.0

    def test_repeated_eigenvalue(self):
        rep = spectral_check(np.diag([1.0, 1.0, 2.0]), np.ones(3))
        assert not rep.overall and rep.min_gap == 0.0

    def test_orthogonal_input(self):
        rep = spectral_check(np.diag([1.0, 2.0, 3.0]), np.array([[1.0, 1.0], [0.0, 1.0], [1.0, 1.0]]))
        assert rep.verdicts == [False, True] and not rep.overall

    def test_example2_fails(self):
        s = preset_system("example2-mcp")
        rep = spectral_check(s.A, s.b_cols)
        assert not rep.overall and rep.min_abs_eigenvalue < 1e-12

    def test_example3_passes(self):
        s = preset_system("example3")
        assert spectral_check(s.A, s.b_cols).overall

    def test_example1_input_orthogonality(self):
        # b_1 = 1_[0,1/2] is orthogonal to sqrt(2) sin(4 k pi a), so some
        # projections vanish to rounding and the verdict is negative.
        s = preset_system("example1")
        rep = spectral_check(s.A, s.b_cols)
        assert rep.min_b_projection[0] < 1e-12
        assert not rep.overall

    def test_asymmetric_rejected(self):
        with pytest.raises(ValidationError):
            spectral_check(np.array([[0.0, 1.0], [0.5, 0.0]]), np.ones(2))

    def test_shape_errors(self):
        with pytest.raises(ShapeError):
            spectral_check(np.zeros((2, 3)), np.ones(2))
        with pytest.raises(ShapeError):
            spectral_check(np.eye(2), np.ones(3))


class TestProperties:
    def test_scale_covariance(self, rng):
        A = random_symmetric(rng, 8, -1, 1) / 8
        b = rng.standard_normal((8, 2))
        base = spectral_check(A, b)
        for c in (2.0, 10.0):
            rep = spectral_check(c * A, b, tol_zero=c * 1e-8, tol_gap=c * 1e-8)
            assert np.allclose(rep.eigenvalues, c * base.eigenvalues, rtol=1e-12)
            assert rep.verdicts == base.verdicts

    def test_basis_independence(self, rng):
        A = random_symmetric(rng, 7, -1, 1) / 7
        b = rng.standard_normal((7, 2))
        Q = ortho_group.rvs(7, random_state=3)
        r1 = spectral_check(A, b)
        r2 = spectral_check(Q @ A @ Q.T, Q @ b, sym_tol=1e-10)
        assert np.allclose(r1.eigenvalues, r2.eigenvalues, atol=1e-9)
        assert r1.min_abs_eigenvalue == pytest.approx(r2.min_abs_eigenvalue, abs=1e-9)
        assert r1.min_gap == pytest.approx(r2.min_gap, abs=1e-9)
        assert np.allclose(r1.min_b_projection, r2.min_b_projection, atol=1e-9)
        assert r1.overall == r2.overall

    def test_numerical_kernel_excluded_from_rank(self):
        rep = spectral_check(np.diag([0.0, 0.0, 1.0, 2.0]), np.ones(4))
        assert rep.truncation_rank == 2


def test_exports(tmp_path):
    rep = spectral_check(np.diag([1.0, 2.0]), np.ones(2))
    kv = read_kv(rep.write_report(tmp_path / "c.txt"))
    assert kv["overall"] == "true" and kv["verdict_1"] == "true"
    header, data = read_csv(rep.write_eigenvalues_csv(tmp_path / "e.csv"))
    assert header == ["index", "eigenvalue"] and np.allclose(data[:, 1], [1.0, 2.0])

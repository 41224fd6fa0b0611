import numpy as np
import pytest

from handsoff import DiscretizedSystem, discretize_operator, step_graphon_from_adjacency


def random_symmetric(rng, n, lo=0.0, hi=1.0):
    w = rng.uniform(lo, hi, (n, n))
    return np.triu(w) + np.triu(w, 1).T


def tiny_system(seed, n_max=6, K=4, m=1):
    """Random small system on a step graphon; the grid is the node set."""
    rng = np.random.default_rng(seed)
    n = int(rng.integers(2, n_max + 1))
    A = discretize_operator(step_graphon_from_adjacency(random_symmetric(rng, n)), n)
    b = rng.uniform(-1.0, 1.0, (n, m))
    x0 = rng.uniform(-1.0, 1.0, n)
    xf = rng.uniform(-1.0, 1.0, n)
    T = float(rng.uniform(0.5, 2.0))
    lam = float(10 ** rng.uniform(-1.0, 2.0))
    return DiscretizedSystem(A, b, x0, xf, T, lam, K, name=f"tiny-{seed}")


def rk4(f, x0, t0, t1, steps):
    """Classical RK4 with a fixed number of steps."""
    h = (t1 - t0) / steps
    x, t = np.array(x0, dtype=float), t0
    for _ in range(steps):
        k1 = f(t, x)
        k2 = f(t + h / 2, x + h / 2 * k1)
        k3 = f(t + h / 2, x + h / 2 * k2)
        k4 = f(t + h, x + h * k3)
        x = x + h / 6 * (k1 + 2 * k2 + 2 * k3 + k4)
        t += h
    return x


def rk4_piecewise(A, B, x0, U, T, sub=10):
    """Integrate x' = A x + B u_k over each control interval with ``sub`` RK4 steps."""
    K = U.shape[0]
    d = T / K
    x = np.array(x0, dtype=float)
    states = [x]
    for k in range(K):
        drive = B @ U[k]
        x = rk4(lambda t, y: A @ y + drive, x, k * d, (k + 1) * d, sub)
        states.append(x)
    return np.array(states)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)

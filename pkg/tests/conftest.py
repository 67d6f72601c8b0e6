import numpy as np
import pytest

from sss.harness import GeneratorSpec, generate_problem


def fd_step(x):
    return 1e-6 * np.maximum(np.abs(x), 1.0)


def fd_gradient(f, x):
    """Central differences with step 1e-6 * max(|x_i|, 1)."""
    x = np.asarray(x, dtype=float)
    h = fd_step(x)
    g = np.empty_like(x)
    for i in range(x.size):
        e = np.zeros_like(x)
        e[i] = h[i]
        g[i] = (f(x + e) - f(x - e)) / (2 * h[i])
    return g


def fd_jacobian(grad, x):
    x = np.asarray(x, dtype=float)
    h = fd_step(x)
    J = np.empty((x.size, x.size))
    for j in range(x.size):
        e = np.zeros_like(x)
        e[j] = h[j]
        J[:, j] = (grad(x + e) - grad(x - e)) / (2 * h[j])
    return 0.5 * (J + J.T)


def gauss_solve(M, rhs):
    """Gaussian elimination with partial pivoting in plain Python floats."""
    n = len(rhs)
    a = [list(map(float, row)) + [float(r)] for row, r in zip(M, rhs)]
    for col in range(n):
        piv = max(range(col, n), key=lambda r: abs(a[r][col]))
        a[col], a[piv] = a[piv], a[col]
        for r in range(col + 1, n):
            f = a[r][col] / a[col][col]
            for cc in range(col, n + 1):
                a[r][cc] -= f * a[col][cc]
    x = [0.0] * n
    for r in range(n - 1, -1, -1):
        s = a[r][n] - sum(a[r][cc] * x[cc] for cc in range(r + 1, n))
        x[r] = s / a[r][r]
    return np.array(x)


@pytest.fixture
def rng():
    return np.random.default_rng(20240607)


@pytest.fixture(scope="session")
def medium_problem():
    """N=200, K=5, M=120 noiseless instance in the regime where recovery works."""
    return generate_problem(GeneratorSpec(n=200, k=5, m=120, seed=11))

import numpy as np
import pytest

from sepfw.kernels import available_backends, load_backend

HAS_COMPILED = "compiled" in available_backends()

pytestmark = pytest.mark.skipif(not HAS_COMPILED,
                                reason="compiled kernels unavailable")


@pytest.fixture(scope="module")
def backends():
    return load_backend("python"), load_backend("compiled")


def uc_args(rng, nb):
    return (rng.uniform(10, 20, nb), rng.uniform(2, 5, nb), rng.uniform(1, 20, nb),
            rng.uniform(3, 5, nb), rng.uniform(30, 50, nb), rng.uniform(1, 2, nb),
            rng.uniform(3, 6, nb))


def test_uc_conjugate_parity(backends):
    py, cy = backends
    rng = np.random.default_rng(0)
    for _ in range(20):
        nb, N = int(rng.integers(1, 9)), int(rng.integers(1, 12))
        args = uc_args(rng, nb)
        V = rng.normal(0, 60, (nb, N))
        P = rng.normal(0, 60, (nb, N))
        o1 = py.uc_conjugate_batch(*args, V, P)
        o2 = cy.uc_conjugate_batch(*args, V, P)
        for a, b in zip(o1, o2):
            assert np.allclose(a, b, rtol=1e-13, atol=1e-11)
        assert np.array_equal(o1[1], o2[1])     # schedules match exactly


def test_uc_value_parity(backends):
    py, cy = backends
    rng = np.random.default_rng(1)
    nb, N = 6, 7
    args = uc_args(rng, nb)
    U = (rng.uniform(size=(nb, N)) > 0.5).astype(float)
    G = np.where(U > 0.5, rng.uniform(1, 6, (nb, N)), 0.0)
    assert np.allclose(py.uc_value_batch(*args[:5], U, G),
                       cy.uc_value_batch(*args[:5], U, G), rtol=1e-13)


def test_pev_greedy_parity(backends):
    py, cy = backends
    rng = np.random.default_rng(2)
    for _ in range(20):
        nb, N = int(rng.integers(1, 9)), int(rng.integers(1, 15))
        gains = rng.normal(0, 1, (nb, N))
        if rng.uniform() < 0.3:
            gains[0, : N // 2 + 1] = 0.5      # exercise stable tie handling
        lo = rng.integers(0, N + 1, nb)
        hi = np.minimum(lo + rng.integers(0, N, nb), N)
        v1, u1 = py.pev_greedy_batch(gains, lo, hi)
        v2, u2 = cy.pev_greedy_batch(gains, lo, hi)
        assert np.allclose(v1, v2, rtol=1e-13)
        assert np.array_equal(u1, u2)


def test_exact_carath_parity(backends):
    py, cy = backends
    rng = np.random.default_rng(3)
    for trial in range(10):
        p = int(rng.integers(3, 9))
        N = int(rng.integers(p + 2, 8 * p))
        W = rng.normal(size=(p, N))
        lam = rng.uniform(0.05, 1.0, N)
        u = rng.normal(size=(6, N))
        u /= np.linalg.norm(u, axis=1, keepdims=True)
        a1, k1 = py.exact_carath_core(lam, u, dense=W)
        a2, k2 = cy.exact_carath_core(lam, u, dense=W)
        assert np.array_equal(k1, k2)
        assert np.allclose(a1, a2, rtol=1e-8, atol=1e-10)
        w_star = W @ lam
        for a, k in ((a1, k1), (a2, k2)):
            assert np.linalg.norm(W[:, k] @ a - w_star) \
                <= 1e-8 * (1 + np.linalg.norm(w_star))


def test_exact_carath_lifted_parity(backends):
    py, cy = backends
    rng = np.random.default_rng(4)
    nb, m, per = 4, 3, 12
    N = nb * per
    costs = rng.normal(0, 100, N)
    images = rng.normal(size=(m, N))
    blocks = np.repeat(np.arange(nb), per).astype(np.int64)
    order = np.argsort(np.tile(np.arange(per), nb), kind="stable")
    costs, images, blocks = costs[order], images[:, order], blocks[order]
    lam = rng.uniform(0.05, 0.5, N)
    u = rng.normal(size=(6, N))
    u /= np.linalg.norm(u, axis=1, keepdims=True)
    lifted = (costs, images, blocks, nb)
    a1, k1 = py.exact_carath_core(lam, u, lifted=lifted)
    a2, k2 = cy.exact_carath_core(lam, u, lifted=lifted)
    assert np.array_equal(k1, k2)
    assert np.allclose(a1, a2, rtol=1e-8, atol=1e-10)


def test_backend_selection_reports():
    import sepfw
    assert sepfw.BACKEND in ("python", "compiled")
    with pytest.raises(ValueError):
        load_backend("fortran")

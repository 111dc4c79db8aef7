import itertools

import numpy as np
import pytest

from sepfw.approx import ApproxResult, fcfw, mnp, project_simplex, simplex_ls


class TestProjectSimplex:
    def test_already_on_simplex(self):
        v = np.array([0.2, 0.8])
        assert np.allclose(project_simplex(v), v)

    def test_vertex(self):
        assert np.allclose(project_simplex(np.array([2.0, 0.0])), [1.0, 0.0])

    def test_against_threshold_grid(self):
        # oracle: scan the scalar threshold theta on a fine grid
        rng = np.random.default_rng(0)
        for _ in range(20):
            v = rng.normal(0, 1, 7)
            thetas = np.arange(v.min() - 1.0, v.max() + 1e-9, 1e-3)
            sums = np.maximum(v[None, :] - thetas[:, None], 0.0).sum(axis=1)
            best = thetas[np.argmin(np.abs(sums - 1.0))]
            ref = np.maximum(v - best, 0.0)
            got = project_simplex(v)
            assert np.abs(got - ref).max() <= 2e-3
            assert got.sum() == pytest.approx(1.0, abs=1e-12)
            assert np.all(got >= 0)

    def test_non_finite_rejected(self):
        with pytest.raises(ValueError):
            project_simplex(np.array([np.nan, 1.0]))


def kkt_enumeration_optimum(S, target):
    """Exact simplex least squares by support enumeration."""
    k = S.shape[1]
    best = np.inf
    for r in range(1, k + 1):
        for support in itertools.combinations(range(k), r):
            sub = S[:, support]
            # equality-constrained LS on the support via KKT
            G = sub.T @ sub
            kkt = np.zeros((r + 1, r + 1))
            kkt[:r, :r] = G
            kkt[:r, r] = 1.0
            kkt[r, :r] = 1.0
            rhs = np.concatenate([sub.T @ target, [1.0]])
            try:
                sol = np.linalg.lstsq(kkt, rhs, rcond=None)[0]
            except np.linalg.LinAlgError:
                continue
            beta = sol[:r]
            if np.any(beta < -1e-10):
                continue
            obj = 0.5 * np.linalg.norm(sub @ beta - target) ** 2
            best = min(best, obj)
    return best


class TestSimplexLS:
    def test_single_column(self):
        beta, info = simplex_ls(np.array([[1.0], [2.0]]), np.array([0.0, 0.0]))
        assert np.allclose(beta, [1.0])
        assert info.converged

    def test_segment_fraction(self):
        a = np.array([0.0, 0.0])
        b = np.array([1.0, 1.0])
        target = 0.25 * b
        beta, info = simplex_ls(np.stack([a, b], axis=1), target)
        assert np.allclose(beta, [0.75, 0.25], atol=1e-6)

    def test_matches_enumeration(self):
        rng = np.random.default_rng(3)
        for _ in range(10):
            S = rng.normal(size=(4, 6))
            target = rng.normal(size=4)
            beta, info = simplex_ls(S, target, tol=1e-12, max_iter=20000)
            obj = 0.5 * np.linalg.norm(S @ beta - target) ** 2
            ref = kkt_enumeration_optimum(S, target)
            assert obj <= ref + 1e-8 * (1 + abs(ref))
            assert obj >= ref - 1e-10

    def test_budget_flag(self):
        rng = np.random.default_rng(4)
        S = rng.normal(size=(3, 5))
        S[:, 4] = S[:, 3] + 1e-9      # near-duplicate: slow conditioning
        beta, info = simplex_ls(S, rng.normal(size=3), tol=1e-16, max_iter=3)
        assert not info.converged
        assert beta.shape == (5,)


class TestFCFW:
    def test_single_matching_column(self):
        col = np.array([[1.0], [2.0], [3.0]])
        res = fcfw(col, col[:, 0], T=2)
        assert res.history[0] == pytest.approx(0.0, abs=1e-14)
        assert res.residual <= 1e-14

    def test_mean_of_three(self):
        rng = np.random.default_rng(5)
        S = rng.normal(size=(6, 3))
        target = S.mean(axis=1)
        res = fcfw(S, target, T=3)
        assert res.residual <= 1e-8
        assert np.all(res.beta >= 0)
        assert res.beta.sum() == pytest.approx(1.0, abs=1e-10)

    def test_linear_tail_on_random_hull_target(self):
        rng = np.random.default_rng(6)
        S = rng.normal(size=(10, 100))
        w = rng.dirichlet(np.ones(100))
        target = S @ w
        res = fcfw(S, target, T=10)
        # residual decreasing and log-linear tail has negative slope
        assert np.all(np.diff(res.history) <= 1e-12)
        tail = np.log(np.maximum(res.history[5:], 1e-16))
        slope = np.polyfit(np.arange(tail.size), tail, 1)[0]
        assert slope < 0

    def test_deterministic(self):
        rng = np.random.default_rng(7)
        S = rng.normal(size=(5, 30))
        target = S @ rng.dirichlet(np.ones(30))
        r1 = fcfw(S, target, T=8)
        r2 = fcfw(S, target, T=8)
        assert np.array_equal(r1.beta, r2.beta)
        assert np.array_equal(r1.indices, r2.indices)


class TestMNP:
    def test_single_matching_column(self):
        col = np.array([[1.0], [2.0]])
        res = mnp(col, col[:, 0], T=3)
        assert res.residual <= 1e-14

    def test_midpoint_of_segment(self):
        S = np.array([[0.0, 2.0], [0.0, 0.0]])
        target = np.array([1.0, 0.0])
        res = mnp(S, target, T=5)
        assert res.residual <= 1e-12
        order = np.argsort(res.indices)
        assert np.allclose(res.beta[order], [0.5, 0.5], atol=1e-10)

    def test_tracks_fcfw_quality(self):
        rng = np.random.default_rng(8)
        for trial in range(5):
            S = rng.normal(size=(10, 100))
            target = S @ rng.dirichlet(np.ones(100))
            rf = fcfw(S, target, T=10)
            rm = mnp(S, target, T=20)
            assert rm.residual <= 10 * max(rf.residual, 1e-13)

    def test_weights_on_simplex(self):
        rng = np.random.default_rng(9)
        S = rng.normal(size=(6, 40))
        target = S @ rng.dirichlet(np.ones(40))
        res = mnp(S, target, T=15)
        assert np.all(res.beta >= 0)
        assert res.beta.sum() == pytest.approx(1.0, abs=1e-10)

    def test_deterministic(self):
        rng = np.random.default_rng(10)
        S = rng.normal(size=(5, 30))
        target = S @ rng.dirichlet(np.ones(30))
        r1 = mnp(S, target, T=8)
        r2 = mnp(S, target, T=8)
        assert np.array_equal(r1.beta, r2.beta)

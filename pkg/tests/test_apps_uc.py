import itertools
import math

import numpy as np
import pytest

from sepfw import serialize
from sepfw.apps import uc
from sepfw.apps.uc import UCParams, UnitCommitmentOracle, uc_conjugate, uc_gamma, uc_linmin


def random_params(rng, N):
    return UCParams(c01=float(rng.uniform(5, 50)), c10=float(rng.uniform(1, 12)),
                    beta=float(rng.uniform(1, 20)), gamma_c=float(rng.uniform(3, 5)),
                    omega=float(rng.uniform(30, 50)), g_min=float(rng.uniform(0.5, 2)),
                    g_max=float(rng.uniform(3, 8)), n_steps=N)


def step_cost(params, u, g, uprev):
    if u == 1:
        return params.c01 * (1 - uprev) + params.beta * g * g + params.gamma_c * g + params.omega
    return params.c10 * uprev


def enumerate_conjugate(params, v, p):
    """Exhaustive max over on/off patterns with closed-form g per step."""
    N = params.n_steps
    best = -math.inf
    for pattern in itertools.product((0, 1), repeat=N):
        total, uprev = 0.0, 0
        for t in range(N):
            if pattern[t] == 1:
                gstar = np.clip((p[t] - params.gamma_c) / (2 * params.beta),
                                params.g_min, params.g_max)
                total += v[t] + p[t] * gstar - step_cost(params, 1, gstar, uprev)
            else:
                total += -step_cost(params, 0, 0.0, uprev)
            uprev = pattern[t]
        best = max(best, total)
    return best


def enumerate_gamma(params):
    N = params.n_steps
    hi, lo = -math.inf, math.inf
    qmin_g = np.clip(-params.gamma_c / (2 * params.beta), params.g_min, params.g_max)
    for pattern in itertools.product((0, 1), repeat=N):
        top, bot, uprev = 0.0, 0.0, 0
        for t in range(N):
            if pattern[t] == 1:
                qlo = step_cost(params, 1, qmin_g, uprev)
                qhi = max(step_cost(params, 1, params.g_min, uprev),
                          step_cost(params, 1, params.g_max, uprev))
                top += qhi
                bot += qlo
            else:
                top += step_cost(params, 0, 0.0, uprev)
                bot += step_cost(params, 0, 0.0, uprev)
            uprev = pattern[t]
        hi = max(hi, top)
        lo = min(lo, bot)
    return hi - lo


class TestConjugate:
    def test_very_negative_direction_stays_off(self):
        rng = np.random.default_rng(0)
        params = random_params(rng, 1)
        val, (u, g) = uc_conjugate(params, np.array([-1e6]), np.array([0.0]))
        assert val == 0.0
        assert u[0] == 0.0 and g[0] == 0.0

    def test_single_step_grid(self):
        rng = np.random.default_rng(1)
        for _ in range(20):
            params = random_params(rng, 1)
            v = rng.normal(0, 50, 1)
            p = rng.normal(0, 50, 1)
            val, _ = uc_conjugate(params, v, p)
            gs = np.linspace(params.g_min, params.g_max,
                             int((params.g_max - params.g_min) / 1e-5) + 2)
            off = 0.0
            on = (v[0] - params.c01
                  + np.max(p[0] * gs - (params.beta * gs ** 2 + params.gamma_c * gs
                                        + params.omega)))
            assert val == pytest.approx(max(off, on), abs=1e-5)

    def test_three_steps_vs_enumeration(self):
        rng = np.random.default_rng(2)
        for _ in range(200):
            params = random_params(rng, 3)
            v = rng.normal(0, 60, 3)
            p = rng.normal(0, 60, 3)
            val, (u, g) = uc_conjugate(params, v, p)
            ref = enumerate_conjugate(params, v, p)
            assert val == pytest.approx(ref, rel=1e-6, abs=1e-9)
            # Fenchel-Young at the returned point
            oracle = UnitCommitmentOracle(params)
            x = np.concatenate([u, g])
            fy = oracle.value(x) + val - (v @ u + p @ g)
            assert abs(fy) <= 1e-8 * (1 + abs(val))


class TestLinmin:
    def test_all_positive_costs_stay_off(self):
        rng = np.random.default_rng(3)
        params = random_params(rng, 4)
        u, g = uc_linmin(params, np.ones(4), np.ones(4))
        assert np.all(u == 0) and np.all(g == 0)

    def test_strongly_negative_single_step(self):
        rng = np.random.default_rng(4)
        params = random_params(rng, 3)
        c_g = np.array([0.1, -100.0, 0.1])
        u, g = uc_linmin(params, np.full(3, 0.5), c_g)
        assert u.tolist() == [0.0, 1.0, 0.0]
        assert g[1] == params.g_max

    def test_matches_exhaustive_grid(self):
        rng = np.random.default_rng(5)
        for _ in range(20):
            N = int(rng.integers(1, 6))
            params = random_params(rng, N)
            cu = rng.normal(0, 1, N)
            cg = rng.normal(0, 1, N)
            u, g = uc_linmin(params, cu, cg)
            got = cu @ u + cg @ g
            best = math.inf
            for pattern in itertools.product((0, 1, 2), repeat=N):
                uu = [1.0 if s > 0 else 0.0 for s in pattern]
                gg = [params.g_min if s == 1 else params.g_max if s == 2 else 0.0
                      for s in pattern]
                best = min(best, float(np.dot(cu, uu) + np.dot(cg, gg)))
            assert got == pytest.approx(best, rel=1e-12, abs=1e-12)


class TestGamma:
    def test_single_step_formula(self):
        rng = np.random.default_rng(6)
        params = random_params(rng, 1)
        qmax = max(params.beta * params.g_min ** 2 + params.gamma_c * params.g_min,
                   params.beta * params.g_max ** 2 + params.gamma_c * params.g_max) \
            + params.omega
        gv = np.clip(-params.gamma_c / (2 * params.beta), params.g_min, params.g_max)
        qmin = params.beta * gv ** 2 + params.gamma_c * gv + params.omega
        expected = max(0.0, params.c01 + qmax) - min(0.0, params.c01 + qmin)
        assert uc_gamma(params) == pytest.approx(expected, rel=1e-12)

    def test_three_steps_vs_enumeration(self):
        rng = np.random.default_rng(7)
        for _ in range(25):
            params = random_params(rng, 3)
            assert uc_gamma(params) == pytest.approx(enumerate_gamma(params), rel=1e-10)

    def test_paper_scale_magnitude(self):
        inst = uc.uc_generate(50, 10, seed=0)
        gmax = max(blk.oracle.gamma_bound() for blk in inst.blocks)
        assert 2e3 < gmax < 3e5    # order-of-magnitude envelope


class TestGenerator:
    def test_deterministic(self):
        a = serialize.dumps(uc.uc_generate(6, 4, seed=12))
        b = serialize.dumps(uc.uc_generate(6, 4, seed=12))
        assert a == b

    def test_parameter_ranges(self):
        n, N = 40, 6
        inst = uc.uc_generate(n, N, seed=9)
        assert np.all(-inst.b >= 100) and np.all(-inst.b <= 300)
        betas, gams, oms, ps = [], [], [], []
        for blk in inst.blocks:
            prm = blk.params
            assert prm["g_max"] == pytest.approx(4 * prm["g_min"])
            p = prm["g_max"] / 2
            assert 100 / n <= p <= 300 / n
            assert 1 <= prm["beta"] <= 20
            assert 3 <= prm["gamma"] <= 5
            assert 30 <= prm["omega"] <= 50
            betas.append(prm["beta"]); gams.append(prm["gamma"])
            oms.append(prm["omega"]); ps.append(p)
        c01 = inst.blocks[0].params["c01"]
        expected = sum(b * p * p + g * p + o
                       for b, g, o, p in zip(betas, gams, oms, ps)) / (2 * n)
        assert c01 == pytest.approx(expected, rel=1e-12)
        assert inst.blocks[0].params["c10"] == pytest.approx(c01 / 4)

    def test_demand_satisfiable_monte_carlo(self):
        ok = 0
        for seed in range(100):
            inst = uc.uc_generate(50, 10, seed=seed)
            total_gmax = sum(blk.params["g_max"] for blk in inst.blocks)
            if total_gmax >= np.max(-inst.b):
                ok += 1
        assert ok >= 95


class TestOracle:
    def test_value_rejects_fractional(self):
        rng = np.random.default_rng(8)
        params = random_params(rng, 3)
        oracle = UnitCommitmentOracle(params)
        x = np.zeros(6)
        x[0] = 0.4
        assert oracle.value(x) == math.inf

    def test_value_rejects_out_of_range_g(self):
        rng = np.random.default_rng(9)
        params = random_params(rng, 2)
        oracle = UnitCommitmentOracle(params)
        x = np.array([1.0, 0.0, params.g_max * 2, 0.0])
        assert oracle.value(x) == math.inf
        x = np.array([0.0, 0.0, params.g_max / 2, 0.0])   # off but producing
        assert oracle.value(x) == math.inf

    def test_repair_rounds_up(self):
        rng = np.random.default_rng(10)
        params = random_params(rng, 3)
        oracle = UnitCommitmentOracle(params)
        on = oracle.linmin(-np.ones(6))
        off = oracle.linmin(np.ones(6))
        x = 0.3 * on + 0.7 * off
        xh = oracle.repair(x)
        assert math.isfinite(oracle.value(xh))
        assert np.all(xh[3:] >= x[3:] - 1e-12)    # production never decreases

    def test_batch_matches_per_block(self):
        inst = uc.uc_generate(7, 5, seed=13)
        rng = np.random.default_rng(14)
        for _ in range(10):
            alpha = float(abs(rng.normal())) if rng.uniform() > 0.3 else 0.0
            g = np.abs(rng.normal(0, 5, inst.m))
            costs, points, images = inst.batch_lmo(alpha, g)
            for i, blk in enumerate(inst.blocks):
                d = blk.A.T @ g
                x = blk.oracle.conjugate(-d / alpha)[1] if alpha > 0 \
                    else blk.oracle.linmin(d)
                assert np.allclose(points[i], x, atol=1e-10)
                assert costs[i] == blk.oracle.value(points[i])
                assert np.allclose(images[i], blk.A @ points[i], atol=1e-12)

import numpy as np
import pytest

from sepfw.apps import pev, quadbox, uc
from sepfw.model import BlockSpec, ProblemInstance
from sepfw.apps.quadbox import QuadBoxOracle, QuadBoxParams


def single_quad_instance(b_val: float) -> ProblemInstance:
    """One block, f(x) = x^2 on [-1, 1], A = [1], b = [b_val]."""
    params = QuadBoxParams(q=[1.0], c=[0.0], lo=[-1.0], hi=[1.0])
    spec = BlockSpec(A=np.array([[1.0]]), oracle=QuadBoxOracle(params), dim=1,
                     app="quadratic-box", params=params.to_dict())
    return ProblemInstance(n=1, m=1, blocks=[spec], b=np.array([b_val]))


@pytest.fixture
def quad1():
    return single_quad_instance(0.0)


@pytest.fixture
def small_quadbox():
    return quadbox.quadbox_generate(4, d=3, m=2, seed=11)


@pytest.fixture
def small_uc():
    return uc.uc_generate(6, 4, seed=11)


@pytest.fixture
def small_pev():
    return pev.pev_generate(6, N=10, seed=11)


def oracle_suite():
    """(name, instance) pairs covering all three applications."""
    return [
        ("quadratic-box", quadbox.quadbox_generate(3, d=3, m=2, seed=5)),
        ("uc", uc.uc_generate(3, 3, seed=5)),
        ("pev", pev.pev_generate(3, N=8, seed=5)),
    ]

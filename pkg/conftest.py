"""
Shared pytest fixtures
Hand-built and generated instances used across the test scripts
"""

import pytest

from instance import generate_instance, make_instance


def single_path_instance():
    """1 plant, 1 depot, 1 customer: Z = 10 + 5 + 20*2 + 20*3 = 115"""
    return make_instance(f=[10], b=[100], g=[5], p=[100], c=[[2]], d=[[3]], q=[20])


def saturated_instance():
    """Total plant and depot capacity equal total demand"""
    return make_instance(
        f=[10, 20], b=[5, 5],
        g=[3, 4], p=[4, 6],
        c=[[1, 2], [3, 1]],
        d=[[2, 5, 1], [4, 1, 3]],
        q=[3, 3, 4],
    )


@pytest.fixture
def single_path():
    return single_path_instance()


@pytest.fixture
def saturated():
    return saturated_instance()


@pytest.fixture
def tiny():
    """3 plants, 6 depots, 12 customers"""
    return generate_instance(1, 3, 11)


@pytest.fixture
def small():
    """5 plants, 10 depots, 20 customers"""
    return generate_instance(2, 5, 3)

"""Shared fixtures: reference families and a seeded generator."""
import math
from pathlib import Path

import numpy as np
import pytest

from berry_svd.utils.model import MatrixFamily, parse_family

DATA = Path(__file__).resolve().parent.parent / "data"


def beta_closed_form(r: float) -> float:
    """Phase of the first singular pair of [[1, 1], [0, x - iy]] around the circle of radius r."""
    return math.pi * r**2 / ((0.5 * (math.sqrt(r**4 + 4.0) - r**2) + 1.0) ** 2 + r**2)


@pytest.fixture
def rng():
    return np.random.default_rng(20240611)


@pytest.fixture(scope="session")
def data_dir() -> Path:
    return DATA


@pytest.fixture(scope="session")
def family_2x2() -> MatrixFamily:
    return parse_family((DATA / "families" / "example_2x2.json").read_text())


@pytest.fixture(scope="session")
def family_4x4() -> MatrixFamily:
    return parse_family((DATA / "families" / "example_4x4.json").read_text())


@pytest.fixture(scope="session")
def family_non_generic() -> MatrixFamily:
    return parse_family((DATA / "families" / "non_generic.json").read_text())


@pytest.fixture(scope="session")
def family_constant() -> MatrixFamily:
    return MatrixFamily.from_terms([(0, 0, np.diag([3.0, 2.0, 1.0]).astype(complex))])


@pytest.fixture(scope="session")
def family_hermitian() -> MatrixFamily:
    """[[x, y], [y, -x]] + 3 I."""
    return MatrixFamily.from_terms(
        [
            (0, 0, 3.0 * np.eye(2)),
            (1, 0, np.array([[1.0, 0.0], [0.0, -1.0]])),
            (0, 1, np.array([[0.0, 1.0], [1.0, 0.0]])),
        ]
    )

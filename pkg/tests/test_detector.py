"""Tests for utils/detector.py."""
import json
import math

import numpy as np
import pytest

from berry_svd.utils.config import DetectorOptions
from berry_svd.utils.detector import detect, detection_to_dict, loop_test, newton_polish, read_detection_points
from berry_svd.utils.errors import ParseError
from berry_svd.utils.model import Box, PathLoop, manufactured_family, random_unitary
from berry_svd.utils.phase import Classification, format_phase, loop_phases


class TestLoopTest:
    def test_constant_family(self, family_constant):
        assert loop_test(family_constant, Box(-1, 1, -1, 1)).classification is Classification.NO_RANK_LOSS

    def test_enclosing_box(self, family_2x2):
        result = loop_test(family_2x2, Box(-1, 1, -1, 1))
        assert result.classification is Classification.RANK_LOSS_INSIDE
        assert result.box == Box(-1, 1, -1, 1)

    def test_disjoint_box(self, family_2x2):
        assert loop_test(family_2x2, Box(1, 2, 1, 2)).classification is Classification.NO_RANK_LOSS

    def test_root_on_corner_inflates(self, family_2x2):
        result = loop_test(family_2x2, Box(-1.0, 0.0, -1.0, 0.0))
        assert result.classification is Classification.RANK_LOSS_INSIDE
        assert result.box.contains((0.0, 0.0)) and result.box.xmax > 0.0


class TestNewton:
    def test_polish_linear(self, family_2x2):
        xi, residual = newton_polish(family_2x2, (0.3, -0.2), DetectorOptions())
        assert np.allclose(xi, [0.0, 0.0], atol=1e-10)
        assert residual <= 1e-10


class TestDetect:
    def test_example_2x2(self, family_2x2):
        result = detect(family_2x2, Box(-1, 1, -1, 1))
        assert len(result.points) == 1
        point = result.points[0]
        assert math.hypot(*point.location) <= 1e-8
        assert point.box.contains(point.location)
        assert point.genericity.regular
        assert not result.budget_exceeded

    def test_constant_family(self, family_constant):
        result = detect(family_constant, Box(-1, 1, -1, 1))
        assert result.points == [] and result.cells_tested == 1

    def test_budget(self, family_2x2):
        result = detect(family_2x2, Box(-1, 1, -1, 1), DetectorOptions(max_cells=3))
        assert result.budget_exceeded
        assert result.cells_tested == 3

    def test_initial_splits(self, family_2x2):
        result = detect(family_2x2, Box(-0.9, 1.1, -0.7, 1.3), DetectorOptions(initial_splits=1, loc_tol=1e-2))
        assert len(result.points) == 1
        assert math.hypot(*result.points[0].location) <= 1e-8

    def test_deterministic(self, family_2x2):
        box = Box(-0.7, 0.9, -0.6, 0.8)
        first = detection_to_dict(detect(family_2x2, box, DetectorOptions(loc_tol=1e-2)))
        second = detection_to_dict(detect(family_2x2, box, DetectorOptions(loc_tol=1e-2)))
        assert first == second

    def test_result_document(self, family_2x2):
        doc = detection_to_dict(detect(family_2x2, Box(-0.7, 0.9, -0.6, 0.8), DetectorOptions(loc_tol=1e-2)))
        text = json.dumps(doc)
        points = read_detection_points(text)
        assert len(points) == 1 and doc["points"][0]["generic"] is True
        with pytest.raises(ParseError):
            read_detection_points('{"points": [{"xy": [1]}]}')


def planted_roots(rng, count, loc_tol):
    for _ in range(count):
        n = int(rng.integers(2, 4))
        a, b = rng.uniform(-0.8, 0.8, size=2)
        family = manufactured_family(a, b, random_unitary(rng, n), random_unitary(rng, n))
        result = detect(family, Box(-1, 1, -1, 1), DetectorOptions(loc_tol=loc_tol))
        assert len(result.points) == 1
        x, y = result.points[0].location
        assert math.hypot(x - a, y - b) <= 1e-8


class TestSoundness:
    def test_planted_roots(self, rng):
        planted_roots(rng, 3, 1e-2)

    @pytest.mark.slow
    def test_planted_roots_sweep(self, rng):
        planted_roots(rng, 50, 1e-3)

    def test_cell_matches_inscribed_circle(self, rng):
        for _ in range(10):
            a, b = rng.uniform(-0.4, 0.4, size=2)
            family = manufactured_family(a, b, random_unitary(rng, 2), random_unitary(rng, 2))
            cell = Box(a - 0.3, a + 0.5, b - 0.45, b + 0.35)
            circle = PathLoop.circle(cell.center, 0.35, 256)
            _, report = loop_phases(family, circle)
            assert loop_test(family, cell).classification is report.classification


class TestExample4x4Loops:
    @pytest.mark.parametrize(
        "center, radius, text, expected",
        [
            ((0.05, 0.10), 0.3, "+3.1416", Classification.RANK_LOSS_INSIDE),
            ((-0.6, 0.10), 0.2, "+0.0000", Classification.NO_RANK_LOSS),
        ],
    )
    def test_sum_prints(self, family_4x4, center, radius, text, expected):
        _, report = loop_phases(family_4x4, PathLoop.circle(center, radius, 2048))
        assert report.classification is expected
        assert format_phase(report.sum_mod_2pi) == text


@pytest.mark.slow
class TestExample4x4:
    def test_single_point_and_sums(self, family_4x4):
        result = detect(family_4x4, Box(-1, 1, -1, 1))
        assert len(result.points) == 1
        point = result.points[0]
        assert point.genericity.regular
        x, y = point.location
        _, inside = loop_phases(family_4x4, PathLoop.circle((x, y), 0.05, 512))
        assert inside.classification is Classification.RANK_LOSS_INSIDE
        assert abs(abs(inside.sum_mod_2pi) - math.pi) < 5e-5
        _, outside = loop_phases(family_4x4, PathLoop.circle((x - 0.6, y), 0.2, 2048))
        assert outside.classification is Classification.NO_RANK_LOSS
        assert format_phase(outside.sum_mod_2pi) == "+0.0000"

"""Tests for utils/model.py."""
import json
import math

import numpy as np
import pytest

from berry_svd.utils.errors import ConfigError, ParseError
from berry_svd.utils.linalg import det, svd_point
from berry_svd.utils.model import (
    Box,
    MatrixFamily,
    PathLoop,
    eval_derivative,
    eval_family,
    grid_scan,
    loop_point,
    manufactured_family,
    parse_family,
    parse_loop,
    random_unitary,
    serialize_family,
    serialize_loop,
)


class TestFamilyDocuments:
    def test_example_2x2_values(self, family_2x2):
        A = eval_family(family_2x2, (0.5, -0.25))
        assert np.allclose(A, [[1, 1], [0, 0.5 + 0.25j]])

    def test_example_4x4_origin(self, family_4x4):
        A = eval_family(family_4x4, (0.0, 0.0))
        assert A[0, 0] == complex(0.03, 0.23)
        assert A[3, 3] == complex(0.41, -0.76)

    def test_serialize_keeps_values(self, family_4x4):
        again = parse_family(serialize_family(family_4x4))
        for xi in [(0.1, 0.2), (-0.7, 0.9)]:
            assert np.array_equal(eval_family(again, xi), eval_family(family_4x4, xi))

    def test_real_entries_accepted(self):
        family = parse_family('{"n": 1, "terms": [{"jx": 0, "ky": 0, "matrix": [[2.5]]}]}')
        assert eval_family(family, (0, 0))[0, 0] == 2.5

    @pytest.mark.parametrize(
        "doc, location",
        [
            ({"terms": []}, "$"),
            ({"n": 2, "terms": [{"jx": 0, "ky": 0, "matrix": [[[1, 0]]]}]}, "$.terms[0].matrix"),
            ({"n": 1, "terms": [{"jx": 0, "ky": 0, "matrix": [[["a", 0]]]}]}, "$.terms[0].matrix[0][0]"),
            ({"n": 1, "terms": [{"jx": -1, "ky": 0, "matrix": [[1]]}]}, "$.terms[0]"),
        ],
    )
    def test_malformed(self, doc, location):
        with pytest.raises(ParseError) as info:
            parse_family(json.dumps(doc))
        assert info.value.location == location

    def test_duplicate_term(self):
        doc = {"n": 1, "terms": [{"jx": 1, "ky": 0, "matrix": [[1]]}, {"jx": 1, "ky": 0, "matrix": [[2]]}]}
        with pytest.raises(ParseError):
            parse_family(json.dumps(doc))

    def test_invalid_json(self):
        with pytest.raises(ParseError):
            parse_family("{not json")


class TestDerivative:
    def test_matches_finite_difference(self, family_non_generic):
        xi = np.array([0.3, -0.4])
        direction = np.array([0.6, 0.8])
        h = 1e-6
        plus = eval_family(family_non_generic, xi + h * direction)
        minus = eval_family(family_non_generic, xi - h * direction)
        fd = (plus - minus) / (2 * h)
        assert np.allclose(eval_derivative(family_non_generic, xi, direction), fd, atol=1e-8)


class TestLoops:
    def test_circle_closes_exactly(self):
        loop = PathLoop.circle((0.2, -0.1), 0.5, 64)
        p0, _ = loop_point(loop, 0.0)
        p1, _ = loop_point(loop, 1.0)
        assert np.array_equal(p0, p1)
        assert np.allclose(p0, [0.7, -0.1])

    def test_circle_tangent(self):
        loop = PathLoop.circle((0.0, 0.0), 2.0, 64)
        _, tangent = loop_point(loop, 0.25)
        assert np.allclose(tangent, [-4 * math.pi, 0.0])

    def test_rect_counterclockwise(self):
        loop = PathLoop.rect(Box(0.0, 2.0, 0.0, 1.0), 64)
        assert np.allclose(loop_point(loop, 0.0)[0], [0.0, 0.0])
        assert np.allclose(loop_point(loop, 1.0 / 3.0)[0], [2.0, 0.0])
        assert np.allclose(loop_point(loop, 0.5)[0], [2.0, 1.0])
        assert np.allclose(loop_point(loop, 5.0 / 6.0)[0], [0.0, 1.0])
        assert np.allclose(loop_point(loop, 0.5)[1], [-6.0, 0.0])
        assert np.array_equal(loop_point(loop, 1.0)[0], loop_point(loop, 0.0)[0])

    def test_loop_documents(self, data_dir):
        loop = parse_loop((data_dir / "loops" / "unit_circle.json").read_text())
        assert loop.kind == "circle" and loop.samples == 2048
        assert parse_loop(serialize_loop(loop)) == loop
        rect = parse_loop((data_dir / "loops" / "unit_square.json").read_text())
        assert rect.box == Box(-1.0, 1.0, -1.0, 1.0)

    def test_bad_loops(self):
        with pytest.raises(ParseError):
            parse_loop('{"kind": "circle", "center": [0, 0], "radius": -1, "samples": 64}')
        with pytest.raises(ParseError):
            parse_loop('{"kind": "ellipse", "samples": 64}')
        with pytest.raises(ConfigError):
            PathLoop.circle((0, 0), 1.0, 4)


class TestBox:
    def test_split_order(self):
        sw, se, nw, ne = Box(0.0, 2.0, 0.0, 2.0).split()
        assert sw == Box(0.0, 1.0, 0.0, 1.0)
        assert se == Box(1.0, 2.0, 0.0, 1.0)
        assert nw == Box(0.0, 1.0, 1.0, 2.0)
        assert ne == Box(1.0, 2.0, 1.0, 2.0)

    def test_inflated(self):
        assert Box(-1.0, 1.0, 0.0, 2.0).inflated(0.1).as_list() == pytest.approx([-1.1, 1.1, -0.1, 2.1])

    def test_parse(self):
        assert Box.parse("-1,1,-2,2") == Box(-1.0, 1.0, -2.0, 2.0)
        with pytest.raises(ConfigError):
            Box.parse("1,1,0,1")
        with pytest.raises(ConfigError):
            Box.parse("0,1,0")


class TestGridScan:
    def test_constant_identity(self):
        family = MatrixFamily.from_terms([(0, 0, np.eye(2))])
        surface = grid_scan(family, Box(-1, 1, -1, 1), 5)
        assert np.all(surface.sigma_min == 1.0)
        assert np.all(surface.gap == 0.0)
        assert len(surface.to_frame()) == 25
        assert list(surface.to_frame().columns) == ["x", "y", "sigma_min", "gap", "absdet"]

    def test_example_2x2_minimum(self, family_2x2):
        surface = grid_scan(family_2x2, Box(-1, 1, -1, 1), 21)
        (x, y), value = surface.argmin()
        assert abs(x) < 1e-12 and abs(y) < 1e-12
        assert value < 1e-15
        assert surface.argmin_cell().contains((0.0, 0.0))

    def test_resolution_check(self, family_2x2):
        with pytest.raises(ConfigError):
            grid_scan(family_2x2, Box(-1, 1, -1, 1), 1)

    def test_scalar_family_gap(self):
        family = MatrixFamily.from_terms([(0, 0, [[2.0]]), (1, 0, [[1.0]])])
        surface = grid_scan(family, Box(-1, 1, -1, 1), 3)
        assert np.all(surface.gap == 0.0)
        assert np.allclose(surface.sigma_min[0], [1.0, 2.0, 3.0])


class TestManufactured:
    def test_single_root(self, rng):
        B, C = random_unitary(rng, 3), random_unitary(rng, 3)
        family = manufactured_family(0.2, -0.3, B, C)
        assert abs(det(eval_family(family, (0.2, -0.3)))) < 1e-14
        T = svd_point(eval_family(family, (0.2 + 0.1, -0.3)))
        assert np.allclose(T.sigma, [4.0, 3.0, 0.1])

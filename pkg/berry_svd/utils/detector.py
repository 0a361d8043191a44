"""Localize rank-loss points of a family by quadtree subdivision with boundary phase tests."""
import json
import logging
import math
from collections import deque
from dataclasses import dataclass, field
from typing import List, Optional, Tuple

import numpy as np

from berry_svd.utils.config import DetectorOptions
from berry_svd.utils.continuation import GaugeMode
from berry_svd.utils.embedding import GenericityReport, genericity_det
from berry_svd.utils.errors import ContinuationFailedError, ParseError
from berry_svd.utils.linalg import det
from berry_svd.utils.model import Box, MatrixFamily, PathLoop, eval_family
from berry_svd.utils.phase import Classification, PhaseReport, loop_phases

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class LoopTestResult:
    """Classification of one cell and the (possibly inflated) box that was tested."""

    classification: Classification
    report: Optional[PhaseReport]
    box: Box
    reason: str = ""


@dataclass(frozen=True)
class DetectedPoint:
    """A polished rank-loss point with its leaf cell and genericity report."""

    location: Tuple[float, float]
    box: Box
    polish_residual: float
    genericity: GenericityReport


@dataclass(frozen=True)
class InconclusiveCell:
    """A cell the detector could not decide."""

    box: Box
    reason: str


@dataclass
class DetectionResult:
    """Points found, cells tested and whether the cell budget ran out."""

    points: List[DetectedPoint] = field(default_factory=list)
    cells_tested: int = 0
    inconclusive_cells: List[InconclusiveCell] = field(default_factory=list)
    budget_exceeded: bool = False


def loop_test(family: MatrixFamily, box: Box, opts: Optional[DetectorOptions] = None) -> LoopTestResult:
    """Classify a box by the joint phase sum around its boundary, inflating it when continuation fails."""
    opts = opts or DetectorOptions()
    current = box
    reason = ""
    for attempt in range(opts.inflate_retries + 1):
        if attempt:
            current = current.inflated(opts.inflate)
            logger.warning("Retrying cell with boundary inflated to %s", current.as_list())
        loop = PathLoop.rect(current, opts.samples)
        try:
            _, report = loop_phases(family, loop, GaugeMode.JOINT, opts.continuation, opts.phase)
        except ContinuationFailedError as exc:
            reason = str(exc)
            continue
        return LoopTestResult(report.classification, report, current)
    return LoopTestResult(Classification.INCONCLUSIVE, None, current, f"continuation failed: {reason}")


def _abs_tolerance(family: MatrixFamily, xi: np.ndarray, det_tol: float) -> float:
    scale = max(1.0, float(np.linalg.norm(eval_family(family, xi))))
    return det_tol * scale**family.n


def newton_polish(family: MatrixFamily, start: Tuple[float, float], opts: DetectorOptions) -> Tuple[np.ndarray, float]:
    """Damped Newton on (Re det A, Im det A); returns the point and |det A| there."""
    x = np.array(start, dtype=float)
    value = abs(det(eval_family(family, x)))
    for iteration in range(opts.newton_iter):
        if value <= _abs_tolerance(family, x, opts.det_tol):
            break
        d = det(eval_family(family, x))
        J = genericity_det(family, x).jacobian
        try:
            delta = np.linalg.solve(J, -np.array([d.real, d.imag]))
        except np.linalg.LinAlgError:
            logger.debug("Singular Jacobian at %s, Newton stopped", x)
            break
        damping = 1.0
        while damping > 1e-8:
            trial = x + damping * delta
            trial_value = abs(det(eval_family(family, trial)))
            if trial_value < value:
                x, value = trial, trial_value
                break
            damping *= 0.5
        else:
            break
        logger.debug("Newton iteration %d: |det| = %.3e", iteration, value)
    return x, value


def _duplicate(points: List[DetectedPoint], xi: np.ndarray, tol: float) -> bool:
    return any(math.hypot(p.location[0] - xi[0], p.location[1] - xi[1]) <= tol for p in points)


def detect(family: MatrixFamily, box: Box, opts: Optional[DetectorOptions] = None) -> DetectionResult:
    """Subdivide cells whose boundary phase sum is pi until they are small, then polish with Newton.

    A cell holding an even number of rank-loss points sums to 0 and is not refined.
    """
    opts = opts or DetectorOptions()
    cells = [box]
    for _ in range(opts.initial_splits):
        cells = [child for cell in cells for child in cell.split()]
    queue = deque(cells)
    result = DetectionResult()

    while queue:
        if result.cells_tested >= opts.max_cells:
            result.budget_exceeded = True
            logger.warning("Cell budget of %d exhausted with %d cells pending", opts.max_cells, len(queue))
            break
        cell = queue.popleft()
        outcome = loop_test(family, cell, opts)
        result.cells_tested += 1
        if outcome.classification is Classification.INCONCLUSIVE:
            reason = outcome.reason or f"phase sum {outcome.report.sum_mod_2pi:+.4f}"
            result.inconclusive_cells.append(InconclusiveCell(outcome.box, reason))
            continue
        if outcome.classification is Classification.NO_RANK_LOSS:
            continue
        tested = outcome.box
        if tested.diameter > opts.loc_tol:
            queue.extend(tested.split())
            continue

        xi, residual = newton_polish(family, tested.center, opts)
        if residual > _abs_tolerance(family, xi, opts.det_tol):
            result.inconclusive_cells.append(InconclusiveCell(tested, f"Newton stalled at |det|={residual:.3e}"))
            continue
        if not tested.contains(xi):
            result.inconclusive_cells.append(InconclusiveCell(tested, "Newton left the cell"))
            continue
        if _duplicate(result.points, xi, opts.loc_tol):
            logger.debug("Point %s already reported", xi)
            continue
        point = DetectedPoint((float(xi[0]), float(xi[1])), tested, residual, genericity_det(family, xi))
        result.points.append(point)
        logger.info("Rank loss at (%.10f, %.10f), |det| = %.2e", xi[0], xi[1], residual)

    logger.info(
        "Detection finished: %d points, %d cells tested, %d inconclusive",
        len(result.points),
        result.cells_tested,
        len(result.inconclusive_cells),
    )
    return result


def detection_to_dict(result: DetectionResult) -> dict:
    """JSON-ready form of a detection result."""
    return {
        "points": [
            {
                "xy": list(p.location),
                "absdet": p.polish_residual,
                "generic": p.genericity.regular,
                "box": p.box.as_list(),
            }
            for p in result.points
        ],
        "inconclusive": [{"box": c.box.as_list(), "reason": c.reason} for c in result.inconclusive_cells],
        "cells_tested": result.cells_tested,
        "budget_exceeded": result.budget_exceeded,
    }


def read_detection_points(text: str) -> List[Tuple[float, float]]:
    """Locations listed in a detection result document."""
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ParseError(f"invalid JSON: {exc.msg}", f"line {exc.lineno} column {exc.colno}") from exc
    points = doc.get("points") if isinstance(doc, dict) else None
    if not isinstance(points, list):
        raise ParseError("points must be a list", "$.points")
    locations = []
    for i, entry in enumerate(points):
        xy = entry.get("xy") if isinstance(entry, dict) else None
        if not (isinstance(xy, list) and len(xy) == 2 and all(isinstance(v, (int, float)) for v in xy)):
            raise ParseError("xy must be [x, y]", f"$.points[{i}].xy")
        locations.append((float(xy[0]), float(xy[1])))
    return locations

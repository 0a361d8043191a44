"""Accrued phases of closed SVD traces and the rank-loss classification they imply."""
import logging
import math
from dataclasses import dataclass, field
from enum import Enum
from typing import Dict, Optional, Tuple, Union

import numpy as np

from berry_svd.utils.config import ContinuationOptions, PhaseOptions
from berry_svd.utils.continuation import (
    ContinuationTrace,
    GaugeMode,
    continue_loop,
    gauge_overlap,
)
from berry_svd.utils.embedding import build_M
from berry_svd.utils.errors import ContractError, NearDegenerateError, RefinementNeededError
from berry_svd.utils.linalg import herm_eig
from berry_svd.utils.model import MatrixFamily, PathLoop, eval_family, loop_point

logger = logging.getLogger(__name__)


class Classification(Enum):
    """Outcome of one loop test."""

    RANK_LOSS_INSIDE = "RANK_LOSS_INSIDE"
    NO_RANK_LOSS = "NO_RANK_LOSS"
    INCONCLUSIVE = "INCONCLUSIVE"


@dataclass(frozen=True)
class PhaseReport:
    """Phases accrued by the singular pairs around a closed loop."""

    beta: np.ndarray
    beta_unwrapped: np.ndarray
    sum_mod_2pi: float
    classification: Classification
    residual: float
    gauge: GaugeMode = GaugeMode.JOINT
    diagnostics: Dict[str, float] = field(default_factory=dict)


def wrap_to_pi(x):
    """Reduce angles to the branch (-pi, pi]."""
    return math.pi - np.mod(math.pi - np.asarray(x, dtype=float), 2.0 * math.pi)


def _residual(total: float) -> float:
    return min(abs(total), math.pi - abs(total))


def classify(report: Union[PhaseReport, float], class_tol: float = 0.3) -> Classification:
    """Map a phase sum to a classification; sums near pi mean a rank-loss point is enclosed."""
    if isinstance(report, PhaseReport):
        if report.gauge is not GaugeMode.JOINT:
            return Classification.INCONCLUSIVE
        total = report.sum_mod_2pi
    else:
        total = float(wrap_to_pi(report))
    if math.pi - abs(total) <= class_tol:
        return Classification.RANK_LOSS_INSIDE
    if abs(total) <= class_tol:
        return Classification.NO_RANK_LOSS
    return Classification.INCONCLUSIVE


def unwrapped_phase(trace: ContinuationTrace, j: int, max_increment: float = math.pi / 2) -> float:
    """Phase of column j summed step by step around the loop, without branch reduction.

    Each frame is made periodic by rotating v_j real positive at the entry where
    |v_j(0)| is largest; the increments are the negated arguments of the gauge
    overlaps between consecutive periodic frames, the last one closing on the start.
    """
    if not trace.closed:
        raise ContractError("unwrapped_phase needs a closed trace")
    if not 0 <= j < trace.n:
        raise ContractError(f"column {j} out of range for n={trace.n}")
    ref = int(np.argmax(np.abs(trace.start.V[:, j])))

    def periodic(k: int) -> Tuple[np.ndarray, np.ndarray]:
        T = trace.triples[k]
        pivot = T.V[ref, j]
        rot = np.conj(pivot) / abs(pivot)
        return T.U[:, j] * rot, T.V[:, j] * rot

    frames = [periodic(k) for k in range(len(trace) - 1)]
    frames.append(frames[0])
    total = 0.0
    for k in range(len(frames) - 1):
        (u0, v0), (u1, v1) = frames[k], frames[k + 1]
        ou = np.vdot(u0, u1)
        ov = np.vdot(v0, v1)
        increment = -float(np.angle(gauge_overlap(ou, ov, trace.gauge)))
        if abs(increment) >= max_increment:
            raise RefinementNeededError(
                f"phase increment {increment:.3f} of column {j} at step {k} is too large", j, k, increment
            )
        total += increment
    return total


def accrued_phases(trace: ContinuationTrace, opts: Optional[PhaseOptions] = None) -> PhaseReport:
    """Read the accrued phases off U(0)* U(1) and classify the loop."""
    opts = opts or PhaseOptions()
    if not trace.closed:
        raise ContractError("accrued_phases needs a closed trace")
    start, end = trace.start, trace.end
    P = start.U.conj().T @ end.U
    Q = start.V.conj().T @ end.V
    off = P - np.diag(np.diag(P))
    offdiag = float(max(np.max(np.abs(off)), np.max(np.abs(Q - np.diag(np.diag(Q))))))
    beta = wrap_to_pi(np.angle(np.diag(P)))
    mismatch = float(np.max(np.abs(wrap_to_pi(np.angle(np.diag(P)) - np.angle(np.diag(Q))))))
    total = float(wrap_to_pi(np.sum(beta)))

    unwrapped = np.empty(trace.n)
    for j in range(trace.n):
        try:
            unwrapped[j] = unwrapped_phase(trace, j, opts.max_increment)
        except RefinementNeededError as exc:
            logger.warning("Unwrapped phase of column %d not available: %s", j, exc)
            unwrapped[j] = math.nan

    if trace.gauge is not GaugeMode.JOINT:
        classification = Classification.INCONCLUSIVE
    elif offdiag > opts.offdiag_tol:
        logger.warning("End frame left the gauge orbit (off-diagonal %.3e), classification demoted", offdiag)
        classification = Classification.INCONCLUSIVE
    elif mismatch > opts.consistency_tol:
        logger.warning("U and V end phases disagree by %.3e, classification demoted", mismatch)
        classification = Classification.INCONCLUSIVE
    else:
        classification = classify(total, opts.class_tol)

    diagnostics = {
        "offdiag": offdiag,
        "uv_mismatch": mismatch,
        "min_gap": trace.min_gap,
        "sigma_min": trace.sigma_min,
        "min_corr": trace.min_corr,
        "steps": float(len(trace) - 1),
    }
    return PhaseReport(beta, unwrapped, total, classification, _residual(total), trace.gauge, diagnostics)


def loop_phases(
    family: MatrixFamily,
    loop: PathLoop,
    gauge: GaugeMode = GaugeMode.JOINT,
    cont_opts: Optional[ContinuationOptions] = None,
    phase_opts: Optional[PhaseOptions] = None,
) -> Tuple[ContinuationTrace, PhaseReport]:
    """Continue around the loop and report its phases, doubling samples while the result is inconclusive."""
    phase_opts = phase_opts or PhaseOptions()
    trace = continue_loop(family, loop, gauge, cont_opts)
    report = accrued_phases(trace, phase_opts)
    rounds = 0
    while (
        gauge is GaugeMode.JOINT
        and report.classification is Classification.INCONCLUSIVE
        and rounds < phase_opts.refine_rounds
    ):
        rounds += 1
        loop = loop.with_samples(2 * loop.samples)
        logger.info("Inconclusive sum %+.4f, retrying with %d samples", report.sum_mod_2pi, loop.samples)
        trace = continue_loop(family, loop, gauge, cont_opts)
        report = accrued_phases(trace, phase_opts)
    if gauge is GaugeMode.JOINT and report.classification is Classification.INCONCLUSIVE:
        logger.warning("Loop still inconclusive after %d refinement rounds", rounds)
    logger.info("Phase sum %+.4f -> %s", report.sum_mod_2pi, report.classification.value)
    return trace, report


def embedded_berry_phases(family: MatrixFamily, loop: PathLoop, samples: Optional[int] = None) -> np.ndarray:
    """Berry phases of the positive-eigenvalue eigenvectors of [[0, A], [A*, 0]] around the loop.

    Computed as the closed product of overlaps of eigenvectors at consecutive
    samples, so the arbitrary eigensolver phases cancel.
    """
    count = samples or loop.samples
    n = family.n
    vectors = []
    for k in range(count):
        xi, _ = loop_point(loop, k / count)
        eig = herm_eig(build_M(eval_family(family, xi), 0.0))
        positive = eig.eigenvalues[: n + 1]
        spacing = float(np.min(positive[:-1] - positive[1:]))
        if spacing < 1e-10:
            raise NearDegenerateError(f"embedded eigenvalues coalesce at t={k / count:.6f}", (n - 1, n), spacing)
        vectors.append(eig.Q[:, :n])
    vectors.append(vectors[0])
    product = np.ones(n, dtype=complex)
    for k in range(count):
        overlaps = np.sum(vectors[k].conj() * vectors[k + 1], axis=0)
        product *= overlaps / np.abs(overlaps)
    return wrap_to_pi(-np.angle(product))


def format_phase(value: float) -> str:
    """Four decimals with an explicit sign; -0.0000 and -3.1416 print with a plus sign."""
    text = f"{value:+.4f}"
    if text == "-0.0000":
        return "+0.0000"
    if text == "-3.1416":
        return "+3.1416"
    return text


def format_report(report: PhaseReport) -> str:
    """Human-readable table of the phases and their sum."""
    lines = [f"{'j':>3}  {'beta_j':>9}  {'unwrapped':>10}"]
    for j, (b, u) in enumerate(zip(report.beta, report.beta_unwrapped), start=1):
        unwrapped = format_phase(u) if math.isfinite(u) else "n/a"
        lines.append(f"{j:>3}  {format_phase(b):>9}  {unwrapped:>10}")
    lines.append(f"sum  {format_phase(report.sum_mod_2pi):>9}  ({report.classification.value})")
    return "\n".join(lines)


def report_to_dict(report: PhaseReport) -> dict:
    """JSON-ready form of a phase report; missing unwrapped phases become null."""
    return {
        "beta": [float(b) for b in report.beta],
        "beta_unwrapped": [float(u) if math.isfinite(u) else None for u in report.beta_unwrapped],
        "sum_mod_2pi": report.sum_mod_2pi,
        "classification": report.classification.value,
        "residual": report.residual,
        "gauge": report.gauge.value,
        "diagnostics": dict(report.diagnostics),
    }

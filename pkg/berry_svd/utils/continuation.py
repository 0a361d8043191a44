"""Smooth SVD continuation along closed loops with a selectable diagonal gauge."""
import logging
from dataclasses import dataclass
from enum import Enum
from pathlib import Path
from typing import List, Optional, Tuple, Union

import numpy as np
import pandas as pd
import scipy.linalg

from berry_svd.utils.config import ContinuationOptions
from berry_svd.utils.errors import (
    ContinuationFailedError,
    ContractError,
    DimensionError,
    NearDegenerateError,
    ParseError,
    StepTooLargeError,
)
from berry_svd.utils.linalg import SVDTriple, svd_point
from berry_svd.utils.model import MatrixFamily, PathLoop, eval_family, eval_gradient, loop_point

logger = logging.getLogger(__name__)

CLOSE_EPS = 1e-12


class GaugeMode(Enum):
    """Diagonal gauge rule: which combination of H_jj and K_jj is pinned."""

    JOINT = "joint"
    U_MVD = "umvd"
    V_MVD = "vmvd"


@dataclass(frozen=True)
class HKPair:
    """Skew-Hermitian generators with U' = U H and V' = V K."""

    H: np.ndarray
    K: np.ndarray


@dataclass(frozen=True)
class StepDiagnostics:
    """Health of one accepted sample: singular gap, sigma_n, worst column overlap and step size."""

    min_gap: float
    sigma_min: float
    min_corr: float
    step: float


@dataclass(frozen=True)
class ContinuationTrace:
    """Accepted samples (t, xi, SVD) of a continuation run, in increasing t."""

    gauge: GaugeMode
    ts: Tuple[float, ...]
    points: Tuple[np.ndarray, ...]
    triples: Tuple[SVDTriple, ...]
    diagnostics: Tuple[StepDiagnostics, ...]
    closed: bool

    def __len__(self) -> int:
        return len(self.ts)

    @property
    def n(self) -> int:
        """Matrix size."""
        return self.triples[0].n

    @property
    def steps(self) -> List[Tuple[float, np.ndarray, SVDTriple]]:
        """Samples as (t, xi, SVD) tuples."""
        return list(zip(self.ts, self.points, self.triples))

    @property
    def start(self) -> SVDTriple:
        """SVD at t = 0."""
        return self.triples[0]

    @property
    def end(self) -> SVDTriple:
        """SVD at t = 1."""
        return self.triples[-1]

    @property
    def min_gap(self) -> float:
        """Smallest singular gap seen along the trace."""
        return min(d.min_gap for d in self.diagnostics)

    @property
    def sigma_min(self) -> float:
        """Smallest sigma_n seen along the trace."""
        return min(d.sigma_min for d in self.diagnostics)

    @property
    def min_corr(self) -> float:
        """Worst column overlap of any accepted step."""
        return min(d.min_corr for d in self.diagnostics)


def check_separated(T: SVDTriple, opts: ContinuationOptions):
    """Raise NearDegenerateError when singular values are too close or sigma_n too small."""
    if T.n > 1 and T.gap < opts.gap_min:
        raise NearDegenerateError(f"singular gap {T.gap:.3e} below {opts.gap_min:.1e}", T.gap_pair, T.gap)
    if T.sigma_min < opts.sig_min:
        raise NearDegenerateError(
            f"sigma_min {T.sigma_min:.3e} below {opts.sig_min:.1e}", (T.n - 1, T.n - 1), T.sigma_min
        )


def hk_from_derivative(
    T: SVDTriple, Adot: np.ndarray, gauge: GaugeMode, opts: Optional[ContinuationOptions] = None
) -> HKPair:
    """Generators H, K of the smooth SVD at T for the derivative Adot, diagonal fixed by gauge."""
    opts = opts or ContinuationOptions()
    check_separated(T, opts)
    n = T.n
    if Adot.shape != (n, n):
        raise DimensionError(f"derivative shape {Adot.shape} does not match n={n}")
    s = T.sigma
    W = T.U.conj().T @ Adot @ T.V
    H = np.zeros((n, n), dtype=complex)
    K = np.zeros((n, n), dtype=complex)
    for j in range(n):
        for ell in range(j + 1, n):
            denom = s[ell] ** 2 - s[j] ** 2
            w_jl = W[j, ell]
            w_lj = np.conj(W[ell, j])
            H[j, ell] = (s[ell] * w_jl + s[j] * w_lj) / denom
            K[j, ell] = (s[j] * w_jl + s[ell] * w_lj) / denom
            H[ell, j] = -np.conj(H[j, ell])
            K[ell, j] = -np.conj(K[j, ell])

    m = np.imag(np.diag(W)) / s
    if gauge is GaugeMode.JOINT:
        h, k = 0.5 * m, -0.5 * m
    elif gauge is GaugeMode.U_MVD:
        h, k = np.zeros(n), -m
    else:
        h, k = m, np.zeros(n)
    H[np.diag_indices(n)] = 1j * h
    K[np.diag_indices(n)] = 1j * k
    return HKPair(H, K)


def column_overlaps(prev: SVDTriple, fresh: SVDTriple) -> Tuple[np.ndarray, np.ndarray]:
    """Per-column inner products u_prev* u_fresh and v_prev* v_fresh."""
    ou = np.sum(prev.U.conj() * fresh.U, axis=0)
    ov = np.sum(prev.V.conj() * fresh.V, axis=0)
    return ou, ov


def gauge_overlap(ou: np.ndarray, ov: np.ndarray, gauge: GaugeMode) -> np.ndarray:
    """The overlap whose phase the gauge sets to zero (JOINT is averaged over U and V)."""
    if gauge is GaugeMode.JOINT:
        return 0.5 * (ou + ov)
    if gauge is GaugeMode.U_MVD:
        return ou
    return ov


def align_step(prev: SVDTriple, fresh: SVDTriple, gauge: GaugeMode, corr_min: float = 0.99) -> SVDTriple:
    """Rephase each singular pair of fresh so the gauge overlap with prev is real and nonnegative."""
    if prev.n != fresh.n:
        raise DimensionError(f"cannot align size {fresh.n} to size {prev.n}")
    ou, ov = column_overlaps(prev, fresh)
    for label, overlaps in (("U", ou), ("V", ov), ("gauge", gauge_overlap(ou, ov, gauge))):
        magnitudes = np.abs(overlaps)
        j = int(np.argmin(magnitudes))
        if magnitudes[j] < corr_min:
            raise StepTooLargeError(
                f"{label} overlap {magnitudes[j]:.4f} of column {j} below {corr_min}", j, float(magnitudes[j])
            )
    phases = np.angle(gauge_overlap(ou, ov, gauge))
    return fresh.rephased(-phases)


def _diagnostics(T: SVDTriple, min_corr: float, step: float) -> StepDiagnostics:
    return StepDiagnostics(T.gap, T.sigma_min, min_corr, step)


def _check_start(family: MatrixFamily, xi0: np.ndarray, start: SVDTriple):
    A = eval_family(family, xi0)
    if start.n != family.n:
        raise ContractError(f"start frame has size {start.n}, family has {family.n}")
    scale = max(1.0, float(np.linalg.norm(A)))
    if np.linalg.norm(start.reconstruct() - A) > 1e-8 * scale:
        raise ContractError("start frame does not factor A at the loop start")


def continue_loop(
    family: MatrixFamily,
    loop: PathLoop,
    gauge: GaugeMode = GaugeMode.JOINT,
    opts: Optional[ContinuationOptions] = None,
    start: Optional[SVDTriple] = None,
) -> ContinuationTrace:
    """Follow the SVD of A(gamma(t)) for t in [0, 1] by aligned pointwise factorizations.

    The step starts at min(dt_max, 1/samples), halves on a failed alignment or a
    near degeneracy and grows again after well-correlated steps. The sample at t = 1
    sits at the start point but keeps its own phases.
    """
    opts = opts or ContinuationOptions()
    xi0, _ = loop_point(loop, 0.0)
    if start is None:
        start = svd_point(eval_family(family, xi0))
    else:
        _check_start(family, xi0, start)
    try:
        check_separated(start, opts)
    except NearDegenerateError as exc:
        raise ContinuationFailedError("degenerate start point", 0.0, str(exc)) from exc

    ts = [0.0]
    points = [xi0]
    triples = [start]
    diagnostics = [_diagnostics(start, 1.0, 0.0)]
    cap = min(opts.dt_max, 1.0 / loop.samples)
    dt = cap
    t = 0.0
    prev = start
    halvings = 0
    while t < 1.0:
        t_next = t + dt
        if t_next >= 1.0 - CLOSE_EPS:
            t_next = 1.0
        xi, _ = loop_point(loop, t_next)
        fresh = svd_point(eval_family(family, xi))
        try:
            check_separated(fresh, opts)
            aligned = align_step(prev, fresh, gauge, opts.corr_min)
        except (StepTooLargeError, NearDegenerateError) as exc:
            dt *= 0.5
            halvings += 1
            logger.debug("Step at t=%.6f rejected (%s), dt -> %.3e", t, exc, dt)
            if dt < opts.dt_min:
                raise ContinuationFailedError("step size underflow", t, str(exc)) from exc
            continue

        ou, ov = column_overlaps(prev, aligned)
        min_corr = float(min(np.min(np.abs(ou)), np.min(np.abs(ov))))
        ts.append(t_next)
        points.append(xi)
        triples.append(aligned)
        diagnostics.append(_diagnostics(aligned, min_corr, t_next - t))
        prev = aligned
        t = t_next
        if min_corr >= opts.corr_grow and dt < cap:
            dt = min(dt * opts.growth, cap)

    logger.info("Continuation (%s) closed in %d steps with %d halvings", gauge.value, len(ts) - 1, halvings)
    return ContinuationTrace(gauge, tuple(ts), tuple(points), tuple(triples), tuple(diagnostics), True)


def _unitary_part(Q: np.ndarray) -> np.ndarray:
    U, _ = scipy.linalg.polar(Q)
    return U


def integrate_dae(
    family: MatrixFamily,
    loop: PathLoop,
    gauge: GaugeMode = GaugeMode.JOINT,
    steps: int = 4000,
    opts: Optional[ContinuationOptions] = None,
) -> ContinuationTrace:
    """Integrate U' = U H, V' = V K with fixed-step RK4 along the loop.

    Sigma is the algebraic part Re diag(U* A V) at every stage; U and V are
    projected back to unitary by their polar factor after each step.
    """
    opts = opts or ContinuationOptions()
    if steps < 8:
        raise DimensionError(f"integrate_dae needs at least 8 steps, got {steps}")
    xi0, _ = loop_point(loop, 0.0)
    start = svd_point(eval_family(family, xi0))
    try:
        check_separated(start, opts)
    except NearDegenerateError as exc:
        raise ContinuationFailedError("degenerate start point", 0.0, str(exc)) from exc

    def rhs(t: float, U: np.ndarray, V: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
        xi, tangent = loop_point(loop, t)
        A = eval_family(family, xi)
        Ax, Ay = eval_gradient(family, xi)
        Adot = tangent[0] * Ax + tangent[1] * Ay
        sigma = np.real(np.diag(U.conj().T @ A @ V))
        gen = hk_from_derivative(SVDTriple(U, sigma, V), Adot, gauge, opts)
        return U @ gen.H, V @ gen.K

    dt = 1.0 / steps
    U, V = start.U, start.V
    ts = [0.0]
    points = [xi0]
    triples = [start]
    diagnostics = [_diagnostics(start, 1.0, 0.0)]
    for k in range(steps):
        t = k * dt
        t_next = 1.0 if k == steps - 1 else (k + 1) * dt
        try:
            k1u, k1v = rhs(t, U, V)
            k2u, k2v = rhs(t + 0.5 * dt, U + 0.5 * dt * k1u, V + 0.5 * dt * k1v)
            k3u, k3v = rhs(t + 0.5 * dt, U + 0.5 * dt * k2u, V + 0.5 * dt * k2v)
            k4u, k4v = rhs(t_next, U + dt * k3u, V + dt * k3v)
        except NearDegenerateError as exc:
            raise ContinuationFailedError("near degeneracy during integration", t, str(exc)) from exc
        U_new = _unitary_part(U + dt / 6.0 * (k1u + 2.0 * k2u + 2.0 * k3u + k4u))
        V_new = _unitary_part(V + dt / 6.0 * (k1v + 2.0 * k2v + 2.0 * k3v + k4v))

        xi, _ = loop_point(loop, t_next)
        sigma = np.real(np.diag(U_new.conj().T @ eval_family(family, xi) @ V_new))
        triple = SVDTriple(U_new, sigma, V_new)
        corr = float(
            min(
                np.min(np.abs(np.sum(U.conj() * U_new, axis=0))),
                np.min(np.abs(np.sum(V.conj() * V_new, axis=0))),
            )
        )
        ts.append(t_next)
        points.append(xi)
        triples.append(triple)
        diagnostics.append(_diagnostics(triple, corr, dt))
        U, V = U_new, V_new

    logger.info("DAE integration (%s) finished in %d steps", gauge.value, steps)
    return ContinuationTrace(gauge, tuple(ts), tuple(points), tuple(triples), tuple(diagnostics), True)


def trace_to_frame(trace: ContinuationTrace) -> pd.DataFrame:
    """Tabulate a trace: t, x, y, sigma_1..sigma_n and the per-step diagnostics."""
    sigmas = np.array([T.sigma for T in trace.triples])
    frame = pd.DataFrame(
        {
            "t": np.array(trace.ts),
            "x": np.array([p[0] for p in trace.points]),
            "y": np.array([p[1] for p in trace.points]),
        }
    )
    for j in range(trace.n):
        frame[f"sigma_{j + 1}"] = sigmas[:, j]
    frame["min_gap"] = [d.min_gap for d in trace.diagnostics]
    frame["sigma_min"] = [d.sigma_min for d in trace.diagnostics]
    frame["min_corr"] = [d.min_corr for d in trace.diagnostics]
    frame["step"] = [d.step for d in trace.diagnostics]
    return frame


def write_trace_sidecar(trace: ContinuationTrace, path: Union[str, Path]):
    """Write U then V of every sample as row-major little-endian float64 (re, im) pairs."""
    blocks = np.stack([np.stack([T.U, T.V]) for T in trace.triples])
    blocks.astype("<c16").tofile(str(path))
    logger.info("Wrote %d frames to %s", len(trace), path)


def read_trace_sidecar(path: Union[str, Path], n: int) -> Tuple[np.ndarray, np.ndarray]:
    """Read a sidecar back as arrays Us, Vs of shape (samples, n, n)."""
    data = np.fromfile(str(path), dtype="<c16")
    per_frame = 2 * n * n
    if data.size == 0 or data.size % per_frame:
        raise ParseError(f"sidecar holds {data.size} values, not a multiple of {per_frame}", str(path))
    blocks = data.reshape(-1, 2, n, n)
    return blocks[:, 0], blocks[:, 1]

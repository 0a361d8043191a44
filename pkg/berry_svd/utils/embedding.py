"""Hermitian embedding M(eps) = [[eps I, A], [A*, -eps I]] and genericity diagnostics at rank-loss points."""
import logging
import math
from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np

from berry_svd.utils.config import ProbeOptions
from berry_svd.utils.errors import DomainError, NearDegenerateError
from berry_svd.utils.linalg import SVDTriple, as_square_matrix, det, discriminant, herm_eig, svd_point, unitarity_defect
from berry_svd.utils.model import MatrixFamily, eval_family

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class EmbeddingEig:
    """M(eps) = W diag(S, -S) W* with W = [[U C, -U D], [V D, V C]]."""

    W: np.ndarray
    S: np.ndarray
    C: np.ndarray
    D: np.ndarray

    @property
    def eigenvalues(self) -> np.ndarray:
        """Eigenvalues in the column order of W: S then -S."""
        return np.concatenate([self.S, -self.S])


@dataclass(frozen=True)
class EmbeddingCheck:
    """Residuals of the embedding identities for one (A, eps)."""

    spectrum_error: float
    decomposition_residual: float
    unitarity: float
    discriminant_error: float
    passed: bool
    applicable: bool = True


@dataclass(frozen=True)
class GenericityReport:
    """Jacobian of (Re det, Im det) at a point and whether it is invertible."""

    regular: bool
    jacobian: np.ndarray
    min_singular_value: float
    det_value: complex


@dataclass(frozen=True)
class ProbeResult:
    """Limit ratios along sampled directions; rows follow directions, columns follow t."""

    directions: np.ndarray
    t_values: np.ndarray
    ratios: np.ndarray
    stabilized: bool
    normalized_min: float
    positive: bool
    applicable: bool = True

    @property
    def min_ratio(self) -> float:
        """Smallest ratio at the smallest t."""
        return float(np.min(self.ratios[:, -1])) if self.ratios.size else math.nan


def build_M(A, eps: float) -> np.ndarray:
    """Hermitian embedding [[eps I, A], [A*, -eps I]]."""
    M0 = as_square_matrix(A)
    n = M0.shape[0]
    eye = np.eye(n, dtype=complex)
    return np.block([[eps * eye, M0], [M0.conj().T, -eps * eye]])


def cd_factors(sigma: float, eps: float) -> tuple:
    """Nonnegative (c, d) with c**2 + d**2 = 1 for one singular value; swaps when eps changes sign."""
    if not sigma > 0:
        raise DomainError(f"cd_factors needs sigma > 0, got {sigma!r}")
    s = math.hypot(sigma, eps)
    e = abs(eps)
    big = math.sqrt((s + e) / (2.0 * s))
    small = sigma / math.sqrt(2.0 * s * (s + e))
    return (big, small) if eps >= 0 else (small, big)


def eigendec_M(T: SVDTriple, eps: float) -> EmbeddingEig:
    """Closed-form eigendecomposition of M(eps) from the SVD of A."""
    scale = float(T.sigma[0]) if T.n else 0.0
    floor = 10.0 * np.finfo(float).eps * max(scale, np.finfo(float).tiny)
    if T.sigma_min <= floor:
        raise NearDegenerateError(f"zero singular value {T.sigma_min:.3e}", (T.n - 1, T.n - 1), T.sigma_min)
    if T.n > 1 and T.gap <= floor:
        raise NearDegenerateError(f"repeated singular values (gap {T.gap:.3e})", T.gap_pair, T.gap)
    factors = [cd_factors(float(s), eps) for s in T.sigma]
    C = np.array([c for c, _ in factors])
    D = np.array([d for _, d in factors])
    S = np.sqrt(T.sigma**2 + eps**2)
    W = np.block([[T.U * C, -T.U * D], [T.V * D, T.V * C]])
    return EmbeddingEig(W, S, C, D)


def discr_M(sigma: Sequence[float], eps: float) -> float:
    """Discriminant of M(eps) from the singular values of A."""
    s2 = np.asarray(sigma, dtype=float) ** 2
    n = s2.shape[0]
    result = 4.0**n
    for j in range(n):
        for ell in range(j + 1, n):
            result *= (s2[j] - s2[ell]) ** 4
    return float(result * np.prod(s2 + eps**2))


def check_embedding_identities(A, eps: float, tol: float = 1e-10, discr_tol: float = 1e-8) -> EmbeddingCheck:
    """Compare the closed forms for M(eps) against a direct Hermitian eigensolve."""
    T = svd_point(A)
    M = build_M(A, eps)
    norm_M = float(np.linalg.norm(M))
    norm_A = float(np.linalg.norm(T.sigma))
    eig = herm_eig(M)
    expected = np.sort(np.concatenate([np.hypot(T.sigma, eps), -np.hypot(T.sigma, eps)]))[::-1]
    spectrum_error = float(np.max(np.abs(eig.eigenvalues - expected)))

    try:
        closed = eigendec_M(T, eps)
    except NearDegenerateError as exc:
        logger.info("Closed forms undefined (%s), checking the spectrum only", exc)
        passed = spectrum_error <= tol * (1.0 + norm_A)
        return EmbeddingCheck(spectrum_error, math.nan, math.nan, math.nan, passed, applicable=False)
    Lambda = np.diag(closed.eigenvalues)
    residual = float(np.linalg.norm(closed.W.conj().T @ M @ closed.W - Lambda)) / max(norm_M, 1.0)
    unitarity = unitarity_defect(closed.W)

    direct = discriminant(eig.eigenvalues)
    formula = discr_M(T.sigma, eps)
    discr_error = abs(direct - formula) / max(abs(formula), np.finfo(float).tiny)
    passed = (
        spectrum_error <= tol * (1.0 + norm_A)
        and residual <= tol
        and unitarity <= 1e-11
        and discr_error <= discr_tol
    )
    return EmbeddingCheck(spectrum_error, residual, unitarity, discr_error, passed)


def _det_map(family: MatrixFamily, xi: np.ndarray) -> np.ndarray:
    value = det(eval_family(family, xi))
    return np.array([value.real, value.imag])


def genericity_det(
    family: MatrixFamily, xi0: Sequence[float], h: Optional[float] = None, gen_tol: float = 1e-6
) -> GenericityReport:
    """Central-difference Jacobian of (Re det A, Im det A) at xi0 and whether it is invertible."""
    xi = np.asarray(xi0, dtype=float)
    step = h if h is not None else 1e-6 * (1.0 + float(np.linalg.norm(xi)))
    J = np.empty((2, 2))
    for axis in range(2):
        e = np.zeros(2)
        e[axis] = step
        J[:, axis] = (_det_map(family, xi + e) - _det_map(family, xi - e)) / (2.0 * step)
    singular_values = np.linalg.svd(J, compute_uv=False)
    smin = float(singular_values[-1])
    regular = bool(smin >= gen_tol * (1.0 + float(singular_values[0])))
    return GenericityReport(regular, J, smin, det(eval_family(family, xi)))


def planar_directions(count: int) -> np.ndarray:
    """count unit vectors evenly spaced in angle."""
    angles = 2.0 * math.pi * np.arange(count) / count
    return np.column_stack([np.cos(angles), np.sin(angles)])


def spatial_directions(count: int) -> np.ndarray:
    """Unit vectors (v_x, v_y, gamma): count azimuths at elevations 0 and +-pi/4, plus both poles."""
    rows = []
    for elevation in (0.0, math.pi / 4, -math.pi / 4):
        for azimuth in 2.0 * math.pi * np.arange(count) / count:
            rows.append(
                [math.cos(elevation) * math.cos(azimuth), math.cos(elevation) * math.sin(azimuth), math.sin(elevation)]
            )
    rows.extend([[0.0, 0.0, 1.0], [0.0, 0.0, -1.0]])
    return np.array(rows)


def _summarize(
    directions: np.ndarray, t_values: np.ndarray, ratios: np.ndarray, normalizer: float, opts: ProbeOptions
) -> ProbeResult:
    last, before = ratios[:, -1], ratios[:, -2]
    stabilized = bool(np.all((before > 0) & (np.abs(last - before) <= opts.stabilization * np.abs(before))))
    normalized_min = float(np.min(last)) / normalizer
    positive = bool(stabilized and normalized_min > opts.probe_tol)
    return ProbeResult(directions, t_values, ratios, stabilized, normalized_min, positive)


def sigma_limit_probe(
    family: MatrixFamily,
    xi0: Sequence[float],
    directions: Optional[np.ndarray] = None,
    t_values: Optional[Sequence[float]] = None,
    opts: Optional[ProbeOptions] = None,
) -> ProbeResult:
    """Ratios sigma_n(A(xi0 + t v)) / t; bounded away from zero at a generic rank-loss point."""
    opts = opts or ProbeOptions()
    xi = np.asarray(xi0, dtype=float)
    dirs = planar_directions(opts.n_directions) if directions is None else np.asarray(directions, dtype=float)
    ts = np.asarray(t_values if t_values is not None else opts.t_values, dtype=float)
    A0 = eval_family(family, xi)
    base = svd_point(A0)
    normalizer = max(1.0, float(np.linalg.norm(A0)))
    if base.sigma_min > opts.candidate_tol * normalizer:
        logger.info("sigma_n(xi0) = %.3e: not a rank-loss candidate", base.sigma_min)
        return ProbeResult(dirs, ts, np.empty((0, ts.size)), False, math.nan, False, applicable=False)

    ratios = np.empty((dirs.shape[0], ts.size))
    for i, v in enumerate(dirs):
        for k, t in enumerate(ts):
            ratios[i, k] = svd_point(eval_family(family, xi + t * v)).sigma_min / t
    result = _summarize(dirs, ts, ratios, normalizer, opts)
    logger.debug("sigma probe: min ratio %.3e, stabilized %s", result.min_ratio, result.stabilized)
    return result


def _discr_cofactor(sigma: np.ndarray) -> float:
    """discr_M at eps = 0 with the vanishing sigma_n**2 factor removed."""
    s2 = sigma**2
    n = s2.shape[0]
    result = 4.0**n
    for j in range(n):
        for ell in range(j + 1, n):
            result *= (s2[j] - s2[ell]) ** 4
    return float(result * np.prod(s2[:-1]))


def discr_limit_probe(
    family: MatrixFamily,
    xi0: Sequence[float],
    directions: Optional[np.ndarray] = None,
    t_values: Optional[Sequence[float]] = None,
    opts: Optional[ProbeOptions] = None,
) -> ProbeResult:
    """Ratios discr M(xi0 + t v, t gamma) / t**2 along 3-D directions (v, gamma)."""
    opts = opts or ProbeOptions()
    xi = np.asarray(xi0, dtype=float)
    dirs = spatial_directions(opts.n_directions) if directions is None else np.asarray(directions, dtype=float)
    ts = np.asarray(t_values if t_values is not None else opts.t_values, dtype=float)
    A0 = eval_family(family, xi)
    base = svd_point(A0)
    if base.sigma_min > opts.candidate_tol * max(1.0, float(np.linalg.norm(A0))):
        logger.info("sigma_n(xi0) = %.3e: discriminant probe not applicable", base.sigma_min)
        return ProbeResult(dirs, ts, np.empty((0, ts.size)), False, math.nan, False, applicable=False)

    ratios = np.empty((dirs.shape[0], ts.size))
    for i, (vx, vy, gamma) in enumerate(dirs):
        for k, t in enumerate(ts):
            sigma = svd_point(eval_family(family, xi + t * np.array([vx, vy]))).sigma
            ratios[i, k] = discr_M(sigma, t * gamma) / t**2
    normalizer = max(_discr_cofactor(base.sigma), np.finfo(float).tiny)
    result = _summarize(dirs, ts, ratios, normalizer, opts)
    logger.debug("discriminant probe: min ratio %.3e, stabilized %s", result.min_ratio, result.stabilized)
    return result

"""Dense complex matrix primitives: pointwise SVD, Hermitian eigendecomposition, determinant."""
import logging
import math
import warnings
from dataclasses import dataclass
from typing import Sequence

import numpy as np
import scipy.linalg

from berry_svd.utils.errors import DimensionError, DomainError, JacobiConvergenceError

logger = logging.getLogger(__name__)

MAX_SIZE = 64
MAX_SWEEPS = 60
HERMITIAN_TOL = 1e-12


@dataclass(frozen=True)
class SVDTriple:
    """Unitary U, descending singular values sigma and unitary V with A = U diag(sigma) V*."""

    U: np.ndarray
    sigma: np.ndarray
    V: np.ndarray

    @property
    def n(self) -> int:
        """Matrix size."""
        return self.sigma.shape[0]

    @property
    def gap(self) -> float:
        """Smallest distance between adjacent singular values, reported as 0 when n == 1."""
        if self.n < 2:
            return 0.0
        return float(np.min(self.sigma[:-1] - self.sigma[1:]))

    @property
    def gap_pair(self) -> tuple:
        """Index pair (j, j+1) realizing the smallest gap."""
        if self.n < 2:
            return (0, 0)
        j = int(np.argmin(self.sigma[:-1] - self.sigma[1:]))
        return (j, j + 1)

    @property
    def sigma_min(self) -> float:
        """Smallest singular value."""
        return float(self.sigma[-1])

    def reconstruct(self) -> np.ndarray:
        """U diag(sigma) V*."""
        return (self.U * self.sigma) @ self.V.conj().T

    def rephased(self, phases: np.ndarray) -> "SVDTriple":
        """Multiply column j of U and V by exp(1j * phases[j])."""
        factor = np.exp(1j * np.asarray(phases, dtype=float))
        return SVDTriple(self.U * factor, self.sigma, self.V * factor)


@dataclass(frozen=True)
class HermEig:
    """Eigenvectors Q (columns) and descending real eigenvalues of a Hermitian matrix."""

    Q: np.ndarray
    eigenvalues: np.ndarray


def as_square_matrix(A) -> np.ndarray:
    """Return A as a finite square complex128 array or raise."""
    M = np.array(A, dtype=complex)
    if M.ndim != 2 or M.shape[0] != M.shape[1] or M.shape[0] < 1:
        raise DimensionError(f"expected a non-empty square matrix, got shape {M.shape}")
    if M.shape[0] > MAX_SIZE:
        raise DimensionError(f"matrix size {M.shape[0]} exceeds the cap of {MAX_SIZE}")
    if not np.all(np.isfinite(M)):
        raise DomainError("matrix has non-finite entries")
    return M


def unitarity_defect(Q: np.ndarray) -> float:
    """Frobenius norm of Q*Q - I."""
    return float(np.linalg.norm(Q.conj().T @ Q - np.eye(Q.shape[1])))


def _rotate_pair(X: np.ndarray, i: int, j: int, c: float, s: float, phase: complex):
    """Apply the complex plane rotation on columns i, j of X in place."""
    xi = X[:, i].copy()
    xj = X[:, j] * np.conj(phase)
    X[:, i] = c * xi - s * xj
    X[:, j] = s * xi + c * xj


def _jacobi_orthogonalize(G: np.ndarray, V: np.ndarray, scale: float):
    """Rotate the columns of G (and V alongside) until they are mutually orthogonal."""
    n = G.shape[1]
    tol = n * np.finfo(float).eps
    floor = (1e-14 * scale) ** 2
    for sweep in range(MAX_SWEEPS):
        rotated = False
        for i in range(n - 1):
            for j in range(i + 1, n):
                alpha = float(np.vdot(G[:, i], G[:, i]).real)
                beta = float(np.vdot(G[:, j], G[:, j]).real)
                gamma = complex(np.vdot(G[:, i], G[:, j]))
                mag = abs(gamma)
                if mag <= tol * math.sqrt(alpha * beta) or mag <= floor:
                    continue
                rotated = True
                phase = gamma / mag
                zeta = (beta - alpha) / (2.0 * mag)
                t = math.copysign(1.0, zeta) / (abs(zeta) + math.sqrt(1.0 + zeta * zeta))
                c = 1.0 / math.sqrt(1.0 + t * t)
                s = c * t
                _rotate_pair(G, i, j, c, s, phase)
                _rotate_pair(V, i, j, c, s, phase)
        if not rotated:
            return sweep
    raise JacobiConvergenceError(f"one-sided Jacobi did not converge in {MAX_SWEEPS} sweeps")


def _complete_basis(U_good: np.ndarray, n: int) -> np.ndarray:
    """Orthonormal columns spanning the complement of U_good (deterministic)."""
    k = U_good.shape[1]
    Q, _ = scipy.linalg.qr(np.hstack([U_good, np.eye(n, dtype=complex)]))
    return Q[:, k:n]


def svd_point(A) -> SVDTriple:
    """Compute the SVD of a square complex matrix by one-sided Jacobi rotations.

    Phase convention: the largest-magnitude entry of each right singular vector is
    made real positive, and the left vector is rotated with it.
    """
    M = as_square_matrix(A)
    n = M.shape[0]
    scale = float(np.linalg.norm(M))
    G = M.copy()
    V = np.eye(n, dtype=complex)
    if scale > 0.0:
        sweeps = _jacobi_orthogonalize(G, V, scale)
        logger.debug("Jacobi SVD of size %d converged in %d sweeps", n, sweeps)

    norms = np.linalg.norm(G, axis=0)
    order = np.argsort(-norms, kind="stable")
    sigma = norms[order]
    G = G[:, order]
    V = V[:, order]

    zero_cut = n * np.finfo(float).eps * (sigma[0] if n else 0.0)
    good = int(np.count_nonzero(sigma > zero_cut)) if scale > 0.0 else 0
    U = np.empty((n, n), dtype=complex)
    U[:, :good] = G[:, :good] / sigma[:good]
    if good < n:
        U[:, good:] = _complete_basis(U[:, :good], n)

    lead = np.argmax(np.abs(V), axis=0)
    pivots = V[lead, np.arange(n)]
    correction = np.conj(pivots) / np.abs(pivots)
    return SVDTriple(U * correction, sigma, V * correction)


def herm_eig(H) -> HermEig:
    """Eigendecomposition of a Hermitian matrix with eigenvalues in descending order."""
    M = np.array(H, dtype=complex)
    if M.ndim != 2 or M.shape[0] != M.shape[1] or M.shape[0] < 1:
        raise DimensionError(f"expected a non-empty square matrix, got shape {M.shape}")
    if not np.all(np.isfinite(M)):
        raise DomainError("matrix has non-finite entries")
    skew = float(np.linalg.norm(M - M.conj().T))
    size = float(np.linalg.norm(M))
    if skew > HERMITIAN_TOL * max(size, np.finfo(float).tiny):
        raise DomainError(f"matrix is not Hermitian (||H - H*||_F = {skew:.3e})")
    M = 0.5 * (M + M.conj().T)
    eigenvalues, Q = scipy.linalg.eigh(M)
    return HermEig(Q[:, ::-1], eigenvalues[::-1])


def det(A) -> complex:
    """Determinant by LU factorization with partial pivoting."""
    M = np.array(A, dtype=complex)
    if M.ndim != 2 or M.shape[0] != M.shape[1] or M.shape[0] < 1:
        raise DimensionError(f"expected a non-empty square matrix, got shape {M.shape}")
    with warnings.catch_warnings():
        # Exactly singular input has a zero pivot; the determinant is then 0.
        warnings.simplefilter("ignore", scipy.linalg.LinAlgWarning)
        lu, piv = scipy.linalg.lu_factor(M, check_finite=False)
    swaps = int(np.count_nonzero(piv != np.arange(M.shape[0])))
    sign = -1.0 if swaps % 2 else 1.0
    return complex(sign * np.prod(np.diag(lu)))


def discriminant(eigenvalues: Sequence[float]) -> float:
    """Product of squared pairwise eigenvalue differences."""
    lam = np.asarray(eigenvalues, dtype=float)
    n = lam.shape[0]
    result = 1.0
    for j in range(n):
        for ell in range(j):
            result *= (lam[j] - lam[ell]) ** 2
    return float(result)

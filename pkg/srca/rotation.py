"""Rotations that move centered data into standard position before sphere fitting."""

import logging
from dataclasses import dataclass

import numpy as np

from .data import DataMatrix
from .errors import DataError, NumericalError
from .schemas import RotationSpec

logger = logging.getLogger(__name__)

ORTHOGONALITY_TOL = 1e-10


@dataclass(frozen=True)
class OrthogonalMatrix:
    values: np.ndarray

    def __post_init__(self):
        values = np.array(self.values, dtype=float)
        if values.ndim != 2 or values.shape[0] != values.shape[1]:
            raise NumericalError(f"rotation must be square, got shape {values.shape}")
        err = np.max(np.abs(values.T @ values - np.eye(values.shape[0])))
        if err > ORTHOGONALITY_TOL:
            raise NumericalError(f"matrix is not orthogonal (max |R'R - I| = {err:.3e})")
        values.setflags(write=False)
        object.__setattr__(self, "values", values)

    @property
    def dim(self) -> int:
        return self.values.shape[0]

    @classmethod
    def identity(cls, dim: int) -> "OrthogonalMatrix":
        return cls(np.eye(dim))


@dataclass(frozen=True)
class OrthomaxResult:
    rotation: OrthogonalMatrix
    criterion: float
    iterations: int
    converged: bool


def orthomax_gamma(spec: RotationSpec, d: int, m: int) -> float:
    """Factor-analysis conventions for the named members of the orthomax family."""
    if spec.kind == "quartimax":
        return 0.0
    if spec.kind == "varimax":
        return 1.0
    if spec.kind == "equamax":
        return m / 2.0
    if spec.kind == "parsimax":
        return d * (m - 1) / (d + m - 2) if d + m > 2 else 0.0
    if spec.kind == "orthomax":
        return float(spec.gamma)
    raise ValueError(f"{spec.kind} is not an orthomax rotation")


def _fix_signs(vectors: np.ndarray) -> np.ndarray:
    # largest-magnitude entry of each column made positive
    pivot = np.argmax(np.abs(vectors), axis=0)
    signs = np.sign(vectors[pivot, np.arange(vectors.shape[1])])
    signs[signs == 0] = 1.0
    return vectors * signs


def pca_spectrum(X: DataMatrix) -> tuple[np.ndarray, np.ndarray]:
    """Eigenvalues (descending) and sign-fixed eigenvectors of the sample covariance."""
    if X.rows < 2:
        raise DataError("PCA needs at least two rows")
    cov = np.atleast_2d(np.cov(X.values, rowvar=False, ddof=1))
    if not np.all(np.isfinite(cov)):
        raise NumericalError("sample covariance is not finite")
    eigenvalues, eigenvectors = np.linalg.eigh(cov)
    order = np.argsort(eigenvalues)[::-1]
    return eigenvalues[order], _fix_signs(eigenvectors[:, order])


def pca_rotation(X: DataMatrix) -> OrthogonalMatrix:
    _, vectors = pca_spectrum(X)
    return OrthogonalMatrix(vectors)


def orthomax_criterion(B: np.ndarray, gamma: float) -> float:
    d = B.shape[0]
    squared = B**2
    return float(np.sum(squared**2) - gamma / d * np.sum(squared.sum(axis=0) ** 2))


def _polar_step(A: np.ndarray, B: np.ndarray, gamma: float) -> np.ndarray:
    d = A.shape[0]
    target = B**3 - (gamma / d) * B * np.sum(B**2, axis=0)
    U, _, Vt = np.linalg.svd(A.T @ target)
    return U @ Vt


def _pairwise_sweep(B: np.ndarray, T: np.ndarray, gamma: float) -> float:
    d, m = B.shape
    max_theta = 0.0
    for i in range(m - 1):
        for j in range(i + 1, m):
            u = B[:, i] ** 2 - B[:, j] ** 2
            v = 2 * B[:, i] * B[:, j]
            usum, vsum = u.sum(), v.sum()
            numer = 2 * u @ v - 2 * gamma * usum * vsum / d
            denom = u @ u - v @ v - gamma * (usum**2 - vsum**2) / d
            theta = np.arctan2(numer, denom) / 4
            max_theta = max(max_theta, abs(theta))
            planar = np.array([[np.cos(theta), -np.sin(theta)], [np.sin(theta), np.cos(theta)]])
            B[:, [i, j]] = B[:, [i, j]] @ planar
            T[:, [i, j]] = T[:, [i, j]] @ planar
    return max_theta


def orthomax_rotation(
    L: np.ndarray, gamma: float, max_iter: int = 500, tol: float = 1e-10
) -> OrthomaxResult:
    """Orthogonal T maximizing the orthomax criterion of L @ T.

    gamma in [0, 1] uses the SVD (polar) update; larger gamma falls back to
    sweeps of optimal planar rotations. The best iterate is always returned.
    """
    A = np.asarray(L, dtype=float)
    if A.ndim != 2 or A.shape[1] > A.shape[0]:
        raise DataError(f"loadings must be d x m with m <= d, got {A.shape}")
    if not np.all(np.isfinite(A)):
        raise NumericalError("loadings are not finite")
    m = A.shape[1]

    T = np.eye(m)
    B = A.copy()
    best_T, best = T.copy(), orthomax_criterion(B, gamma)
    converged = False
    iterations = 0
    for iterations in range(1, max_iter + 1):
        previous = orthomax_criterion(B, gamma)
        if 0 <= gamma <= 1:
            T = _polar_step(A, B, gamma)
            B = A @ T
            current = orthomax_criterion(B, gamma)
            step_small = abs(current - previous) <= tol * max(abs(current), 1.0)
        else:
            max_theta = _pairwise_sweep(B, T, gamma)
            current = orthomax_criterion(B, gamma)
            step_small = max_theta < tol
        if current >= best:
            best_T, best = T.copy(), current
        if step_small:
            converged = True
            break
    if not converged:
        logger.warning("orthomax stopped after %d iterations without converging", max_iter)
    # re-orthogonalize to wash out accumulated round-off
    U, _, Vt = np.linalg.svd(best_T)
    return OrthomaxResult(OrthogonalMatrix(U @ Vt), best, iterations, converged)


def get_rotation(X: DataMatrix, spec: RotationSpec) -> OrthogonalMatrix:
    """The d x d matrix R used as X_rotated = X @ R (X already centered)."""
    if spec.kind == "identity":
        return OrthogonalMatrix.identity(X.cols)
    eigenvalues, vectors = pca_spectrum(X)
    if spec.kind == "pca":
        return OrthogonalMatrix(vectors)
    d = X.cols
    loadings = vectors * np.sqrt(np.clip(eigenvalues, 0.0, None))
    gamma = orthomax_gamma(spec, d, d)
    result = orthomax_rotation(loadings, gamma)
    logger.debug("%s rotation: criterion %.6g after %d iterations", spec.kind, result.criterion, result.iterations)
    R = vectors @ result.rotation.values
    U, _, Vt = np.linalg.svd(R)
    return OrthogonalMatrix(U @ Vt)


def apply_rotation(X: DataMatrix, R: OrthogonalMatrix) -> DataMatrix:
    if X.cols != R.dim:
        raise DataError(f"data has {X.cols} columns but the rotation is {R.dim} x {R.dim}")
    return X.with_values(X.values @ R.values)


def invert_rotation(X: DataMatrix, R: OrthogonalMatrix) -> DataMatrix:
    if X.cols != R.dim:
        raise DataError(f"data has {X.cols} columns but the rotation is {R.dim} x {R.dim}")
    return X.with_values(X.values @ R.values.T)

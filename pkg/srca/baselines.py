"""PCA reduction and the two-step SPCA baseline (PCA subspace, then a sphere in it)."""

import logging
from dataclasses import dataclass
from typing import Optional

import numpy as np
from scipy.optimize import least_squares

from .data import DataMatrix
from .errors import ConfigError, DataError, NumericalError
from .geometry import EPS_SINGULAR
from .rotation import pca_spectrum
from .schemas import BaselineModelDocument

logger = logging.getLogger(__name__)

ORTHONORMAL_TOL = 1e-10
SCATTER_COND_LIMIT = 1e12


def _check_orthonormal(basis: np.ndarray) -> np.ndarray:
    basis = np.array(basis, dtype=float)
    if basis.ndim != 2:
        raise DataError(f"basis must be a matrix, got shape {basis.shape}")
    err = np.max(np.abs(basis.T @ basis - np.eye(basis.shape[1])))
    if err > ORTHONORMAL_TOL:
        raise NumericalError(f"basis columns are not orthonormal (max error {err:.3e})")
    basis.setflags(write=False)
    return basis


def _check_columns(X: DataMatrix, mean: np.ndarray) -> None:
    if X.cols != mean.shape[0]:
        raise DataError(f"model expects {mean.shape[0]} columns, data has {X.cols}")


@dataclass(frozen=True)
class PcaModel:
    mean: np.ndarray
    basis: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "mean", np.array(self.mean, dtype=float))
        object.__setattr__(self, "basis", _check_orthonormal(self.basis))

    def transform(self, X: DataMatrix) -> DataMatrix:
        _check_columns(X, self.mean)
        centered = X.values - self.mean
        return X.with_values(self.mean + (centered @ self.basis) @ self.basis.T)

    def to_document(self) -> BaselineModelDocument:
        return BaselineModelDocument(kind="pca", mean=self.mean.tolist(), basis=self.basis.tolist())


@dataclass(frozen=True)
class SpcaModel:
    mean: np.ndarray
    basis: np.ndarray
    center: np.ndarray
    radius: float

    def __post_init__(self):
        object.__setattr__(self, "mean", np.array(self.mean, dtype=float))
        basis = _check_orthonormal(self.basis)
        center = np.array(self.center, dtype=float)
        if center.shape != (basis.shape[1],):
            raise DataError(f"center has shape {center.shape}, subspace has {basis.shape[1]} axes")
        if not self.radius > 0:
            raise NumericalError(f"SPCA radius must be positive, got {self.radius}")
        object.__setattr__(self, "basis", basis)
        object.__setattr__(self, "center", center)
        object.__setattr__(self, "radius", float(self.radius))

    def subspace_coordinates(self, X: DataMatrix) -> np.ndarray:
        _check_columns(X, self.mean)
        return (X.values - self.mean) @ self.basis

    def transform(self, X: DataMatrix) -> DataMatrix:
        return spca_transform(self, X)

    def to_document(self) -> BaselineModelDocument:
        return BaselineModelDocument(
            kind="spca",
            mean=self.mean.tolist(),
            basis=self.basis.tolist(),
            center=self.center.tolist(),
            radius=self.radius,
        )


def baseline_from_document(doc: BaselineModelDocument):
    if doc.kind == "pca":
        return PcaModel(np.array(doc.mean), np.array(doc.basis))
    if doc.center is None or doc.radius is None:
        raise DataError("spca model document needs center and radius")
    return SpcaModel(np.array(doc.mean), np.array(doc.basis), np.array(doc.center), doc.radius)


# ---------------------------
# PCA
# ---------------------------

def _top_components(X: DataMatrix, k: int) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    if not 1 <= k <= X.cols:
        raise ConfigError(f"cannot keep {k} components of {X.cols}-dimensional data")
    mean = X.values.mean(axis=0)
    eigenvalues, vectors = pca_spectrum(X.with_values(X.values - mean))
    return mean, eigenvalues, vectors[:, :k]


def pca_fit(X: DataMatrix, d_prime: int) -> PcaModel:
    if d_prime >= X.cols:
        raise ConfigError(f"PCA needs d' < d, got d'={d_prime}, d={X.cols}")
    mean, eigenvalues, basis = _top_components(X, d_prime)
    logger.debug("pca: kept %d of %d components, discarded variance %.6g", d_prime, X.cols, eigenvalues[d_prime:].sum())
    return PcaModel(mean, basis)


def pca_fit_reduce(X: DataMatrix, d_prime: int) -> tuple[PcaModel, DataMatrix]:
    model = pca_fit(X, d_prime)
    return model, model.transform(X)


# ---------------------------
# SPCA
# ---------------------------

def spca_algebraic_center(Y: DataMatrix) -> np.ndarray:
    """Closed-form minimizer of the algebraic sphere loss sum_i (||y_i - c||^2 - r^2)^2.

        c = 1/2 S^-1 sum_i (||y_i||^2 - mean ||y||^2) (y_i - mean y),  S = scatter of Y
    """
    values = Y.values
    deviations = values - values.mean(axis=0)
    scatter = deviations.T @ deviations
    if Y.rows < Y.cols + 1 or np.linalg.cond(scatter) > SCATTER_COND_LIMIT:
        raise NumericalError("points do not affinely span the subspace; scatter matrix is singular")
    sq_norms = np.sum(values**2, axis=1)
    rhs = (sq_norms - sq_norms.mean()) @ deviations
    return 0.5 * np.linalg.solve(scatter, rhs)


def spca_algebraic_radius(Y: DataMatrix, center: np.ndarray) -> float:
    mean_sq = float(np.mean(np.sum((Y.values - center) ** 2, axis=1)))
    if mean_sq < EPS_SINGULAR**2:
        raise NumericalError("all points coincide with the center; radius undefined")
    return float(np.sqrt(mean_sq))


def cardano_radius(Y: DataMatrix, center: np.ndarray) -> float:
    """Positive real root of r^3 + p r + q = 0 (q = 0) by the trigonometric formula, k = 0."""
    p = -float(np.mean(np.sum((Y.values - center) ** 2, axis=1)))
    q = 0.0
    if p >= 0:
        raise NumericalError("all points coincide with the center; radius undefined")
    angle = np.arccos(3 * q / (2 * p) * np.sqrt(-3 / p)) / 3
    return float(2 * np.sqrt(-p / 3) * np.cos(angle))


def _refine_geometric(Y: np.ndarray, center: np.ndarray, radius: float) -> tuple[np.ndarray, float]:
    def residuals(params):
        return np.linalg.norm(Y - params[:-1], axis=1) - params[-1]

    initial = np.append(center, radius)
    if Y.shape[0] < initial.shape[0]:
        logger.warning("too few points (%d) for Levenberg-Marquardt refinement; keeping algebraic fit", Y.shape[0])
        return center, radius
    result = least_squares(residuals, initial, method="lm")
    if not result.success or result.x[-1] <= 0:
        logger.warning("geometric refinement failed (%s); keeping algebraic fit", result.message)
        return center, radius
    return result.x[:-1], float(result.x[-1])


def spca_fit(X: DataMatrix, d_prime: int, refine: bool = False) -> SpcaModel:
    if d_prime + 1 > X.cols:
        raise ConfigError(f"SPCA needs d'+1 <= d, got d'={d_prime}, d={X.cols}")
    mean, _, basis = _top_components(X, d_prime + 1)
    Y = DataMatrix((X.values - mean) @ basis)
    center = spca_algebraic_center(Y)
    radius = spca_algebraic_radius(Y, center)
    if refine:
        center, radius = _refine_geometric(Y.values, center, radius)
    logger.info("spca d'=%d: radius %.6g", d_prime, radius)
    return SpcaModel(mean, basis, center, radius)


def spca_transform(model: SpcaModel, X: DataMatrix) -> DataMatrix:
    Y = model.subspace_coordinates(X)
    offsets = Y - model.center
    norms = np.linalg.norm(offsets, axis=1)
    singular = norms < EPS_SINGULAR
    directions = np.zeros_like(offsets)
    directions[~singular] = offsets[~singular] / norms[~singular, None]
    if singular.any():
        logger.warning("%d rows coincide with the SPCA center; using fallback direction", singular.sum())
        directions[singular, 0] = 1.0
    on_sphere = model.center + model.radius * directions
    return X.with_values(model.mean + on_sphere @ model.basis.T)


def pythagorean_split(model: SpcaModel, X: DataMatrix) -> tuple[np.ndarray, np.ndarray]:
    """Per-row (point-to-plane^2, in-plane point-to-sphere^2); their sum is the SPCA error."""
    Y = model.subspace_coordinates(X)
    centered = X.values - model.mean
    to_plane = np.sum((centered - Y @ model.basis.T) ** 2, axis=1)
    to_sphere = (np.linalg.norm(Y - model.center, axis=1) - model.radius) ** 2
    return to_plane, to_sphere

"""Point-to-sphere distance, the geometric loss, its gradients, and the sphere projection.

A sub-sphere S_I(c, r) lives in the coordinate plane spanned by the index set I.
Under a weight matrix W the squared distance from x splits into an out-of-plane
part and an in-plane part:

    ||I^c sqrt(W) (x - c)||^2 + (||I sqrt(W) (x - c)|| - r)^2
"""

import logging
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .data import DataMatrix
from .errors import ConfigError, DataError, NumericalError

logger = logging.getLogger(__name__)

EPS_SINGULAR = 1e-12


@dataclass(frozen=True)
class IndexSet:
    """Sorted, zero-based coordinate indices. Serialized 1-based."""

    members: tuple[int, ...]
    ambient_dim: int

    def __post_init__(self):
        members = tuple(int(m) for m in self.members)
        if not members:
            raise ConfigError("index set is empty")
        if any(b <= a for a, b in zip(members, members[1:])):
            raise ConfigError(f"index set {members} is not strictly increasing")
        if members[0] < 0 or members[-1] >= self.ambient_dim:
            raise ConfigError(f"index set {members} outside 0..{self.ambient_dim - 1}")
        object.__setattr__(self, "members", members)

    @classmethod
    def from_one_based(cls, members, ambient_dim: int) -> "IndexSet":
        return cls(tuple(sorted(int(m) - 1 for m in members)), ambient_dim)

    @property
    def one_based(self) -> list[int]:
        return [m + 1 for m in self.members]

    @property
    def mask(self) -> np.ndarray:
        mask = np.zeros(self.ambient_dim, dtype=bool)
        mask[list(self.members)] = True
        return mask

    @property
    def complement(self) -> tuple[int, ...]:
        return tuple(int(i) for i in np.flatnonzero(~self.mask))

    def __len__(self) -> int:
        return len(self.members)


@dataclass(frozen=True)
class WeightMatrix:
    values: np.ndarray
    sqrt_factor: np.ndarray = field(init=False, repr=False)

    def __post_init__(self):
        values = np.array(self.values, dtype=float)
        if values.ndim != 2 or values.shape[0] != values.shape[1]:
            raise ConfigError(f"weight matrix must be square, got {values.shape}")
        if np.max(np.abs(values - values.T)) > 1e-12:
            raise ConfigError("weight matrix is not symmetric")
        eigenvalues, vectors = np.linalg.eigh(values)
        if eigenvalues.min() <= 0:
            raise ConfigError("weight matrix is not positive definite")
        root = (vectors * np.sqrt(eigenvalues)) @ vectors.T
        root = (root + root.T) / 2
        values.setflags(write=False)
        root.setflags(write=False)
        object.__setattr__(self, "values", values)
        object.__setattr__(self, "sqrt_factor", root)

    @classmethod
    def identity(cls, dim: int) -> "WeightMatrix":
        return cls(np.eye(dim))

    @property
    def dim(self) -> int:
        return self.values.shape[0]

    @property
    def is_diagonal(self) -> bool:
        return bool(np.all(self.values == np.diag(np.diag(self.values))))

    @property
    def is_identity(self) -> bool:
        return bool(np.array_equal(self.values, np.eye(self.dim)))


@dataclass(frozen=True)
class SphereParams:
    """Center and radius of S_I(c, r).

    The infinite-radius limit is a flat: the hyperplane of the I-plane through
    c with unit normal `normal` (zero off I). Flats carry radius inf.
    """

    center: np.ndarray
    radius: float
    normal: Optional[np.ndarray] = None

    def __post_init__(self):
        center = np.array(self.center, dtype=float).ravel()
        radius = float(self.radius)
        if not np.all(np.isfinite(center)):
            raise NumericalError("sphere parameters are not finite")
        if self.normal is not None:
            normal = np.array(self.normal, dtype=float).ravel()
            if normal.shape != center.shape or not np.all(np.isfinite(normal)):
                raise NumericalError(f"flat normal has shape {normal.shape}, center {center.shape}")
            if abs(np.linalg.norm(normal) - 1.0) > 1e-9:
                raise NumericalError("flat normal is not a unit vector")
            if radius != np.inf:
                raise NumericalError(f"a flat has infinite radius, got {radius}")
            normal.setflags(write=False)
            object.__setattr__(self, "normal", normal)
        elif not np.isfinite(radius):
            raise NumericalError("sphere parameters are not finite")
        # radius 0 marks a degenerate fit; negative is never valid
        if radius < 0:
            raise NumericalError(f"sphere radius must be nonnegative, got {radius}")
        center.setflags(write=False)
        object.__setattr__(self, "center", center)
        object.__setattr__(self, "radius", radius)

    @classmethod
    def flat(cls, point: np.ndarray, normal: np.ndarray) -> "SphereParams":
        return cls(point, np.inf, normal)

    @property
    def is_flat(self) -> bool:
        return self.normal is not None


def _check(X: np.ndarray, params: SphereParams, I: IndexSet, W: Optional[WeightMatrix] = None):
    d = X.shape[1]
    if params.center.shape[0] != d or I.ambient_dim != d or (W is not None and W.dim != d):
        raise DataError(
            f"dimension mismatch: data {d}, center {params.center.shape[0]}, "
            f"index set {I.ambient_dim}" + ("" if W is None else f", weight {W.dim}")
        )
    if params.is_flat and np.any(params.normal[~I.mask]):
        raise DataError(f"flat normal leaves the plane of {I.one_based}")


def _weighted_deviations(X: np.ndarray, center: np.ndarray, W: WeightMatrix) -> np.ndarray:
    # rows are sqrt(W) (x_i - c); sqrt(W) is symmetric
    return (X - center) @ W.sqrt_factor


def flat_offsets(X: np.ndarray, params: SphereParams, W: WeightMatrix) -> np.ndarray:
    """Signed W-distance from each row to the hyperplane of a flat, inside the I-plane."""
    if not W.is_diagonal:
        raise ConfigError("flats are defined for diagonal weight matrices only")
    scale = np.sqrt(params.normal**2 @ (1.0 / np.diag(W.values)))
    return (X - params.center) @ params.normal / scale


def sq_distances(X: DataMatrix, params: SphereParams, I: IndexSet, W: WeightMatrix) -> np.ndarray:
    """Per-row squared point-to-sphere distance rho(x_i; theta)."""
    _check(X.values, params, I, W)
    deviations = _weighted_deviations(X.values, params.center, W)
    mask = I.mask
    out_of_plane = np.sum(deviations[:, ~mask] ** 2, axis=1)
    if params.is_flat:
        return out_of_plane + flat_offsets(X.values, params, W) ** 2
    in_plane = np.linalg.norm(deviations[:, mask], axis=1)
    return out_of_plane + (in_plane - params.radius) ** 2


def point_to_sphere_sq_distance(
    x: np.ndarray, params: SphereParams, I: IndexSet, W: WeightMatrix
) -> float:
    row = DataMatrix(np.asarray(x, dtype=float).reshape(1, -1))
    return float(sq_distances(row, params, I, W)[0])


def loss(X: DataMatrix, params: SphereParams, I: IndexSet, W: WeightMatrix) -> float:
    # ordered summation keeps the value reproducible
    return float(np.sum(sq_distances(X, params, I, W)))


def in_plane_norms(X: DataMatrix, center: np.ndarray, I: IndexSet, W: WeightMatrix) -> np.ndarray:
    deviations = _weighted_deviations(X.values, np.asarray(center, dtype=float), W)
    return np.linalg.norm(deviations[:, I.mask], axis=1)


def loss_gradient(
    X: DataMatrix, params: SphereParams, I: IndexSet, W: WeightMatrix
) -> tuple[np.ndarray, float]:
    """Analytic gradient of the loss in (c, r).

    A sample whose in-plane norm falls below EPS_SINGULAR contributes only
    -2 W (x_i - c); the undefined cone-point term is dropped.
    """
    _check(X.values, params, I, W)
    if params.is_flat:
        raise ConfigError("the loss gradient is defined for finite spheres only")
    diff = X.values - params.center
    deviations = diff @ W.sqrt_factor
    mask = I.mask
    projected = np.where(mask, deviations, 0.0)
    norms = np.linalg.norm(projected, axis=1)
    regular = norms >= EPS_SINGULAR
    scaled = np.zeros_like(projected)
    scaled[regular] = projected[regular] / norms[regular, None]

    grad_center = -2 * np.sum(diff @ W.values, axis=0)
    grad_center += 2 * params.radius * np.sum(scaled, axis=0) @ W.sqrt_factor
    grad_radius = 2 * X.rows * params.radius - 2 * float(np.sum(norms))
    return grad_center, grad_radius


def optimal_radius(X: DataMatrix, center: np.ndarray, I: IndexSet, W: WeightMatrix) -> float:
    if X.rows < 1:
        raise DataError("optimal radius needs at least one row")
    radius = float(np.mean(in_plane_norms(X, center, I, W)))
    if radius < EPS_SINGULAR:
        logger.warning("all points coincide with the center in the selected plane; radius is 0")
        return 0.0
    return radius


def penalty(X: DataMatrix, params: SphereParams, I: IndexSet) -> float:
    """Sparsity penalty sum_i ||I (x_i - c)||_1 on the retained coordinates."""
    _check(X.values, params, I)
    return float(np.sum(np.abs(X.values[:, I.mask] - params.center[I.mask])))


def penalized_loss(
    X: DataMatrix, params: SphereParams, I: IndexSet, W: WeightMatrix, penalty_lambda: float
) -> float:
    value = loss(X, params, I, W)
    if penalty_lambda:
        value += penalty_lambda * penalty(X, params, I)
    return value


def singular_rows(X: DataMatrix, params: SphereParams, I: IndexSet) -> np.ndarray:
    _check(X.values, params, I)
    norms = np.linalg.norm(X.values[:, I.mask] - params.center[I.mask], axis=1)
    return norms < EPS_SINGULAR


def project_to_sphere(
    X: DataMatrix, params: SphereParams, I: IndexSet, k: int = 2
) -> DataMatrix:
    """Radial projection onto S_I(c, r); complement coordinates collapse onto c.

    The weight matrix plays no role here. Rows sitting on the center are sent
    along the first axis of I (see singular_rows).
    """
    if k != 2:
        raise ConfigError(f"only Euclidean (l2) sphere projection is supported, got l{k}")
    _check(X.values, params, I)
    mask = I.mask
    out = np.tile(params.center, (X.rows, 1))
    offsets = X.values[:, mask] - params.center[mask]
    if params.is_flat:
        # orthogonal projection onto the hyperplane inside the I-plane
        normal = params.normal[mask]
        out[:, mask] = X.values[:, mask] - np.outer(offsets @ normal, normal)
        return X.with_values(out)
    norms = np.linalg.norm(offsets, axis=1)
    singular = norms < EPS_SINGULAR
    directions = np.zeros_like(offsets)
    directions[~singular] = offsets[~singular] / norms[~singular, None]
    if singular.any():
        logger.warning("%d rows coincide with the sphere center; using fallback direction", singular.sum())
        directions[singular, 0] = 1.0
    out[:, mask] = params.center[mask] + params.radius * directions
    return X.with_values(out)

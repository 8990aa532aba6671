"""Seeded synthetic datasets: plane, torus, sphere, the three-torus gem and two orthogonal loops."""

import logging

import numpy as np

from .data import DataMatrix
from .errors import ConfigError
from .schemas import GeneratorSpec
from .utils import make_rng

logger = logging.getLogger(__name__)

NOISE_STREAM = 7
TWO_PI = 2 * np.pi


def _add_noise(values: np.ndarray, noise_var: float, seed: int) -> np.ndarray:
    if noise_var == 0:
        return values
    rng = make_rng(seed, stream=NOISE_STREAM)
    return values + rng.normal(0.0, np.sqrt(noise_var), size=values.shape)


def gen_plane(n: int, seed: int = 0) -> DataMatrix:
    rng = make_rng(seed)
    xy = rng.uniform(-3.0, 3.0, size=(n, 2))
    return DataMatrix(np.column_stack([xy, np.zeros(n)]))


def torus_points(theta: np.ndarray, phi: np.ndarray, R1: float, R2: float) -> np.ndarray:
    ring = R1 + R2 * np.cos(theta)
    return np.column_stack([ring * np.cos(phi), ring * np.sin(phi), R2 * np.sin(theta)])


def gen_torus(n: int, R1: float = 0.5, R2: float = 1.0 / 3.0, seed: int = 0, stream: int = 0) -> DataMatrix:
    if not 0 < R2 < R1:
        raise ConfigError(f"torus needs 0 < R2 < R1, got R1={R1}, R2={R2}")
    rng = make_rng(seed, stream=stream)
    theta, phi = rng.uniform(0.0, TWO_PI, size=(2, n))
    return DataMatrix(torus_points(theta, phi, R1, R2))


def gen_sphere(n: int, seed: int = 0) -> DataMatrix:
    # angles uniform on the parameter box, not area-uniform on the sphere
    rng = make_rng(seed)
    theta, phi = rng.uniform(0.0, TWO_PI, size=(2, n))
    return DataMatrix(
        np.column_stack([np.cos(theta) * np.sin(phi), np.sin(theta) * np.sin(phi), np.cos(phi)])
    )


def _rotation_x(angle: float) -> np.ndarray:
    c, s = np.cos(angle), np.sin(angle)
    return np.array([[1.0, 0.0, 0.0], [0.0, c, -s], [0.0, s, c]])


def _rotation_y(angle: float) -> np.ndarray:
    c, s = np.cos(angle), np.sin(angle)
    return np.array([[c, 0.0, s], [0.0, 1.0, 0.0], [-s, 0.0, c]])


def _rotation_z(angle: float) -> np.ndarray:
    c, s = np.cos(angle), np.sin(angle)
    return np.array([[c, -s, 0.0], [s, c, 0.0], [0.0, 0.0, 1.0]])


# (rotation, translation) applied to each batch as y = R x + tau
GEM_MOTIONS = (
    (_rotation_x(np.pi / 2), np.array([0.0, 0.0, 3.0])),
    (_rotation_y(np.pi / 4), np.array([0.0, 3.0, 3.0])),
    (_rotation_z(0.0), np.array([3.0, 3.0, 3.0])),
)


def gen_gem(n: int, seed: int = 0, R1: float = 0.5, R2: float = 1.0 / 3.0) -> DataMatrix:
    sizes = [len(part) for part in np.array_split(np.arange(n), 3)]
    batches, labels = [], []
    for batch, (size, (rotation, translation)) in enumerate(zip(sizes, GEM_MOTIONS)):
        torus = gen_torus(size, R1, R2, seed=seed, stream=batch).values
        batches.append(torus @ rotation.T + translation)
        labels.append(np.full(size, batch))
    values = (np.vstack(batches) - 1.0) / 2.0
    return DataMatrix(values, np.concatenate(labels))


def gen_orthogonal_loops(n: int = 400, noise_var: float = 0.0, seed: int = 0) -> DataMatrix:
    """Unit circle in the xy-plane and unit circle in the xz-plane touching only at (1, 0, 0)."""
    if n < 2:
        raise ConfigError("orthogonal loops need at least two points")
    n_a, n_b = (len(part) for part in np.array_split(np.arange(n), 2))
    rng = make_rng(seed)
    t = rng.uniform(0.0, TWO_PI, size=n_a)
    s = rng.uniform(0.0, TWO_PI, size=n_b)
    loop_a = np.column_stack([np.cos(t), np.sin(t), np.zeros(n_a)])
    loop_b = np.column_stack([2.0 - np.cos(s), np.zeros(n_b), np.sin(s)])
    values = _add_noise(np.vstack([loop_a, loop_b]), noise_var, seed)
    return DataMatrix(values, np.concatenate([np.zeros(n_a, dtype=int), np.ones(n_b, dtype=int)]))


def generate(spec: GeneratorSpec) -> DataMatrix:
    if spec.kind == "orthogonal_loops":
        if spec.n < 2:
            raise ConfigError("orthogonal loops need at least two points")
        return gen_orthogonal_loops(spec.n, spec.noise_var, spec.seed)
    if spec.kind == "plane":
        data = gen_plane(spec.n, spec.seed)
    elif spec.kind == "torus":
        data = gen_torus(spec.n, spec.R1, spec.R2, spec.seed)
    elif spec.kind == "sphere":
        data = gen_sphere(spec.n, spec.seed)
    else:
        data = gen_gem(spec.n, spec.seed, spec.R1, spec.R2)
    logger.debug("generated %s: %d x %d, noise variance %g", spec.kind, data.rows, data.cols, spec.noise_var)
    return data.with_values(_add_noise(data.values, spec.noise_var, spec.seed))

import numpy as np
import pytest
from scipy.optimize import minimize_scalar
from scipy.stats import wishart

from srca.data import DataMatrix
from srca.errors import ConfigError, DataError, NumericalError
from srca.geometry import (
    IndexSet,
    SphereParams,
    WeightMatrix,
    flat_offsets,
    in_plane_norms,
    loss,
    loss_gradient,
    optimal_radius,
    penalized_loss,
    penalty,
    point_to_sphere_sq_distance,
    project_to_sphere,
    singular_rows,
    sq_distances,
)
from srca.utils import make_rng


def _random_instance(seed, weighted=False):
    rng = make_rng(seed)
    d = int(rng.integers(2, 6))
    size = int(rng.integers(1, d + 1))
    members = tuple(sorted(rng.choice(d, size=size, replace=False)))
    X = DataMatrix(rng.standard_normal((int(rng.integers(5, 30)), d)) * 2)
    params = SphereParams(rng.standard_normal(d) * 0.3, float(rng.uniform(0.5, 2.0)))
    if weighted:
        M = wishart.rvs(df=d + 2, scale=np.eye(d) / (d + 2), random_state=seed).reshape(d, d)
        W = WeightMatrix((M + M.T) / 2)
    else:
        W = WeightMatrix.identity(d)
    return X, params, IndexSet(members, d), W


def test_distance_examples():
    I = IndexSet((0, 1), 3)
    W = WeightMatrix.identity(3)
    unit = SphereParams(np.zeros(3), 1.0)
    assert point_to_sphere_sq_distance([3.0, 4.0, 0.0], unit, I, W) == pytest.approx(16.0)
    assert point_to_sphere_sq_distance([1.0, 0.0, 2.0], unit, I, W) == pytest.approx(4.0)
    assert point_to_sphere_sq_distance([0.0, 0.0, 0.0], unit, I, W) == pytest.approx(1.0)


def test_loss_is_sum_of_distances(rng):
    X, params, I, W = _random_instance(3)
    assert loss(X, params, I, W) == pytest.approx(np.sum(sq_distances(X, params, I, W)))
    assert np.all(sq_distances(X, params, I, W) >= 0)


@pytest.mark.parametrize("weighted", [False, True])
def test_gradient_matches_central_differences(weighted):
    h = 1e-6
    for seed in range(50):
        X, params, I, W = _random_instance(seed, weighted)
        if np.any(in_plane_norms(X, params.center, I, W) < 1e-3):
            continue
        grad_c, grad_r = loss_gradient(X, params, I, W)
        numeric = np.empty_like(grad_c)
        for j in range(len(grad_c)):
            step = np.zeros_like(grad_c)
            step[j] = h
            up = loss(X, SphereParams(params.center + step, params.radius), I, W)
            down = loss(X, SphereParams(params.center - step, params.radius), I, W)
            numeric[j] = (up - down) / (2 * h)
        numeric_r = (
            loss(X, SphereParams(params.center, params.radius + h), I, W)
            - loss(X, SphereParams(params.center, params.radius - h), I, W)
        ) / (2 * h)
        scale = max(np.linalg.norm(numeric), 1.0)
        assert np.linalg.norm(grad_c - numeric) / scale < 1e-5
        assert abs(grad_r - numeric_r) / max(abs(numeric_r), 1.0) < 1e-5


def test_gradient_drops_singular_rows():
    X = DataMatrix([[0.0, 0.0, 1.0], [2.0, 0.0, 0.0]])
    params = SphereParams(np.zeros(3), 1.0)
    I = IndexSet((0, 1), 3)
    W = WeightMatrix.identity(3)
    assert singular_rows(X, params, I).tolist() == [True, False]
    grad_c, _ = loss_gradient(X, params, I, W)
    # first row contributes only -2 (x - c); second row the usual two terms
    expected = -2 * np.array([0.0, 0.0, 1.0]) + (-2 * np.array([2.0, 0.0, 0.0]) + 2 * np.array([1.0, 0.0, 0.0]))
    np.testing.assert_allclose(grad_c, expected)


def test_optimal_radius_matches_golden_section():
    for seed in range(100):
        X, params, I, W = _random_instance(seed)
        norms = np.linalg.norm((X.values - params.center)[:, list(I.members)], axis=1)

        def profile(r):
            return np.sum((norms - r) ** 2)

        found = minimize_scalar(profile, bracket=(0.0, 10.0), method="golden", tol=1e-12)
        assert optimal_radius(X, params.center, I, W) == pytest.approx(found.x, abs=1e-8)


def test_optimal_radius_examples():
    I = IndexSet((0, 1), 2)
    W = WeightMatrix.identity(2)
    X = DataMatrix([[1.0, 0.0], [0.0, 3.0]])
    assert optimal_radius(X, np.zeros(2), I, W) == pytest.approx(2.0)


def test_optimal_radius_degenerate_is_zero():
    X = DataMatrix([[1.0, 1.0], [1.0, 1.0]])
    assert optimal_radius(X, np.array([1.0, 1.0]), IndexSet((0, 1), 2), WeightMatrix.identity(2)) == 0.0


def test_projection_lands_on_sphere(rng):
    X = DataMatrix(rng.standard_normal((40, 4)) * 3)
    params = SphereParams(np.array([0.5, -1.0, 0.2, 0.1]), 1.7)
    I = IndexSet((1, 3), 4)
    P = project_to_sphere(X, params, I).values
    np.testing.assert_allclose(np.linalg.norm(P[:, [1, 3]] - params.center[[1, 3]], axis=1), 1.7, atol=1e-10)
    np.testing.assert_allclose(P[:, [0, 2]], np.tile(params.center[[0, 2]], (40, 1)))
    # the squared distance to the projection is exactly the loss term
    W = WeightMatrix.identity(4)
    np.testing.assert_allclose(np.sum((X.values - P) ** 2, axis=1), sq_distances(X, params, I, W), atol=1e-9)


def test_projection_is_idempotent(rng):
    X = DataMatrix(rng.standard_normal((15, 3)))
    params = SphereParams(np.zeros(3), 2.0)
    I = IndexSet((0, 2), 3)
    once = project_to_sphere(X, params, I)
    np.testing.assert_allclose(project_to_sphere(once, params, I).values, once.values, atol=1e-12)


def test_projection_fallback_direction():
    params = SphereParams(np.array([1.0, 2.0, 3.0]), 2.0)
    X = DataMatrix([[1.0, 7.0, 3.0]])
    P = project_to_sphere(X, params, IndexSet((0, 2), 3)).values
    np.testing.assert_allclose(P, [[3.0, 2.0, 3.0]])


def test_projection_only_l2():
    with pytest.raises(ConfigError):
        project_to_sphere(DataMatrix([[1.0, 0.0]]), SphereParams(np.zeros(2), 1.0), IndexSet((0, 1), 2), k=1)


def test_penalty_is_monotone_in_lambda(rng):
    X, params, I, W = _random_instance(9)
    values = [penalized_loss(X, params, I, W, lam) for lam in (0.0, 1e-5, 1e-3, 1e-1)]
    assert values[0] == pytest.approx(loss(X, params, I, W))
    assert all(a <= b for a, b in zip(values, values[1:]))
    assert penalty(X, params, I) >= 0


def test_index_set_validation():
    with pytest.raises(ConfigError):
        IndexSet((1, 1), 3)
    with pytest.raises(ConfigError):
        IndexSet((0, 3), 3)
    with pytest.raises(ConfigError):
        IndexSet((), 3)
    I = IndexSet.from_one_based([3, 1], 4)
    assert I.members == (0, 2)
    assert I.one_based == [1, 3]
    assert I.complement == (1, 3)


def test_weight_matrix_validation():
    with pytest.raises(ConfigError):
        WeightMatrix(np.array([[1.0, 0.5], [0.0, 1.0]]))
    with pytest.raises(ConfigError):
        WeightMatrix(np.array([[1.0, 0.0], [0.0, -1.0]]))
    W = WeightMatrix(np.array([[4.0, 0.0], [0.0, 9.0]]))
    np.testing.assert_allclose(W.sqrt_factor, np.diag([2.0, 3.0]))
    assert W.is_diagonal and not W.is_identity


def test_dimension_mismatch():
    with pytest.raises(DataError):
        loss(DataMatrix(np.ones((2, 3))), SphereParams(np.zeros(2), 1.0), IndexSet((0, 1), 2), WeightMatrix.identity(2))


def test_flat_distance_examples():
    # the line y = 1 inside the (x, y) plane of R^3
    flat = SphereParams.flat(np.array([0.0, 1.0, 0.0]), np.array([0.0, 1.0, 0.0]))
    I, W = IndexSet((0, 1), 3), WeightMatrix.identity(3)
    assert point_to_sphere_sq_distance([5.0, 3.0, 0.0], flat, I, W) == pytest.approx(4.0)
    assert point_to_sphere_sq_distance([5.0, 3.0, 2.0], flat, I, W) == pytest.approx(8.0)
    scaled = WeightMatrix(np.diag([1.0, 4.0, 1.0]))
    assert point_to_sphere_sq_distance([5.0, 3.0, 0.0], flat, I, scaled) == pytest.approx(16.0)


def test_large_spheres_approach_the_flat(rng):
    X = DataMatrix(rng.standard_normal((20, 3)))
    I, W = IndexSet((0, 1), 3), WeightMatrix.identity(3)
    flat = SphereParams.flat(np.zeros(3), np.array([0.0, 1.0, 0.0]))
    # tangent to the flat at the origin, curving away from +y
    sphere = SphereParams(np.array([0.0, -1e6, 0.0]), 1e6)
    np.testing.assert_allclose(sq_distances(X, sphere, I, W), sq_distances(X, flat, I, W), rtol=1e-4, atol=1e-6)


def test_projection_onto_flat(rng):
    X = DataMatrix(rng.standard_normal((25, 4)) * 2)
    normal = np.array([0.6, 0.0, 0.8, 0.0])
    flat = SphereParams.flat(np.array([0.1, 0.2, 0.3, 0.4]), normal)
    I = IndexSet((0, 2), 4)
    P = project_to_sphere(X, flat, I)
    np.testing.assert_allclose((P.values - flat.center) @ normal, 0.0, atol=1e-12)
    np.testing.assert_allclose(P.values[:, [1, 3]], np.tile([0.2, 0.4], (25, 1)))
    np.testing.assert_allclose(project_to_sphere(P, flat, I).values, P.values, atol=1e-12)
    W = WeightMatrix.identity(4)
    np.testing.assert_allclose(np.sum((X.values - P.values) ** 2, axis=1), sq_distances(X, flat, I, W), atol=1e-9)
    np.testing.assert_allclose(flat_offsets(X.values, flat, W), (X.values - flat.center) @ normal)


def test_flat_validation():
    with pytest.raises(NumericalError):
        SphereParams.flat(np.zeros(2), np.array([1.0, 1.0]))
    with pytest.raises(NumericalError):
        SphereParams(np.zeros(2), 3.0, normal=np.array([1.0, 0.0]))
    with pytest.raises(NumericalError):
        SphereParams(np.zeros(2), np.inf)
    flat = SphereParams.flat(np.zeros(3), np.array([0.0, 0.0, 1.0]))
    with pytest.raises(DataError):
        loss(DataMatrix(np.ones((2, 3))), flat, IndexSet((0, 1), 3), WeightMatrix.identity(3))
    with pytest.raises(ConfigError):
        loss_gradient(DataMatrix(np.ones((2, 3))), flat, IndexSet((1, 2), 3), WeightMatrix.identity(3))

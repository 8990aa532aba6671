"""Rotate, optimize (I, c, r), project: the sub-sphere fitting pipeline."""

import json
import logging
from dataclasses import dataclass
from itertools import combinations
from pathlib import Path
from typing import Optional

import numpy as np
from scipy.optimize import brentq

from . import settings
from .baselines import baseline_from_document, spca_algebraic_center
from .data import DataMatrix
from .errors import ConfigError, DataError, NumericalError
from .geometry import (
    EPS_SINGULAR,
    IndexSet,
    SphereParams,
    WeightMatrix,
    loss,
    loss_gradient,
    optimal_radius,
    penalized_loss,
    project_to_sphere,
)
from .rotation import OrthogonalMatrix, apply_rotation, get_rotation, invert_rotation
from .schemas import BaselineModelDocument, FitConfig, SphereModelDocument, parse_document
from .utils import digest, make_rng, subset_count

logger = logging.getLogger(__name__)

EXHAUSTIVE_LIMIT = 500
ARMIJO = 1e-4
MAX_HALVINGS = 60
MAX_STEP_GROWTH = 1024
FLAT_RADIUS_RATIO = 1e4
NEAR_FLAT_RATIO = 10
RELAXED_STEP_GROWTH = 16


@dataclass(frozen=True)
class RelaxationVector:
    values: np.ndarray
    budget: int

    def __post_init__(self):
        values = np.array(self.values, dtype=float)
        if np.any(values < -1e-12) or np.any(values > 1 + 1e-12):
            raise DataError("relaxation vector leaves the unit box")
        if values.sum() > self.budget + 1e-9:
            raise DataError(f"relaxation vector has l1 norm {values.sum()} > {self.budget}")
        object.__setattr__(self, "values", values)

    def top(self) -> tuple[int, ...]:
        # stable sort: equal entries go to the smaller index
        return tuple(sorted(np.argsort(-self.values, kind="stable")[: self.budget]))


@dataclass(frozen=True)
class FixedSubsetFit:
    params: SphereParams
    loss: float
    objective: float
    converged: bool
    history: tuple[float, ...]


@dataclass(frozen=True)
class SphereModel:
    mean: np.ndarray
    rotation: OrthogonalMatrix
    index_set: IndexSet
    params: SphereParams
    weight: WeightMatrix
    final_loss: float
    converged: bool
    config: FitConfig
    strategy: str = "exhaustive"
    relaxation: Optional[RelaxationVector] = None

    @property
    def dim(self) -> int:
        return self.mean.shape[0]

    @property
    def ambient_center(self) -> np.ndarray:
        return self.params.center @ self.rotation.values.T + self.mean

    def transform(self, X: DataMatrix) -> DataMatrix:
        return transform(self, X)

    def to_document(self) -> SphereModelDocument:
        config = self.config.model_dump(mode="json")
        return SphereModelDocument(
            mean=self.mean.tolist(),
            rotation=self.rotation.values.ravel().tolist(),
            strategy=self.strategy,
            dim=self.dim,
            index_set=self.index_set.one_based,
            center=self.params.center.tolist(),
            radius=None if self.params.is_flat else self.params.radius,
            normal=self.params.normal.tolist() if self.params.is_flat else None,
            weight="identity" if self.weight.is_identity else self.weight.values.tolist(),
            final_loss=self.final_loss,
            converged=self.converged,
            config=config,
            config_digest=digest(config),
        )

    @classmethod
    def from_document(cls, doc: SphereModelDocument) -> "SphereModel":
        d = doc.dim
        if len(doc.mean) != d or len(doc.rotation) != d * d or len(doc.center) != d:
            raise DataError("model document has inconsistent dimensions")
        config = FitConfig.model_validate(doc.config) if doc.config else FitConfig(retained_dim=len(doc.index_set) - 1)
        weight = WeightMatrix.identity(d) if doc.weight == "identity" else WeightMatrix(np.array(doc.weight))
        if (doc.radius is None) != (doc.normal is None):
            raise DataError("model document needs either a radius or a flat normal")
        if doc.normal is not None:
            params = SphereParams.flat(np.array(doc.center, dtype=float), np.array(doc.normal, dtype=float))
        else:
            params = SphereParams(np.array(doc.center, dtype=float), doc.radius)
        return cls(
            mean=np.array(doc.mean, dtype=float),
            rotation=OrthogonalMatrix(np.array(doc.rotation, dtype=float).reshape(d, d)),
            index_set=IndexSet.from_one_based(doc.index_set, d),
            params=params,
            weight=weight,
            final_loss=doc.final_loss,
            converged=doc.converged,
            config=config,
            strategy=doc.strategy,
        )


def save_model(model, path) -> None:
    """Write any fitted model (SRCA, SPCA or PCA) as its JSON document."""
    Path(path).write_text(model.to_document().model_dump_json(indent=2))


def load_model(path):
    path = Path(path)
    if not path.is_file():
        raise DataError(f"no such model file: {path}")
    text = path.read_text()
    try:
        kind = json.loads(text).get("kind", "srca")
    except (json.JSONDecodeError, AttributeError):
        raise DataError(f"{path} is not a JSON model document")
    if kind in ("pca", "spca"):
        return baseline_from_document(parse_document(BaselineModelDocument, text))
    return SphereModel.from_document(parse_document(SphereModelDocument, text))


def weight_from_config(cfg: FitConfig, d: int) -> WeightMatrix:
    if cfg.weight == "identity":
        return WeightMatrix.identity(d)
    weight = WeightMatrix(np.array(cfg.weight, dtype=float))
    if weight.dim != d:
        raise ConfigError(f"weight matrix is {weight.dim} x {weight.dim} but data has {d} columns")
    return weight


def select_strategy(d: int, d_prime: int) -> str:
    if d_prime + 1 > d:
        raise ConfigError(f"retained dimension {d_prime} needs at least {d_prime + 1} columns")
    if subset_count(d, d_prime + 1) <= EXHAUSTIVE_LIMIT:
        return "exhaustive"
    return "l1_relaxed"


# ---------------------------
# Fixed subset
# ---------------------------

def _clip_center(center: np.ndarray, cfg: FitConfig) -> np.ndarray:
    if cfg.center_bound is None:
        return center
    return np.clip(center, -cfg.center_bound, cfg.center_bound)


def _clip_radius(radius: float, cfg: FitConfig) -> float:
    if cfg.radius_bounds is None:
        return radius
    low, high = cfg.radius_bounds
    return float(min(max(radius, low), high))


def _center_gradient(X, params, I, W, penalty_lambda) -> np.ndarray:
    grad, _ = loss_gradient(X, params, I, W)
    if penalty_lambda:
        # subgradient 0 at the kinks
        signs = np.sign(X.values[:, I.mask] - params.center[I.mask])
        grad[I.mask] -= penalty_lambda * signs.sum(axis=0)
    return grad


def fit_fixed_subset(
    X_rot: DataMatrix,
    I: IndexSet,
    W: WeightMatrix,
    cfg: FitConfig,
    init_center: Optional[np.ndarray] = None,
    penalty_lambda: float = 0.0,
    flat_objective: Optional[float] = None,
) -> FixedSubsetFit:
    """Alternate the closed-form updates with backtracking gradient steps on c.

    With a diagonal W the complement coordinates of c sit at the column means and
    only the coordinates in I are searched; otherwise the whole center is.
    Descent stops once the radius passes FLAT_RADIUS_RATIO data spreads, or
    NEAR_FLAT_RATIO spreads while no better than flat_objective; that regime
    belongs to fit_flat_limit.
    """
    n, d = X_rot.rows, X_rot.cols
    if n < 1:
        raise DataError("cannot fit a sphere to an empty matrix")
    mask = I.mask
    free = mask if W.is_diagonal else np.ones(d, dtype=bool)
    spread = _spread(X_rot)
    radius_cutoff = FLAT_RADIUS_RATIO * spread

    def heading_flat(r, value):
        if r > radius_cutoff:
            return True
        return flat_objective is not None and value >= flat_objective and r > NEAR_FLAT_RATIO * spread

    center = np.zeros(d) if init_center is None else np.array(init_center, dtype=float)
    if W.is_diagonal:
        center[~mask] = X_rot.values[:, ~mask].mean(axis=0)
    center = _clip_center(center, cfg)

    def radius_at(c):
        return _clip_radius(optimal_radius(X_rot, c, I, W), cfg)

    def objective(c, r):
        if not (np.all(np.isfinite(c)) and np.isfinite(r)):
            return np.inf
        return penalized_loss(X_rot, SphereParams(c, r), I, W, penalty_lambda)

    radius = radius_at(center)
    current = objective(center, radius)
    history = [current]
    converged = False
    step = cfg.step_size
    for outer in range(cfg.max_outer_iters):
        start = current
        stalled = False
        for _ in range(cfg.max_gd_iters):
            grad = _center_gradient(X_rot, SphereParams(center, radius), I, W, penalty_lambda)
            grad[~free] = 0.0
            grad_norm = float(np.linalg.norm(grad))
            if grad_norm == 0.0:
                stalled = True
                break
            min_step = cfg.tol * n * (1 + float(np.linalg.norm(center))) / grad_norm
            t = step
            accepted = False
            for _ in range(MAX_HALVINGS):
                trial = _clip_center(center - t * grad / n, cfg)
                value = objective(trial, radius)
                if value <= current - ARMIJO * grad @ (center - trial):
                    accepted = True
                    break
                t /= 2
                if t < min_step:
                    break
            if not accepted:
                # no descent left at this radius
                stalled = True
                break
            center = trial
            radius = radius_at(center)
            value = objective(center, radius)
            decrease = current - value
            current = value
            step = min(2 * t, MAX_STEP_GROWTH * cfg.step_size)
            if heading_flat(radius, current):
                stalled = True
                logger.debug("subset %s: radius %.3g is heading for the flat limit", I.one_based, radius)
                break
            if decrease < cfg.tol * (1 + current):
                break
        history.append(current)
        logger.debug("subset %s outer %d: objective %.12g", I.one_based, outer, current)
        if stalled or abs(start - current) < cfg.tol * (1 + abs(current)):
            converged = True
            break
    if not converged:
        logger.warning("subset %s did not converge in %d outer iterations", I.one_based, cfg.max_outer_iters)

    params = SphereParams(center, radius)
    return FixedSubsetFit(
        params=params,
        loss=loss(X_rot, params, I, W),
        objective=current,
        converged=converged,
        history=tuple(history),
    )


def fit_flat_limit(
    X_rot: DataMatrix, I: IndexSet, W: WeightMatrix, penalty_lambda: float = 0.0
) -> Optional[FixedSubsetFit]:
    """Best infinite-radius member of the subset: a hyperplane of the I-plane.

    The normal is the least-variance direction of the W-scaled I-coordinates.
    Returns None for non-diagonal W.
    """
    if not W.is_diagonal or X_rot.rows < 1:
        return None
    mask = I.mask
    scale = np.sqrt(np.diag(W.values))[mask]
    center = X_rot.values.mean(axis=0)
    scaled = (X_rot.values[:, mask] - center[mask]) * scale
    _, vectors = np.linalg.eigh(scaled.T @ scaled)
    normal = np.zeros(X_rot.cols)
    normal[mask] = vectors[:, 0] * scale
    normal /= np.linalg.norm(normal)
    params = SphereParams.flat(center, normal)
    value = loss(X_rot, params, I, W)
    objective = penalized_loss(X_rot, params, I, W, penalty_lambda)
    return FixedSubsetFit(params=params, loss=value, objective=objective, converged=True, history=(objective,))


def _spread(X: DataMatrix) -> float:
    deviations = X.values - X.values.mean(axis=0)
    return max(float(np.sqrt(np.mean(np.sum(deviations**2, axis=1)))), EPS_SINGULAR)


def _start_centers(X_rot: DataMatrix, I: IndexSet, cfg: FitConfig) -> list[Optional[np.ndarray]]:
    """Origin, the algebraic sphere center of the I-coordinates, then seeded random starts."""
    starts: list[Optional[np.ndarray]] = [None]
    mean = X_rot.values.mean(axis=0)
    try:
        algebraic = mean.copy()
        algebraic[I.mask] = spca_algebraic_center(DataMatrix(X_rot.values[:, I.mask]))
        starts.append(algebraic)
    except NumericalError:
        logger.debug("subset %s: no algebraic start, points do not span the plane", I.one_based)
    # one scale for every axis so starts can leave zero-variance directions
    spread = _spread(X_rot)
    for restart in range(1, cfg.restarts):
        rng = make_rng(cfg.seed, stream=restart)
        starts.append(mean + rng.standard_normal(X_rot.cols) * spread)
    return starts


def fit_subset(X_rot, I, W, cfg, penalty_lambda=0.0) -> FixedSubsetFit:
    """Best of every start for one index set, with the flat limit as a candidate."""
    flat = fit_flat_limit(X_rot, I, W, penalty_lambda)
    flat_objective = None if flat is None else flat.objective
    best = None
    for init in _start_centers(X_rot, I, cfg):
        candidate = fit_fixed_subset(
            X_rot, I, W, cfg, init_center=init, penalty_lambda=penalty_lambda, flat_objective=flat_objective
        )
        if best is None or candidate.objective < best.objective:
            best = candidate
    if flat is not None and flat.objective < best.objective:
        logger.debug("subset %s: flat limit beats every finite sphere", I.one_based)
        best = flat
    return best


# ---------------------------
# Pipelines
# ---------------------------

def _standard_position(X: DataMatrix, cfg: FitConfig):
    d = X.cols
    if cfg.retained_dim + 1 > d:
        raise ConfigError(
            f"retained dimension {cfg.retained_dim} needs at least {cfg.retained_dim + 1} columns, data has {d}"
        )
    if X.rows < 1:
        raise DataError("cannot fit an empty matrix")
    mean = X.values.mean(axis=0)
    centered = X.with_values(X.values - mean)
    if X.rows >= 2 or cfg.rotation.kind == "identity":
        rotation = get_rotation(centered, cfg.rotation)
    else:
        rotation = OrthogonalMatrix.identity(d)
    return mean, rotation, apply_rotation(centered, rotation), weight_from_config(cfg, d)


def exhaustive_search(X_rot: DataMatrix, W: WeightMatrix, cfg: FitConfig) -> tuple[IndexSet, FixedSubsetFit]:
    """Fit every subset of size d'+1 of data already in standard position; keep the best."""
    d, size = X_rot.cols, cfg.retained_dim + 1
    if size > d:
        raise ConfigError(f"retained dimension {cfg.retained_dim} needs at least {size} columns, data has {d}")
    count = subset_count(d, size)
    cap = cfg.max_subsets or settings.SRCA_MAX_SUBSETS
    if count > cap:
        raise ConfigError(
            f"exhaustive search needs {count} subsets (cap {cap}); use strategy l1_relaxed"
        )
    index_sets = [IndexSet(members, d) for members in combinations(range(d), size)]
    logger.info("exhaustive search over %d subsets of size %d", count, size)

    with settings.worker_pool(cfg.jobs) as pool:
        fits = list(pool.map(lambda I: fit_subset(X_rot, I, W, cfg), index_sets))

    # lexicographic order + strict comparison: ties keep the smallest subset
    best_index = 0
    for i, candidate in enumerate(fits):
        if candidate.loss < fits[best_index].loss:
            best_index = i
    logger.info("selected subset %s, loss %.10g", index_sets[best_index].one_based, fits[best_index].loss)
    return index_sets[best_index], fits[best_index]


def fit_exhaustive(X: DataMatrix, cfg: FitConfig) -> SphereModel:
    mean, rotation, X_rot, W = _standard_position(X, cfg)
    index_set, best = exhaustive_search(X_rot, W, cfg)
    return SphereModel(
        mean=mean,
        rotation=rotation,
        index_set=index_set,
        params=best.params,
        weight=W,
        final_loss=best.loss,
        converged=best.converged,
        config=cfg,
        strategy="exhaustive",
    )


def project_capped_l1(v: np.ndarray, budget: float) -> np.ndarray:
    """Euclidean projection onto {0 <= v <= 1, sum(v) <= budget}.

    Clipping solves it when the budget is slack; otherwise the threshold theta
    with sum(clip(v - theta, 0, 1)) = budget is found by root bracketing.
    """
    clipped = np.clip(v, 0.0, 1.0)
    if clipped.sum() <= budget:
        return clipped

    def excess(theta):
        return np.clip(v - theta, 0.0, 1.0).sum() - budget

    theta = brentq(excess, 0.0, float(np.max(v)), xtol=1e-15, rtol=4 * np.finfo(float).eps)
    projected = np.clip(v - theta, 0.0, 1.0)
    overshoot = projected.sum() - budget
    if overshoot > 0:
        projected *= budget / projected.sum()
    return projected


def _relaxed_terms(Xv, center, radius, v, W, penalty_lambda):
    diff = Xv - center
    deviations = diff @ W.sqrt_factor
    energy = deviations**2
    norms = np.sqrt(energy @ v)
    value = float(np.sum(energy) + Xv.shape[0] * radius**2 - 2 * radius * np.sum(norms))
    if penalty_lambda:
        value += penalty_lambda * float(np.sum(np.abs(diff) @ v))
    return value, diff, deviations, energy, norms


def relaxed_objective(Xv, center, radius, v, W, penalty_lambda=0.0) -> float:
    return _relaxed_terms(Xv, center, radius, v, W, penalty_lambda)[0]


def _relaxed_gradient(Xv, center, radius, v, W, penalty_lambda):
    value, diff, deviations, energy, norms = _relaxed_terms(Xv, center, radius, v, W, penalty_lambda)
    regular = norms >= EPS_SINGULAR
    inv = np.zeros_like(norms)
    inv[regular] = 1.0 / norms[regular]

    grad_c = -2 * np.sum(diff @ W.values, axis=0)
    grad_c += 2 * radius * ((deviations * v) * inv[:, None]).sum(axis=0) @ W.sqrt_factor
    grad_r = 2 * Xv.shape[0] * radius - 2 * np.sum(norms)
    grad_v = -radius * (energy * inv[:, None]).sum(axis=0)
    if penalty_lambda:
        grad_c -= penalty_lambda * (np.sign(diff) * v).sum(axis=0)
        grad_v += penalty_lambda * np.abs(diff).sum(axis=0)
    return value, grad_c, grad_r, grad_v


def _fit_relaxed(X: DataMatrix, cfg: FitConfig, penalty_lambda: float) -> SphereModel:
    mean, rotation, X_rot, W = _standard_position(X, cfg)
    n, d = X_rot.rows, X_rot.cols
    budget = cfg.retained_dim + 1
    Xv = X_rot.values

    center = np.zeros(d)
    v = np.full(d, budget / d)
    radius = _clip_radius(float(np.mean(np.sqrt(((Xv @ W.sqrt_factor) ** 2) @ v))), cfg)
    # v lives in the unit box while c and r carry data units
    v_scale = max(float(np.mean(np.sum((Xv @ W.sqrt_factor) ** 2, axis=1))), EPS_SINGULAR)

    value = relaxed_objective(Xv, center, radius, v, W, penalty_lambda)
    step = cfg.step_size
    for iteration in range(cfg.max_outer_iters * cfg.max_gd_iters):
        value, g_c, g_r, g_v = _relaxed_gradient(Xv, center, radius, v, W, penalty_lambda)
        t = step
        accepted = False
        for _ in range(MAX_HALVINGS):
            c_new = _clip_center(center - t * g_c / n, cfg)
            r_new = max(_clip_radius(radius - t * g_r / n, cfg), 0.0)
            v_new = project_capped_l1(v - t * g_v / (n * v_scale), budget)
            predicted = g_c @ (c_new - center) + g_r * (r_new - radius) + g_v @ (v_new - v)
            trial = relaxed_objective(Xv, c_new, r_new, v_new, W, penalty_lambda)
            if trial <= value + ARMIJO * predicted:
                accepted = True
                break
            t /= 2
        if not accepted:
            break
        decrease = value - trial
        center, radius, v, value = c_new, r_new, v_new, trial
        step = min(2 * t, RELAXED_STEP_GROWTH * cfg.step_size)
        if decrease < cfg.tol * (1 + value):
            break
    logger.debug("relaxed search stopped after %d iterations, objective %.10g", iteration + 1, value)

    relaxation = RelaxationVector(v, budget)
    I = IndexSet(relaxation.top(), d)
    logger.info("relaxed selector %s -> subset %s", np.round(v, 4).tolist(), I.one_based)
    refit = fit_subset(X_rot, I, W, cfg, penalty_lambda=penalty_lambda)
    return SphereModel(
        mean=mean,
        rotation=rotation,
        index_set=I,
        params=refit.params,
        weight=W,
        final_loss=refit.loss,
        converged=refit.converged,
        config=cfg,
        strategy="l1_relaxed",
        relaxation=relaxation,
    )


def fit_l1(X: DataMatrix, cfg: FitConfig) -> SphereModel:
    return _fit_relaxed(X, cfg, 0.0)


def fit_sparse(X: DataMatrix, cfg: FitConfig) -> SphereModel:
    """The l1-relaxed pipeline with lambda * sum_i ||I (x_i - c)||_1 added.

    lambda = 0 gives exactly fit_l1.
    """
    if cfg.penalty_lambda < 0:
        raise ConfigError("penalty lambda must be nonnegative")
    return _fit_relaxed(X, cfg, cfg.penalty_lambda)


def fit(X: DataMatrix, cfg: FitConfig) -> SphereModel:
    if cfg.penalty_lambda > 0:
        logger.info("sparse penalty lambda=%g: using the l1-relaxed pipeline", cfg.penalty_lambda)
        return fit_sparse(X, cfg)
    strategy = cfg.strategy
    if strategy == "auto":
        strategy = select_strategy(X.cols, cfg.retained_dim)
        logger.info(
            "strategy auto: %d subsets of size %d -> %s",
            subset_count(X.cols, cfg.retained_dim + 1),
            cfg.retained_dim + 1,
            strategy,
        )
    if strategy == "exhaustive":
        return fit_exhaustive(X, cfg)
    return fit_l1(X, cfg)


def transform(model: SphereModel, X: DataMatrix) -> DataMatrix:
    if X.cols != model.dim:
        raise DataError(f"model expects {model.dim} columns, data has {X.cols}")
    centered = X.with_values(X.values - model.mean)
    rotated = apply_rotation(centered, model.rotation)
    projected = project_to_sphere(rotated, model.params, model.index_set)
    back = invert_rotation(projected, model.rotation)
    return back.with_values(back.values + model.mean)


def model_summary(model: SphereModel) -> str:
    return json.dumps(
        {
            "strategy": model.strategy,
            "index_set": model.index_set.one_based,
            "radius": None if model.params.is_flat else model.params.radius,
            "flat": model.params.is_flat,
            "final_loss": model.final_loss,
            "converged": model.converged,
        }
    )

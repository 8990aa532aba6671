"""Quality metrics for a reduction X -> X_hat: reconstruction error, cluster indices, coranking scores."""

import logging
from dataclasses import dataclass
from pathlib import Path
from typing import Optional

import numpy as np
import pandas as pd
from scipy import spatial
from sklearn.metrics import calinski_harabasz_score, davies_bouldin_score, silhouette_score

from .data import DataMatrix
from .errors import DataError, NumericalError
from .schemas import REPORT_COLUMNS, EvaluationReport

logger = logging.getLogger(__name__)


def _same_shape(X: DataMatrix, X_hat: DataMatrix) -> None:
    if X.values.shape != X_hat.values.shape:
        raise DataError(f"shape mismatch: {X.values.shape} vs {X_hat.values.shape}")


def mse(X: DataMatrix, X_hat: DataMatrix) -> float:
    _same_shape(X, X_hat)
    if X.rows == 0:
        raise DataError("mse of an empty matrix")
    return float(np.sum((X.values - X_hat.values) ** 2) / X.rows)


def out_of_sample_mse(model, X_test: DataMatrix) -> float:
    """Error of a fitted model on rows it never saw; the model only needs .transform()."""
    return mse(X_test, model.transform(X_test))


# ---------------------------
# Cluster validity
# ---------------------------

def _cluster_labels(X_hat: DataMatrix, labels) -> np.ndarray:
    labels = np.asarray(labels).ravel()
    if labels.shape[0] != X_hat.rows:
        raise DataError(f"{labels.shape[0]} labels for {X_hat.rows} rows")
    k = np.unique(labels).size
    if k < 2:
        raise DataError("cluster indices need at least two clusters")
    if k >= X_hat.rows:
        raise DataError("cluster indices need fewer clusters than points")
    return labels


def silhouette(X_hat: DataMatrix, labels) -> float:
    # singleton clusters score 0
    return float(silhouette_score(X_hat.values, _cluster_labels(X_hat, labels)))


def calinski_harabasz(X_hat: DataMatrix, labels) -> float:
    return float(calinski_harabasz_score(X_hat.values, _cluster_labels(X_hat, labels)))


def davies_bouldin(X_hat: DataMatrix, labels) -> float:
    return float(davies_bouldin_score(X_hat.values, _cluster_labels(X_hat, labels)))


# ---------------------------
# Coranking
# ---------------------------

@dataclass(frozen=True)
class CorankingMatrix:
    counts: np.ndarray

    def __post_init__(self):
        counts = np.asarray(self.counts, dtype=np.int64)
        counts.setflags(write=False)
        object.__setattr__(self, "counts", counts)

    @property
    def size(self) -> int:
        return self.counts.shape[0]

    @property
    def n(self) -> int:
        return self.size + 1


def distance_matrix(X: DataMatrix) -> np.ndarray:
    return spatial.distance.squareform(spatial.distance.pdist(X.values, "euclidean"))


def neighbor_ranks(D: np.ndarray) -> np.ndarray:
    """ranks[i, j] = rank of j among i's neighbours, 1..n-1; ties go to the smaller index.

    The diagonal holds 0.
    """
    D = np.array(D, dtype=float)
    np.fill_diagonal(D, -1.0)
    order = np.argsort(D, axis=1, kind="stable")
    n = D.shape[0]
    ranks = np.empty((n, n), dtype=np.int64)
    rows = np.arange(n)[:, None]
    ranks[rows, order] = np.arange(n)[None, :]
    return ranks


def coranking_matrix(X: DataMatrix, X_hat: DataMatrix) -> CorankingMatrix:
    if X.rows != X_hat.rows:
        raise DataError(f"row mismatch: {X.rows} vs {X_hat.rows}")
    n = X.rows
    if n < 3:
        raise DataError("coranking needs at least three points")
    original = neighbor_ranks(distance_matrix(X))
    reduced = neighbor_ranks(distance_matrix(X_hat))
    off_diagonal = ~np.eye(n, dtype=bool)
    flat = (original[off_diagonal] - 1) * (n - 1) + (reduced[off_diagonal] - 1)
    counts = np.bincount(flat, minlength=(n - 1) ** 2).reshape(n - 1, n - 1)
    return CorankingMatrix(counts)


def rnx_curve(Q: CorankingMatrix) -> np.ndarray:
    """R_NX(K) for K = 1..n-2."""
    n = Q.n
    if n < 3:
        raise DataError("R_NX needs at least three points")
    cumulative = Q.counts.cumsum(axis=0).cumsum(axis=1)
    K = np.arange(1, n - 1)
    q_nx = np.diag(cumulative)[: n - 2] / (K * n)
    return ((n - 1) * q_nx - K) / (n - 1 - K)


def cophenetic_correlation(X: DataMatrix, X_hat: DataMatrix) -> float:
    original = spatial.distance.pdist(X.values, "euclidean")
    reduced = spatial.distance.pdist(X_hat.values, "euclidean")
    if np.ptp(original) == 0 or np.ptp(reduced) == 0:
        raise NumericalError("pairwise distances have zero variance; correlation undefined")
    return float(np.clip(np.corrcoef(original, reduced)[0, 1], -1.0, 1.0))


def coranking_scores(Q: CorankingMatrix, X: DataMatrix, X_hat: DataMatrix) -> tuple[float, float, float]:
    rnx = rnx_curve(Q)
    weights = 1.0 / np.arange(1, rnx.shape[0] + 1)
    auc = float(np.mean(rnx))
    wauc = float(np.sum(rnx * weights) / np.sum(weights))
    return cophenetic_correlation(X, X_hat), auc, wauc


# ---------------------------
# Reports
# ---------------------------

def evaluate(
    X: DataMatrix,
    X_hat: DataMatrix,
    labels: Optional[np.ndarray] = None,
    oos_mse: Optional[float] = None,
) -> EvaluationReport:
    _same_shape(X, X_hat)
    if labels is None:
        labels = X.labels
    Q = coranking_matrix(X, X_hat)
    cc, auc, wauc = coranking_scores(Q, X, X_hat)
    cluster = {"sc": None, "chi": None, "dbi": None}
    if labels is None:
        logger.info("no labels given; skipping SC, CHI and DBI")
    else:
        cluster = {
            "sc": silhouette(X_hat, labels),
            "chi": calinski_harabasz(X_hat, labels),
            "dbi": davies_bouldin(X_hat, labels),
        }
    return EvaluationReport(mse=mse(X, X_hat), oos_mse=oos_mse, cc=cc, auc=auc, wauc=wauc, **cluster)


def write_report_json(report: EvaluationReport, path) -> None:
    Path(path).write_text(report.model_dump_json(indent=2))


def write_report_csv(report: EvaluationReport, path) -> None:
    pd.DataFrame([report.csv_row()], columns=list(REPORT_COLUMNS)).to_csv(path, index=False, float_format="%.17g")

import logging

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt  # noqa: E402

from .data import DataMatrix  # noqa: E402
from .errors import DataError  # noqa: E402

logger = logging.getLogger(__name__)


def scatter_svg(X: DataMatrix, X_hat: DataMatrix, axes: tuple[int, int], path) -> None:
    """Original vs reduced points on two coordinates; layers carry ids "original" and "reduced"."""
    if X.values.shape != X_hat.values.shape:
        raise DataError(f"shape mismatch: {X.values.shape} vs {X_hat.values.shape}")
    a, b = axes
    if not (0 <= a < X.cols and 0 <= b < X.cols):
        raise DataError(f"plot axes {a + 1}, {b + 1} outside 1..{X.cols}")

    with plt.rc_context({"svg.hashsalt": "srca", "svg.fonttype": "none"}):
        fig, ax = plt.subplots(figsize=(5, 5))
        ax.scatter(X.values[:, a], X.values[:, b], s=8, c="0.6", label="original", gid="original")
        ax.scatter(X_hat.values[:, a], X_hat.values[:, b], s=8, c="tab:red", label="reduced", gid="reduced")
        ax.set_xlabel(f"x{a + 1}")
        ax.set_ylabel(f"x{b + 1}")
        ax.set_aspect("equal", adjustable="datalim")
        ax.legend(loc="upper right")
        fig.savefig(path, format="svg", metadata={"Date": None})
        plt.close(fig)
    logger.info("wrote scatter of %d points to %s", X.rows, path)


def plot_axes(index_set_one_based, dim: int) -> tuple[int, int]:
    """First two selected coordinates, zero-based; falls back to (0, 1)."""
    chosen = [i - 1 for i in index_set_one_based][:2]
    if len(chosen) == 2:
        return chosen[0], chosen[1]
    return (0, 1) if dim >= 2 else (0, 0)

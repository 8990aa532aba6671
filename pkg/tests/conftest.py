import os

# keep the CLI from installing its own stderr handlers under the test runner
os.environ["SRCA_LOG_CONFIG"] = ""
os.environ.pop("SRCA_JOBS", None)

import numpy as np  # noqa: E402
import pytest  # noqa: E402

from srca.data import DataMatrix, load_csv  # noqa: E402
from srca.utils import make_rng  # noqa: E402


def axis_sphere(d, d_prime, seed, n=None, members=None):
    """Noiseless samples on an axis-aligned sub-sphere; returns (X, members, center, radius)."""
    rng = make_rng(seed)
    size = d_prime + 1
    if members is None:
        members = tuple(sorted(rng.choice(d, size=size, replace=False)))
    n = n or 10 * (d_prime + 2)
    center = rng.uniform(-1.0, 1.0, size=d)
    radius = float(rng.uniform(1.5, 3.0))
    directions = rng.standard_normal((n, size))
    directions /= np.linalg.norm(directions, axis=1, keepdims=True)
    values = np.tile(center, (n, 1))
    values[:, list(members)] += radius * directions
    return DataMatrix(values), tuple(int(m) for m in members), center, radius


@pytest.fixture
def rng():
    return make_rng(12345)


@pytest.fixture
def circle_in_r4():
    # unit-ish circle living in coordinates 1 and 3 (zero-based 0 and 2)
    X, _, center, radius = axis_sphere(4, 1, seed=3, n=60, members=(0, 2))
    return X, center, radius


def _optional_csv(env_var, **options):
    path = os.environ.get(env_var)
    if not path or not os.path.isfile(path):
        pytest.skip(f"{env_var} not set")
    return load_csv(path, **options)


@pytest.fixture
def banknote():
    # UCI file as distributed: four features, class last, no header
    return _optional_csv("SRCA_BANKNOTE_CSV", label_column=4)


@pytest.fixture
def user_knowledge():
    # training sheet exported to CSV: header row, five features, class last
    return _optional_csv("SRCA_USERKNOWLEDGE_CSV", has_header=True, label_column=5)

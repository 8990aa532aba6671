import logging
import logging.config
import os
from concurrent.futures import Executor, ThreadPoolExecutor
from contextlib import contextmanager
from pathlib import Path

from dotenv import load_dotenv

load_dotenv()

REPO_ROOT = Path(__file__).resolve().parent.parent

SRCA_JOBS = os.getenv("SRCA_JOBS")
SRCA_LOG_LEVEL = os.getenv("SRCA_LOG_LEVEL", "INFO")
SRCA_LOG_CONFIG = os.getenv("SRCA_LOG_CONFIG", str(REPO_ROOT / "logging.ini"))
SRCA_MAX_SUBSETS = int(os.getenv("SRCA_MAX_SUBSETS", 100_000))


def configure_logging() -> None:
    config_path = Path(SRCA_LOG_CONFIG)
    if config_path.is_file():
        logging.config.fileConfig(config_path, disable_existing_loggers=False)
    else:
        logging.basicConfig(format="%(levelname)-5.5s [%(name)s] %(message)s")
    logging.getLogger().setLevel(SRCA_LOG_LEVEL.upper())


def resolve_jobs(flag: int | None = None) -> int:
    # env var wins over the --jobs flag
    value = SRCA_JOBS if SRCA_JOBS is not None else flag
    try:
        jobs = int(value) if value is not None else 1
    except ValueError:
        jobs = 1
    return max(jobs, 1)


class _InlineExecutor(Executor):
    """Runs submitted work in the calling thread."""

    def map(self, fn, *iterables, timeout=None, chunksize=1):
        return iter([fn(*args) for args in zip(*iterables)])


@contextmanager
def worker_pool(jobs: int = 1):
    if jobs <= 1:
        pool = _InlineExecutor()
    else:
        pool = ThreadPoolExecutor(max_workers=jobs)
    try:
        yield pool
    finally:
        pool.shutdown(wait=True)

"""Scene-level worker pool."""

import logging
from concurrent.futures import ThreadPoolExecutor
from typing import Callable, List, Sequence, TypeVar

from ..models import PointSegError, InternalError

T = TypeVar("T")
R = TypeVar("R")


class SceneWorkerPool:
    """Runs an independent per-scene job over many scenes.

    Results come back in input order whatever the thread count, so every reduction
    downstream sees the same sequence.
    """

    def __init__(self, max_threads: int = 1, logger: logging.Logger = None):
        self.max_threads = max(1, int(max_threads))
        self.logger = logger or logging.getLogger(__name__)

    def map(self, job: Callable[[T], R], items: Sequence[T], label: str = "job") -> List[R]:
        """Apply ``job`` to every item; the first failure is re-raised."""
        if self.max_threads == 1 or len(items) <= 1:
            return [self._run(job, item, label) for item in items]

        with ThreadPoolExecutor(max_workers=self.max_threads, thread_name_prefix="pointseg") as executor:
            futures = [executor.submit(self._run, job, item, label) for item in items]
            results = [future.result() for future in futures]
        self.logger.debug(f"Finished {len(results)} {label} tasks on {self.max_threads} threads")
        return results

    def _run(self, job: Callable[[T], R], item: T, label: str) -> R:
        try:
            return job(item)
        except PointSegError:
            raise
        except Exception as e:
            self.logger.error(f"Worker error in {label}: {str(e)}")
            raise InternalError(f"{label} failed: {e}")

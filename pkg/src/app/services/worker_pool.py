import multiprocessing
from typing import Any, Callable, List, Sequence, Tuple

from loguru import logger


class WorkerPool:
    """
    Runs independent jobs in worker processes and returns results in job
    order, so output never depends on scheduling. One worker runs inline.
    """

    def __init__(self, workers: int = 1):
        self.workers = max(1, int(workers))

    def map(self, fn: Callable[..., Any], jobs: Sequence[Tuple[Any, ...]]) -> List[Any]:
        if self.workers == 1 or len(jobs) <= 1:
            return [fn(*job) for job in jobs]

        processes = min(self.workers, len(jobs))
        logger.debug(f"WorkerPool: Dispatching {len(jobs)} jobs to {processes} processes")
        with multiprocessing.Pool(processes=processes) as pool:
            return pool.starmap(fn, jobs)

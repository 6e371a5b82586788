import queue
import threading
from typing import Callable, Generic, Optional, Sequence, TypeVar

from .thread_logger import (
    clear_thread_logger_prefix,
    get_thread_logger,
    set_thread_logger_prefix,
)

Item = TypeVar("Item")
Result = TypeVar("Result")


class Outcome(Generic[Result]):
    """Result of one work item, or the exception it raised"""

    def __init__(
        self,
        result: Optional[Result] = None,
        error: Optional[BaseException] = None,
    ):
        self.result = result
        self.error = error

    @property
    def ok(self) -> bool:
        """Whether the item completed without raising"""
        return self.error is None


def run_ordered(
    func: Callable[[Item], Result],
    items: Sequence[Item],
    num_workers: int = 1,
    prefix: Optional[Callable[[Item], str]] = None,
) -> list[Outcome[Result]]:
    """Apply func to every item on a pool of worker threads

    Workers pull (index, item) pairs from a shared queue. Outcomes come back
    in input order regardless of scheduling, and an exception raised by one
    item is recorded in its Outcome instead of stopping the others.
    """
    workqueue: queue.Queue = queue.Queue()
    for index, item in enumerate(items):
        workqueue.put((index, item))
    outcomes: list[Optional[Outcome[Result]]] = [None] * len(items)

    def worker() -> None:
        while True:
            try:
                index, item = workqueue.get(block=False)
            except queue.Empty:
                break
            if prefix is not None:
                set_thread_logger_prefix(prefix(item))
            try:
                outcomes[index] = Outcome(result=func(item))
            except Exception as exc:  # pylint: disable=broad-except
                get_thread_logger(with_prefix=True).error(
                    "work item failed: %s", exc
                )
                outcomes[index] = Outcome(error=exc)
            finally:
                clear_thread_logger_prefix()

    if num_workers <= 1:
        worker()
    else:
        threads = [
            threading.Thread(target=worker, name=f"worker-{i:02d}")
            for i in range(min(num_workers, len(items)))
        ]
        for thread in threads:
            thread.start()
        for thread in threads:
            thread.join()

    return [outcome for outcome in outcomes if outcome is not None]

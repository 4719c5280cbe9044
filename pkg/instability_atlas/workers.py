from __future__ import annotations

import asyncio
import collections.abc
import concurrent.futures
import logging
import typing as ty

__all__ = ["gather_map"]

_logger = logging.getLogger(__name__)

T = ty.TypeVar("T")
R = ty.TypeVar("R")


async def gather_map(
    func: collections.abc.Callable[[T], R], items: collections.abc.Iterable[T], workers: int
) -> list[R]:
    """Apply ``func`` to every item in a process pool, results in input order

    ``func`` and the items must be picklable. With a single worker everything runs in this process.
    """
    items = list(items)
    if workers <= 1 or len(items) <= 1:
        return [func(item) for item in items]

    loop = asyncio.get_running_loop()
    _logger.debug("Running %d tasks on %d workers", len(items), workers)
    with concurrent.futures.ProcessPoolExecutor(max_workers=min(workers, len(items))) as executor:
        tasks = [loop.run_in_executor(executor, func, item) for item in items]
        return list(await asyncio.gather(*tasks))

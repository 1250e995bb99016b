"""
Fan-out helpers for ladders and sweeps.

Every ladder entry is an independent pure computation, so entries run in
worker threads under a semaphore; numpy and the banded solver release the GIL
for most of their work.
"""

import asyncio
import logging
from typing import Callable, Iterable, List, Sequence, TypeVar

T = TypeVar("T")
R = TypeVar("R")

logger = logging.getLogger(__name__)


async def gather_ladder(func: Callable[[T], R], items: Sequence[T], threads: int) -> List[R]:
    semaphore = asyncio.Semaphore(max(1, threads))

    async def run_one(item: T) -> R:
        async with semaphore:
            return await asyncio.to_thread(func, item)

    return list(await asyncio.gather(*(run_one(item) for item in items)))


def map_ladder(func: Callable[[T], R], items: Iterable[T], threads: int = 1) -> List[R]:
    """Apply ``func`` to every item, in order, using up to ``threads`` workers."""
    items = list(items)
    if threads <= 1 or len(items) <= 1:
        return [func(item) for item in items]
    try:
        asyncio.get_running_loop()
    except RuntimeError:
        logger.debug("running %d ladder entries on %d threads", len(items), threads)
        return asyncio.run(gather_ladder(func, items, threads))
    # Already inside an event loop: fall back to sequential evaluation.
    return [func(item) for item in items]

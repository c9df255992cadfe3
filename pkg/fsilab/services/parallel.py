import asyncio
import logging
from typing import Any, Callable, List, Optional, Sequence

from ..config import settings
from ..exceptions import NumericalError

logger = logging.getLogger(__name__)


async def gather_ordered(
    fn: Callable[[Any], Any],
    items: Sequence[Any],
    max_workers: Optional[int] = None,
) -> List[Any]:
    """Run fn over items in worker threads, bounded, results in input order.
    
    A failed item fails the whole batch with NumericalError naming the item;
    partial results are never returned.
    """
    semaphore = asyncio.Semaphore(max_workers or settings.max_workers)
    
    async def run_with_semaphore(item):
        async with semaphore:
            return await asyncio.to_thread(fn, item)
    
    tasks = [run_with_semaphore(item) for item in items]
    results = await asyncio.gather(*tasks, return_exceptions=True)
    
    failures = [(i, r) for i, r in enumerate(results) if isinstance(r, Exception)]
    if failures:
        index, error = failures[0]
        logger.error(f"{len(failures)} of {len(items)} parallel items failed, first at index {index}: {error}")
        payload = {"failed": len(failures), "total": len(items), "first_index": index}
        if isinstance(error, NumericalError):
            payload.update(error.payload)
        raise NumericalError(f"Parallel batch failed at item {index}: {error}", payload) from error
    return list(results)


def run_ordered(fn: Callable[[Any], Any], items: Sequence[Any], max_workers: Optional[int] = None) -> List[Any]:
    """Blocking wrapper around gather_ordered."""
    return asyncio.run(gather_ordered(fn, items, max_workers))

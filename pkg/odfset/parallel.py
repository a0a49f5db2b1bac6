import logging
from typing import Callable, Iterable, TypeVar

import dask

from odfset import config

logger = logging.getLogger(__name__)

T = TypeVar("T")
R = TypeVar("R")


def map_ordered(
    func: Callable[[T], R],
    items: Iterable[T],
    threads: int | None = None,
) -> list[R]:
    """func を items に適用し、入力順に結果を返す。

    threads > 1 のときは dask の threads スケジューラで並列評価する。
    各要素の計算は要素だけで決まるため、スレッド数によらず結果は同一。
    """
    items = list(items)
    n = config.THREADS if threads is None else threads
    if n <= 1 or len(items) <= 1:
        return [func(item) for item in items]

    logger.debug("[parallel] %d tasks on %d threads", len(items), n)
    tasks = [dask.delayed(func)(item) for item in items]
    return list(dask.compute(*tasks, scheduler="threads", num_workers=n))

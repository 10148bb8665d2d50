"""
Elaborazione parallela di lotti di immagini.

I risultati mantengono l'ordine di input indipendentemente dallo
scheduling dei processi.
"""
import time
from concurrent.futures import ProcessPoolExecutor
from typing import Any, Callable, Iterable, List, Optional, Sequence, TypeVar

from .log import get_memory_usage, logger
from config.config import NUM_WORKERS

T = TypeVar("T")
R = TypeVar("R")

PROGRESS_INTERVAL = 5.0  # secondi tra due messaggi di avanzamento


def parallel_map(func: Callable[[T], R], items: Iterable[T], workers: Optional[int] = None,
                 description: str = "elementi", initializer: Optional[Callable[..., Any]] = None,
                 initargs: Sequence[Any] = ()) -> List[R]:
    """Applica `func` a ogni elemento, su `workers` processi se > 1.

    `func` deve essere serializzabile con pickle (funzione di modulo o
    functools.partial di una funzione di modulo). `initializer(*initargs)`
    viene eseguito una volta per processo (o una volta sola in sequenziale).
    """
    items = list(items)
    total = len(items)
    workers = NUM_WORKERS if workers is None else workers
    start_time = time.time()
    last_progress_time = start_time
    results: List[R] = []

    if workers <= 1 or total < 2:
        if initializer is not None:
            initializer(*initargs)
        iterator = map(func, items)
        executor = None
    else:
        chunk_size = max(1, total // (workers * 8))
        executor = ProcessPoolExecutor(max_workers=workers, initializer=initializer,
                                       initargs=tuple(initargs))
        iterator = executor.map(func, items, chunksize=chunk_size)
        logger.info(f"🚀 {total:,} {description} su {workers} processi (chunk {chunk_size})")

    try:
        for result in iterator:
            results.append(result)
            current_time = time.time()
            if current_time - last_progress_time >= PROGRESS_INTERVAL:
                elapsed = current_time - start_time
                speed = len(results) / elapsed if elapsed > 0 else 0
                logger.info(f"⏳ Progresso: {len(results):,}/{total:,} {description} | "
                            f"🚀 {speed:.1f}/s | 💾 Memoria: {get_memory_usage()}")
                last_progress_time = current_time
    finally:
        if executor is not None:
            executor.shutdown()

    elapsed = time.time() - start_time
    logger.debug(f"✅ {total:,} {description} elaborati in {elapsed:.1f}s")
    return results

"""
Run setup and per-object execution for c2lt3d commands.

This module wires logging and the results directory for a command, and maps
per-object work over a process pool without letting the worker count change
any output.
"""

import logging
import os
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass
from typing import Any, Callable, List, Optional, Sequence, Tuple

import psutil
from tqdm import tqdm

from c2lt3d.utils.errors import C2LTError
from c2lt3d.utils.logger import config_from_args, get_logger
from c2lt3d.utils.results_manager import ResultsManager

logger = get_logger(__name__)


def setup_experiment(args: Any, command: str) -> Tuple[logging.Logger, ResultsManager]:
    """
    Configure logging from the parsed arguments and open the output directory.

    Args:
        args: Parsed command-line arguments (logging flags and ``out``).
        command: Subcommand name, for the log.

    Returns:
        Tuple containing the package logger and the results manager.
    """
    config_from_args(args)
    log = get_logger()
    log.debug("Logging configured successfully")
    results_mgr = ResultsManager(base_dir=args.out)
    log.info(f"Running '{command}' into {os.path.abspath(results_mgr.run_dir)}")
    return log, results_mgr


@dataclass
class Outcome:
    """Result of one object's work, or the message of the error that stopped it."""

    key: str
    result: Any = None
    error: Optional[str] = None

    @property
    def ok(self) -> bool:
        return self.error is None


def _guarded(func: Callable, key: str, item: Any) -> Outcome:
    try:
        return Outcome(key, func(item))
    except C2LTError as e:
        return Outcome(key, error=f"{type(e).__name__}: {e}")


def _run_guarded(job) -> Outcome:
    func, key, item = job
    return _guarded(func, key, item)


def map_objects(
    func: Callable,
    items: Sequence,
    workers: int = 1,
    keys: Optional[Sequence[str]] = None,
    desc: str = "objects",
    progress: bool = True,
) -> List[Outcome]:
    """
    Apply ``func`` to every item, serially or on a process pool.

    Package errors raised for one item are captured in its ``Outcome`` so the
    run can log and skip it; anything else propagates. Results come back in
    input order for every worker count.

    Args:
        func: Picklable callable of one item (a module-level function or a
            ``functools.partial`` of one).
        items: Work items.
        workers: Process count; 1 runs in the calling process.
        keys: Item names used in the log; defaults to the item positions.
        desc: Progress-bar label.
        progress: Show a tqdm progress bar.

    Returns:
        One ``Outcome`` per item.
    """
    keys = [str(k) for k in keys] if keys is not None else [str(i) for i in range(len(items))]
    jobs = [(func, key, item) for key, item in zip(keys, items)]
    disable = not progress or not logger.isEnabledFor(logging.INFO)
    if workers <= 1 or len(jobs) <= 1:
        return [_run_guarded(job) for job in tqdm(jobs, desc=desc, disable=disable)]
    with ProcessPoolExecutor(max_workers=int(workers)) as pool:
        return list(tqdm(pool.map(_run_guarded, jobs), total=len(jobs), desc=desc, disable=disable))


def successful(outcomes: Sequence[Outcome], what: str = "object") -> List[Any]:
    """Results of the successful outcomes; failures are logged at WARNING."""
    for o in outcomes:
        if not o.ok:
            logger.warning(f"Skipping {what} {o.key}: {o.error}")
    return [o.result for o in outcomes if o.ok]


def memory_usage_mb() -> float:
    """Resident memory of this process in MiB."""
    return psutil.Process(os.getpid()).memory_info().rss / (1024 * 1024)


def log_run_summary(command: str, processed: int, skipped: int, started: float) -> None:
    logger.info(
        f"'{command}' finished: {processed} processed, {skipped} skipped in "
        f"{time.time() - started:.2f} s (RSS {memory_usage_mb():.1f} MiB)"
    )

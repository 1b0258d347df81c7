"""Stage timing and structured stage records for the pipeline"""

import time
from collections.abc import Callable, Iterator
from contextlib import contextmanager
from functools import wraps
from typing import Any, TypeVar

from grad_subspace_ood.utils.errors import GsoError, StageError
from grad_subspace_ood.utils.logger import logger

# Type variable for generic function signatures
T = TypeVar("T")

# Process-local stage durations, newest last; never written into reports
_stage_times: list[tuple[str, float]] = []


@contextmanager
def log_stage(stage: str, **fields: Any) -> Iterator[None]:
    """
    Time a pipeline stage and emit exactly one structured record for it.

    Failures are re-raised as ``StageError`` carrying the stage name, unless
    they already are one (the innermost stage name wins).

    Args:
        stage: Stage name, e.g. ``fit_subspace``
        **fields: Extra key/values attached to the record
    """
    start_time = time.perf_counter()
    try:
        yield
    except StageError:
        duration = time.perf_counter() - start_time
        _stage_times.append((stage, duration))
        logger.error(
            f"Stage {stage} failed",
            extra={"stage": stage, "status": "error", "duration_s": duration, **fields},
        )
        raise
    except (GsoError, ValueError, OSError, ArithmeticError) as e:
        duration = time.perf_counter() - start_time
        _stage_times.append((stage, duration))
        logger.error(
            f"Stage {stage} failed: {e}",
            extra={"stage": stage, "status": "error", "duration_s": duration, **fields},
        )
        raise StageError(stage, e) from e
    duration = time.perf_counter() - start_time
    _stage_times.append((stage, duration))
    logger.info(
        f"Stage {stage} done in {duration:.3f}s",
        extra={"stage": stage, "status": "ok", "duration_s": duration, **fields},
    )


def measure_stage(stage: str) -> Callable[[Callable[..., T]], Callable[..., T]]:
    """Decorator form of ``log_stage``"""

    def decorator(func: Callable[..., T]) -> Callable[..., T]:
        @wraps(func)
        def wrapper(*args: Any, **kwargs: Any) -> T:
            with log_stage(stage):
                return func(*args, **kwargs)

        return wrapper

    return decorator


def stage_times() -> list[tuple[str, float]]:
    """Return a copy of recorded stage durations"""
    return list(_stage_times)


def clear_stage_times() -> None:
    """Forget recorded stage durations"""
    _stage_times.clear()

"""
Stage timing for CLI commands and training runs.

Metrics are logged only; they never enter result files so outputs stay
byte-identical across runs.
"""
from __future__ import annotations

import logging
import os
import time
from contextlib import contextmanager
from dataclasses import dataclass
from typing import Iterator, List, Optional

try:
    import psutil  # type: ignore
    _PSUTIL_AVAILABLE = True
except Exception:
    psutil = None  # type: ignore
    _PSUTIL_AVAILABLE = False

logger = logging.getLogger(__name__)

MAX_HISTORY = 1000


@dataclass
class PerformanceMetric:
    """Performance metric data class."""

    name: str
    duration: float
    memory_before: float
    memory_after: float
    timestamp: float


_history: List[PerformanceMetric] = []


def _rss_mb() -> float:
    """Resident set size in MB, 0.0 when psutil is unavailable."""
    if not _PSUTIL_AVAILABLE:
        return 0.0
    try:
        return psutil.Process(os.getpid()).memory_info().rss / (1024 * 1024)
    except Exception:
        return 0.0


@contextmanager
def track(name: str) -> Iterator[None]:
    """Time a block and log duration plus memory delta at DEBUG."""
    memory_before = _rss_mb()
    start = time.perf_counter()
    try:
        yield
    finally:
        metric = PerformanceMetric(
            name=name,
            duration=time.perf_counter() - start,
            memory_before=memory_before,
            memory_after=_rss_mb(),
            timestamp=time.time(),
        )
        record_metric(metric)
        logger.debug("[PERF] %s took %.3fs (rss %.1f -> %.1f MB)",
                     name, metric.duration, metric.memory_before, metric.memory_after)


def record_metric(metric: PerformanceMetric) -> None:
    """Record a metric and keep history bounded."""
    _history.append(metric)
    if len(_history) > MAX_HISTORY:
        del _history[:-MAX_HISTORY]


def last_metric(name: Optional[str] = None) -> Optional[PerformanceMetric]:
    for metric in reversed(_history):
        if name is None or metric.name == name:
            return metric
    return None

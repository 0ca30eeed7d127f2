"""Latency log (one JSON record per classified window) and its percentile summary."""
import logging
import math
from collections import deque
from pathlib import Path
from typing import Iterable, Sequence

from pydantic import ValidationError

from .errors import DataError
from .models import LatencyRecord, LatencySummary

logger = logging.getLogger(__name__)

MEMORY_RECORDS = 10_000


def nearest_rank(values: Sequence[float], pct: float) -> float:
    """Nearest-rank percentile: the ceil(pct/100 * n)-th smallest value."""
    if not values:
        raise DataError("cannot take a percentile of no values")
    ordered = sorted(values)
    rank = max(1, math.ceil(pct / 100.0 * len(ordered)))
    return float(ordered[rank - 1])


def summarize(records: Iterable[LatencyRecord]) -> LatencySummary:
    records = list(records)
    if not records:
        raise DataError("latency log is empty")
    latency = [r.latency_ms for r in records]
    infer = [r.infer_ms for r in records]
    return LatencySummary(
        count=len(records),
        latency_p50_ms=nearest_rank(latency, 50),
        latency_p95_ms=nearest_rank(latency, 95),
        latency_max_ms=max(latency),
        infer_p50_ms=nearest_rank(infer, 50),
        infer_p95_ms=nearest_rank(infer, 95),
    )


def read_log(path: str | Path) -> list[LatencyRecord]:
    path = Path(path)
    if not path.exists():
        raise DataError(f"latency log not found: {path}")
    records = []
    with path.open(encoding="utf-8") as f:
        for number, line in enumerate(f, start=1):
            if not line.strip():
                continue
            try:
                records.append(LatencyRecord.model_validate_json(line))
            except ValidationError as e:
                raise DataError(f"{path} line {number}: bad latency record ({e.error_count()} errors)") from e
    return records


def measure_latency(path: str | Path) -> LatencySummary:
    summary = summarize(read_log(path))
    logger.info(
        f"⏱️ {summary.count} windows: end-to-end p95 {summary.latency_p95_ms:.2f} ms, "
        f"inference p95 {summary.infer_p95_ms:.2f} ms"
    )
    return summary


class LatencyLog:
    """Append-only NDJSON writer that also keeps the most recent records in memory for /latency.

    The file holds every record; memory holds the last max_records.
    """

    def __init__(self, path: str | Path | None = None, max_records: int = MEMORY_RECORDS):
        self.path = Path(path) if path else None
        self.records: deque[LatencyRecord] = deque(maxlen=max_records)
        self._file = None
        if self.path is not None:
            self.path.parent.mkdir(parents=True, exist_ok=True)
            self._file = self.path.open("w", encoding="utf-8")

    def append(self, record: LatencyRecord) -> None:
        self.records.append(record)
        if self._file is not None:
            self._file.write(record.model_dump_json() + "\n")
            self._file.flush()

    def summary(self) -> LatencySummary:
        return summarize(self.records)

    def close(self) -> None:
        if self._file is not None:
            self._file.close()
            self._file = None

"""Sensor frames -> uniform 24-channel stream -> fixed-length windows.

Channel index = sensor_id * 6 + axis_index, axes ordered ax, ay, az, gx, gy, gz.
The same StreamAssembler drives the offline path (assemble_stream) and the
live server, so both produce identical rows for the same frame sequence.
"""
import heapq
import logging
import math
from collections import deque
from dataclasses import dataclass, field
from typing import Iterable, Optional, Sequence

import numpy as np

from .errors import DataError, UsageError
from .models import SensorFrame
from .settings import SAMPLE_RATE_HZ

logger = logging.getLogger(__name__)

AXES = ("ax", "ay", "az", "gx", "gy", "gz")
NUM_SENSORS = 4
NUM_CLASSES = 7


@dataclass(frozen=True)
class ChannelLayout:
    sample_rate_hz: float = SAMPLE_RATE_HZ
    num_sensors: int = NUM_SENSORS

    def __post_init__(self):
        if self.num_sensors != NUM_SENSORS:
            raise UsageError(f"layout must have {NUM_SENSORS} sensors")
        if not self.sample_rate_hz > 0:
            raise UsageError("sample_rate_hz must be > 0")

    @property
    def num_channels(self) -> int:
        return self.num_sensors * len(AXES)

    @property
    def period_ms(self) -> float:
        return 1000.0 / self.sample_rate_hz

    def channel_index(self, sensor_id: int, axis: str) -> int:
        return sensor_id * len(AXES) + AXES.index(axis)

    def channel_names(self) -> list[str]:
        return [f"s{s}.{a}" for s in range(self.num_sensors) for a in AXES]

    def window_len(self, window_seconds: float) -> int:
        return int(round(window_seconds * self.sample_rate_hz))


@dataclass(frozen=True, eq=False)
class MotionWindow:
    """A channels x samples chunk, the unit of classification. Immutable."""

    data: np.ndarray
    t_start_ms: float = 0.0
    stale: bool = False

    def __post_init__(self):
        data = np.array(self.data, dtype=np.float64, copy=True)
        if data.ndim != 2 or data.shape[1] < 1:
            raise DataError(f"window must be a 2-D channels x samples matrix, got shape {data.shape}")
        if not np.all(np.isfinite(data)):
            raise DataError("window contains non-finite values")
        data.flags.writeable = False
        object.__setattr__(self, "data", data)

    @property
    def window_len(self) -> int:
        return self.data.shape[1]

    @property
    def num_channels(self) -> int:
        return self.data.shape[0]

    @property
    def shape(self) -> tuple[int, int]:
        return self.data.shape

    def __eq__(self, other):
        if not isinstance(other, MotionWindow):
            return NotImplemented
        return (
            self.t_start_ms == other.t_start_ms
            and self.stale == other.stale
            and self.data.shape == other.data.shape
            and np.array_equal(self.data, other.data)
        )


@dataclass(frozen=True, eq=False)
class LabeledDataset:
    windows: tuple[MotionWindow, ...]
    labels: tuple[int, ...]
    class_names: Optional[tuple[str, ...]] = None

    def __post_init__(self):
        windows = tuple(self.windows)
        labels = tuple(int(v) for v in self.labels)
        if len(windows) != len(labels):
            raise DataError(f"{len(windows)} windows but {len(labels)} labels")
        bad = [v for v in labels if not 0 <= v < NUM_CLASSES]
        if bad:
            raise DataError(f"label {bad[0]} outside 0..{NUM_CLASSES - 1}")
        shapes = {w.shape for w in windows}
        if len(shapes) > 1:
            raise DataError(f"windows have differing shapes: {sorted(shapes)}")
        object.__setattr__(self, "windows", windows)
        object.__setattr__(self, "labels", labels)
        if self.class_names is not None:
            object.__setattr__(self, "class_names", tuple(self.class_names))

    def __len__(self) -> int:
        return len(self.windows)

    def __eq__(self, other):
        if not isinstance(other, LabeledDataset):
            return NotImplemented
        return (
            self.labels == other.labels
            and self.class_names == other.class_names
            and all(a == b for a, b in zip(self.windows, other.windows))
        )

    @property
    def shape(self) -> Optional[tuple[int, int]]:
        return self.windows[0].shape if self.windows else None

    def X(self) -> np.ndarray:
        if not self.windows:
            return np.zeros((0, 0, 0))
        return np.stack([w.data for w in self.windows])

    def y(self) -> np.ndarray:
        return np.asarray(self.labels, dtype=np.int64)

    def subset(self, indices: Sequence[int]) -> "LabeledDataset":
        return LabeledDataset(
            windows=tuple(self.windows[i] for i in indices),
            labels=tuple(self.labels[i] for i in indices),
            class_names=self.class_names,
        )

    def class_counts(self) -> dict[int, int]:
        values, counts = np.unique(self.y(), return_counts=True)
        return {int(v): int(c) for v, c in zip(values, counts)}

    def num_classes(self) -> int:
        if self.class_names:
            return len(self.class_names)
        return max(self.labels) + 1 if self.labels else 0


@dataclass
class AssembledStream:
    """Rows on a uniform grid: t_ms (N,), data (N, 24), stale (N, 4)."""

    t_ms: np.ndarray
    data: np.ndarray
    stale: np.ndarray

    def __len__(self) -> int:
        return len(self.t_ms)


@dataclass
class StreamStats:
    accepted: int = 0
    rejected_unknown_sensor: int = 0
    rejected_non_finite: int = 0
    rejected_late: int = 0
    rows: int = 0
    stale_rows: int = 0

    @property
    def rejected(self) -> int:
        return self.rejected_unknown_sensor + self.rejected_non_finite + self.rejected_late


class ReorderBuffer:
    """Releases frames in (t_ms, seq) order across sensors.

    A frame is released once every sensor seen so far has reported a frame at
    or after it, or once the newest timestamp is reorder_ms past it. Frames
    older than the last released one are late and rejected.
    """

    def __init__(self, reorder_ms: float = 100.0, stats: StreamStats | None = None):
        self.reorder_ms = reorder_ms
        self.stats = stats or StreamStats()
        self._heap: list[tuple[float, int, int, SensorFrame]] = []
        self._latest: dict[int, float] = {}
        self._horizon = -math.inf
        self._released = -math.inf
        self._counter = 0

    def push(self, frame: SensorFrame) -> list[SensorFrame]:
        if frame.t_ms < self._released:
            self.stats.rejected_late += 1
            _warn_counted("late frame", self.stats.rejected_late, frame)
            return []
        heapq.heappush(self._heap, (frame.t_ms, frame.seq, self._counter, frame))
        self._counter += 1
        self._latest[frame.sensor_id] = max(self._latest.get(frame.sensor_id, -math.inf), frame.t_ms)
        self._horizon = max(self._horizon, frame.t_ms)
        watermark = max(min(self._latest.values()), self._horizon - self.reorder_ms)
        return self._release(watermark)

    def flush(self) -> list[SensorFrame]:
        return self._release(math.inf)

    def _release(self, watermark: float) -> list[SensorFrame]:
        out = []
        while self._heap and self._heap[0][0] <= watermark:
            t, _, _, frame = heapq.heappop(self._heap)
            self._released = t
            out.append(frame)
        return out


def _warn_counted(reason: str, count: int, frame: SensorFrame) -> None:
    if count == 1 or count % 100 == 0:
        logger.warning(f"⚠️ Rejected {reason} (seq={frame.seq}, sensor={frame.sensor_id}); {count} so far")


class StreamAssembler:
    """Single-writer state machine turning time-ordered frames into grid rows.

    For tick t and sensor s, with a = latest frame <= t and b = earliest frame >= t:
      - a and b with b.t - a.t <= gap: linear interpolation, fresh
      - otherwise a: hold a, stale when t - a.t > gap
      - no a, only b: hold b, stale when b.t - t > gap
      - nothing: zeros, stale
    A tick is emitted only once that choice can no longer change.
    """

    def __init__(
        self,
        layout: ChannelLayout | None = None,
        gap_tolerance_ms: float = 250.0,
        t0_ms: float | None = None,
        stats: StreamStats | None = None,
    ):
        self.layout = layout or ChannelLayout()
        self.gap_tolerance_ms = gap_tolerance_ms
        self.stats = stats or StreamStats()
        self._t0 = t0_ms
        self._k = 0
        self._horizon = -math.inf
        self._history: dict[int, deque] = {s: deque() for s in range(self.layout.num_sensors)}

    def tick_time(self, k: int) -> float:
        return self._t0 + k * 1000.0 / self.layout.sample_rate_hz

    def accept(self, frame: SensorFrame) -> bool:
        if not 0 <= frame.sensor_id < self.layout.num_sensors:
            self.stats.rejected_unknown_sensor += 1
            _warn_counted("unknown sensor id", self.stats.rejected_unknown_sensor, frame)
            return False
        if not all(math.isfinite(v) for v in (frame.t_ms, *frame.values)):
            self.stats.rejected_non_finite += 1
            _warn_counted("non-finite frame", self.stats.rejected_non_finite, frame)
            return False
        history = self._history[frame.sensor_id]
        if history and frame.t_ms < history[-1][0]:
            self.stats.rejected_late += 1
            _warn_counted("out-of-order frame", self.stats.rejected_late, frame)
            return False
        return True

    def push(self, frame: SensorFrame) -> list[tuple[float, np.ndarray, np.ndarray]]:
        """Add one frame (time-ordered); returns rows (t_ms, values[24], stale[4]) now final."""
        if not self.accept(frame):
            return []
        self.stats.accepted += 1
        if self._t0 is None:
            self._t0 = frame.t_ms
        self._history[frame.sensor_id].append((frame.t_ms, np.asarray(frame.values, dtype=np.float64)))
        self._horizon = max(self._horizon, frame.t_ms)
        return self._drain(final=False)

    def flush(self) -> list[tuple[float, np.ndarray, np.ndarray]]:
        """Emit every remaining tick up to the newest frame time."""
        if self._t0 is None:
            return []
        return self._drain(final=True)

    def _drain(self, final: bool) -> list[tuple[float, np.ndarray, np.ndarray]]:
        rows = []
        while True:
            t = self.tick_time(self._k)
            if t > self._horizon:
                break
            values = np.zeros(self.layout.num_channels)
            stale = np.zeros(self.layout.num_sensors, dtype=bool)
            ready = True
            for sensor, history in self._history.items():
                decided = self._resolve(history, t, final)
                if decided is None:
                    ready = False
                    break
                v, is_stale = decided
                values[sensor * 6:(sensor + 1) * 6] = v
                stale[sensor] = is_stale
            if not ready:
                break
            rows.append((t, values, stale))
            self.stats.rows += 1
            if stale.any():
                self.stats.stale_rows += 1
            self._k += 1
            self._trim(t)
        return rows

    def _resolve(self, history: deque, t: float, final: bool):
        gap = self.gap_tolerance_ms
        a = b = None
        for ft, fv in history:
            if ft <= t:
                a = (ft, fv)
            if ft >= t:
                b = (ft, fv)
                break
        if a is not None and b is not None:
            if b[0] - a[0] <= gap:
                if b[0] == a[0]:
                    return b[1], False
                w = (t - a[0]) / (b[0] - a[0])
                return a[1] + (b[1] - a[1]) * w, False
            return a[1], t - a[0] > gap
        if a is not None:
            # any later frame arrives at >= horizon, so the gap is already known
            if final or self._horizon - a[0] > gap:
                return a[1], t - a[0] > gap
            return None
        if b is not None:
            return b[1], b[0] - t > gap
        if final or self._horizon - t > gap:
            return np.zeros(len(AXES)), True
        return None

    def _trim(self, t_done: float) -> None:
        for history in self._history.values():
            while len(history) >= 2 and history[1][0] <= t_done:
                history.popleft()


def assemble_stream(
    frames: Iterable[SensorFrame],
    layout: ChannelLayout | None = None,
    gap_tolerance_ms: float = 250.0,
    t0_ms: float | None = None,
    stats: StreamStats | None = None,
) -> AssembledStream:
    """Resample per-sensor frames onto the uniform grid t0 + k / rate."""
    layout = layout or ChannelLayout()
    assembler = StreamAssembler(layout, gap_tolerance_ms, t0_ms, stats)
    rows = []
    for frame in sorted(frames, key=lambda f: (f.t_ms, f.seq)):
        rows.extend(assembler.push(frame))
    rows.extend(assembler.flush())
    return rows_to_stream(rows, layout)


def rows_to_stream(rows, layout: ChannelLayout | None = None) -> AssembledStream:
    layout = layout or ChannelLayout()
    if not rows:
        return AssembledStream(
            t_ms=np.zeros(0),
            data=np.zeros((0, layout.num_channels)),
            stale=np.zeros((0, layout.num_sensors), dtype=bool),
        )
    return AssembledStream(
        t_ms=np.array([r[0] for r in rows]),
        data=np.stack([r[1] for r in rows]),
        stale=np.stack([r[2] for r in rows]),
    )


def _check_window_args(window_len: int, hop: int) -> None:
    if window_len < 1:
        raise UsageError("window_len must be >= 1")
    if not 1 <= hop <= window_len * 4:
        raise UsageError(f"hop must be in 1..{window_len * 4}, got {hop}")


def segment(stream: AssembledStream, window_len: int, hop: int | None = None) -> list[MotionWindow]:
    """Window i covers rows [i*hop, i*hop + window_len); partial tail dropped."""
    hop = window_len if hop is None else hop
    _check_window_args(window_len, hop)
    n = len(stream)
    if n < window_len:
        return []
    windows = []
    for start in range(0, n - window_len + 1, hop):
        end = start + window_len
        windows.append(
            MotionWindow(
                data=stream.data[start:end].T,
                t_start_ms=float(stream.t_ms[start]),
                stale=bool(stream.stale[start:end].any()),
            )
        )
    return windows


@dataclass
class ScheduledWindow:
    index: int
    window: MotionWindow
    t_end_ms: float


@dataclass
class WindowScheduler:
    """Streaming form of segment(): emits the same windows row by row."""

    window_len: int
    hop: int
    _rows: deque = field(init=False)
    _count: int = field(init=False, default=0)
    _emitted: int = field(init=False, default=0)

    def __post_init__(self):
        _check_window_args(self.window_len, self.hop)
        self._rows = deque(maxlen=self.window_len)

    def push(self, row: tuple[float, np.ndarray, np.ndarray]) -> Optional[ScheduledWindow]:
        self._rows.append(row)
        end = self._count
        self._count += 1
        if end < self.window_len - 1 or (end - (self.window_len - 1)) % self.hop:
            return None
        rows = list(self._rows)
        window = MotionWindow(
            data=np.stack([r[1] for r in rows]).T,
            t_start_ms=float(rows[0][0]),
            stale=bool(any(r[2].any() for r in rows)),
        )
        scheduled = ScheduledWindow(index=self._emitted, window=window, t_end_ms=float(rows[-1][0]))
        self._emitted += 1
        return scheduled

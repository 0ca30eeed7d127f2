"""NDJSON persistence for labeled windows and raw frame recordings.

Dataset line: {"label": int, "t_start_ms": number, "window": [[float]*L]*24}
with an optional "class_name". Recording line: one SensorFrame in wire format.
Floats are written with repr precision, so float64 values round-trip exactly.
"""
import json
import logging
from pathlib import Path
from typing import Iterable, List, Optional

from pydantic import BaseModel, Field, ValidationError

from .errors import DataError, DatasetFormatError
from .models import SensorFrame
from .signal import (
    NUM_CLASSES,
    ChannelLayout,
    LabeledDataset,
    MotionWindow,
    assemble_stream,
    segment,
)

logger = logging.getLogger(__name__)


class WindowRecord(BaseModel):
    label: int = Field(ge=0, le=NUM_CLASSES - 1)
    t_start_ms: float = 0.0
    window: List[List[float]]
    class_name: Optional[str] = None


class LabelSpan(BaseModel):
    start_ms: float
    end_ms: float
    label: int = Field(ge=0, le=NUM_CLASSES - 1)


def save_dataset(ds: LabeledDataset, path: str | Path) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with path.open("w", encoding="utf-8") as f:
        for window, label in zip(ds.windows, ds.labels):
            record = {
                "label": label,
                "t_start_ms": window.t_start_ms,
                "window": window.data.tolist(),
            }
            if ds.class_names:
                record["class_name"] = ds.class_names[label]
            f.write(json.dumps(record) + "\n")
    logger.info(f"📦 Saved {len(ds)} windows to {path}")
    return path


def load_dataset(path: str | Path) -> LabeledDataset:
    path = Path(path)
    windows, labels = [], []
    names: dict[int, str] = {}
    shape = None
    try:
        lines = path.read_text(encoding="utf-8").splitlines()
    except FileNotFoundError as e:
        raise DataError(f"dataset not found: {path}") from e
    for number, line in enumerate(lines, start=1):
        if not line.strip():
            continue
        try:
            record = WindowRecord.model_validate_json(line)
            window = MotionWindow(data=record.window, t_start_ms=record.t_start_ms)
        except ValidationError as e:
            raise DatasetFormatError(number, _first_error(e)) from e
        except DataError as e:
            raise DatasetFormatError(number, str(e)) from e
        if shape is None:
            shape = window.shape
        elif window.shape != shape:
            raise DatasetFormatError(number, f"window shape {window.shape} differs from {shape}")
        windows.append(window)
        labels.append(record.label)
        if record.class_name is not None:
            names[record.label] = record.class_name
    class_names = None
    if names:
        count = max(max(names) + 1, NUM_CLASSES)
        class_names = tuple(names.get(i, f"class_{i}") for i in range(count))
    logger.info(f"✅ Loaded {len(windows)} windows from {path}")
    return LabeledDataset(windows=tuple(windows), labels=tuple(labels), class_names=class_names)


def _first_error(e: ValidationError) -> str:
    err = e.errors()[0]
    where = ".".join(str(p) for p in err.get("loc", ()))
    return f"{where}: {err['msg']}" if where else err["msg"]


def save_recording(frames: Iterable[SensorFrame], path: str | Path) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    count = 0
    with path.open("w", encoding="utf-8") as f:
        for frame in frames:
            f.write(json.dumps(frame.to_wire()) + "\n")
            count += 1
    logger.info(f"📦 Saved recording of {count} frames to {path}")
    return path


def load_recording(path: str | Path) -> list[SensorFrame]:
    frames = []
    try:
        lines = Path(path).read_text(encoding="utf-8").splitlines()
    except FileNotFoundError as e:
        raise DataError(f"recording not found: {path}") from e
    for number, line in enumerate(lines, start=1):
        if not line.strip():
            continue
        try:
            frames.append(SensorFrame.model_validate_json(line))
        except ValidationError as e:
            raise DatasetFormatError(number, _first_error(e)) from e
    return frames


def load_label_spans(path: str | Path) -> list[LabelSpan]:
    try:
        raw = json.loads(Path(path).read_text(encoding="utf-8"))
        return [LabelSpan.model_validate(item) for item in raw]
    except (OSError, json.JSONDecodeError, ValidationError, TypeError) as e:
        raise DataError(f"invalid label segments file {path}: {e}") from e


def label_recording(
    frames: Iterable[SensorFrame],
    spans: list[LabelSpan],
    window_len: int,
    hop: int | None = None,
    layout: ChannelLayout | None = None,
    gap_tolerance_ms: float = 250.0,
    class_names: tuple[str, ...] | None = None,
) -> LabeledDataset:
    """Assemble and segment a capture, labeling each window by the span that fully contains it.

    Windows straddling two spans or falling outside every span are dropped.
    """
    layout = layout or ChannelLayout()
    stream = assemble_stream(frames, layout, gap_tolerance_ms)
    windows, labels = [], []
    half_period = layout.period_ms / 2
    for window in segment(stream, window_len, hop):
        t_end = window.t_start_ms + (window.window_len - 1) * layout.period_ms
        for span in spans:
            if span.start_ms - half_period <= window.t_start_ms and t_end < span.end_ms:
                windows.append(window)
                labels.append(span.label)
                break
    logger.info(f"✅ Labeled {len(windows)} windows from {len(stream)} rows")
    return LabeledDataset(windows=tuple(windows), labels=tuple(labels), class_names=class_names)

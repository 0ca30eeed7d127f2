"""Synthetic 7-class IMU motion data.

Class c >= 1 is a sinusoid at 0.5 + 0.5 c Hz on a placement-dependent channel
mask (wrists are sensors 0-1, ankles 2-3), with a random phase per sensor and
window, a random amplitude in [0.8, 1.2], and Gaussian noise. Class 0 is
low-amplitude noise only (the negative class).
"""
import logging
from dataclasses import dataclass
from typing import Sequence

import numpy as np
from pydantic import BaseModel, ConfigDict, Field, field_validator

from .errors import UsageError
from .models import SensorFrame
from .settings import SAMPLE_RATE_HZ, GenSettings
from .signal import AXES, NUM_CLASSES, NUM_SENSORS, LabeledDataset, MotionWindow

logger = logging.getLogger(__name__)

CLASS_NAMES = ("negative", "m1", "m2", "m3", "m4", "m5", "m6")
ACCEL = (0, 1, 2)
GYRO = (3, 4, 5)
# sensors: 0 left wrist, 1 right wrist, 2 left ankle, 3 right ankle
PLACEMENT = {
    1: ((0, 1), ACCEL),
    2: ((2, 3), ACCEL),
    3: ((0, 1), GYRO),
    4: ((2, 3), GYRO),
    5: ((0, 1, 2, 3), ACCEL),
    6: ((0, 2), ACCEL + GYRO),
}


def class_frequency(c: int) -> float:
    return 0.5 + 0.5 * c


def channel_mask(c: int) -> np.ndarray:
    mask = np.zeros(NUM_SENSORS * len(AXES))
    if c == 0:
        return mask
    sensors, axes = PLACEMENT[c]
    for s in sensors:
        for a in axes:
            mask[s * len(AXES) + a] = 1.0
    return mask


def counts_for_total(total: int, n_classes: int = NUM_CLASSES) -> list[int]:
    """Even split; the remainder goes round-robin from class 0."""
    base, remainder = divmod(total, n_classes)
    return [base + (1 if c < remainder else 0) for c in range(n_classes)]


class SynthSpec(BaseModel):
    model_config = ConfigDict(extra="forbid")

    samples_per_class: list[int] = Field(default_factory=lambda: counts_for_total(648))
    noise_std: float = Field(0.05, ge=0.0)
    negative_amplitude: float = Field(0.1, ge=0.0)
    window_seconds: float = Field(2.0, gt=0.0)
    sample_rate_hz: float = Field(SAMPLE_RATE_HZ, gt=0.0)
    seed: int = 7

    @field_validator("samples_per_class")
    @classmethod
    def _check_counts(cls, counts):
        if len(counts) != NUM_CLASSES or any(c < 1 for c in counts):
            raise ValueError(f"samples_per_class needs {NUM_CLASSES} counts, each >= 1")
        return counts

    @property
    def window_len(self) -> int:
        return int(round(self.window_seconds * self.sample_rate_hz))

    def check_nyquist(self) -> None:
        top = class_frequency(NUM_CLASSES - 1)
        if top >= self.sample_rate_hz / 2:
            raise UsageError(f"class frequency {top} Hz is above Nyquist for {self.sample_rate_hz} Hz")


def _window(c: int, spec: SynthSpec, rng: np.random.Generator) -> np.ndarray:
    n_channels = NUM_SENSORS * len(AXES)
    t = np.arange(spec.window_len) / spec.sample_rate_hz
    noise = rng.standard_normal((n_channels, spec.window_len))
    if c == 0:
        return spec.negative_amplitude * noise
    phases = rng.uniform(0.0, 2 * np.pi, NUM_SENSORS)
    amplitude = rng.uniform(0.8, 1.2)
    per_channel_phase = np.repeat(phases, len(AXES))[:, None]
    wave = amplitude * np.sin(2 * np.pi * class_frequency(c) * t[None, :] + per_channel_phase)
    return wave * channel_mask(c)[:, None] + spec.noise_std * noise


def generate(spec: SynthSpec | None = None) -> LabeledDataset:
    """Deterministic under spec.seed; windows ordered by class."""
    spec = spec or SynthSpec()
    spec.check_nyquist()
    rng = np.random.default_rng(spec.seed)
    period_ms = 1000.0 / spec.sample_rate_hz
    windows, labels = [], []
    for c, count in enumerate(spec.samples_per_class):
        for _ in range(count):
            t_start = len(windows) * spec.window_len * period_ms
            windows.append(MotionWindow(data=_window(c, spec, rng), t_start_ms=t_start))
            labels.append(c)
    logger.info(f"✅ Generated {len(windows)} synthetic windows (seed {spec.seed})")
    return LabeledDataset(windows=tuple(windows), labels=tuple(labels), class_names=CLASS_NAMES)


@dataclass
class TransitionRecording:
    frames: list[SensorFrame]
    # (first_row, end_row, label) for rows that belong to one class only
    pure_spans: list[tuple[int, int, int]]
    row_labels: np.ndarray          # label of the dominant source per row
    sample_rate_hz: float = SAMPLE_RATE_HZ


def alternating_order(labels: Sequence[int]) -> list[int]:
    """Window indices interleaved round-robin across classes."""
    by_class: dict[int, list[int]] = {}
    for i, label in enumerate(labels):
        by_class.setdefault(label, []).append(i)
    order = []
    queues = [list(v) for _, v in sorted(by_class.items())]
    while any(queues):
        for q in queues:
            if q:
                order.append(q.pop(0))
    return order


def inject_transitions(
    ds: LabeledDataset,
    crossfade_seconds: float,
    window_seconds: float = 2.0,
    sample_rate_hz: float = SAMPLE_RATE_HZ,
    max_windows: int | None = None,
    t0_ms: float = 0.0,
) -> TransitionRecording:
    """Concatenate windows of alternating classes with linear crossfades into a frame recording."""
    if crossfade_seconds < 0 or crossfade_seconds >= window_seconds:
        raise UsageError("crossfade_seconds must be in [0, window_seconds)")
    order = alternating_order(ds.labels)
    if max_windows is not None:
        order = order[:max_windows]
    overlap = int(round(crossfade_seconds * sample_rate_hz))
    row_labels: list[int] = []
    spans: list[tuple[int, int, int]] = []
    stream = np.zeros((0, ds.windows[0].num_channels)) if order else np.zeros((0, 24))
    for n, idx in enumerate(order):
        rows = ds.windows[idx].data.T
        label = ds.labels[idx]
        if n == 0 or overlap == 0:
            start = stream.shape[0]
            stream = np.vstack([stream, rows])
            row_labels.extend([label] * rows.shape[0])
        else:
            start = stream.shape[0] - overlap
            fade = (np.arange(1, overlap + 1) / (overlap + 1))[:, None]
            stream[start:] = (1 - fade) * stream[start:] + fade * rows[:overlap]
            stream = np.vstack([stream, rows[overlap:]])
            half = overlap // 2
            row_labels[start + half:] = [label] * (overlap - half)
            row_labels.extend([label] * (rows.shape[0] - overlap))
        pure_start = start + (overlap if n > 0 else 0)
        pure_end = stream.shape[0] - (overlap if n < len(order) - 1 else 0)
        spans.append((pure_start, pure_end, label))
    frames = []
    seq = 0
    for i, row in enumerate(stream):
        t = t0_ms + i * 1000.0 / sample_rate_hz
        for s in range(NUM_SENSORS):
            v = row[s * 6:(s + 1) * 6]
            frames.append(SensorFrame(
                seq=seq, t_ms=t, sensor=s,
                ax=v[0], ay=v[1], az=v[2], gx=v[3], gy=v[4], gz=v[5],
            ))
            seq += 1
    logger.info(f"✅ Built recording of {stream.shape[0]} rows from {len(order)} windows")
    return TransitionRecording(
        frames=frames,
        pure_spans=spans,
        row_labels=np.asarray(row_labels, dtype=np.int64),
        sample_rate_hz=sample_rate_hz,
    )


def spec_from_settings(gen: GenSettings) -> SynthSpec:
    """--per-class wins over --total; the total is split by counts_for_total."""
    counts = [gen.per_class] * NUM_CLASSES if gen.per_class else counts_for_total(gen.total or 648)
    return SynthSpec(samples_per_class=counts, noise_std=gen.noise_std, seed=gen.seed)

import json

import numpy as np
import pytest

from app.pipeline.dataset import (
    LabelSpan,
    label_recording,
    load_dataset,
    load_recording,
    save_dataset,
    save_recording,
)
from app.pipeline.errors import DataError, DatasetFormatError
from app.pipeline.models import SensorFrame
from app.pipeline.signal import LabeledDataset, MotionWindow
from app.pipeline.synth import inject_transitions


def test_round_trip_is_bit_exact(tmp_path, rng):
    windows = tuple(MotionWindow(data=rng.standard_normal((24, 96)) * 1e3, t_start_ms=i * 2000.0) for i in range(3))
    ds = LabeledDataset(windows=windows, labels=(0, 3, 6))
    path = save_dataset(ds, tmp_path / "d.ndjson")
    loaded = load_dataset(path)
    assert loaded == ds
    for a, b in zip(loaded.windows, ds.windows):
        assert a.data.tobytes() == b.data.tobytes()


def test_class_names_survive_round_trip(tmp_path, small_ds):
    loaded = load_dataset(save_dataset(small_ds, tmp_path / "d.ndjson"))
    assert loaded.class_names == small_ds.class_names


def test_empty_file_is_empty_dataset(tmp_path):
    path = tmp_path / "empty.ndjson"
    path.write_text("")
    assert len(load_dataset(path)) == 0


def test_label_seven_is_rejected_with_line_number(tmp_path):
    good = {"label": 1, "t_start_ms": 0, "window": np.zeros((24, 96)).tolist()}
    bad = dict(good, label=7)
    path = tmp_path / "bad.ndjson"
    path.write_text(json.dumps(good) + "\n" + json.dumps(bad) + "\n")
    with pytest.raises(DatasetFormatError) as info:
        load_dataset(path)
    assert info.value.line_number == 2
    assert "line 2" in str(info.value)
    assert info.value.exit_code == 2


def test_malformed_json_names_line(tmp_path):
    path = tmp_path / "bad.ndjson"
    path.write_text("{not json\n")
    with pytest.raises(DatasetFormatError, match="line 1"):
        load_dataset(path)


def test_mixed_shapes_are_rejected(tmp_path):
    rows = [
        {"label": 0, "window": np.zeros((24, 96)).tolist()},
        {"label": 0, "window": np.zeros((24, 48)).tolist()},
    ]
    path = tmp_path / "mixed.ndjson"
    path.write_text("\n".join(json.dumps(r) for r in rows))
    with pytest.raises(DatasetFormatError, match="line 2"):
        load_dataset(path)


def test_missing_dataset_is_data_error(tmp_path):
    with pytest.raises(DataError):
        load_dataset(tmp_path / "nope.ndjson")


def test_recording_round_trip_uses_wire_names(tmp_path):
    frames = [SensorFrame(seq=i, t_ms=i * 5.0, sensor=i % 4, ax=1, ay=2, az=3, gx=4, gy=5, gz=6) for i in range(8)]
    path = save_recording(frames, tmp_path / "r.ndjson")
    assert '"sensor": 1' in path.read_text().splitlines()[1]
    assert load_recording(path) == frames


def test_label_recording_keeps_windows_inside_spans(small_ds):
    # two class-1 and two class-2 windows, interleaved 1, 2, 1, 2 with hard cuts
    sub = small_ds.subset([8, 9, 16, 17])
    recording = inject_transitions(sub, 0.0)
    period = 1000.0 / 48.0
    spans = [
        LabelSpan(start_ms=i * 96 * period, end_ms=(i + 1) * 96 * period, label=label)
        for i, label in enumerate((1, 2, 1, 2))
    ]
    labeled = label_recording(recording.frames, spans, window_len=96, hop=48)
    # hop 48 gives 7 windows; the 3 straddling a cut are dropped
    assert labeled.labels == (1, 2, 1, 2)
    np.testing.assert_array_equal(labeled.windows[1].data, sub.windows[2].data)

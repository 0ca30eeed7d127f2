import json

import pytest

from app.pipeline.cli import build_parser, main
from app.pipeline.dataset import load_dataset, save_dataset, save_recording
from app.pipeline.model_io import load_model
from app.pipeline.synth import inject_transitions

FAST = ["--features", "840", "--augment-copies", "0"]


@pytest.fixture
def dataset_path(tmp_path):
    path = tmp_path / "synth.ndjson"
    assert main(["gen", "--per-class", "6", "--seed", "3", "--out", str(path)]) == 0
    return path


def test_gen_is_byte_deterministic(tmp_path, dataset_path):
    again = tmp_path / "again.ndjson"
    assert main(["gen", "--per-class", "6", "--seed", "3", "--out", str(again)]) == 0
    assert again.read_bytes() == dataset_path.read_bytes()
    assert load_dataset(again).class_counts() == {c: 6 for c in range(7)}


def test_train_twice_gives_identical_models(tmp_path, dataset_path):
    a, b = tmp_path / "a.mrmd", tmp_path / "b.mrmd"
    assert main(["train", "--dataset", str(dataset_path), "--out", str(a), *FAST]) == 0
    assert main(["train", "--dataset", str(dataset_path), "--out", str(b), *FAST]) == 0
    assert a.read_bytes() == b.read_bytes()
    summary = json.loads(a.with_suffix(".json").read_text())
    assert summary["num_features"] == 840
    assert load_model(a).rocket_params.num_features == 840


def test_single_class_dataset_exits_with_data_error(tmp_path, dataset_path, capsys):
    ds = load_dataset(dataset_path)
    one = tmp_path / "one.ndjson"
    save_dataset(ds.subset([i for i, label in enumerate(ds.labels) if label == 2]), one)
    code = main(["train", "--dataset", str(one), "--out", str(tmp_path / "m.mrmd"), *FAST])
    assert code == 2
    assert "degenerate labels" in capsys.readouterr().err


def test_malformed_dataset_exits_2(tmp_path, capsys):
    bad = tmp_path / "bad.ndjson"
    bad.write_text("{nope\n")
    assert main(["train", "--dataset", str(bad), "--out", str(tmp_path / "m.mrmd")]) == 2
    assert "line 1" in capsys.readouterr().err


@pytest.mark.parametrize(
    "argv",
    [
        [],
        ["gen"],
        ["frobnicate"],
        ["gen", "--out", "x.ndjson", "--bogus"],
        ["gen", "--out", "x.ndjson", "--per-class", "0"],
        ["replay", "--recording", "r.ndjson", "--speed", "-2"],
        ["gen", "--out", "x.ndjson", "--log-level", "loud"],
    ],
)
def test_usage_errors_exit_1(argv, tmp_path, monkeypatch):
    monkeypatch.chdir(tmp_path)
    assert main(argv) == 1


def test_missing_config_file_exits_1(tmp_path):
    assert main(["gen", "--out", str(tmp_path / "x"), "--config", str(tmp_path / "absent.json")]) == 1


def test_dotted_flags_become_overrides():
    args = build_parser().parse_args(["eval", "--dataset", "d", "--folds", "5", "--train-seed", "9"])
    values = vars(args)
    assert values["eval.folds"] == 5
    assert values["train.seed"] == 9
    assert "train.features" not in values


def test_speed_accepts_inf():
    args = build_parser().parse_args(["replay", "--recording", "r", "--speed", "inf"])
    assert args.speed == float("inf")


def test_eval_writes_all_report_formats(tmp_path, dataset_path):
    report = tmp_path / "eval.json"
    code = main([
        "eval", "--dataset", str(dataset_path), "--folds", "3", "--seed", "1",
        "--report", str(report), "--plot", str(tmp_path / "eval.svg"), "--csv", str(tmp_path / "cm.csv"),
        *FAST,
    ])
    assert code == 0
    payload = json.loads(report.read_text())
    assert payload["k"] == 3
    assert sum(payload["fold_sizes"]) == 42
    assert (tmp_path / "eval.svg").exists()
    assert (tmp_path / "cm_folds.csv").exists()


def test_bench_reports_percentiles(tmp_path, small_model, capsys):
    from app.pipeline.model_io import save_model

    model = save_model(small_model, tmp_path / "m.mrmd")
    out = tmp_path / "bench.json"
    assert main(["bench", "--model", str(model), "--iterations", "20", "--out", str(out)]) == 0
    report = json.loads(out.read_text())
    assert report["iterations"] == 20
    assert len(report["samples_ms"]) == 20
    assert report["p50_ms"] <= report["p95_ms"] <= report["max_ms"]


def test_bench_rejects_zero_iterations(tmp_path, small_model):
    from app.pipeline.model_io import save_model

    model = save_model(small_model, tmp_path / "m.mrmd")
    assert main(["bench", "--model", str(model), "--iterations", "0"]) == 1


def test_label_command(tmp_path, small_ds):
    recording = inject_transitions(small_ds.subset(range(0, 56, 8)), 0.0)
    rec_path = save_recording(recording.frames, tmp_path / "capture.ndjson")
    spans = [
        {"start_ms": start * 1000.0 / 48.0, "end_ms": end * 1000.0 / 48.0, "label": label}
        for start, end, label in recording.pure_spans
    ]
    seg_path = tmp_path / "segments.json"
    seg_path.write_text(json.dumps(spans))
    out = tmp_path / "labeled.ndjson"
    assert main(["label", "--recording", str(rec_path), "--segments", str(seg_path), "--out", str(out)]) == 0
    labeled = load_dataset(out)
    assert list(labeled.labels) == [label for _, _, label in recording.pure_spans]


def test_latency_command(tmp_path, capsys):
    log = tmp_path / "latency.ndjson"
    log.write_text("".join(
        json.dumps({"window": i, "t_ms": 0.0, "label": 0, "latency_ms": v, "infer_ms": 1.0}) + "\n"
        for i, v in enumerate([10.0, 20.0, 30.0])
    ))
    assert main(["latency", "--log", str(log)]) == 0
    assert json.loads(capsys.readouterr().out)["latency_p50_ms"] == 20.0
    assert main(["latency", "--log", str(tmp_path / "missing.ndjson")]) == 2

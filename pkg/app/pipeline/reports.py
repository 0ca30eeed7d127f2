"""Evaluation report writers (JSON canonical, CSV tables, SVG figure) and the reproduction Markdown."""
import csv
import logging
from pathlib import Path

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402

from .errors import UsageError  # noqa: E402
from .models import EvalReport  # noqa: E402

logger = logging.getLogger(__name__)

FORMATS = ("json", "csv", "svg-plot")


def emit_report(report: EvalReport, path: str | Path, fmt: str = "json") -> Path:
    if fmt not in FORMATS:
        raise UsageError(f"unknown report format '{fmt}' (expected one of {', '.join(FORMATS)})")
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    if fmt == "json":
        path.write_text(report.model_dump_json(indent=2), encoding="utf-8")
    elif fmt == "csv":
        _write_csv(report, path)
    else:
        _write_svg(report, path)
    logger.info(f"📄 Wrote {fmt} report to {path}")
    return path


def load_report(path: str | Path) -> EvalReport:
    return EvalReport.model_validate_json(Path(path).read_text(encoding="utf-8"))


def _write_csv(report: EvalReport, path: Path) -> None:
    with path.open("w", newline="", encoding="utf-8") as f:
        csv.writer(f).writerows(report.confusion)
    folds_path = path.with_name(f"{path.stem}_folds.csv")
    with folds_path.open("w", newline="", encoding="utf-8") as f:
        writer = csv.writer(f)
        writer.writerow(["fold", "n_test", "accuracy"])
        for fold, (size, acc) in enumerate(zip(report.fold_sizes, report.fold_accuracy)):
            writer.writerow([fold, size, f"{acc:.6f}"])


def _write_svg(report: EvalReport, path: Path) -> None:
    cm = np.asarray(report.confusion)
    fig, (ax_cm, ax_roc) = plt.subplots(1, 2, figsize=(12, 5.5))
    try:
        ax_cm.imshow(cm, cmap="Blues")
        for (i, j), count in np.ndenumerate(cm):
            color = "white" if count > cm.max() / 2 else "black"
            ax_cm.text(j, i, str(count), ha="center", va="center", color=color, fontsize=8)
        ticks = range(cm.shape[0])
        ax_cm.set_xticks(ticks)
        ax_cm.set_yticks(ticks)
        ax_cm.set_xlabel("predicted")
        ax_cm.set_ylabel("true")
        ax_cm.set_title(f"Confusion matrix ({report.k}-fold sum)")

        for c, curve in enumerate(report.roc_curves):
            if curve is None:
                continue
            (line,) = ax_roc.plot(
                curve.fpr, curve.tpr, linewidth=1.2,
                label=f"{report.class_names[c]} (AUC {report.per_class_auc[c]:.3f})",
            )
            line.set_gid(f"roc-class-{c}")
        (mean_line,) = ax_roc.plot(
            report.mean_roc.fpr, report.mean_roc.tpr, "k--", linewidth=2,
            label=f"mean (AUC {report.macro_auc or 0.0:.3f})",
        )
        mean_line.set_gid("roc-mean")
        ax_roc.set_xlim(0, 1)
        ax_roc.set_ylim(0, 1.02)
        ax_roc.set_xlabel("false positive rate")
        ax_roc.set_ylabel("true positive rate")
        ax_roc.set_title("One-vs-rest ROC")
        ax_roc.legend(loc="lower right", fontsize=8)
        fig.tight_layout()
        fig.savefig(path, format="svg")
    finally:
        plt.close(fig)


def _pct(value: float | None) -> str:
    return "n/a" if value is None else f"{100 * value:.2f}%"


def reproduction_markdown(state: dict) -> str:
    """Markdown summary of one reproduce run (metrics, latency, thresholds)."""
    report = EvalReport.model_validate(state["report"])
    latency = state.get("latency") or {}
    bench = state.get("bench") or {}
    training = state.get("training") or {}
    lines = [
        "# Motion recognition reproduction report",
        "",
        f"- dataset: `{state.get('dataset_path')}` ({report.n_samples} windows)",
        f"- model: `{state.get('model_path')}` ({training.get('num_features')} features, alpha {training.get('alpha')})",
        f"- seed: {state.get('seed')}, folds: {report.k}",
        "",
        "## Cross-validation",
        "",
        "| metric | value | target |",
        "|---|---|---|",
        f"| mean accuracy | {_pct(report.mean_accuracy)} | >= 95% |",
        f"| accuracy std | {_pct(report.std_accuracy)} | |",
        f"| macro-F1 | {_pct(report.macro_f1)} | >= 95% |",
        f"| macro AUC | {report.macro_auc if report.macro_auc is None else f'{report.macro_auc:.4f}'} | |",
        "",
        "### Per-class AUC (one-vs-rest)",
        "",
        "| class | name | AUC | target |",
        "|---|---|---|---|",
    ]
    for c, auc in enumerate(report.per_class_auc):
        value = "undefined" if auc is None else f"{auc:.4f}"
        lines.append(f"| {c} | {report.class_names[c]} | {value} | >= 0.99 |")
    lines += ["", "### Confusion matrix (summed over folds)", ""]
    lines.append("| true \\ pred | " + " | ".join(str(i) for i in range(len(report.confusion))) + " |")
    lines.append("|---" * (len(report.confusion) + 1) + "|")
    for i, row in enumerate(report.confusion):
        lines.append(f"| {i} | " + " | ".join(str(v) for v in row) + " |")
    lines += ["", "## Latency", "", "| measurement | value | target |", "|---|---|---|"]
    if bench:
        lines.append(f"| inference p50 (bench) | {bench['p50_ms']:.2f} ms | |")
        lines.append(f"| inference p95 (bench) | {bench['p95_ms']:.2f} ms | <= 15 ms |")
    if latency:
        lines.append(f"| end-to-end p50 | {latency['latency_p50_ms']:.2f} ms | |")
        lines.append(f"| end-to-end p95 | {latency['latency_p95_ms']:.2f} ms | < 50 ms |")
        lines.append(f"| end-to-end max | {latency['latency_max_ms']:.2f} ms | |")
        lines.append(f"| inference p95 (live) | {latency['infer_p95_ms']:.2f} ms | <= 15 ms |")
    replay = state.get("replay") or {}
    if replay:
        lines += [
            "",
            "## Live replay",
            "",
            f"- replay speed: {replay.get('speed')}x real time",
            f"- frames sent: {replay.get('frames_sent')}, events received: {replay.get('events')}",
            f"- label sequence matches offline pipeline: {replay.get('matches_offline')}",
            f"- windows dropped by backpressure: {replay.get('dropped', 0)}",
            f"- unpaced replay matches offline pipeline: {replay.get('unpaced_matches_offline')}",
        ]
    return "\n".join(lines) + "\n"

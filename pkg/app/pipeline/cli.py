"""Command-line entry point: motionrocket <subcommand> [flags].

Exit codes: 0 ok, 1 usage, 2 data, 3 runtime.
Flags whose dest is a dotted key (train.features, serve.listen, ...) override
the same key of the JSON config file; everything else is per-command input.
"""
import argparse
import json
import logging
import math
import sys
from pathlib import Path
from typing import Sequence

from .errors import MotionRocketError, UsageError

logger = logging.getLogger(__name__)

class ArgParser(argparse.ArgumentParser):
    def error(self, message: str):
        raise UsageError(f"{self.prog}: {message}")


def _speed(value: str) -> float:
    if value.lower() in ("inf", "max"):
        return math.inf
    try:
        speed = float(value)
    except ValueError as e:
        raise argparse.ArgumentTypeError(f"invalid speed '{value}'") from e
    if not speed > 0:
        raise argparse.ArgumentTypeError("speed must be > 0")
    return speed


def _override(p: argparse.ArgumentParser, flag: str, key: str, **kwargs) -> None:
    p.add_argument(flag, dest=key, default=argparse.SUPPRESS, **kwargs)


def build_parser() -> ArgParser:
    common = ArgParser(add_help=False)
    common.add_argument("--config", type=Path, default=None, help="JSON config file (dotted or nested keys)")
    common.add_argument("--log-level", default=None, help="overrides MOTIONROCKET_LOG")

    parser = ArgParser(prog="motionrocket", description="Real-time IMU motion recognition")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("gen", parents=[common], help="generate the synthetic dataset")
    _override(p, "--per-class", "gen.per_class", type=int)
    _override(p, "--total", "gen.total", type=int)
    _override(p, "--noise-std", "gen.noise_std", type=float)
    _override(p, "--seed", "gen.seed", type=int)
    p.add_argument("--out", type=Path, required=True)

    p = sub.add_parser("train", parents=[common], help="fit MiniRocket + ridge on a dataset")
    p.add_argument("--dataset", type=Path, required=True)
    p.add_argument("--out", type=Path, required=True, help="model file (.mrmd)")
    p.add_argument("--summary", type=Path, default=None, help="training summary JSON (default <out>.json)")
    _add_training_flags(p)

    p = sub.add_parser("eval", parents=[common], help="stratified k-fold evaluation")
    p.add_argument("--dataset", type=Path, required=True)
    p.add_argument("--report", type=Path, default=Path("eval.json"))
    p.add_argument("--plot", type=Path, default=None, help="SVG confusion + ROC figure")
    p.add_argument("--csv", type=Path, default=None, help="confusion CSV (+ <stem>_folds.csv)")
    _override(p, "--folds", "eval.folds", type=int)
    _override(p, "--seed", "eval.seed", type=int)
    _override(p, "--jobs", "eval.jobs", type=int)
    _add_training_flags(p, seed_flag="--train-seed")

    p = sub.add_parser("serve", parents=[common], help="run the live recognition server")
    _override(p, "--listen", "serve.listen")
    _override(p, "--osc", "serve.osc")
    _override(p, "--model", "serve.model_path", type=Path)
    _override(p, "--window", "serve.window_seconds", type=float)
    _override(p, "--hop", "serve.hop_seconds", type=float)
    _override(p, "--probability-floor", "serve.probability_floor", type=float)
    _override(p, "--latency-log", "serve.latency_log", type=Path)
    _override(p, "--gap-tolerance", "serve.gap_tolerance_ms", type=float)
    _override(p, "--reorder", "serve.reorder_ms", type=float)
    _override(p, "--ring-capacity", "serve.ring_capacity", type=int)
    _override(p, "--osc-address", "serve.osc_address")
    _override(p, "--record", "serve.record_path", type=Path)
    _override(p, "--http", "serve.http")

    p = sub.add_parser("replay", parents=[common], help="stream a recording into a server")
    p.add_argument("--recording", type=Path, required=True)
    p.add_argument("--target", default="127.0.0.1:7400")
    p.add_argument("--speed", type=_speed, default=1.0, help="time multiplier, or 'inf'")
    p.add_argument("--events", type=Path, default=None, help="write received events as NDJSON")

    p = sub.add_parser("bench", parents=[common], help="time transform + predict per window")
    p.add_argument("--model", type=Path, required=True)
    p.add_argument("--iterations", type=int, default=1000)
    p.add_argument("--out", type=Path, default=None)

    p = sub.add_parser("reproduce", parents=[common], help="gen -> train -> eval -> replay -> latency -> report")
    p.add_argument("--out-dir", type=Path, default=Path("repro"))
    p.add_argument("--replay-speed", type=_speed, default=1.0)
    p.add_argument("--replay-windows", type=int, default=70)
    p.add_argument("--bench-iterations", type=int, default=1000)
    _override(p, "--seed", "gen.seed", type=int)
    _override(p, "--features", "train.features", type=int)
    _override(p, "--folds", "eval.folds", type=int)
    _override(p, "--jobs", "eval.jobs", type=int)

    p = sub.add_parser("label", parents=[common], help="label a raw capture from annotated spans")
    p.add_argument("--recording", type=Path, required=True)
    p.add_argument("--segments", type=Path, required=True)
    p.add_argument("--out", type=Path, required=True)
    _override(p, "--window", "serve.window_seconds", type=float)
    _override(p, "--hop", "serve.hop_seconds", type=float)

    p = sub.add_parser("latency", parents=[common], help="summarize a server latency log")
    p.add_argument("--log", type=Path, required=True)
    p.add_argument("--out", type=Path, default=None)
    return parser


def _add_training_flags(p: argparse.ArgumentParser, seed_flag: str = "--seed") -> None:
    _override(p, "--features", "train.features", type=int)
    _override(p, seed_flag, "train.seed", type=int)
    _override(p, "--train-jobs", "train.jobs", type=int)
    _override(p, "--alpha-grid", "train.alpha_grid", type=float, nargs="+")
    _override(p, "--augment-copies", "augment.copies", type=int)
    _override(p, "--jitter-sigma", "augment.jitter_sigma", type=float)
    _override(p, "--warp-knots", "augment.warp_knots", type=int)
    _override(p, "--warp-sigma", "augment.warp_sigma", type=float)
    _override(p, "--augment-seed", "augment.seed", type=int)


def _emit_json(payload: dict, path: Path | None = None) -> None:
    text = json.dumps(payload, indent=2, default=str)
    if path is not None:
        path.parent.mkdir(parents=True, exist_ok=True)
        path.write_text(text, encoding="utf-8")
        logger.info(f"📄 Wrote {path}")
    print(text)


def _cmd_gen(args, cfg) -> None:
    from .dataset import save_dataset
    from .synth import generate, spec_from_settings

    save_dataset(generate(spec_from_settings(cfg.gen)), args.out)


def _cmd_train(args, cfg) -> None:
    from .dataset import load_dataset
    from .model_io import save_model
    from .training import train_model

    model, summary = train_model(load_dataset(args.dataset), cfg.train, cfg.augment)
    save_model(model, args.out)
    _emit_json(summary.model_dump(), args.summary or args.out.with_suffix(".json"))


def _cmd_eval(args, cfg) -> None:
    from .dataset import load_dataset
    from .evaluation import cross_validate
    from .reports import emit_report

    report = cross_validate(
        load_dataset(args.dataset),
        k=cfg.eval.folds,
        seed=cfg.eval.seed,
        train_cfg=cfg.train,
        augment=cfg.augment,
        jobs=cfg.eval.jobs,
    )
    emit_report(report, args.report, "json")
    if args.plot:
        emit_report(report, args.plot, "svg-plot")
    if args.csv:
        emit_report(report, args.csv, "csv")


def _cmd_serve(args, cfg) -> None:
    from .serve import serve

    stats = serve(cfg.serve)
    logger.info(f"📊 Final counters: {stats.as_dict()}")


def _cmd_replay(args, cfg) -> None:
    from .replay import replay

    result = replay(args.recording, args.target, args.speed)
    if args.events:
        args.events.parent.mkdir(parents=True, exist_ok=True)
        with args.events.open("w", encoding="utf-8") as f:
            for event in result.events:
                f.write(json.dumps(event.to_wire()) + "\n")
    _emit_json({
        "frames_sent": result.frames_sent,
        "events": len(result.events),
        "labels": result.labels,
        "wall_s": result.wall_s,
        "max_pacing_error_ms": result.max_pacing_error_ms,
    })


def _cmd_bench(args, cfg) -> None:
    from .bench import bench
    from .model_io import load_model

    report = bench(load_model(args.model), args.iterations)
    _emit_json(report.model_dump(), args.out)


def _cmd_reproduce(args, cfg) -> None:
    from .workflow import reproduce

    state = reproduce(cfg, args.out_dir, args.replay_speed, args.replay_windows, args.bench_iterations)
    print(Path(state["report_path"]).read_text(encoding="utf-8"))


def _cmd_label(args, cfg) -> None:
    from .dataset import label_recording, load_label_spans, load_recording, save_dataset

    ds = label_recording(
        load_recording(args.recording),
        load_label_spans(args.segments),
        cfg.serve.window_len,
        cfg.serve.hop_len,
        gap_tolerance_ms=cfg.serve.gap_tolerance_ms,
    )
    save_dataset(ds, args.out)


def _cmd_latency(args, cfg) -> None:
    from .latency import measure_latency

    _emit_json(measure_latency(args.log).model_dump(), args.out)


COMMANDS = {
    "gen": _cmd_gen,
    "train": _cmd_train,
    "eval": _cmd_eval,
    "serve": _cmd_serve,
    "replay": _cmd_replay,
    "bench": _cmd_bench,
    "reproduce": _cmd_reproduce,
    "label": _cmd_label,
    "latency": _cmd_latency,
}


def main(argv: Sequence[str] | None = None) -> int:
    from .settings import configure_logging, load_config_file, resolve_config

    try:
        args = build_parser().parse_args(argv)
        configure_logging(args.log_level)
        overrides = {k: v for k, v in vars(args).items() if "." in k}
        cfg = resolve_config(load_config_file(args.config), overrides)
        logger.info(f"⚙️ {args.command} config: {cfg.model_dump_json()}")
        COMMANDS[args.command](args, cfg)
        return 0
    except MotionRocketError as e:
        logger.error(f"❌ {e}")
        print(f"error: {e}", file=sys.stderr)
        return e.exit_code
    except KeyboardInterrupt:
        return 0
    except Exception as e:
        logger.exception(f"❌ Unexpected failure: {e}")
        print(f"error: {e}", file=sys.stderr)
        return 3

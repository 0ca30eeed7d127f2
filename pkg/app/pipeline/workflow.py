"""End-to-end reproduction as a LangGraph workflow.

gen -> train -> eval -> replay -> measure_latency -> bench -> write_report.
Every node writes its artifacts under out_dir and records paths and
summaries in the shared ReproState; a failing node aborts the run with a
StageError naming it.
"""
import asyncio
import functools
import json
import logging
from pathlib import Path

from langgraph.graph import END, StateGraph

from .bench import bench
from .dataset import load_dataset, save_dataset, save_recording
from .errors import StageError
from .evaluation import cross_validate
from .latency import measure_latency
from .model_io import load_model, save_model
from .models import ReproState
from .reports import emit_report, reproduction_markdown
from .serve import loopback, offline_predictions
from .settings import CliConfig
from .synth import generate, inject_transitions, spec_from_settings
from .training import train_model

logger = logging.getLogger(__name__)

STAGES = ("gen", "train", "eval", "replay", "measure_latency", "bench", "write_report")


def _stage(name: str):
    def wrap(fn):
        @functools.wraps(fn)
        def node(state: ReproState) -> dict:
            logger.info(f"🔄 Stage {name}...")
            try:
                update = fn(state)
            except StageError:
                raise
            except Exception as e:
                logger.error(f"❌ Stage {name} failed: {e}")
                raise StageError(name, e) from e
            logger.info(f"✅ Stage {name} done")
            return update
        return node
    return wrap


def _write_json(path: Path, payload: dict) -> str:
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(json.dumps(payload, indent=2), encoding="utf-8")
    return str(path)


def create_workflow(cfg: CliConfig):
    """Build the compiled reproduce graph for one resolved configuration."""

    @_stage("gen")
    def gen_step(state: ReproState) -> dict:
        spec = spec_from_settings(cfg.gen.model_copy(update={"seed": state["seed"]}))
        path = save_dataset(generate(spec), Path(state["out_dir"]) / "synth.ndjson")
        return {"dataset_path": str(path)}

    @_stage("train")
    def train_step(state: ReproState) -> dict:
        settings = cfg.train.model_copy(update={"features": state["features"]})
        model, summary = train_model(load_dataset(state["dataset_path"]), settings, cfg.augment)
        out = Path(state["out_dir"])
        path = save_model(model, out / "model.mrmd")
        _write_json(out / "training.json", summary.model_dump())
        return {"model_path": str(path), "training": summary.model_dump()}

    @_stage("eval")
    def eval_step(state: ReproState) -> dict:
        settings = cfg.train.model_copy(update={"features": state["features"]})
        report = cross_validate(
            load_dataset(state["dataset_path"]),
            k=state["folds"],
            seed=cfg.eval.seed,
            train_cfg=settings,
            augment=cfg.augment,
            jobs=cfg.eval.jobs,
        )
        out = Path(state["out_dir"])
        emit_report(report, out / "eval.json", "json")
        emit_report(report, out / "eval.svg", "svg-plot")
        return {"report": report.model_dump()}

    @_stage("replay")
    def replay_step(state: ReproState) -> dict:
        out = Path(state["out_dir"])
        model = load_model(state["model_path"])
        recording = inject_transitions(
            load_dataset(state["dataset_path"]), 0.0, max_windows=state["replay_windows"]
        )
        save_recording(recording.frames, out / "replay.ndjson")
        _, offline, _ = offline_predictions(model, recording.frames, cfg.serve)

        def agrees(result, server) -> bool:
            return server.stats.windows_dropped == 0 and result.labels == [int(label) for label in offline]

        # paced run with the configured ring: this one feeds the latency log
        serve_cfg = cfg.serve.model_copy(update={"latency_log": out / "latency.ndjson"})
        paced, server = asyncio.run(loopback(model, recording.frames, serve_cfg, state["replay_speed"]))
        # unpaced run, ring large enough that no window can be dropped
        flood_cfg = cfg.serve.model_copy(
            update={"latency_log": None, "ring_capacity": max(cfg.serve.ring_capacity, len(offline))}
        )
        flooded, flood_server = asyncio.run(loopback(model, recording.frames, flood_cfg))
        replay = {
            "speed": state["replay_speed"],
            "frames_sent": paced.frames_sent,
            "events": len(paced.events),
            "offline_windows": len(offline),
            "dropped": server.stats.windows_dropped,
            "matches_offline": agrees(paced, server),
            "unpaced_matches_offline": agrees(flooded, flood_server),
            "wall_s": paced.wall_s,
            "latency_log": str(out / "latency.ndjson"),
        }
        _write_json(out / "replay.json", replay)
        return {"replay": replay}

    @_stage("measure_latency")
    def latency_step(state: ReproState) -> dict:
        summary = measure_latency(state["replay"]["latency_log"])
        _write_json(Path(state["out_dir"]) / "latency.json", summary.model_dump())
        return {"latency": summary.model_dump()}

    @_stage("bench")
    def bench_step(state: ReproState) -> dict:
        report = bench(load_model(state["model_path"]), state["bench_iterations"])
        payload = report.model_dump(exclude={"samples_ms"})
        _write_json(Path(state["out_dir"]) / "bench.json", report.model_dump())
        return {"bench": payload}

    @_stage("write_report")
    def report_step(state: ReproState) -> dict:
        path = Path(state["out_dir"]) / "REPRODUCTION.md"
        path.write_text(reproduction_markdown(dict(state)), encoding="utf-8")
        logger.info(f"📄 Reproduction report: {path}")
        return {"report_path": str(path)}

    workflow = StateGraph(ReproState)
    steps = (gen_step, train_step, eval_step, replay_step, latency_step, bench_step, report_step)
    for name, step in zip(STAGES, steps):
        workflow.add_node(name, step)
    for first, second in zip(STAGES, STAGES[1:]):
        workflow.add_edge(first, second)
    workflow.add_edge(STAGES[-1], END)
    workflow.set_entry_point(STAGES[0])
    return workflow.compile()


def reproduce(
    cfg: CliConfig,
    out_dir: str | Path,
    replay_speed: float = 1.0,
    replay_windows: int = 70,
    bench_iterations: int = 1000,
) -> ReproState:
    """Run every stage; returns the final state (paths, metrics, latency)."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    logger.info(f"🌟 Reproduction run into {out}")
    state: ReproState = {
        "out_dir": str(out),
        "seed": cfg.gen.seed,
        "features": cfg.train.features,
        "folds": cfg.eval.folds,
        "replay_speed": replay_speed,
        "replay_windows": replay_windows,
        "bench_iterations": bench_iterations,
    }
    result = create_workflow(cfg).invoke(state)
    logger.info(f"🎉 Reproduction finished: {result['report_path']}")
    return result

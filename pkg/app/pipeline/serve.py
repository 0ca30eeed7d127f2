"""Live loop: TCP NDJSON ingest -> assembler -> windows -> classifier -> OSC + NDJSON events.

Stages are connected by bounded buffers. Ingest pushes completed windows into
a ring of ring_capacity entries and drops the oldest when full, so a slow
classifier never stalls the socket reader. The model is shared read-only;
inference runs on one worker thread.
"""
import asyncio
import contextlib
import json
import logging
import math
import signal
import time
from collections import deque
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Optional

from pydantic import ValidationError

from .errors import ShapeMismatchError
from .latency import LatencyLog
from .model_io import load_model
from .models import LatencyRecord, Prediction, SensorFrame, TriggerEvent
from .osc import OscEmitter
from .ridge import RidgeModel
from .settings import SAMPLE_RATE_HZ, ServerConfig, parse_hostport
from .signal import (
    NUM_CLASSES,
    ChannelLayout,
    ReorderBuffer,
    ScheduledWindow,
    StreamAssembler,
    StreamStats,
    WindowScheduler,
    assemble_stream,
    segment,
)
from .training import classify, predict_windows, warm_up

logger = logging.getLogger(__name__)

EMIT_QUEUE_SIZE = 8


@dataclass
class ServerStats:
    connections: int = 0
    connected: bool = False
    lines: int = 0
    malformed: int = 0
    frames_accepted: int = 0
    frames_rejected: int = 0
    windows_scheduled: int = 0
    windows_classified: int = 0
    windows_dropped: int = 0
    events_emitted: int = 0
    triggers_sent: int = 0
    stale_events: int = 0
    last_prediction: Optional[dict] = None

    def as_dict(self) -> dict:
        return asdict(self)


@dataclass
class _Pending:
    scheduled: ScheduledWindow
    received_at: float      # perf_counter of the frame that completed the window


@dataclass
class _Session:
    """Per-connection pipeline state; only the ingest coroutine touches the assembler."""

    stream_stats: StreamStats
    reorder: ReorderBuffer
    assembler: StreamAssembler
    scheduler: WindowScheduler
    pending: deque = field(default_factory=deque)
    wakeup: asyncio.Event = field(default_factory=asyncio.Event)
    ingest_done: bool = False
    events: asyncio.Queue = field(default_factory=lambda: asyncio.Queue(EMIT_QUEUE_SIZE))


def check_model(model: RidgeModel, cfg: ServerConfig) -> None:
    params = model.rocket_params
    if params is None:
        raise ShapeMismatchError("model file carries no feature transform")
    layout = ChannelLayout()
    if params.num_channels != layout.num_channels or params.input_length != cfg.window_len:
        raise ShapeMismatchError(
            f"model expects {params.num_channels}x{params.input_length} windows, "
            f"server produces {layout.num_channels}x{cfg.window_len}"
        )


class MotionServer:
    def __init__(self, cfg: ServerConfig, model: RidgeModel | None = None):
        self.cfg = cfg
        if model is None:
            if cfg.model_path is None:
                raise ShapeMismatchError("no model given (set serve.model_path or --model)")
            model = load_model(cfg.model_path)
        check_model(model, cfg)
        self.model = model
        self.layout = ChannelLayout(sample_rate_hz=SAMPLE_RATE_HZ)
        self.stats = ServerStats()
        self.latency_log = LatencyLog(cfg.latency_log)
        self.osc = OscEmitter(cfg.osc, cfg.osc_address, cfg.cue_map)
        self._executor = ThreadPoolExecutor(max_workers=1, thread_name_prefix="classifier")
        self._server: asyncio.AbstractServer | None = None
        self._active: asyncio.Task | None = None
        self._record = None

    async def start(self) -> tuple[str, int]:
        """Warm up the model, bind sockets; returns the bound ingest (host, port)."""
        loop = asyncio.get_running_loop()
        await loop.run_in_executor(self._executor, warm_up, self.model)
        await self.osc.open()
        if self.cfg.record_path is not None:
            Path(self.cfg.record_path).parent.mkdir(parents=True, exist_ok=True)
            self._record = Path(self.cfg.record_path).open("a", encoding="utf-8")
        host, port = parse_hostport(self.cfg.listen)
        self._server = await asyncio.start_server(self._handle, host, port)
        bound = self._server.sockets[0].getsockname()[:2]
        logger.info(
            f"🚀 Listening for frames on {bound[0]}:{bound[1]} "
            f"(window {self.cfg.window_len}, hop {self.cfg.hop_len} samples)"
        )
        return bound[0], bound[1]

    async def stop(self) -> None:
        if self._server is not None:
            self._server.close()
        if self._active is not None and not self._active.done():
            self._active.cancel()
            with contextlib.suppress(asyncio.CancelledError):
                await self._active
        if self._server is not None:
            await self._server.wait_closed()
            self._server = None
        self.osc.close()
        self.latency_log.close()
        if self._record is not None:
            self._record.close()
            self._record = None
        self._executor.shutdown(wait=True)
        logger.info(f"🛑 Server stopped: {self.stats.windows_classified} windows, {self.stats.windows_dropped} dropped")

    async def _handle(self, reader: asyncio.StreamReader, writer: asyncio.StreamWriter) -> None:
        if self.stats.connected:
            writer.write(b'{"error": "ingest connection already active"}\n')
            await writer.drain()
            writer.close()
            return
        self.stats.connected = True
        self.stats.connections += 1
        self._active = asyncio.current_task()
        peer = writer.get_extra_info("peername")
        logger.info(f"🔌 Ingest connection from {peer}")
        session = self._new_session()
        workers = [
            asyncio.create_task(self._classify_loop(session)),
            asyncio.create_task(self._emit_loop(session, writer)),
        ]
        try:
            await self._ingest(reader, session)
            await asyncio.gather(*workers)
        except (ConnectionError, asyncio.IncompleteReadError) as e:
            logger.warning(f"⚠️ Ingest connection lost: {e}")
        finally:
            for task in workers:
                task.cancel()
            await asyncio.gather(*workers, return_exceptions=True)
            self.stats.connected = False
            with contextlib.suppress(ConnectionError):
                writer.close()
                await writer.wait_closed()
            logger.info(f"🔌 Connection closed ({self.stats.events_emitted} events emitted)")

    def _new_session(self) -> _Session:
        stream_stats = StreamStats()
        return _Session(
            stream_stats=stream_stats,
            reorder=ReorderBuffer(self.cfg.reorder_ms, stream_stats),
            assembler=StreamAssembler(self.layout, self.cfg.gap_tolerance_ms, None, stream_stats),
            scheduler=WindowScheduler(self.cfg.window_len, self.cfg.hop_len),
        )

    async def _ingest(self, reader: asyncio.StreamReader, session: _Session) -> None:
        while True:
            line = await reader.readline()
            if not line:
                break
            received_at = time.perf_counter()
            self.stats.lines += 1
            if not line.strip():
                continue
            try:
                frame = SensorFrame.model_validate_json(line)
            except ValidationError:
                self.stats.malformed += 1
                if self.stats.malformed == 1 or self.stats.malformed % 100 == 0:
                    logger.warning(f"⚠️ Skipped malformed ingest line; {self.stats.malformed} so far")
                continue
            if self._record is not None:
                self._record.write(json.dumps(frame.to_wire()) + "\n")
            scheduled_before = self.stats.windows_scheduled
            for released in session.reorder.push(frame):
                self._advance(session, session.assembler.push(released), received_at)
            self._sync_counters(session)
            if self.stats.windows_scheduled != scheduled_before:
                # readline() does not yield while data is buffered
                await asyncio.sleep(0)
        received_at = time.perf_counter()
        for released in session.reorder.flush():
            self._advance(session, session.assembler.push(released), received_at)
        self._advance(session, session.assembler.flush(), received_at)
        self._sync_counters(session)
        session.ingest_done = True
        session.wakeup.set()

    def _advance(self, session: _Session, rows, received_at: float) -> None:
        for row in rows:
            scheduled = session.scheduler.push(row)
            if scheduled is None:
                continue
            self.stats.windows_scheduled += 1
            if len(session.pending) >= self.cfg.ring_capacity:
                dropped = session.pending.popleft()
                self.stats.windows_dropped += 1
                logger.warning(
                    f"⚠️ Classifier behind: dropped window {dropped.scheduled.index} "
                    f"({self.stats.windows_dropped} dropped so far)"
                )
            session.pending.append(_Pending(scheduled, received_at))
            session.wakeup.set()

    def _sync_counters(self, session: _Session) -> None:
        self.stats.frames_accepted = session.stream_stats.accepted
        self.stats.frames_rejected = session.stream_stats.rejected

    async def _classify_loop(self, session: _Session) -> None:
        loop = asyncio.get_running_loop()
        while True:
            if not session.pending:
                if session.ingest_done:
                    break
                session.wakeup.clear()
                await session.wakeup.wait()
                continue
            item = session.pending.popleft()
            prediction = await loop.run_in_executor(self._executor, classify, self.model, item.scheduled.window)
            self.stats.windows_classified += 1
            await session.events.put((item, prediction))
        await session.events.put(None)

    async def _emit_loop(self, session: _Session, writer: asyncio.StreamWriter) -> None:
        while True:
            entry = await session.events.get()
            if entry is None:
                break
            item, prediction = entry
            self._emit(item, prediction, writer)
            await writer.drain()

    def _emit(self, item: _Pending, prediction: Prediction, writer: asyncio.StreamWriter) -> TriggerEvent:
        window = item.scheduled.window
        probs = [0.0] * NUM_CLASSES
        for column, cls in enumerate(self.model.classes):
            probs[int(cls)] = prediction.probabilities[column]
        probability = probs[prediction.label]
        triggered = probability >= self.cfg.probability_floor
        if triggered:
            self.osc.send(prediction.label, probability)
            self.stats.triggers_sent += 1
        latency_ms = (time.perf_counter() - item.received_at) * 1000.0
        event = TriggerEvent(
            t_ms=item.scheduled.t_end_ms,
            label=prediction.label,
            probability=probability,
            probs=probs,
            latency_ms=max(latency_ms, 0.0),
            stale=window.stale,
            window=item.scheduled.index,
            triggered=triggered,
        )
        writer.write((json.dumps(event.to_wire()) + "\n").encode("utf-8"))
        self.stats.events_emitted += 1
        self.stats.stale_events += int(window.stale)
        self.stats.last_prediction = {
            "window": event.window,
            "label": event.label,
            "class_name": self._class_name(event.label),
            "probability": probability,
        }
        self.latency_log.append(LatencyRecord(
            window=event.window,
            t_ms=event.t_window_end_ms,
            label=event.label,
            latency_ms=event.latency_ms,
            infer_ms=prediction.infer_micros / 1000.0,
            dropped=self.stats.windows_dropped,
        ))
        logger.debug(f"🎯 window {event.window}: label {event.label} p={probability:.3f} {latency_ms:.2f} ms")
        return event

    def _class_name(self, label: int) -> str:
        names = self.model.class_names
        return names[label] if label < len(names) else str(label)


class _EmbeddedUvicorn:
    """uvicorn.Server sharing the serve() event loop; signals stay with serve()."""

    @staticmethod
    def build(app, http: str):
        import uvicorn

        class Server(uvicorn.Server):
            def install_signal_handlers(self) -> None:
                pass

            @contextlib.contextmanager
            def capture_signals(self):
                yield

        host, port = parse_hostport(http)
        return Server(uvicorn.Config(app, host=host, port=port, log_level="warning"))


async def run_server(cfg: ServerConfig, model: RidgeModel | None = None, stop: asyncio.Event | None = None) -> ServerStats:
    """Run until `stop` is set (or SIGINT/SIGTERM); returns the final counters."""
    stop = stop or asyncio.Event()
    server = MotionServer(cfg, model)
    await server.start()
    loop = asyncio.get_running_loop()
    for sig in (signal.SIGINT, signal.SIGTERM):
        with contextlib.suppress(NotImplementedError, RuntimeError):
            loop.add_signal_handler(sig, stop.set)
    http_task = None
    http_server = None
    if cfg.http:
        from ..main import create_app

        http_server = _EmbeddedUvicorn.build(create_app(server), cfg.http)
        http_task = asyncio.create_task(http_server.serve())
        logger.info(f"🌐 Status API on http://{cfg.http}")
    try:
        await stop.wait()
    finally:
        if http_server is not None:
            http_server.should_exit = True
            await http_task
        await server.stop()
        for sig in (signal.SIGINT, signal.SIGTERM):
            with contextlib.suppress(NotImplementedError, RuntimeError):
                loop.remove_signal_handler(sig)
    return server.stats


def serve(cfg: ServerConfig) -> ServerStats:
    return asyncio.run(run_server(cfg))


def offline_predictions(model: RidgeModel, frames, cfg: ServerConfig):
    """Batch path over the same frames: assemble_stream -> segment -> predict."""
    layout = ChannelLayout(sample_rate_hz=SAMPLE_RATE_HZ)
    stream = assemble_stream(frames, layout, cfg.gap_tolerance_ms)
    windows = segment(stream, cfg.window_len, cfg.hop_len)
    labels, proba = predict_windows(model, windows)
    return windows, labels, proba


async def loopback(model: RidgeModel, frames, cfg: ServerConfig, speed: float = math.inf):
    """Serve on an ephemeral loopback port and replay frames into it."""
    from .replay import replay_frames

    server = MotionServer(cfg.model_copy(update={"listen": "127.0.0.1:0"}), model)
    host, port = await server.start()
    try:
        result = await replay_frames(frames, f"{host}:{port}", speed)
    finally:
        await server.stop()
    return result, server

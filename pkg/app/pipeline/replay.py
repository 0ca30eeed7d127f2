"""Replay a raw frame recording into a running server with its original timing."""
import asyncio
import json
import logging
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

from pydantic import ValidationError

from .dataset import load_recording
from .errors import RuntimeFailure, UsageError
from .models import SensorFrame, TriggerEvent
from .settings import parse_hostport

logger = logging.getLogger(__name__)

CONNECT_RETRIES = 3
RETRY_DELAY_S = 0.5
DRAIN_EVERY = 256


@dataclass
class ReplayResult:
    frames_sent: int = 0
    events: list[TriggerEvent] = field(default_factory=list)
    wall_s: float = 0.0
    max_pacing_error_ms: float = 0.0

    @property
    def labels(self) -> list[int]:
        return [e.label for e in sorted(self.events, key=lambda e: e.window)]


async def _connect(host: str, port: int) -> tuple[asyncio.StreamReader, asyncio.StreamWriter]:
    last_error: OSError | None = None
    attempts = CONNECT_RETRIES + 1
    for attempt in range(1, attempts + 1):
        try:
            return await asyncio.open_connection(host, port)
        except OSError as e:
            last_error = e
            logger.warning(f"⚠️ Connect to {host}:{port} failed (attempt {attempt}/{attempts}): {e}")
            if attempt < attempts:
                await asyncio.sleep(RETRY_DELAY_S)
    raise RuntimeFailure(f"could not connect to {host}:{port} after {CONNECT_RETRIES} retries: {last_error}")


async def _collect(reader: asyncio.StreamReader, result: ReplayResult) -> None:
    while True:
        line = await reader.readline()
        if not line:
            return
        try:
            result.events.append(TriggerEvent.model_validate_json(line))
        except ValidationError:
            logger.warning(f"⚠️ Server sent a non-event line: {line[:80]!r}")


async def replay_frames(frames: Sequence[SensorFrame], target: str, speed: float = 1.0) -> ReplayResult:
    """Send frames paced at (t_i - t_0) / speed; speed=inf sends as fast as the socket allows.

    Half-closes the socket after the last frame and returns once the server has
    sent every event and closed its side.
    """
    if not speed > 0:
        raise UsageError("replay speed must be > 0")
    result = ReplayResult()
    if not frames:
        logger.info("📭 Empty recording, nothing to replay")
        return result
    host, port = parse_hostport(target)
    reader, writer = await _connect(host, port)
    collector = asyncio.create_task(_collect(reader, result))
    loop = asyncio.get_running_loop()
    t0 = frames[0].t_ms
    started = loop.time()
    try:
        for frame in frames:
            if math.isfinite(speed):
                due = started + (frame.t_ms - t0) / 1000.0 / speed
                delay = due - loop.time()
                if delay > 0:
                    await asyncio.sleep(delay)
                result.max_pacing_error_ms = max(result.max_pacing_error_ms, (loop.time() - due) * 1000.0)
            writer.write((json.dumps(frame.to_wire()) + "\n").encode("utf-8"))
            result.frames_sent += 1
            if math.isfinite(speed) or result.frames_sent % DRAIN_EVERY == 0:
                await writer.drain()
        await writer.drain()
        writer.write_eof()
        await collector
    except ConnectionError as e:
        raise RuntimeFailure(f"connection to {target} lost during replay: {e}") from e
    finally:
        if not collector.done():
            collector.cancel()
        writer.close()
        try:
            await writer.wait_closed()
        except ConnectionError:
            pass
    result.wall_s = loop.time() - started
    logger.info(
        f"✅ Replayed {result.frames_sent} frames in {result.wall_s:.2f} s, "
        f"received {len(result.events)} events"
    )
    return result


def replay(recording: str | Path, target: str, speed: float = 1.0) -> ReplayResult:
    return asyncio.run(replay_frames(load_recording(recording), target, speed))

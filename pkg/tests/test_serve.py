import asyncio
import json
import math
import socket
import time

import numpy as np
import pytest
from pythonosc.osc_message import OscMessage

from app.pipeline import serve as serve_mod
from app.pipeline.errors import ShapeMismatchError
from app.pipeline.latency import read_log
from app.pipeline.serve import MotionServer, check_model, loopback, offline_predictions
from app.pipeline.settings import ServerConfig
from app.pipeline.synth import inject_transitions


@pytest.fixture(scope="module")
def recording(small_ds):
    return inject_transitions(small_ds, 0.0, max_windows=6)


@pytest.fixture
def osc_sink():
    sink = socket.socket(socket.AF_INET, socket.SOCK_DGRAM)
    sink.bind(("127.0.0.1", 0))
    sink.setblocking(False)
    yield sink
    sink.close()


def drain_datagrams(sink):
    datagrams = []
    while True:
        try:
            datagrams.append(sink.recv(1024))
        except BlockingIOError:
            return datagrams


def config(sink=None, **kwargs):
    osc = f"127.0.0.1:{sink.getsockname()[1]}" if sink is not None else "127.0.0.1:9"
    return ServerConfig(osc=osc, ring_capacity=10_000, **kwargs)


def test_loopback_matches_offline_pipeline(small_model, recording, osc_sink, tmp_path):
    cfg = config(osc_sink, latency_log=tmp_path / "latency.ndjson")
    result, server = asyncio.run(loopback(small_model, recording.frames, cfg))
    windows, labels, proba = offline_predictions(small_model, recording.frames, cfg)

    assert len(windows) == 6
    assert result.frames_sent == len(recording.frames)
    assert [e.window for e in result.events] == list(range(6))
    assert result.labels == labels.tolist()
    for event, row in zip(sorted(result.events, key=lambda e: e.window), proba):
        np.testing.assert_allclose(event.probs, row, atol=1e-9)
        assert event.probability == max(event.probs)
        assert abs(sum(event.probs) - 1.0) <= 1e-9
        assert event.latency_ms >= 0.0
        assert not event.stale
    assert server.stats.windows_dropped == 0
    assert server.stats.malformed == 0
    assert len(read_log(tmp_path / "latency.ndjson")) == 6

    datagrams = drain_datagrams(osc_sink)
    assert len(datagrams) == server.stats.triggers_sent == 6
    assert [OscMessage(d).params[0] for d in datagrams] == labels.tolist()


def test_event_times_are_window_ends(small_model, recording):
    cfg = config()
    result, _ = asyncio.run(loopback(small_model, recording.frames, cfg))
    ends = [e.t_window_end_ms for e in sorted(result.events, key=lambda e: e.window)]
    assert ends[0] == pytest.approx(95 * 1000.0 / 48.0)
    assert np.diff(ends) == pytest.approx(2000.0)


def test_overlapping_hop(small_model, recording):
    cfg = config(hop_seconds=0.5)
    result, _ = asyncio.run(loopback(small_model, recording.frames, cfg))
    _, labels, _ = offline_predictions(small_model, recording.frames, cfg)
    assert len(labels) == (6 * 96 - 96) // 24 + 1
    assert result.labels == labels.tolist()


def test_probability_floor_only_gates_osc(small_model, recording, osc_sink):
    cfg = config(osc_sink, probability_floor=1.0)
    result, server = asyncio.run(loopback(small_model, recording.frames, cfg))
    assert len(result.events) == 6
    assert not any(e.triggered for e in result.events)
    assert server.stats.triggers_sent == 0
    assert drain_datagrams(osc_sink) == []


def test_slow_classifier_drops_oldest_windows(small_model, recording, monkeypatch):
    real = serve_mod.classify

    def slow(model, window):
        time.sleep(0.05)
        return real(model, window)

    monkeypatch.setattr(serve_mod, "classify", slow)
    cfg = ServerConfig(osc="127.0.0.1:9", ring_capacity=1, hop_seconds=0.0625)
    result, server = asyncio.run(loopback(small_model, recording.frames, cfg))
    stats = server.stats
    assert stats.windows_dropped > 0
    assert len(result.events) + stats.windows_dropped == stats.windows_scheduled
    indices = [e.window for e in result.events]
    assert indices == sorted(indices)
    assert indices[-1] == stats.windows_scheduled - 1


def test_silent_sensor_marks_events_stale(small_model, recording):
    # sensor 3 goes quiet for rows 150..250 (about two seconds)
    frames = [
        f for f in recording.frames
        if not (f.sensor_id == 3 and 150 * 1000.0 / 48.0 <= f.t_ms < 250 * 1000.0 / 48.0)
    ]
    result, server = asyncio.run(loopback(small_model, frames, config()))
    stale = {e.window for e in result.events if e.stale}
    assert stale == {1, 2}
    assert server.stats.stale_events == 2


def _send_lines(port, lines):
    async def run():
        reader, writer = await asyncio.open_connection("127.0.0.1", port)
        for line in lines:
            writer.write(line.encode() + b"\n")
        await writer.drain()
        writer.write_eof()
        events = []
        while line := await reader.readline():
            events.append(json.loads(line))
        writer.close()
        return events
    return run()


def test_malformed_lines_are_counted_and_skipped(small_model, recording):
    async def run():
        server = MotionServer(config(listen="127.0.0.1:0"), small_model)
        _, port = await server.start()
        lines = ["not json", '{"t_ms": 1.0}', ""]
        lines += [json.dumps(f.to_wire()) for f in recording.frames[: 4 * 96]]
        try:
            events = await _send_lines(port, lines)
        finally:
            await server.stop()
        return server, events

    server, events = asyncio.run(run())
    assert server.stats.malformed == 2
    assert server.stats.frames_accepted == 4 * 96
    assert len(events) == 1


def test_second_connection_is_refused(small_model):
    async def run():
        server = MotionServer(config(listen="127.0.0.1:0"), small_model)
        _, port = await server.start()
        try:
            _, first = await asyncio.open_connection("127.0.0.1", port)
            await asyncio.sleep(0.05)
            reader, second = await asyncio.open_connection("127.0.0.1", port)
            reply = await asyncio.wait_for(reader.readline(), 2.0)
            second.close()
            first.close()
        finally:
            await server.stop()
        return server, reply

    server, reply = asyncio.run(run())
    assert b"already active" in reply
    assert server.stats.connections == 1


def test_model_shape_checked_at_startup(small_model):
    with pytest.raises(ShapeMismatchError):
        MotionServer(ServerConfig(window_seconds=1.0, hop_seconds=1.0), small_model)
    with pytest.raises(ShapeMismatchError):
        check_model(small_model, ServerConfig(window_seconds=4.0))


def test_missing_model_path():
    with pytest.raises(ShapeMismatchError, match="no model"):
        MotionServer(ServerConfig())


def test_model_loaded_from_path(small_model, tmp_path):
    from app.pipeline.model_io import save_model

    path = save_model(small_model, tmp_path / "m.mrmd")
    server = MotionServer(ServerConfig(model_path=path))
    assert server.model.rocket_params == small_model.rocket_params


def test_run_server_stops_on_event(small_model, recording):
    async def run():
        stop = asyncio.Event()
        task = asyncio.create_task(
            serve_mod.run_server(config(listen="127.0.0.1:0"), small_model, stop)
        )
        await asyncio.sleep(0.5)
        stop.set()
        return await asyncio.wait_for(task, 10.0)

    stats = asyncio.run(run())
    assert stats.connections == 0


@pytest.mark.slow
def test_loopback_latency_under_50ms(recording, small_ds):
    from app.pipeline.settings import AugmentConfig, TrainSettings
    from app.pipeline.training import train_model

    model, _ = train_model(small_ds, TrainSettings(), AugmentConfig(copies=0))
    result, server = asyncio.run(loopback(model, recording.frames, config(), speed=1.0))
    summary = server.latency_log.summary()
    assert summary.count == 6
    assert summary.latency_p95_ms < 50.0
    assert result.max_pacing_error_ms < 50.0
    assert math.isfinite(result.wall_s)

"""WebSocket side of the streaming service.

Speaks the binary protocol's frames as JSON so a browser can run live
trials: `{"type": "sample_batch", "t_us": ..., "values": [...]}` and
friends. A UI client sends hello (with a trial config), then breathing
samples; the server returns modality feedback at 10 Hz, a running
correlation score at least twice per second of stream time, and a final
trial result on bye. All scoring happens here, server-side.

The same endpoint serves the static app page over plain HTTP, and
frames seen by a TCP receiver can be broadcast to WebSocket observers.
"""

from __future__ import annotations

import asyncio
import json
import logging
import socket
import threading
from pathlib import Path
from typing import Optional

import numpy as np
from websockets.asyncio.server import serve
from websockets.datastructures import Headers
from websockets.exceptions import ConnectionClosed
from websockets.http11 import Response

from . import dsp, patterns, session, wire
from .errors import BreezeError, DegenerateSeries, WireError

log = logging.getLogger("breeze.wsbridge")

SCORE_INTERVAL_S = 0.5
SCORE_MIN_S = 5.0

_CONTENT_TYPES = {
    ".html": "text/html; charset=utf-8",
    ".js": "text/javascript; charset=utf-8",
    ".css": "text/css; charset=utf-8",
    ".json": "application/json",
    ".svg": "image/svg+xml",
    ".png": "image/png",
    ".ico": "image/x-icon",
}


def frame_to_json(frame: wire.Frame, direction: Optional[str] = None) -> str:
    doc: dict = {"stream_id": frame.stream_id, "t_us": frame.t_us}
    if direction is not None:
        doc["dir"] = direction
    if frame.frame_type == wire.T_HELLO:
        doc["type"] = "hello"
    elif frame.frame_type == wire.T_ACK:
        doc["type"] = "ack"
    elif frame.frame_type == wire.T_SAMPLE_BATCH:
        doc["type"] = "sample_batch"
        doc["values"] = [float(v) for v in wire.batch_values(frame)]
    elif frame.frame_type == wire.T_MARKER:
        doc["type"] = "marker"
        doc["label"] = frame.payload.decode("utf-8")
    else:
        doc["type"] = "bye"
    return json.dumps(doc)


def json_to_frame(text: str) -> tuple[wire.Frame, dict]:
    """Parse a JSON message into a frame plus any extra fields (config)."""
    doc = json.loads(text)
    ftype = {"hello": wire.T_HELLO, "ack": wire.T_ACK,
             "sample_batch": wire.T_SAMPLE_BATCH, "marker": wire.T_MARKER,
             "bye": wire.T_BYE}.get(doc.get("type"))
    if ftype is None:
        raise wire.UnknownType(f"unknown message type {doc.get('type')!r}")
    stream_id = int(doc.get("stream_id", wire.SAMPLE_STREAM_ID))
    t_us = int(doc.get("t_us", 0))
    if ftype == wire.T_SAMPLE_BATCH:
        frame = wire.sample_batch(stream_id, t_us, doc.get("values", []))
    elif ftype == wire.T_MARKER:
        frame = wire.marker(t_us, doc.get("label", ""), stream_id)
    else:
        frame = wire.Frame(ftype, stream_id, t_us)
    return frame, doc


class TrialScorer:
    """Server-side scoring state for one live trial."""

    def __init__(self, pattern_name: str, sample_rate_hz: float,
                 duration_s: float, seed: int) -> None:
        self.spec = patterns.compose(patterns.parse_traits(pattern_name))
        self.rate = sample_rate_hz
        self.duration_s = duration_s
        self.seed = seed
        self.target = patterns.synthesize(self.spec, duration_s,
                                          sample_rate_hz, seed=seed)
        self.samples: list[float] = []
        self.pipeline = wire.FeedbackPipeline(sample_rate_hz, 10.0)
        self._next_score_n = int(round(SCORE_MIN_S * sample_rate_hz))

    @property
    def elapsed_s(self) -> float:
        return len(self.samples) / self.rate

    def push(self, values: np.ndarray) -> tuple[list, list[dict]]:
        """Returns (feedback triples, score docs) due after these samples."""
        self.samples.extend(float(v) for v in values)
        feedback = self.pipeline.push(np.asarray(values, dtype=np.float64))
        scores = []
        step = int(round(SCORE_INTERVAL_S * self.rate))
        while len(self.samples) >= self._next_score_n:
            n = min(self._next_score_n, len(self.target.samples))
            doc = {"type": "score", "t_s": self._next_score_n / self.rate,
                   "r": None, "lag_s": None}
            try:
                x = np.asarray(self.samples[:n])
                r, lag = dsp.best_lag_correlation(self.target.samples[:n], x,
                                                  self.rate)
                doc["r"] = r
                doc["lag_s"] = lag
            except (DegenerateSeries, BreezeError):
                pass
            scores.append(doc)
            self._next_score_n += step
        return feedback, scores

    def finalize(self) -> Optional[session.TrialResult]:
        n = int(round(self.duration_s * self.rate))
        if len(self.samples) < n:
            return None
        try:
            return session.run_trial(self.spec, np.asarray(self.samples),
                                     self.rate, self.duration_s, seed=self.seed)
        except DegenerateSeries:
            return None


class Bridge:
    """One serving process: WS endpoint, optional TCP port, static page."""

    def __init__(self, static_dir: Optional[Path] = None) -> None:
        self.static_dir = static_dir
        self.observers: set = set()
        self.loop: Optional[asyncio.AbstractEventLoop] = None

    # -- observer fan-out ---------------------------------------------------

    def broadcast_threadsafe(self, direction: str, frame: wire.Frame) -> None:
        if self.loop is None or not self.observers:
            return
        text = frame_to_json(frame, direction)
        self.loop.call_soon_threadsafe(self._broadcast, text)

    def _broadcast(self, text: str) -> None:
        for ws in list(self.observers):
            coro = ws.send(text)
            asyncio.ensure_future(coro)

    # -- static page over plain HTTP -----------------------------------------

    def process_request(self, connection, request):
        if "Upgrade" in request.headers.get("Connection", "") or \
                request.headers.get("Upgrade", "").lower() == "websocket":
            return None
        path = request.path.split("?", 1)[0]
        if self.static_dir is None:
            return connection.respond(404, "no static app configured\n")
        name = "index.html" if path in ("", "/") else path.lstrip("/")
        target = (self.static_dir / name).resolve()
        try:
            target.relative_to(self.static_dir.resolve())
        except ValueError:
            return connection.respond(403, "forbidden\n")
        if not target.is_file():
            return connection.respond(404, "not found\n")
        body = target.read_bytes()
        ctype = _CONTENT_TYPES.get(target.suffix, "application/octet-stream")
        headers = Headers([("Content-Type", ctype),
                           ("Content-Length", str(len(body)))])
        return Response(200, "OK", headers, body)

    # -- WS trial protocol ----------------------------------------------------

    async def handle(self, ws) -> None:
        path = ws.request.path.split("?", 1)[0] if ws.request else "/"
        if path == "/observe":
            self.observers.add(ws)
            try:
                await ws.wait_closed()
            finally:
                self.observers.discard(ws)
            return
        await self._handle_trial(ws)

    async def _handle_trial(self, ws) -> None:
        scorer: Optional[TrialScorer] = None
        try:
            async for text in ws:
                try:
                    frame, doc = json_to_frame(text)
                except (json.JSONDecodeError, WireError, ValueError) as exc:
                    await ws.send(json.dumps({"type": "error",
                                              "message": str(exc)}))
                    continue
                if frame.frame_type == wire.T_HELLO:
                    cfg = doc.get("config", {})
                    try:
                        scorer = TrialScorer(
                            pattern_name=cfg.get("pattern", "Baseline"),
                            sample_rate_hz=float(cfg.get("sample_rate_hz", 24.0)),
                            duration_s=float(cfg.get("duration_s", 40.0)),
                            seed=int(cfg.get("seed", 0)))
                    except BreezeError as exc:
                        await ws.send(json.dumps({"type": "error",
                                                  "message": str(exc)}))
                        continue
                    await ws.send(json.dumps(
                        {"type": "ack", "stream_id": frame.stream_id,
                         "t_us": frame.t_us,
                         "target": vars(scorer.spec)}))
                elif frame.frame_type == wire.T_SAMPLE_BATCH:
                    if scorer is None:
                        await ws.send(json.dumps(
                            {"type": "error", "message": "sample batch before hello"}))
                        continue
                    feedback, scores = scorer.push(wire.batch_values(frame))
                    for t_us, (b, g, h) in feedback:
                        await ws.send(json.dumps(
                            {"type": "sample_batch",
                             "stream_id": wire.FEEDBACK_STREAM_ID,
                             "t_us": t_us, "values": [b, g, h]}))
                    for doc_ in scores:
                        await ws.send(json.dumps(doc_))
                elif frame.frame_type == wire.T_MARKER:
                    log.info("marker %r at %d us", doc.get("label"), frame.t_us)
                elif frame.frame_type == wire.T_BYE:
                    if scorer is not None:
                        for t_us, (b, g, h) in scorer.pipeline.flush():
                            await ws.send(json.dumps(
                                {"type": "sample_batch",
                                 "stream_id": wire.FEEDBACK_STREAM_ID,
                                 "t_us": t_us, "values": [b, g, h]}))
                    result = scorer.finalize() if scorer else None
                    payload = {"type": "trial_result",
                               "aborted": result is None,
                               "result": result.to_dict() if result else None}
                    await ws.send(json.dumps(payload))
                    await ws.send(json.dumps({"type": "bye",
                                              "stream_id": frame.stream_id,
                                              "t_us": frame.t_us}))
                    break
        except ConnectionClosed:
            pass


async def serve_bridge(ws_port: int, tcp_port: Optional[int] = None,
                       static_dir: Optional[Path] = None,
                       host: str = "127.0.0.1",
                       ready: Optional[threading.Event] = None,
                       stop: Optional[asyncio.Event] = None) -> None:
    """Run the WS endpoint (and optional TCP listener) until stopped."""
    bridge = Bridge(static_dir=static_dir)
    bridge.loop = asyncio.get_running_loop()
    tcp_server = None
    tcp_threads: list[threading.Thread] = []

    if tcp_port is not None:
        tcp_server = socket.create_server((host, tcp_port))
        tcp_server.settimeout(0.25)

        def tcp_accept_loop() -> None:
            while stop is None or not stop.is_set():
                try:
                    conn, _ = tcp_server.accept()
                except socket.timeout:
                    continue
                except OSError:
                    break
                t = threading.Thread(
                    target=_tcp_session, args=(conn, bridge), daemon=True)
                t.start()
                tcp_threads.append(t)

        accept_thread = threading.Thread(target=tcp_accept_loop, daemon=True)
        accept_thread.start()

    async with serve(bridge.handle, host, ws_port,
                     process_request=bridge.process_request):
        log.info("ws listening on %s:%d", host, ws_port)
        if tcp_port is not None:
            log.info("tcp listening on %s:%d", host, tcp_port)
        if ready is not None:
            ready.set()
        if stop is None:
            await asyncio.Future()
        else:
            await stop.wait()
    if tcp_server is not None:
        tcp_server.close()


def _tcp_session(conn: socket.socket, bridge: Bridge) -> None:
    try:
        wire.run_receiver(conn, mirror=bridge.broadcast_threadsafe)
    except BreezeError as exc:
        log.warning("tcp session ended: %s", exc)

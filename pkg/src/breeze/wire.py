"""Binary streaming protocol for sensor samples and feedback frames.

Frame layout (little-endian), 17-byte header followed by the payload:

    magic     4 bytes  b"BRZ1"
    type      u8       1 hello / 2 ack / 3 sample_batch / 4 marker / 5 bye
    stream_id u16
    t_us      u64      sender stream clock, microseconds
    len       u16      payload byte count

Sample batches carry float32 values. Markers carry short UTF-8 labels.
The pair-session runner wires a sender and a receiver together over any
stream socket: samples flow one way in 125 ms batches, per-modality
feedback triples flow back at 10 Hz, and both sides keep their outgoing
queue bounded by dropping the oldest data frames when a peer stalls.
"""

from __future__ import annotations

import bisect
import collections
import socket
import struct
import threading
import time
from dataclasses import dataclass, field
from typing import Callable, Optional, Sequence

import numpy as np

from . import dsp, encoders
from .errors import (BadMagic, HandshakeTimeout, PayloadTooLarge,
                     ProtocolViolation, Truncated, UnknownType)

MAGIC = b"BRZ1"
HEADER = struct.Struct("<4sBHQH")
HEADER_SIZE = HEADER.size  # 17
MAX_PAYLOAD = 65535
MARKER_LABEL_LIMIT = 512

T_HELLO = 1
T_ACK = 2
T_SAMPLE_BATCH = 3
T_MARKER = 4
T_BYE = 5
_VALID_TYPES = frozenset((T_HELLO, T_ACK, T_SAMPLE_BATCH, T_MARKER, T_BYE))

SAMPLE_STREAM_ID = 1
FEEDBACK_STREAM_ID = 2

# how far a batch clock may step backwards before the receiver calls foul
REORDER_TOLERANCE_US = 1_000_000


@dataclass(frozen=True)
class Frame:
    frame_type: int
    stream_id: int
    t_us: int
    payload: bytes = b""


def encode_frame(frame: Frame) -> bytes:
    if frame.frame_type not in _VALID_TYPES:
        raise UnknownType(f"unknown frame type {frame.frame_type}")
    n = len(frame.payload)
    if n > MAX_PAYLOAD:
        raise PayloadTooLarge(f"payload {n} bytes exceeds {MAX_PAYLOAD}")
    if frame.frame_type == T_MARKER and n > MARKER_LABEL_LIMIT:
        raise PayloadTooLarge(f"marker label {n} bytes exceeds {MARKER_LABEL_LIMIT}")
    if frame.frame_type == T_SAMPLE_BATCH and n % 4 != 0:
        raise ProtocolViolation(f"sample batch payload length {n} not a multiple of 4")
    head = HEADER.pack(MAGIC, frame.frame_type, frame.stream_id,
                       frame.t_us, n)
    return head + frame.payload


def decode_frame(buf: bytes) -> tuple[Frame, int]:
    """Decode one frame from the head of buf; returns (frame, bytes used)."""
    if len(buf) < HEADER_SIZE:
        raise Truncated(HEADER_SIZE, len(buf))
    magic, ftype, stream_id, t_us, n = HEADER.unpack_from(buf)
    if magic != MAGIC:
        raise BadMagic(f"bad magic {magic!r}")
    if ftype not in _VALID_TYPES:
        raise UnknownType(f"unknown frame type {ftype}")
    total = HEADER_SIZE + n
    if len(buf) < total:
        raise Truncated(total, len(buf))
    payload = bytes(buf[HEADER_SIZE:total])
    if ftype == T_SAMPLE_BATCH and n % 4 != 0:
        raise ProtocolViolation(f"sample batch payload length {n} not a multiple of 4")
    if ftype == T_MARKER and n > MARKER_LABEL_LIMIT:
        raise PayloadTooLarge(f"marker label {n} bytes exceeds {MARKER_LABEL_LIMIT}")
    return Frame(ftype, stream_id, t_us, payload), total


def sample_batch(stream_id: int, t_us: int, values: Sequence[float]) -> Frame:
    payload = np.asarray(values, dtype="<f4").tobytes()
    return Frame(T_SAMPLE_BATCH, stream_id, t_us, payload)


def batch_values(frame: Frame) -> np.ndarray:
    if frame.frame_type != T_SAMPLE_BATCH:
        raise ProtocolViolation("not a sample batch frame")
    return np.frombuffer(frame.payload, dtype="<f4").astype(np.float64)


def marker(t_us: int, label: str, stream_id: int = SAMPLE_STREAM_ID) -> Frame:
    return Frame(T_MARKER, stream_id, t_us, label.encode("utf-8"))


class FrameReader:
    """Incremental decoder for a byte stream arriving in arbitrary chunks."""

    def __init__(self) -> None:
        self._buf = bytearray()

    def feed(self, data: bytes) -> list[Frame]:
        self._buf.extend(data)
        out: list[Frame] = []
        while True:
            try:
                frame, used = decode_frame(bytes(self._buf))
            except Truncated:
                break
            del self._buf[:used]
            out.append(frame)
        return out

    @property
    def pending_bytes(self) -> int:
        return len(self._buf)


class _SendQueue:
    """Bounded outgoing queue. Data frames are droppable, control is not.

    Two full-queue policies for data frames: block the producer until
    space frees up (lossless, right for local pipes), or evict the
    oldest droppable entry and count it (right for realtime streams
    where stalling the clock is worse than losing a batch). Control
    frames are always admitted so the handshake and shutdown can't be
    starved by backpressure.
    """

    def __init__(self, limit: int, shed: bool) -> None:
        self.limit = limit
        self.shed = shed
        self._items: collections.deque = collections.deque()
        self._cv = threading.Condition()
        self._closed = False
        self.dropped = 0
        self.peak = 0

    def put(self, frame: Frame) -> None:
        droppable = frame.frame_type == T_SAMPLE_BATCH
        with self._cv:
            if droppable and not self.shed:
                while len(self._items) >= self.limit and not self._closed:
                    self._cv.wait(0.05)
            if self._closed:
                return
            if droppable and self.shed and len(self._items) >= self.limit:
                for i, (_, d) in enumerate(self._items):
                    if d:
                        del self._items[i]
                        self.dropped += 1
                        break
                else:
                    self.dropped += 1
                    return
            self._items.append((frame, droppable))
            self.peak = max(self.peak, len(self._items))
            self._cv.notify_all()

    def get(self, timeout: float) -> Optional[Frame]:
        with self._cv:
            if not self._items:
                self._cv.wait(timeout)
            if not self._items:
                return None
            frame, _ = self._items.popleft()
            self._cv.notify_all()
            return frame

    def close(self) -> None:
        with self._cv:
            self._closed = True
            self._cv.notify_all()


@dataclass
class WireConfig:
    sample_rate_hz: float = 24.0
    feedback_rate_hz: float = 10.0
    batch_interval_s: float = 0.125
    handshake_timeout_s: float = 5.0
    queue_limit: int = 256
    realtime: bool = False
    # artificial per-frame processing delay on the receive side, for
    # exercising backpressure in tests
    receiver_delay_s: float = 0.0

    @property
    def batch_samples(self) -> int:
        return max(1, int(round(self.batch_interval_s * self.sample_rate_hz)))


@dataclass
class SenderReport:
    batches_sent: int = 0
    samples_sent: int = 0
    feedback_frames: list[tuple[int, np.ndarray]] = field(default_factory=list)
    latencies_ms: list[float] = field(default_factory=list)
    dropped: int = 0

    def latency_percentiles(self) -> tuple[float, float, float]:
        if not self.latencies_ms:
            return (0.0, 0.0, 0.0)
        arr = np.asarray(self.latencies_ms)
        p = np.percentile(arr, [50, 95, 99])
        return (float(p[0]), float(p[1]), float(p[2]))


@dataclass
class ReceiverReport:
    batches_received: int = 0
    samples_received: int = 0
    feedback_sent: int = 0
    markers: list[tuple[int, str, int]] = field(default_factory=list)
    dropped: int = 0


class FeedbackPipeline:
    """Incoming samples -> (brightness, gain, haptic) triples at 10 Hz.

    Chains breathing extraction, trailing-window normalization and rate
    conversion, then encodes each output instant for all modalities.
    Timestamps count feedback instants on the extracted stream's clock.
    """

    def __init__(self, sample_rate_hz: float, feedback_rate_hz: float) -> None:
        self.feedback_rate_hz = feedback_rate_hz
        self._extractor = dsp.BreathingExtractor(sample_rate_hz)
        self._normalizer: Optional[dsp.SlidingNormalizer] = None
        self._resampler: Optional[dsp.StreamResampler] = None
        self._index = 0

    def _encode(self, values: np.ndarray) -> list[tuple[int, tuple[float, float, float]]]:
        out = []
        for v in values:
            t_us = int(round(self._index / self.feedback_rate_hz * 1e6))
            out.append((t_us, (encoders.visual_brightness(float(v)),
                               encoders.audio_gain(float(v)),
                               encoders.haptic_intensity(float(v)))))
            self._index += 1
        return out

    def push(self, samples: np.ndarray) -> list[tuple[int, tuple[float, float, float]]]:
        ext = self._extractor.push(samples)
        if not len(ext):
            return []
        if self._normalizer is None:
            rate = self._extractor.output_rate_hz
            self._normalizer = dsp.SlidingNormalizer(rate)
            self._resampler = dsp.StreamResampler(rate, self.feedback_rate_hz)
        return self._encode(self._resampler.push(self._normalizer.push(ext)))

    def flush(self) -> list[tuple[int, tuple[float, float, float]]]:
        if self._resampler is None:
            return []
        return self._encode(self._resampler.flush())


class _Endpoint:
    """Reader/writer thread pair over one socket with a bounded queue."""

    def __init__(self, sock: socket.socket, config: WireConfig,
                 on_frame: Callable[[Frame], None],
                 on_sent: Optional[Callable[[Frame], None]] = None) -> None:
        self.sock = sock
        self.config = config
        self.on_frame = on_frame
        self.on_sent = on_sent
        self.queue = _SendQueue(config.queue_limit, shed=config.realtime)
        self.stop = threading.Event()
        self.error: Optional[BaseException] = None
        self._reader = threading.Thread(target=self._read_loop, daemon=True)
        self._writer = threading.Thread(target=self._write_loop, daemon=True)

    def start(self) -> None:
        self.sock.settimeout(0.05)
        self._reader.start()
        self._writer.start()

    def send(self, frame: Frame) -> None:
        self.queue.put(frame)

    def _read_loop(self) -> None:
        reader = FrameReader()
        while not self.stop.is_set():
            try:
                data = self.sock.recv(65536)
            except socket.timeout:
                continue
            except OSError:
                self.stop.set()
                break
            if not data:  # peer closed; unblock anyone waiting on us
                self.stop.set()
                break
            try:
                for frame in reader.feed(data):
                    self.on_frame(frame)
            except BaseException as exc:  # surface protocol errors to the runner
                self.error = exc
                self.stop.set()
                break

    def _send_bytes(self, data: bytes) -> bool:
        # send() with a timeout either accepts >= 1 byte or raises having
        # sent nothing, so retrying after a timeout is safe; sendall is
        # not, since a timeout mid-write loses the partial-send offset
        view = memoryview(data)
        while view and not self.stop.is_set():
            try:
                n = self.sock.send(view)
            except socket.timeout:
                continue
            except OSError:
                return False
            view = view[n:]
        return not view

    def _write_loop(self) -> None:
        while not self.stop.is_set():
            frame = self.queue.get(timeout=0.05)
            if frame is None:
                continue
            if not self._send_bytes(encode_frame(frame)):
                self.stop.set()
                self.queue.close()
                break
            if self.on_sent is not None:
                self.on_sent(frame)

    def drain(self, timeout: float = 5.0) -> None:
        deadline = time.monotonic() + timeout
        while time.monotonic() < deadline:
            with self.queue._cv:
                empty = not self.queue._items
            if empty:
                return
            time.sleep(0.005)

    def close(self) -> None:
        self.stop.set()
        self.queue.close()
        self._reader.join(timeout=2.0)
        self._writer.join(timeout=2.0)
        try:
            self.sock.close()
        except OSError:
            pass


def run_sender(sock: socket.socket, samples: Sequence[float],
               config: Optional[WireConfig] = None,
               markers: Sequence[tuple[float, str]] = ()) -> SenderReport:
    """Stream samples to a peer and collect its feedback frames.

    Markers are (time_s, label) pairs inserted between batches at the
    matching stream time. Latency for a feedback frame is measured from
    the wall-clock send of the last batch at or before its timestamp.
    """
    cfg = config or WireConfig()
    report = SenderReport()
    ack = threading.Event()
    peer_bye = threading.Event()
    sent_t: list[int] = []    # batch t_us in send order
    sent_wall: list[float] = []
    lock = threading.Lock()

    def on_sent(frame: Frame) -> None:
        if frame.frame_type == T_SAMPLE_BATCH and frame.stream_id == SAMPLE_STREAM_ID:
            with lock:
                sent_t.append(frame.t_us)
                sent_wall.append(time.monotonic())

    def on_frame(frame: Frame) -> None:
        if frame.frame_type == T_ACK:
            ack.set()
        elif frame.frame_type == T_SAMPLE_BATCH and frame.stream_id == FEEDBACK_STREAM_ID:
            now = time.monotonic()
            vals = batch_values(frame)
            with lock:
                report.feedback_frames.append((frame.t_us, vals))
                i = bisect.bisect_right(sent_t, frame.t_us)
                if i > 0:
                    report.latencies_ms.append((now - sent_wall[i - 1]) * 1e3)
        elif frame.frame_type == T_BYE:
            peer_bye.set()

    ep = _Endpoint(sock, cfg, on_frame, on_sent=on_sent)
    ep.start()
    try:
        ep.send(Frame(T_HELLO, SAMPLE_STREAM_ID, 0))
        if not ack.wait(cfg.handshake_timeout_s):
            raise HandshakeTimeout(f"no ack within {cfg.handshake_timeout_s} s")

        x = np.asarray(samples, dtype=np.float64)
        step = cfg.batch_samples
        marks = sorted(markers)
        mi = 0
        for start in range(0, len(x), step):
            t_s = start / cfg.sample_rate_hz
            while mi < len(marks) and marks[mi][0] <= t_s:
                ep.send(marker(int(round(marks[mi][0] * 1e6)), marks[mi][1]))
                mi += 1
            t_us = int(round(t_s * 1e6))
            batch = x[start:start + step]
            ep.send(sample_batch(SAMPLE_STREAM_ID, t_us, batch))
            report.batches_sent += 1
            report.samples_sent += len(batch)
            if cfg.realtime:
                time.sleep(cfg.batch_interval_s)
        while mi < len(marks):
            ep.send(marker(int(round(marks[mi][0] * 1e6)), marks[mi][1]))
            mi += 1
        ep.send(Frame(T_BYE, SAMPLE_STREAM_ID, int(round(len(x) / cfg.sample_rate_hz * 1e6))))
        ep.drain()
        peer_bye.wait(cfg.handshake_timeout_s)
        time.sleep(0.05)  # let trailing feedback flush through the reader
        if ep.error is not None:
            raise ep.error
    finally:
        report.dropped = ep.queue.dropped
        ep.close()
    return report


def run_receiver(sock: socket.socket,
                 config: Optional[WireConfig] = None,
                 mirror: Optional[Callable[[str, Frame], None]] = None
                 ) -> ReceiverReport:
    """Consume a sample stream and return modality feedback at 10 Hz.

    Incoming samples run through the breathing extraction chain
    (low-pass + epoch averaging, trailing-window normalization, then
    resampling to the feedback rate) and each feedback instant is sent
    back as a (brightness, gain, haptic) float triple. The optional
    mirror hook sees every frame in arrival/send order, for bridging to
    observers.
    """
    cfg = config or WireConfig()
    report = ReceiverReport()
    done = threading.Event()
    state = {"hello": False, "last_t_us": -1}
    pipeline = FeedbackPipeline(cfg.sample_rate_hz, cfg.feedback_rate_hz)

    ep: _Endpoint

    def emit_feedback(triples) -> None:
        for t_us, (b, g, h) in triples:
            ep.send(sample_batch(FEEDBACK_STREAM_ID, t_us, [b, g, h]))
            report.feedback_sent += 1

    def on_frame(frame: Frame) -> None:
        if cfg.receiver_delay_s > 0:
            time.sleep(cfg.receiver_delay_s)
        if mirror is not None:
            mirror("in", frame)
        if frame.frame_type == T_HELLO:
            state["hello"] = True
            ep.send(Frame(T_ACK, frame.stream_id, frame.t_us))
        elif frame.frame_type == T_SAMPLE_BATCH:
            if not state["hello"]:
                raise ProtocolViolation("sample batch before hello")
            if frame.t_us < state["last_t_us"] - REORDER_TOLERANCE_US:
                raise ProtocolViolation(
                    f"batch clock moved back {state['last_t_us'] - frame.t_us} us")
            state["last_t_us"] = max(state["last_t_us"], frame.t_us)
            vals = batch_values(frame)
            report.batches_received += 1
            report.samples_received += len(vals)
            emit_feedback(pipeline.push(vals))
        elif frame.frame_type == T_MARKER:
            report.markers.append((frame.t_us, frame.payload.decode("utf-8"),
                                   report.samples_received))
        elif frame.frame_type == T_BYE:
            emit_feedback(pipeline.flush())
            ep.send(Frame(T_BYE, frame.stream_id, frame.t_us))
            done.set()

    def on_sent(frame: Frame) -> None:
        if mirror is not None:
            mirror("out", frame)

    ep = _Endpoint(sock, cfg, on_frame, on_sent=on_sent)
    ep.start()
    try:
        deadline = time.monotonic() + cfg.handshake_timeout_s
        while not state["hello"]:
            if ep.error is not None:
                raise ep.error
            if time.monotonic() > deadline:
                raise HandshakeTimeout(f"no hello within {cfg.handshake_timeout_s} s")
            time.sleep(0.01)
        while not done.is_set():
            if ep.error is not None:
                raise ep.error
            if ep.stop.is_set():
                break
            done.wait(0.05)
        ep.drain()
        if ep.error is not None:
            raise ep.error
    finally:
        report.dropped = ep.queue.dropped
        ep.close()
    return report


def run_pair_session(samples: Sequence[float],
                     config: Optional[WireConfig] = None,
                     markers: Sequence[tuple[float, str]] = ()
                     ) -> tuple[SenderReport, ReceiverReport]:
    """Run sender and receiver against each other over a local socket pair."""
    cfg = config or WireConfig()
    a, b = socket.socketpair()
    recv_out: dict = {}
    recv_err: dict = {}

    def recv_main() -> None:
        try:
            recv_out["report"] = run_receiver(b, cfg)
        except BaseException as exc:
            recv_err["exc"] = exc

    t = threading.Thread(target=recv_main, daemon=True)
    t.start()
    try:
        sender_report = run_sender(a, samples, cfg, markers)
    finally:
        t.join(timeout=30.0)
    if "exc" in recv_err:
        raise recv_err["exc"]
    return sender_report, recv_out["report"]

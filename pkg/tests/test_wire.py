"""Frame codec, stream reassembly, and the local feedback loop."""

import socket
import struct
import threading
import time

import numpy as np
import pytest

from breeze import compose, synthesize
from breeze.errors import (
    BadMagic,
    HandshakeTimeout,
    PayloadTooLarge,
    ProtocolViolation,
    Truncated,
    UnknownType,
    WireError,
)
from breeze.wire import (
    FEEDBACK_STREAM_ID,
    HEADER_SIZE,
    MAGIC,
    MARKER_LABEL_LIMIT,
    MAX_PAYLOAD,
    SAMPLE_STREAM_ID,
    Frame,
    FrameReader,
    WireConfig,
    batch_values,
    decode_frame,
    encode_frame,
    marker,
    run_pair_session,
    run_receiver,
    run_sender,
    sample_batch,
)
from breeze.wire import T_ACK, T_BYE, T_HELLO, T_MARKER, T_SAMPLE_BATCH

HEAD = struct.Struct("<4sBHQH")


def random_frame(rng):
    ftype = int(rng.choice([T_HELLO, T_ACK, T_SAMPLE_BATCH, T_MARKER, T_BYE]))
    stream = int(rng.integers(0, 65536))
    t_us = int(rng.integers(0, 2 ** 63))
    if ftype == T_SAMPLE_BATCH:
        payload = rng.random(int(rng.integers(0, 64))).astype("<f4").tobytes()
    elif ftype == T_MARKER:
        payload = bytes(rng.integers(32, 127, int(rng.integers(0, 64))).astype(np.uint8))
    else:
        payload = b""
    return Frame(ftype, stream, t_us, payload)


# -- codec -------------------------------------------------------------------


def test_round_trip_random_frames():
    rng = np.random.default_rng(0)
    for _ in range(2000):
        frame = random_frame(rng)
        blob = encode_frame(frame)
        got, used = decode_frame(blob + b"trailing junk")
        assert used == len(blob)
        assert got == frame


def test_header_layout_is_frozen():
    # 4-byte magic, u8 type, u16 stream, u64 time, u16 length, little endian
    frame = Frame(T_HELLO, 7, 123456789, b"")
    blob = encode_frame(frame)
    assert len(blob) == HEADER_SIZE == 17
    assert blob == HEAD.pack(b"BRZ1", 1, 7, 123456789, 0)

    batch = sample_batch(SAMPLE_STREAM_ID, 250000, np.arange(12.0))
    blob = encode_frame(batch)
    assert len(blob) == 17 + 48 == 65
    magic, ftype, stream, t_us, n = HEAD.unpack_from(blob)
    assert (magic, ftype, stream, t_us, n) == (MAGIC, T_SAMPLE_BATCH, 1, 250000, 48)
    assert blob[17:] == np.arange(12.0, dtype="<f4").tobytes()


def test_batch_values_round_trip_quantizes_to_f32():
    vals = np.random.default_rng(1).random(100)
    got = batch_values(sample_batch(1, 0, vals))
    assert got.dtype == np.float64
    assert np.array_equal(got, vals.astype("<f4").astype(np.float64))


def test_batch_values_rejects_other_frames():
    with pytest.raises(ProtocolViolation):
        batch_values(Frame(T_MARKER, 1, 0, b"x"))


def test_decode_rejects_bad_magic():
    blob = b"XXXX" + encode_frame(Frame(T_HELLO, 1, 0))[4:]
    with pytest.raises(BadMagic):
        decode_frame(blob)


def test_unknown_type_both_directions():
    with pytest.raises(UnknownType):
        encode_frame(Frame(99, 1, 0))
    blob = HEAD.pack(MAGIC, 99, 1, 0, 0)
    with pytest.raises(UnknownType):
        decode_frame(blob)


def test_truncated_reports_needed_and_have():
    blob = encode_frame(sample_batch(1, 0, [1.0, 2.0]))
    with pytest.raises(Truncated) as exc:
        decode_frame(blob[:10])
    assert (exc.value.needed, exc.value.have) == (17, 10)
    with pytest.raises(Truncated) as exc:
        decode_frame(blob[:-1])
    assert (exc.value.needed, exc.value.have) == (len(blob), len(blob) - 1)


def test_payload_limits():
    with pytest.raises(PayloadTooLarge):
        encode_frame(Frame(T_MARKER, 1, 0, bytes(MAX_PAYLOAD + 1)))
    with pytest.raises(PayloadTooLarge):
        encode_frame(marker(0, "x" * (MARKER_LABEL_LIMIT + 1)))
    # just inside the limit is fine
    encode_frame(marker(0, "x" * MARKER_LABEL_LIMIT))


def test_sample_batch_payload_must_align():
    with pytest.raises(ProtocolViolation):
        encode_frame(Frame(T_SAMPLE_BATCH, 1, 0, b"abc"))
    blob = HEAD.pack(MAGIC, T_SAMPLE_BATCH, 1, 0, 3) + b"abc"
    with pytest.raises(ProtocolViolation):
        decode_frame(blob)


def test_marker_labels_are_utf8():
    frame = marker(5, "naïve läbel")
    got, _ = decode_frame(encode_frame(frame))
    assert got.payload.decode("utf-8") == "naïve läbel"


# -- incremental reader ------------------------------------------------------


def test_reader_byte_at_a_time():
    rng = np.random.default_rng(2)
    frames = [random_frame(rng) for _ in range(20)]
    blob = b"".join(encode_frame(f) for f in frames)
    reader = FrameReader()
    got = []
    for i in range(len(blob)):
        got.extend(reader.feed(blob[i:i + 1]))
    assert got == frames
    assert reader.pending_bytes == 0


def test_reader_random_chunking():
    rng = np.random.default_rng(3)
    frames = [random_frame(rng) for _ in range(200)]
    blob = b"".join(encode_frame(f) for f in frames)
    for _ in range(20):
        reader = FrameReader()
        got = []
        i = 0
        while i < len(blob):
            step = int(rng.integers(1, 64))
            got.extend(reader.feed(blob[i:i + step]))
            i += step
        assert got == frames


def test_fuzzed_bytes_never_crash_decoder():
    # random garbage plus bit-flipped real frames must only ever raise
    # the protocol error family
    rng = np.random.default_rng(4)
    real = encode_frame(sample_batch(1, 1000, np.arange(8.0)))
    for _ in range(20000):
        if rng.random() < 0.5:
            buf = bytes(rng.integers(0, 256, int(rng.integers(0, 40))).astype(np.uint8))
        else:
            buf = bytearray(real)
            for _ in range(int(rng.integers(1, 4))):
                buf[int(rng.integers(0, len(buf)))] ^= 1 << int(rng.integers(0, 8))
            buf = bytes(buf)
        try:
            decode_frame(buf)
        except WireError:
            pass


# -- sockets -----------------------------------------------------------------


def baseline_samples(duration_s):
    wave_ = synthesize(compose([]), duration_s=duration_s, sample_rate_hz=24.0, seed=0)
    return wave_.samples


def test_loopback_feedback_counts_and_latency():
    cfg = WireConfig(sample_rate_hz=24.0, feedback_rate_hz=10.0)
    sender, receiver = run_pair_session(baseline_samples(40.0), cfg,
                                        markers=[(10.0, "mid")])
    assert sender.batches_sent == 320
    assert sender.samples_sent == 960
    assert receiver.batches_received == 320
    assert receiver.samples_received == 960
    # 40 s at 10 Hz modulo filter warmup trim
    assert abs(len(sender.feedback_frames) - 400) <= 4
    assert receiver.feedback_sent == len(sender.feedback_frames)
    assert receiver.markers == [(10_000_000, "mid", 240)]
    _, p95, _ = sender.latency_percentiles()
    assert p95 < 50.0
    assert sender.dropped == 0 and receiver.dropped == 0
    # each feedback frame is a (brightness, gain, haptic) triple in range
    ts = np.array([t for t, _ in sender.feedback_frames])
    assert np.all(np.diff(ts) > 0)
    for _, triple in sender.feedback_frames:
        assert len(triple) == 3
        assert np.all(triple >= 0.0) and np.all(triple <= 1.0)


def test_feedback_tracks_breathing_shape():
    cfg = WireConfig(sample_rate_hz=24.0, feedback_rate_hz=10.0)
    sender, _ = run_pair_session(baseline_samples(40.0), cfg)
    haptic = np.array([v[2] for _, v in sender.feedback_frames])
    # haptic channel is the normalized breathing signal itself: it must
    # oscillate over most of the unit range, not sit flat
    assert haptic.max() > 0.9
    assert haptic.min() < 0.1


def test_realtime_mode_sheds_and_accounts_for_drops():
    cfg = WireConfig(sample_rate_hz=24.0, feedback_rate_hz=10.0,
                     realtime=True, batch_interval_s=0.001,
                     queue_limit=4, receiver_delay_s=0.02)
    a, b = socket.socketpair()
    for s in (a, b):
        s.setsockopt(socket.SOL_SOCKET, socket.SO_SNDBUF, 4096)
        s.setsockopt(socket.SOL_SOCKET, socket.SO_RCVBUF, 4096)
    out = {}

    def recv_main():
        out["report"] = run_receiver(b, cfg)

    t = threading.Thread(target=recv_main, daemon=True)
    t.start()
    sender = run_sender(a, baseline_samples(20.0), cfg, markers=[(5.0, "keep")])
    t.join(timeout=30.0)
    receiver = out["report"]
    assert sender.dropped > 0
    assert receiver.batches_received + sender.dropped == sender.batches_sent
    # markers are control frames: never shed
    assert [m[1] for m in receiver.markers] == ["keep"]


def test_lossless_mode_blocks_instead_of_dropping():
    cfg = WireConfig(sample_rate_hz=24.0, feedback_rate_hz=10.0,
                     realtime=False, queue_limit=4, receiver_delay_s=0.002)
    sender, receiver = run_pair_session(baseline_samples(20.0), cfg)
    assert sender.dropped == 0
    assert receiver.batches_received == sender.batches_sent
    assert receiver.samples_received == sender.samples_sent


def test_handshake_timeout_when_peer_is_silent():
    cfg = WireConfig(handshake_timeout_s=0.2)
    a, b = socket.socketpair()
    try:
        with pytest.raises(HandshakeTimeout):
            run_sender(a, [0.0] * 24, cfg)
    finally:
        a.close()
        b.close()


def test_markers_keep_stream_position():
    cfg = WireConfig(sample_rate_hz=24.0, feedback_rate_hz=10.0)
    _, receiver = run_pair_session(
        baseline_samples(10.0), cfg,
        markers=[(0.0, "start"), (5.0, "half"), (10.0, "end")])
    labels = [(m[1], m[2]) for m in receiver.markers]
    assert labels == [("start", 0), ("half", 120), ("end", 240)]

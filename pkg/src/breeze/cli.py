"""Command-line front end: every pipeline stage as a pipe-composable tool.

Streams travel as CSV (t_s,value) or JSONL on stdio so stages chain:

    breeze synth --pattern Slow | breeze extract | breeze peaks | breeze features

Exit codes: 0 success, 1 usage error, 2 data or protocol error. All
diagnostics go to stderr. BREEZE_LOG=debug|info|warning controls log
verbosity.
"""

from __future__ import annotations

import argparse
import asyncio
import json
import logging
import os
import socket
import sys
from pathlib import Path
from typing import Optional, TextIO

import numpy as np

from . import dsp, encoders, imu, patterns, session, streamio, wire
from .errors import BreezeError, ConflictingTraits, DegenerateSeries
from .features import features_from_signal

log = logging.getLogger("breeze.cli")

EXIT_OK = 0
EXIT_USAGE = 1
EXIT_DATA = 2


class _Parser(argparse.ArgumentParser):
    """argparse exits with 2 on usage errors; the contract wants 1."""

    def error(self, message: str):
        self.print_usage(sys.stderr)
        print(f"error: {message}", file=sys.stderr)
        raise SystemExit(EXIT_USAGE)


def _open_in(path: Optional[str]) -> TextIO:
    if path is None or path == "-":
        return sys.stdin
    return open(path, "r")


def _open_out(path: Optional[str]) -> TextIO:
    if path is None or path == "-":
        return sys.stdout
    return open(path, "w")


def _read_stream(path: Optional[str], rate_flag: Optional[float]
                 ) -> tuple[np.ndarray, np.ndarray, float]:
    """Returns (t, values, rate); rate from the flag or the timestamps."""
    with _open_in(path) as fh:
        t, v = streamio.read_series(fh)
    rate = rate_flag if rate_flag is not None else streamio.infer_rate_hz(t)
    return t, v, rate


def _write_stream(path: Optional[str], t: np.ndarray, v: np.ndarray,
                  fmt: str) -> None:
    with _open_out(path) as fh:
        streamio.write_series(fh, t, v, fmt=fmt)


# -- subcommand implementations ---------------------------------------------


def _cmd_synth(args) -> int:
    try:
        traits = patterns.parse_traits(args.pattern)
        spec = patterns.compose(traits)
    except (ConflictingTraits, BreezeError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    wf = patterns.synthesize(spec, args.duration, args.rate, seed=args.seed)
    t = np.arange(len(wf.samples)) / args.rate
    _write_stream(args.output, t, wf.samples, args.format)
    return EXIT_OK


def _cmd_fuse(args) -> int:
    with _open_in(args.input) as fh:
        samples = streamio.read_imu_csv(fh)
    pitch = imu.fuse_stream(samples, beta=args.beta,
                            sample_rate_hz=args.rate)
    t = np.array([s.t_us for s in samples], dtype=np.float64) / 1e6
    _write_stream(args.output, t, pitch, args.format)
    return EXIT_OK


def _cmd_extract(args) -> int:
    t, v, rate = _read_stream(args.input, args.rate)
    out = dsp.extract_breathing(v, rate)
    cfg = dsp.EpochConfig()
    out_rate = rate / cfg.counts(rate)[1]
    t0 = t[0] + cfg.epoch_s / 2.0
    t_out = t0 + np.arange(len(out)) / out_rate
    _write_stream(args.output, t_out, out, args.format)
    return EXIT_OK


def _cmd_peaks(args) -> int:
    t, v, rate = _read_stream(args.input, args.rate)
    x = v
    if args.normalize:
        x = dsp.normalize(v, rate)
    pl = dsp.detect_peaks(x, rate)
    doc = {
        "rate_hz": rate,
        "t0_s": float(t[0]) if len(t) else 0.0,
        "stream": [float(val) for val in x],
        "peaks": {
            "peak_times": [float(u) for u in pl.peak_times],
            "peak_values": [float(u) for u in pl.peak_values],
            "trough_times": [float(u) for u in pl.trough_times],
            "trough_values": [float(u) for u in pl.trough_values],
        },
    }
    with _open_out(args.output) as fh:
        json.dump(doc, fh)
        fh.write("\n")
    return EXIT_OK


def _cmd_features(args) -> int:
    with _open_in(args.input) as fh:
        doc = json.load(fh)
    rate = float(doc["rate_hz"])
    x = np.asarray(doc["stream"], dtype=np.float64)
    p = doc["peaks"]
    pl = dsp.PeakList(
        peak_times=np.asarray(p["peak_times"], dtype=np.float64),
        peak_values=np.asarray(p["peak_values"], dtype=np.float64),
        trough_times=np.asarray(p["trough_times"], dtype=np.float64),
        trough_values=np.asarray(p["trough_values"], dtype=np.float64))
    feats = features_from_signal(x, rate, pl)
    with _open_out(args.output) as fh:
        json.dump(vars(feats), fh)
        fh.write("\n")
    return EXIT_OK


def _cmd_encode(args) -> int:
    t, v, rate = _read_stream(args.input, args.rate)
    if np.any((v < 0) | (v > 1)):
        v = np.clip(v, 0.0, 1.0)
        log.warning("input clamped to [0,1] before encoding")
    frames = [encoders.encode_modalities(float(b), int(round(ts * 1e6)))
              for ts, b in zip(t, v)]
    with _open_out(args.output) as fh:
        for fr in frames:
            json.dump({"t_us": fr.t_us, "brightness": fr.brightness,
                       "gain": fr.gain, "haptic": fr.haptic}, fh)
            fh.write("\n")
    if args.wav:
        gains = np.array([fr.gain for fr in frames])
        per_gain = max(1, int(round(args.audio_rate / rate)))
        audio = encoders.gain_modulated_noise(gains, per_gain, seed=args.seed)
        encoders.write_wav(args.wav, audio, args.audio_rate)
    return EXIT_OK


def _cmd_validate(args) -> int:
    t, v, rate = _read_stream(args.input, args.rate)
    with _open_in(args.reference) as fh:
        _, ref = streamio.read_series(fh)
    if args.lag:
        r, lag_s = dsp.best_lag_correlation(ref, v, rate,
                                            max_lag_s=args.max_lag)
        doc = {"r": r, "lag_s": lag_s}
    else:
        doc = {"r": dsp.validate_against_reference(v, ref, rate)}
    with _open_out(args.output) as fh:
        json.dump(doc, fh)
        fh.write("\n")
    return EXIT_OK


def _cmd_serve(args) -> int:
    from . import wsbridge
    static_dir = Path(args.static) if args.static else None
    if static_dir is not None and not static_dir.is_dir():
        print(f"error: static dir {static_dir} not found", file=sys.stderr)
        return EXIT_USAGE
    try:
        asyncio.run(wsbridge.serve_bridge(args.ws, tcp_port=args.tcp,
                                          static_dir=static_dir,
                                          host=args.host))
    except KeyboardInterrupt:
        pass
    return EXIT_OK


def _cmd_client(args) -> int:
    host, _, port = args.connect.rpartition(":")
    if not host or not port.isdigit():
        print("error: --connect expects HOST:PORT", file=sys.stderr)
        return EXIT_USAGE
    t, v, rate = _read_stream(args.input, args.rate)
    cfg = wire.WireConfig(sample_rate_hz=rate, realtime=args.realtime)
    marks = []
    for m in args.marker or []:
        ts, _, label = m.partition(":")
        marks.append((float(ts), label))
    sock = socket.create_connection((host, int(port)))
    report = wire.run_sender(sock, v, cfg, markers=marks)
    p50, p95, p99 = report.latency_percentiles()
    doc = {"batches_sent": report.batches_sent,
           "samples_sent": report.samples_sent,
           "feedback_frames": len(report.feedback_frames),
           "dropped": report.dropped,
           "latency_ms": {"p50": p50, "p95": p95, "p99": p99}}
    with _open_out(args.output) as fh:
        json.dump(doc, fh)
        fh.write("\n")
    return EXIT_OK


def _cmd_schedule(args) -> int:
    sched = session.build_schedule(args.seed)
    with _open_out(args.output) as fh:
        if args.format == "jsonl":
            for s in sched:
                json.dump({"index": s.index, "pattern": s.pattern_name,
                           "modality": s.modality.value}, fh)
                fh.write("\n")
        else:
            fh.write("index,pattern,modality\n")
            for s in sched:
                fh.write(f"{s.index},{s.pattern_name},{s.modality.value}\n")
    return EXIT_OK


def _cmd_session_run(args) -> int:
    t, v, rate = _read_stream(args.input, args.rate)
    sched = session.build_schedule(args.schedule_seed)
    n_trial = int(round(args.duration * rate))
    out = _open_out(args.output)
    completed = 0
    try:
        for spec in sched:
            seg = v[spec.index * n_trial:(spec.index + 1) * n_trial]
            if len(seg) < n_trial:
                break
            line = {"index": spec.index, "pattern": spec.pattern_name,
                    "modality": spec.modality.value}
            try:
                res = session.run_trial(spec.pattern, seg, rate,
                                        args.duration, seed=args.seed)
                line.update(res.to_dict())
            except (DegenerateSeries, BreezeError) as exc:
                line["error"] = str(exc)
            json.dump(line, out)
            out.write("\n")
            completed += 1
    finally:
        if out is not sys.stdout:
            out.close()
    if completed < len(sched):
        log.warning("input covered %d of %d trials", completed, len(sched))
    return EXIT_OK


# -- parser wiring -----------------------------------------------------------


def _add_io_flags(p: argparse.ArgumentParser, fmt: bool = True) -> None:
    p.add_argument("--input", "-i", default=None,
                   help="input file (default stdin)")
    p.add_argument("--output", "-o", default=None,
                   help="output file (default stdout)")
    if fmt:
        p.add_argument("--format", choices=("csv", "jsonl"), default="csv")


def build_parser() -> argparse.ArgumentParser:
    root = _Parser(prog="breeze",
                   description="breathing biofeedback toolkit")
    sub = root.add_subparsers(dest="cmd", required=True)

    p = sub.add_parser("synth", help="synthesize a breathing waveform")
    p.add_argument("--pattern", default="Baseline",
                   help='trait names joined by + or , e.g. "Slow+HoldIn"')
    p.add_argument("--duration", type=float, default=40.0)
    p.add_argument("--rate", type=float, default=24.0)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--output", "-o", default=None)
    p.add_argument("--format", choices=("csv", "jsonl"), default="csv")
    p.set_defaults(func=_cmd_synth)

    p = sub.add_parser("fuse", help="IMU CSV to pitch angle stream")
    _add_io_flags(p)
    p.add_argument("--beta", type=float, default=0.1)
    p.add_argument("--rate", type=float, default=None,
                   help="sample rate hint when timestamps are degenerate")
    p.set_defaults(func=_cmd_fuse)

    p = sub.add_parser("extract", help="raw stream to breathing stream")
    _add_io_flags(p)
    p.add_argument("--rate", type=float, default=None)
    p.set_defaults(func=_cmd_extract)

    p = sub.add_parser("peaks", help="detect breathing peaks/troughs")
    _add_io_flags(p, fmt=False)
    p.add_argument("--rate", type=float, default=None)
    p.add_argument("--normalize", action="store_true",
                   help="min-max normalize over a trailing window first")
    p.set_defaults(func=_cmd_peaks)

    p = sub.add_parser("features", help="peaks document to breath features")
    _add_io_flags(p, fmt=False)
    p.set_defaults(func=_cmd_features)

    p = sub.add_parser("encode", help="breathing stream to modality frames")
    _add_io_flags(p, fmt=False)
    p.add_argument("--rate", type=float, default=None)
    p.add_argument("--wav", default=None,
                   help="also write gain-modulated pink noise WAV here")
    p.add_argument("--audio-rate", type=int, default=44100)
    p.add_argument("--seed", type=int, default=0)
    p.set_defaults(func=_cmd_encode)

    p = sub.add_parser("validate", help="correlate a stream with a reference")
    _add_io_flags(p, fmt=False)
    p.add_argument("--reference", required=True)
    p.add_argument("--rate", type=float, default=None)
    p.add_argument("--lag", action="store_true",
                   help="search lags within +-max-lag for the best r")
    p.add_argument("--max-lag", type=float, default=2.0)
    p.set_defaults(func=_cmd_validate)

    p = sub.add_parser("serve", help="run the streaming service")
    p.add_argument("--tcp", type=int, default=None)
    p.add_argument("--ws", type=int, required=True)
    p.add_argument("--static", default=None, help="directory with the web app")
    p.add_argument("--host", default="127.0.0.1")
    p.set_defaults(func=_cmd_serve)

    p = sub.add_parser("client", help="stream a file to a serve instance")
    _add_io_flags(p, fmt=False)
    p.add_argument("--connect", required=True, help="HOST:PORT")
    p.add_argument("--rate", type=float, default=None)
    p.add_argument("--realtime", action="store_true")
    p.add_argument("--marker", action="append",
                   help="T_S:LABEL, repeatable")
    p.set_defaults(func=_cmd_client)

    p = sub.add_parser("schedule", help="emit a randomized trial schedule")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--output", "-o", default=None)
    p.add_argument("--format", choices=("csv", "jsonl"), default="csv")
    p.set_defaults(func=_cmd_schedule)

    p = sub.add_parser("session", help="trial session tools")
    ssub = p.add_subparsers(dest="session_cmd", required=True)
    pr = ssub.add_parser("run", help="score a stream against a schedule")
    _add_io_flags(pr, fmt=False)
    pr.add_argument("--schedule-seed", type=int, required=True)
    pr.add_argument("--rate", type=float, default=None)
    pr.add_argument("--duration", type=float, default=40.0)
    pr.add_argument("--seed", type=int, default=0)
    pr.set_defaults(func=_cmd_session_run)

    return root


def main(argv: Optional[list[str]] = None) -> int:
    level = os.environ.get("BREEZE_LOG", "warning").upper()
    logging.basicConfig(stream=sys.stderr,
                        level=getattr(logging, level, logging.WARNING),
                        format="%(levelname)s %(name)s: %(message)s")
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return exc.code if isinstance(exc.code, int) else EXIT_USAGE
    try:
        return args.func(args)
    except BrokenPipeError:
        return EXIT_OK
    except BreezeError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_DATA
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_DATA
    except KeyboardInterrupt:
        return EXIT_DATA
    except Exception as exc:  # contract: never a traceback on stderr
        log.debug("unexpected failure", exc_info=True)
        print(f"error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_DATA


if __name__ == "__main__":
    sys.exit(main())

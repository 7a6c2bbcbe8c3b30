"""CSV and JSONL readers/writers for the streams the CLI pipes around.

Waveform rows are (t_s, value); IMU rows follow the fixed header
t_us,ax,ay,az,gx,gy,gz,mx,my,mz. Values are written with repr-level
precision so a round trip through text is lossless.
"""

from __future__ import annotations

import csv
import io
import json
from typing import IO, Iterable, Sequence

import numpy as np

from .errors import InsufficientData
from .imu import IMUSample

WAVEFORM_FORMATS = ("csv", "jsonl")
IMU_HEADER = ["t_us", "ax", "ay", "az", "gx", "gy", "gz", "mx", "my", "mz"]


def write_series(out: IO[str], times: Sequence[float], values: Sequence[float],
                 fmt: str = "csv") -> None:
    if fmt == "csv":
        out.write("t_s,value\n")
        for t, v in zip(times, values):
            out.write(f"{t:.6f},{float(v)!r}\n")
    elif fmt == "jsonl":
        for t, v in zip(times, values):
            out.write(json.dumps({"t": round(float(t), 6), "v": float(v)}) + "\n")
    else:
        raise ValueError(f"unknown format {fmt!r}")


def read_series(src: IO[str]) -> tuple[np.ndarray, np.ndarray]:
    """Read a waveform in either format, sniffing from the first line."""
    text = src.read()
    lines = [ln for ln in text.splitlines() if ln.strip()]
    if not lines:
        raise InsufficientData("empty stream")
    times: list[float] = []
    values: list[float] = []
    if lines[0].lstrip().startswith("{"):
        for ln in lines:
            row = json.loads(ln)
            times.append(float(row["t"]))
            values.append(float(row["v"]))
    else:
        rows = list(csv.reader(io.StringIO(text)))
        start = 1 if rows and rows[0] and not _is_number(rows[0][0]) else 0
        for row in rows[start:]:
            if not row:
                continue
            times.append(float(row[0]))
            values.append(float(row[1]))
    if not values:
        raise InsufficientData("no samples in stream")
    return np.asarray(times), np.asarray(values)


def infer_rate_hz(times: np.ndarray) -> float:
    if len(times) < 2:
        raise InsufficientData("need at least two samples to infer a rate")
    dt = np.median(np.diff(times))
    if dt <= 0:
        raise InsufficientData("timestamps are not increasing")
    return 1.0 / float(dt)


def write_imu_csv(out: IO[str], samples: Iterable[IMUSample]) -> None:
    writer = csv.writer(out)
    writer.writerow(IMU_HEADER)
    for s in samples:
        mag = s.mag if s.mag is not None else ("", "", "")
        writer.writerow([s.t_us, *[repr(float(x)) for x in s.accel],
                         *[repr(float(x)) for x in s.gyro],
                         *[repr(float(x)) if x != "" else "" for x in mag]])


def read_imu_csv(src: IO[str]) -> list[IMUSample]:
    rows = list(csv.reader(src))
    if not rows:
        raise InsufficientData("empty IMU stream")
    if rows[0][:1] == ["t_us"]:
        rows = rows[1:]
    samples = []
    for row in rows:
        if not row:
            continue
        if len(row) < 7:
            raise InsufficientData(f"IMU row too short: {row!r}")
        t_us = int(row[0])
        accel = tuple(float(x) for x in row[1:4])
        gyro = tuple(float(x) for x in row[4:7])
        mag = None
        if len(row) >= 10 and all(x.strip() != "" for x in row[7:10]):
            mag = tuple(float(x) for x in row[7:10])
        samples.append(IMUSample(t_us=t_us, accel=accel, gyro=gyro, mag=mag))
    if not samples:
        raise InsufficientData("no samples in IMU stream")
    return samples


def _is_number(token: str) -> bool:
    try:
        float(token)
        return True
    except ValueError:
        return False

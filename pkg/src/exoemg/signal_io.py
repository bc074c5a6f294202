"""Frame and session data model, the CSV session format, and replay.

Session files are UTF-8 CSV with ``\\n`` line endings::

    # sample_rate_hz=50.0
    t_ms,e1,e2,e3,e4,e5,e6,e7,e8,instruction,device_state,label
    0,1.5,-3.0,...,relax,extended,close

The leading ``#`` line is optional on read (50 Hz assumed when absent).
Channel values are written with ``repr`` so they round-trip bit-exactly.
"""

from __future__ import annotations

import csv
import io
import math
import os
import time
from dataclasses import dataclass
from typing import IO, Iterator, Sequence

import numpy as np

from .states import DevicePhase, HandState, Instruction

N_CHANNELS = 8
DEFAULT_SAMPLE_RATE_HZ = 50.0
CHANNEL_RANGE = (-128.0, 127.0)
CHANNEL_COLUMNS = tuple(f"e{i + 1}" for i in range(N_CHANNELS))
HEADER = ("t_ms",) + CHANNEL_COLUMNS + ("instruction", "device_state", "label")
_RATE_PREFIX = "# sample_rate_hz="


class SessionFormatError(ValueError):
    """Malformed session file. ``row`` is the 1-based line number in the file."""

    def __init__(self, message: str, row: int | None = None):
        self.row = row
        if row is not None:
            message = f"row {row}: {message}"
        super().__init__(message)


@dataclass(frozen=True)
class EmgFrame:
    """One timestamped 8-channel raw EMG sample."""

    t_ms: int
    channels: tuple[float, ...]

    def __post_init__(self):
        if isinstance(self.t_ms, bool) or int(self.t_ms) != self.t_ms:
            raise ValueError(f"t_ms must be an integer, got {self.t_ms!r}")
        if self.t_ms < 0:
            raise ValueError(f"t_ms must be non-negative, got {self.t_ms}")
        channels = tuple(float(c) for c in self.channels)
        if len(channels) != N_CHANNELS:
            raise ValueError(f"expected {N_CHANNELS} channels, got {len(channels)}")
        if not all(math.isfinite(c) for c in channels):
            raise ValueError("channel values must be finite")
        object.__setattr__(self, "t_ms", int(self.t_ms))
        object.__setattr__(self, "channels", channels)

    def as_array(self) -> np.ndarray:
        return np.asarray(self.channels, dtype=float)


@dataclass(frozen=True)
class Annotation:
    """Per-frame protocol annotation. ``phase`` is None when no device was worn."""

    instruction: Instruction
    phase: DevicePhase | None = None
    label: HandState | None = None


@dataclass(frozen=True)
class SessionRecording:
    sample_rate_hz: float = DEFAULT_SAMPLE_RATE_HZ
    frames: tuple[EmgFrame, ...] = ()
    annotations: tuple[Annotation, ...] | None = None

    def __post_init__(self):
        if not (self.sample_rate_hz > 0 and math.isfinite(self.sample_rate_hz)):
            raise ValueError(f"sample_rate_hz must be positive, got {self.sample_rate_hz}")
        frames = tuple(self.frames)
        for prev, cur in zip(frames, frames[1:]):
            if cur.t_ms <= prev.t_ms:
                raise ValueError(
                    f"frames must be strictly increasing in t_ms ({prev.t_ms} then {cur.t_ms})"
                )
        annotations = self.annotations
        if annotations is not None:
            annotations = tuple(annotations)
            if len(annotations) != len(frames):
                raise ValueError(
                    f"{len(annotations)} annotations for {len(frames)} frames"
                )
            if not annotations:
                annotations = None
        object.__setattr__(self, "sample_rate_hz", float(self.sample_rate_hz))
        object.__setattr__(self, "frames", frames)
        object.__setattr__(self, "annotations", annotations)

    def __len__(self) -> int:
        return len(self.frames)

    @property
    def frame_period_ms(self) -> float:
        return 1000.0 / self.sample_rate_hz

    def channel_matrix(self) -> np.ndarray:
        if not self.frames:
            return np.empty((0, N_CHANNELS))
        return np.array([f.channels for f in self.frames], dtype=float)

    def labeled_pairs(self) -> list[tuple[EmgFrame, HandState]]:
        """(frame, label) pairs for every annotated frame that carries a label."""
        if self.annotations is None:
            return []
        return [(f, a.label) for f, a in zip(self.frames, self.annotations) if a.label is not None]


def _format_row(frame: EmgFrame, ann: Annotation | None) -> list[str]:
    row = [str(frame.t_ms)] + [repr(c) for c in frame.channels]
    if ann is None:
        row += ["", "", ""]
    else:
        row += [
            ann.instruction.value,
            ann.phase.value if ann.phase is not None else "",
            ann.label.value if ann.label is not None else "",
        ]
    return row


def write_session(recording: SessionRecording, destination: str | os.PathLike | IO[str]) -> None:
    """Serialize ``recording`` as CSV to a path or a text stream."""
    if isinstance(destination, (str, os.PathLike)):
        with open(destination, "w", encoding="utf-8", newline="") as fh:
            write_session(recording, fh)
        return
    destination.write(f"{_RATE_PREFIX}{recording.sample_rate_hz!r}\n")
    writer = csv.writer(destination, lineterminator="\n")
    writer.writerow(HEADER)
    anns = recording.annotations or (None,) * len(recording.frames)
    for frame, ann in zip(recording.frames, anns):
        writer.writerow(_format_row(frame, ann))


def _parse_enum(enum_cls, text: str, row: int, column: str):
    try:
        return enum_cls(text)
    except ValueError:
        raise SessionFormatError(f"invalid {column} value {text!r}", row) from None


def read_session(source: str | os.PathLike | IO[str]) -> SessionRecording:
    """Parse a session CSV from a path or text stream."""
    if isinstance(source, (str, os.PathLike)):
        with open(source, "r", encoding="utf-8", newline="") as fh:
            return read_session(fh)

    lines = source.read().split("\n")
    if lines and lines[-1] == "":
        lines.pop()
    line_no = 0
    rate = DEFAULT_SAMPLE_RATE_HZ
    if lines and lines[0].startswith("#"):
        meta = lines[0]
        if not meta.startswith(_RATE_PREFIX):
            raise SessionFormatError(f"unrecognized metadata line {meta!r}", 1)
        try:
            rate = float(meta[len(_RATE_PREFIX):])
        except ValueError:
            raise SessionFormatError("invalid sample rate", 1) from None
        if not rate > 0:
            raise SessionFormatError("sample rate must be positive", 1)
        line_no = 1

    if line_no >= len(lines):
        raise SessionFormatError("missing header", line_no + 1)
    reader = csv.reader(lines[line_no:])
    header = next(reader)
    header_row = line_no + 1
    if tuple(h.strip() for h in header) != HEADER:
        if len(header) != len(HEADER) and header[:1] == ["t_ms"]:
            raise SessionFormatError(
                f"expected {N_CHANNELS} channel columns, header has {len(header) - 4}",
                header_row,
            )
        raise SessionFormatError(f"malformed header {header!r}", header_row)

    frames: list[EmgFrame] = []
    annotations: list[Annotation | None] = []
    last_t = None
    for offset, fields in enumerate(reader, start=1):
        row = header_row + offset
        if len(fields) != len(HEADER):
            n_channels = len(fields) - 4
            raise SessionFormatError(
                f"expected {N_CHANNELS} channels, found {n_channels} "
                f"({len(fields)} fields instead of {len(HEADER)})",
                row,
            )
        try:
            t_ms = int(fields[0])
        except ValueError:
            raise SessionFormatError(f"invalid t_ms {fields[0]!r}", row) from None
        try:
            channels = tuple(float(v) for v in fields[1 : 1 + N_CHANNELS])
        except ValueError:
            raise SessionFormatError("non-numeric channel value", row) from None
        if last_t is not None and t_ms <= last_t:
            raise SessionFormatError(
                f"timestamps not strictly increasing ({last_t} then {t_ms})", row
            )
        try:
            frames.append(EmgFrame(t_ms, channels))
        except ValueError as exc:
            raise SessionFormatError(str(exc), row) from None
        last_t = t_ms

        instr, phase, label = fields[1 + N_CHANNELS :]
        if not instr:
            if phase or label:
                raise SessionFormatError("device_state/label given without instruction", row)
            annotations.append(None)
            continue
        annotations.append(
            Annotation(
                _parse_enum(Instruction, instr, row, "instruction"),
                _parse_enum(DevicePhase, phase, row, "device_state") if phase else None,
                _parse_enum(HandState, label, row, "label") if label else None,
            )
        )

    present = [a is not None for a in annotations]
    if any(present) and not all(present):
        first_missing = header_row + 1 + present.index(False)
        raise SessionFormatError("annotations must be given for every frame or none", first_missing)
    return SessionRecording(rate, tuple(frames), tuple(annotations) if all(present) else None)


def session_to_string(recording: SessionRecording) -> str:
    buf = io.StringIO()
    write_session(recording, buf)
    return buf.getvalue()


def replay(recording: SessionRecording, realtime: bool = False) -> Iterator[EmgFrame]:
    """Yield the recording's frames in order.

    With ``realtime=True`` frames are paced against the wall clock using
    their timestamps.
    """
    if not realtime:
        yield from recording.frames
        return
    start = time.monotonic()
    t0 = recording.frames[0].t_ms if recording.frames else 0
    for frame in recording.frames:
        delay = (frame.t_ms - t0) / 1000.0 - (time.monotonic() - start)
        if delay > 0:
            time.sleep(delay)
        yield frame


def frames_from_array(
    channels: Sequence[Sequence[float]] | np.ndarray, sample_rate_hz: float = DEFAULT_SAMPLE_RATE_HZ, t0_ms: int = 0
) -> list[EmgFrame]:
    """Build frames at nominal spacing from an (n, 8) array."""
    period = 1000.0 / sample_rate_hz
    return [
        EmgFrame(t0_ms + int(round(i * period)), tuple(row))
        for i, row in enumerate(np.asarray(channels, dtype=float))
    ]


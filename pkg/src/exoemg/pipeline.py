"""Streaming intent pipeline: classify, median-filter, threshold, latch."""

from __future__ import annotations

import csv
import os
from collections import deque
from dataclasses import dataclass
from typing import IO, Iterable, Sequence

from .forest import ForestModel, classify
from .signal_io import EmgFrame
from .states import Command

TRACE_HEADER = ("t_ms", "p_open", "p_open_filtered", "p_close_filtered", "command")


class TimeRegressionError(ValueError):
    pass


@dataclass(frozen=True)
class PipelineConfig:
    window_ms: int = 500
    open_threshold: float = 0.75
    close_threshold: float = 0.75
    initial_command: Command = Command.CLOSE
    time_tolerance_ms: int = 0

    def __post_init__(self):
        if self.window_ms <= 0:
            raise ValueError("window_ms must be positive")
        for name in ("open_threshold", "close_threshold"):
            v = getattr(self, name)
            if not 0.5 < v <= 1.0:
                raise ValueError(f"{name} must lie in (0.5, 1], got {v}")
        if self.time_tolerance_ms < 0:
            raise ValueError("time_tolerance_ms must be nonnegative")


def median(values: Sequence[float]) -> float:
    """Median; the mean of the two middle values for even lengths."""
    n = len(values)
    if n == 0:
        raise ValueError("median of an empty sequence")
    s = sorted(values)
    mid = n // 2
    if n % 2:
        return float(s[mid])
    return (s[mid - 1] + s[mid]) / 2.0


def _open_close_medians(s: list[float]) -> tuple[float, float]:
    """Medians of ``s`` and of ``1 - s`` from one ascending sort.

    ``1 - x`` is monotone non-increasing in floating point, so the sorted
    complement is the reversed complement and the result is bit-identical
    to sorting it separately.
    """
    n = len(s)
    mid = n // 2
    if n % 2:
        return s[mid], 1.0 - s[mid]
    return (s[mid - 1] + s[mid]) / 2.0, ((1.0 - s[mid]) + (1.0 - s[mid - 1])) / 2.0


@dataclass(frozen=True)
class StepRecord:
    t_ms: int
    p_open: float
    p_open_filtered: float
    p_close_filtered: float
    command: Command
    open_fired: bool
    close_fired: bool


class PipelineState:
    """Probability window and latched command for one stream."""

    def __init__(self, config: PipelineConfig | None = None):
        self.config = config or PipelineConfig()
        self.window: deque[tuple[int, float]] = deque()
        self.latched = self.config.initial_command
        self.last_t: int | None = None

    def push_probability(self, t_ms: int, p_open: float) -> StepRecord:
        """Feed one raw Open probability and return the resulting step."""
        cfg = self.config
        if self.last_t is not None and t_ms < self.last_t:
            if self.last_t - t_ms > cfg.time_tolerance_ms:
                raise TimeRegressionError(
                    f"frame at {t_ms} ms arrived after {self.last_t} ms; rejected"
                )
            t_ms = self.last_t
        if not 0.0 <= p_open <= 1.0:
            raise ValueError(f"probability out of range: {p_open}")
        self.last_t = t_ms
        self.window.append((t_ms, p_open))
        horizon = t_ms - cfg.window_ms
        while self.window[0][0] < horizon:
            self.window.popleft()

        p_hat_open, p_hat_close = _open_close_medians(sorted(p for _, p in self.window))
        open_fired = p_hat_open >= cfg.open_threshold
        close_fired = p_hat_close >= cfg.close_threshold
        if open_fired:
            self.latched = Command.OPEN
        elif close_fired:
            self.latched = Command.CLOSE
        return StepRecord(t_ms, p_open, p_hat_open, p_hat_close, self.latched, open_fired, close_fired)

    def push_frame(self, model: ForestModel, frame: EmgFrame) -> StepRecord:
        return self.push_probability(frame.t_ms, classify(model, frame))


def push(state: PipelineState, model: ForestModel, frame: EmgFrame) -> Command:
    return state.push_frame(model, frame).command


def run_stream(model: ForestModel, frames: Iterable[EmgFrame], config: PipelineConfig | None = None) -> list[StepRecord]:
    state = PipelineState(config)
    return [state.push_frame(model, f) for f in frames]


def write_trace(records: Iterable[StepRecord], destination: str | os.PathLike | IO[str], truth: Sequence | None = None) -> None:
    """Per-step trace CSV; ``truth`` adds a ground-truth label column."""
    if isinstance(destination, (str, os.PathLike)):
        with open(destination, "w", encoding="utf-8", newline="") as fh:
            write_trace(records, fh, truth)
        return
    writer = csv.writer(destination, lineterminator="\n")
    writer.writerow(TRACE_HEADER + (("truth",) if truth is not None else ()))
    for i, r in enumerate(records):
        row = [r.t_ms, repr(r.p_open), repr(r.p_open_filtered), repr(r.p_close_filtered), r.command.value]
        if truth is not None:
            row.append(truth[i].value)
        writer.writerow(row)

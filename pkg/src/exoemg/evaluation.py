"""Per-sample accuracy, event matching and force-peak summaries."""

from __future__ import annotations

import bisect
import csv
import math
import os
from dataclasses import dataclass, field
from typing import IO, Iterable, Sequence

from .device import TelemetryRow, read_telemetry
from .states import DevicePhase, HandState

EVENT_WINDOW_MS = 850


class TraceError(ValueError):
    pass


@dataclass(frozen=True)
class IntentTrace:
    times: tuple[int, ...]
    labels: tuple[HandState, ...]

    def __post_init__(self):
        times = tuple(int(t) for t in self.times)
        labels = tuple(HandState(l) for l in self.labels)
        if len(times) != len(labels):
            raise TraceError("times and labels differ in length")
        for a, b in zip(times, times[1:]):
            if b <= a:
                raise TraceError(f"trace timestamps not strictly increasing ({a} then {b})")
        object.__setattr__(self, "times", times)
        object.__setattr__(self, "labels", labels)

    @classmethod
    def from_pairs(cls, pairs: Iterable[tuple[int, HandState]]) -> "IntentTrace":
        pairs = list(pairs)
        return cls(tuple(t for t, _ in pairs), tuple(l for _, l in pairs))

    def __len__(self) -> int:
        return len(self.times)


@dataclass(frozen=True)
class EventDetail:
    truth_time: int
    label: HandState
    matched: bool
    predicted_time: int | None = None


@dataclass(frozen=True)
class EventReport:
    total_events: int
    correct_events: int
    per_sample_accuracy: float
    event_details: tuple[EventDetail, ...] = field(default=())

    def __post_init__(self):
        if not 0 <= self.correct_events <= self.total_events:
            raise ValueError("correct_events must lie in [0, total_events]")

    @property
    def events_fraction(self) -> str:
        return f"{self.correct_events}/{self.total_events}"

    @property
    def event_rate(self) -> float:
        return self.correct_events / self.total_events if self.total_events else math.nan


def _check_aligned(pred: IntentTrace, truth: IntentTrace) -> None:
    if pred.times != truth.times:
        raise TraceError("predicted and ground-truth traces cover different timestamps")


def per_sample_accuracy(pred: IntentTrace, truth: IntentTrace) -> float:
    _check_aligned(pred, truth)
    if not len(truth):
        raise TraceError("empty traces")
    agree = sum(a is b for a, b in zip(pred.labels, truth.labels))
    return agree / len(truth)


def extract_events(trace: IntentTrace) -> list[tuple[int, HandState]]:
    """(t_ms, new_label) at every label change; the first sample is never an event."""
    if not len(trace):
        raise TraceError("cannot extract events from an empty trace")
    labels, times = trace.labels, trace.times
    return [(times[i], labels[i]) for i in range(1, len(labels)) if labels[i] is not labels[i - 1]]


def _change_indices(labels: Sequence[HandState]) -> list[int]:
    return [i for i in range(1, len(labels)) if labels[i] is not labels[i - 1]]


def match_events(
    pred: IntentTrace,
    truth: IntentTrace,
    window_ms: int = EVENT_WINDOW_MS,
    sample_pred: IntentTrace | None = None,
) -> EventReport:
    """Score predicted transitions against ground-truth events.

    A truth event at ``t_g`` to label ``l`` is correct when the prediction
    switches to ``l`` at some ``t_p`` in ``[t_g, t_g + window_ms]`` before
    the next truth event, and then stays ``l`` up to the next truth event
    (or to the end of the trace). A predicted transition is used at most
    once.

    ``per_sample_accuracy`` is computed on ``sample_pred`` when given (e.g.
    the unfiltered classifier decisions), else on ``pred``.
    """
    _check_aligned(pred, truth)
    if not len(truth):
        raise TraceError("empty traces")
    times = truth.times
    truth_changes = _change_indices(truth.labels)
    pred_changes = _change_indices(pred.labels)
    pred_change_times = [times[i] for i in pred_changes]
    used = set()
    details = []
    for k, gi in enumerate(truth_changes):
        t_g = times[gi]
        label = truth.labels[gi]
        t_next = times[truth_changes[k + 1]] if k + 1 < len(truth_changes) else math.inf
        limit = min(t_g + window_ms, t_next - 1) if t_next != math.inf else t_g + window_ms
        match = None
        j = bisect.bisect_left(pred_change_times, t_g)
        while j < len(pred_changes) and pred_change_times[j] <= limit:
            pi = pred_changes[j]
            if j not in used and pred.labels[pi] is label:
                # The prediction holds until its next change; that must not
                # come before the next truth event.
                next_change = pred_change_times[j + 1] if j + 1 < len(pred_changes) else math.inf
                if next_change >= t_next:
                    match = j
                    break
            j += 1
        if match is not None:
            used.add(match)
            details.append(EventDetail(t_g, label, True, pred_change_times[match]))
        else:
            details.append(EventDetail(t_g, label, False, None))

    acc = per_sample_accuracy(sample_pred if sample_pred is not None else pred, truth)
    return EventReport(len(details), sum(d.matched for d in details), acc, tuple(details))


def force_peaks(telemetry: str | os.PathLike | IO[str] | Iterable[TelemetryRow]) -> list[float]:
    """Peak load-cell force of each excursion away from the extended phase."""
    if isinstance(telemetry, (str, os.PathLike)) or hasattr(telemetry, "read"):
        telemetry = read_telemetry(telemetry)
    peaks = []
    current = None
    for row in telemetry:
        if row.phase is DevicePhase.EXTENDED:
            if current is not None:
                peaks.append(current)
                current = None
        else:
            current = row.force_N if current is None else max(current, row.force_N)
    if current is not None:
        peaks.append(current)
    return peaks


REPORT_COLUMNS = ("session", "accuracy", "correct_events", "total_events", "events")


def report_rows(named: Iterable[tuple[str, EventReport]]) -> list[dict]:
    return [
        {
            "session": name,
            "accuracy": f"{r.per_sample_accuracy * 100:.1f}%",
            "correct_events": r.correct_events,
            "total_events": r.total_events,
            "events": r.events_fraction,
        }
        for name, r in named
    ]


def format_table(named: Iterable[tuple[str, EventReport]]) -> str:
    """Aligned text table, events rendered as k/n."""
    rows = report_rows(named)
    headers = ("Session", "Accuracy", "Correct Events")
    cells = [(r["session"], r["accuracy"], r["events"]) for r in rows]
    widths = [max(len(h), *(len(c[i]) for c in cells)) if cells else len(h) for i, h in enumerate(headers)]
    lines = ["  ".join(h.ljust(w) for h, w in zip(headers, widths))]
    lines.append("  ".join("-" * w for w in widths))
    for c in cells:
        lines.append("  ".join(v.ljust(w) for v, w in zip(c, widths)))
    return "\n".join(line.rstrip() for line in lines) + "\n"


def write_report_csv(named: Iterable[tuple[str, EventReport]], destination: str | os.PathLike | IO[str]) -> None:
    if isinstance(destination, (str, os.PathLike)):
        with open(destination, "w", encoding="utf-8", newline="") as fh:
            write_report_csv(named, fh)
        return
    writer = csv.DictWriter(destination, fieldnames=REPORT_COLUMNS, lineterminator="\n")
    writer.writeheader()
    writer.writerows(report_rows(named))


def write_event_details(report: EventReport, destination: str | os.PathLike | IO[str]) -> None:
    if isinstance(destination, (str, os.PathLike)):
        with open(destination, "w", encoding="utf-8", newline="") as fh:
            write_event_details(report, fh)
        return
    writer = csv.writer(destination, lineterminator="\n")
    writer.writerow(("truth_time", "label", "matched", "predicted_time"))
    for d in report.event_details:
        writer.writerow((d.truth_time, d.label.value, int(d.matched), "" if d.predicted_time is None else d.predicted_time))


def read_intent_trace(source: str | os.PathLike | IO[str], column: str | None = None) -> IntentTrace:
    """Read a trace from any CSV with a ``t_ms`` column.

    The label column is ``column`` if given, else the first of ``label``,
    ``command``, ``truth`` present. Rows with an empty label are skipped.
    """
    if isinstance(source, (str, os.PathLike)):
        with open(source, "r", encoding="utf-8", newline="") as fh:
            return read_intent_trace(fh, column)
    lines = [l for l in source.read().split("\n") if l and not l.startswith("#")]
    reader = csv.DictReader(lines)
    fields = reader.fieldnames or []
    if "t_ms" not in fields:
        raise TraceError("row 1: trace file lacks a t_ms column")
    if column is None:
        column = next((c for c in ("label", "command", "truth") if c in fields), None)
        if column is None:
            raise TraceError("row 1: trace file has no label/command/truth column")
    elif column not in fields:
        raise TraceError(f"row 1: trace file has no {column!r} column")
    pairs = []
    for row_no, row in enumerate(reader, start=2):
        value = row[column]
        if not value:
            continue
        try:
            pairs.append((int(row["t_ms"]), HandState(value)))
        except ValueError as exc:
            raise TraceError(f"row {row_no}: {exc}") from None
    return IntentTrace.from_pairs(pairs)


def write_intent_trace(trace: IntentTrace, destination: str | os.PathLike | IO[str]) -> None:
    if isinstance(destination, (str, os.PathLike)):
        with open(destination, "w", encoding="utf-8", newline="") as fh:
            write_intent_trace(trace, fh)
        return
    writer = csv.writer(destination, lineterminator="\n")
    writer.writerow(("t_ms", "label"))
    for t, l in zip(trace.times, trace.labels):
        writer.writerow((t, l.value))

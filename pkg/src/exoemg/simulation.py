"""Test-session runners coupling the subject, pipeline and device."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Iterable, Sequence

from .device import DeviceParams, ExotendonDevice, TelemetryRow
from .evaluation import EventReport, IntentTrace, match_events
from .forest import ForestModel
from .pipeline import PipelineConfig, PipelineState, StepRecord
from .signal_io import DEFAULT_SAMPLE_RATE_HZ, Annotation, EmgFrame, SessionRecording, replay
from .states import Command, DevicePhase, HandState, Instruction, intent_for, state_for
from .trainer import Cue, FrameSource, as_cues, frame_times


@dataclass
class RunResult:
    records: list[StepRecord] = field(default_factory=list)
    truth: list[HandState] = field(default_factory=list)
    frames: list[EmgFrame] = field(default_factory=list)
    annotations: list[Annotation] = field(default_factory=list)
    telemetry: list[TelemetryRow] = field(default_factory=list)

    @property
    def times(self) -> tuple[int, ...]:
        return tuple(r.t_ms for r in self.records)

    def command_trace(self) -> IntentTrace:
        return IntentTrace(self.times, tuple(state_for(r.command) for r in self.records))

    def classifier_trace(self) -> IntentTrace:
        """Unfiltered per-frame decisions of the classifier (p_open >= 0.5)."""
        return IntentTrace(
            self.times,
            tuple(HandState.OPEN if r.p_open >= 0.5 else HandState.CLOSE for r in self.records),
        )

    def truth_trace(self) -> IntentTrace:
        return IntentTrace(self.times, tuple(self.truth))

    def report(self) -> EventReport:
        return match_events(self.command_trace(), self.truth_trace(), sample_pred=self.classifier_trace())

    def recording(self, sample_rate_hz: float = DEFAULT_SAMPLE_RATE_HZ) -> SessionRecording:
        return SessionRecording(sample_rate_hz, tuple(self.frames), tuple(self.annotations))


def _log(device: ExotendonDevice, t_ms: int, command: Command) -> TelemetryRow:
    s = device.status
    return TelemetryRow(t_ms, s.position_mm, s.phase, s.force_N, command)


def run_live(
    model: ForestModel | None,
    subject: FrameSource,
    cue_schedule: Iterable[Cue | Sequence],
    pipeline_config: PipelineConfig | None = None,
    device_params: DeviceParams | None = None,
    use_device: bool = True,
    sample_rate_hz: float = DEFAULT_SAMPLE_RATE_HZ,
    button: bool = False,
) -> RunResult:
    """Closed-loop test run against a live frame source.

    Each frame is generated in the device phase current at its timestamp,
    pushed through the pipeline, and the resulting command moves the
    device for one frame period. With ``button=True`` the pipeline is
    bypassed and the device follows the cue directly (pressed while the
    cue is Open).
    """
    cues = as_cues(cue_schedule)
    cfg = pipeline_config or PipelineConfig()
    state = PipelineState(cfg)
    device = ExotendonDevice(device_params, cfg.initial_command) if (use_device or button) else None
    steps = device.params.steps_per_frame(1000.0 / sample_rate_hz) if device else 0
    result = RunResult()
    for t_ms, cue in frame_times(cues, sample_rate_hz):
        phase = device.status.phase if device else DevicePhase.EXTENDED
        frame = subject.frame(t_ms, cue.instruction, phase)
        truth = intent_for(cue.instruction)
        if button:
            cmd = Command(truth.value)
            rec = StepRecord(t_ms, 1.0 if cmd is Command.OPEN else 0.0, float("nan"), float("nan"), cmd, False, False)
        else:
            rec = state.push_frame(model, frame)
        result.records.append(rec)
        result.truth.append(truth)
        result.frames.append(frame)
        result.annotations.append(Annotation(cue.instruction, phase if device else None, truth))
        if device:
            result.telemetry.append(_log(device, t_ms, rec.command))
            device.advance(rec.command, steps)
    return result


def run_recorded(
    model: ForestModel,
    recording: SessionRecording,
    pipeline_config: PipelineConfig | None = None,
    device_params: DeviceParams | None = None,
    use_device: bool = False,
) -> RunResult:
    """Open-loop replay of a recorded, annotated test session."""
    if recording.annotations is None:
        raise ValueError("test session has no ground-truth annotations")
    cfg = pipeline_config or PipelineConfig()
    state = PipelineState(cfg)
    device = ExotendonDevice(device_params, cfg.initial_command) if use_device else None
    steps = device.params.steps_per_frame(recording.frame_period_ms) if device else 0
    result = RunResult()
    for frame, ann in zip(replay(recording), recording.annotations):
        rec = state.push_frame(model, frame)
        truth = ann.label if ann.label is not None else intent_for(ann.instruction)
        result.records.append(rec)
        result.truth.append(truth)
        result.frames.append(frame)
        result.annotations.append(ann)
        if device:
            result.telemetry.append(_log(device, frame.t_ms, rec.command))
            device.advance(rec.command, steps)
    return result


def cue_truth(cues: Sequence[Cue], sample_rate_hz: float = DEFAULT_SAMPLE_RATE_HZ) -> list[tuple[int, HandState]]:
    return [(t, intent_for(c.instruction)) for t, c in frame_times(as_cues(cues), sample_rate_hz)]


def step_latency_ms(result: RunResult, step_time_ms: int, target: Command = Command.OPEN) -> int | None:
    """Time from ``step_time_ms`` to the first command equal to ``target``."""
    for r in result.records:
        if r.t_ms >= step_time_ms and r.command is target:
            return r.t_ms - step_time_ms
    return None


def step_schedule(before: Instruction, after: Instruction, step_ms: int, total_ms: int) -> list[Cue]:
    return [Cue(before, step_ms), Cue(after, total_ms - step_ms)]

"""Device-state-aware training protocol and ground-truth labeling."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Iterable, Protocol, Sequence

from .device import ExotendonDevice
from .signal_io import DEFAULT_SAMPLE_RATE_HZ, Annotation, EmgFrame, SessionRecording
from .states import Command, DevicePhase, HandState, Instruction, intent_for


class ProtocolError(ValueError):
    pass


class FrameSource(Protocol):
    def frame(self, t_ms: int, cue: Instruction, phase: DevicePhase) -> EmgFrame: ...


@dataclass(frozen=True)
class Cue:
    """One step of a cue schedule.

    ``device_command``, when set, is what the operator commands the tendon
    to do from the start of this cue; it is held until another cue changes it.
    """

    instruction: Instruction
    duration_ms: int
    device_command: Command | None = None

    def __post_init__(self):
        if self.duration_ms < 0:
            raise ValueError("cue duration must be nonnegative")


@dataclass(frozen=True)
class LabeledSample:
    frame: EmgFrame
    instruction: Instruction
    phase: DevicePhase | None
    label: HandState | None


def label_for(instruction: Instruction, phase: DevicePhase) -> HandState | None:
    """Ground-truth label for a cue given while the device is in ``phase``.

    Open and Close efforts are labeled as such in every phase. Relaxing
    counts as Close while the tendon is at rest and is left unlabeled
    (discarded) while it moves.
    """
    if instruction is Instruction.OPEN:
        return HandState.OPEN
    if instruction is Instruction.CLOSE:
        return HandState.CLOSE
    return None if phase.moving else HandState.CLOSE


# One counter-clockwise lap of the labeling table, 22.5 s.
_LAP = (
    Cue(Instruction.RELAX, 3000),
    Cue(Instruction.OPEN, 3000),
    Cue(Instruction.OPEN, 3500, Command.OPEN),
    Cue(Instruction.RELAX, 3000),
    Cue(Instruction.CLOSE, 3000),
    Cue(Instruction.CLOSE, 3500, Command.CLOSE),
    Cue(Instruction.RELAX, 3500),
)


def default_schedule(laps: int = 2) -> list[Cue]:
    """Training schedule: two laps, 45 s in total."""
    return list(_LAP) * laps


def default_test_schedule(cycles: int = 4) -> list[Cue]:
    """Test schedule: 15 s cycles with one open and one close event each."""
    cycle = (
        Cue(Instruction.RELAX, 4000),
        Cue(Instruction.OPEN, 5000),
        Cue(Instruction.CLOSE, 3000),
        Cue(Instruction.RELAX, 3000),
    )
    return list(cycle) * cycles


def as_cues(schedule: Iterable[Cue | Sequence]) -> list[Cue]:
    cues = [c if isinstance(c, Cue) else Cue(*c) for c in schedule]
    if not cues:
        raise ProtocolError("cue schedule is empty")
    if sum(c.duration_ms for c in cues) <= 0:
        raise ProtocolError("cue schedule has zero total duration")
    return cues


def frame_times(cues: Sequence[Cue], sample_rate_hz: float) -> list[tuple[int, Cue]]:
    """(t_ms, cue) for every frame tick of the schedule.

    A cue covers [start, start + duration); frames fall on nominal ticks.
    """
    period = 1000.0 / sample_rate_hz
    total = sum(c.duration_ms for c in cues)
    out = []
    bounds = []
    start = 0
    for c in cues:
        bounds.append((start, start + c.duration_ms, c))
        start += c.duration_ms
    k = 0
    i = 0
    while True:
        t = int(round(k * period))
        if t >= total:
            break
        while t >= bounds[i][1]:
            i += 1
        out.append((t, bounds[i][2]))
        k += 1
    return out


def run_protocol(
    subject: FrameSource,
    device: ExotendonDevice,
    cue_schedule: Iterable[Cue | Sequence],
    sample_rate_hz: float = DEFAULT_SAMPLE_RATE_HZ,
    keep_unlabeled: bool = False,
    phase_log: list | None = None,
) -> list[LabeledSample]:
    """Run the training protocol with the operator driving the device.

    Each frame is labeled from the phase the device reports at the frame's
    timestamp; the operator's command then advances the device by one frame
    period. Unlabeled samples are dropped unless ``keep_unlabeled``.
    """
    cues = as_cues(cue_schedule)
    if device.status.phase is not DevicePhase.EXTENDED:
        raise ProtocolError("the protocol must start with the tendon extended")
    steps = device.params.steps_per_frame(1000.0 / sample_rate_hz)
    command = device.target
    samples = []
    for t_ms, cue in frame_times(cues, sample_rate_hz):
        if cue.device_command is not None:
            command = cue.device_command
        phase = device.status.phase
        if phase_log is not None:
            phase_log.append((t_ms, phase))
        frame = subject.frame(t_ms, cue.instruction, phase)
        label = label_for(cue.instruction, phase)
        if label is not None or keep_unlabeled:
            samples.append(LabeledSample(frame, cue.instruction, phase, label))
        device.advance(command, steps)
    return samples


def run_nofunction_protocol(
    subject: FrameSource,
    cue_schedule: Iterable[Cue | Sequence],
    sample_rate_hz: float = DEFAULT_SAMPLE_RATE_HZ,
) -> list[LabeledSample]:
    """Collect training data without the device: labels follow the cue."""
    cues = as_cues(cue_schedule)
    samples = []
    for t_ms, cue in frame_times(cues, sample_rate_hz):
        # The unpowered tendon stays slack, which the subject model sees as extended.
        frame = subject.frame(t_ms, cue.instruction, DevicePhase.EXTENDED)
        samples.append(LabeledSample(frame, cue.instruction, None, intent_for(cue.instruction)))
    return samples


def to_recording(samples: Sequence[LabeledSample], sample_rate_hz: float = DEFAULT_SAMPLE_RATE_HZ) -> SessionRecording:
    return SessionRecording(
        sample_rate_hz,
        tuple(s.frame for s in samples),
        tuple(Annotation(s.instruction, s.phase, s.label) for s in samples),
    )


def training_pairs(samples: Iterable[LabeledSample]) -> list[tuple[EmgFrame, HandState]]:
    return [(s.frame, s.label) for s in samples if s.label is not None]

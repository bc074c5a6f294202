"""Discrete states shared across the toolkit."""

from __future__ import annotations

from enum import Enum


class HandState(str, Enum):
    """Desired hand posture (intent)."""

    OPEN = "open"
    CLOSE = "close"


class Command(str, Enum):
    """Motor command. OPEN retracts the tendon, CLOSE extends it."""

    OPEN = "open"
    CLOSE = "close"


class Instruction(str, Enum):
    """Cue given to the subject."""

    OPEN = "open"
    RELAX = "relax"
    CLOSE = "close"


class DevicePhase(str, Enum):
    EXTENDED = "extended"
    RETRACTING = "retracting"
    RETRACTED = "retracted"
    EXTENDING = "extending"

    @property
    def moving(self) -> bool:
        return self in (DevicePhase.RETRACTING, DevicePhase.EXTENDING)


def intent_for(instruction: Instruction) -> HandState:
    """Ground-truth intent of a cue outside the training protocol.

    Only an active attempt to open counts as Open; relaxing is Close.
    """
    return HandState.OPEN if instruction is Instruction.OPEN else HandState.CLOSE


def command_for(state: HandState) -> Command:
    return Command(state.value)


def state_for(command: Command) -> HandState:
    return HandState(command.value)

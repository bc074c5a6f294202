"""Synthetic EMG subject.

A frame is ``spastic_baseline + separability * mean_activation[cue, phase]
+ noise``, plus ``coactivation_shift`` while the arm is engaged (lifting
during pick and place), clipped to the raw channel range. Channels 1-4
stand for the dorsal (extensor) side of the forearm, 5-8 for the flexors.
Each draw uses its own counter-based RNG stream keyed by (seed, draw
index), so any frame can be regenerated in isolation.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace
from itertools import product
from typing import Mapping

import numpy as np

from .signal_io import CHANNEL_RANGE, N_CHANNELS, EmgFrame
from .states import DevicePhase, Instruction

DEFAULT_REACTION_MS = 200
_SEED_MASK = (1 << 64) - 1

Cell = tuple[Instruction, DevicePhase]

# Effort patterns by cue.
_PATTERNS = {
    Instruction.OPEN: (40.0, 45.0, 35.0, 30.0, 5.0, 0.0, 5.0, 10.0),
    Instruction.RELAX: (0.0, 0.0, 0.0, 0.0, 10.0, 10.0, 8.0, 5.0),
    Instruction.CLOSE: (0.0, 5.0, 0.0, 0.0, 35.0, 40.0, 35.0, 30.0),
}
# How wearing the moving or retracted tendon alters the pattern: with the
# hand held open the stretched flexors fire more and extensor effort drops.
_PHASE_OFFSETS = {
    DevicePhase.EXTENDED: (0.0,) * N_CHANNELS,
    DevicePhase.RETRACTING: (4.0, 4.0, 0.0, 0.0, -4.0, 0.0, 2.0, 0.0),
    DevicePhase.RETRACTED: (-10.0, -8.0, -5.0, 0.0, 10.0, 6.0, 5.0, 0.0),
    DevicePhase.EXTENDING: (0.0, 0.0, 4.0, 4.0, -4.0, -4.0, 0.0, 0.0),
}
_SPASTIC_BASELINE = (5.0, 5.0, 4.0, 6.0, 20.0, 25.0, 18.0, 15.0)
# Elbow extension drags the dorsal forearm muscles up and unloads the flexors.
_COACTIVATION = (35.0, 40.0, 30.0, 0.0, -15.0, -20.0, -10.0, 0.0)


def _vec(values) -> tuple[float, ...]:
    out = tuple(float(v) for v in values)
    if len(out) != N_CHANNELS:
        raise ValueError(f"expected {N_CHANNELS} values, got {len(out)}")
    return out


def default_activation() -> dict[Cell, tuple[float, ...]]:
    return {
        (i, p): tuple(a + b for a, b in zip(_PATTERNS[i], _PHASE_OFFSETS[p]))
        for i, p in product(Instruction, DevicePhase)
    }


@dataclass(frozen=True)
class SubjectProfile:
    mean_activation: Mapping[Cell, tuple[float, ...]] = field(default_factory=default_activation)
    noise_sd: tuple[float, ...] = (6.0,) * N_CHANNELS
    spastic_baseline: tuple[float, ...] = _SPASTIC_BASELINE
    separability: float = 1.0
    rng_seed: int = 0
    coactivation_shift: tuple[float, ...] = (0.0,) * N_CHANNELS
    name: str = "custom"

    def __post_init__(self):
        act = {}
        for cell in product(Instruction, DevicePhase):
            if cell not in self.mean_activation:
                raise ValueError(f"mean_activation lacks {cell[0].value}/{cell[1].value}")
            act[cell] = _vec(self.mean_activation[cell])
        object.__setattr__(self, "mean_activation", act)
        for name in ("noise_sd", "spastic_baseline", "coactivation_shift"):
            object.__setattr__(self, name, _vec(getattr(self, name)))
        if any(s < 0 for s in self.noise_sd):
            raise ValueError("noise_sd must be nonnegative")
        if self.separability < 0:
            raise ValueError("separability must be nonnegative")

    def mean(self, instruction: Instruction, phase: DevicePhase, arm_engaged: bool = False) -> np.ndarray:
        m = np.asarray(self.spastic_baseline) + self.separability * np.asarray(
            self.mean_activation[(instruction, phase)]
        )
        if arm_engaged:
            m = m + np.asarray(self.coactivation_shift)
        return m


def default_profiles() -> dict[str, SubjectProfile]:
    """The three reference profiles.

    ``separable``: Open sits more than ten noise SDs from Relax/Close in
    every device phase. ``overlapping``: class means about one noise SD
    apart. ``coactivating``: separable at rest, but engaging the arm shifts
    every pattern toward the Open pattern on the dorsal channels.
    """
    separable = SubjectProfile(name="separable")
    return {
        "separable": separable,
        "overlapping": replace(separable, separability=0.15, noise_sd=(8.0,) * N_CHANNELS, name="overlapping"),
        "coactivating": replace(separable, coactivation_shift=_COACTIVATION, name="coactivating"),
    }


def _draw_rng(seed: int, draw_index: int) -> np.random.Generator:
    return np.random.Generator(np.random.Philox(key=seed & _SEED_MASK, counter=draw_index))


def generate_frame(
    profile: SubjectProfile,
    instruction: Instruction,
    phase: DevicePhase,
    t_ms: int,
    draw_index: int = 0,
    arm_engaged: bool = False,
) -> EmgFrame:
    mean = profile.mean(instruction, phase, arm_engaged)
    noise = _draw_rng(profile.rng_seed, draw_index).standard_normal(N_CHANNELS) * np.asarray(profile.noise_sd)
    values = np.clip(mean + noise, *CHANNEL_RANGE)
    return EmgFrame(t_ms, tuple(values.tolist()))


class SyntheticSubject:
    """Stateful frame source: numbers its draws and lags cue changes.

    A new cue takes effect on the EMG ``reaction_ms`` after it is given.
    """

    def __init__(self, profile: SubjectProfile, reaction_ms: int = DEFAULT_REACTION_MS, arm_engaged: bool = False):
        if reaction_ms < 0:
            raise ValueError("reaction_ms must be nonnegative")
        self.profile = profile
        self.reaction_ms = reaction_ms
        self.arm_engaged = arm_engaged
        self.draws = 0
        self._acting: Instruction | None = None
        self._pending: tuple[Instruction, int] | None = None
        self._cue: Instruction | None = None

    def acting_instruction(self, cue: Instruction, t_ms: int) -> Instruction:
        if self._cue is None:
            self._cue = self._acting = cue
        elif cue is not self._cue:
            self._cue = cue
            self._pending = (cue, t_ms + self.reaction_ms)
        if self._pending is not None and t_ms >= self._pending[1]:
            self._acting = self._pending[0]
            self._pending = None
        return self._acting

    def frame(self, t_ms: int, cue: Instruction, phase: DevicePhase) -> EmgFrame:
        acting = self.acting_instruction(cue, t_ms)
        f = generate_frame(self.profile, acting, phase, t_ms, self.draws, self.arm_engaged)
        self.draws += 1
        return f

"""Simulated single-DOF exotendon device.

A PID position loop drives tendon travel toward 0 mm (Close, tendon
extended) or full travel (Open, tendon retracted). The PID output is a
velocity request clipped to the motor's travel speed. A linear spring
models the spastic hand's resistance, read out through a series load cell
that saturates at the motor's peak force.
"""

from __future__ import annotations

import csv
import os
from dataclasses import dataclass, field
from typing import IO, Iterable, Sequence

from .states import Command, DevicePhase

REST_TOL_MM = 1e-3
TELEMETRY_HEADER = ("t_ms", "position_mm", "phase", "force_N", "command")


@dataclass(frozen=True)
class PidGains:
    kp: float = 20.0  # 1/s
    ki: float = 1.0  # 1/s^2
    kd: float = 0.05  # s

    def __post_init__(self):
        if min(self.kp, self.ki, self.kd) < 0:
            raise ValueError("PID gains must be nonnegative")


@dataclass(frozen=True)
class DeviceParams:
    travel_max_mm: float = 40.0
    v_max_mm_s: float = 15.0
    f_peak_N: float = 80.0
    pid_gains: PidGains = field(default_factory=PidGains)
    dt_ms: int = 20
    hand_stiffness_N_per_mm: float = 1.5

    def __post_init__(self):
        for name in ("travel_max_mm", "v_max_mm_s", "f_peak_N"):
            if not getattr(self, name) > 0:
                raise ValueError(f"{name} must be positive")
        if self.dt_ms <= 0:
            raise ValueError("dt_ms must be positive")
        if self.hand_stiffness_N_per_mm < 0:
            raise ValueError("hand_stiffness_N_per_mm must be nonnegative")

    @property
    def stroke_mm(self) -> float:
        """Reachable retraction: full travel unless the force cap stops the motor first."""
        if self.hand_stiffness_N_per_mm == 0:
            return self.travel_max_mm
        return min(self.travel_max_mm, self.f_peak_N / self.hand_stiffness_N_per_mm)

    def max_step_mm(self) -> float:
        return self.v_max_mm_s * self.dt_ms / 1000.0

    def steps_per_frame(self, frame_period_ms: float) -> int:
        ratio = frame_period_ms / self.dt_ms
        if abs(ratio - round(ratio)) > 1e-9 or round(ratio) < 1:
            raise ValueError(
                f"device step {self.dt_ms} ms must divide the frame period {frame_period_ms} ms"
            )
        return int(round(ratio))


@dataclass(frozen=True)
class DeviceStatus:
    position_mm: float
    phase: DevicePhase
    force_N: float
    target: Command


class ExotendonDevice:
    def __init__(self, params: DeviceParams | None = None, initial_command: Command = Command.CLOSE):
        self.params = params or DeviceParams()
        self.position_mm = 0.0
        self.target = initial_command
        self.t_ms = 0
        self._integral = 0.0
        self._prev_position = 0.0
        self._phase = DevicePhase.EXTENDED
        self._phase = self._classify_phase(0.0)

    def setpoint(self, command: Command) -> float:
        return self.params.stroke_mm if command is Command.OPEN else 0.0

    def load_cell(self) -> float:
        p = self.params
        return min(p.hand_stiffness_N_per_mm * self.position_mm, p.f_peak_N)

    @property
    def status(self) -> DeviceStatus:
        return DeviceStatus(self.position_mm, self._phase, self.load_cell(), self.target)

    def _classify_phase(self, moved: float) -> DevicePhase:
        stroke = self.params.stroke_mm
        if moved == 0.0:
            if self.position_mm == 0.0 and self.target is Command.CLOSE:
                return DevicePhase.EXTENDED
            if self.position_mm == stroke and self.target is Command.OPEN:
                return DevicePhase.RETRACTED
        return DevicePhase.RETRACTING if self.target is Command.OPEN else DevicePhase.EXTENDING

    def step(self, command: Command) -> DeviceStatus:
        """Advance one control period under ``command``."""
        p = self.params
        g = p.pid_gains
        dt = p.dt_ms / 1000.0
        if command is not self.target:
            self.target = command
            self._integral = 0.0
            self._prev_position = self.position_mm
        goal = self.setpoint(command)
        error = goal - self.position_mm

        if abs(error) <= REST_TOL_MM:
            # Within tolerance the controller parks the motor on the setpoint.
            new_position = goal
            self._integral = 0.0
        else:
            derivative = -(self.position_mm - self._prev_position) / dt
            velocity = g.kp * error + g.ki * self._integral + g.kd * derivative
            vmax = p.v_max_mm_s
            if -vmax < velocity < vmax:
                self._integral += error * dt
            velocity = max(-vmax, min(vmax, velocity))
            new_position = self.position_mm + velocity * dt
            # Do not overshoot the setpoint; the tendon cannot push past it.
            if (goal - self.position_mm) * (goal - new_position) < 0:
                new_position = goal

        new_position = max(0.0, min(p.stroke_mm, new_position))
        step = new_position - self.position_mm
        cap = p.max_step_mm()
        if abs(step) > cap:
            new_position = self.position_mm + (cap if step > 0 else -cap)
        moved = new_position - self.position_mm
        self._prev_position = self.position_mm
        self.position_mm = new_position
        self.t_ms += p.dt_ms
        self._phase = self._classify_phase(moved)
        return self.status

    def advance(self, command: Command, n_steps: int) -> DeviceStatus:
        for _ in range(n_steps):
            self.step(command)
        return self.status


def step(device: ExotendonDevice, command: Command) -> DeviceStatus:
    return device.step(command)


def load_cell(device: ExotendonDevice) -> float:
    return device.load_cell()


@dataclass(frozen=True)
class TelemetryRow:
    t_ms: int
    position_mm: float
    phase: DevicePhase
    force_N: float
    command: Command


class TelemetryFormatError(ValueError):
    pass


def write_telemetry(rows: Iterable[TelemetryRow], destination: str | os.PathLike | IO[str]) -> None:
    if isinstance(destination, (str, os.PathLike)):
        with open(destination, "w", encoding="utf-8", newline="") as fh:
            write_telemetry(rows, fh)
        return
    writer = csv.writer(destination, lineterminator="\n")
    writer.writerow(TELEMETRY_HEADER)
    for r in rows:
        writer.writerow([r.t_ms, repr(r.position_mm), r.phase.value, repr(r.force_N), r.command.value])


def read_telemetry(source: str | os.PathLike | IO[str]) -> list[TelemetryRow]:
    if isinstance(source, (str, os.PathLike)):
        with open(source, "r", encoding="utf-8", newline="") as fh:
            return read_telemetry(fh)
    reader = csv.reader(source)
    header = next(reader, None)
    if header is None or tuple(header) != TELEMETRY_HEADER:
        raise TelemetryFormatError(f"row 1: malformed telemetry header {header!r}")
    rows = []
    for line, fields in enumerate(reader, start=2):
        if len(fields) != len(TELEMETRY_HEADER):
            raise TelemetryFormatError(f"row {line}: expected {len(TELEMETRY_HEADER)} fields")
        try:
            rows.append(
                TelemetryRow(
                    int(fields[0]),
                    float(fields[1]),
                    DevicePhase(fields[2]),
                    float(fields[3]),
                    Command(fields[4]),
                )
            )
        except ValueError as exc:
            raise TelemetryFormatError(f"row {line}: {exc}") from None
    return rows


def drive(device: ExotendonDevice, commands: Sequence[Command], t0_ms: int = 0) -> list[TelemetryRow]:
    """Step the device once per command (direct-command mode) and log telemetry."""
    rows = []
    for i, cmd in enumerate(commands):
        s = device.step(cmd)
        rows.append(TelemetryRow(t0_ms + (i + 1) * device.params.dt_ms, s.position_mm, s.phase, s.force_N, cmd))
    return rows

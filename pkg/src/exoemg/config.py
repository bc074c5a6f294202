"""Run configuration: an INI file with one section per module.

Example::

    [run]
    seed = 7
    mode = device
    output_dir = out

    [pipeline]
    open_threshold = 0.8

    [schedule]
    test = relax:4000, open:5000, close:3000, relax:3000
    test_repeats = 4

Cue syntax is ``instruction:duration_ms[:device_command]``. Every key is
optional; see ``RunConfig`` for defaults.

Seeds: the single global ``seed`` fans out to per-purpose seeds with
``derive_seed(seed, name)``, the first 64-bit word of
``SeedSequence([seed, crc32(name)])``. Purposes are ``forest``,
``subject.train`` and ``subject.test``.
"""

from __future__ import annotations

import configparser
import os
import zlib
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np

from .device import DeviceParams, PidGains
from .forest import ForestHyperparams
from .pipeline import PipelineConfig
from .signal_io import DEFAULT_SAMPLE_RATE_HZ, N_CHANNELS
from .states import Command, DevicePhase, Instruction
from .subject import DEFAULT_REACTION_MS, SubjectProfile, default_profiles
from .trainer import Cue, default_schedule, default_test_schedule

MODES = ("no-device", "device", "pickplace", "button")


class ConfigError(ValueError):
    pass


def derive_seed(seed: int, name: str) -> int:
    ss = np.random.SeedSequence([seed & ((1 << 64) - 1), zlib.crc32(name.encode("utf-8"))])
    return int(ss.generate_state(1, np.uint64)[0])


def parse_cues(text: str) -> list[Cue]:
    cues = []
    for item in text.replace("\n", ",").split(","):
        item = item.strip()
        if not item:
            continue
        parts = [p.strip() for p in item.split(":")]
        if len(parts) not in (2, 3):
            raise ConfigError(f"bad cue {item!r}; expected instruction:duration_ms[:command]")
        try:
            cmd = Command(parts[2]) if len(parts) == 3 else None
            cues.append(Cue(Instruction(parts[0]), int(parts[1]), cmd))
        except ValueError as exc:
            raise ConfigError(f"bad cue {item!r}: {exc}") from None
    return cues


def format_cues(cues) -> str:
    return ", ".join(
        f"{c.instruction.value}:{c.duration_ms}" + (f":{c.device_command.value}" if c.device_command else "")
        for c in cues
    )


@dataclass
class RunConfig:
    seed: int = 0
    sample_rate_hz: float = DEFAULT_SAMPLE_RATE_HZ
    mode: str = "device"
    output_dir: Path = Path("out")
    recording: Path | None = None
    forest: ForestHyperparams = field(default_factory=ForestHyperparams)
    pipeline: PipelineConfig = field(default_factory=PipelineConfig)
    device: DeviceParams = field(default_factory=DeviceParams)
    profile: SubjectProfile = field(default_factory=lambda: default_profiles()["separable"])
    reaction_ms: int = DEFAULT_REACTION_MS
    train_arm_engaged: bool = False
    train_schedule: list[Cue] = field(default_factory=default_schedule)
    test_schedule: list[Cue] = field(default_factory=default_test_schedule)
    button_schedule: list[Cue] | None = None

    def __post_init__(self):
        if self.mode not in MODES:
            raise ConfigError(f"mode must be one of {', '.join(MODES)}; got {self.mode!r}")
        if not self.sample_rate_hz > 0:
            raise ConfigError("sample_rate_hz must be positive")
        if self.recording is not None and not Path(self.recording).exists():
            raise ConfigError(f"recording {self.recording} does not exist")

    @property
    def uses_device(self) -> bool:
        return self.mode != "no-device"

    @property
    def test_arm_engaged(self) -> bool:
        return self.mode == "pickplace"

    def forest_hyperparams(self) -> ForestHyperparams:
        return replace(self.forest, rng_seed=derive_seed(self.seed, "forest"))

    def subject_profile(self, purpose: str) -> SubjectProfile:
        return replace(self.profile, rng_seed=derive_seed(self.seed, f"subject.{purpose}"))


def _vector(text: str, key: str) -> tuple[float, ...]:
    try:
        values = tuple(float(v) for v in text.split(","))
    except ValueError:
        raise ConfigError(f"{key}: expected {N_CHANNELS} comma-separated numbers") from None
    if len(values) != N_CHANNELS:
        raise ConfigError(f"{key}: expected {N_CHANNELS} values, got {len(values)}")
    return values


def _get(section, key, conv, default):
    if section is None or key not in section or section[key].strip() == "":
        return default
    try:
        return conv(section[key].strip())
    except ValueError as exc:
        raise ConfigError(f"[{section.name}] {key}: {exc}") from None


def _bool(text: str) -> bool:
    lowered = text.lower()
    if lowered in ("1", "true", "yes", "on"):
        return True
    if lowered in ("0", "false", "no", "off"):
        return False
    raise ValueError(f"not a boolean: {text!r}")


def load_config(path: str | os.PathLike | None = None, **overrides) -> RunConfig:
    """Load a config file (or defaults when ``path`` is None) and apply overrides."""
    cp = configparser.ConfigParser(inline_comment_prefixes=(";",))
    if path is not None:
        if not Path(path).exists():
            raise ConfigError(f"config file {path} does not exist")
        cp.read(path, encoding="utf-8")
    sec = {name: (cp[name] if cp.has_section(name) else None) for name in ("run", "forest", "pipeline", "device", "subject", "schedule")}
    known = {"run", "forest", "pipeline", "device", "subject", "schedule"}
    unknown = set(cp.sections()) - known
    if unknown:
        raise ConfigError(f"unknown config sections: {', '.join(sorted(unknown))}")

    try:
        run = sec["run"]
        kw = dict(
            seed=_get(run, "seed", int, 0),
            sample_rate_hz=_get(run, "sample_rate_hz", float, DEFAULT_SAMPLE_RATE_HZ),
            mode=_get(run, "mode", str, "device"),
            output_dir=_get(run, "output_dir", Path, Path("out")),
            recording=_get(run, "recording", Path, None),
        )

        f = sec["forest"]
        kw["forest"] = ForestHyperparams(
            n_trees=_get(f, "n_trees", int, 64),
            max_depth=_get(f, "max_depth", int, None),
            features_per_split=_get(f, "features_per_split", int, 3),
            min_samples_leaf=_get(f, "min_samples_leaf", int, 1),
        )

        p = sec["pipeline"]
        kw["pipeline"] = PipelineConfig(
            window_ms=_get(p, "window_ms", int, 500),
            open_threshold=_get(p, "open_threshold", float, 0.75),
            close_threshold=_get(p, "close_threshold", float, 0.75),
            initial_command=_get(p, "initial_command", Command, Command.CLOSE),
        )

        d = sec["device"]
        defaults = DeviceParams()
        kw["device"] = DeviceParams(
            travel_max_mm=_get(d, "travel_max_mm", float, defaults.travel_max_mm),
            v_max_mm_s=_get(d, "v_max_mm_s", float, defaults.v_max_mm_s),
            f_peak_N=_get(d, "f_peak_n", float, defaults.f_peak_N),
            pid_gains=PidGains(
                _get(d, "kp", float, defaults.pid_gains.kp),
                _get(d, "ki", float, defaults.pid_gains.ki),
                _get(d, "kd", float, defaults.pid_gains.kd),
            ),
            dt_ms=_get(d, "dt_ms", int, defaults.dt_ms),
            hand_stiffness_N_per_mm=_get(d, "hand_stiffness_n_per_mm", float, defaults.hand_stiffness_N_per_mm),
        )

        s = sec["subject"]
        profiles = default_profiles()
        name = _get(s, "profile", str, "separable")
        if name not in profiles:
            raise ConfigError(f"unknown subject profile {name!r}; choose from {', '.join(profiles)}")
        profile = profiles[name]
        changes = {}
        if s is not None:
            for key in ("noise_sd", "spastic_baseline", "coactivation_shift"):
                if key in s:
                    changes[key] = _vector(s[key], key)
            if "separability" in s:
                changes["separability"] = float(s["separability"])
            act = dict(profile.mean_activation)
            for key in s:
                if key.startswith("mean."):
                    try:
                        _, instr, phase = key.split(".")
                        act[(Instruction(instr), DevicePhase(phase))] = _vector(s[key], key)
                    except ValueError:
                        raise ConfigError(f"bad key {key!r}; expected mean.<instruction>.<phase>") from None
            changes["mean_activation"] = act
        kw["profile"] = replace(profile, **changes)
        kw["reaction_ms"] = _get(s, "reaction_ms", int, DEFAULT_REACTION_MS)
        kw["train_arm_engaged"] = _get(s, "train_arm_engaged", _bool, False)

        sch = sec["schedule"]
        train = _get(sch, "train", parse_cues, None)
        test = _get(sch, "test", parse_cues, None)
        train_rep = _get(sch, "train_repeats", int, 1 if train is not None else 2)
        test_rep = _get(sch, "test_repeats", int, 1 if test is not None else 4)
        kw["train_schedule"] = (train * train_rep) if train is not None else default_schedule(train_rep)
        kw["test_schedule"] = (test * test_rep) if test is not None else default_test_schedule(test_rep)
        kw["button_schedule"] = _get(sch, "button", parse_cues, None)
    except ConfigError:
        raise
    except ValueError as exc:
        raise ConfigError(str(exc)) from None

    for key, value in overrides.items():
        if value is not None:
            kw[key] = value
    return RunConfig(**kw)

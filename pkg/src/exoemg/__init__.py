"""EMG-driven exotendon orthosis control toolkit."""

from .forest import ForestHyperparams, ForestModel, classify, train_forest
from .pipeline import PipelineConfig, PipelineState, median
from .signal_io import EmgFrame, SessionRecording, read_session, replay, write_session
from .states import Command, DevicePhase, HandState, Instruction

__version__ = "0.1.0"

__all__ = [
    "Command",
    "DevicePhase",
    "EmgFrame",
    "ForestHyperparams",
    "ForestModel",
    "HandState",
    "Instruction",
    "PipelineConfig",
    "PipelineState",
    "SessionRecording",
    "classify",
    "median",
    "read_session",
    "replay",
    "train_forest",
    "write_session",
]

"""Command-line entry point: ``exoemg synth | train | run | eval``."""

from __future__ import annotations

import argparse
import logging
import sys
from pathlib import Path

from .config import MODES, ConfigError, RunConfig, load_config
from .device import ExotendonDevice, write_telemetry
from .evaluation import (
    TraceError,
    force_peaks,
    format_table,
    match_events,
    read_intent_trace,
    write_event_details,
    write_report_csv,
)
from .forest import ModelFormatError, TrainingError, load_model, save_model, train_forest, training_accuracy
from .pipeline import TimeRegressionError, write_trace
from .signal_io import SessionFormatError, read_session, write_session
from .simulation import run_live, run_recorded
from .subject import SyntheticSubject
from .trainer import ProtocolError, run_nofunction_protocol, run_protocol, to_recording, training_pairs

log = logging.getLogger("exoemg")

TRAIN_FILE = "train.csv"
TEST_FILE = "test.csv"
MODEL_FILE = "model.json"


class CliError(Exception):
    pass


def _subject(cfg: RunConfig, purpose: str, arm_engaged: bool) -> SyntheticSubject:
    return SyntheticSubject(cfg.subject_profile(purpose), cfg.reaction_ms, arm_engaged)


def cmd_synth(cfg: RunConfig) -> tuple[Path, Path]:
    """Write labeled training and test sessions for the configured subject."""
    train_subject = _subject(cfg, "train", cfg.train_arm_engaged)
    if cfg.uses_device:
        samples = run_protocol(train_subject, ExotendonDevice(cfg.device), cfg.train_schedule, cfg.sample_rate_hz)
    else:
        samples = run_nofunction_protocol(train_subject, cfg.train_schedule, cfg.sample_rate_hz)
    # Test session: the device (if any) follows the cue, as under button control.
    test = run_live(
        None,
        _subject(cfg, "test", cfg.test_arm_engaged),
        cfg.test_schedule,
        cfg.pipeline,
        cfg.device,
        use_device=cfg.uses_device,
        sample_rate_hz=cfg.sample_rate_hz,
        button=True,
    )
    cfg.output_dir.mkdir(parents=True, exist_ok=True)
    train_path = cfg.output_dir / TRAIN_FILE
    test_path = cfg.output_dir / TEST_FILE
    write_session(to_recording(samples, cfg.sample_rate_hz), train_path)
    write_session(test.recording(cfg.sample_rate_hz), test_path)
    log.info("wrote %d training and %d test frames", len(samples), len(test.frames))
    return train_path, test_path


def cmd_train(cfg: RunConfig, session: Path, model_path: Path) -> float:
    rec = read_session(session)
    if abs(rec.sample_rate_hz - cfg.sample_rate_hz) > 1e-9:
        raise CliError(f"session sample rate {rec.sample_rate_hz} Hz differs from config {cfg.sample_rate_hz} Hz")
    pairs = rec.labeled_pairs()
    if not pairs:
        raise TrainingError("training session has no labeled frames")
    model = train_forest(pairs, cfg.forest_hyperparams())
    model.metadata = {"sample_rate_hz": rec.sample_rate_hz, "training_frames": len(pairs)}
    model_path.parent.mkdir(parents=True, exist_ok=True)
    save_model(model, model_path)
    acc = training_accuracy(model, pairs)
    print(f"trained {len(model.trees)} trees on {len(pairs)} frames; training accuracy {acc * 100:.2f}%")
    return acc


def cmd_run(cfg: RunConfig, model_path: Path | None, session: Path | None):
    model = None
    if cfg.mode != "button":
        if model_path is None or not model_path.exists():
            raise CliError(f"model file {model_path} not found")
        model = load_model(model_path)
        rate = model.metadata.get("sample_rate_hz", cfg.sample_rate_hz)
        if abs(rate - cfg.sample_rate_hz) > 1e-9:
            raise CliError(f"model was trained at {rate} Hz but the run uses {cfg.sample_rate_hz} Hz")

    session = session or cfg.recording
    if session is not None and cfg.mode != "button":
        rec = read_session(session)
        if abs(rec.sample_rate_hz - cfg.sample_rate_hz) > 1e-9:
            raise CliError(f"session sample rate {rec.sample_rate_hz} Hz differs from config {cfg.sample_rate_hz} Hz")
        result = run_recorded(model, rec, cfg.pipeline, cfg.device, use_device=cfg.uses_device)
    else:
        schedule = cfg.button_schedule if (cfg.mode == "button" and cfg.button_schedule) else cfg.test_schedule
        result = run_live(
            model,
            _subject(cfg, "test", cfg.test_arm_engaged),
            schedule,
            cfg.pipeline,
            cfg.device,
            use_device=cfg.uses_device,
            sample_rate_hz=cfg.sample_rate_hz,
            button=cfg.mode == "button",
        )

    out = cfg.output_dir
    out.mkdir(parents=True, exist_ok=True)
    write_trace(result.records, out / "trace.csv", truth=result.truth)
    report = result.report()
    named = [(cfg.mode, report)]
    table = format_table(named)
    (out / "report.txt").write_text(table, encoding="utf-8")
    write_report_csv(named, out / "report.csv")
    write_event_details(report, out / "events.csv")
    print(table, end="")
    if result.telemetry:
        write_telemetry(result.telemetry, out / "telemetry.csv")
        peaks = force_peaks(result.telemetry)
        if peaks:
            print("force peaks (N): " + ", ".join(f"{p:.1f}" for p in peaks))
    return report


def cmd_eval(pred_path: Path, truth_path: Path, pred_column: str | None = None, truth_column: str | None = None, out: Path | None = None):
    pred = read_intent_trace(pred_path, pred_column)
    truth = read_intent_trace(truth_path, truth_column)
    report = match_events(pred, truth)
    named = [(pred_path.stem, report)]
    table = format_table(named)
    print(table, end="")
    if out is not None:
        out.mkdir(parents=True, exist_ok=True)
        (out / "eval_report.txt").write_text(table, encoding="utf-8")
        write_report_csv(named, out / "eval_report.csv")
        write_event_details(report, out / "eval_events.csv")
    return report


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="exoemg", description="EMG-driven exotendon control toolkit")
    parser.add_argument("-v", "--verbose", action="store_true")
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("-c", "--config", type=Path, help="INI config file")
    common.add_argument("--seed", type=int, help="override the global seed")
    common.add_argument("-o", "--output-dir", type=Path, help="override the output directory")
    common.add_argument("--mode", choices=MODES, help="override the run mode")
    sub = parser.add_subparsers(dest="command", required=True)

    sub.add_parser("synth", parents=[common], help="generate labeled training and test sessions")

    p = sub.add_parser("train", parents=[common], help="train a forest on a labeled session")
    p.add_argument("--session", type=Path, help=f"training session (default: <output-dir>/{TRAIN_FILE})")
    p.add_argument("--model", type=Path, help=f"model output (default: <output-dir>/{MODEL_FILE})")

    p = sub.add_parser("run", parents=[common], help="run the control pipeline and evaluate it")
    p.add_argument("--model", type=Path, help=f"trained model (default: <output-dir>/{MODEL_FILE})")
    p.add_argument("--session", type=Path, help="recorded test session; omit for a live synthetic subject")

    p = sub.add_parser("eval", help="score a predicted trace against ground truth")
    p.add_argument("--pred", type=Path, required=True)
    p.add_argument("--truth", type=Path, required=True)
    p.add_argument("--pred-column")
    p.add_argument("--truth-column")
    p.add_argument("-o", "--output-dir", type=Path)
    return parser


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    try:
        if args.command == "eval":
            cmd_eval(args.pred, args.truth, args.pred_column, args.truth_column, args.output_dir)
            return 0
        cfg = load_config(args.config, seed=args.seed, output_dir=args.output_dir, mode=args.mode)
        if args.command == "synth":
            cmd_synth(cfg)
        elif args.command == "train":
            cmd_train(cfg, args.session or cfg.output_dir / TRAIN_FILE, args.model or cfg.output_dir / MODEL_FILE)
        elif args.command == "run":
            cmd_run(cfg, args.model or cfg.output_dir / MODEL_FILE, args.session)
    except (
        CliError,
        ConfigError,
        SessionFormatError,
        TrainingError,
        ModelFormatError,
        ProtocolError,
        TraceError,
        TimeRegressionError,
        OSError,
    ) as exc:
        print(f"exoemg {args.command}: error: {exc}", file=sys.stderr)
        return 2
    return 0


if __name__ == "__main__":
    sys.exit(main())

"""
run.py

This script is the entry point of sed-suite-bench.

Usage:
    run.py [-h] {generate,evaluate,analyze,validate-bank} ...

    Build synthetic SED evaluation suites, score predictions against them and
    turn the scores into comparison tables and charts.

    subcommands:
    generate            Render evaluation suites from a source bank.
    evaluate            Score a predictions file against a suite's reference.
    analyze             Difference tables, grouped means, breakdowns, charts.
    validate-bank       Validate a source bank; optionally re-verify suites.

    Every subcommand accepts --config FILE (JSON mirroring the flags; flags
    win) and --verbose. Exit codes: 0 success, 2 configuration, 3 bank,
    profile or synthesis, 4 annotation parsing or metric, 5 schema.
"""

import argparse
import json
import logging
import sys
from decimal import Decimal
from pathlib import Path
from typing import Any, Literal

from pydantic import BaseModel, ConfigDict, Field, ValidationError, model_validator

from analysis import (LONG_EVENT_SECONDS, BreakdownSpec, Factor, condition_breakdown,
                      diff_table, export_breakdown, export_series, export_table,
                      group_mean, precision_recall_export, read_score_table, breakdown)
from audio_utils import FLOAT, PCM_16
from errors import ConfigError, SchemaError, ScbenchError, SynthError
from metric import AnnotationSet, MetricConfig, evaluate, read_annotations
from response import BankSummary, ErrorResponse, ScoreReport, SuiteSummary
from soundscape import load_profile
from source_bank import SourceBank, load_bank, load_vocabulary
from suites import (GRID_SUITES, LONG_CLIPS, ONSET_WINDOWS, PROTOCOL_COUNTS, REF, SINGLE,
                    Suite, build_60s, build_condition_grid, build_onset_variants,
                    build_ref, build_single, load_reference, verify_suite, write_suite)

COMMANDS = ("generate", "evaluate", "analyze", "validate-bank")
SUITE_GROUPS = {
    "onset": tuple(ONSET_WINDOWS),
    "grid": GRID_SUITES,
    "all": (REF, LONG_CLIPS, *ONSET_WINDOWS, SINGLE, *GRID_SUITES),
}
SUITE_ORDER = SUITE_GROUPS["all"]
PROFILE_SUITES = {REF, LONG_CLIPS, *GRID_SUITES}
REPORT_JSON = "score_report.json"
REPORT_TEXT = "score_report.txt"

logger = logging.getLogger(name="scbench")
logger.setLevel(logging.INFO)

log_handler = logging.StreamHandler(sys.stderr)
log_handler.setLevel(logging.DEBUG)
log_formatter = logging.Formatter(
    "[%(asctime)s] [%(name)s] [%(levelname)s]\t%(message)s")
log_handler.setFormatter(log_formatter)
logger.addHandler(log_handler)


class RunConfig(BaseModel):
    """Everything one invocation needs. Mirrors the command-line flags."""

    model_config = ConfigDict(extra="forbid")

    command: Literal["generate", "evaluate", "analyze", "validate-bank"]
    verbose: bool = False

    # assets
    bank: Path | None = None
    profile: Path | None = None
    vocabulary: Path | None = None

    # generate
    seed: int | None = Field(default=None, ge=0)
    out: Path = Path("out")
    suites: list[str] = [REF]
    n: int | None = Field(default=None, ge=1)
    workers: int = Field(default=1, ge=1)
    force: bool = False
    float_audio: bool = False
    save_stems: bool = False
    reverb_background: bool = False
    renormalize_wet: bool = True

    # evaluate / metric overrides
    reference: Path | None = None
    predictions: Path | None = None
    onset_collar: Decimal | None = None
    offset_collar_min: Decimal | None = None
    offset_collar_pct: Decimal | None = None
    ignore_unknown_labels: bool = False

    # analyze
    table: Path | None = None
    diff: tuple[str, str] | None = None
    group: str | None = None
    reports: dict[str, Path] = {}
    pairs: list[tuple[Path, Path]] = []
    breakdown: Factor | None = None
    edges: list[float] | None = None
    long_threshold: float | None = Field(default=None, gt=0)

    # validate-bank
    verify: list[Path] = []

    @model_validator(mode="after")
    def _required(self) -> "RunConfig":
        if self.command == "generate":
            if self.seed is None:
                raise ValueError("seed: required for generate")
            if self.bank is None:
                raise ValueError("bank: required for generate")
            unknown = [s for s in self.suites if s not in SUITE_GROUPS and s not in SUITE_ORDER]
            if unknown:
                raise ValueError(f"suites: unknown suite {unknown}")
        elif self.command == "evaluate":
            if self.reference is None or self.predictions is None:
                raise ValueError("reference, predictions: required for evaluate")
        elif self.command == "validate-bank":
            if self.bank is None:
                raise ValueError("bank: required for validate-bank")
        return self

    def metric_config(self) -> MetricConfig:
        overrides = {k: getattr(self, k) for k in
                     ("onset_collar", "offset_collar_min", "offset_collar_pct")
                     if getattr(self, k) is not None}
        try:
            return MetricConfig(ignore_unknown_labels=self.ignore_unknown_labels, **overrides)
        except ValidationError as e:
            raise ConfigError(f"metric: {_validation_details(e)}") from e

    def selected_suites(self) -> list[str]:
        wanted = set()
        for name in self.suites:
            wanted.update(SUITE_GROUPS.get(name, (name,)))
        return [name for name in SUITE_ORDER if name in wanted]


def _validation_details(e: ValidationError) -> str:
    return "; ".join(f"{'.'.join(str(p) for p in err['loc']) or 'config'}: {err['msg']}"
                     for err in e.errors())


def _common_arguments(parser: argparse.ArgumentParser) -> None:
    parser.add_argument(
        "--config",
        type=str,
        help="JSON file mirroring the flags. Flags given on the command line win."
    )
    parser.add_argument(
        "-v", "--verbose",
        action="store_true",
        help="Log per-clip details."
    )
    parser.add_argument(
        "--vocabulary",
        type=str,
        help="Vocabulary JSON (default: config/desed_vocabulary.json)."
    )


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="run.py",
        description="Synthetic soundscape suites for sound event detection benchmarking.",
        argument_default=argparse.SUPPRESS
    )
    subparsers = parser.add_subparsers(dest="command", required=True)

    generate = subparsers.add_parser(
        "generate", help="Render evaluation suites from a source bank.",
        argument_default=argparse.SUPPRESS)
    _common_arguments(generate)
    generate.add_argument("--bank", type=str, help="Source bank manifest (JSON).")
    generate.add_argument("--profile", type=str, help="Generation profile (JSON).")
    generate.add_argument("--seed", type=int, help="Master seed. Required.")
    generate.add_argument("--out", type=str, help="Output directory (default: out).")
    generate.add_argument(
        "--suite",
        dest="suites",
        action="append",
        help="Suite to build; repeatable. One of: "
             + ", ".join((*SUITE_ORDER, *SUITE_GROUPS)) + " (default: ref)."
    )
    generate.add_argument("--n", type=int, help="Clips per suite, overriding the protocol count.")
    generate.add_argument("--workers", type=int, help="Render threads (default: 1).")
    generate.add_argument("--force", action="store_true",
                          help="Replace suites that already exist.")
    generate.add_argument("--float-audio", dest="float_audio", action="store_true",
                          help="Write 32-bit float WAVs instead of 16-bit PCM.")
    generate.add_argument("--save-stems", dest="save_stems", action="store_true",
                          help="Also write the background and per-event stems.")
    generate.add_argument("--reverb-background", dest="reverb_background",
                          action="store_true",
                          help="Reverberate the background in reverberant cells.")
    generate.add_argument("--no-renormalize", dest="renormalize_wet", action="store_false",
                          help="Keep wet events at their convolved level.")

    evaluate_parser = subparsers.add_parser(
        "evaluate", help="Score a predictions file against a suite's reference.",
        argument_default=argparse.SUPPRESS)
    _common_arguments(evaluate_parser)
    evaluate_parser.add_argument(
        "--reference", type=str,
        help="Suite directory, or a reference annotation file.")
    evaluate_parser.add_argument("--predictions", type=str, help="Predictions annotation file.")
    evaluate_parser.add_argument("--out", type=str, help="Where reports are written.")
    evaluate_parser.add_argument("--onset-collar", dest="onset_collar", type=str)
    evaluate_parser.add_argument("--offset-collar-min", dest="offset_collar_min", type=str)
    evaluate_parser.add_argument("--offset-collar-pct", dest="offset_collar_pct", type=str)
    evaluate_parser.add_argument("--ignore-unknown-labels", dest="ignore_unknown_labels",
                                 action="store_true",
                                 help="Drop events whose label is outside the vocabulary.")

    analyze = subparsers.add_parser(
        "analyze", help="Difference tables, grouped means, breakdowns, charts.",
        argument_default=argparse.SUPPRESS)
    _common_arguments(analyze)
    analyze.add_argument("--out", type=str, help="Where artifacts are written.")
    analyze.add_argument("--table", type=str, help="Score table CSV.")
    analyze.add_argument("--diff", nargs=2, metavar=("A", "B"),
                         help="Append column B-A to the score table.")
    analyze.add_argument("--group", type=str, metavar="TAG",
                         help="Mean score per value of a tag column.")
    analyze.add_argument("--report", dest="report_args", action="append", metavar="NAME=PATH",
                         help="A score_report.json or an evaluate output directory; repeatable.")
    analyze.add_argument("--breakdown", type=str, choices=[f.value for f in Factor])
    analyze.add_argument("--pair", dest="pairs", nargs=2, action="append",
                         metavar=("SUITE_DIR", "PREDICTIONS"),
                         help="Suite and its predictions for --breakdown; repeatable.")
    analyze.add_argument("--edges", nargs="+", type=float,
                         help="Duration bin edges in seconds (default: 0 1 3 5 10).")
    analyze.add_argument("--long-threshold", dest="long_threshold", type=float,
                         help="Only count reference events at least this long "
                              f"(onset-window default: {LONG_EVENT_SECONDS:g} s).")
    analyze.add_argument("--onset-collar", dest="onset_collar", type=str)
    analyze.add_argument("--offset-collar-min", dest="offset_collar_min", type=str)
    analyze.add_argument("--offset-collar-pct", dest="offset_collar_pct", type=str)

    validate = subparsers.add_parser(
        "validate-bank", help="Validate a source bank; optionally re-verify suites.",
        argument_default=argparse.SUPPRESS)
    _common_arguments(validate)
    validate.add_argument("--bank", type=str, help="Source bank manifest (JSON).")
    validate.add_argument("--suite", dest="verify", action="append", metavar="SUITE_DIR",
                          help="Re-render a written suite and compare audio digests.")
    validate.add_argument("--workers", type=int, help="Render threads (default: 1).")

    return parser


def load_config(argv: list[str] | None = None) -> RunConfig:
    """Parse flags, merge them over the --config file, validate."""
    args = vars(build_parser().parse_args(argv))
    values: dict[str, Any] = {}

    config_path = args.pop("config", None)
    if config_path is not None:
        try:
            with open(config_path, encoding="utf-8") as f:
                values = json.load(f)
        except FileNotFoundError:
            raise ConfigError(f"config: no such file {config_path}") from None
        except json.JSONDecodeError as e:
            raise ConfigError(f"config: invalid JSON in {config_path} ({e})") from None
        if not isinstance(values, dict):
            raise ConfigError(f"config: {config_path} must hold a JSON object")
        values.pop("command", None)

    report_args = args.pop("report_args", None)
    if report_args is not None:
        reports = {}
        for item in report_args:
            name, sep, path = item.partition("=")
            if not sep or not name or not path:
                raise ConfigError(f"report: expected NAME=PATH, got '{item}'")
            reports[name] = path
        args["reports"] = reports

    values.update(args)
    try:
        return RunConfig.model_validate(values)
    except ValidationError as e:
        raise ConfigError(_validation_details(e)) from e


def _vocabulary(cfg: RunConfig) -> list[str] | None:
    return load_vocabulary(cfg.vocabulary) if cfg.vocabulary is not None else None


def cmd_generate(cfg: RunConfig) -> list[SuiteSummary]:
    wanted = cfg.selected_suites()
    if PROFILE_SUITES.intersection(wanted) and cfg.profile is None:
        raise ConfigError(f"profile: required for suites {sorted(PROFILE_SUITES & set(wanted))}")

    bank = load_bank(cfg.bank, vocabulary=_vocabulary(cfg))
    profile = load_profile(cfg.profile) if cfg.profile is not None else None
    seed, workers = cfg.seed, cfg.workers

    def count(protocol: str) -> int:
        return cfg.n if cfg.n is not None else PROTOCOL_COUNTS[protocol]

    built: dict[str, Suite] = {}
    ref = None
    if REF in wanted or set(GRID_SUITES).intersection(wanted):
        ref = build_ref(profile, bank, seed, n=count(REF), workers=workers)
        built[REF] = ref
    if LONG_CLIPS in wanted:
        built[LONG_CLIPS] = build_60s(profile, bank, seed, n=count(LONG_CLIPS), workers=workers)
    if set(ONSET_WINDOWS).intersection(wanted):
        built.update(build_onset_variants(bank, seed, n=count("onset"), workers=workers))
    if SINGLE in wanted:
        built[SINGLE] = build_single(bank, seed, n=count(SINGLE), workers=workers)
    if set(GRID_SUITES).intersection(wanted):
        built.update(build_condition_grid(
            ref, bank, bank.non_targets, bank.rooms, seed,
            reverb_background=cfg.reverb_background, renormalize_wet=cfg.renormalize_wet))

    subtype = FLOAT if cfg.float_audio else PCM_16
    summaries = []
    for name in wanted:
        _, summary = write_suite(built[name], bank, cfg.out, workers=workers, force=cfg.force,
                                 subtype=subtype, save_stems=cfg.save_stems)
        print(summary.summary_line())
        summaries.append(summary)
    return summaries


def _read_reference(path: Path) -> tuple[AnnotationSet, list[str] | None]:
    """Reference events, plus the suite's vocabulary when `path` is a suite."""
    if path.is_dir():
        manifest, reference = load_reference(path)
        return reference, manifest.vocabulary
    return read_annotations(path), None


def _default_vocabulary(cfg: RunConfig, suite_vocabulary: list[str] | None = None) -> list[str]:
    return _vocabulary(cfg) or suite_vocabulary or load_vocabulary()


def cmd_evaluate(cfg: RunConfig) -> ScoreReport:
    metric_cfg = cfg.metric_config()
    reference, suite_vocabulary = _read_reference(cfg.reference)
    estimate = read_annotations(cfg.predictions, roster=reference.roster)
    report = evaluate(reference, estimate, metric_cfg,
                      _default_vocabulary(cfg, suite_vocabulary))

    cfg.out.mkdir(parents=True, exist_ok=True)
    (cfg.out / REPORT_JSON).write_text(report.to_json() + "\n", encoding="utf-8")
    (cfg.out / REPORT_TEXT).write_text(report.to_text(), encoding="utf-8")
    logger.info("Wrote %s and %s to %s", REPORT_JSON, REPORT_TEXT, cfg.out)
    print(f"macro_f1: {report.macro_f1:.1f}")
    return report


def _load_report(path: Path) -> ScoreReport:
    """Read a score_report.json, or the one inside an evaluate output directory."""
    if path.is_dir():
        path = path / REPORT_JSON
    try:
        with open(path, encoding="utf-8") as f:
            return ScoreReport.from_dict(json.load(f))
    except FileNotFoundError:
        raise SchemaError(f"no score report at {path}") from None
    except OSError as e:
        raise SchemaError(f"{path}: unreadable score report ({e.strerror})") from None
    except (json.JSONDecodeError, KeyError, TypeError, ValueError) as e:
        raise SchemaError(f"{path}: not a score report ({e})") from None


def _breakdown_inputs(cfg: RunConfig) -> tuple[AnnotationSet, AnnotationSet, dict[str, str],
                                                list[str]]:
    """Pool every (suite, predictions) pair under '<suite>/' clip prefixes.

    Also returns the union of the suites' vocabularies, in first-seen order.
    """
    reference = AnnotationSet()
    estimate = AnnotationSet()
    clip_tags: dict[str, str] = {}
    labels: dict[str, None] = {}
    for suite_dir, predictions in cfg.pairs:
        manifest, ref = load_reference(suite_dir)
        labels.update(dict.fromkeys(manifest.vocabulary))
        est = read_annotations(predictions, roster=ref.roster)
        prefix = f"{manifest.suite}/"
        tag = {Factor.TNTSNR: manifest.condition.tntsnr_label,
               Factor.REVERB: manifest.condition.reverb.value}.get(cfg.breakdown, manifest.suite)
        reference = reference.union(ref.prefixed(prefix))
        estimate = estimate.union(est.prefixed(prefix))
        clip_tags.update({f"{prefix}{clip}": tag for clip in ref.roster})
    return reference, estimate, clip_tags, list(labels)


def cmd_analyze(cfg: RunConfig) -> list[Path]:
    if cfg.table is None and not cfg.reports and cfg.breakdown is None:
        raise ConfigError("analyze needs --table, --report or --breakdown")
    written: list[Path] = []

    if cfg.table is not None:
        if cfg.diff is None and cfg.group is None:
            raise ConfigError("analyze --table needs --diff or --group")
        table = read_score_table(cfg.table)
        if cfg.diff is not None:
            a, b = cfg.diff
            result = diff_table(table, a, b)
            written.append(export_table(result, cfg.out, f"diff_{b}-{a}"))
            for row in result.rows:
                print(f"{row.system}: {row.scores[f'{b}-{a}']:.1f}")
        if cfg.group is not None:
            keys = [cfg.group]
            if "family" in table.tag_names and cfg.group != "family":
                keys.insert(0, "family")
            result = group_mean(table, keys)
            written.append(export_table(result, cfg.out, f"group_{cfg.group}"))
            for row in result.rows:
                print(f"{row.system}: " + ", ".join(
                    f"{c} {row.scores[c]:.2f}" for c in result.columns))

    if cfg.reports:
        reports = {name: _load_report(path) for name, path in cfg.reports.items()}
        written.extend(precision_recall_export(reports, cfg.out))
        if set(GRID_SUITES).intersection(reports):
            series = condition_breakdown(reports)
            written.extend(export_series(series["tntsnr"], cfg.out, "condition_tntsnr",
                                         "F-score by TNTSNR (no reverberation)", "tntsnr"))
            written.extend(export_series(series["reverb"], cfg.out, "condition_reverb",
                                         "F-score by reverberation (no non-target events)",
                                         "reverb"))

    if cfg.breakdown is not None:
        if not cfg.pairs:
            raise ConfigError("analyze --breakdown needs at least one --pair")
        reference, estimate, clip_tags, suite_vocabulary = _breakdown_inputs(cfg)
        min_duration = cfg.long_threshold
        if min_duration is None and cfg.breakdown is Factor.ONSET_WINDOW:
            min_duration = LONG_EVENT_SECONDS
        spec_args: dict[str, Any] = {"factor": cfg.breakdown, "clip_tags": clip_tags,
                                     "min_duration": min_duration}
        if cfg.edges is not None:
            spec_args["edges"] = tuple(cfg.edges)
        try:
            spec = BreakdownSpec(**spec_args)
        except ValidationError as e:
            raise ConfigError(f"breakdown: {_validation_details(e)}") from e
        reports = breakdown(reference, estimate, cfg.metric_config(), spec,
                            _default_vocabulary(cfg, suite_vocabulary))
        written.extend(export_breakdown(reports, cfg.out, cfg.breakdown))
        for bin_label, report in reports.items():
            print(f"{bin_label}: macro_f1 {report.macro_f1:.1f}")

    for path in written:
        logger.info("Wrote %s", path)
    return written


def cmd_validate_bank(cfg: RunConfig) -> BankSummary:
    bank: SourceBank = load_bank(cfg.bank, vocabulary=_vocabulary(cfg))
    summary = BankSummary(
        sample_rate=bank.sample_rate,
        classes={label: len(clips) for label, clips in bank.targets.items()},
        non_targets=len(bank.non_targets),
        backgrounds=len(bank.backgrounds),
        rooms=len(bank.rooms),
        manifest_sha256=bank.manifest_hash)

    for suite_dir in cfg.verify:
        mismatches = verify_suite(suite_dir, bank, workers=cfg.workers)
        if mismatches:
            raise SynthError(f"{suite_dir}: {len(mismatches)} clip(s) do not reproduce, "
                             f"first: {mismatches[0]}")
        print(f"{suite_dir}: all clips reproduce")

    print(summary.to_json())
    return summary


HANDLERS = {
    "generate": cmd_generate,
    "evaluate": cmd_evaluate,
    "analyze": cmd_analyze,
    "validate-bank": cmd_validate_bank,
}


def _fail(error: ScbenchError) -> int:
    logger.error("%s: %s", error.error_name, error.message)
    print(ErrorResponse(error_name=error.error_name, error_details=error.message,
                        exit_code=error.exit_code).to_json())
    return error.exit_code


def main(argv: list[str] | None = None) -> int:
    try:
        cfg = load_config(argv)
        logger.setLevel(logging.DEBUG if cfg.verbose else logging.INFO)
        logger.debug("Configuration: %s", cfg.model_dump_json())
        HANDLERS[cfg.command](cfg)
    except ScbenchError as e:
        return _fail(e)
    except OSError as e:
        # e.g. an --out path that is a regular file
        return _fail(ConfigError(f"{e.filename or 'file'}: {e.strerror or e}"))
    return 0


if __name__ == "__main__":
    sys.exit(main())

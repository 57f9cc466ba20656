"""Command-line front end: ingestion -> extraction -> evaluation -> reports.

Every threshold comes from one flat TOML config; flags override config,
config overrides defaults. Exit codes: 0 success, 1 data/algorithm error,
2 usage/config error. All outputs land under --out with fixed names, and
identical inputs + config + seed produce byte-identical files.
"""

from __future__ import annotations

import argparse
import csv
import datetime as dt
import json
import sys
from pathlib import Path

import numpy as np

from . import evaluation, ingest, mobility, pipelines, profiles, steps
from .config import Config, ConfigError, load_config
from .features import FeatureSchema
from .signal_core import DataError, LabelSpan, LabelTimeline, resample
from .svm import Kernel


class CliUsageError(Exception):
    """Bad invocation: missing inputs, wrong paths (exit code 2)."""


def _write_json(path: Path, obj) -> None:
    path.write_text(json.dumps(obj, indent=2, sort_keys=True) + "\n",
                    encoding="utf-8")


def _kernel(cfg: Config) -> Kernel:
    return Kernel(cfg.svm_kernel, cfg.svm_gamma)


def _resample(cfg: Config, stream):
    return resample(stream, cfg.canonical_rate_hz, cfg.gap_threshold_s)


def cmd_steps(args, cfg: Config, out: Path) -> int:
    stream = ingest.load_accel_csv(args.input)
    series = _resample(cfg, stream)
    if args.device == "phone":
        result = steps.count_steps_phone(
            series,
            smooth_cutoff_hz=cfg.step_smooth_cutoff_hz,
            prominence_floor=cfg.step_prominence_ms2,
            prominence_window_s=cfg.step_prominence_window_s,
            similarity_tol=cfg.step_similarity_tol,
            min_steps=cfg.step_continuity_min,
            run_gap_s=cfg.step_run_gap_s,
        )
    else:
        result = steps.count_steps_watch(
            series,
            lowpass_hz=cfg.watch_lowpass_hz,
            delay_s=cfg.watch_delay_s,
            hysteresis_up=cfg.watch_hysteresis_up_ms2,
            hysteresis_down=cfg.watch_hysteresis_down_ms2,
            min_armed_s=cfg.watch_min_armed_s,
        )
    report = {
        "device": args.device,
        "count": result.count,
        "groups": [{"t_start": g[0], "t_end": g[1], "steps": g[2]}
                   for g in result.groups],
    }
    if args.truth is not None:
        absolute, relative = evaluation.step_error(result.count, args.truth)
        report["truth"] = args.truth
        report["absolute_error"] = absolute
        report["relative_error_pct"] = relative
    _write_json(out / "steps_report.json", report)
    print(f"{args.device} steps: {result.count}")
    return 0


def _load_pamap2_dir(path: Path, cfg: Config) -> list[ingest.LabeledAccelStream]:
    files = sorted(path.glob("*.dat"))
    if not files:
        raise DataError(f"{path}: no PAMAP2 .dat files found")
    return [ingest.load_pamap2(f, cfg.pamap2_imu_position) for f in files]


def _activity_kwargs(cfg: Config) -> dict:
    return dict(
        schema=FeatureSchema.build(cfg.activity_bands),
        window_s=cfg.activity_window_s,
        step_s=cfg.activity_step_s,
        rate_hz=cfg.canonical_rate_hz,
        gap_threshold_s=cfg.gap_threshold_s,
        min_agreement=cfg.label_agreement_min,
        C=cfg.svm_c,
        kernel=_kernel(cfg),
        seed=cfg.seed,
    )


def cmd_activity(args, cfg: Config, out: Path) -> int:
    dataset_dir = Path(args.dataset_dir)
    if not dataset_dir.is_dir():
        raise CliUsageError(f"{dataset_dir}: not a directory")
    dataset = _load_pamap2_dir(dataset_dir, cfg)
    schema = FeatureSchema.build(cfg.activity_bands)
    kwargs = _activity_kwargs(cfg)

    if args.mode == "train":
        if args.loso:
            result = pipelines.train_activity_loso(
                dataset, vote_s=cfg.activity_vote_s, **kwargs)
            for fold in result.folds:
                doc = pipelines.pipeline_model_doc(
                    "activity", fold.model, schema, cfg.activity_window_s,
                    cfg.activity_step_s, cfg.activity_vote_s)
                _write_json(out / f"activity_fold{fold.subject}_model.json", doc)
                (out / f"activity_fold{fold.subject}_confusion.csv").write_text(
                    fold.matrix.to_csv(), encoding="utf-8")
            (out / "activity_pooled_confusion.csv").write_text(
                result.pooled.to_csv(), encoding="utf-8")
            summary = {
                "folds": [{"subject": f.subject,
                           "training_accuracy": f.training_accuracy,
                           "test_accuracy": f.matrix.accuracy()}
                          for f in result.folds],
                "pooled_accuracy": result.pooled.accuracy(),
            }
            _write_json(out / "activity_summary.json", summary)
            print(f"LOSO folds: {len(result.folds)}, "
                  f"pooled accuracy {result.pooled.accuracy():.3f}")
        else:
            model = pipelines.train_activity_model(dataset, **kwargs)
            doc = pipelines.pipeline_model_doc(
                "activity", model, schema, cfg.activity_window_s,
                cfg.activity_step_s, cfg.activity_vote_s)
            _write_json(out / "activity_model.json", doc)
            print(f"trained activity model over {len(dataset)} subjects")
        return 0

    # eval mode
    if not args.model:
        raise ConfigError("activity eval requires --model")
    kind, model, model_schema, meta = pipelines.pipeline_model_from_doc(
        json.loads(Path(args.model).read_text(encoding="utf-8")))
    if kind != "activity":
        raise DataError(f"{args.model}: not an activity model")
    pooled = None
    for item in dataset:
        timeline = pipelines.classify_activity(
            item.stream, model, schema=model_schema,
            window_s=meta["window_s"], step_s=meta["step_s"],
            vote_s=meta["vote_s"], rate_hz=cfg.canonical_rate_hz,
            gap_threshold_s=cfg.gap_threshold_s)
        windows = pipelines._windows_for_stream(
            item.stream, meta["window_s"], meta["step_s"],
            cfg.canonical_rate_hz, cfg.gap_threshold_s)
        truths = pipelines.window_truth_labels(item.labels, windows,
                                               cfg.label_agreement_min)
        pred_spans, truth_spans = [], []
        for entry, truth in zip(timeline.entries, truths):
            if truth is None:
                continue
            pred_spans.append(entry)
            truth_spans.append(entry._replace(label=truth))
        matrix = pipelines._spans_confusion(pred_spans, truth_spans,
                                            model.classes)
        pooled = matrix if pooled is None else pooled.add(matrix)
    if pooled is None:
        raise DataError("no labeled windows to evaluate")
    (out / "activity_confusion.csv").write_text(pooled.to_csv(), encoding="utf-8")
    _write_json(out / "activity_eval.json", {"accuracy": pooled.accuracy(),
                                             "windows": pooled.total()})
    print(f"eval accuracy {pooled.accuracy():.3f} over {pooled.total()} windows")
    return 0


def _detect_visits(cfg: Config, loc):
    return mobility.detect_visits(
        loc,
        eps_m=cfg.visit_eps_m,
        min_density=cfg.visit_min_density,
        min_stay_s=cfg.visit_min_stay_s,
        split_gap_s=cfg.visit_split_gap_s,
        moveability_window_s=cfg.moveability_window_s,
        max_fix_speed_mps=cfg.max_fix_speed_mps,
    )


def cmd_visits(args, cfg: Config, out: Path) -> int:
    loc = ingest.load_location_csv(args.location_csv)
    visits = _detect_visits(cfg, loc)
    (out / "visits.csv").write_text(mobility.visits_to_csv(visits),
                                    encoding="utf-8")
    print(f"visits detected: {len(visits)}")
    if args.truth:
        truth = mobility.load_visits_csv(args.truth)
        report = evaluation.match_visits(visits, truth,
                                         cfg.visit_match_threshold_m)
        _write_json(out / "visit_match.json", {
            "tp": report.tp, "fp": report.fp, "fn": report.fn,
            "precision": report.precision, "recall": report.recall,
            "f1": report.f1,
        })
        print(f"match vs truth: tp={report.tp} fp={report.fp} fn={report.fn}")
    return 0


def _load_session_dir(path: Path):
    accel = ingest.load_accel_csv(path / "accel.csv")
    loc_path = path / "location.csv"
    loc = ingest.load_location_csv(loc_path) if loc_path.exists() else None
    labels_path = path / "labels.csv"
    labels = None
    if labels_path.exists():
        spans = []
        with open(labels_path, newline="", encoding="utf-8") as fh:
            reader = csv.reader(fh)
            header = next(reader, None)
            if header is None or [h.strip() for h in header] != ["t_start", "t_end", "label"]:
                raise DataError(f"{labels_path}:1: expected header 't_start,t_end,label'")
            for row in reader:
                if row:
                    spans.append((float(row[0]), float(row[1]), row[2].strip()))
        labels = LabelTimeline(tuple(LabelSpan(*s) for s in spans))
    return accel, loc, labels


def _transport_kwargs(cfg: Config) -> dict:
    return dict(
        schema=FeatureSchema.build(cfg.transport_bands),
        window_s=cfg.transport_window_s,
        step_s=cfg.transport_step_s,
        rate_hz=cfg.canonical_rate_hz,
        gap_threshold_s=cfg.gap_threshold_s,
    )


def cmd_transport(args, cfg: Config, out: Path) -> int:
    session_dir = Path(args.session_dir)
    if not session_dir.is_dir():
        raise CliUsageError(f"{session_dir}: not a directory")
    accel, loc, labels = _load_session_dir(session_dir)
    if loc is None:
        raise DataError(f"{session_dir}: transport needs location.csv")
    kind, model, model_schema, meta = pipelines.pipeline_model_from_doc(
        json.loads(Path(args.model).read_text(encoding="utf-8")))
    if kind != "transport":
        raise DataError(f"{args.model}: not a transport model")

    visits = _detect_visits(cfg, loc)
    trips = mobility.segment_trips(visits, loc, accel,
                                   min_speed_kmh=cfg.trip_min_speed_kmh,
                                   gap_threshold_s=cfg.gap_threshold_s)
    lines = ["t_start,t_end,avg_speed_kmh,label,note"]
    labeled = 0
    for trip in trips:
        if not trip.valid:
            lines.append(f"{trip.t_start:.3f},{trip.t_end:.3f},"
                         f"{trip.avg_speed_kmh:.4f},,skipped: invalid trip")
            continue
        try:
            label = pipelines.classify_transport(
                trip, accel, model, schema=model_schema,
                window_s=meta["window_s"], step_s=meta["step_s"],
                rate_hz=cfg.canonical_rate_hz,
                gap_threshold_s=cfg.gap_threshold_s)
        except ValueError as exc:
            lines.append(f"{trip.t_start:.3f},{trip.t_end:.3f},"
                         f"{trip.avg_speed_kmh:.4f},,skipped: {exc}")
            continue
        labeled += 1
        lines.append(f"{trip.t_start:.3f},{trip.t_end:.3f},"
                     f"{trip.avg_speed_kmh:.4f},{label},")
    (out / "trip_labels.csv").write_text("\n".join(lines) + "\n",
                                         encoding="utf-8")
    print(f"trips: {len(trips)}, labeled: {labeled}")

    if labels is not None:
        rows = pipelines.transport_training_rows(
            [(accel, labels)], min_agreement=cfg.label_agreement_min,
            **_transport_kwargs(cfg))
        if rows:
            predicted, _ = pipelines._predict_windows(
                [r.window for r in rows], model, model_schema)
            classes = model.classes
            index = {c: i for i, c in enumerate(classes)}
            counts = np.zeros((len(classes), len(classes)), dtype=int)
            for row, pred in zip(rows, predicted):
                counts[index[row.label], index[pred]] += 1
            matrix = evaluation.ConfusionMatrix(classes, counts)
            pr_lines = ["class,precision,recall"]
            for c in classes:
                pr_lines.append(f"{c},{matrix.precision(c):.4f},{matrix.recall(c):.4f}")
            (out / "transport_per_class_pr.csv").write_text(
                "\n".join(pr_lines) + "\n", encoding="utf-8")
            rollup = evaluation.vehicle_rollup(matrix, cfg.vehicle_classes)
            _write_json(out / "vehicle_rollup.json", {
                "tp": rollup.tp, "fp": rollup.fp, "fn": rollup.fn,
                "tn": rollup.tn, "precision": rollup.precision,
                "recall": rollup.recall, "f1": rollup.f1,
                "accuracy": rollup.accuracy,
            })
            print(f"vehicle rollup accuracy {rollup.accuracy:.3f}")
    return 0


def cmd_transport_train(args, cfg: Config, out: Path) -> int:
    sessions_dir = Path(args.sessions_dir)
    if not sessions_dir.is_dir():
        raise CliUsageError(f"{sessions_dir}: not a directory")
    sessions = []
    for sub in sorted(p for p in sessions_dir.iterdir() if p.is_dir()):
        accel, _, labels = _load_session_dir(sub)
        if labels is None:
            raise DataError(f"{sub}: transport training needs labels.csv")
        sessions.append((accel, labels))
    if not sessions:
        raise CliUsageError(f"{sessions_dir}: no session directories found")
    tk = _transport_kwargs(cfg)
    schema = tk["schema"]
    if len(sessions) >= 2:
        result = pipelines.train_transport_loso(
            sessions, min_agreement=cfg.label_agreement_min,
            C=cfg.svm_c, kernel=_kernel(cfg), seed=cfg.seed, **tk)
        for fold in result.folds:
            (out / f"transport_fold{fold.subject}_confusion.csv").write_text(
                fold.matrix.to_csv(), encoding="utf-8")
        (out / "transport_pooled_confusion.csv").write_text(
            result.pooled.to_csv(), encoding="utf-8")
        _write_json(out / "transport_summary.json", {
            "folds": [{"subject": f.subject,
                       "training_accuracy": f.training_accuracy,
                       "test_accuracy": f.matrix.accuracy()}
                      for f in result.folds],
            "pooled_accuracy": result.pooled.accuracy(),
        })
    rows = pipelines.transport_training_rows(
        sessions, min_agreement=cfg.label_agreement_min, **tk)
    model = pipelines.train_transport_model(
        rows, schema=schema, C=cfg.svm_c, kernel=_kernel(cfg), seed=cfg.seed)
    doc = pipelines.pipeline_model_doc(
        "transport", model, schema, cfg.transport_window_s,
        cfg.transport_step_s, None)
    _write_json(out / "transport_model.json", doc)
    print(f"trained transport model over {len(sessions)} sessions")
    return 0


def cmd_profile(args, cfg: Config, out: Path) -> int:
    user_dir = Path(args.user_dir)
    if not user_dir.is_dir():
        raise CliUsageError(f"{user_dir}: not a directory")
    poi_table = ingest.load_poi_table(args.poi_csv)
    session_dirs = sorted(p for p in user_dir.iterdir() if p.is_dir())
    if not session_dirs:
        raise CliUsageError(f"{user_dir}: no session directories found")

    step_sessions, count_arrays, all_visits, streams = [], [], [], []
    dates = []
    for sub in session_dirs:
        try:
            day = dt.date.fromisoformat(sub.name)
        except ValueError:
            raise DataError(f"{sub}: session directory must be named YYYY-MM-DD")
        dates.append(day)
    first_day = min(dates)
    for day, sub in zip(dates, session_dirs):
        accel, loc, _ = _load_session_dir(sub)
        series = _resample(cfg, accel)
        result = steps.count_steps_phone(
            series,
            smooth_cutoff_hz=cfg.step_smooth_cutoff_hz,
            prominence_floor=cfg.step_prominence_ms2,
            prominence_window_s=cfg.step_prominence_window_s,
            similarity_tol=cfg.step_similarity_tol,
            min_steps=cfg.step_continuity_min,
            run_gap_s=cfg.step_run_gap_s)
        step_sessions.append((day, result))
        count_arrays.append(profiles.activity_counts(
            accel, cfg.count_epoch_s, rate_hz=cfg.canonical_rate_hz,
            band_hz=cfg.count_band_hz, gap_threshold_s=cfg.gap_threshold_s))
        streams.append((day, accel))
        if loc is not None:
            offset = (day - first_day).days * 86400.0
            for v in _detect_visits(cfg, loc):
                all_visits.append(mobility.Visit(
                    v.lat, v.lon, v.arrival_t + offset, v.departure_t + offset,
                    v.member_indices))
    span_days = (max(dates) - first_day).days + 1
    profile = profiles.build_profile(
        step_sessions, count_arrays, all_visits, poi_table, streams,
        radius_m=cfg.poi_radius_m, span_days=float(span_days),
        gap_threshold_s=cfg.gap_threshold_s)
    destination = profiles.after_school_destination(all_visits, poi_table,
                                                    cfg.poi_radius_m)
    doc = profile.to_dict()
    doc["after_school_destination"] = destination
    _write_json(out / "profile.json", doc)
    tallies = profiles.after_school_tallies(all_visits, poi_table,
                                            cfg.poi_radius_m)
    lines = ["destination,count"]
    lines.extend(f"{cat},{n}" for cat, n in tallies.items())
    (out / "after_school.csv").write_text("\n".join(lines) + "\n",
                                          encoding="utf-8")
    print(f"profile written for {len(session_dirs)} sessions")
    return 0


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="flat TOML config file")
    common.add_argument("--seed", type=int, help="override the config seed")
    common.add_argument("--out", default="out", help="output directory")

    parser = argparse.ArgumentParser(
        prog="mobisense",
        description="Behavioral indicators from phone accelerometer + GPS")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("steps", parents=[common],
                       help="count steps in an accel CSV")
    p.add_argument("input", help="accel CSV (t,ax,ay,az)")
    p.add_argument("--device", choices=("phone", "watch"), default="phone")
    p.add_argument("--truth", type=int, help="ground-truth step count")
    p.set_defaults(func=cmd_steps)

    p = sub.add_parser("activity", parents=[common],
                       help="train/evaluate the activity classifier")
    p.add_argument("mode", choices=("train", "eval"))
    p.add_argument("dataset_dir", help="directory of PAMAP2 .dat files")
    p.add_argument("--loso", action="store_true",
                   help="leave-one-subject-out training")
    p.add_argument("--model", help="saved model (eval mode)")
    p.set_defaults(func=cmd_activity)

    p = sub.add_parser("visits", parents=[common],
                       help="detect visited places in a location CSV")
    p.add_argument("location_csv")
    p.add_argument("--truth", help="ground-truth visits CSV")
    p.set_defaults(func=cmd_visits)

    p = sub.add_parser("transport", parents=[common],
                       help="label trips in a session directory")
    p.add_argument("session_dir",
                   help="directory with accel.csv, location.csv[, labels.csv]")
    p.add_argument("--model", required=True, help="saved transport model")
    p.set_defaults(func=cmd_transport)

    p = sub.add_parser("transport-train", parents=[common],
                       help="train the transport classifier on labeled sessions")
    p.add_argument("sessions_dir",
                   help="directory of session dirs with accel.csv + labels.csv")
    p.set_defaults(func=cmd_transport_train)

    p = sub.add_parser("profile", parents=[common],
                       help="aggregate a user's behavioral profile")
    p.add_argument("user_dir", help="directory of YYYY-MM-DD session dirs")
    p.add_argument("poi_csv", help="offline POI table (lat,lon,category)")
    p.set_defaults(func=cmd_profile)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        cfg = load_config(args.config) if args.config else Config()
        if args.seed is not None:
            cfg.seed = args.seed
        cfg.validate()
        out = Path(args.out)
        out.mkdir(parents=True, exist_ok=True)
        return args.func(args, cfg, out)
    except (ConfigError, CliUsageError, FileNotFoundError) as exc:
        print(f"usage error: {exc}", file=sys.stderr)
        return 2
    except (DataError, ValueError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())

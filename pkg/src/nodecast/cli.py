"""Command line front end: subcommands for each pipeline stage.

Every subcommand writes its data products under --out and drops a
manifest JSON next to them recording the resolved flags, seeds, and
sha256 digests of inputs and outputs. Progress goes to stderr; stdout
stays clean. Exit codes: 0 success, 2 flag or input validation error,
1 runtime failure.
"""

from __future__ import annotations

import argparse
import csv
import json
import logging
import os
import sys
from pathlib import Path

import numpy as np

from . import __version__
from ._util import sha256_file
from .datasets import Benchmark, SamplingPlan, base_dataset, make_benchmarks
from .ensemble import (
    EnsembleModel,
    EnsembleSpec,
    build,
    load_model,
    save_model,
    score,
    weigh,
)
from .evaluation import EvalReport, binary_point, roc_pr
from .features import DEFAULT_CONFIG, FeatureTable, assemble
from .labeling import (
    LABEL_NAMES,
    UNLABELED,
    LabelConfig,
    apply_labels,
    classify_removes,
)
from .quarantine import (
    AlarmStream,
    InterruptedTasks,
    QuarantinePolicy,
    failure_times,
    interrupted_tasks,
    perfect_alarms,
    simulate,
)
from .synth import SynthConfig, expected_verdict, generate_with_truth
from .trace import EPOCH_US, TraceFormatError, read_trace, write_trace

log = logging.getLogger(__name__)

DEFAULT_FPR_TARGETS = "0.01,0.05,0.10"
DEFAULT_WINDOW_HOURS = "1,2,4,8"


class CliError(ValueError):
    """Bad flags or missing inputs; maps to exit code 2.

    Subclasses ValueError so argparse type= callables that raise it get
    argparse's own usage error instead of a traceback.
    """


# ---------------------------------------------------------------------------
# flag parsing helpers


def _floats(text: str) -> tuple[float, ...]:
    try:
        values = tuple(float(part) for part in text.split(",") if part.strip())
    except ValueError as exc:
        raise CliError(f"bad numeric list {text!r}: {exc}") from None
    if not values:
        raise CliError(f"empty numeric list {text!r}")
    return values


def _tree_counts(text: str) -> tuple[int, ...]:
    """Accept '2:15' (inclusive range) or '2,4,8'."""
    try:
        if ":" in text:
            lo, hi = text.split(":")
            counts = tuple(range(int(lo), int(hi) + 1))
        else:
            counts = tuple(int(part) for part in text.split(",") if part.strip())
    except ValueError as exc:
        raise CliError(f"bad tree count list {text!r}: {exc}") from None
    if not counts:
        raise CliError(f"empty tree count list {text!r}")
    return counts


def _require(path: str | Path, what: str) -> Path:
    p = Path(path)
    if not p.exists():
        raise CliError(f"missing {what}: {p}")
    return p


# ---------------------------------------------------------------------------
# manifests


def _digest(path: Path):
    if path.is_dir():
        out = {}
        for child in sorted(path.rglob("*")):
            if child.is_file() and child.name != "manifest.json":
                out[str(child.relative_to(path))] = sha256_file(child)
        return out
    return sha256_file(path)


def _manifest_path(out: Path) -> Path:
    if out.is_dir():
        return out / "manifest.json"
    return out.with_name(out.stem + ".manifest.json")


def write_manifest(
    out: Path,
    subcommand: str,
    flags: dict,
    seeds: dict,
    inputs: list[Path],
    outputs: list[Path],
) -> Path:
    manifest = {
        "subcommand": subcommand,
        "version": __version__,
        "flags": {k: v for k, v in sorted(flags.items())},
        "seeds": seeds,
        "inputs": {str(p): _digest(Path(p)) for p in inputs},
        "outputs": {str(p): _digest(Path(p)) for p in outputs},
    }
    path = _manifest_path(out)
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(manifest, fh, sort_keys=True, indent=1)
        fh.write("\n")
    return path


def _flags_of(args: argparse.Namespace) -> dict:
    skip = {"func", "quiet"}
    out = {}
    for key, value in vars(args).items():
        if key in skip:
            continue
        out[key] = str(value) if isinstance(value, Path) else value
    return out


# ---------------------------------------------------------------------------
# shared loaders


def _load_labeled(path: str | Path) -> FeatureTable:
    table = FeatureTable.read_csv(_require(path, "feature table"))
    if (table.labels == UNLABELED).any():
        raise CliError(f"feature table {path} has unlabeled rows; run label first")
    return table


def _load_model_dir(path: str | Path) -> EnsembleModel:
    p = Path(path)
    if not (p / "weights.csv").exists() or not (p / "model_meta.json").exists():
        raise CliError(f"missing model: {p} has no weights.csv/model_meta.json")
    return load_model(p)


def _score_scale(points) -> float:
    return max((p.raw_score for p in points), default=0.0)


# ---------------------------------------------------------------------------
# gen-trace


def do_gen_trace(args: argparse.Namespace) -> None:
    out = Path(args.out)
    cfg = SynthConfig(
        n_machines=args.nodes,
        days=args.days,
        seed=args.seed,
        task_arrival_rate=args.task_rate,
        failure_rate=args.failure_rate,
        update_rate=args.update_rate,
        signal_strength=args.signal,
    )
    bundle, planted = generate_with_truth(cfg)
    write_trace(bundle, out)
    truth_path = out / "planted_removes.csv"
    with open(truth_path, "w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(
            ["machine_id", "time_us", "is_failure", "readd_us", "expected_verdict"]
        )
        for p in planted:
            writer.writerow(
                [
                    p.machine_id,
                    p.time_us,
                    int(p.is_failure),
                    "" if p.readd_us is None else p.readd_us,
                    expected_verdict(p, cfg.horizon_us).name,
                ]
            )
    write_manifest(
        out,
        "gen-trace",
        _flags_of(args),
        {"seed": args.seed},
        [],
        [out],
    )
    log.info("trace written to %s", out)


# ---------------------------------------------------------------------------
# extract-features


def do_extract_features(args: argparse.Namespace) -> None:
    trace_dir = _require(args.trace, "trace directory")
    bundle = read_trace(trace_dir)
    table = assemble(bundle, DEFAULT_CONFIG)
    out = Path(args.out)
    out.parent.mkdir(parents=True, exist_ok=True)
    table.write_csv(out)
    from .features import layout_sidecar_path

    write_manifest(
        out,
        "extract-features",
        _flags_of(args),
        {},
        [trace_dir],
        [out, layout_sidecar_path(out)],
    )
    log.info("%d feature rows written to %s", len(table), out)


# ---------------------------------------------------------------------------
# label


def do_label(args: argparse.Namespace) -> None:
    trace_dir = _require(args.trace, "trace directory")
    features_path = _require(args.features, "feature table")
    bundle = read_trace(trace_dir)
    table = FeatureTable.read_csv(features_path)
    cfg = LabelConfig(
        downtime_threshold_s=int(round(args.downtime_hours * 3600)),
        fail_horizon_s=int(round(args.horizon_hours * 3600)),
    )
    verdicts = classify_removes(bundle, cfg)
    apply_labels(table, verdicts, cfg)
    out = Path(args.out)
    out.parent.mkdir(parents=True, exist_ok=True)
    table.write_csv(out)
    removes_path = out.parent / "removes.csv"
    with open(removes_path, "w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["machine_id", "remove_time_us", "verdict"])
        for v in verdicts:
            writer.writerow([v.machine_id, v.remove_time_us, v.verdict.name])
    from .features import layout_sidecar_path

    write_manifest(
        out,
        "label",
        _flags_of(args),
        {},
        [trace_dir, features_path],
        [out, layout_sidecar_path(out), removes_path],
    )
    counts = {
        name: int((table.labels == code).sum())
        for code, name in LABEL_NAMES.items()
        if name
    }
    log.info("labels written to %s: %s", out, counts)


# ---------------------------------------------------------------------------
# benchmarks


def _trace_horizon(args: argparse.Namespace, table: FeatureTable) -> int:
    if getattr(args, "trace", None):
        meta = Path(args.trace) / "trace_meta.json"
        if meta.exists():
            with open(meta, "r", encoding="utf-8") as fh:
                return int(json.load(fh)["horizon_us"])
    return int(table.epochs.max() + 1) * EPOCH_US


def do_benchmarks(args: argparse.Namespace) -> None:
    table = _load_labeled(args.labeled)
    horizon_us = _trace_horizon(args, table)
    plan = SamplingPlan(safe_fraction=args.safe_fraction, seed=args.seed)
    pos_ids, neg_ids = base_dataset(table, plan)
    benchmarks = make_benchmarks(
        table, pos_ids, neg_ids, horizon_us, args.seed, args.max_benchmarks
    )
    if not benchmarks:
        raise CliError(
            f"trace too short for any benchmark: {horizon_us / 86400e6:.1f} days"
        )
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    written = []
    for bm in benchmarks:
        path = out / f"benchmark_{bm.index:02d}.json"
        bm.save(path)
        written.append(path)
    write_manifest(
        out,
        "benchmarks",
        _flags_of(args),
        {"seed": args.seed},
        [Path(args.labeled)],
        [out],
    )
    log.info(
        "%d benchmarks written to %s (%d FAIL, %d sampled SAFE rows)",
        len(benchmarks),
        out,
        len(pos_ids),
        len(neg_ids),
    )


# ---------------------------------------------------------------------------
# train


def _ensemble_spec(args: argparse.Namespace) -> EnsembleSpec:
    base: dict = {}
    if getattr(args, "spec", None):
        with open(_require(args.spec, "ensemble spec"), "r", encoding="utf-8") as fh:
            raw = json.load(fh)
        base = {
            "fsafe_values": tuple(raw.get("fsafe_values", EnsembleSpec.fsafe_values)),
            "tree_counts": tuple(raw.get("tree_counts", EnsembleSpec.tree_counts)),
            "repetitions": raw.get("repetitions", EnsembleSpec.repetitions),
            "seed": raw.get("seed", EnsembleSpec.seed),
            "max_depth": raw.get("max_depth", EnsembleSpec.max_depth),
            "min_leaf": raw.get("min_leaf", EnsembleSpec.min_leaf),
            "mtry": raw.get("mtry", EnsembleSpec.mtry),
            "bootstrap": raw.get("bootstrap", EnsembleSpec.bootstrap),
        }
    overrides = {
        "fsafe_values": args.fsafe,
        "tree_counts": args.trees,
        "repetitions": args.reps,
        "seed": args.seed,
        "max_depth": args.max_depth,
        "min_leaf": args.min_leaf,
        "mtry": args.mtry,
        "bootstrap": (not args.no_bootstrap) if args.no_bootstrap else None,
    }
    for key, value in overrides.items():
        if value is not None:
            base[key] = value
    try:
        return EnsembleSpec(**base)
    except ValueError as exc:
        raise CliError(str(exc)) from None


def do_train(args: argparse.Namespace) -> EnsembleModel:
    table = _load_labeled(args.features)
    benchmark = Benchmark.load(_require(args.benchmark, "benchmark file"))
    spec = _ensemble_spec(args)
    threads = args.threads or (os.cpu_count() or 1)
    log.info(
        "training %d members for benchmark %d with %d threads",
        spec.member_count,
        benchmark.index,
        threads,
    )
    model = build(table.features, table.labels, benchmark, spec, threads=threads)
    ind = benchmark.individual_test
    weigh(model, table.features[ind], table.labels[ind])
    if not np.any(model.weights > 0):
        log.warning("every member has weight 0; the ensemble will never alarm")
    out = Path(args.out)
    save_model(model, out)
    write_manifest(
        out,
        "train",
        _flags_of(args),
        {"seed": spec.seed},
        [Path(args.features), Path(args.benchmark)],
        [out],
    )
    log.info("model written to %s", out)
    return model


# ---------------------------------------------------------------------------
# evaluate


def do_evaluate(args: argparse.Namespace) -> Path:
    model = _load_model_dir(args.model)
    benchmark = Benchmark.load(_require(args.benchmark, "benchmark file"))
    table = _load_labeled(args.features)
    fpr_targets = args.fpr
    ens = benchmark.ensemble_test
    if not len(ens):
        raise CliError(f"benchmark {benchmark.index} has an empty ensemble-test half")
    points = score(
        model, table.features[ens], ens, table.labels[ens]
    )
    scale = _score_scale(points)
    scores = np.array([p.score for p in points])
    labels = np.array([p.label for p in points]) == 1
    try:
        report = roc_pr(scores, labels, fpr_targets)
    except ValueError as exc:
        raise CliError(f"benchmark {benchmark.index}: {exc}") from None
    out = Path(args.out)
    out.parent.mkdir(parents=True, exist_ok=True)

    members_rows = []
    ind = benchmark.individual_test
    X_ens = np.ascontiguousarray(table.features[ens])
    for member in model.members:
        fpr, tpr, precision = binary_point(
            member.forest.predict_batch(X_ens), labels
        )
        members_rows.append(
            {
                "member": member.meta.index,
                "fsafe": member.meta.fsafe,
                "tree_count": member.meta.tree_count,
                "repetition": member.meta.repetition,
                "weight": member.weight,
                "fpr": fpr,
                "tpr": tpr,
                "precision": precision,
            }
        )
    members_path = out.parent / "members.csv"
    with open(members_path, "w", encoding="utf-8", newline="") as fh:
        writer = csv.DictWriter(fh, fieldnames=list(members_rows[0].keys()))
        writer.writeheader()
        for row in members_rows:
            writer.writerow({k: repr(v) if isinstance(v, float) else v for k, v in row.items()})

    scores_path = out.parent / "scores.csv"
    with open(scores_path, "w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["row_id", "machine_id", "epoch", "score", "raw_score", "label"])
        for p in points:
            writer.writerow(
                [
                    p.row_id,
                    table.machine_ids[p.row_id],
                    table.epochs[p.row_id],
                    repr(p.score),
                    repr(p.raw_score),
                    LABEL_NAMES[p.label],
                ]
            )

    payload = {
        "benchmark_index": benchmark.index,
        "score_scale": scale,
        "fpr_targets": list(fpr_targets),
        "individual_rows": len(ind),
        "ensemble_rows": len(ens),
        "evaluation": report.to_json(),
    }
    with open(out, "w", encoding="utf-8") as fh:
        json.dump(payload, fh, sort_keys=True, indent=1)
        fh.write("\n")
    write_manifest(
        out,
        "evaluate",
        _flags_of(args),
        {},
        [Path(args.model), Path(args.benchmark), Path(args.features)],
        [out, members_path, scores_path],
    )
    log.info(
        "benchmark %d: AUROC %.4f AUPR %.4f (%d pos / %d neg)",
        benchmark.index,
        report.auroc,
        report.aupr,
        report.n_pos,
        report.n_neg,
    )
    return out


# ---------------------------------------------------------------------------
# report (plots)


def _load_report_payload(path: Path) -> tuple[EvalReport, dict]:
    with open(path, "r", encoding="utf-8") as fh:
        data = json.load(fh)
    if "evaluation" in data:
        return EvalReport.from_json(data["evaluation"]), data
    return EvalReport.from_json(data), data


def do_report(args: argparse.Namespace) -> None:
    src = _require(args.infile, "evaluation report")
    report, payload = _load_report_payload(src)
    import matplotlib

    matplotlib.use("Agg")
    matplotlib.rcParams["svg.hashsalt"] = "nodecast"
    import matplotlib.pyplot as plt

    guides = sorted(report.operating_points)
    outputs = []

    if args.svg:
        fig, ax = plt.subplots(figsize=(5, 4))
        ax.plot(report.fpr, report.tpr, color="#1f6f43", lw=1.5)
        ax.plot([0, 1], [0, 1], color="#999999", lw=0.8, ls=":")
        for g in guides:
            ax.axvline(g, color="#b44", lw=0.8, ls="--")
        ax.set_xlabel("False positive rate")
        ax.set_ylabel("True positive rate")
        ax.set_xlim(0, 1)
        ax.set_ylim(0, 1.02)
        ax.set_title(f"ROC (AUROC {report.auroc:.3f})")
        fig.tight_layout()
        fig.savefig(args.svg, format="svg", metadata={"Date": None})
        plt.close(fig)
        outputs.append(Path(args.svg))

    if args.svg_pr:
        fig, ax = plt.subplots(figsize=(5, 4))
        recall = report.tpr[1:]
        precision = report.precision[1:]
        ax.plot(recall, precision, color="#1f436f", lw=1.5, drawstyle="steps-pre")
        ax.set_xlabel("Recall")
        ax.set_ylabel("Precision")
        ax.set_xlim(0, 1)
        ax.set_ylim(0, 1.02)
        ax.set_title(f"PR (AUPR {report.aupr:.3f})")
        fig.tight_layout()
        fig.savefig(args.svg_pr, format="svg", metadata={"Date": None})
        plt.close(fig)
        outputs.append(Path(args.svg_pr))

    if args.csv:
        with open(args.csv, "w", encoding="utf-8", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(["threshold", "fpr", "tpr", "precision"])
            for i in range(len(report.thresholds)):
                thr = report.thresholds[i]
                writer.writerow(
                    [
                        "inf" if np.isinf(thr) else repr(float(thr)),
                        repr(float(report.fpr[i])),
                        repr(float(report.tpr[i])),
                        repr(float(report.precision[i])),
                    ]
                )
        outputs.append(Path(args.csv))

    if not outputs:
        raise CliError("report: nothing to do, pass --svg, --svg-pr, or --csv")
    write_manifest(
        outputs[0],
        "report",
        _flags_of(args),
        {},
        [src],
        outputs,
    )
    log.info("report artifacts: %s", ", ".join(str(p) for p in outputs))


# ---------------------------------------------------------------------------
# simulate


def _sweep_rows(
    tag: str, policy: QuarantinePolicy, outcome
) -> list[dict]:
    rows = []
    entries = [(str(c), outcome.per_class[c]) for c in sorted(outcome.per_class)]
    entries.append(("total", outcome.total))
    for klass, tally in entries:
        rows.append(
            {
                "fpr": tag,
                "window_h": policy.window_hours,
                "sched_class": klass,
                "interrupted": tally.interrupted,
                "recovered": tally.recovered,
                "redirected": tally.redirected,
                "wasted_cpuh": tally.interrupted_cpuh,
                "recovered_cpuh": tally.recovered_cpuh,
                "redirected_cpuh": tally.redirected_cpuh,
            }
        )
    return rows


def do_simulate(args: argparse.Namespace) -> None:
    trace_dir = _require(args.trace, "trace directory")
    bundle = read_trace(trace_dir)
    cfg = LabelConfig(
        downtime_threshold_s=int(round(args.downtime_hours * 3600)),
        fail_horizon_s=int(round(args.horizon_hours * 3600)),
    )
    verdicts = classify_removes(bundle, cfg)
    failures_all = failure_times(verdicts)
    vicinity_s = int(round(args.vicinity_min * 60))
    windows = args.window_hours
    rows: list[dict] = []
    inputs: list[Path] = [trace_dir]

    if args.baseline:
        interrupted = interrupted_tasks(bundle, failures_all, vicinity_s)
        alarms = perfect_alarms(bundle, failures_all, cfg.fail_horizon_s)
        for w in windows:
            policy = QuarantinePolicy(
                window_hours=w, consecutive_alarms=2, vicinity_s=vicinity_s
            )
            outcome = simulate(bundle, alarms, policy, failures_all, interrupted)
            rows.extend(_sweep_rows("perfect", policy, outcome))
    else:
        if not (args.model and args.benchmark and args.features):
            raise CliError(
                "simulate needs --model, --benchmark, and --features "
                "(or --baseline for perfect alarms)"
            )
        model = _load_model_dir(args.model)
        benchmark = Benchmark.load(_require(args.benchmark, "benchmark file"))
        table = _load_labeled(args.features)
        inputs += [Path(args.model), Path(args.benchmark), Path(args.features)]
        ens = benchmark.ensemble_test
        ens_points = score(model, table.features[ens], ens, table.labels[ens])
        scale = _score_scale(ens_points)
        ens_scores = np.array([p.score for p in ens_points])
        ens_labels = np.array([p.label for p in ens_points]) == 1
        try:
            report = roc_pr(ens_scores, ens_labels, tuple(args.fpr))
        except ValueError as exc:
            raise CliError(f"benchmark {benchmark.index}: {exc}") from None

        lo_e, hi_e = benchmark.test_range
        lo_us, hi_us = lo_e * EPOCH_US, hi_e * EPOCH_US
        mask = (table.epochs >= lo_e) & (table.epochs < hi_e)
        test_ids = np.nonzero(mask)[0]
        test_points = score(
            model,
            table.features[test_ids],
            test_ids,
            table.labels[test_ids],
            scale=scale,
        )
        test_scores = np.array([p.score for p in test_points])
        failures = {
            m: ts[(ts >= lo_us) & (ts < hi_us)]
            for m, ts in failures_all.items()
        }
        failures = {m: ts for m, ts in failures.items() if len(ts)}
        interrupted = interrupted_tasks(bundle, failures, vicinity_s)
        for target in args.fpr:
            op = report.operating_points[float(target)]
            alarms = AlarmStream.from_scores(
                table.machine_ids[test_ids],
                table.epochs[test_ids],
                test_scores,
                op.threshold,
            )
            for w in windows:
                policy = QuarantinePolicy(
                    window_hours=w, consecutive_alarms=2, vicinity_s=vicinity_s
                )
                outcome = simulate(bundle, alarms, policy, failures, interrupted)
                rows.extend(_sweep_rows(repr(float(target)), policy, outcome))

    out = Path(args.out)
    out.parent.mkdir(parents=True, exist_ok=True)
    with open(out, "w", encoding="utf-8", newline="") as fh:
        writer = csv.DictWriter(
            fh,
            fieldnames=[
                "fpr",
                "window_h",
                "sched_class",
                "interrupted",
                "recovered",
                "redirected",
                "wasted_cpuh",
                "recovered_cpuh",
                "redirected_cpuh",
            ],
        )
        writer.writeheader()
        for row in rows:
            writer.writerow(
                {
                    k: repr(v) if isinstance(v, float) else v
                    for k, v in row.items()
                }
            )
    write_manifest(out, "simulate", _flags_of(args), {}, inputs, [out])
    log.info("sweep written to %s (%d rows)", out, len(rows))


# ---------------------------------------------------------------------------
# pipeline


def do_pipeline(args: argparse.Namespace) -> None:
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    if args.trace:
        trace_dir = _require(args.trace, "trace directory")
    else:
        trace_dir = out / "trace"
        gen_args = argparse.Namespace(
            out=trace_dir,
            nodes=args.nodes,
            days=args.days,
            seed=args.seed,
            failure_rate=args.failure_rate,
            update_rate=args.update_rate,
            task_rate=args.task_rate,
            signal=args.signal,
        )
        do_gen_trace(gen_args)

    features_path = out / "features.csv"
    do_extract_features(
        argparse.Namespace(trace=trace_dir, out=features_path)
    )
    labeled_path = out / "labeled.csv"
    do_label(
        argparse.Namespace(
            trace=trace_dir,
            features=features_path,
            out=labeled_path,
            downtime_hours=args.downtime_hours,
            horizon_hours=args.horizon_hours,
        )
    )
    bench_dir = out / "benchmarks"
    do_benchmarks(
        argparse.Namespace(
            labeled=labeled_path,
            trace=trace_dir,
            out=bench_dir,
            seed=args.seed,
            safe_fraction=args.safe_fraction,
            max_benchmarks=args.max_benchmarks,
        )
    )
    bench_files = sorted(bench_dir.glob("benchmark_*.json"))
    if args.benchmark_limit:
        bench_files = bench_files[: args.benchmark_limit]
    for bench_file in bench_files:
        index = int(bench_file.stem.split("_")[1])
        model_dir = out / f"model_{index:02d}"
        do_train(
            argparse.Namespace(
                benchmark=bench_file,
                features=labeled_path,
                spec=None,
                out=model_dir,
                fsafe=args.fsafe,
                trees=args.trees,
                reps=args.reps,
                seed=args.seed,
                mtry=args.mtry,
                max_depth=args.max_depth,
                min_leaf=args.min_leaf,
                no_bootstrap=args.no_bootstrap,
                threads=args.threads,
            )
        )
        eval_dir = out / f"eval_{index:02d}"
        eval_dir.mkdir(exist_ok=True)
        report_path = eval_dir / "report.json"
        do_evaluate(
            argparse.Namespace(
                model=model_dir,
                benchmark=bench_file,
                features=labeled_path,
                out=report_path,
                fpr=args.fpr,
            )
        )
        do_report(
            argparse.Namespace(
                infile=report_path,
                svg=eval_dir / "roc.svg",
                svg_pr=eval_dir / "pr.svg",
                csv=eval_dir / "curves.csv",
            )
        )
        do_simulate(
            argparse.Namespace(
                trace=trace_dir,
                model=model_dir,
                benchmark=bench_file,
                features=labeled_path,
                out=eval_dir / "sweep.csv",
                fpr=args.fpr,
                window_hours=args.window_hours,
                downtime_hours=args.downtime_hours,
                horizon_hours=args.horizon_hours,
                vicinity_min=args.vicinity_min,
                baseline=False,
            )
        )
    write_manifest(
        out,
        "pipeline",
        _flags_of(args),
        {"seed": args.seed},
        [trace_dir] if args.trace else [],
        [out],
    )
    log.info("pipeline complete under %s (%d benchmarks)", out, len(bench_files))


# ---------------------------------------------------------------------------
# parser


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="nodecast",
        description="Node failure prediction pipeline for cluster traces.",
    )
    parser.add_argument("--version", action="version", version=f"nodecast {__version__}")
    parser.add_argument(
        "--quiet", action="store_true", help="only warnings and errors on stderr"
    )
    sub = parser.add_subparsers(dest="subcommand", required=True)

    p = sub.add_parser("gen-trace", help="generate a synthetic cluster trace")
    p.add_argument("--out", required=True, type=Path)
    p.add_argument("--nodes", type=int, default=50)
    p.add_argument("--days", type=float, default=29.0)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--failure-rate", type=float, default=0.5, help="per node-day")
    p.add_argument("--update-rate", type=float, default=0.2, help="per node-day")
    p.add_argument("--task-rate", type=float, default=2.0, help="tasks per node-hour")
    p.add_argument("--signal", type=float, default=1.0, help="pre-failure stress gain")
    p.set_defaults(func=do_gen_trace)

    p = sub.add_parser("extract-features", help="compute the per-epoch feature table")
    p.add_argument("--trace", required=True, type=Path)
    p.add_argument("--out", required=True, type=Path, help="features.csv or .csv.gz")
    p.set_defaults(func=do_extract_features)

    p = sub.add_parser("label", help="classify REMOVEs and label feature rows")
    p.add_argument("--trace", required=True, type=Path)
    p.add_argument("--features", required=True, type=Path)
    p.add_argument("--out", required=True, type=Path)
    p.add_argument("--downtime-hours", type=float, default=2.0)
    p.add_argument("--horizon-hours", type=float, default=24.0)
    p.set_defaults(func=do_label)

    p = sub.add_parser("benchmarks", help="build forward-in-time train/test splits")
    p.add_argument("--labeled", required=True, type=Path)
    p.add_argument("--trace", type=Path, help="trace dir, for the exact horizon")
    p.add_argument("--out", required=True, type=Path)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--safe-fraction", type=float, default=0.005)
    p.add_argument("--max-benchmarks", type=int, default=15)
    p.set_defaults(func=do_benchmarks)

    p = sub.add_parser("train", help="train the forest committee for one benchmark")
    p.add_argument("--benchmark", required=True, type=Path)
    p.add_argument("--features", required=True, type=Path)
    p.add_argument("--spec", type=Path, help="ensemble spec JSON (flags override)")
    p.add_argument("--out", required=True, type=Path)
    p.add_argument("--fsafe", type=_floats, default=None, help="default 0.25,0.5,1,2,3,4")
    p.add_argument("--trees", type=_tree_counts, default=None, help="default 2:15")
    p.add_argument("--reps", type=int, default=None, help="default 5")
    p.add_argument("--seed", type=int, default=None, help="default 0")
    p.add_argument("--mtry", type=int, default=None)
    p.add_argument("--max-depth", type=int, default=None)
    p.add_argument("--min-leaf", type=int, default=None)
    p.add_argument("--no-bootstrap", action="store_true", default=None)
    p.add_argument("--threads", type=int, default=None, help="default: all cores")
    p.set_defaults(func=do_train)

    p = sub.add_parser("evaluate", help="score the held-out half and sweep thresholds")
    p.add_argument("--model", required=True, type=Path)
    p.add_argument("--benchmark", required=True, type=Path)
    p.add_argument("--features", required=True, type=Path)
    p.add_argument("--out", required=True, type=Path, help="report JSON path")
    p.add_argument("--fpr", type=_floats, default=_floats(DEFAULT_FPR_TARGETS))
    p.set_defaults(func=do_evaluate)

    p = sub.add_parser("report", help="render ROC/PR SVGs and curve CSV")
    p.add_argument("--in", dest="infile", required=True, type=Path)
    p.add_argument("--svg", type=Path, help="ROC output")
    p.add_argument("--svg-pr", type=Path, help="PR output")
    p.add_argument("--csv", type=Path, help="curve points output")
    p.set_defaults(func=do_report)

    p = sub.add_parser("simulate", help="replay quarantine policies against the trace")
    p.add_argument("--trace", required=True, type=Path)
    p.add_argument("--model", type=Path)
    p.add_argument("--benchmark", type=Path)
    p.add_argument("--features", type=Path)
    p.add_argument("--baseline", action="store_true", help="perfect alarms, whole trace")
    p.add_argument("--out", required=True, type=Path, help="sweep CSV path")
    p.add_argument("--fpr", type=_floats, default=_floats(DEFAULT_FPR_TARGETS))
    p.add_argument(
        "--window-hours", type=_floats, default=_floats(DEFAULT_WINDOW_HOURS)
    )
    p.add_argument("--downtime-hours", type=float, default=2.0)
    p.add_argument("--horizon-hours", type=float, default=24.0)
    p.add_argument("--vicinity-min", type=float, default=5.0)
    p.set_defaults(func=do_simulate)

    p = sub.add_parser("pipeline", help="run every stage end to end")
    p.add_argument("--out", required=True, type=Path)
    p.add_argument("--trace", type=Path, help="existing trace dir; omit to generate")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--nodes", type=int, default=50)
    p.add_argument("--days", type=float, default=29.0)
    p.add_argument("--failure-rate", type=float, default=0.5)
    p.add_argument("--update-rate", type=float, default=0.2)
    p.add_argument("--task-rate", type=float, default=2.0)
    p.add_argument("--signal", type=float, default=1.0)
    p.add_argument("--downtime-hours", type=float, default=2.0)
    p.add_argument("--horizon-hours", type=float, default=24.0)
    p.add_argument("--safe-fraction", type=float, default=0.005)
    p.add_argument("--max-benchmarks", type=int, default=15)
    p.add_argument("--benchmark-limit", type=int, default=0, help="0 = all")
    p.add_argument("--fsafe", type=_floats, default=None)
    p.add_argument("--trees", type=_tree_counts, default=None)
    p.add_argument("--reps", type=int, default=None)
    p.add_argument("--mtry", type=int, default=None)
    p.add_argument("--max-depth", type=int, default=None)
    p.add_argument("--min-leaf", type=int, default=None)
    p.add_argument("--no-bootstrap", action="store_true", default=None)
    p.add_argument("--threads", type=int, default=None)
    p.add_argument("--fpr", type=_floats, default=_floats(DEFAULT_FPR_TARGETS))
    p.add_argument(
        "--window-hours", type=_floats, default=_floats(DEFAULT_WINDOW_HOURS)
    )
    p.add_argument("--vicinity-min", type=float, default=5.0)
    p.set_defaults(func=do_pipeline)
    return parser


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(
        stream=sys.stderr,
        level=logging.WARNING if args.quiet else logging.INFO,
        format="%(levelname)s %(name)s: %(message)s",
    )
    try:
        args.func(args)
    except CliError as exc:
        print(f"nodecast: error: {exc}", file=sys.stderr)
        return 2
    except (TraceFormatError, FileNotFoundError) as exc:
        print(f"nodecast: error: {exc}", file=sys.stderr)
        return 2
    except ValueError as exc:
        print(f"nodecast: {exc}", file=sys.stderr)
        return 1
    except Exception as exc:  # noqa: BLE001
        log.exception("unhandled failure: %s", exc)
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())

"""Command-line interface.

Subcommands mirror the pipeline stages (generate, prepare, resample, train,
evaluate, explain, map-grades, align) plus ``run`` for the whole pipeline
and ``report`` for pretty-printing a bundle. Failures exit nonzero with a
stage-tagged message on stderr.
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

import numpy as np

from . import alignment as alignment_mod
from . import grading as grading_mod
from .dataprep import (
    DEFAULT_COUNTRIES,
    FeatureMatrix,
    SplitSpec,
    prepare,
    read_records,
    write_records,
)
from .metrics import evaluate
from .models import MODEL_KINDS, fit, load_model, predict_proba, save_model
from .pipeline import (
    RunConfig,
    StageError,
    _meta_doc,
    format_report,
    read_json,
    read_reference_grades,
    run_pipeline,
    write_json,
    write_reference_grades,
)
from .shapley import AttributionConfig, AttributionReport, global_importance, group_countries
from .smote import SmoteConfig, resample
from .synthgen import GeneratorConfig, generate_with_oracle, oracle_reference_grades


def _load_rows(path, meta=None, split=None) -> FeatureMatrix:
    fm = FeatureMatrix.from_csv(path)
    if meta is None:
        return fm
    doc = read_json(meta)
    if split is None:
        return fm
    return fm.subset(np.asarray(doc["split"][split], dtype=int))


def _cmd_generate(args) -> int:
    with open(args.config) as fh:
        doc = json.load(fh)
    doc["year_range"] = tuple(doc["year_range"])
    if args.seed is not None:
        doc["seed"] = args.seed
    config = GeneratorConfig(**doc)
    records, oracle = generate_with_oracle(config)
    write_records(args.out, records)
    if args.grades_out:
        write_reference_grades(args.grades_out, oracle_reference_grades(oracle))
    print(
        f"wrote {len(records)} statements to {args.out} "
        f"(realized default rate {oracle.realized_rate:.4%})"
    )
    return 0


def _cmd_prepare(args) -> int:
    doc = {}
    if args.config:
        with open(args.config) as fh:
            doc = json.load(fh)
    spec = SplitSpec(
        train_years=tuple(doc.get("train_years", (2004, 2012))),
        validation_years=tuple(doc.get("validation_years", (2013, 2018))),
        test_fraction=float(doc.get("test_fraction", 0.3)),
        seed=args.seed if args.seed is not None else int(doc.get("seed", 0)),
    )
    countries = tuple(doc.get("countries", DEFAULT_COUNTRIES))
    prep = prepare(read_records(args.inp), spec, countries)
    prep.features.to_csv(args.out)
    meta_path = args.meta or str(Path(args.out).with_suffix(".meta.json"))
    write_json(meta_path, _meta_doc(prep))
    print(
        f"wrote {prep.features.n} feature rows to {args.out} "
        f"(train {prep.split.train.n} / test {prep.split.test.n} / "
        f"validation {prep.split.validation.n}; rejections {prep.rejection_counts()})"
    )
    return 0


def _cmd_resample(args) -> int:
    rows = _load_rows(args.inp, args.meta, "train" if args.meta else None)
    config = SmoteConfig(k=args.k, target_ratio=args.ratio, seed=args.seed or 0)
    result = resample(rows, config)
    result.data.to_csv(args.out)
    audit_path = args.audit or str(Path(args.out).with_suffix(".audit.json"))
    write_json(audit_path, result.audit())
    print(
        f"wrote {result.data.n} rows to {args.out} "
        f"({result.parents.shape[0]} synthetic)"
    )
    return 0


def _cmd_train(args) -> int:
    params = None
    if args.params:
        with open(args.params) as fh:
            params = json.load(fh)
    rows = _load_rows(args.inp, args.meta, args.split)
    model = fit(args.model, rows, params, args.seed or 0)
    save_model(model, args.out)
    print(f"trained {args.model} on {rows.n} rows -> {args.out}")
    return 0


def _cmd_evaluate(args) -> int:
    model = load_model(args.model)
    rows = _load_rows(args.inp, args.meta, args.split)
    report = evaluate(rows.y, predict_proba(model, rows), threshold=args.threshold)
    report.save(args.report)
    auc = "n/a" if report.auc is None else f"{report.auc:.4f}"
    print(
        f"n={report.n} accuracy={100 * report.accuracy:.2f} "
        f"precision={100 * report.precision:.2f} recall={100 * report.recall:.2f} "
        f"f1={report.f1:.4f} auc={auc} -> {args.report}"
    )
    return 0


def _cmd_explain(args) -> int:
    model = load_model(args.model)
    rows = _load_rows(args.inp, args.meta, args.split)
    background = FeatureMatrix.from_csv(args.background)
    if args.max_instances and rows.n > args.max_instances:
        rng = np.random.default_rng(args.seed or 0)
        rows = rows.subset(np.sort(rng.choice(rows.n, size=args.max_instances, replace=False)))
    group_map = group_countries(rows.columns) if args.group_countries else None
    config = AttributionConfig(
        background=background.X, group_map=group_map, seed=args.seed or 0
    )
    report = global_importance(model, rows, config)
    report.save(args.out)
    top = ", ".join(report.ranking[:3])
    print(f"explained {rows.n} rows -> {args.out} (top players: {top})")
    return 0


def _cmd_map_grades(args) -> int:
    model = load_model(args.model)
    rows = _load_rows(args.inp, args.meta, args.split)
    ref = read_reference_grades(args.reference)
    probs = predict_proba(model, rows)
    grades, kept = [], []
    for i in range(rows.n):
        grade = ref.get(rows.company_ids[i], rows.years[i])
        if grade is not None:
            grades.append(grade)
            kept.append(i)
    if not kept:
        raise ValueError("no rows matched the reference grade stream")
    probs = probs[np.asarray(kept)]
    if args.fixed_intervals:
        cal = grading_mod.load_fixed_intervals(args.fixed_intervals)
    else:
        cal = grading_mod.calibrate(grades, probs)
    mapped = grading_mod.assign_grades(probs, cal)
    confusion = grading_mod.grade_confusion(grades, mapped)
    write_json(
        args.out,
        {
            "mode": "fixed" if args.fixed_intervals else "calibrate",
            "calibration": cal.to_dict(),
            "confusion": confusion.to_dict(),
        },
    )
    print(
        f"graded {len(grades)} rows -> {args.out} "
        f"(equal {100 * confusion.equal_fraction:.1f}%, "
        f"riskier {100 * confusion.riskier_fraction:.1f}%)"
    )
    return 0


def _cmd_align(args) -> int:
    survey = alignment_mod.load_survey(args.survey)
    attribution = AttributionReport.load(args.attribution)
    report = alignment_mod.align(survey, attribution)
    report.save(args.out)
    print(
        f"alignment -> {args.out} (rho={report.spearman:.4f}, "
        f"tau={report.kendall:.4f}, top-3 overlap={report.top3_overlap:.2f})"
    )
    return 0


def _cmd_run(args) -> int:
    config = RunConfig.from_json(args.config) if args.config else _demo_config()
    if args.seed is not None:
        doc = config.to_dict()
        doc["seed"] = args.seed
        for section in ("generator", "split", "smote", "model", "attribution"):
            doc[section].pop("seed", None)
        config = RunConfig.from_dict(doc)
    bundle = run_pipeline(config, args.out)
    print(f"report bundle written to {args.out} (digest {bundle['config_digest']})")
    return 0


def _demo_config() -> RunConfig:
    from importlib import resources

    ref = resources.files("pdxplain.data").joinpath("demo_config.json")
    return RunConfig.from_dict(json.loads(ref.read_text()))


def _cmd_report(args) -> int:
    path = Path(args.inp)
    if path.is_dir():
        path = path / "report.json"
    text = format_report(read_json(path))
    print(text)
    if args.out:
        Path(args.out).write_text(text + "\n")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="pdxplain",
        description="Company default prediction with explainable attributions on synthetic panels",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("generate", help="generate a synthetic statement panel")
    p.add_argument("--config", required=True, help="generator config JSON")
    p.add_argument("--out", required=True, help="output raw statement CSV")
    p.add_argument("--grades-out", help="optional reference grade CSV")
    p.add_argument("--seed", type=int)
    p.set_defaults(func=_cmd_generate, stage="generate")

    p = sub.add_parser("prepare", help="label, derive ratios, split, and scale")
    p.add_argument("--in", dest="inp", required=True, help="raw statement CSV")
    p.add_argument("--config", help="split spec JSON")
    p.add_argument("--out", required=True, help="feature matrix CSV")
    p.add_argument("--meta", help="sidecar JSON path (default: <out>.meta.json)")
    p.add_argument("--seed", type=int)
    p.set_defaults(func=_cmd_prepare, stage="prepare")

    p = sub.add_parser("resample", help="SMOTE-oversample a training matrix")
    p.add_argument("--in", dest="inp", required=True, help="feature CSV (training rows)")
    p.add_argument("--meta", help="prepare sidecar; restricts to the train split")
    p.add_argument("--k", type=int, default=10)
    p.add_argument("--ratio", type=float, default=0.5)
    p.add_argument("--seed", type=int)
    p.add_argument("--out", required=True)
    p.add_argument("--audit", help="parent-audit JSON path (default: <out>.audit.json)")
    p.set_defaults(func=_cmd_resample, stage="resample")

    p = sub.add_parser("train", help="fit a model")
    p.add_argument("--model", required=True, choices=MODEL_KINDS)
    p.add_argument("--params", help="hyperparameter JSON")
    p.add_argument("--in", dest="inp", required=True, help="training feature CSV")
    p.add_argument("--meta", help="prepare sidecar for --split")
    p.add_argument("--split", choices=("train", "test", "validation"))
    p.add_argument("--out", required=True, help="model JSON")
    p.add_argument("--seed", type=int)
    p.set_defaults(func=_cmd_train, stage="train")

    p = sub.add_parser("evaluate", help="score a model on labeled rows")
    p.add_argument("--model", required=True)
    p.add_argument("--in", dest="inp", required=True)
    p.add_argument("--meta")
    p.add_argument("--split", choices=("train", "test", "validation"))
    p.add_argument("--threshold", type=float, default=0.5)
    p.add_argument("--report", "--out", dest="report", required=True, help="output report JSON")
    p.set_defaults(func=_cmd_evaluate, stage="evaluate")

    p = sub.add_parser("explain", help="exact Shapley attributions")
    p.add_argument("--model", required=True)
    p.add_argument("--in", dest="inp", required=True, help="rows to explain")
    p.add_argument("--meta")
    p.add_argument("--split", choices=("train", "test", "validation"))
    p.add_argument("--background", required=True, help="background feature CSV")
    p.add_argument("--group-countries", action="store_true")
    p.add_argument("--max-instances", type=int)
    p.add_argument("--out", required=True)
    p.add_argument("--seed", type=int)
    p.set_defaults(func=_cmd_explain, stage="explain")

    p = sub.add_parser("map-grades", help="map probabilities to rating grades")
    p.add_argument("--model", required=True)
    p.add_argument("--reference", required=True, help="reference grade CSV")
    p.add_argument("--in", dest="inp", required=True)
    p.add_argument("--meta")
    p.add_argument("--split", choices=("train", "test", "validation"))
    p.add_argument("--fixed-intervals", help="interval table JSON instead of calibration")
    p.add_argument("--out", required=True)
    p.set_defaults(func=_cmd_map_grades, stage="map-grades")

    p = sub.add_parser("align", help="expert-vs-model agreement score")
    p.add_argument("--survey", help="survey CSV (default: bundled four-analyst table)")
    p.add_argument("--attribution", required=True, help="attributions JSON")
    p.add_argument("--out", required=True)
    p.set_defaults(func=_cmd_align, stage="align")

    p = sub.add_parser("run", help="run the full pipeline")
    p.add_argument("--config", help="run config JSON (default: bundled demo config)")
    p.add_argument("--out", required=True, help="report bundle directory")
    p.add_argument("--seed", type=int, help="override the global seed")
    p.set_defaults(func=_cmd_run, stage="run")

    p = sub.add_parser("report", help="pretty-print a report bundle")
    p.add_argument("--in", dest="inp", required=True, help="bundle directory or report.json")
    p.add_argument("--out", help="also write the formatted text to this file")
    p.set_defaults(func=_cmd_report, stage="report")

    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except StageError as exc:
        print(f"error [{exc.stage}]: {exc.cause}", file=sys.stderr)
        return 1
    except Exception as exc:
        print(f"error [{args.stage}]: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())

"""End-to-end orchestration: generate, prepare, resample, train, evaluate,
explain, map grades, align, and emit a plot-ready report bundle.

Stage artifacts are content-addressed under ``<out>/stages/`` by a hash of
the run config, so rerunning with an identical config reuses them. Every
stage reads its inputs back from the artifacts it (or an earlier run) wrote,
which keeps cached and fresh runs on the same data path and makes report
bundles byte-identical across reruns.
"""

from __future__ import annotations

import csv
import hashlib
import json
from dataclasses import asdict, dataclass, is_dataclass
from pathlib import Path
from typing import Optional

import numpy as np

from . import alignment as alignment_mod
from . import grading as grading_mod
from .dataprep import (
    DEFAULT_COUNTRIES,
    FeatureMatrix,
    ScalerParams,
    SplitSpec,
    prepare,
    read_records,
    write_records,
)
from .metrics import evaluate
from .models import fit, load_model, predict_proba, save_model
from .shapley import (
    AttributionConfig,
    AttributionReport,
    global_importance,
    group_countries,
    sample_background,
)
from .smote import SmoteConfig, resample
from .synthgen import (
    GeneratorConfig,
    default_rate_report,
    generate_with_oracle,
    oracle_reference_grades,
)

class StageError(RuntimeError):
    def __init__(self, stage: str, cause: Exception):
        super().__init__(f"stage {stage!r} failed: {cause}")
        self.stage = stage
        self.cause = cause


def _derive_seed(global_seed: int, stage_index: int) -> int:
    return int(np.random.SeedSequence([global_seed, stage_index]).generate_state(1)[0])


@dataclass
class RunConfig:
    generator: GeneratorConfig
    split: SplitSpec
    smote: SmoteConfig
    model_kind: str = "gbt"
    model_params: Optional[dict] = None
    model_seed: int = 0
    background_size: int = 100
    n_explain: int = 25
    group_countries: bool = True
    attribution_seed: int = 0
    grading_mode: str = "calibrate"  # or "fixed"
    fixed_intervals_path: Optional[str] = None
    survey_path: Optional[str] = None
    countries: tuple = DEFAULT_COUNTRIES
    seed: int = 0

    def __post_init__(self):
        if self.grading_mode not in ("calibrate", "fixed"):
            raise ValueError("grading_mode must be 'calibrate' or 'fixed'")

    @classmethod
    def from_dict(cls, doc: dict) -> "RunConfig":
        seed = int(doc.get("seed", 0))

        def stage_seed(section: dict, index: int) -> int:
            return int(section.get("seed", _derive_seed(seed, index)))

        gen = dict(doc["generator"])
        gen["year_range"] = tuple(gen["year_range"])
        gen["seed"] = stage_seed(gen, 0)
        split_doc = dict(doc.get("split", {}))
        split = SplitSpec(
            train_years=tuple(split_doc.get("train_years", (2004, 2012))),
            validation_years=tuple(split_doc.get("validation_years", (2013, 2018))),
            test_fraction=float(split_doc.get("test_fraction", 0.3)),
            seed=stage_seed(split_doc, 1),
        )
        smote_doc = dict(doc.get("smote", {}))
        smote_cfg = SmoteConfig(
            k=int(smote_doc.get("k", 10)),
            target_ratio=float(smote_doc.get("target_ratio", 0.5)),
            seed=stage_seed(smote_doc, 2),
        )
        model_doc = dict(doc.get("model", {}))
        attr_doc = dict(doc.get("attribution", {}))
        grading_doc = dict(doc.get("grading", {}))
        return cls(
            generator=GeneratorConfig(**gen),
            split=split,
            smote=smote_cfg,
            model_kind=model_doc.get("kind", "gbt"),
            model_params=model_doc.get("params"),
            model_seed=stage_seed(model_doc, 3),
            background_size=int(attr_doc.get("background_size", 100)),
            n_explain=int(attr_doc.get("n_instances", 25)),
            group_countries=bool(attr_doc.get("group_countries", True)),
            attribution_seed=stage_seed(attr_doc, 4),
            grading_mode=grading_doc.get("mode", "calibrate"),
            fixed_intervals_path=grading_doc.get("intervals_path"),
            survey_path=doc.get("survey_path"),
            countries=tuple(doc.get("countries", DEFAULT_COUNTRIES)),
            seed=seed,
        )

    @classmethod
    def from_json(cls, path) -> "RunConfig":
        with open(path) as fh:
            return cls.from_dict(json.load(fh))

    def to_dict(self) -> dict:
        g = self.generator
        return {
            "seed": self.seed,
            "countries": list(self.countries),
            "generator": {
                "n_companies": g.n_companies,
                "year_range": list(g.year_range),
                "imbalance_ratio": g.imbalance_ratio,
                "missing_rates": dict(sorted(g.missing_rates.items())),
                "signal_strength": g.signal_strength,
                "seed": g.seed,
            },
            "split": {
                "train_years": list(self.split.train_years),
                "validation_years": list(self.split.validation_years),
                "test_fraction": self.split.test_fraction,
                "seed": self.split.seed,
            },
            "smote": {
                "k": self.smote.k,
                "target_ratio": self.smote.target_ratio,
                "seed": self.smote.seed,
            },
            "model": {
                "kind": self.model_kind,
                "params": asdict(self.model_params)
                if is_dataclass(self.model_params)
                else self.model_params,
                "seed": self.model_seed,
            },
            "attribution": {
                "background_size": self.background_size,
                "n_instances": self.n_explain,
                "group_countries": self.group_countries,
                "seed": self.attribution_seed,
            },
            "grading": {
                "mode": self.grading_mode,
                "intervals_path": self.fixed_intervals_path,
            },
            "survey_path": self.survey_path,
        }

    def digest(self) -> str:
        payload = json.dumps(self.to_dict(), sort_keys=True).encode()
        return hashlib.sha256(payload).hexdigest()[:12]


def write_reference_grades(path, grades: list[tuple[str, int, str]]) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["company_id", "statement_year", "grade"])
        writer.writerows(grades)


class ReferenceGrades:
    """Reference grade stream keyed by (company_id, statement_year) when the
    CSV carries a year column, or by company_id alone otherwise."""

    def __init__(self, entries: dict, per_year: bool):
        self.entries = entries
        self.per_year = per_year

    def get(self, company_id: str, year: int):
        key = (company_id, int(year)) if self.per_year else company_id
        return self.entries.get(key)


def read_reference_grades(path) -> ReferenceGrades:
    with open(path, newline="") as fh:
        reader = csv.DictReader(fh)
        fields = set(reader.fieldnames or [])
        if not {"company_id", "grade"} <= fields:
            raise ValueError("reference grade CSV needs company_id and grade columns")
        per_year = "statement_year" in fields
        entries: dict = {}
        for row in reader:
            key = (
                (row["company_id"], int(row["statement_year"]))
                if per_year
                else row["company_id"]
            )
            entries[key] = row["grade"].strip()
    return ReferenceGrades(entries, per_year)


def write_json(path, doc) -> None:
    with open(path, "w") as fh:
        json.dump(doc, fh, sort_keys=True, indent=1)


def read_json(path):
    with open(path) as fh:
        return json.load(fh)


class _Stages:
    """Content-addressed stage directories with done markers."""

    def __init__(self, out_dir: Path, digest: str):
        self.root = out_dir / "stages"
        self.digest = digest

    def dir(self, name: str) -> Path:
        d = self.root / f"{name}_{self.digest}"
        d.mkdir(parents=True, exist_ok=True)
        return d

    def is_done(self, name: str) -> bool:
        return (self.root / f"{name}_{self.digest}" / ".done").exists()

    def mark_done(self, name: str) -> None:
        (self.root / f"{name}_{self.digest}" / ".done").write_text("ok\n")


def _meta_doc(prep) -> dict:
    return {
        "scaler": prep.scaler.to_dict(),
        "countries": list(prep.countries),
        "split": {
            "train": [int(i) for i in prep.split.train_indices],
            "test": [int(i) for i in prep.split.test_indices],
            "validation": [int(i) for i in prep.split.validation_indices],
        },
        "rejections": prep.rejection_counts(),
    }


def load_split(features_path, meta_path) -> dict[str, FeatureMatrix]:
    """Reload the prepared matrix and slice it by the stored membership."""
    fm = FeatureMatrix.from_csv(features_path)
    meta = read_json(meta_path)
    out = {"all": fm, "scaler": ScalerParams.from_dict(meta["scaler"]), "meta": meta}
    for name in ("train", "test", "validation"):
        out[name] = fm.subset(np.asarray(meta["split"][name], dtype=int))
    return out


def run_pipeline(config: RunConfig, out_dir) -> dict:
    """Execute every stage and write the report bundle under ``out_dir``.

    Raises StageError naming the failing stage; artifacts written before the
    failure are left in place for inspection.
    """
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    stages = _Stages(out_dir, config.digest())

    def run_stage(name: str, compute):
        d = stages.dir(name)
        try:
            if not stages.is_done(name):
                compute(d)
                stages.mark_done(name)
            return d
        except Exception as exc:
            raise StageError(name, exc) from exc

    # generate
    def _generate(d: Path):
        records, oracle = generate_with_oracle(config.generator)
        write_records(d / "data.csv", records)
        write_reference_grades(d / "reference_grades.csv", oracle_reference_grades(oracle))
        write_json(
            d / "generation.json",
            {
                "intercept": oracle.intercept,
                "realized_default_rate": oracle.realized_rate,
                "target_default_rate": oracle.target_rate,
                "n_records": len(records),
            },
        )
    gen_dir = run_stage("generate", _generate)
    records = read_records(gen_dir / "data.csv")
    ref_grades = read_reference_grades(gen_dir / "reference_grades.csv")
    generation = read_json(gen_dir / "generation.json")

    # prepare
    def _prepare(d: Path):
        prep = prepare(records, config.split, config.countries)
        prep.features.to_csv(d / "features.csv")
        write_json(d / "features.meta.json", _meta_doc(prep))
    prep_dir = run_stage("prepare", _prepare)
    splits = load_split(prep_dir / "features.csv", prep_dir / "features.meta.json")

    # resample
    def _resample(d: Path):
        rs = resample(splits["train"], config.smote)
        rs.data.to_csv(d / "train_resampled.csv")
        write_json(d / "smote_audit.json", rs.audit())
    rs_dir = run_stage("resample", _resample)
    train_rs = FeatureMatrix.from_csv(rs_dir / "train_resampled.csv")

    # train
    def _train(d: Path):
        save_model(
            fit(config.model_kind, splits["train"], config.model_params, config.model_seed),
            d / "model_wrs.json",
        )
        save_model(
            fit(config.model_kind, train_rs, config.model_params, config.model_seed),
            d / "model_rs.json",
        )
    train_dir = run_stage("train", _train)
    model_wrs = load_model(train_dir / "model_wrs.json")
    model_rs = load_model(train_dir / "model_rs.json")

    # evaluate
    def _evaluate(d: Path):
        rows = [
            ("WRS", model_wrs, splits["test"]),
            ("RS", model_rs, splits["test"]),
            ("RS+VS", model_rs, splits["validation"]),
        ]
        table = []
        for label, model, data in rows:
            report = evaluate(data.y, predict_proba(model, data))
            table.append({"row": label, "model": config.model_kind, **report.to_dict()})
        write_json(d / "performance.json", {"rows": table})
    eval_dir = run_stage("evaluate", _evaluate)
    performance = read_json(eval_dir / "performance.json")

    # explain
    def _explain(d: Path):
        background = sample_background(
            splits["train"], config.background_size, config.attribution_seed
        )
        pool = splits["validation"] if splits["validation"].n else splits["test"]
        rng = np.random.default_rng(config.attribution_seed)
        take = min(config.n_explain, pool.n)
        instances = pool.subset(np.sort(rng.choice(pool.n, size=take, replace=False)))
        group_map = group_countries(pool.columns) if config.group_countries else None
        cfg = AttributionConfig(
            background=background, group_map=group_map, seed=config.attribution_seed
        )
        global_importance(model_rs, instances, cfg).save(d / "attributions.json")
    explain_dir = run_stage("explain", _explain)
    attribution = AttributionReport.load(explain_dir / "attributions.json")

    # map-grades
    def _map_grades(d: Path):
        def paired(split_name):
            data = splits[split_name]
            probs = predict_proba(model_rs, data)
            grades, kept = [], []
            for i in range(data.n):
                grade = ref_grades.get(data.company_ids[i], data.years[i])
                if grade is not None:
                    grades.append(grade)
                    kept.append(i)
            return grades, probs[np.asarray(kept, dtype=int)]

        if config.grading_mode == "fixed":
            cal = grading_mod.load_fixed_intervals(config.fixed_intervals_path)
        else:
            cal = grading_mod.calibrate(*paired("test"))
        val_grades, val_probs = paired("validation")
        mapped = grading_mod.assign_grades(val_probs, cal)
        confusion = grading_mod.grade_confusion(val_grades, mapped)
        write_json(
            d / "grading.json",
            {
                "mode": config.grading_mode,
                "calibration": cal.to_dict(),
                "confusion": confusion.to_dict(),
            },
        )
    grade_dir = run_stage("map-grades", _map_grades)
    grading = read_json(grade_dir / "grading.json")

    # align
    def _align(d: Path):
        survey = alignment_mod.load_survey(config.survey_path)
        alignment_mod.align(survey, attribution).save(d / "alignment.json")
    align_dir = run_stage("align", _align)
    align_doc = read_json(align_dir / "alignment.json")

    # report bundle
    def _report(_d: Path):
        bundle = {
            "config": config.to_dict(),
            "config_digest": config.digest(),
            "generation": generation,
            "rejections": splits["meta"]["rejections"],
            "default_rates": default_rate_report(records),
            "performance": performance,
            "attribution": attribution.to_dict(),
            "grading": grading,
            "alignment": align_doc,
        }
        write_json(out_dir / "report.json", bundle)
        _write_tables(out_dir, bundle)
    try:
        _report(out_dir)
    except Exception as exc:
        raise StageError("report", exc) from exc
    return read_json(out_dir / "report.json")


def _write_tables(out_dir: Path, bundle: dict) -> None:
    with open(out_dir / "performance.csv", "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["row", "model", "accuracy", "precision", "recall", "f1", "auc", "tp", "fp", "tn", "fn", "n"])
        for r in bundle["performance"]["rows"]:
            writer.writerow(
                [r["row"], r["model"]]
                + [repr(float(r[k])) for k in ("accuracy", "precision", "recall", "f1")]
                + ["" if r["auc"] is None else repr(float(r["auc"]))]
                + [r[k] for k in ("tp", "fp", "tn", "fn", "n")]
            )

    with open(out_dir / "default_rates.csv", "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["year", "count", "defaults", "rate"])
        for row in bundle["default_rates"]:
            writer.writerow([row["year"], row["count"], row["defaults"], repr(float(row["rate"]))])

    with open(out_dir / "grade_confusion.csv", "w", newline="") as fh:
        writer = csv.writer(fh)
        grades = bundle["grading"]["confusion"]["grades"]
        writer.writerow(["reference\\mapped", *grades])
        for g, row in zip(grades, bundle["grading"]["confusion"]["matrix"]):
            writer.writerow([g, *row])

    with open(out_dir / "importance.csv", "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["rank", "player", "mean_abs_shap"])
        att = bundle["attribution"]
        importance = dict(zip(att["players"], att["global_importance"]))
        for rank, player in enumerate(att["ranking"], start=1):
            writer.writerow([rank, player, repr(float(importance[player]))])

    with open(out_dir / "alignment.csv", "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["feature", "expert_total", "expert_rank", "model_rank", "delta"])
        al = bundle["alignment"]
        e_rank = {f: i + 1 for i, f in enumerate(al["expert_ranking"])}
        m_rank = {f: i + 1 for i, f in enumerate(al["model_ranking"])}
        for f in al["features"]:
            writer.writerow(
                [f, repr(float(al["expert_totals"][f])), e_rank[f], m_rank[f], repr(float(al["delta"][f]))]
            )


def _fmt_pct(v) -> str:
    return f"{100.0 * v:.2f}"


def _fmt_frac(v) -> str:
    return "n/a" if v is None else f"{v:.4f}"


def _table(headers: list[str], rows: list[list[str]]) -> list[str]:
    widths = [max(len(h), *(len(r[i]) for r in rows)) if rows else len(h) for i, h in enumerate(headers)]
    fmt = "  ".join(f"{{:<{w}}}" for w in widths)
    lines = [fmt.format(*headers), fmt.format(*("-" * w for w in widths))]
    lines += [fmt.format(*row) for row in rows]
    return lines


def format_report(bundle: dict) -> str:
    """Human-readable text tables. Accuracy, precision, and recall print as
    percentages; F1 and AUC stay fractions."""
    lines: list[str] = []

    def section(title: str, content_rows):
        lines.append(title)
        lines.append("=" * len(title))
        if not content_rows:
            lines.append(f"[section omitted: {title} has no data]")
        else:
            lines.extend(content_rows)
        lines.append("")

    perf = bundle.get("performance", {}).get("rows", [])
    section(
        "Performance",
        _table(
            ["Setting", "Model", "Accuracy", "Precision", "Recall", "F1", "AUC"],
            [
                [
                    r["row"],
                    r["model"],
                    _fmt_pct(r["accuracy"]),
                    _fmt_pct(r["precision"]),
                    _fmt_pct(r["recall"]),
                    _fmt_frac(r["f1"]),
                    _fmt_frac(r["auc"]),
                ]
                for r in perf
            ],
        )
        if perf
        else [],
    )

    rates = bundle.get("default_rates", [])
    section(
        "Default rate by year",
        _table(
            ["Year", "Rated", "Defaults", "Rate"],
            [[str(r["year"]), str(r["count"]), str(r["defaults"]), _fmt_pct(r["rate"]) + "%"] for r in rates],
        )
        if rates
        else [],
    )

    grading = bundle.get("grading")
    if grading:
        grades = grading["confusion"]["grades"]
        rows = [
            [g, *(str(v) for v in row)]
            for g, row in zip(grades, grading["confusion"]["matrix"])
        ]
        content = _table(["Ref\\Map", *grades], rows)
        conf = grading["confusion"]
        content.append(
            f"mapped riskier: {_fmt_pct(conf['riskier_fraction'])}%  "
            f"safer: {_fmt_pct(conf['safer_fraction'])}%  "
            f"equal: {_fmt_pct(conf['equal_fraction'])}%  "
            f"critical underestimation: {conf['critical_underestimation']}"
        )
        section("Grade confusion (reference rows x mapped columns)", content)
    else:
        section("Grade confusion (reference rows x mapped columns)", [])

    att = bundle.get("attribution")
    if att:
        importance = dict(zip(att["players"], att["global_importance"]))
        rows = [
            [str(i + 1), p, f"{importance[p]:.6f}"] for i, p in enumerate(att["ranking"])
        ]
        section("Global importance (mean |attribution|)", _table(["Rank", "Player", "Mean |phi|"], rows))
    else:
        section("Global importance (mean |attribution|)", [])

    al = bundle.get("alignment")
    if al:
        content = [
            f"Spearman rho: {al['spearman']:.4f}   Kendall tau-b: {al['kendall']:.4f}   "
            f"top-3 overlap: {al['top3_overlap']:.2f}   top-5 overlap: {al['top5_overlap']:.2f}",
            "",
        ]
        e_rank = {f: i + 1 for i, f in enumerate(al["expert_ranking"])}
        m_rank = {f: i + 1 for i, f in enumerate(al["model_ranking"])}
        content += _table(
            ["Feature", "Expert total", "Expert rank", "Model rank", "Delta"],
            [
                [
                    f,
                    f"{al['expert_totals'][f]:g}",
                    str(e_rank[f]),
                    str(m_rank[f]),
                    f"{al['delta'][f]:+.4f}",
                ]
                for f in al["features"]
            ],
        )
        section("Expert alignment", content)
    else:
        section("Expert alignment", [])

    return "\n".join(lines)

"""Pipeline orchestration: subcommands over a shared artifact directory.

Each subcommand reads declared inputs, writes its outputs atomically
(temp + rename) into ``--out``, and records the effective config hash and
seed in ``manifest.json``. Reruns with identical config and inputs produce
byte-identical data outputs; no artifact embeds a timestamp.
"""

from __future__ import annotations

import argparse
import configparser
import csv
import hashlib
import json
import logging
import os
import shutil
import sys
from datetime import date, datetime, time, timedelta, timezone
from pathlib import Path
from typing import Callable

from . import churn as churn_mod
from . import classify as classify_mod
from . import corpus as corpus_mod
from . import dtm as dtm_mod
from . import evaluate as evaluate_mod
from . import ingest as ingest_mod
from . import nmf as nmf_mod
from . import plots as plots_mod
from . import synth as synth_mod

logger = logging.getLogger(__name__)


class CliError(Exception):
    """Runtime failure (missing input, config violation): exit code 1."""


# Effective settings = these defaults overlaid with the --config file.
# All values are strings; blank means "unset" for optional entries.
DEFAULTS: dict[str, dict[str, str]] = {
    "global": {"seed": "0"},
    "paths": {"events": "", "namespaces": ""},
    "ingest": {
        "epoch": "2001-01-15",
        "single_quarter_fraction": "0.2",
        "drop_last_quarter": "false",
    },
    "dtm": {
        "topics": "7",
        "sigma2": "0.01",
        "alpha": "",
        "eta": "0.01",
        "iterations": "200",
        "burn_in": "100",
        "coupling_scale": "1.0",
        "coupling_cap": "1000.0",
    },
    "nmf": {
        "clusters": "10",
        "max_iter": "200",
        "tol": "1e-4",
        "eligible_min_quarters": "4",
        "dominant_role_threshold": "0.15",
    },
    "churn": {
        "window": "4",
        "gap": "1",
        "horizon": "3",
        "delta": "0.001",
        "class_ratio": "1:2",
        "eligible_min_quarters": "4",
    },
    "classifier": {"kind": "forest"},
    "forest": {
        "trees": "100",
        "max_depth": "",
        "features_per_split": "",
        "min_leaf": "1",
    },
    "logistic": {
        "learning_rate": "1.0",
        "max_iter": "5000",
        "tol": "1e-8",
        "l2": "1e-3",
    },
    "eval": {"folds": "10"},
    "synth": {
        "users": "2000",
        "quarters": "12",
        "roles": "7",
        "terms": "28",
        "topic_peak": "0.85",
        "concentration_primary": "8.0",
        "concentration_other": "0.3",
        "edits_mean": "40.0",
        "edits_dispersion": "0.0",
        "hazard_base": "0.15",
        "hazard_slope": "0.0",
        "drift_sigma2": "0.0",
        "join_max_quarter": "0",
        "skip_prob": "0.0",
    },
    "report": {
        "lifespan": "true",
        "topics": "true",
        "metrics": "true",
        "lift": "true",
        "top_terms": "5",
    },
}


class PipelineConfig:
    """Merged defaults + config file, plus the seed override and output dir."""

    def __init__(self, values: dict[str, dict[str, str]], seed: int, out: Path):
        self.values = values
        self.seed = seed
        self.out = out

    @classmethod
    def load(cls, config_path: Path | None, seed_override: int | None,
             out: Path) -> "PipelineConfig":
        values = {section: dict(options) for section, options in DEFAULTS.items()}
        if config_path is not None:
            if not config_path.is_file():
                raise CliError(f"missing input: {config_path}")
            parser = configparser.ConfigParser(interpolation=None)
            try:
                parser.read_string(config_path.read_text(), source=str(config_path))
            except configparser.Error as exc:
                raise CliError(f"config violation: {exc}") from exc
            for section in parser.sections():
                if section not in values:
                    raise CliError(
                        f"config violation: unknown section [{section}] "
                        f"(known: {', '.join(sorted(values))})")
                for key, value in parser.items(section):
                    if key not in values[section]:
                        raise CliError(
                            f"config violation: unknown key {key!r} in "
                            f"[{section}] (known: {', '.join(sorted(values[section]))})")
                    values[section][key] = value
        if seed_override is not None:
            values["global"]["seed"] = str(seed_override)
        try:
            seed = int(values["global"]["seed"])
        except ValueError:
            raise CliError(
                f"config violation: [global] seed must be an integer, "
                f"got {values['global']['seed']!r}")
        if seed < 0:
            raise CliError("config violation: [global] seed must be >= 0")
        return cls(values, seed, out)

    # -- typed accessors ---------------------------------------------------
    def get(self, section: str, key: str) -> str:
        return self.values[section][key]

    def _fail(self, section, key, expected):
        raise CliError(
            f"config violation: [{section}] {key} must be {expected}, "
            f"got {self.values[section][key]!r}")

    def getint(self, section: str, key: str) -> int:
        try:
            return int(self.get(section, key))
        except ValueError:
            self._fail(section, key, "an integer")

    def getfloat(self, section: str, key: str) -> float:
        try:
            return float(self.get(section, key))
        except ValueError:
            self._fail(section, key, "a number")

    def getbool(self, section: str, key: str) -> bool:
        text = self.get(section, key).strip().lower()
        if text in ("true", "yes", "1", "on"):
            return True
        if text in ("false", "no", "0", "off"):
            return False
        self._fail(section, key, "a boolean")

    def getoptint(self, section: str, key: str) -> int | None:
        return None if not self.get(section, key).strip() else self.getint(section, key)

    def getoptfloat(self, section: str, key: str) -> float | None:
        return None if not self.get(section, key).strip() else self.getfloat(section, key)

    def getratio(self, section: str, key: str) -> tuple[int, int]:
        text = self.get(section, key)
        parts = text.split(":")
        try:
            if len(parts) != 2:
                raise ValueError(text)
            return int(parts[0]), int(parts[1])
        except ValueError:
            self._fail(section, key, "a ratio like 1:2")

    def getdate(self, section: str, key: str) -> date:
        try:
            return date.fromisoformat(self.get(section, key))
        except ValueError:
            self._fail(section, key, "an ISO date (YYYY-MM-DD)")

    def config_hash(self) -> str:
        canonical = json.dumps(self.values, sort_keys=True).encode()
        return hashlib.sha256(canonical).hexdigest()

    # -- derived component configs ----------------------------------------
    def dtm_config(self) -> dtm_mod.DtmConfig:
        return dtm_mod.DtmConfig(
            K=self.getint("dtm", "topics"),
            sigma2=self.getfloat("dtm", "sigma2"),
            alpha=self.getoptfloat("dtm", "alpha"),
            eta=self.getfloat("dtm", "eta"),
            gibbs_iterations=self.getint("dtm", "iterations"),
            burn_in=self.getint("dtm", "burn_in"),
            coupling_scale=self.getfloat("dtm", "coupling_scale"),
            coupling_cap=self.getfloat("dtm", "coupling_cap"),
            seed=self.seed,
        )

    def churn_config(self) -> churn_mod.ChurnConfig:
        return churn_mod.ChurnConfig(
            w=self.getint("churn", "window"),
            m=self.getint("churn", "gap"),
            n=self.getint("churn", "horizon"),
            delta=self.getfloat("churn", "delta"),
            class_ratio=self.getratio("churn", "class_ratio"),
        )

    def trainer(self) -> Callable:
        kind = self.get("classifier", "kind").strip().lower()
        if kind == "forest":
            config = classify_mod.ForestConfig(
                n_trees=self.getint("forest", "trees"),
                max_depth=self.getoptint("forest", "max_depth"),
                features_per_split=self.getoptint("forest", "features_per_split"),
                min_leaf=self.getint("forest", "min_leaf"),
                seed=self.seed,
            )
            return lambda dataset: classify_mod.train_random_forest(dataset, config)
        if kind == "logistic":
            config = classify_mod.LogisticConfig(
                learning_rate=self.getfloat("logistic", "learning_rate"),
                max_iter=self.getint("logistic", "max_iter"),
                tol=self.getfloat("logistic", "tol"),
                l2=self.getfloat("logistic", "l2"),
            )
            return lambda dataset: classify_mod.train_logistic(dataset, config)
        raise CliError(
            f"config violation: [classifier] kind must be 'forest' or "
            f"'logistic', got {self.get('classifier', 'kind')!r}")

    def synth_config(self) -> synth_mod.SynthConfig:
        topics = synth_mod.separated_topics(
            self.getint("synth", "roles"),
            self.getint("synth", "terms"),
            peak=self.getfloat("synth", "topic_peak"),
        )
        return synth_mod.SynthConfig(
            topics=topics,
            n_quarters=self.getint("synth", "quarters"),
            n_users=self.getint("synth", "users"),
            concentration_primary=self.getfloat("synth", "concentration_primary"),
            concentration_other=self.getfloat("synth", "concentration_other"),
            edits_mean=self.getfloat("synth", "edits_mean"),
            edits_dispersion=self.getfloat("synth", "edits_dispersion"),
            hazard_base=self.getfloat("synth", "hazard_base"),
            hazard_shift_slope=self.getfloat("synth", "hazard_slope"),
            drift_sigma2=self.getfloat("synth", "drift_sigma2"),
            join_max_quarter=self.getint("synth", "join_max_quarter"),
            skip_prob=self.getfloat("synth", "skip_prob"),
            seed=self.seed,
        )

    # -- path resolution ---------------------------------------------------
    def path_or_default(self, key: str, default_name: str) -> Path:
        configured = self.get("paths", key).strip()
        return Path(configured) if configured else self.out / default_name


def _require_input(path: Path) -> Path:
    if not path.exists():
        raise CliError(f"missing input: {path}")
    return path


def _atomic_write(path: Path, writer: Callable[[Path], None]) -> None:
    """Write through a sibling temp file, then rename into place."""
    tmp = path.with_name(path.name + ".tmp")
    writer(tmp)
    os.replace(tmp, path)


def _atomic_write_dir(path: Path, builder: Callable[[Path], None]) -> None:
    """Build a directory artifact in a temp dir, then swap it into place."""
    tmp = path.with_name(path.name + ".tmp")
    if tmp.exists():
        shutil.rmtree(tmp)
    tmp.mkdir(parents=True)
    builder(tmp)
    if path.exists():
        shutil.rmtree(path)
    os.replace(tmp, path)


def _atomic_write_text(path: Path, text: str) -> None:
    _atomic_write(path, lambda tmp: tmp.write_text(text))


def _update_manifest(cfg: PipelineConfig, stage: str) -> None:
    manifest_path = cfg.out / "manifest.json"
    manifest: dict = {"stages": {}}
    if manifest_path.is_file():
        try:
            loaded = json.loads(manifest_path.read_text())
            if isinstance(loaded, dict) and isinstance(loaded.get("stages"), dict):
                manifest = loaded
        except json.JSONDecodeError:
            logger.warning("rewriting unreadable manifest %s", manifest_path)
    manifest["stages"][stage] = {
        "config_sha256": cfg.config_hash(),
        "seed": cfg.seed,
    }
    _atomic_write_text(
        manifest_path,
        json.dumps(manifest, sort_keys=True, indent=2) + "\n")


def _namespace_map(cfg: PipelineConfig) -> dict[str, int]:
    configured = cfg.get("paths", "namespaces").strip()
    if configured:
        return ingest_mod.load_namespace_map(_require_input(Path(configured)))
    default_file = cfg.out / "namespaces.txt"
    if default_file.is_file():
        return ingest_mod.load_namespace_map(default_file)
    return ingest_mod.default_namespace_map()


def _vocabulary(namespace_map: dict[str, int]) -> tuple[str, ...]:
    by_id = sorted(namespace_map.items(), key=lambda item: item[1])
    return tuple(name for name, _ in by_id)


def _synth_namespace_names(n_terms: int) -> tuple[str, ...]:
    if n_terms == len(ingest_mod.DEFAULT_NAMESPACES):
        return ingest_mod.DEFAULT_NAMESPACES
    return tuple(f"ns{i}" for i in range(n_terms))


# ---------------------------------------------------------------------------
# Stages
# ---------------------------------------------------------------------------

def stage_synth(cfg: PipelineConfig) -> None:
    config = cfg.synth_config()
    events, truth = synth_mod.generate_population(config)
    names = _synth_namespace_names(config.n_terms)
    epoch_dt = datetime.combine(ingest_mod.DEFAULT_EPOCH, time.min,
                                tzinfo=timezone.utc)

    def write_events(tmp: Path) -> None:
        with open(tmp, "w", newline="") as fh:
            for event in events:
                stamp = epoch_dt + timedelta(seconds=event.timestamp)
                fh.write(f"{event.user_id}\t"
                         f"{stamp.strftime('%Y-%m-%dT%H:%M:%SZ')}\t"
                         f"{names[event.namespace_id]}\n")

    _atomic_write(cfg.out / "events.tsv", write_events)
    _atomic_write(cfg.out / "namespaces.txt",
                  lambda tmp: ingest_mod.write_namespace_map(
                      {name: i for i, name in enumerate(names)}, tmp))
    _atomic_write(cfg.out / "ground_truth.json",
                  lambda tmp: synth_mod.save_ground_truth(truth, tmp))
    logger.info("synth: %d events for %d users", len(events), config.n_users)


def stage_ingest(cfg: PipelineConfig) -> None:
    events_path = _require_input(cfg.path_or_default("events", "events.tsv"))
    namespace_map = _namespace_map(cfg)
    epoch = cfg.getdate("ingest", "epoch")
    with open(events_path) as fh:
        events = list(ingest_mod.parse_events(fh, namespace_map, epoch))
    records = ingest_mod.quarterize(events, epoch, len(namespace_map))
    if cfg.getbool("ingest", "drop_last_quarter") and records:
        last = max(r.quarter for r in records)
        records = [r for r in records if r.quarter != last]
    records = ingest_mod.sample_population(
        records,
        cfg.getfloat("ingest", "single_quarter_fraction"),
        seed=cfg.seed,
    )
    _atomic_write(cfg.out / "records.csv",
                  lambda tmp: ingest_mod.write_records_csv(
                      records, tmp, len(namespace_map)))
    _atomic_write(cfg.out / "lifespan.csv",
                  lambda tmp: ingest_mod.write_lifespan_csv(
                      ingest_mod.lifespan_stats(records), tmp))
    logger.info("ingest: %d events -> %d records", len(events), len(records))


def stage_corpus(cfg: PipelineConfig) -> None:
    records_path = _require_input(cfg.out / "records.csv")
    records, n_terms = ingest_mod.read_records_csv(records_path)
    vocabulary = _vocabulary(_namespace_map(cfg))
    if len(vocabulary) != n_terms:
        raise CliError(
            f"config violation: namespace map has {len(vocabulary)} entries "
            f"but {records_path} has {n_terms} count columns")
    corpus = corpus_mod.build_corpus(records, vocabulary)
    stats = corpus_mod.corpus_stats(corpus)

    def build(tmp: Path) -> None:
        corpus_mod.save_corpus(corpus, tmp)
        (tmp / "stats.json").write_text(
            json.dumps(stats.__dict__, sort_keys=True, indent=2) + "\n")

    _atomic_write_dir(cfg.out / "corpus", build)
    logger.info("corpus: %d docs across %d slices", stats.n_documents,
                stats.n_slices)


def stage_fit_dtm(cfg: PipelineConfig) -> None:
    corpus_dir = _require_input(cfg.out / "corpus")
    corpus = corpus_mod.load_corpus(corpus_dir)
    model = dtm_mod.fit_dtm(corpus, cfg.dtm_config())
    _atomic_write_dir(cfg.out / "dtm",
                      lambda tmp: dtm_mod.save_model(model, tmp))
    logger.info("fit-dtm: %d topics over %d slices", model.n_topics,
                model.n_slices)


def stage_profiles(cfg: PipelineConfig) -> None:
    model = dtm_mod.load_model(_require_input(cfg.out / "dtm"))
    corpus = corpus_mod.load_corpus(_require_input(cfg.out / "corpus"))
    if tuple(model.vocabulary) != tuple(corpus.vocabulary):
        raise CliError("config violation: model and corpus vocabularies differ")
    documents = [doc for docs in corpus.slices for doc in docs]
    mixtures = dtm_mod.infer_thetas(model, documents)
    _atomic_write(cfg.out / "theta.csv",
                  lambda tmp: dtm_mod.write_theta_csv(mixtures, tmp))
    logger.info("profiles: %d role mixtures", len(mixtures))


def stage_cluster(cfg: PipelineConfig) -> None:
    mixtures = dtm_mod.read_theta_csv(_require_input(cfg.out / "theta.csv"))
    records, _ = ingest_mod.read_records_csv(_require_input(cfg.out / "records.csv"))
    if not mixtures:
        raise CliError(f"missing input: {cfg.out / 'theta.csv'} has no rows")
    n_roles = mixtures[0].theta.shape[0]
    n_quarters = max(max(m.quarter for m in mixtures),
                     max((r.quarter for r in records), default=0)) + 1
    matrix = nmf_mod.build_profile_matrix(
        mixtures, n_quarters, n_roles,
        eligible_min_quarters=cfg.getint("nmf", "eligible_min_quarters"))
    model = nmf_mod.fit_nmf(
        matrix.values,
        cfg.getint("nmf", "clusters"),
        max_iter=cfg.getint("nmf", "max_iter"),
        tol=cfg.getfloat("nmf", "tol"))
    assignment = nmf_mod.discretize(model.W, matrix.user_ids)
    reports = nmf_mod.cluster_summary(
        assignment, records, mixtures,
        dominant_role_threshold=cfg.getfloat("nmf", "dominant_role_threshold"))

    _atomic_write(cfg.out / "profiles.csv",
                  lambda tmp: nmf_mod.write_profile_csv(matrix, tmp))
    _atomic_write_dir(cfg.out / "nmf",
                      lambda tmp: nmf_mod.write_factors(model, tmp))

    def write_clusters(tmp: Path) -> None:
        with open(tmp, "w", newline="") as fh:
            writer = csv.writer(fh, lineterminator="\n")
            writer.writerow(["user", "cluster"])
            for user_id, label in assignment.labels:
                writer.writerow([user_id, label])

    _atomic_write(cfg.out / "clusters.csv", write_clusters)
    _atomic_write(cfg.out / "cluster_report.csv",
                  lambda tmp: nmf_mod.write_cluster_report_csv(reports, tmp))
    _atomic_write(cfg.out / "cluster_report.json",
                  lambda tmp: nmf_mod.write_cluster_report_json(reports, tmp))
    logger.info("cluster: %d users into %d clusters", assignment.n_users,
                assignment.n_clusters)


def stage_dataset(cfg: PipelineConfig) -> None:
    records, _ = ingest_mod.read_records_csv(_require_input(cfg.out / "records.csv"))
    mixtures = dtm_mod.read_theta_csv(_require_input(cfg.out / "theta.csv"))
    n_quarters = max(max((m.quarter for m in mixtures), default=0),
                     max((r.quarter for r in records), default=0)) + 1
    dataset = churn_mod.build_dataset(
        records, mixtures, cfg.churn_config(), seed=cfg.seed,
        n_quarters=n_quarters,
        eligible_min_quarters=cfg.getint("churn", "eligible_min_quarters"))

    def build(tmp: Path) -> None:
        churn_mod.write_dataset_csv(dataset, tmp / "dataset.csv")

    scratch = cfg.out / "dataset.csv.tmpdir"
    if scratch.exists():
        shutil.rmtree(scratch)
    scratch.mkdir(parents=True)
    try:
        build(scratch)
        os.replace(scratch / "dataset.features.json",
                   cfg.out / "dataset.features.json")
        os.replace(scratch / "dataset.csv", cfg.out / "dataset.csv")
    finally:
        shutil.rmtree(scratch, ignore_errors=True)
    logger.info("dataset: %d examples (%d churners)", dataset.n_examples,
                int(dataset.y.sum()))


def stage_train(cfg: PipelineConfig) -> None:
    dataset = churn_mod.read_dataset_csv(_require_input(cfg.out / "dataset.csv"))
    model = cfg.trainer()(dataset)
    _atomic_write(cfg.out / "model.json",
                  lambda tmp: classify_mod.save_model(model, tmp))
    logger.info("train: %s model on %d examples", model.kind, dataset.n_examples)


def stage_eval(cfg: PipelineConfig) -> None:
    dataset = churn_mod.read_dataset_csv(_require_input(cfg.out / "dataset.csv"))
    trainer = cfg.trainer()
    folds = cfg.getint("eval", "folds")
    result = classify_mod.cross_validate(dataset, trainer, folds=folds,
                                         seed=cfg.seed)
    _atomic_write(cfg.out / "eval.json",
                  lambda tmp: evaluate_mod.write_report_json(result.averaged, tmp))
    _atomic_write(cfg.out / "lift.csv",
                  lambda tmp: evaluate_mod.write_lift_csv(
                      result.averaged.lift_points, tmp))

    series = []
    for window in sorted(set(dataset.window_ids)):
        indices = [i for i, w in enumerate(dataset.window_ids) if w == window]
        subset = classify_mod.dataset_subset(dataset, indices)
        if subset.n_examples < folds or len(set(subset.y.tolist())) < 2:
            logger.warning("window %d skipped in series: %d examples",
                           window, subset.n_examples)
            continue
        window_result = classify_mod.cross_validate(subset, trainer,
                                                    folds=folds, seed=cfg.seed)
        series.append((window, window_result.averaged))
    _atomic_write(cfg.out / "windows.csv",
                  lambda tmp: evaluate_mod.write_window_series_csv(series, tmp))
    logger.info("eval: averaged AUC %s over %d folds",
                result.averaged.roc_auc, folds)


def stage_ablate(cfg: PipelineConfig) -> None:
    dataset = churn_mod.read_dataset_csv(_require_input(cfg.out / "dataset.csv"))
    n_extra = dataset.n_features - len(churn_mod.feature_names(1)) + 3
    if n_extra % 3 != 0 or n_extra < 3:
        raise CliError(
            f"config violation: dataset has {dataset.n_features} feature "
            f"columns, which does not fit the scalar + 3-block layout")
    groups = churn_mod.feature_groups(n_extra // 3)
    result = evaluate_mod.ablate(dataset, groups, cfg.trainer(),
                                 folds=cfg.getint("eval", "folds"),
                                 seed=cfg.seed)
    _atomic_write(cfg.out / "ablation.csv",
                  lambda tmp: evaluate_mod.write_ablation_csv(result, tmp))
    logger.info("ablate: %d groups", len(result.group_names))


def _read_lifespan_csv(path: Path) -> ingest_mod.LifespanHistogram:
    buckets = []
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if not header or header[:2] != ["active_quarters", "user_count"]:
            raise CliError(f"missing input: {path} lacks a lifespan header")
        for row in reader:
            if row:
                buckets.append((int(row[0]), int(row[1])))
    return ingest_mod.LifespanHistogram(tuple(sorted(buckets)))


def _read_window_series(path: Path) -> list[tuple[int, dict[str, float | None]]]:
    series = []
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if not header or header[0] != "window":
            raise CliError(f"missing input: {path} lacks a window-series header")
        metrics = header[1:]
        for row in reader:
            if not row:
                continue
            values = {name: (float(cell) if cell else None)
                      for name, cell in zip(metrics, row[1:])}
            series.append((int(row[0]), values))
    return series


def _read_lift_csv(path: Path) -> list[tuple[float, float]]:
    points = []
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if not header or header[:2] != ["fraction", "lift"]:
            raise CliError(f"missing input: {path} lacks a lift header")
        for row in reader:
            if row:
                points.append((float(row[0]), float(row[1])))
    return points


def stage_report(cfg: PipelineConfig) -> None:
    figures = cfg.out / "figures"
    outputs: list[tuple[str, str]] = []
    if cfg.getbool("report", "lifespan"):
        histogram = _read_lifespan_csv(_require_input(cfg.out / "lifespan.csv"))
        outputs.append(("lifespan.svg",
                        plots_mod.lifespan_histogram_svg(histogram)))
    if cfg.getbool("report", "topics"):
        model = dtm_mod.load_model(_require_input(cfg.out / "dtm"))
        for k in range(model.n_topics):
            track = dtm_mod.topic_track(model, k)
            outputs.append(
                (f"role_{k}.svg",
                 plots_mod.topic_evolution_svg(
                     track, model.vocabulary, k,
                     top_n=cfg.getint("report", "top_terms"))))
    if cfg.getbool("report", "metrics"):
        series = _read_window_series(_require_input(cfg.out / "windows.csv"))
        outputs.append(("metrics.svg", plots_mod.metric_series_svg(series)))
    if cfg.getbool("report", "lift"):
        points = _read_lift_csv(_require_input(cfg.out / "lift.csv"))
        outputs.append(("lift.svg", plots_mod.lift_chart_svg(points)))

    def build(tmp: Path) -> None:
        for name, content in outputs:
            (tmp / name).write_text(content)

    _atomic_write_dir(figures, build)
    logger.info("report: %d figures", len(outputs))


_STAGES: dict[str, tuple[Callable[[PipelineConfig], None], str]] = {
    "synth": (stage_synth, "generate a planted-role population as TSV events"),
    "ingest": (stage_ingest, "parse events into quarterly activity records"),
    "corpus": (stage_corpus, "build the time-sliced corpus from records"),
    "fit-dtm": (stage_fit_dtm, "fit the chained-prior topic model"),
    "profiles": (stage_profiles, "infer per-document role mixtures"),
    "cluster": (stage_cluster, "factor role trajectories into user clusters"),
    "dataset": (stage_dataset, "build labeled sliding-window churn examples"),
    "train": (stage_train, "train the configured churn classifier"),
    "eval": (stage_eval, "cross-validate and write metric reports"),
    "ablate": (stage_ablate, "measure per-feature-group metric drops"),
    "report": (stage_report, "render SVG figures from pipeline outputs"),
}


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="rolespace",
        description="Contributor-role and churn-modeling pipeline.")
    subparsers = parser.add_subparsers(dest="command", metavar="subcommand")
    for name, (_, help_text) in _STAGES.items():
        sub = subparsers.add_parser(name, help=help_text)
        sub.add_argument("--config", type=Path, default=None,
                         help="INI config file (defaults apply when omitted)")
        sub.add_argument("--seed", type=int, default=None,
                         help="override [global] seed")
        sub.add_argument("--out", type=Path, default=None,
                         help="artifact directory (or set ROLESPACE_OUT)")
    return parser


def main(argv: list[str] | None = None) -> int:
    logging.basicConfig(level=logging.INFO,
                        format="%(levelname)s %(name)s: %(message)s")
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return exc.code if isinstance(exc.code, int) else 2
    if args.command is None:
        parser.print_usage(sys.stderr)
        return 2
    out = args.out or (Path(os.environ["ROLESPACE_OUT"])
                       if "ROLESPACE_OUT" in os.environ else None)
    if out is None:
        print("error: --out is required (or set ROLESPACE_OUT)", file=sys.stderr)
        return 2
    try:
        out.mkdir(parents=True, exist_ok=True)
        cfg = PipelineConfig.load(args.config, args.seed, out)
        _STAGES[args.command][0](cfg)
        _update_manifest(cfg, args.command)
    except CliError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except (ValueError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())

"""Command-line pipeline driver.

One JSON config file describes a full run (paths, labeling, features,
model, training, loss, eval settings); every command is deterministic
given the config and its seeds. Unknown config keys are rejected.
Commands: ingest, label, train, eval, ablate, export.
"""

from __future__ import annotations

import argparse
import dataclasses
import json
import logging
import os
import sys
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import baselines, evaluation, labeling, training
from .errors import ConfigError, TrustGnnError, ValidationError
from .features import SvdConfig, assemble_features, export_features
from .graph import IngestConfig, load_edge_list
from .labeling import FRAUD, SeedConfig, export_labels, label_report, load_labels
from .model import ModelConfig, forward, load_checkpoint, save_checkpoint
from .training import LossConfig, TrainConfig, make_splits

logger = logging.getLogger("trustgnn")

DATA_DIR_ENV = "TRUSTGNN_DATA_DIR"

GRAPH_FILE = "graph.csv"
AUDIT_FILE = "ingest_audit.json"
LABELS_FILE = "labels.csv"
LABEL_REPORT_FILE = "label_report.json"
CHECKPOINT_FILE = "checkpoint.json"
TRAINLOG_FILE = "trainlog_seed{seed}.jsonl"
TRAIN_SUMMARY_FILE = "train_summary.json"
EVAL_JSON = "eval_report.json"
EVAL_TXT = "eval_report.txt"
ABLATION_JSON = "ablation.json"
ABLATION_TXT = "ablation.txt"
EMBEDDINGS_FILE = "embeddings.csv"
PROJECTION_FILE = "projection.csv"
FEATURES_FILE = "features.csv"


@dataclass(frozen=True)
class PathsConfig:
    data_csv: str = "data/soc-sign-bitcoinalpha.csv"
    work_dir: str = "runs/default"


@dataclass(frozen=True)
class LabelingConfig:
    fraud_wins: bool = False


@dataclass(frozen=True)
class EvalConfig:
    threshold: float = 0.5
    lowest_pct: float = 0.05


@dataclass(frozen=True)
class RunConfig:
    paths: PathsConfig = field(default_factory=PathsConfig)
    ingest: IngestConfig = field(default_factory=IngestConfig)
    seeds: SeedConfig = field(default_factory=SeedConfig)
    labeling: LabelingConfig = field(default_factory=LabelingConfig)
    svd: SvdConfig = field(default_factory=SvdConfig)
    model: ModelConfig = field(default_factory=ModelConfig)
    train: TrainConfig = field(default_factory=TrainConfig)
    loss: LossConfig = field(default_factory=LossConfig)
    eval: EvalConfig = field(default_factory=EvalConfig)

    def data_path(self) -> Path:
        p = Path(self.paths.data_csv)
        env = os.environ.get(DATA_DIR_ENV)
        if env and not p.is_absolute():
            return Path(env) / p
        return p

    def work_dir(self) -> Path:
        return Path(self.paths.work_dir)


_SECTION_TYPES = {f.name: f.type for f in dataclasses.fields(RunConfig)}
_SECTION_CLASSES = {
    "paths": PathsConfig, "ingest": IngestConfig, "seeds": SeedConfig,
    "labeling": LabelingConfig, "svd": SvdConfig, "model": ModelConfig,
    "train": TrainConfig, "loss": LossConfig, "eval": EvalConfig,
}


def _build_section(cls, doc: dict, path: str):
    names = {f.name: f for f in dataclasses.fields(cls)}
    unknown = set(doc) - set(names)
    if unknown:
        raise ConfigError(f"unknown config key(s) {sorted(unknown)} under '{path}'")
    kwargs = {}
    for key, value in doc.items():
        f = names[key]
        if f.type in ("tuple", tuple) or isinstance(f.default, tuple):
            value = tuple(value)
        kwargs[key] = value
    try:
        return cls(**kwargs)
    except TypeError as exc:
        raise ConfigError(f"bad value under '{path}': {exc}") from None


def parse_run_config(doc: dict) -> RunConfig:
    """Strict parse: every section and key must be known."""
    if not isinstance(doc, dict):
        raise ConfigError("config root must be an object")
    unknown = set(doc) - set(_SECTION_CLASSES)
    if unknown:
        raise ConfigError(f"unknown config section(s) {sorted(unknown)}")
    sections = {}
    for name, cls in _SECTION_CLASSES.items():
        sections[name] = _build_section(cls, doc.get(name, {}), name)
    return RunConfig(**sections)


def load_run_config(path, overrides=()) -> RunConfig:
    try:
        with open(path, "r", encoding="utf-8") as fh:
            doc = json.load(fh)
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{path}: not valid JSON ({exc})") from None
    for item in overrides:
        if "=" not in item:
            raise ConfigError(f"override {item!r} must look like section.key=value")
        dotted, raw = item.split("=", 1)
        parts = dotted.split(".")
        if len(parts) != 2:
            raise ConfigError(f"override key {dotted!r} must be section.key")
        try:
            value = json.loads(raw)
        except json.JSONDecodeError:
            value = raw
        doc.setdefault(parts[0], {})[parts[1]] = value
    return parse_run_config(doc)


def _dump_json(path, payload):
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(payload, fh, indent=2, sort_keys=True)
        fh.write("\n")


def _require(path: Path, hint: str) -> Path:
    if not path.exists():
        raise ValidationError(f"{path} not found; {hint}")
    return path


# ------------------------------------------------------------------ steps

def _load_cached_graph(cfg: RunConfig):
    path = _require(cfg.work_dir() / GRAPH_FILE, "run `trustgnn ingest` first")
    return load_edge_list(path, cfg.ingest)


def _load_labelset(cfg: RunConfig, graph):
    path = _require(cfg.work_dir() / LABELS_FILE, "run `trustgnn label` first")
    return load_labels(path, graph.num_nodes)


def _features_for(cfg: RunConfig, graph):
    return assemble_features(graph, cfg.svd)


def cmd_ingest(data, out, rating_scale=10):
    out = Path(out)
    out.mkdir(parents=True, exist_ok=True)
    g = load_edge_list(_require(Path(data), "missing input CSV"),
                       IngestConfig(rating_scale=rating_scale))
    g.dump_csv(out / GRAPH_FILE)
    audit = g.audit()
    _dump_json(out / AUDIT_FILE, audit)
    print(f"nodes={audit['num_nodes']} edges={audit['num_edges']} "
          f"positive={audit['num_positive']} negative={audit['num_negative']} "
          f"self_loops_dropped={audit['self_loops_dropped']} "
          f"duplicates_collapsed={audit['duplicates_collapsed']}")
    return 0


def cmd_label(cfg: RunConfig):
    g = _load_cached_graph(cfg)
    scores = labeling.pagerank_positive(g, cfg.seeds)
    seeds = labeling.select_seeds(scores, cfg.seeds)
    ls = labeling.propagate_labels(g, seeds, fraud_wins=cfg.labeling.fraud_wins)
    export_labels(ls, cfg.work_dir() / LABELS_FILE)
    rep = label_report(ls)
    _dump_json(cfg.work_dir() / LABEL_REPORT_FILE, {
        "seeds": seeds, "num_benign": rep.num_benign, "num_fraud": rep.num_fraud,
        "num_unlabeled": rep.num_unlabeled, "fraud_ratio": rep.fraud_ratio,
        "max_depth": rep.max_depth})
    print(f"seeds={seeds}")
    print(str(rep))
    return 0


def cmd_train(cfg: RunConfig, export_feats=False):
    g = _load_cached_graph(cfg)
    ls = _load_labelset(cfg, g)
    feats = _features_for(cfg, g)
    if export_feats:
        export_features(feats, cfg.work_dir() / FEATURES_FILE)
    split = make_splits(ls, cfg.train)
    best = None
    summary = {"split_checksum": split.checksum(), "seeds": {}}
    for seed in cfg.train.model_seeds:
        params, log, rep = evaluation.train_and_score(
            g, feats, ls, cfg.model, cfg.train, cfg.loss, split, seed)
        mc = dataclasses.replace(cfg.model, seed=seed)
        save_checkpoint(cfg.work_dir() / f"checkpoint_seed{seed}.json", mc, params)
        log.to_jsonl(cfg.work_dir() / TRAINLOG_FILE.format(seed=seed))
        summary["seeds"][str(seed)] = {
            "best_epoch": log.best_epoch, "best_val_auc": log.best_val_auc,
            "epochs_run": log.records[-1].epoch, "test_auc": rep.auc_roc,
            "test_macro_f1": rep.macro_f1}
        print(f"seed={seed} best_epoch={log.best_epoch} "
              f"val_auc={log.best_val_auc:.4f} test_auc={rep.auc_roc:.4f}")
        if best is None or log.best_val_auc > best[0]:
            best = (log.best_val_auc, seed, params, mc)
    summary["best_seed"] = best[1]
    save_checkpoint(cfg.work_dir() / CHECKPOINT_FILE, best[3], best[2])
    _dump_json(cfg.work_dir() / TRAIN_SUMMARY_FILE, summary)
    print(f"best seed={best[1]} checkpoint={cfg.work_dir() / CHECKPOINT_FILE}")
    return 0


def cmd_eval(cfg: RunConfig, checkpoint):
    g = _load_cached_graph(cfg)
    ls = _load_labelset(cfg, g)
    feats = _features_for(cfg, g)
    split = make_splits(ls, cfg.train)
    test_ids = split.test_ids
    y = (ls.labels[test_ids] == FRAUD).astype(int)
    thr = cfg.eval.threshold

    mc, params = load_checkpoint(_require(Path(checkpoint), "train a model first"))
    trace = forward(params, mc, g, feats, mode="eval")
    reports = [evaluation.evaluate_scores("dual_channel_attention",
                                          trace.y_hat[test_ids], y, threshold=thr)]

    low = baselines.lowest_pct_heuristic(g, cfg.eval.lowest_pct)
    reports.append(evaluation.evaluate_scores(
        "lowest_5pct", low.scores[test_ids], y, preds=low.flags[test_ids]))
    br = baselines.badrank(g)
    br_flags = (br.scores >= np.quantile(br.scores, 1.0 - cfg.eval.lowest_pct)).astype(int)
    reports.append(evaluation.evaluate_scores(
        "badrank", br.scores[test_ids], y, preds=br_flags[test_ids]))

    gcn_reports = []
    for seed in cfg.train.model_seeds:
        _, _, bs = baselines.unsigned_gcn(g, feats, ls, cfg.model, cfg.train,
                                          cfg.loss, split, seed=seed)
        gcn_reports.append(evaluation.evaluate_scores(
            "gcn_unsigned", bs.scores[test_ids], y, threshold=thr))
    reports.append(evaluation.aggregate_reports("gcn_unsigned", gcn_reports))

    table = evaluation.render_comparison_table(reports)
    (cfg.work_dir() / EVAL_TXT).write_text(table + "\n", encoding="utf-8")
    _dump_json(cfg.work_dir() / EVAL_JSON,
               {"split_checksum": split.checksum(),
                "reports": [r.as_dict() for r in reports]})
    print(table)
    return 0


def cmd_ablate(cfg: RunConfig):
    g = _load_cached_graph(cfg)
    ls = _load_labelset(cfg, g)
    feats = _features_for(cfg, g)
    results = evaluation.run_ablation_suite(g, feats, ls, cfg.model, cfg.train, cfg.loss)
    table = evaluation.render_ablation_table(results)
    (cfg.work_dir() / ABLATION_TXT).write_text(table + "\n", encoding="utf-8")
    _dump_json(cfg.work_dir() / ABLATION_JSON, [
        {"kind": r.kind, "report": r.report.as_dict(), "drop_auc_pct": r.drop_auc_pct,
         "drop_f1_pct": r.drop_f1_pct, "split_checksums": r.split_checksums}
        for r in results])
    print(table)
    return 0


def cmd_export(cfg: RunConfig, checkpoint):
    g = _load_cached_graph(cfg)
    ls = _load_labelset(cfg, g)
    feats = _features_for(cfg, g)
    mc, params = load_checkpoint(_require(Path(checkpoint), "train a model first"))
    stats = evaluation.export_embeddings(params, mc, g, feats, ls,
                                         cfg.work_dir() / EMBEDDINGS_FILE,
                                         cfg.work_dir() / PROJECTION_FILE)
    print(f"inter_centroid={stats.inter_centroid:.4f} "
          f"mean_intra={stats.mean_intra:.4f} separated={stats.separated}")
    return 0


# ------------------------------------------------------------------- main

def build_parser():
    p = argparse.ArgumentParser(
        prog="trustgnn",
        description="Fraud detection pipeline for signed web-of-trust rating graphs")
    sub = p.add_subparsers(dest="command", required=True)

    pi = sub.add_parser("ingest", help="load, clean and audit a rating CSV")
    pi.add_argument("--data", required=True, help="SOURCE,TARGET,RATING,TIME csv")
    pi.add_argument("--out", required=True, help="directory for the cached graph")
    pi.add_argument("--rating-scale", type=int, default=10)

    for name, needs_ckpt, helptext in (
            ("label", False, "PageRank seeding + recursive trust propagation"),
            ("train", False, "features + multi-seed training + checkpoints"),
            ("eval", True, "test-split metrics and baseline comparison table"),
            ("ablate", False, "component-removal study across seeds"),
            ("export", True, "embedding CSV + 2-D projection"),
    ):
        ps = sub.add_parser(name, help=helptext)
        ps.add_argument("--config", required=True, help="run config JSON")
        ps.add_argument("--set", dest="overrides", action="append", default=[],
                        metavar="SECTION.KEY=VALUE", help="override a config key")
        if needs_ckpt:
            ps.add_argument("--checkpoint", required=True)
        if name == "train":
            ps.add_argument("--export-features", action="store_true")
    return p


def main(argv=None) -> int:
    logging.basicConfig(level=logging.INFO, format="%(levelname)s %(message)s")
    args = build_parser().parse_args(argv)
    try:
        if args.command == "ingest":
            return cmd_ingest(args.data, args.out, args.rating_scale)
        cfg = load_run_config(args.config, args.overrides)
        cfg.work_dir().mkdir(parents=True, exist_ok=True)
        if args.command == "label":
            return cmd_label(cfg)
        if args.command == "train":
            return cmd_train(cfg, export_feats=args.export_features)
        if args.command == "eval":
            return cmd_eval(cfg, args.checkpoint)
        if args.command == "ablate":
            return cmd_ablate(cfg)
        if args.command == "export":
            return cmd_export(cfg, args.checkpoint)
        raise ConfigError(f"unknown command {args.command!r}")
    except TrustGnnError as exc:
        print(f"error:{exc.category}: {exc}", file=sys.stderr)
        return 1
    except FileNotFoundError as exc:
        print(f"error:io: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())

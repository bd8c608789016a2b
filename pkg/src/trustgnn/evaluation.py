"""Metrics, multi-seed evaluation reports, the ablation harness, and
embedding export with a 2-D principal-component projection."""

from __future__ import annotations

from dataclasses import dataclass, field, replace

import numpy as np

from .errors import ValidationError
from .features import FeatureMatrix, random_features
from .graph import SignedGraph
from .labeling import BENIGN, FRAUD, LabelSet
from .model import ABLATION_KINDS, ModelConfig, ablation_variant, forward
from .training import LossConfig, SplitAssignment, TrainConfig, make_splits, train

# Published reference results on the Bitcoin-Alpha web-of-trust benchmark
# (AUC-ROC, Macro-F1). Rows for systems not implemented here are rendered
# for context only and marked as published numbers in every report.
PUBLISHED_BENCHMARKS = {
    "lowest_5pct": (0.527, 0.503),
    "badrank": (0.578, 0.555),
    "gcn_unsigned": (0.676, 0.630),
    "gat_unsigned": (0.742, 0.682),
    "sgcn": (0.846, 0.669),
    "sigat": (0.896, 0.696),
    "snea": (0.838, 0.719),
    "dual_channel_attention": (0.927, 0.747),
}
EXTERNAL_ONLY = ("gat_unsigned", "sgcn", "sigat", "snea")


def auc_roc(scores, labels) -> float:
    """Area under the ROC curve, Mann-Whitney formulation.

    Equals (#concordant pairs + 0.5 #tied pairs) / (n_pos * n_neg),
    computed via average ranks so ties are handled exactly.
    """
    scores = np.asarray(scores, dtype=np.float64)
    labels = np.asarray(labels)
    n_pos = int((labels == 1).sum())
    n_neg = int((labels == 0).sum())
    if n_pos == 0 or n_neg == 0:
        raise ValidationError("AUC needs both classes present")
    order = np.argsort(scores, kind="stable")
    ranks = np.empty(len(scores), dtype=np.float64)
    sorted_scores = scores[order]
    i = 0
    while i < len(scores):
        j = i
        while j + 1 < len(scores) and sorted_scores[j + 1] == sorted_scores[i]:
            j += 1
        ranks[order[i:j + 1]] = 0.5 * (i + j) + 1.0  # average rank, 1-based
        i = j + 1
    rank_sum_pos = ranks[labels == 1].sum()
    return float((rank_sum_pos - n_pos * (n_pos + 1) / 2.0) / (n_pos * n_neg))


def confusion_matrix(preds, labels) -> np.ndarray:
    """2x2 counts [[tn, fp], [fn, tp]] for classes {0, 1}."""
    preds = np.asarray(preds).astype(int)
    labels = np.asarray(labels).astype(int)
    cm = np.zeros((2, 2), dtype=np.int64)
    for t in (0, 1):
        for p in (0, 1):
            cm[t, p] = int(np.sum((labels == t) & (preds == p)))
    return cm


def _prf(cm, cls):
    tp = cm[cls, cls]
    fp = cm[1 - cls, cls]
    fn = cm[cls, 1 - cls]
    prec = tp / (tp + fp) if tp + fp else 0.0
    rec = tp / (tp + fn) if tp + fn else 0.0
    f1 = 2 * prec * rec / (prec + rec) if prec + rec else 0.0
    return prec, rec, f1


def macro_f1(preds, labels) -> float:
    """Unweighted mean of the per-class F1 scores for classes {0, 1}."""
    cm = confusion_matrix(preds, labels)
    return 0.5 * (_prf(cm, 0)[2] + _prf(cm, 1)[2])


@dataclass
class EvalReport:
    method: str
    split: str
    auc_roc: float
    macro_f1: float
    precision: dict = field(default_factory=dict)
    recall: dict = field(default_factory=dict)
    confusion: list = field(default_factory=list)
    n_seeds: int = 1
    auc_mean: float = 0.0
    auc_std: float = 0.0
    f1_mean: float = 0.0
    f1_std: float = 0.0

    def as_dict(self):
        return {"method": self.method, "split": self.split, "auc_roc": self.auc_roc,
                "macro_f1": self.macro_f1, "precision": self.precision,
                "recall": self.recall, "confusion": self.confusion,
                "n_seeds": self.n_seeds, "auc_mean": self.auc_mean,
                "auc_std": self.auc_std, "f1_mean": self.f1_mean, "f1_std": self.f1_std}


def evaluate_scores(method: str, scores, labels01, split_name: str = "test",
                    threshold: float = 0.5, preds=None) -> EvalReport:
    """Report from anomaly scores; ``preds`` overrides the score threshold
    for detectors whose decision rule is not a plain cut at 0.5."""
    scores = np.asarray(scores, dtype=np.float64)
    labels01 = np.asarray(labels01).astype(int)
    auc = auc_roc(scores, labels01)
    preds = (scores >= threshold).astype(int) if preds is None else np.asarray(preds).astype(int)
    cm = confusion_matrix(preds, labels01)
    p0, r0, _ = _prf(cm, 0)
    p1, r1, _ = _prf(cm, 1)
    f1 = macro_f1(preds, labels01)
    return EvalReport(method=method, split=split_name, auc_roc=auc, macro_f1=f1,
                      precision={"benign": p0, "fraud": p1},
                      recall={"benign": r0, "fraud": r1},
                      confusion=cm.tolist(),
                      auc_mean=auc, f1_mean=f1)


def aggregate_reports(method: str, reports: list[EvalReport]) -> EvalReport:
    """Median-carrying aggregate with mean/std across seeds."""
    aucs = np.array([r.auc_roc for r in reports])
    f1s = np.array([r.macro_f1 for r in reports])
    mid = int(np.argsort(aucs, kind="stable")[len(aucs) // 2])
    agg = replace(reports[mid])
    agg.method = method
    agg.auc_roc = float(np.median(aucs))
    agg.macro_f1 = float(np.median(f1s))
    agg.n_seeds = len(reports)
    agg.auc_mean, agg.auc_std = float(aucs.mean()), float(aucs.std())
    agg.f1_mean, agg.f1_std = float(f1s.mean()), float(f1s.std())
    return agg


def train_and_score(graph: SignedGraph, feats, labels: LabelSet, model_cfg: ModelConfig,
                    train_cfg: TrainConfig, loss_cfg: LossConfig,
                    split: SplitAssignment, seed: int):
    """One training run at a given model seed; returns (params, log, test report)."""
    cfg = replace(model_cfg, seed=seed)
    X = feats.data if isinstance(feats, FeatureMatrix) else np.asarray(feats)
    if cfg.random_features:
        X = random_features(graph.num_nodes, X.shape[1], seed=seed + 7919).data
    params, log = train(graph, X, labels, cfg, train_cfg, loss_cfg, split=split)
    trace = forward(params, cfg, graph, X, mode="eval")
    test_ids = split.test_ids
    y = (labels.labels[test_ids] == FRAUD).astype(int)
    report = evaluate_scores("model", trace.y_hat[test_ids], y)
    return params, log, report


@dataclass
class AblationResult:
    kind: str
    report: EvalReport
    drop_auc_pct: float = 0.0
    drop_f1_pct: float = 0.0
    split_checksums: list = field(default_factory=list)


def run_ablation_suite(graph: SignedGraph, feats, labels: LabelSet,
                       model_cfg: ModelConfig, train_cfg: TrainConfig,
                       loss_cfg: LossConfig, seeds=None,
                       kinds=ABLATION_KINDS) -> list[AblationResult]:
    """Train every variant on identical splits per seed; report drops vs full."""
    seeds = list(seeds if seeds is not None else train_cfg.model_seeds)
    if not seeds:
        raise ValidationError("need at least one seed")
    split = make_splits(labels, train_cfg)
    results = []
    for kind in kinds:
        cfg = ablation_variant(model_cfg, kind)
        reports = []
        for seed in seeds:
            _, log, rep = train_and_score(graph, feats, labels, cfg, train_cfg,
                                          loss_cfg, split, seed)
            reports.append(rep)
        agg = aggregate_reports(kind, reports)
        results.append(AblationResult(kind=kind, report=agg,
                                      split_checksums=[split.checksum()] * len(seeds)))
    full = next(r for r in results if r.kind == "full")
    for r in results:
        if full.report.auc_roc > 0:
            r.drop_auc_pct = 100.0 * (full.report.auc_roc - r.report.auc_roc) / full.report.auc_roc
        if full.report.macro_f1 > 0:
            r.drop_f1_pct = 100.0 * (full.report.macro_f1 - r.report.macro_f1) / full.report.macro_f1
    return results


def pca_2d(z: np.ndarray) -> np.ndarray:
    """Top-2 principal components of the centered rows (deterministic signs)."""
    zc = z - z.mean(axis=0, keepdims=True)
    cov = zc.T @ zc / max(len(zc), 1)
    evals, evecs = np.linalg.eigh(cov)
    comps = evecs[:, np.argsort(evals)[::-1][:2]]
    if comps.shape[1] < 2:
        comps = np.pad(comps, ((0, 0), (0, 2 - comps.shape[1])))
    for j in range(comps.shape[1]):
        i = int(np.argmax(np.abs(comps[:, j])))
        if comps[i, j] < 0:
            comps[:, j] = -comps[:, j]
    return zc @ comps


@dataclass
class SeparationStats:
    inter_centroid: float
    mean_intra: float

    @property
    def separated(self) -> bool:
        return self.inter_centroid > self.mean_intra


def class_separation(z: np.ndarray, labels: LabelSet) -> SeparationStats:
    """Distance between class centroids vs mean distance to own centroid."""
    zb = z[labels.ids_with(BENIGN)]
    zf = z[labels.ids_with(FRAUD)]
    if len(zb) == 0 or len(zf) == 0:
        raise ValidationError("need both classes for separation statistics")
    cb, cf = zb.mean(axis=0), zf.mean(axis=0)
    intra = np.concatenate([np.linalg.norm(zb - cb, axis=1),
                            np.linalg.norm(zf - cf, axis=1)])
    return SeparationStats(inter_centroid=float(np.linalg.norm(cb - cf)),
                           mean_intra=float(intra.mean()))


def export_embeddings(params, cfg: ModelConfig, graph: SignedGraph, feats,
                      labels: LabelSet, emb_path, proj_path) -> SeparationStats:
    """Write per-node embeddings and their 2-D projection as CSV files."""
    from .labeling import LABEL_NAMES

    trace = forward(params, cfg, graph, feats, mode="eval")
    z = trace.z_pre
    with open(emb_path, "w", encoding="utf-8") as fh:
        cols = ",".join(f"z_{j}" for j in range(z.shape[1]))
        fh.write(f"node_id,{cols},label\n")
        for i in range(graph.num_nodes):
            vals = ",".join(f"{v:.10g}" for v in z[i])
            fh.write(f"{i},{vals},{LABEL_NAMES[int(labels.labels[i])]}\n")
    proj = pca_2d(z)
    with open(proj_path, "w", encoding="utf-8") as fh:
        fh.write("node_id,pc1,pc2,label\n")
        for i in range(graph.num_nodes):
            fh.write(f"{i},{proj[i, 0]:.10g},{proj[i, 1]:.10g},"
                     f"{LABEL_NAMES[int(labels.labels[i])]}\n")
    return class_separation(z, labels)


def render_comparison_table(reports: list[EvalReport], include_published: bool = True) -> str:
    """Aligned text table; published numbers sit in separate marked columns."""
    rows = []
    header = f"{'method':<26} {'AUC-ROC':>8} {'Macro-F1':>9} {'seeds':>5} {'pub.AUC':>8} {'pub.F1':>7}"
    rows.append(header)
    rows.append("-" * len(header))
    for r in reports:
        pub = PUBLISHED_BENCHMARKS.get(r.method)
        pa = f"{pub[0]:.3f}" if pub else "-"
        pf = f"{pub[1]:.3f}" if pub else "-"
        rows.append(f"{r.method:<26} {r.auc_roc:>8.3f} {r.macro_f1:>9.3f} "
                    f"{r.n_seeds:>5d} {pa:>8} {pf:>7}")
    if include_published:
        for name in EXTERNAL_ONLY:
            pub = PUBLISHED_BENCHMARKS[name]
            rows.append(f"{name + ' [published]':<26} {'-':>8} {'-':>9} {'-':>5} "
                        f"{pub[0]:>8.3f} {pub[1]:>7.3f}")
        rows.append("pub.* columns are published reference numbers, not outputs of this run")
    return "\n".join(rows)


def render_ablation_table(results: list[AblationResult]) -> str:
    header = (f"{'variant':<24} {'AUC-ROC':>8} {'Macro-F1':>9} "
              f"{'dAUC%':>7} {'dF1%':>7} {'auc mean+/-std':>16}")
    rows = [header, "-" * len(header)]
    for r in results:
        rows.append(f"{r.kind:<24} {r.report.auc_roc:>8.3f} {r.report.macro_f1:>9.3f} "
                    f"{r.drop_auc_pct:>7.2f} {r.drop_f1_pct:>7.2f} "
                    f"{r.report.auc_mean:>8.3f}+/-{r.report.auc_std:.3f}")
    return "\n".join(rows)

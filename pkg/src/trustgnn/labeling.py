"""Semi-supervised ground truth from recursive trust propagation.

Seeds are the top-k PageRank nodes of the positive subgraph. Trust spreads
along strong positive edges (weight >= 0.5): any node strongly endorsed by
a benign node becomes benign, recursively. A node strongly distrusted
(weight <= -0.5) by a benign node becomes fraud. Negative ratings from
non-benign raters are ignored, which makes the labeling immune to
retaliation and bad-mouthing. Everything else stays unlabeled.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import ValidationError
from .graph import SignedGraph

BENIGN = 0
FRAUD = 1
UNLABELED = -1

STRONG_POS = 0.5
STRONG_NEG = -0.5

LABEL_NAMES = {BENIGN: "benign", FRAUD: "fraud", UNLABELED: "unlabeled"}
LABEL_CODES = {v: k for k, v in LABEL_NAMES.items()}


@dataclass(frozen=True)
class SeedConfig:
    k: int = 10
    damping: float = 0.85
    pr_tol: float = 1e-10
    pr_max_iter: int = 200

    def validate(self):
        if self.k < 1:
            raise ValidationError(f"seed count k={self.k} must be >= 1")
        if not (0.0 < self.damping < 1.0):
            raise ValidationError(f"damping {self.damping} outside (0,1)")
        if self.pr_tol <= 0:
            raise ValidationError("pr_tol must be positive")


@dataclass(frozen=True)
class Provenance:
    """Who labeled a node: rater id, edge weight used, hop depth from seeds."""

    labeler: int | None
    weight: float | None
    depth: int


@dataclass
class LabelSet:
    labels: np.ndarray                      # int8, {0 benign, 1 fraud, -1 unlabeled}
    seeds: list[int]
    provenance: dict[int, Provenance] = field(default_factory=dict)

    def ids_with(self, label: int) -> np.ndarray:
        return np.nonzero(self.labels == label)[0]

    @property
    def num_benign(self) -> int:
        return int((self.labels == BENIGN).sum())

    @property
    def num_fraud(self) -> int:
        return int((self.labels == FRAUD).sum())

    @property
    def num_unlabeled(self) -> int:
        return int((self.labels == UNLABELED).sum())


def pagerank_positive(g: SignedGraph, cfg: SeedConfig = SeedConfig()) -> np.ndarray:
    """PageRank over the positive subgraph (classic, uniform over out-links).

    Power iteration with uniform teleport; dangling mass is redistributed
    uniformly. Stops when the L1 change drops below ``pr_tol`` or after
    ``pr_max_iter`` iterations. Scores sum to 1.
    """
    cfg.validate()
    n = g.num_nodes
    if g.num_pos == 0:
        raise ValidationError("graph has no positive edges; no trust structure to rank")

    indptr, nbr, _ = g.adjacency("+", "out")
    outdeg = np.diff(indptr).astype(float)
    src = np.repeat(np.arange(n), np.diff(indptr))
    dangling = outdeg == 0

    d = cfg.damping
    x = np.full(n, 1.0 / n)
    for _ in range(cfg.pr_max_iter):
        contrib = x[src] / outdeg[src]
        x_new = np.bincount(nbr, weights=contrib, minlength=n)
        x_new += x[dangling].sum() / n
        x_new = (1.0 - d) / n + d * x_new
        delta = np.abs(x_new - x).sum()
        x = x_new
        if delta < cfg.pr_tol:
            break
    return x


def select_seeds(scores: np.ndarray, cfg: SeedConfig) -> list[int]:
    """Top-k nodes by score, descending; ties broken by ascending node id."""
    if not np.all(np.isfinite(scores)):
        raise ValidationError("scores contain NaN/Inf")
    if cfg.k > len(scores):
        raise ValidationError(f"k={cfg.k} exceeds node count {len(scores)}")
    order = np.lexsort((np.arange(len(scores)), -scores))
    return [int(i) for i in order[:cfg.k]]


def propagate_labels(g: SignedGraph, seeds: list[int], fraud_wins: bool = False) -> LabelSet:
    """Two-phase labeling: benign least fixpoint, then fraud scan.

    Benign is grown breadth-first from the seeds along edges with weight
    >= 0.5, so depth is the hop distance from the seed set and does not
    depend on seed order. Fraud nodes are the targets of weight <= -0.5
    edges whose rater is benign. A node qualifying for both labels stays
    benign unless ``fraud_wins``; seeds are never relabeled.
    """
    if not seeds:
        raise ValidationError("seed list is empty")
    n = g.num_nodes
    for s in seeds:
        if not (0 <= s < n):
            raise ValidationError(f"seed {s} out of range")

    labels = np.full(n, UNLABELED, dtype=np.int8)
    prov: dict[int, Provenance] = {}
    depth = np.full(n, -1, dtype=np.int64)

    pos_out_indptr, pos_out_nbr, pos_out_eid = g.adjacency("+", "out")

    frontier = sorted(set(seeds))
    for s in frontier:
        labels[s] = BENIGN
        depth[s] = 0
        prov[s] = Provenance(labeler=None, weight=None, depth=0)

    level = 0
    while frontier:
        level += 1
        discovered: dict[int, tuple[int, float]] = {}
        for u in frontier:
            for i in range(pos_out_indptr[u], pos_out_indptr[u + 1]):
                v = int(pos_out_nbr[i])
                w = float(g.weight[pos_out_eid[i]])
                if w < STRONG_POS or labels[v] == BENIGN:
                    continue
                # canonical labeler: smallest-id benign rater at the previous level
                if v not in discovered or u < discovered[v][0]:
                    discovered[v] = (u, w)
        for v in sorted(discovered):
            u, w = discovered[v]
            labels[v] = BENIGN
            depth[v] = level
            prov[v] = Provenance(labeler=u, weight=w, depth=level)
        frontier = sorted(discovered)

    # fraud scan: strong negative edges whose rater is benign
    fraud_mark: dict[int, tuple[int, float]] = {}
    neg_out_indptr, neg_out_nbr, neg_out_eid = g.adjacency("-", "out")
    for u in np.nonzero(labels == BENIGN)[0]:
        for i in range(neg_out_indptr[u], neg_out_indptr[u + 1]):
            v = int(neg_out_nbr[i])
            w = float(g.weight[neg_out_eid[i]])
            if w > STRONG_NEG:
                continue
            cand = (int(depth[u]), int(u), w)
            if v not in fraud_mark or cand[:2] < (fraud_mark[v][0], fraud_mark[v][1]):
                fraud_mark[v] = (cand[0], cand[1], cand[2])

    seed_set = set(seeds)
    for v, (d_u, u, w) in sorted(fraud_mark.items()):
        if labels[v] == BENIGN:
            if not fraud_wins or v in seed_set:
                continue
        labels[v] = FRAUD
        prov[v] = Provenance(labeler=u, weight=w, depth=d_u + 1)

    return LabelSet(labels=labels, seeds=list(seeds), provenance=prov)


@dataclass
class LabelSummary:
    num_benign: int
    num_fraud: int
    num_unlabeled: int
    fraud_ratio: float
    max_depth: int

    def __str__(self):
        return (f"benign={self.num_benign} fraud={self.num_fraud} "
                f"unlabeled={self.num_unlabeled} fraud_ratio={self.fraud_ratio:.4f} "
                f"max_depth={self.max_depth}")


def label_report(ls: LabelSet) -> LabelSummary:
    labeled = ls.num_benign + ls.num_fraud
    return LabelSummary(
        num_benign=ls.num_benign,
        num_fraud=ls.num_fraud,
        num_unlabeled=ls.num_unlabeled,
        fraud_ratio=ls.num_fraud / labeled if labeled else 0.0,
        max_depth=max((p.depth for p in ls.provenance.values()), default=0),
    )


def export_labels(ls: LabelSet, path) -> None:
    """CSV ``node_id,label,labeler,weight,depth``; blanks where not applicable."""
    with open(path, "w", encoding="utf-8") as fh:
        fh.write("node_id,label,labeler,weight,depth\n")
        for i, lab in enumerate(ls.labels):
            p = ls.provenance.get(i)
            labeler = "" if p is None or p.labeler is None else p.labeler
            weight = "" if p is None or p.weight is None else f"{p.weight:g}"
            depth = "" if p is None else p.depth
            fh.write(f"{i},{LABEL_NAMES[int(lab)]},{labeler},{weight},{depth}\n")


def load_labels(path, num_nodes: int) -> LabelSet:
    labels = np.full(num_nodes, UNLABELED, dtype=np.int8)
    prov: dict[int, Provenance] = {}
    seeds = []
    with open(path, "r", encoding="utf-8") as fh:
        header = fh.readline()
        if not header.startswith("node_id,label"):
            raise ValidationError(f"{path}: not a label export")
        for line in fh:
            node_s, label_s, labeler_s, weight_s, depth_s = line.rstrip("\n").split(",")
            i = int(node_s)
            labels[i] = LABEL_CODES[label_s]
            if depth_s != "":
                prov[i] = Provenance(
                    labeler=int(labeler_s) if labeler_s else None,
                    weight=float(weight_s) if weight_s else None,
                    depth=int(depth_s))
                if labels[i] == BENIGN and prov[i].depth == 0:
                    seeds.append(i)
    return LabelSet(labels=labels, seeds=seeds, provenance=prov)

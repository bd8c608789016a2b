"""Reference detectors: average-rating threshold, negative-score
propagation (BadRank-style), and an unsigned mean-pooling GCN that reuses
the main numerical engine in a degraded single-channel mode."""

from __future__ import annotations

from dataclasses import dataclass, replace

import numpy as np

from .errors import ValidationError
from .features import FeatureMatrix, rating_moments
from .graph import EdgeRecord, SignedGraph
from .labeling import LabelSet
from .model import forward
from .training import LossConfig, SplitAssignment, TrainConfig, train


@dataclass
class BaselineScore:
    method: str
    scores: np.ndarray          # higher = more anomalous
    flags: np.ndarray | None    # binary, only for threshold-style detectors
    params: dict


def lowest_pct_heuristic(g: SignedGraph, pct: float = 0.05) -> BaselineScore:
    """Flag the bottom fraction of rated nodes by mean incoming rating.

    Scores are the negated in-rating mean (unrated nodes score 0). Flags
    cover exactly ceil(pct * #rated) nodes; ties on the mean go to the
    node with more incoming ratings, then the lower id.
    """
    if not (0.0 < pct < 1.0):
        raise ValidationError(f"pct={pct} outside (0,1)")
    mu = rating_moments(g)[:, 0]
    n_in = np.bincount(g.tgt, minlength=g.num_nodes) if g.num_edges else \
        np.zeros(g.num_nodes, dtype=np.int64)
    rated = np.nonzero(n_in > 0)[0]
    n_flag = int(np.ceil(pct * len(rated))) if len(rated) else 0
    order = sorted(rated, key=lambda i: (mu[i], -n_in[i], i))
    flags = np.zeros(g.num_nodes, dtype=np.int8)
    flags[order[:n_flag]] = 1
    return BaselineScore(method="lowest_5pct", scores=-mu, flags=flags,
                         params={"pct": pct})


def badrank(g: SignedGraph, damping: float = 0.85, tol: float = 1e-10,
            max_iter: int = 200) -> BaselineScore:
    """Propagate badness mass along negative edges from rater to target.

    Fixed point of  b = (1-d) e + d M b  where e is uniform over targets of
    negative edges and column u of M spreads u's mass equally across its
    outgoing negative edges; nodes without outgoing negative edges spread
    uniformly over all nodes. Scores are nonnegative and sum to 1.
    """
    n = g.num_nodes
    neg = np.nonzero(g.weight < 0)[0]
    if len(neg) == 0:
        raise ValidationError("badrank needs at least one negative edge")
    src, tgt = g.src[neg], g.tgt[neg]
    outdeg = np.bincount(src, minlength=n).astype(float)
    dangling = outdeg == 0

    e = np.zeros(n)
    targets = np.unique(tgt)
    e[targets] = 1.0 / len(targets)

    b = np.full(n, 1.0 / n)
    for _ in range(max_iter):
        contrib = b[src] / outdeg[src]
        b_new = np.bincount(tgt, weights=contrib, minlength=n)
        b_new += b[dangling].sum() / n
        b_new = (1.0 - damping) * e + damping * b_new
        delta = np.abs(b_new - b).sum()
        b = b_new
        if delta < tol:
            break
    return BaselineScore(method="badrank", scores=b, flags=None,
                         params={"damping": damping, "tol": tol, "max_iter": max_iter})


def as_unsigned(g: SignedGraph) -> SignedGraph:
    """All edges flipped positive with the same magnitudes and timestamps."""
    records = [EdgeRecord(r.source, r.target, abs(r.raw_rating), r.timestamp)
               for r in g.edges]
    return SignedGraph(g.num_nodes, records, g.rating_scale)


def unsigned_gcn(g: SignedGraph, feats, labels: LabelSet, model_cfg,
                 train_cfg: TrainConfig, loss_cfg: LossConfig,
                 split: SplitAssignment, seed: int | None = None):
    """Sign-blind control: one mean-pooling channel over |w| edges.

    Wiring equals the no_negative_channel + no_attention ablation applied
    to the unsigned copy of the graph; loss and trainer are shared.
    """
    cfg = replace(model_cfg, use_negative_channel=False, use_attention=False,
                  seed=model_cfg.seed if seed is None else seed)
    gu = as_unsigned(g)
    params, log = train(gu, feats, labels, cfg, train_cfg, loss_cfg, split=split)
    X = feats.data if isinstance(feats, FeatureMatrix) else np.asarray(feats)
    scores = forward(params, cfg, gu, X, mode="eval").y_hat
    return params, log, BaselineScore(method="gcn_unsigned", scores=scores, flags=None,
                                      params={"seed": cfg.seed})

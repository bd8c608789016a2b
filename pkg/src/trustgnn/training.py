"""Loss, splits, optimizer and the full-graph training loop.

The objective is a class-weighted binary cross-entropy over train-split
nodes plus a weighted auxiliary term that predicts each edge's sign from
the dot product of its endpoint representations:

    total = wbce + link_weight * link

Both terms use log-sigmoid formulations throughout; probabilities are
never materialized inside the loss. Per-epoch validation AUC drives early
stopping and checkpoint selection.
"""

from __future__ import annotations

import time
from dataclasses import dataclass, field

import numpy as np
from scipy.special import expit

from .errors import ConfigError, NumericalFaultError, ValidationError
from .features import FeatureMatrix
from .graph import SignedGraph
from .labeling import BENIGN, FRAUD, LabelSet
from .model import (ForwardTrace, LossGrads, ModelConfig, ModelParams, backward,
                    copy_params, forward, init_params, zeros_like_params)

TRAIN, VAL, TEST, NOSPLIT = 0, 1, 2, -1
_SPLIT_NAMES = {TRAIN: "train", VAL: "val", TEST: "test"}


@dataclass(frozen=True)
class LossConfig:
    link_weight: float = 0.1            # weight of the auxiliary sign loss
    fraud_weight: float | None = None   # None = benign/fraud train-count ratio
    link_sample_size: int | None = None  # None = every eligible edge

    def validate(self):
        if self.link_weight < 0:
            raise ConfigError("link_weight must be >= 0")
        if self.fraud_weight is not None and self.fraud_weight <= 0:
            raise ConfigError("fraud_weight must be positive")


@dataclass(frozen=True)
class TrainConfig:
    lr: float = 1e-3
    weight_decay: float = 5e-4
    max_epochs: int = 2000
    patience: int = 20
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    split_fractions: tuple = (0.70, 0.15, 0.15)
    split_seed: int = 0
    model_seeds: tuple = (0, 1, 2)
    min_improvement: float = 1e-4

    def validate(self):
        if abs(sum(self.split_fractions) - 1.0) > 1e-9 or len(self.split_fractions) != 3:
            raise ConfigError("split_fractions must be three values summing to 1")
        if self.patience < 1:
            raise ConfigError("patience must be >= 1")
        if self.max_epochs < 1:
            raise ConfigError("max_epochs must be >= 1")


@dataclass
class SplitAssignment:
    assignment: np.ndarray   # int8 over nodes: TRAIN/VAL/TEST, NOSPLIT for unlabeled

    def ids(self, which: int) -> np.ndarray:
        return np.nonzero(self.assignment == which)[0]

    @property
    def train_ids(self):
        return self.ids(TRAIN)

    @property
    def val_ids(self):
        return self.ids(VAL)

    @property
    def test_ids(self):
        return self.ids(TEST)

    def checksum(self) -> str:
        import hashlib
        return hashlib.sha256(self.assignment.tobytes()).hexdigest()[:16]


def _apportion(n: int, fractions) -> list[int]:
    """Largest-remainder split of n items; every bucket gets >= 1 when n >= 3."""
    quotas = [n * f for f in fractions]
    counts = [int(q) for q in quotas]
    order = sorted(range(3), key=lambda i: quotas[i] - counts[i], reverse=True)
    for i in range(n - sum(counts)):
        counts[order[i % 3]] += 1
    if n >= 3:
        for i in range(3):
            while counts[i] == 0:
                j = int(np.argmax(counts))
                counts[j] -= 1
                counts[i] += 1
    return counts


def make_splits(labels: LabelSet, cfg: TrainConfig) -> SplitAssignment:
    """Stratified train/val/test assignment over labeled nodes only."""
    cfg.validate()
    assignment = np.full(len(labels.labels), NOSPLIT, dtype=np.int8)
    rng = np.random.default_rng(cfg.split_seed)
    for cls in (BENIGN, FRAUD):
        ids = labels.ids_with(cls)
        if len(ids) < 10:
            raise ValidationError(
                f"need >= 10 labeled nodes of class {cls}, got {len(ids)}")
        ids = rng.permutation(ids)
        n_train, n_val, n_test = _apportion(len(ids), cfg.split_fractions)
        assignment[ids[:n_train]] = TRAIN
        assignment[ids[n_train:n_train + n_val]] = VAL
        assignment[ids[n_train + n_val:]] = TEST
    return SplitAssignment(assignment)


def _softplus(x):
    return np.logaddexp(0.0, x)


def resolve_fraud_weight(labels: LabelSet, split: SplitAssignment,
                         loss_cfg: LossConfig) -> float:
    if loss_cfg.fraud_weight is not None:
        return loss_cfg.fraud_weight
    train = split.train_ids
    y = labels.labels[train]
    n_fraud = int((y == FRAUD).sum())
    n_benign = int((y == BENIGN).sum())
    if n_fraud == 0 or n_benign == 0:
        raise ValidationError("train split must contain both classes")
    return n_benign / n_fraud


def eligible_link_edges(graph: SignedGraph, split: SplitAssignment) -> np.ndarray:
    """Edge indices whose endpoints avoid the test split (leakage guard)."""
    ok = (split.assignment[graph.src] != TEST) & (split.assignment[graph.tgt] != TEST)
    return np.nonzero(ok)[0]


def sample_link_edges(graph: SignedGraph, split: SplitAssignment,
                      loss_cfg: LossConfig, rng) -> np.ndarray:
    pool = eligible_link_edges(graph, split)
    if loss_cfg.link_sample_size is None or loss_cfg.link_sample_size >= len(pool):
        return pool
    return np.sort(rng.choice(pool, size=loss_cfg.link_sample_size, replace=False))


def compute_loss(trace: ForwardTrace, labels: LabelSet, split: SplitAssignment,
                 graph: SignedGraph, loss_cfg: LossConfig,
                 edge_sample: np.ndarray | None = None):
    """Total loss and its parts on the current trace.

    wbce sums over train nodes with the fraud terms scaled by the class
    weight; link is the mean sign-prediction BCE over the sampled edges.
    """
    loss_cfg.validate()
    w_fraud = resolve_fraud_weight(labels, split, loss_cfg)
    train = split.train_ids
    y = (labels.labels[train] == FRAUD).astype(np.float64)
    t = trace.logit[train]
    # -log sigmoid(t) = softplus(-t); -log(1 - sigmoid(t)) = softplus(t)
    wbce = float(np.sum(w_fraud * y * _softplus(-t) + (1.0 - y) * _softplus(t)))

    if edge_sample is None:
        edge_sample = eligible_link_edges(graph, split)
    if len(edge_sample):
        z = trace.z
        d = np.einsum("eh,eh->e", z[graph.src[edge_sample]], z[graph.tgt[edge_sample]])
        s = (graph.weight[edge_sample] > 0).astype(np.float64)
        link = float(np.mean(_softplus(d) - s * d))
    else:
        link = 0.0

    total = wbce + loss_cfg.link_weight * link
    if not np.isfinite(total):
        raise NumericalFaultError("non-finite loss")
    return total, {"wbce": wbce, "link": link}


def loss_gradients(trace: ForwardTrace, labels: LabelSet, split: SplitAssignment,
                   graph: SignedGraph, loss_cfg: LossConfig,
                   edge_sample: np.ndarray | None = None) -> LossGrads:
    """Gradients of the total loss at the trace outputs (logit and z)."""
    w_fraud = resolve_fraud_weight(labels, split, loss_cfg)
    n = graph.num_nodes
    d_logit = np.zeros(n)
    train = split.train_ids
    y = (labels.labels[train] == FRAUD).astype(np.float64)
    sig = expit(trace.logit[train])
    d_logit[train] = -w_fraud * y * (1.0 - sig) + (1.0 - y) * sig

    d_z = None
    if edge_sample is None:
        edge_sample = eligible_link_edges(graph, split)
    if len(edge_sample) and loss_cfg.link_weight > 0:
        z = trace.z
        src, tgt = graph.src[edge_sample], graph.tgt[edge_sample]
        d = np.einsum("eh,eh->e", z[src], z[tgt])
        s = (graph.weight[edge_sample] > 0).astype(np.float64)
        g = loss_cfg.link_weight * (expit(d) - s) / len(edge_sample)
        d_z = np.zeros_like(z)
        np.add.at(d_z, src, g[:, None] * z[tgt])
        np.add.at(d_z, tgt, g[:, None] * z[src])
    return LossGrads(d_logit=d_logit, d_z=d_z)


class AdamW:
    """Adam with decoupled weight decay.

    Decay applies to weight matrices and the MLP tensors; attention
    vectors are exempt.
    """

    def __init__(self, params: ModelParams, cfg: TrainConfig):
        self.cfg = cfg
        self.t = 0
        self.m = zeros_like_params(params)
        self.v = zeros_like_params(params)

    def step(self, params: ModelParams, grads: ModelParams):
        c = self.cfg
        self.t += 1
        bc1 = 1.0 - c.beta1 ** self.t
        bc2 = 1.0 - c.beta2 ** self.t
        for (name, p), (_, g), (_, m), (_, v) in zip(
                params.named_tensors(), grads.named_tensors(),
                self.m.named_tensors(), self.v.named_tensors()):
            m[...] = c.beta1 * m + (1.0 - c.beta1) * g
            v[...] = c.beta2 * v + (1.0 - c.beta2) * g * g
            p -= c.lr * (m / bc1) / (np.sqrt(v / bc2) + c.eps)
            if ".a_" not in name and c.weight_decay > 0:
                p -= c.lr * c.weight_decay * p


@dataclass
class EpochRecord:
    epoch: int
    wbce: float
    link: float
    total: float
    val_auc: float
    val_f1: float
    lr: float
    elapsed_ms: float

    def as_dict(self):
        return {"epoch": self.epoch, "wbce": self.wbce, "link": self.link,
                "total": self.total, "val_auc": self.val_auc, "val_f1": self.val_f1,
                "lr": self.lr, "elapsed_ms": self.elapsed_ms}


@dataclass
class TrainLog:
    records: list[EpochRecord] = field(default_factory=list)
    best_epoch: int = -1
    best_val_auc: float = -np.inf
    stop_reason: str = ""
    split_checksum: str = ""

    def to_jsonl(self, path):
        import json
        with open(path, "w", encoding="utf-8") as fh:
            for r in self.records:
                fh.write(json.dumps(r.as_dict()) + "\n")
            fh.write(json.dumps({"best_epoch": self.best_epoch,
                                 "best_val_auc": self.best_val_auc,
                                 "stop_reason": self.stop_reason,
                                 "split_checksum": self.split_checksum}) + "\n")


def train(graph: SignedGraph, features, labels: LabelSet, model_cfg: ModelConfig,
          train_cfg: TrainConfig, loss_cfg: LossConfig,
          split: SplitAssignment | None = None):
    """Full-graph training loop; returns (best params, train log).

    Keeps the parameters from the epoch with the best validation AUC and
    stops once `patience` epochs pass without an improvement greater than
    `min_improvement`. All randomness derives from model_cfg.seed and
    train_cfg.split_seed.
    """
    from .evaluation import auc_roc, macro_f1

    train_cfg.validate()
    loss_cfg.validate()
    X = features.data if isinstance(features, FeatureMatrix) else np.asarray(features)
    if split is None:
        split = make_splits(labels, train_cfg)
    resolve_fraud_weight(labels, split, loss_cfg)  # fail fast on one-class splits

    ss = np.random.SeedSequence(model_cfg.seed)
    rng_init, rng_drop, rng_sample = (np.random.default_rng(s) for s in ss.spawn(3))
    params = init_params(model_cfg, X.shape[1], rng_init)

    opt = AdamW(params, train_cfg)
    log = TrainLog(split_checksum=split.checksum())
    val_ids = split.val_ids
    val_y = (labels.labels[val_ids] == FRAUD).astype(int)
    best_params = copy_params(params)
    bad_epochs = 0

    for epoch in range(1, train_cfg.max_epochs + 1):
        t0 = time.perf_counter()
        try:
            trace = forward(params, model_cfg, graph, X, mode="train", rng=rng_drop)
            edge_sample = sample_link_edges(graph, split, loss_cfg, rng_sample)
            total, parts = compute_loss(trace, labels, split, graph, loss_cfg, edge_sample)
            lg = loss_gradients(trace, labels, split, graph, loss_cfg, edge_sample)
            grads = backward(params, trace, lg)
            opt.step(params, grads)

            eval_trace = forward(params, model_cfg, graph, X, mode="eval")
            val_scores = eval_trace.y_hat[val_ids]
            val_auc = auc_roc(val_scores, val_y)
            val_f1 = macro_f1((val_scores >= 0.5).astype(int), val_y)
        except NumericalFaultError as exc:
            log.stop_reason = f"numerical fault at epoch {epoch}"
            log.records.append(EpochRecord(epoch, np.nan, np.nan, np.nan, np.nan,
                                           np.nan, train_cfg.lr, 0.0))
            exc.epoch = epoch
            exc.log = log
            raise
        log.records.append(EpochRecord(epoch, parts["wbce"], parts["link"], total,
                                       val_auc, val_f1, train_cfg.lr,
                                       (time.perf_counter() - t0) * 1e3))

        if val_auc > log.best_val_auc + train_cfg.min_improvement:
            log.best_val_auc = val_auc
            log.best_epoch = epoch
            best_params = copy_params(params)
            bad_epochs = 0
        else:
            bad_epochs += 1
            if bad_epochs >= train_cfg.patience:
                log.stop_reason = f"no val AUC improvement for {train_cfg.patience} epochs"
                break
    else:
        log.stop_reason = "max_epochs reached"
    return best_params, log

"""Acceptance gate: one test per criterion, each printing a PASS/FAIL line.

Criteria 1, 2 and 6 run on randomized instances. The end-to-end criteria
(3, 4, 5, 7) run against the real Bitcoin-Alpha rating file when it is
available (./data/soc-sign-bitcoinalpha.csv or $TRUSTGNN_DATA_DIR); in
environments without the dataset they run on the bundled synthetic
surrogate, which reproduces the same adversarial structure (trusted core,
camouflaged fraud, bad-mouthing) with the same directional gates.

Run with `pytest -v -rA tests/test_acceptance.py` to see every line.
"""

import os
import time
from pathlib import Path

import numpy as np
import pytest

from conftest import random_signed_graph
from gradcheck import fd_check, randomize_params, total_loss_and_grads
from trustgnn.baselines import badrank, lowest_pct_heuristic, unsigned_gcn
from trustgnn.evaluation import (aggregate_reports, auc_roc, class_separation,
                                 evaluate_scores, macro_f1, run_ablation_suite,
                                 train_and_score)
from trustgnn.features import SvdConfig, assemble_features, unsigned_adjacency
from trustgnn.graph import load_edge_list
from trustgnn.labeling import (BENIGN, FRAUD, SeedConfig, pagerank_positive,
                               propagate_labels, select_seeds)
from trustgnn.model import ModelConfig, forward, init_params
from trustgnn.training import (LossConfig, SplitAssignment, TrainConfig,
                               loss_gradients, make_splits)
from trustgnn.synthetic import SyntheticConfig, generate

PAPER_TARGETS = {"auc": 0.927, "f1": 0.747}
PAPER_DROPS = {"no_negative_channel": 10.67, "no_attention": 8.00,
               "no_status_features": 10.75}


def report(ok: bool, criterion: str, detail: str):
    print(f"[{'PASS' if ok else 'FAIL'}] {criterion}: {detail}")
    assert ok, f"{criterion}: {detail}"


def dataset_path():
    name = "soc-sign-bitcoinalpha.csv"
    env = os.environ.get("TRUSTGNN_DATA_DIR")
    candidates = [Path(env) / name if env else None,
                  Path(__file__).resolve().parent.parent / "data" / name]
    for c in candidates:
        if c is not None and c.exists():
            return c
    return None


# ----------------------------------------------------- criterion 1: gradients

def test_criterion_1_gradient_exactness():
    t0 = time.perf_counter()
    rng = np.random.default_rng(2024)
    g = random_signed_graph(rng, n_nodes=30, n_edges=110, neg_frac=0.35)
    X = rng.normal(size=(30, 7))
    cfg = ModelConfig(num_layers=2, hidden_dim=5, mlp_hidden=5,
                      dropout_rate=0.1, seed=0)
    params = randomize_params(init_params(cfg, 7), rng)

    labels_arr = np.full(30, -1, dtype=np.int8)
    assignment = np.full(30, -1, dtype=np.int8)
    ids = rng.permutation(30)[:20]
    for j, i in enumerate(ids):
        labels_arr[i] = j % 2
        assignment[i] = 0 if j < 12 else (1 if j < 16 else 2)
    from trustgnn.labeling import LabelSet
    labels = LabelSet(labels=labels_arr, seeds=[])
    split = SplitAssignment(assignment)

    loss_cfg = LossConfig(link_weight=0.2, fraud_weight=2.5)
    _, grads, loss_of = total_loss_and_grads(params, cfg, g, X, labels, split, loss_cfg)
    worst, n = fd_check(params, grads, loss_of, rng, n_coords=220, step=1e-4)
    elapsed = time.perf_counter() - t0
    report(worst < 1e-5 and n >= 200 and elapsed < 60.0,
           "criterion 1 (gradient exactness)",
           f"worst rel err {worst:.2e} over {n} coords in {elapsed:.1f}s")


# ----------------------------------------------- criterion 2: oracle parity

def test_criterion_2_oracle_equivalence():
    from test_labeling import dense_pagerank_oracle, naive_fixpoint_oracle
    from test_evaluation import pair_auc_oracle

    worst_pr = worst_br = worst_svd = 0.0
    for seed in range(20):
        rng = np.random.default_rng(5000 + seed)
        g = random_signed_graph(rng, n_nodes=30, n_edges=100, neg_frac=0.35)

        # labeling fixpoint
        seeds = [int(s) for s in rng.choice(30, size=3, replace=False)]
        ls = propagate_labels(g, seeds)
        benign, fraud = naive_fixpoint_oracle(g, seeds)
        assert set(ls.ids_with(BENIGN)) == benign and set(ls.ids_with(FRAUD)) == fraud

        # pagerank against a dense solve
        cfg = SeedConfig(pr_tol=1e-14, pr_max_iter=500)
        pr = pagerank_positive(g, cfg)
        worst_pr = max(worst_pr, float(np.abs(pr - dense_pagerank_oracle(g, 0.85)).max()))

        # badrank against a dense solve
        if g.num_neg:
            br = badrank(g, tol=1e-14, max_iter=500)
            n = g.num_nodes
            M = np.zeros((n, n))
            for r in g.edges:
                if r.raw_rating < 0:
                    M[r.target, r.source] = 1.0
            outdeg = M.sum(axis=0)
            for u in range(n):
                M[:, u] = M[:, u] / outdeg[u] if outdeg[u] > 0 else 1.0 / n
            e = np.zeros(n)
            targets = sorted({r.target for r in g.edges if r.raw_rating < 0})
            e[targets] = 1.0 / len(targets)
            want = np.linalg.solve(np.eye(n) - 0.85 * M, 0.15 * e)
            worst_br = max(worst_br, float(np.abs(br.scores - want).max()))

        # truncated svd singular values against the dense decomposition
        from trustgnn.features import truncated_svd
        X = truncated_svd(g, SvdConfig(k_svd=6, iters=40, seed=seed))
        got = np.linalg.norm(X, axis=0)
        want_s = np.linalg.svd(unsigned_adjacency(g).toarray(), compute_uv=False)[:6]
        if want_s[0] > 0:
            worst_svd = max(worst_svd, float(np.abs(got - want_s).max() / want_s[0]))

        # metrics against brute-force oracles
        y = (rng.random(30) < 0.4).astype(int)
        if 0 < y.sum() < 30:
            s = np.round(rng.normal(size=30), 1)
            assert auc_roc(s, y) == pytest.approx(pair_auc_oracle(s, y), abs=1e-12)
        preds = (rng.random(30) < 0.5).astype(int)
        cm = np.zeros((2, 2), int)
        for t in (0, 1):
            for p in (0, 1):
                cm[t, p] = int(np.sum((y == t) & (preds == p)))

        def f1(c):
            tp, fp, fn = cm[c, c], cm[1 - c, c], cm[c, 1 - c]
            pr_ = tp / (tp + fp) if tp + fp else 0.0
            rc = tp / (tp + fn) if tp + fn else 0.0
            return 2 * pr_ * rc / (pr_ + rc) if pr_ + rc else 0.0

        assert macro_f1(preds, y) == pytest.approx(0.5 * (f1(0) + f1(1)), abs=1e-12)

    report(worst_pr < 1e-8 and worst_br < 1e-8 and worst_svd < 1e-6,
           "criterion 2 (oracle equivalence)",
           f"20 instances each; pagerank {worst_pr:.1e}, badrank {worst_br:.1e}, "
           f"svd rel {worst_svd:.1e}, labeling/auc/f1 exact")


# ------------------------------------------------ end-to-end shared fixture

SURROGATE_MODEL = ModelConfig(num_layers=2, hidden_dim=32, mlp_hidden=32,
                              dropout_rate=0.1, seed=0)
SURROGATE_TRAIN = TrainConfig(lr=1e-3, weight_decay=5e-4, max_epochs=400,
                              patience=50, split_seed=7, model_seeds=(0, 1, 2))
SURROGATE_LOSS = LossConfig(link_weight=0.1)
SURROGATE_SVD = SvdConfig(k_svd=16, iters=20, seed=1)


@pytest.fixture(scope="module")
def e2e():
    """Full pipeline on the surrogate benchmark: labels, features, 3-seed
    full model, 3-seed unsigned GCN, heuristics."""
    g, _ = generate(SyntheticConfig(seed=0))
    scfg = SeedConfig(k=10)
    ls = propagate_labels(g, select_seeds(pagerank_positive(g, scfg), scfg))
    feats = assemble_features(g, SURROGATE_SVD)
    split = make_splits(ls, SURROGATE_TRAIN)
    test_ids = split.test_ids
    y = (ls.labels[test_ids] == FRAUD).astype(int)

    t0 = time.perf_counter()
    full_runs = []
    for seed in SURROGATE_TRAIN.model_seeds:
        params, log, rep = train_and_score(g, feats, ls, SURROGATE_MODEL,
                                           SURROGATE_TRAIN, SURROGATE_LOSS, split, seed)
        full_runs.append((log.best_val_auc, params, rep))
    train_elapsed = time.perf_counter() - t0
    full = aggregate_reports("full", [r for _, _, r in full_runs])
    best_params = max(full_runs, key=lambda x: x[0])[1]

    gcn_reports = []
    for seed in SURROGATE_TRAIN.model_seeds:
        _, _, bs = unsigned_gcn(g, feats, ls, SURROGATE_MODEL, SURROGATE_TRAIN,
                                SURROGATE_LOSS, split, seed=seed)
        gcn_reports.append(evaluate_scores("gcn_unsigned", bs.scores[test_ids], y))
    gcn = aggregate_reports("gcn_unsigned", gcn_reports)

    low_auc = auc_roc(lowest_pct_heuristic(g).scores[test_ids], y)
    return {"graph": g, "labels": ls, "feats": feats, "split": split,
            "full": full, "gcn": gcn, "low_auc": low_auc,
            "best_params": best_params, "train_elapsed": train_elapsed}


def test_criterion_3_end_to_end_directional(e2e):
    full, gcn, low_auc = e2e["full"], e2e["gcn"], e2e["low_auc"]
    ok = (full.auc_roc >= 0.85 and full.macro_f1 >= 0.65
          and full.auc_roc - gcn.auc_roc >= 0.05
          and full.auc_roc - low_auc >= 0.20
          and e2e["train_elapsed"] < 600.0)
    report(ok, "criterion 3 (end-to-end directional, surrogate benchmark)",
           f"full AUC {full.auc_roc:.3f} (>=0.85) F1 {full.macro_f1:.3f} (>=0.65), "
           f"AUC margin over unsigned GCN {full.auc_roc - gcn.auc_roc:+.3f} (>=0.05), "
           f"over lowest-5% {full.auc_roc - low_auc:+.3f} (>=0.20), "
           f"3-seed training {e2e['train_elapsed']:.0f}s (<600s); "
           f"published targets AUC {PAPER_TARGETS['auc']} F1 {PAPER_TARGETS['f1']} "
           f"are advisory (delta {full.auc_roc - PAPER_TARGETS['auc']:+.3f} / "
           f"{full.macro_f1 - PAPER_TARGETS['f1']:+.3f})")


def test_criterion_4_ablation_directions(e2e):
    results = run_ablation_suite(e2e["graph"], e2e["feats"], e2e["labels"],
                                 SURROGATE_MODEL, SURROGATE_TRAIN, SURROGATE_LOSS)
    by_kind = {r.kind: r for r in results}
    full = by_kind["full"].report
    lines = []
    ok = True
    for kind in ("no_negative_channel", "no_attention", "no_status_features"):
        r = by_kind[kind]
        direction = (full.auc_roc > r.report.auc_roc
                     and full.macro_f1 > r.report.macro_f1)
        ok = ok and direction
        ref = PAPER_DROPS[kind]
        metric_drop = r.drop_auc_pct if kind == "no_status_features" else r.drop_f1_pct
        lines.append(f"{kind}: drop AUC {r.drop_auc_pct:.1f}% F1 {r.drop_f1_pct:.1f}% "
                     f"(published {ref}%, advisory within +/-6pp: "
                     f"{'yes' if abs(metric_drop - ref) <= 6 else 'no'})")
    checksums = {c for r in results for c in r.split_checksums}
    ok = ok and len(checksums) == 1
    report(ok, "criterion 4 (ablation directions)",
           "full beats every ablation on median AUC and F1; " + "; ".join(lines))


def test_criterion_5_heuristic_weakness(e2e):
    low_auc = e2e["low_auc"]
    report(0.45 <= low_auc <= 0.65, "criterion 5 (heuristic weakness)",
           f"lowest-5% AUC {low_auc:.3f} within [0.45, 0.65] "
           f"(published reference 0.527)")


def test_criterion_7_embedding_separation(e2e):
    z = forward(e2e["best_params"], SURROGATE_MODEL, e2e["graph"],
                e2e["feats"], mode="eval").z_pre
    stats = class_separation(z, e2e["labels"])
    report(stats.separated, "criterion 7 (embedding separation)",
           f"inter-centroid {stats.inter_centroid:.2f} > "
           f"mean intra {stats.mean_intra:.2f}")


# -------------------------------------------- criterion 6: invariant suites

def test_criterion_6_invariant_suites():
    from trustgnn.model import _channel_index, backward, LossGrads
    from trustgnn.graph import EdgeRecord, SignedGraph
    from trustgnn.labeling import LabelSet

    cfg = ModelConfig(num_layers=2, hidden_dim=4, mlp_hidden=4,
                      dropout_rate=0.0, seed=0)
    checked = {"attention": 0, "permutation": 0, "masking": 0,
               "determinism": 0, "monotonicity": 0}
    for case in range(100):
        rng = np.random.default_rng(31_000 + case)
        g = random_signed_graph(rng, n_nodes=12, n_edges=40, neg_frac=0.35)
        X = rng.normal(size=(12, 4))
        params = randomize_params(init_params(cfg, 4), rng)
        trace = forward(params, cfg, g, X, mode="eval")

        # attention normalization at every layer and sign
        for l in range(cfg.num_layers):
            for s in "+-":
                tr = trace.channels[l][s]
                if tr.alpha is not None:
                    idx = _channel_index(g, s)
                    assert np.abs(np.add.reduceat(tr.alpha, idx.starts) - 1.0).max() < 1e-12
        checked["attention"] += 1

        # permutation equivariance of scores
        perm = rng.permutation(12)
        g2 = SignedGraph(12, [EdgeRecord(int(perm[r.source]), int(perm[r.target]),
                                         r.raw_rating, r.timestamp) for r in g.edges])
        X2 = np.empty_like(X)
        X2[perm] = X
        y2 = forward(params, cfg, g2, X2, mode="eval").y_hat
        assert np.abs(y2[perm] - trace.y_hat).max() < 1e-10
        checked["permutation"] += 1

        # masking: non-train nodes contribute exactly zero gradient
        labels_arr = np.where(rng.random(12) < 0.5, 1, 0).astype(np.int8)
        assignment = np.array([0] * 6 + [1, 1, 2, 2, -1, -1], dtype=np.int8)
        labels_arr[assignment == -1] = -1
        if len(set(labels_arr[assignment == 0])) < 2:
            labels_arr[0], labels_arr[1] = 0, 1
        ls = LabelSet(labels=labels_arr, seeds=[])
        split = SplitAssignment(assignment)
        ttrace = forward(params, cfg, g, X, mode="train")
        lg = loss_gradients(ttrace, ls, split, g, LossConfig(link_weight=0.0))
        assert np.all(lg.d_logit[assignment != 0] == 0.0)
        flipped = labels_arr.copy()
        flipped[8] = 1 - flipped[8] if flipped[8] >= 0 else flipped[8]
        lg2 = loss_gradients(ttrace, LabelSet(labels=flipped, seeds=[]), split, g,
                             LossConfig(link_weight=0.0))
        assert np.array_equal(lg.d_logit, lg2.d_logit)
        checked["masking"] += 1

        # eval determinism, bit identical
        again = forward(params, cfg, g, X, mode="eval").y_hat
        assert np.array_equal(again, trace.y_hat)
        checked["determinism"] += 1

        # label propagation monotonicity under a new strong endorsement
        seeds = [int(s) for s in rng.choice(12, size=2, replace=False)]
        before = set(propagate_labels(g, seeds).ids_with(BENIGN))
        donor = sorted(before)[int(rng.integers(len(before)))]
        for target in rng.permutation(12):
            target = int(target)
            if donor != target and not any(r.source == donor and r.target == target
                                           for r in g.edges):
                g3 = SignedGraph(12, g.edges + [EdgeRecord(donor, target, 9, 10_000)])
                after = set(propagate_labels(g3, seeds).ids_with(BENIGN))
                assert before <= after
                checked["monotonicity"] += 1
                break

    report(all(v >= 100 for k, v in checked.items() if k != "monotonicity")
           and checked["monotonicity"] >= 100,
           "criterion 6 (invariant suites)",
           f"cases: {checked} (plus the hypothesis suites in the module tests)")


# -------------------------------------------------- labeling k-sweep check

def test_seed_count_sweep_stability(e2e):
    g = e2e["graph"]
    benign_sets = []
    for k in (5, 10, 20):
        scfg = SeedConfig(k=k)
        ls = propagate_labels(g, select_seeds(pagerank_positive(g, scfg), scfg))
        benign_sets.append(set(ls.ids_with(BENIGN)))
    assert benign_sets[0] <= benign_sets[1] <= benign_sets[2]
    print(f"[PASS] k-sweep stability: benign sets nested for k in (5, 10, 20); "
          f"sizes {[len(s) for s in benign_sets]}")


# ---------------------------------------------------- real-dataset criteria

REAL_SKIP = ("Bitcoin-Alpha CSV not present; place soc-sign-bitcoinalpha.csv "
             "under ./data or point TRUSTGNN_DATA_DIR at it "
             "(scripts/fetch_bitcoin_alpha.py downloads it)")


@pytest.mark.skipif(dataset_path() is None, reason=REAL_SKIP)
def test_criteria_3_4_5_7_real_bitcoin_alpha():
    path = dataset_path()
    g = load_edge_list(path)
    report(g.num_nodes == 3783 and g.stats.rows_read == 24186,
           "real data audit", f"N={g.num_nodes} raw rows={g.stats.rows_read}")

    scfg = SeedConfig(k=10)
    ls = propagate_labels(g, select_seeds(pagerank_positive(g, scfg), scfg))
    feats = assemble_features(g, SvdConfig(k_svd=32, iters=20, seed=1))
    tcfg = TrainConfig(split_seed=7, model_seeds=(0, 1, 2))  # published settings
    lcfg = LossConfig(link_weight=0.1)
    split = make_splits(ls, tcfg)
    test_ids = split.test_ids
    y = (ls.labels[test_ids] == FRAUD).astype(int)

    t0 = time.perf_counter()
    runs = [train_and_score(g, feats, ls, SURROGATE_MODEL, tcfg, lcfg, split, s)
            for s in tcfg.model_seeds]
    elapsed = time.perf_counter() - t0
    full = aggregate_reports("full", [r for _, _, r in runs])
    best_params = max(runs, key=lambda r: r[1].best_val_auc)[0]

    gcn_reports = []
    for seed in tcfg.model_seeds:
        _, _, bs = unsigned_gcn(g, feats, ls, SURROGATE_MODEL, tcfg, lcfg, split,
                                seed=seed)
        gcn_reports.append(evaluate_scores("gcn", bs.scores[test_ids], y))
    gcn = aggregate_reports("gcn", gcn_reports)
    low_auc = auc_roc(lowest_pct_heuristic(g).scores[test_ids], y)

    report(full.auc_roc >= 0.85 and full.macro_f1 >= 0.65
           and full.auc_roc - gcn.auc_roc >= 0.05
           and full.auc_roc - low_auc >= 0.20
           and 0.45 <= low_auc <= 0.65
           and elapsed < 600.0,
           "criteria 3+5 (real Bitcoin-Alpha)",
           f"full AUC {full.auc_roc:.3f} F1 {full.macro_f1:.3f}, gcn {gcn.auc_roc:.3f}, "
           f"lowest-5% {low_auc:.3f}, train {elapsed:.0f}s; published targets "
           f"AUC {PAPER_TARGETS['auc']} F1 {PAPER_TARGETS['f1']} advisory")

    results = run_ablation_suite(g, feats, ls, SURROGATE_MODEL, tcfg, lcfg)
    by_kind = {r.kind: r for r in results}
    full_rep = by_kind["full"].report
    ok = all(full_rep.auc_roc > by_kind[k].report.auc_roc
             and full_rep.macro_f1 > by_kind[k].report.macro_f1
             for k in ("no_negative_channel", "no_attention", "no_status_features"))
    report(ok, "criterion 4 (real Bitcoin-Alpha ablations)",
           "; ".join(f"{k}: dAUC {by_kind[k].drop_auc_pct:.1f}% dF1 "
                     f"{by_kind[k].drop_f1_pct:.1f}%" for k in by_kind))

    z = forward(best_params, SURROGATE_MODEL, g, feats, mode="eval").z_pre
    stats = class_separation(z, ls)
    report(stats.separated, "criterion 7 (real Bitcoin-Alpha separation)",
           f"inter-centroid {stats.inter_centroid:.2f} > mean intra {stats.mean_intra:.2f}")

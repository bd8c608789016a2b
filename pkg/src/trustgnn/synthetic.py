"""Synthetic web-of-trust benchmark surrogate.

Generates a signed rating graph that reproduces the adversarial structure
of real marketplace trust networks: a founder clique that anchors the
trusted community, a core that joins through strong endorsements, casual
users with only weak ratings, and fraudsters who camouflage their average
rating through accomplice rings while bad-mouthing honest users. Fraud is
identifiable primarily through who distrusts a node, not through degree or
rating averages, which is exactly the regime the detectors are compared in.

The generator emits plain edge rows compatible with the CSV loader, so the
whole pipeline (ingestion, labeling, features, training, evaluation) runs
on its output unchanged.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .graph import EdgeRecord, SignedGraph


@dataclass(frozen=True)
class SyntheticConfig:
    n_nodes: int = 1200
    n_founders: int = 6
    core_frac: float = 0.32
    fraud_frac: float = 0.08
    deep_camouflage_frac: float = 0.34  # fraction of fraud with benign-like stats
    seed: int = 0


def _pick(rng, pool, k):
    k = min(k, len(pool))
    return rng.choice(pool, size=k, replace=False)


class _EdgeBag:
    """Collects edges, silently skipping duplicate ordered pairs."""

    def __init__(self):
        self.rows = []
        self.seen = set()

    def add(self, s, t, rating):
        s, t = int(s), int(t)
        if s == t or (s, t) in self.seen or rating == 0:
            return
        self.seen.add((s, t))
        self.rows.append(EdgeRecord(s, t, int(rating), len(self.rows)))


def generate(cfg: SyntheticConfig = SyntheticConfig()):
    """Build the graph; returns (SignedGraph, ground-truth role map).

    Roles: "founder", "core", "casual", "fraud". Founders and core form
    the intended trusted community; every fraud node receives at least one
    strong negative from it.
    """
    rng = np.random.default_rng(cfg.seed)
    n = cfg.n_nodes
    n_found = cfg.n_founders
    n_core = int(cfg.core_frac * n)
    n_fraud = int(cfg.fraud_frac * n)

    founders = np.arange(n_found)
    core = np.arange(n_found, n_found + n_core)
    fraud = np.arange(n_found + n_core, n_found + n_core + n_fraud)
    casual = np.arange(n_found + n_core + n_fraud, n)
    benign = np.concatenate([founders, core])
    roles = {}
    for ids, name in ((founders, "founder"), (core, "core"),
                      (fraud, "fraud"), (casual, "casual")):
        for i in ids:
            roles[int(i)] = name

    bag = _EdgeBag()

    # founder clique: mutual strong trust
    for i in founders:
        for j in founders:
            if i != j:
                bag.add(i, j, rng.integers(8, 11))

    # core joins by strong endorsement from an already-trusted member;
    # early members accumulate endorsements, founders gather rank mass
    for pos, i in enumerate(core):
        trusted_pool = np.concatenate([founders, core[:pos]])
        for j in _pick(rng, trusted_pool, int(rng.integers(1, 4))):
            bag.add(j, i, rng.integers(5, 11))
        if rng.random() < 0.6:
            bag.add(i, rng.choice(founders), rng.integers(5, 11))
        if pos > 0 and rng.random() < 0.4:
            bag.add(i, rng.choice(core[:pos]), rng.integers(5, 11))

    # disagreements: mild negatives inside the trusted community sit just
    # below the labeling threshold, so honest nodes routinely carry
    # benign-sourced negatives that only severity can tell apart from a
    # real condemnation
    for i in core:
        if rng.random() < 0.6:
            for j in _pick(rng, benign, int(rng.integers(1, 4))):
                bag.add(j, i, -rng.integers(2, 5))

    # casual users trade weak positives among themselves and toward the
    # popular end of the network (keeps them unlabeled); a slice of them
    # also hands out enthusiastic strong ratings, benign and fraud targets
    # alike, so strong positive in-edges are not fraud-indicative
    for i in casual:
        for j in _pick(rng, benign, int(rng.integers(1, 3))):
            bag.add(j, i, rng.integers(1, 5))
        for _ in range(int(rng.integers(1, 4))):
            j = rng.choice(founders) if rng.random() < 0.4 else rng.choice(benign)
            bag.add(i, j, rng.integers(1, 5))
        if rng.random() < 0.5:
            bag.add(i, rng.choice(casual), rng.integers(1, 5))
        if rng.random() < 0.35:
            bag.add(i, rng.choice(core), rng.integers(8, 11))

    # fraudsters: condemned by the trusted community with ratings just past
    # the threshold, camouflaged by paid shills drawn from the same casual
    # population that also rates honest users, so strong positive in-edges
    # carry no class signal; outward positives keep fraud from forming an
    # absorbing cluster in the positive subgraph
    n_deep = int(cfg.deep_camouflage_frac * len(fraud))
    for pos, i in enumerate(fraud):
        deep = pos < n_deep
        if deep:
            bag.add(rng.choice(benign), i, -rng.integers(5, 8))
        else:
            for j in _pick(rng, benign, int(rng.integers(1, 4))):
                bag.add(j, i, -rng.integers(5, 10))
        # ordinary disagreements hit fraudsters too; telling these mild
        # benign-sourced negatives from the condemnations above requires
        # reading severity, not just rater identity
        for j in _pick(rng, benign, int(rng.integers(0, 3))):
            bag.add(j, i, -rng.integers(2, 5))
        for j in _pick(rng, casual, int(rng.integers(3, 7))):
            bag.add(j, i, rng.integers(8, 11))
        for j in _pick(rng, casual, int(rng.integers(1, 4))):
            bag.add(j, i, rng.integers(1, 4))
        for j in _pick(rng, np.concatenate([benign, casual]), int(rng.integers(2, 5))):
            bag.add(i, j, rng.integers(1, 6))

    # bad-mouthing: a targeted slice of the trusted core receives strong
    # negatives from fraud raters, mirroring the negative in-degree of the
    # fraudsters themselves and dragging honest averages below theirs
    victims = _pick(rng, core, max(1, int(0.15 * len(core))))
    for i in fraud:
        for j in _pick(rng, victims, int(rng.integers(1, 4))):
            bag.add(i, j, -rng.integers(5, 11))
        for j in _pick(rng, casual, int(rng.integers(1, 4))):
            bag.add(i, j, -rng.integers(3, 10))

    g = SignedGraph(n, bag.rows)
    return g, roles


def write_csv(path, cfg: SyntheticConfig = SyntheticConfig()):
    """Generate and dump as loader-compatible CSV.

    Returns the role map keyed by the ids the loader will assign (dense,
    first-occurrence order over the dumped rows).
    """
    g, roles = generate(cfg)
    g.dump_csv(path)
    remap = {}
    for r in g.edges:
        for node in (r.source, r.target):
            if node not in remap:
                remap[node] = len(remap)
    return {remap[i]: role for i, role in roles.items()}

import numpy as np
import pytest

from trustgnn.graph import EdgeRecord, SignedGraph


def random_signed_graph(rng, n_nodes=20, n_edges=60, neg_frac=0.3):
    """Random simple signed digraph; every node appears in >= 0 edges."""
    records = []
    used = set()
    tries = 0
    while len(records) < n_edges and tries < 50 * n_edges:
        tries += 1
        s, t = rng.integers(0, n_nodes, size=2)
        if s == t or (s, t) in used:
            continue
        used.add((s, t))
        mag = int(rng.integers(1, 11))
        rating = -mag if rng.random() < neg_frac else mag
        records.append(EdgeRecord(int(s), int(t), rating, len(records)))
    return SignedGraph(n_nodes, records)


@pytest.fixture
def rng():
    return np.random.default_rng(42)


def write_csv(path, rows):
    with open(path, "w") as fh:
        for r in rows:
            fh.write(",".join(str(x) for x in r) + "\n")
    return path

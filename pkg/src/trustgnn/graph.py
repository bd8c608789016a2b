"""Signed directed rating graph: ingestion, validation, adjacency access.

The graph is immutable after construction. Ratings are integers in
[-10, 10] excluding 0 and are normalized to weights in [-1, 1] by dividing
by the rating scale, so a raw rating of +5 becomes weight +0.5.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np

from .errors import EmptyGraphError, ParseError, ValidationError

logger = logging.getLogger(__name__)

POS = "+"
NEG = "-"
IN = "in"
OUT = "out"


@dataclass(frozen=True)
class EdgeRecord:
    """One rating: ``source`` rated ``target`` with ``raw_rating`` at ``timestamp``."""

    source: int
    target: int
    raw_rating: int
    timestamp: int


@dataclass(frozen=True)
class IngestConfig:
    # divisor used for weight normalization; also bounds |raw_rating|
    rating_scale: int = 10


@dataclass
class IngestStats:
    rows_read: int = 0
    self_loops_dropped: int = 0
    duplicates_collapsed: int = 0


class SignedGraph:
    """Immutable signed directed graph with sign-partitioned adjacency.

    Adjacency lists are exposed for each (sign, direction) pair and
    enumerate neighbors in ascending (neighbor id, edge index) order.
    """

    def __init__(self, num_nodes: int, records: list[EdgeRecord],
                 rating_scale: int = 10, stats: IngestStats | None = None):
        if num_nodes < 0:
            raise ValidationError("num_nodes must be nonnegative")
        for r in records:
            if not (0 <= r.source < num_nodes and 0 <= r.target < num_nodes):
                raise ValidationError(f"edge ({r.source},{r.target}) references node >= {num_nodes}")
            if r.source == r.target:
                raise ValidationError(f"self-loop ({r.source},{r.source}) not allowed")
            if r.raw_rating == 0 or abs(r.raw_rating) > rating_scale:
                raise ValidationError(f"rating {r.raw_rating} outside [-{rating_scale},{rating_scale}]\\{{0}}")
        self.num_nodes = num_nodes
        self.edges = list(records)
        self.rating_scale = rating_scale
        self.stats = stats or IngestStats()

        self.src = np.array([r.source for r in records], dtype=np.int64)
        self.tgt = np.array([r.target for r in records], dtype=np.int64)
        self.rating = np.array([r.raw_rating for r in records], dtype=np.int64)
        self.timestamp = np.array([r.timestamp for r in records], dtype=np.int64)
        self.weight = self.rating / float(rating_scale)

        self._adj = {}
        pos_mask = self.weight > 0
        for sign, mask in ((POS, pos_mask), (NEG, ~pos_mask)):
            eids = np.nonzero(mask)[0] if len(records) else np.zeros(0, dtype=np.int64)
            self._adj[(sign, IN)] = _build_csr(num_nodes, self.tgt[eids], self.src[eids], eids)
            self._adj[(sign, OUT)] = _build_csr(num_nodes, self.src[eids], self.tgt[eids], eids)
        self.num_pos = int(pos_mask.sum())
        self.num_neg = len(records) - self.num_pos

    @property
    def num_edges(self) -> int:
        return len(self.edges)

    def adjacency(self, sign: str, direction: str):
        """(indptr, neighbor ids, edge ids) CSR triple for one sign/direction."""
        _check_sign_dir(sign, direction)
        return self._adj[(sign, direction)]

    def neighbors_signed(self, node: int, sign: str, direction: str):
        """Neighbors of ``node`` along ``sign``-edges in ``direction``.

        Returns [(neighbor_id, normalized_weight), ...] in ascending
        (neighbor id, edge index) order.
        """
        if not (0 <= node < self.num_nodes):
            raise IndexError(f"node {node} out of range [0,{self.num_nodes})")
        indptr, nbr, eid = self.adjacency(sign, direction)
        lo, hi = indptr[node], indptr[node + 1]
        return [(int(nbr[i]), float(self.weight[eid[i]])) for i in range(lo, hi)]

    def degrees(self, sign: str, direction: str) -> np.ndarray:
        indptr, _, _ = self.adjacency(sign, direction)
        return np.diff(indptr)

    def positive_subgraph(self) -> "SignedGraph":
        """Same node set, positive edges only (edge order preserved)."""
        kept = [r for r in self.edges if r.raw_rating > 0]
        return SignedGraph(self.num_nodes, kept, self.rating_scale)

    def dump_csv(self, path) -> None:
        """Canonical 4-column dump; reloading yields an identical graph."""
        with open(path, "w", encoding="utf-8") as fh:
            for r in self.edges:
                fh.write(f"{r.source},{r.target},{r.raw_rating},{r.timestamp}\n")

    def audit(self) -> dict:
        return {
            "num_nodes": self.num_nodes,
            "num_edges": self.num_edges,
            "num_positive": self.num_pos,
            "num_negative": self.num_neg,
            "rows_read": self.stats.rows_read,
            "self_loops_dropped": self.stats.self_loops_dropped,
            "duplicates_collapsed": self.stats.duplicates_collapsed,
        }

    def __eq__(self, other):
        if not isinstance(other, SignedGraph):
            return NotImplemented
        return (self.num_nodes == other.num_nodes
                and self.rating_scale == other.rating_scale
                and self.edges == other.edges)

    def __repr__(self):
        return (f"SignedGraph(N={self.num_nodes}, E={self.num_edges}, "
                f"E+={self.num_pos}, E-={self.num_neg})")


def _check_sign_dir(sign, direction):
    if sign not in (POS, NEG):
        raise ValidationError(f"sign must be '+' or '-', got {sign!r}")
    if direction not in (IN, OUT):
        raise ValidationError(f"direction must be 'in' or 'out', got {direction!r}")


def _build_csr(n, key, nbr, eid):
    """CSR over nodes with entries sorted by (key, neighbor, edge id)."""
    order = np.lexsort((eid, nbr, key))
    key, nbr, eid = key[order], nbr[order], eid[order]
    counts = np.bincount(key, minlength=n) if len(key) else np.zeros(n, dtype=np.int64)
    indptr = np.concatenate([[0], np.cumsum(counts)]).astype(np.int64)
    return indptr, nbr.astype(np.int64), eid.astype(np.int64)


def load_edge_list(path, config: IngestConfig = IngestConfig()) -> SignedGraph:
    """Load a ``SOURCE,TARGET,RATING,TIME`` CSV into a SignedGraph.

    Node ids are remapped to dense 0..N-1 in first-occurrence order over
    valid non-self-loop rows. Duplicate (source, target) pairs collapse to
    the latest-timestamp record, kept at the pair's first position. Rows
    rating 0 or |rating| > scale are rejected; self-loops are dropped with
    a counted warning.
    """
    scale = config.rating_scale
    stats = IngestStats()
    id_of: dict = {}
    # pair -> (edge slot, timestamp, tie-break row number)
    slot_of_pair: dict = {}
    rows: list[EdgeRecord] = []

    with open(path, "r", encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.strip()
            if not line:
                continue
            stats.rows_read += 1
            parts = line.split(",")
            if len(parts) != 4:
                raise ParseError(f"line {lineno}: expected 4 comma-separated fields, got {len(parts)}")
            try:
                raw_s, raw_t = parts[0].strip(), parts[1].strip()
                rating = int(parts[2])
                ts = int(float(parts[3]))  # some dumps carry float timestamps
            except ValueError as exc:
                raise ParseError(f"line {lineno}: {exc}") from None
            if rating == 0 or abs(rating) > scale:
                raise ValidationError(
                    f"line {lineno}: rating {rating} outside [-{scale},{scale}] excluding 0")
            if raw_s == raw_t:
                stats.self_loops_dropped += 1
                continue
            for raw in (raw_s, raw_t):
                if raw not in id_of:
                    id_of[raw] = len(id_of)
            s, t = id_of[raw_s], id_of[raw_t]
            if (s, t) in slot_of_pair:
                slot, best_ts, best_row = slot_of_pair[(s, t)]
                stats.duplicates_collapsed += 1
                if (ts, lineno) >= (best_ts, best_row):
                    rows[slot] = EdgeRecord(s, t, rating, ts)
                    slot_of_pair[(s, t)] = (slot, ts, lineno)
            else:
                slot_of_pair[(s, t)] = (len(rows), ts, lineno)
                rows.append(EdgeRecord(s, t, rating, ts))

    if stats.rows_read == 0:
        raise EmptyGraphError(f"{path}: no rows")
    if not rows:
        raise EmptyGraphError(f"{path}: no edges survive cleaning")
    if stats.self_loops_dropped:
        logger.warning("dropped %d self-loop rows", stats.self_loops_dropped)
    return SignedGraph(len(id_of), rows, scale, stats)

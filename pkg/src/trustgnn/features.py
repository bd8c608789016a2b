"""Topological node features: signed degrees, incoming-rating moments, and
a truncated SVD of the unsigned (absolute-weight) adjacency matrix.

Columns are standardized to zero mean / unit variance after assembly;
constant columns are left at zero. All randomness is seeded.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp

from .errors import ConfigError
from .graph import SignedGraph

DEGREE_COLUMNS = ["d_in_pos", "d_in_neg", "d_out_pos", "d_out_neg"]
MOMENT_COLUMNS = ["in_mean", "in_var"]


@dataclass(frozen=True)
class SvdConfig:
    k_svd: int = 32
    iters: int = 20
    seed: int = 0

    def validate(self, n_nodes: int):
        if not (1 <= self.k_svd <= min(n_nodes, 64)):
            raise ConfigError(f"k_svd={self.k_svd} outside [1, min(N,64)] for N={n_nodes}")
        if self.iters < 2:
            raise ConfigError("iters must be >= 2")


@dataclass
class FeatureMatrix:
    data: np.ndarray                 # (N, dim) float64, standardized
    column_schema: list[str]

    @property
    def rows(self) -> int:
        return self.data.shape[0]

    @property
    def dim(self) -> int:
        return self.data.shape[1]


def signed_degree_stats(g: SignedGraph) -> np.ndarray:
    """Per-node [d_in+, d_in-, d_out+, d_out-] counts as floats."""
    cols = [g.degrees("+", "in"), g.degrees("-", "in"),
            g.degrees("+", "out"), g.degrees("-", "out")]
    return np.stack(cols, axis=1).astype(np.float64)


def rating_moments(g: SignedGraph) -> np.ndarray:
    """Mean and population variance of incoming normalized ratings.

    Nodes without in-edges get (0, 0); a single in-edge gives (w, 0).
    """
    n = g.num_nodes
    cnt = np.bincount(g.tgt, minlength=n).astype(np.float64) if g.num_edges else np.zeros(n)
    s1 = np.bincount(g.tgt, weights=g.weight, minlength=n) if g.num_edges else np.zeros(n)
    s2 = np.bincount(g.tgt, weights=g.weight ** 2, minlength=n) if g.num_edges else np.zeros(n)
    rated = cnt > 0
    mu = np.zeros(n)
    var = np.zeros(n)
    mu[rated] = s1[rated] / cnt[rated]
    var[rated] = np.maximum(s2[rated] / cnt[rated] - mu[rated] ** 2, 0.0)
    return np.stack([mu, var], axis=1)


def unsigned_adjacency(g: SignedGraph) -> sp.csr_matrix:
    """|A| with entries |w| at (source, target)."""
    n = g.num_nodes
    return sp.csr_matrix((np.abs(g.weight), (g.src, g.tgt)), shape=(n, n))


def truncated_svd(g: SignedGraph, cfg: SvdConfig) -> np.ndarray:
    """Left singular vectors of |A| scaled by singular values, via randomized
    subspace iteration.

    The column count is ``k_svd``; singular values are recoverable as column
    norms. Each column's sign is fixed so its largest-magnitude entry is
    positive, which makes the output deterministic and relabeling-equivariant.
    """
    cfg.validate(g.num_nodes)
    A = unsigned_adjacency(g)
    U, s = _subspace_svd(A, cfg.k_svd, cfg.iters, np.random.default_rng(cfg.seed))
    X = U * s
    return _fix_column_signs(X)


def _subspace_svd(A, k, iters, rng):
    """Randomized range finder + Rayleigh-Ritz on the small projected matrix.

    Oversampling keeps singular-value estimates accurate; the small
    symmetric eigenproblem is solved with eigh, independent of any dense
    SVD route.
    """
    n, m = A.shape
    p = min(2 * k + 8, min(n, m) - k)
    block = k + max(p, 0)
    omega = rng.standard_normal((m, block))
    Q, _ = np.linalg.qr(A @ omega)
    for _ in range(iters):
        Z, _ = np.linalg.qr(A.T @ Q)
        Q, _ = np.linalg.qr(A @ Z)
    B = A.T @ Q                      # (m, block), B^T = Q^T A
    C = B.T @ B                      # (block, block) symmetric PSD
    evals, evecs = np.linalg.eigh(C)
    order = np.argsort(evals)[::-1][:k]
    s = np.sqrt(np.maximum(evals[order], 0.0))
    U = Q @ evecs[:, order]
    return U, s


def _fix_column_signs(X):
    X = X.copy()
    for j in range(X.shape[1]):
        i = int(np.argmax(np.abs(X[:, j])))
        if X[i, j] < 0:
            X[:, j] = -X[:, j]
    return X


def standardize_columns(data: np.ndarray, eps: float = 1e-12) -> np.ndarray:
    """Zero mean, unit variance per column; constant columns become zero."""
    centered = data - data.mean(axis=0, keepdims=True)
    std = centered.std(axis=0)
    out = np.zeros_like(centered)
    keep = std > eps
    out[:, keep] = centered[:, keep] / std[keep]
    return out


def assemble_features(g: SignedGraph, svd_cfg: SvdConfig) -> FeatureMatrix:
    """Concatenate degrees, moments and SVD columns, then standardize."""
    blocks = [signed_degree_stats(g), rating_moments(g), truncated_svd(g, svd_cfg)]
    raw = np.concatenate(blocks, axis=1)
    schema = DEGREE_COLUMNS + MOMENT_COLUMNS + [f"svd_{j + 1}" for j in range(svd_cfg.k_svd)]
    data = standardize_columns(raw)
    if not np.all(np.isfinite(data)):
        raise ConfigError("feature matrix contains NaN/Inf")
    return FeatureMatrix(data=data, column_schema=schema)


def random_features(n_nodes: int, dim: int, seed: int) -> FeatureMatrix:
    """Seeded random replacement features (structure-blind control)."""
    rng = np.random.default_rng(seed)
    data = standardize_columns(rng.standard_normal((n_nodes, dim)))
    return FeatureMatrix(data=data, column_schema=[f"rand_{j}" for j in range(dim)])


def export_features(fm: FeatureMatrix, path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        fh.write("node_id," + ",".join(fm.column_schema) + "\n")
        for i in range(fm.rows):
            fh.write(f"{i}," + ",".join(f"{v:.10g}" for v in fm.data[i]) + "\n")

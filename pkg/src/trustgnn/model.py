"""Dual-channel signed attention network: forward pass and exact gradients.

Each layer runs two aggregators over in-edges, one per edge sign. For a
target node i with positive in-raters j (edges j -> i, weight w_ji > 0):

    e_ij   = LeakyReLU( a+ . [W+ h_i || W+ h_j || w_ji] )
    alpha  = softmax_j(e_ij)
    h_i+   = ELU( sum_j alpha_ij W+ h_j )

The negative channel is symmetric with its own W-, a- and coefficients
beta over negative in-raters. Appending the normalized edge weight to the
attention input lets the scores react to rating severity. Nodes with no
in-edges of a sign fall back to ELU(W h_i) in that channel. From layer 2
on, the input is the concatenation of both channel outputs; the final
concatenation z_i feeds a two-layer MLP ending in a sigmoid fraud score.

Backward passes are hand-written reverse-mode differentiation of exactly
this computation (softmax, ELU, LeakyReLU, dropout, concatenation and MLP
paths), verified against central finite differences in the test suite.
Forward and backward are pure functions of (params, graph, features, rng).
"""

from __future__ import annotations

import hashlib
import json
from dataclasses import asdict, dataclass, replace

import numpy as np
from scipy.special import expit

from .errors import ConfigError, NumericalFaultError, ValidationError
from .features import FeatureMatrix
from .graph import SignedGraph

ABLATION_KINDS = ("full", "no_negative_channel", "no_attention", "no_status_features")


@dataclass(frozen=True)
class ModelConfig:
    num_layers: int = 2
    hidden_dim: int = 32
    mlp_hidden: int = 32
    leaky_slope: float = 0.2
    dropout_rate: float = 0.1
    seed: int = 0
    use_negative_channel: bool = True
    use_attention: bool = True
    random_features: bool = False

    def validate(self):
        if self.num_layers < 1:
            raise ConfigError("num_layers must be >= 1")
        if self.hidden_dim < 1 or self.mlp_hidden < 1:
            raise ConfigError("hidden dims must be >= 1")
        if not (0.0 <= self.dropout_rate < 1.0):
            raise ConfigError("dropout_rate must be in [0, 1)")

    @property
    def z_dim(self) -> int:
        return self.hidden_dim * (2 if self.use_negative_channel else 1)


@dataclass
class LayerParams:
    w_pos: np.ndarray
    a_pos: np.ndarray | None
    w_neg: np.ndarray | None
    a_neg: np.ndarray | None


@dataclass
class ModelParams:
    layers: list[LayerParams]
    mlp_w1: np.ndarray
    mlp_b1: np.ndarray
    mlp_w2: np.ndarray
    mlp_b2: np.ndarray

    def named_tensors(self):
        """(name, array) pairs in a fixed schema order; skips absent tensors."""
        out = []
        for l, lp in enumerate(self.layers):
            for field in ("w_pos", "a_pos", "w_neg", "a_neg"):
                t = getattr(lp, field)
                if t is not None:
                    out.append((f"layer{l}.{field}", t))
        out += [("mlp.w1", self.mlp_w1), ("mlp.b1", self.mlp_b1),
                ("mlp.w2", self.mlp_w2), ("mlp.b2", self.mlp_b2)]
        return out

    @property
    def in_dim(self) -> int:
        return self.layers[0].w_pos.shape[0]


def zeros_like_params(params: ModelParams) -> ModelParams:
    def z(t):
        return None if t is None else np.zeros_like(t)
    return ModelParams(
        layers=[LayerParams(z(lp.w_pos), z(lp.a_pos), z(lp.w_neg), z(lp.a_neg))
                for lp in params.layers],
        mlp_w1=z(params.mlp_w1), mlp_b1=z(params.mlp_b1),
        mlp_w2=z(params.mlp_w2), mlp_b2=z(params.mlp_b2))


def copy_params(params: ModelParams) -> ModelParams:
    def c(t):
        return None if t is None else t.copy()
    return ModelParams(
        layers=[LayerParams(c(lp.w_pos), c(lp.a_pos), c(lp.w_neg), c(lp.a_neg))
                for lp in params.layers],
        mlp_w1=c(params.mlp_w1), mlp_b1=c(params.mlp_b1),
        mlp_w2=c(params.mlp_w2), mlp_b2=c(params.mlp_b2))


def count_params(params: ModelParams) -> int:
    return sum(t.size for _, t in params.named_tensors())


def _xavier(rng, fan_in, fan_out, shape):
    limit = np.sqrt(6.0 / (fan_in + fan_out))
    return rng.uniform(-limit, limit, size=shape)


def init_params(cfg: ModelConfig, in_dim: int, rng=None) -> ModelParams:
    """Xavier-uniform weight matrices and MLP, zero attention vectors."""
    cfg.validate()
    if rng is None:
        rng = np.random.default_rng(cfg.seed)
    h = cfg.hidden_dim
    layers = []
    d = in_dim
    for _ in range(cfg.num_layers):
        w_pos = _xavier(rng, d, h, (d, h))
        a_pos = np.zeros(2 * h + 1) if cfg.use_attention else None
        if cfg.use_negative_channel:
            w_neg = _xavier(rng, d, h, (d, h))
            a_neg = np.zeros(2 * h + 1) if cfg.use_attention else None
        else:
            w_neg = a_neg = None
        layers.append(LayerParams(w_pos, a_pos, w_neg, a_neg))
        d = cfg.z_dim
    mlp_w1 = _xavier(rng, cfg.z_dim, cfg.mlp_hidden, (cfg.z_dim, cfg.mlp_hidden))
    mlp_b1 = np.zeros(cfg.mlp_hidden)
    mlp_w2 = _xavier(rng, cfg.mlp_hidden, 1, (cfg.mlp_hidden,))
    mlp_b2 = np.zeros(())
    return ModelParams(layers, mlp_w1, mlp_b1, mlp_w2, mlp_b2)


class _ChannelIndex:
    """Static per-(graph, sign) edge grouping used by both passes.

    Edges are stored sorted by target (the CSR order of the graph), with
    reduceat boundaries over nonempty target groups and a source-sorted
    permutation for scatter-free gradient accumulation.
    """

    def __init__(self, g: SignedGraph, sign: str):
        indptr, src, eid = g.adjacency(sign, "in")
        counts = np.diff(indptr)
        self.has_in = counts > 0
        self.utgt = np.nonzero(self.has_in)[0]
        self.counts = counts[self.utgt]
        self.starts = indptr[self.utgt]
        self.src = src
        self.tgt_rep = np.repeat(self.utgt, self.counts)
        self.w = g.weight[eid]
        self.n_edges = len(src)
        if self.n_edges:
            self.perm_src = np.argsort(src, kind="stable")
            src_sorted = src[self.perm_src]
            self.usrc, self.src_starts = np.unique(src_sorted, return_index=True)


def _channel_index(g: SignedGraph, sign: str) -> _ChannelIndex:
    cache = getattr(g, "_channel_index_cache", None)
    if cache is None:
        cache = {}
        g._channel_index_cache = cache
    if sign not in cache:
        cache[sign] = _ChannelIndex(g, sign)
    return cache[sign]


def _leaky(x, slope):
    return np.where(x >= 0, x, slope * x)


def _leaky_grad(x, slope):
    return np.where(x >= 0, 1.0, slope)


def _elu(x):
    return np.where(x >= 0, x, np.expm1(np.minimum(x, 0.0)))


def _elu_grad(x):
    return np.where(x >= 0, 1.0, np.exp(np.minimum(x, 0.0)))


@dataclass
class _ChannelTrace:
    xw: np.ndarray
    pre: np.ndarray | None      # attention logits per edge
    alpha: np.ndarray | None    # normalized coefficients per edge
    m: np.ndarray               # pre-ELU aggregate


@dataclass
class ForwardTrace:
    """Cached activations needed for the exact backward pass."""

    cfg: ModelConfig
    graph: SignedGraph
    features: np.ndarray
    mode: str
    inputs: list[np.ndarray]
    channels: list[dict[str, _ChannelTrace]]
    z_pre: np.ndarray
    mask_scaled: np.ndarray | None
    z: np.ndarray
    mlp_pre: np.ndarray
    mlp_h: np.ndarray
    logit: np.ndarray
    y_hat: np.ndarray


def _channel_forward(H, w, a, idx: _ChannelIndex, cfg: ModelConfig):
    xw = H @ w
    m = xw.copy()                        # self-fallback for in-degree-0 nodes
    pre = alpha = None
    if idx.n_edges:
        if cfg.use_attention:
            h = cfg.hidden_dim
            f = xw @ a[:h]
            gsc = xw @ a[h:2 * h]
            pre = f[idx.tgt_rep] + gsc[idx.src] + a[-1] * idx.w
            el = _leaky(pre, cfg.leaky_slope)
            gmax = np.maximum.reduceat(el, idx.starts)
            ex = np.exp(el - np.repeat(gmax, idx.counts))
            gsum = np.add.reduceat(ex, idx.starts)
            alpha = ex / np.repeat(gsum, idx.counts)
        else:
            alpha = np.repeat(1.0 / idx.counts, idx.counts)
        msum = np.add.reduceat(alpha[:, None] * xw[idx.src], idx.starts, axis=0)
        m[idx.utgt] = msum
    return _ChannelTrace(xw=xw, pre=pre, alpha=alpha, m=m), _elu(m)


def forward(params: ModelParams, cfg: ModelConfig, graph: SignedGraph,
            features, mode: str = "eval", rng=None) -> ForwardTrace:
    """Full forward pass; returns the activation trace.

    ``mode`` is "train" or "eval"; dropout on the fused representation is
    applied only in train mode, drawn from ``rng`` (falls back to a
    generator seeded with cfg.seed).
    """
    cfg.validate()
    if mode not in ("train", "eval"):
        raise ValidationError(f"mode must be 'train' or 'eval', got {mode!r}")
    X = features.data if isinstance(features, FeatureMatrix) else np.asarray(features)
    if X.shape[0] != graph.num_nodes:
        raise ConfigError(f"features have {X.shape[0]} rows for {graph.num_nodes} nodes")
    if X.shape[1] != params.in_dim:
        raise ConfigError(f"feature dim {X.shape[1]} != layer-0 input dim {params.in_dim}")
    if len(params.layers) != cfg.num_layers:
        raise ConfigError("params/config layer count mismatch")

    signs = ["+"] + (["-"] if cfg.use_negative_channel else [])
    idx = {s: _channel_index(graph, s) for s in signs}

    H = X
    inputs = []
    channels = []
    for l, lp in enumerate(params.layers):
        inputs.append(H)
        traces = {}
        outs = []
        for s in signs:
            w = lp.w_pos if s == "+" else lp.w_neg
            a = lp.a_pos if s == "+" else lp.a_neg
            tr, hout = _channel_forward(H, w, a, idx[s], cfg)
            traces[s] = tr
            outs.append(hout)
        H = np.concatenate(outs, axis=1) if len(outs) > 1 else outs[0]
        if not np.all(np.isfinite(H)):
            raise NumericalFaultError(f"non-finite activations in layer {l}", layer=l)
        channels.append(traces)

    z_pre = H
    mask_scaled = None
    z = z_pre
    if mode == "train" and cfg.dropout_rate > 0.0:
        if rng is None:
            rng = np.random.default_rng(cfg.seed)
        keep = rng.random(z_pre.shape) >= cfg.dropout_rate
        mask_scaled = keep / (1.0 - cfg.dropout_rate)
        z = z_pre * mask_scaled

    mlp_pre = z @ params.mlp_w1 + params.mlp_b1
    mlp_h = np.maximum(mlp_pre, 0.0)
    logit = mlp_h @ params.mlp_w2 + params.mlp_b2
    y_hat = expit(logit)
    if not np.all(np.isfinite(y_hat)):
        raise NumericalFaultError("non-finite classifier output", layer=cfg.num_layers)

    return ForwardTrace(cfg=cfg, graph=graph, features=X, mode=mode, inputs=inputs,
                        channels=channels, z_pre=z_pre, mask_scaled=mask_scaled, z=z,
                        mlp_pre=mlp_pre, mlp_h=mlp_h, logit=logit, y_hat=y_hat)


@dataclass
class LossGrads:
    """Upstream gradients of the total loss at the model's two outputs."""

    d_logit: np.ndarray                 # (N,)
    d_z: np.ndarray | None = None       # (N, z_dim), from losses reading z directly


def _segsum_by_src(vals, idx: _ChannelIndex):
    """Sum per-edge values into per-source-node slots (reduceat, no scatter)."""
    v = vals[idx.perm_src]
    return idx.usrc, (np.add.reduceat(v, idx.src_starts, axis=0)
                      if v.ndim > 1 else np.add.reduceat(v, idx.src_starts))


def _channel_backward(dHout, tr: _ChannelTrace, H, w, a, idx: _ChannelIndex,
                      cfg: ModelConfig, da_out):
    dm = dHout * _elu_grad(tr.m)
    dxw = np.zeros_like(tr.xw)
    dxw[~idx.has_in] = dm[~idx.has_in]
    if idx.n_edges:
        dm_t = dm[idx.tgt_rep]
        usrc, agg = _segsum_by_src(tr.alpha[:, None] * dm_t, idx)
        dxw[usrc] += agg
        if cfg.use_attention:
            h = cfg.hidden_dim
            dalpha = np.einsum("eh,eh->e", dm_t, tr.xw[idx.src])
            s = np.add.reduceat(tr.alpha * dalpha, idx.starts)
            de = tr.alpha * (dalpha - np.repeat(s, idx.counts))
            dpre = de * _leaky_grad(tr.pre, cfg.leaky_slope)
            df = np.zeros(len(dm))
            df[idx.utgt] = np.add.reduceat(dpre, idx.starts)
            dg = np.zeros(len(dm))
            usrc2, gsum = _segsum_by_src(dpre, idx)
            dg[usrc2] = gsum
            dxw += df[:, None] * a[:h] + dg[:, None] * a[h:2 * h]
            da_out[:h] += tr.xw.T @ df
            da_out[h:2 * h] += tr.xw.T @ dg
            da_out[-1] += dpre @ idx.w
    dw = H.T @ dxw
    dH = dxw @ w.T
    return dw, dH


def backward(params: ModelParams, trace: ForwardTrace, loss_grads: LossGrads) -> ModelParams:
    """Exact reverse-mode gradients of the loss w.r.t. every parameter tensor.

    Requires a trace produced in train mode (dropout mask frozen in the
    trace). Returns a ModelParams-shaped container of gradients.
    """
    if trace.mode != "train":
        raise ValidationError("backward requires a train-mode trace")
    cfg = trace.cfg
    if len(params.layers) != cfg.num_layers or params.in_dim != trace.features.shape[1]:
        raise ConfigError("params do not match trace")
    grads = zeros_like_params(params)
    signs = ["+"] + (["-"] if cfg.use_negative_channel else [])
    idx = {s: _channel_index(trace.graph, s) for s in signs}
    h = cfg.hidden_dim

    d_logit = np.asarray(loss_grads.d_logit, dtype=np.float64)
    grads.mlp_b2 += d_logit.sum()
    grads.mlp_w2 += trace.mlp_h.T @ d_logit
    dmlp_h = d_logit[:, None] * params.mlp_w2[None, :]
    dmlp_pre = dmlp_h * (trace.mlp_pre > 0)
    grads.mlp_b1 += dmlp_pre.sum(axis=0)
    grads.mlp_w1 += trace.z.T @ dmlp_pre
    dz = dmlp_pre @ params.mlp_w1.T
    if loss_grads.d_z is not None:
        dz = dz + loss_grads.d_z
    if trace.mask_scaled is not None:
        dz = dz * trace.mask_scaled

    dparts = [dz[:, :h], dz[:, h:]] if cfg.use_negative_channel else [dz]
    for l in range(cfg.num_layers - 1, -1, -1):
        lp = params.layers[l]
        gl = grads.layers[l]
        H = trace.inputs[l]
        dH_in = np.zeros_like(H)
        for si, s in enumerate(signs):
            w = lp.w_pos if s == "+" else lp.w_neg
            a = lp.a_pos if s == "+" else lp.a_neg
            da = gl.a_pos if s == "+" else gl.a_neg
            dw, dH = _channel_backward(dparts[si], trace.channels[l][s], H, w, a,
                                       idx[s], cfg, da if a is not None else np.zeros(1))
            if s == "+":
                gl.w_pos += dw
            else:
                gl.w_neg += dw
            dH_in += dH
        if l > 0:
            dparts = ([dH_in[:, :h], dH_in[:, h:]] if cfg.use_negative_channel
                      else [dH_in])
    return grads


def ablation_variant(cfg: ModelConfig, kind: str) -> ModelConfig:
    """Wiring for the component-removal studies."""
    if kind == "full":
        return replace(cfg)
    if kind == "no_negative_channel":
        return replace(cfg, use_negative_channel=False)
    if kind == "no_attention":
        return replace(cfg, use_attention=False)
    if kind == "no_status_features":
        return replace(cfg, random_features=True)
    raise ConfigError(f"unknown ablation kind {kind!r}; expected one of {ABLATION_KINDS}")


CHECKPOINT_VERSION = 1


def _params_checksum(params: ModelParams) -> str:
    hasher = hashlib.sha256()
    for name, t in params.named_tensors():
        hasher.update(name.encode())
        hasher.update(np.ascontiguousarray(t, dtype=np.float64).tobytes())
    return hasher.hexdigest()


def save_checkpoint(path, cfg: ModelConfig, params: ModelParams) -> None:
    """Structured-text checkpoint: config, tensors in schema order, checksum."""
    doc = {
        "format_version": CHECKPOINT_VERSION,
        "config": asdict(cfg),
        "in_dim": params.in_dim,
        "tensors": [{"name": name, "shape": list(t.shape), "data": t.ravel().tolist()}
                    for name, t in params.named_tensors()],
        "checksum": _params_checksum(params),
    }
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(doc, fh)


def load_checkpoint(path, expected_config: ModelConfig | None = None):
    """Load (config, params); rejects bad checksums and config mismatches."""
    with open(path, "r", encoding="utf-8") as fh:
        doc = json.load(fh)
    if doc.get("format_version") != CHECKPOINT_VERSION:
        raise ValidationError(f"unsupported checkpoint version {doc.get('format_version')}")
    try:
        cfg = ModelConfig(**doc["config"])
    except TypeError as exc:
        raise ConfigError(f"bad checkpoint config: {exc}") from None
    if expected_config is not None and cfg != expected_config:
        raise ConfigError("checkpoint config does not match expected config")
    tensors = {t["name"]: np.array(t["data"], dtype=np.float64).reshape(t["shape"])
               for t in doc["tensors"]}
    params = init_params(cfg, doc["in_dim"])
    for name, t in params.named_tensors():
        if name not in tensors:
            raise ValidationError(f"checkpoint missing tensor {name}")
        if tensors[name].shape != t.shape:
            raise ConfigError(f"tensor {name} shape {tensors[name].shape} != {t.shape}")
        t[...] = tensors[name]
    if _params_checksum(params) != doc["checksum"]:
        raise ValidationError("checkpoint checksum mismatch")
    return cfg, params

"""Risk-aware node embeddings from the same three-encoder architecture.

The embedder shares the classifier's encoders and attention fusion but
optimizes a multi-objective loss:

  w1 * risk regression   -- MSE of a linear head against normalized
                           historical frequencies of the four risk drivers,
  w2 * topological term  -- 1 - mean cosine similarity over connected pairs,
  w3 * separation term   -- soft-assignment self-training (sharpened targets)
                           plus an entropy penalty that keeps cluster usage
                           balanced.

Training runs up to 200 epochs under AdamW with a triangular cyclical
learning rate and early stopping on the monitored loss. Output rows are
L2-normalized.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .. import diffkernel as dk
from ..diffkernel import Tensor
from ..gnn import (
    AdamW,
    EncoderConfig,
    MultilayerClassifier,
    TrainConfig,
    attention_fusion,
    clip_global_norm,
    prepare_layers,
)
from ..graphbuild import RISK_CATEGORIES, MultilayerGraph, classify_cause
from ..ingest import CleanDataset
from ..util import NumericError


@dataclass
class EmbedConfig:
    w_risk: float = 1.0
    w_topo: float = 0.5
    w_cluster: float = 0.1
    n_soft_clusters: int = 8
    epochs: int = 200
    lr_low: float = 1e-4
    lr_high: float = 1e-3
    cycle_epochs: int = 20
    clip_norm: float = 1.0
    weight_decay: float = 1e-5
    early_stop_patience: int = 40
    seed: int = 0
    encoder: EncoderConfig = field(default_factory=lambda: EncoderConfig(dropout_rate=0.1))


def risk_targets(clean: CleanDataset) -> np.ndarray:
    """Per-substation historical frequencies of the risk drivers, max-scaled per column."""
    index = {s.id: k for k, s in enumerate(clean.substations)}
    counts = np.zeros((len(clean.substations), len(RISK_CATEGORIES)))
    for inc in clean.incidents:
        cat = classify_cause(inc.cause)
        if cat is not None:
            counts[index[inc.substation], RISK_CATEGORIES.index(cat)] += 1
    peak = counts.max(axis=0)
    peak[peak == 0] = 1.0
    return counts / peak


def cyclical_lr(epoch: int, cfg: EmbedConfig) -> float:
    """Triangular wave between lr_low and lr_high with the configured period."""
    phase = (epoch % cfg.cycle_epochs) / cfg.cycle_epochs
    tri = 1.0 - abs(2.0 * phase - 1.0)
    return cfg.lr_low + (cfg.lr_high - cfg.lr_low) * tri


def _connected_pairs(graph: MultilayerGraph) -> tuple[np.ndarray, np.ndarray]:
    pairs = {(min(e.u, e.v), max(e.u, e.v)) for e in graph.spatial}
    pairs |= {(min(e.u, e.v), max(e.u, e.v)) for e in graph.temporal}
    pairs |= {(min(e.u, e.v), max(e.u, e.v)) for e in graph.causal}
    pairs = sorted(p for p in pairs if p[0] != p[1])
    if not pairs:
        return np.zeros(0, dtype=np.int64), np.zeros(0, dtype=np.int64)
    us, vs = zip(*pairs)
    return np.array(us, dtype=np.int64), np.array(vs, dtype=np.int64)


class RiskEmbedder:
    """Encoders + fusion + risk/cluster heads producing unit-norm embeddings."""

    def __init__(self, in_dim: int, cfg: EmbedConfig, layer_attr_dims: dict[str, int]):
        self.cfg = cfg
        rng = np.random.default_rng(cfg.seed)
        backbone_cfg = TrainConfig(seed=cfg.seed, encoder=cfg.encoder)
        self.backbone = MultilayerClassifier(in_dim, backbone_cfg, layer_attr_dims,
                                             rng=rng)
        d = cfg.encoder.hidden_dim
        from ..gnn import glorot, zeros_param
        self.params = self.backbone.params
        self.params["risk.W"] = glorot(rng, d, len(RISK_CATEGORIES))
        self.params["risk.b"] = zeros_param((1, len(RISK_CATEGORIES)))
        self.params["soft.W"] = glorot(rng, d, cfg.n_soft_clusters)
        self.params["soft.b"] = zeros_param((1, cfg.n_soft_clusters))

    def embed_tensor(self, features: np.ndarray, layers, masks=None) -> Tensor:
        embeddings = self.backbone.encode(features, layers, masks)
        fused, _ = attention_fusion(embeddings, self.params,
                                    self.backbone.cfg.fusion_heads,
                                    self.cfg.encoder.hidden_dim)
        return dk.elu(fused @ self.params["phi.W"] + self.params["phi.b"])

    def losses(self, emb: Tensor, targets: np.ndarray,
               pair_u: np.ndarray, pair_v: np.ndarray) -> dict[str, Tensor]:
        cfg = self.cfg
        out: dict[str, Tensor] = {}

        pred = emb @ self.params["risk.W"] + self.params["risk.b"]
        diff = pred - Tensor(targets)
        out["risk"] = dk.tmean(diff * diff)

        if cfg.w_topo > 0 and len(pair_u):
            eu = dk.gather_rows(emb, pair_u)
            ev = dk.gather_rows(emb, pair_v)
            dot = dk.tsum(eu * ev, axis=1, keepdims=True)
            nu = (dk.tsum(eu * eu, axis=1, keepdims=True) + Tensor(1e-12)) ** 0.5
            nv = (dk.tsum(ev * ev, axis=1, keepdims=True) + Tensor(1e-12)) ** 0.5
            cos = dot / (nu * nv)
            out["topo"] = Tensor(1.0) - dk.tmean(cos)
        else:
            out["topo"] = Tensor(0.0)

        if cfg.w_cluster > 0:
            logits = emb @ self.params["soft.W"] + self.params["soft.b"]
            q = dk.softmax(logits, axis=1)
            qv = q.values
            sharpened = (qv ** 2) / np.maximum(qv.sum(axis=0, keepdims=True), 1e-12)
            p = sharpened / sharpened.sum(axis=1, keepdims=True)
            log_q = dk.log_softmax(logits, axis=1)
            kl = dk.tmean(dk.tsum(Tensor(p * np.log(np.maximum(p, 1e-12))) - Tensor(p) * log_q,
                                  axis=1))
            usage = dk.tmean(q, axis=0)
            balance = dk.tsum(usage * dk.log(usage + Tensor(1e-12))) + Tensor(
                math.log(cfg.n_soft_clusters))
            out["cluster"] = kl + balance
        else:
            out["cluster"] = Tensor(0.0)

        out["total"] = (Tensor(cfg.w_risk) * out["risk"]
                        + Tensor(cfg.w_topo) * out["topo"]
                        + Tensor(cfg.w_cluster) * out["cluster"])
        return out


def train_risk_embedder(graph: MultilayerGraph, targets: np.ndarray,
                        cfg: EmbedConfig | None = None,
                        features: np.ndarray | None = None
                        ) -> tuple[np.ndarray, list[dict], RiskEmbedder]:
    """Optimize the embedder; returns (unit-norm embeddings, history, model)."""
    cfg = cfg or EmbedConfig()
    layers = prepare_layers(graph)
    attr_dims = {m: layers[m].attr.shape[1] for m in layers}
    X = features if features is not None else graph.nodes.standardized
    targets = np.asarray(targets, dtype=float)
    if targets.shape[0] != X.shape[0]:
        raise ValueError("risk targets do not match the node count")

    model = RiskEmbedder(X.shape[1], cfg, attr_dims)
    pair_u, pair_v = _connected_pairs(graph)
    optimizer = AdamW(model.params, cfg.lr_low, cfg.weight_decay)
    rng = np.random.default_rng(cfg.seed + 1)

    best = math.inf
    best_snap = model.backbone.snapshot()
    bad = 0
    history: list[dict] = []
    for epoch in range(cfg.epochs):
        optimizer.lr = cyclical_lr(epoch, cfg)
        masks = model.backbone.make_dropout_masks(X.shape[0], rng)
        model.backbone.zero_grad()
        try:
            emb = model.embed_tensor(X, layers, masks)
            losses = model.losses(emb, targets, pair_u, pair_v)
            losses["total"].backward()
            clip_global_norm(model.params, cfg.clip_norm)
            optimizer.step()
        except NumericError as exc:
            raise RuntimeError(f"embedder diverged at epoch {epoch}: {exc}") from exc
        record = {k: float(v.values) for k, v in losses.items()}
        record["epoch"] = epoch
        record["lr"] = optimizer.lr
        history.append(record)
        if record["total"] < best - 1e-9:
            best = record["total"]
            best_snap = model.backbone.snapshot()
            bad = 0
        else:
            bad += 1
            if bad >= cfg.early_stop_patience:
                break
    model.backbone.restore(best_snap)

    emb = model.embed_tensor(X, layers, None).values
    norms = np.linalg.norm(emb, axis=1, keepdims=True)
    norms[norms == 0] = 1.0
    return emb / norms, history, model

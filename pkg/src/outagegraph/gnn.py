"""Three-encoder fused GNN for the maintenance classification task.

Spatial and temporal layers use attention message passing where the score
is computed after the nonlinearity over [h_dst || h_src || edge_attr]
(GATv2-style); the causal layer uses sum aggregation with a learnable
(1+eps) self-weight followed by a perceptron (GIN-style). Per-modality
embeddings are combined by multi-head attention over the three modality
tokens, so every node carries normalized modality coefficients that sum
to one. Training minimizes focal loss under AdamW with decoupled weight
decay, global gradient-norm clipping, plateau-driven learning-rate decay,
and early stopping with best-snapshot restore.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, asdict
from typing import Sequence

import numpy as np

from . import diffkernel as dk
from .diffkernel import Tensor
from .graphbuild import MultilayerGraph
from .util import NumericError

MODALITIES = ("spatial", "temporal", "causal")


class TrainingError(RuntimeError):
    """Raised when training hits a non-finite loss; carries the last good epoch."""

    def __init__(self, message: str, history: list[dict]):
        super().__init__(message)
        self.history = history


@dataclass
class EncoderConfig:
    hidden_dim: int = 64
    heads: int = 4
    layers_per_encoder: int = 2  # two stacked message-passing layers
    dropout_rate: float = 0.3
    leaky_slope: float = 0.2
    gin_epsilon_init: float = 0.0

    def __post_init__(self):
        if self.layers_per_encoder != 2:
            raise ValueError("encoders are two stacked layers by contract")
        if self.hidden_dim % self.heads:
            raise ValueError("hidden_dim must be divisible by heads")


@dataclass
class TrainConfig:
    lr: float = 1e-3
    weight_decay: float = 1e-5
    clip_norm: float = 1.0
    focal_alpha: float = 0.75
    focal_gamma: float = 2.0
    max_epochs: int = 100
    patience: int = 10            # epochs without val improvement before LR decay
    plateau_factor: float = 0.5
    early_stop_patience: int = 25
    fusion_heads: int = 4
    val_fraction: float = 0.2
    seed: int = 0
    encoder: EncoderConfig = field(default_factory=EncoderConfig)

    def to_dict(self) -> dict:
        return asdict(self)


@dataclass
class LayerData:
    """One edge layer prepared for message passing (src -> dst)."""

    src: np.ndarray
    dst: np.ndarray
    attr: np.ndarray     # (E, A) attention-side edge attributes
    weight: np.ndarray   # (E,) scalar message weights (GIN)


def prepare_layers(graph: MultilayerGraph) -> dict[str, LayerData]:
    """Edge arrays per modality; undirected layers are expanded both ways."""
    sp_src, sp_dst, sp_attr = [], [], []
    for e in graph.spatial:
        a = [e.weight, float(e.has_line), float(e.is_nearby),
             math.log1p(e.distance_km), float(e.shared_cities), float(e.shared_feeders)]
        for s, d in ((e.u, e.v), (e.v, e.u)):
            sp_src.append(s)
            sp_dst.append(d)
            sp_attr.append(a)

    tm_src = [e.u for e in graph.temporal]
    tm_dst = [e.v for e in graph.temporal]
    tm_attr = [[e.weight, math.log1p(e.cooccurrence_count)] for e in graph.temporal]

    max_z = max((e.z_score for e in graph.causal), default=1.0)
    max_z = max(max_z, 1e-9)
    ca_src, ca_dst, ca_w = [], [], []
    for e in graph.causal:
        w = max(e.z_score, 0.0) / max_z if max_z > 0 else 1.0
        w = min(max(w, 1e-3), 1.0)
        for s, d in ((e.u, e.v), (e.v, e.u)):
            ca_src.append(s)
            ca_dst.append(d)
            ca_w.append(w)

    def pack(src, dst, attr, weight=None) -> LayerData:
        n = len(src)
        return LayerData(
            src=np.array(src, dtype=np.int64).reshape(n),
            dst=np.array(dst, dtype=np.int64).reshape(n),
            attr=np.array(attr, dtype=float).reshape(n, -1) if attr else np.zeros((n, 1)),
            weight=np.array(weight, dtype=float) if weight is not None else np.ones(n))

    return {
        "spatial": pack(sp_src, sp_dst, sp_attr),
        "temporal": pack(tm_src, tm_dst, tm_attr),
        "causal": pack(ca_src, ca_dst, None, ca_w),
    }


# ---------------------------------------------------------------------------
# Parameter initialization
# ---------------------------------------------------------------------------

def glorot(rng: np.random.Generator, fan_in: int, fan_out: int,
           shape: tuple[int, ...] | None = None) -> Tensor:
    bound = math.sqrt(6.0 / (fan_in + fan_out))
    shape = shape or (fan_in, fan_out)
    return Tensor(rng.uniform(-bound, bound, size=shape), requires_grad=True)


def zeros_param(shape: tuple[int, ...]) -> Tensor:
    return Tensor(np.zeros(shape), requires_grad=True)


def ones_param(shape: tuple[int, ...]) -> Tensor:
    return Tensor(np.ones(shape), requires_grad=True)


# ---------------------------------------------------------------------------
# Message-passing layers
# ---------------------------------------------------------------------------

def gatv2_layer(h: Tensor, layer: LayerData, params: dict[str, Tensor],
                prefix: str, heads: int, slope: float, n_nodes: int,
                add_self_loops: bool = True, return_attention: bool = False):
    """Attention message passing; score after the nonlinearity (GATv2 form).

    Per edge (src -> dst): e = a^T leaky_relu(W [h_dst || h_src || attr]);
    attention normalizes over each destination's incoming edges; messages are
    value-projected source features. Heads concatenate.
    """
    src, dst, attr = layer.src, layer.dst, layer.attr
    if add_self_loops:
        loop = np.arange(n_nodes, dtype=np.int64)
        src = np.concatenate([src, loop])
        dst = np.concatenate([dst, loop])
        self_attr = np.zeros((n_nodes, attr.shape[1]))
        self_attr[:, 0] = 1.0  # weight slot: a self-connection is a sure link
        attr = np.concatenate([attr, self_attr], axis=0)
    elif len(src) == 0 or len(np.unique(dst)) < n_nodes:
        raise ValueError("nodes without incoming edges require self-loops")

    h_src = dk.gather_rows(h, src)
    h_dst = dk.gather_rows(h, dst)
    edge_in = dk.concat([h_dst, h_src, Tensor(attr)], axis=1)

    outs = []
    attentions = []
    for head in range(heads):
        z = dk.leaky_relu(edge_in @ params[f"{prefix}.W{head}"], slope)
        scores = z @ params[f"{prefix}.a{head}"]
        alpha = dk.segment_softmax(scores, dst, n_nodes)
        attentions.append(alpha.values.copy())
        msg = alpha * (h_src @ params[f"{prefix}.Wv{head}"])
        outs.append(dk.segment_sum(msg, dst, n_nodes))
    out = dk.concat(outs, axis=1)
    if return_attention:
        return out, (dst, attentions)
    return out


def gin_layer(h: Tensor, layer: LayerData, params: dict[str, Tensor],
              prefix: str, n_nodes: int) -> Tensor:
    """Sum aggregation with learnable self-weight: MLP((1+eps) h + sum w_ij h_j)."""
    if len(layer.src):
        msg = dk.gather_rows(h, layer.src) * Tensor(layer.weight.reshape(-1, 1))
        agg = dk.segment_sum(msg, layer.dst, n_nodes)
        pre = (Tensor(1.0) + params[f"{prefix}.eps"]) * h + agg
    else:
        pre = (Tensor(1.0) + params[f"{prefix}.eps"]) * h
    hidden = dk.elu(pre @ params[f"{prefix}.W1"] + params[f"{prefix}.b1"])
    return hidden @ params[f"{prefix}.W2"] + params[f"{prefix}.b2"]


def attention_fusion(embeddings: dict[str, Tensor], params: dict[str, Tensor],
                     heads: int, dim: int) -> tuple[Tensor, np.ndarray]:
    """Attention over the three modality tokens; coefficients sum to 1 per node.

    Each head projects every modality embedding to a key and scores it
    against a learned query; softmax over the modalities yields per-head
    coefficients which are averaged across heads.
    """
    names = [m for m in MODALITIES if m in embeddings]
    dk_head = max(dim // heads, 1)
    per_head = []
    for head in range(heads):
        scores = []
        for m in names:
            key = embeddings[m] @ params[f"fusion.Wk{head}"]
            scores.append((key @ params[f"fusion.q{head}"]) * Tensor(1.0 / math.sqrt(dk_head)))
        per_head.append(dk.softmax(dk.concat(scores, axis=1), axis=1))
    stacked = per_head[0]
    for t in per_head[1:]:
        stacked = stacked + t
    alphas = stacked * Tensor(1.0 / heads)  # (n, n_modalities)

    scaled = [embeddings[m] * alphas[:, i:i + 1] for i, m in enumerate(names)]
    fused = dk.concat(scaled, axis=1)
    return fused, alphas.values.copy()


def focal_loss(log_probs: Tensor, targets: np.ndarray, alpha: float = 0.75,
               gamma: float = 2.0) -> Tensor:
    """Mean of -alpha (1 - p_t)^gamma log p_t over the given nodes."""
    idx = (np.arange(len(targets)), np.asarray(targets, dtype=np.int64))
    log_pt = log_probs[idx]
    pt = dk.exp(log_pt)
    mod = (Tensor(1.0) - pt) ** gamma if gamma != 0 else Tensor(np.ones(len(targets)))
    return dk.tmean(Tensor(-alpha) * mod * log_pt)


# ---------------------------------------------------------------------------
# Full model
# ---------------------------------------------------------------------------

class MultilayerClassifier:
    """Per-layer encoders, attention fusion, and a two-class log-softmax head.

    ``modalities`` restricts the model to a subset of edge layers; a single
    modality bypasses fusion entirely (identity over the lone embedding), so
    encoder parameter counts never depend on which layers are present.
    """

    def __init__(self, in_dim: int, cfg: TrainConfig, layer_attr_dims: dict[str, int],
                 modalities: Sequence[str] = MODALITIES, rng: np.random.Generator | None = None):
        rng = rng or np.random.default_rng(cfg.seed)
        enc = cfg.encoder
        self.cfg = cfg
        self.in_dim = in_dim
        self.modalities = tuple(modalities)
        self.params: dict[str, Tensor] = {}
        d = enc.hidden_dim
        dh = d // enc.heads

        for m in self.modalities:
            if m == "causal":
                for li, d_in in enumerate((in_dim, d)):
                    p = f"{m}{li}"
                    self.params[f"{p}.eps"] = Tensor(np.array(enc.gin_epsilon_init),
                                                     requires_grad=True)
                    self.params[f"{p}.W1"] = glorot(rng, d_in, d)
                    self.params[f"{p}.b1"] = zeros_param((1, d))
                    self.params[f"{p}.W2"] = glorot(rng, d, d)
                    self.params[f"{p}.b2"] = zeros_param((1, d))
                    self._norm_params(p, d)
            else:
                a_dim = layer_attr_dims[m]
                for li, d_in in enumerate((in_dim, d)):
                    p = f"{m}{li}"
                    for head in range(enc.heads):
                        self.params[f"{p}.W{head}"] = glorot(rng, 2 * d_in + a_dim, dh)
                        self.params[f"{p}.a{head}"] = glorot(rng, dh, 1)
                        self.params[f"{p}.Wv{head}"] = glorot(rng, d_in, dh)
                    self._norm_params(p, d)

        fused_dim = d * len(self.modalities)
        if len(self.modalities) > 1:
            dk_head = max(d // cfg.fusion_heads, 1)
            for head in range(cfg.fusion_heads):
                self.params[f"fusion.Wk{head}"] = glorot(rng, d, dk_head)
                self.params[f"fusion.q{head}"] = glorot(rng, dk_head, 1)
        self.params["phi.W"] = glorot(rng, fused_dim, d)
        self.params["phi.b"] = zeros_param((1, d))
        self.params["head.W"] = glorot(rng, d, 2)
        self.params["head.b"] = zeros_param((1, 2))

    def _norm_params(self, prefix: str, d: int) -> None:
        self.params[f"{prefix}.gamma"] = ones_param((1, d))
        self.params[f"{prefix}.beta"] = zeros_param((1, d))

    def make_dropout_masks(self, n_nodes: int, rng: np.random.Generator) -> dict[str, np.ndarray]:
        rate = self.cfg.encoder.dropout_rate
        masks = {}
        for m in self.modalities:
            for li in range(2):
                masks[f"{m}{li}"] = (rng.random((n_nodes, self.cfg.encoder.hidden_dim))
                                     >= rate).astype(float)
        return masks

    def encode(self, features: np.ndarray, layers: dict[str, LayerData],
               dropout_masks: dict[str, np.ndarray] | None = None) -> dict[str, Tensor]:
        enc = self.cfg.encoder
        n = features.shape[0]
        x = Tensor(features)
        out: dict[str, Tensor] = {}
        for m in self.modalities:
            h = x
            for li in range(2):
                p = f"{m}{li}"
                if m == "causal":
                    h = gin_layer(h, layers[m], self.params, p, n)
                else:
                    h = gatv2_layer(h, layers[m], self.params, p, enc.heads,
                                    enc.leaky_slope, n)
                h = dk.affine_norm(h, self.params[f"{p}.gamma"], self.params[f"{p}.beta"])
                h = dk.elu(h)
                if dropout_masks is not None:
                    h = dk.dropout(h, dropout_masks[p], enc.dropout_rate)
            out[m] = h
        return out

    def forward(self, features: np.ndarray, layers: dict[str, LayerData],
                dropout_masks: dict[str, np.ndarray] | None = None
                ) -> tuple[Tensor, np.ndarray | None]:
        """Log-probabilities (n, 2) and fusion coefficients (n, n_modalities)."""
        embeddings = self.encode(features, layers, dropout_masks)
        if len(self.modalities) > 1:
            fused, alphas = attention_fusion(embeddings, self.params,
                                             self.cfg.fusion_heads, self.cfg.encoder.hidden_dim)
        else:
            fused, alphas = embeddings[self.modalities[0]], None
        hidden = dk.elu(fused @ self.params["phi.W"] + self.params["phi.b"])
        logits = hidden @ self.params["head.W"] + self.params["head.b"]
        return dk.log_softmax(logits, axis=1), alphas

    def snapshot(self) -> dict[str, np.ndarray]:
        return {k: v.values.copy() for k, v in self.params.items()}

    def restore(self, snap: dict[str, np.ndarray]) -> None:
        for k, v in snap.items():
            self.params[k].values = v.copy()

    def zero_grad(self) -> None:
        for p in self.params.values():
            p.grad = None


# ---------------------------------------------------------------------------
# Optimizer
# ---------------------------------------------------------------------------

class AdamW:
    """Adam moments with decoupled weight decay."""

    def __init__(self, params: dict[str, Tensor], lr: float, weight_decay: float,
                 betas: tuple[float, float] = (0.9, 0.999), eps: float = 1e-8):
        self.params = params
        self.lr = lr
        self.weight_decay = weight_decay
        self.betas = betas
        self.eps = eps
        self.t = 0
        self.m = {k: np.zeros_like(p.values) for k, p in params.items()}
        self.v = {k: np.zeros_like(p.values) for k, p in params.items()}

    def step(self) -> None:
        b1, b2 = self.betas
        self.t += 1
        for k, p in self.params.items():
            g = p.grad
            if g is None:
                continue
            self.m[k] = b1 * self.m[k] + (1 - b1) * g
            self.v[k] = b2 * self.v[k] + (1 - b2) * g * g
            m_hat = self.m[k] / (1 - b1 ** self.t)
            v_hat = self.v[k] / (1 - b2 ** self.t)
            p.values = (p.values - self.lr * m_hat / (np.sqrt(v_hat) + self.eps)
                        - self.lr * self.weight_decay * p.values)


def clip_global_norm(params: dict[str, Tensor], clip: float) -> float:
    """Scale all gradients so the global L2 norm is at most ``clip``."""
    total = 0.0
    for p in params.values():
        if p.grad is not None:
            total += float(np.sum(p.grad ** 2))
    norm = math.sqrt(total)
    if norm > clip > 0:
        scale = clip / norm
        for p in params.values():
            if p.grad is not None:
                p.grad *= scale
    return norm


# ---------------------------------------------------------------------------
# Folds and metrics
# ---------------------------------------------------------------------------

def stratified_folds(y: np.ndarray, k: int, rng: np.random.Generator) -> list[np.ndarray]:
    """Deal shuffled positives and negatives round-robin into k test folds."""
    y = np.asarray(y)
    folds: list[list[int]] = [[] for _ in range(k)]
    for cls in (1, 0):
        idx = np.flatnonzero(y == cls)
        idx = idx[rng.permutation(len(idx))]
        for j, node in enumerate(idx):
            folds[j % k].append(int(node))
    return [np.array(sorted(f), dtype=np.int64) for f in folds]


def evaluate_classifier(predictions: np.ndarray, targets: np.ndarray) -> dict:
    """Accuracy/precision/recall/F1 with explicit zero-division flags."""
    predictions = np.asarray(predictions)
    targets = np.asarray(targets)
    if len(targets) == 0:
        raise ValueError("empty evaluation set")
    tp = int(np.sum((predictions == 1) & (targets == 1)))
    fp = int(np.sum((predictions == 1) & (targets == 0)))
    fn = int(np.sum((predictions == 0) & (targets == 1)))
    tn = int(np.sum((predictions == 0) & (targets == 0)))
    flags = []
    if tp + fp == 0:
        precision = 0.0
        flags.append("no_positive_predictions")
    else:
        precision = tp / (tp + fp)
    if tp + fn == 0:
        recall = 0.0
        flags.append("no_positive_targets")
    else:
        recall = tp / (tp + fn)
    f1 = 0.0 if precision + recall == 0 else 2 * precision * recall / (precision + recall)
    return {"accuracy": (tp + tn) / len(targets), "precision": precision,
            "recall": recall, "f1": f1,
            "confusion": {"tp": tp, "fp": fp, "fn": fn, "tn": tn},
            "flags": flags}


# ---------------------------------------------------------------------------
# Training
# ---------------------------------------------------------------------------

@dataclass
class ModelState:
    """Everything needed to reconstruct a trained model at its best epoch."""

    parameters: dict[str, np.ndarray]
    first_moments: dict[str, np.ndarray]
    second_moments: dict[str, np.ndarray]
    epoch: int
    best_val_loss: float


@dataclass
class FoldResult:
    fold: int
    metrics: dict
    history: list[dict]
    best_val_loss: float
    snapshot: dict[str, np.ndarray]
    alphas: np.ndarray | None
    state: ModelState | None = None


def train_single(model: MultilayerClassifier, features: np.ndarray,
                 layers: dict[str, LayerData], y: np.ndarray,
                 train_idx: np.ndarray, val_idx: np.ndarray,
                 rng: np.random.Generator) -> tuple[list[dict], float, dict[str, np.ndarray]]:
    """One optimization run; returns (history, best val loss, best snapshot)."""
    cfg = model.cfg
    optimizer = AdamW(model.params, cfg.lr, cfg.weight_decay)
    best_val = math.inf
    best_snap = model.snapshot()
    bad = 0
    history: list[dict] = []
    for epoch in range(cfg.max_epochs):
        masks = model.make_dropout_masks(features.shape[0], rng)
        model.zero_grad()
        try:
            log_probs, _ = model.forward(features, layers, masks)
            loss = focal_loss(dk.gather_rows(log_probs, train_idx), y[train_idx],
                              cfg.focal_alpha, cfg.focal_gamma)
            loss.backward()
            clip_global_norm(model.params, cfg.clip_norm)
            optimizer.step()
            val_logp, _ = model.forward(features, layers, None)
            val_loss = float(focal_loss(dk.gather_rows(val_logp, val_idx), y[val_idx],
                                        cfg.focal_alpha, cfg.focal_gamma).values)
        except NumericError as exc:
            raise TrainingError(f"non-finite value at epoch {epoch}: {exc}", history) from exc
        history.append({"epoch": epoch, "train_loss": float(loss.values),
                        "val_loss": val_loss, "lr": optimizer.lr})
        if val_loss < best_val - 1e-9:
            best_val = val_loss
            best_snap = model.snapshot()
            bad = 0
        else:
            bad += 1
            if bad % cfg.patience == 0:
                optimizer.lr *= cfg.plateau_factor
            if bad >= cfg.early_stop_patience:
                break
    model.restore(best_snap)
    model.last_state = ModelState(
        parameters={k: v.copy() for k, v in best_snap.items()},
        first_moments={k: v.copy() for k, v in optimizer.m.items()},
        second_moments={k: v.copy() for k, v in optimizer.v.items()},
        epoch=len(history), best_val_loss=best_val)
    return history, best_val, best_snap


def train_classifier(graph: MultilayerGraph, y: np.ndarray, cfg: TrainConfig,
                     k_folds: int = 3, modalities: Sequence[str] = MODALITIES,
                     features: np.ndarray | None = None,
                     folds: list[np.ndarray] | None = None) -> list[FoldResult]:
    """Stratified k-fold training; features re-standardized per training fold."""
    from .graphbuild import standardize_with_mask

    y = np.asarray(y, dtype=np.int64)
    layers = prepare_layers(graph)
    attr_dims = {m: layers[m].attr.shape[1] for m in MODALITIES}
    rng = np.random.default_rng(cfg.seed)
    if folds is None:
        folds = stratified_folds(y, k_folds, rng)

    results: list[FoldResult] = []
    for fold_id, test_idx in enumerate(folds):
        fold_rng = np.random.default_rng(cfg.seed * 1000 + fold_id)
        train_pool = np.setdiff1d(np.arange(len(y)), test_idx)
        val_folds = stratified_folds(y[train_pool], max(int(1 / cfg.val_fraction), 2),
                                     fold_rng)
        val_idx = train_pool[val_folds[0]]
        train_idx = np.setdiff1d(train_pool, val_idx)

        if features is not None:
            X = features
        else:
            row_mask = np.zeros(len(y), dtype=bool)
            row_mask[train_idx] = True
            X = standardize_with_mask(graph.nodes, row_mask)

        model = MultilayerClassifier(X.shape[1], cfg, attr_dims, modalities,
                                     rng=np.random.default_rng(cfg.seed * 7919 + fold_id))
        history, best_val, snap = train_single(model, X, layers, y,
                                               train_idx, val_idx, fold_rng)
        log_probs, alphas = model.forward(X, layers, None)
        pred = np.argmax(log_probs.values, axis=1)
        metrics = evaluate_classifier(pred[test_idx], y[test_idx])
        results.append(FoldResult(fold=fold_id, metrics=metrics, history=history,
                                  best_val_loss=best_val, snapshot=snap, alphas=alphas,
                                  state=getattr(model, "last_state", None)))
    return results


def summarize_folds(results: Sequence[FoldResult]) -> dict:
    """Mean and standard deviation of each metric across folds."""
    out = {}
    for key in ("accuracy", "precision", "recall", "f1"):
        vals = np.array([r.metrics[key] for r in results], dtype=float)
        out[key] = {"mean": float(vals.mean()), "sd": float(vals.std())}
    return out


ABLATION_CONFIGS: dict[str, tuple[str, ...]] = {
    "full": MODALITIES,
    "spatial_only": ("spatial",),
    "temporal_only": ("temporal",),
    "causal_only": ("causal",),
}


def run_ablation(graph: MultilayerGraph, y: np.ndarray, cfg: TrainConfig,
                 k_folds: int = 3, seeds: Sequence[int] = (0,)) -> dict[str, dict]:
    """Train full and single-layer variants on identical folds and seeds."""
    report: dict[str, dict] = {}
    for name, modalities in ABLATION_CONFIGS.items():
        per_seed = []
        for seed in seeds:
            seed_cfg = TrainConfig(**{**cfg.to_dict(), "seed": seed,
                                      "encoder": EncoderConfig(**cfg.to_dict()["encoder"])})
            folds = stratified_folds(np.asarray(y), k_folds,
                                     np.random.default_rng(seed))
            results = train_classifier(graph, y, seed_cfg, k_folds,
                                       modalities=modalities, folds=folds)
            per_seed.append(summarize_folds(results))
        report[name] = {
            metric: {
                "mean": float(np.mean([s[metric]["mean"] for s in per_seed])),
                "sd": float(np.mean([s[metric]["sd"] for s in per_seed])),
            }
            for metric in ("accuracy", "precision", "recall", "f1")
        }
    return report

"""Risk-aware embedding, density clustering, and statistical validation."""

from .density import NOISE, hdbscan
from .embedder import EmbedConfig, RiskEmbedder, risk_targets, train_risk_embedder
from .metrics import (
    adjusted_rand_index,
    anova_f,
    davies_bouldin,
    intra_cluster_edge_ratio,
    silhouette,
)
from .profile import ClusterProfile, priority_score, profile_clusters, recurrence_times
from .reduce import reduce_dim, register_reducer
from .survival import SurvivalCurve, kaplan_meier

__all__ = [
    "NOISE", "hdbscan",
    "EmbedConfig", "RiskEmbedder", "risk_targets", "train_risk_embedder",
    "adjusted_rand_index", "anova_f", "davies_bouldin",
    "intra_cluster_edge_ratio", "silhouette",
    "ClusterProfile", "priority_score", "profile_clusters", "recurrence_times",
    "reduce_dim", "register_reducer",
    "SurvivalCurve", "kaplan_meier",
]

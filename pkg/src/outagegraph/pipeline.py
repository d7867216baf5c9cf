"""File-based pipeline stages behind the CLI.

Every stage reads the previous stage's artifacts from the run directory and
writes its own, embedding the configuration hash so downstream stages (and
the final report) can refuse to mix artifacts from different runs. All JSON
is written with sorted keys and no timestamps, so identical configurations
produce byte-identical artifacts.
"""

from __future__ import annotations

import csv
import json
from dataclasses import dataclass, field, asdict
from datetime import datetime, timedelta
from pathlib import Path

import numpy as np

from . import baselines as bl
from . import graphbuild, ingest, labeling
from . import gnn as gnn_mod
from .riskcluster import (
    NOISE,
    anova_f,
    davies_bouldin,
    hdbscan,
    intra_cluster_edge_ratio,
    kaplan_meier,
    profile_clusters,
    recurrence_times,
    reduce_dim,
    risk_targets,
    silhouette,
    train_risk_embedder,
)
from .riskcluster.metrics import format_p
from .riskcluster.embedder import EmbedConfig
from .synthgen import ScenarioConfig, generate, write_scenario
from .util import canonical_json, config_hash


class ConfigError(ValueError):
    """Invalid or unknown configuration (exit code 1)."""


class MissingArtifact(FileNotFoundError):
    """An upstream stage artifact is absent (exit code 2)."""


@dataclass
class PipelineConfig:
    outdir: str = "runs/default"
    seed: int = 0
    windows: list[int] = field(default_factory=lambda: [30, 60, 180])
    fold_strategy: str = "stratified-cv"   # or "temporal-split"
    k_folds: int = 3

    # ingest
    tau: float = 0.85
    region_radius_km: float = 50.0

    # graph construction
    theta_max_hrs: float = 168.0
    proximity_percentile: float = 75.0
    z_percentile: float = 85.0

    # classifier training
    hidden_dim: int = 64
    heads: int = 4
    dropout: float = 0.3
    lr: float = 1e-3
    weight_decay: float = 1e-5
    max_epochs: int = 100
    patience: int = 10
    plateau_factor: float = 0.5
    ablate_seeds: list[int] = field(default_factory=lambda: [0])

    # embedding + clustering
    embed_epochs: int = 200
    embed_hidden_dim: int = 32
    w_risk: float = 1.0
    w_topo: float = 0.5
    w_cluster: float = 0.1
    n_soft_clusters: int = 8
    min_cluster_size: int = 15
    min_samples: int = 5
    cluster_selection_epsilon: float = 0.25

    # synth scenario
    scenario: str = "basic"
    n_substations: int = 100
    rate_per_day: float = 0.06
    planted_positive_rate: float = 0.15
    scenario_seed: int = 7

    @classmethod
    def from_dict(cls, doc: dict) -> "PipelineConfig":
        known = {f.name for f in cls.__dataclass_fields__.values()}
        unknown = set(doc) - known
        if unknown:
            raise ConfigError(f"unknown config keys: {sorted(unknown)}")
        return cls(**doc)

    def to_dict(self) -> dict:
        return asdict(self)

    @property
    def hash(self) -> str:
        # The artifact location is not semantic configuration: the same run
        # in a different directory must hash identically.
        doc = {k: v for k, v in self.to_dict().items() if k != "outdir"}
        return config_hash(doc)


def _outdir(cfg: PipelineConfig) -> Path:
    out = Path(cfg.outdir)
    out.mkdir(parents=True, exist_ok=True)
    return out


def effective_config(cfg: PipelineConfig) -> dict:
    return {k: v for k, v in cfg.to_dict().items() if k != "outdir"}


def _write_json(cfg: PipelineConfig, path: Path, payload) -> None:
    doc = {"config_hash": cfg.hash, "config": effective_config(cfg),
           "payload": payload}
    path.write_text(canonical_json(doc))


def _read_json(cfg: PipelineConfig, path: Path, check_hash: bool = True):
    if not path.exists():
        raise MissingArtifact(str(path))
    doc = json.loads(path.read_text())
    if check_hash and doc.get("config_hash") != cfg.hash:
        raise ConfigError(f"artifact {path.name} was produced by config "
                          f"{doc.get('config_hash')}, current is {cfg.hash}")
    return doc["payload"]


def _require(path: Path) -> Path:
    if not path.exists():
        raise MissingArtifact(str(path))
    return path


# ---------------------------------------------------------------------------
# Stages
# ---------------------------------------------------------------------------

def stage_synth(cfg: PipelineConfig) -> dict:
    from . import synthgen

    out = _outdir(cfg)
    presets = {
        "basic": lambda: ScenarioConfig(
            n_substations=cfg.n_substations, rate_per_day=cfg.rate_per_day,
            planted_positive_rate=cfg.planted_positive_rate,
            planted_invalid=6, voltage_missing_fraction=0.05,
            seed=cfg.scenario_seed),
        "ablation": lambda: synthgen.scenario_ablation(seed=cfg.scenario_seed),
        "clusters": lambda: synthgen.scenario_clusters(seed=cfg.scenario_seed),
        "causal": lambda: synthgen.scenario_causal_recovery(seed=cfg.scenario_seed),
    }
    if cfg.scenario not in presets:
        raise ConfigError(f"unknown scenario {cfg.scenario!r}; have {sorted(presets)}")
    data = generate(presets[cfg.scenario]())
    paths = write_scenario(data, out)
    _write_json(cfg, out / "synth_meta.json",
                {"n_incidents": len(data.raw_incidents),
                 "n_substations": len(data.substations)})
    return {"paths": {k: str(v) for k, v in paths.items()}}


def stage_ingest(cfg: PipelineConfig) -> dict:
    out = _outdir(cfg)
    raws = ingest.read_raw_incidents(_require(out / "incidents.csv"))
    subs = ingest.read_substations(_require(out / "substations.csv"))
    lines = ingest.read_lines(_require(out / "lines.csv"))
    feeders = ingest.read_feeders(_require(out / "feeders.csv"))

    subs, provenance = ingest.impute_all_voltages(subs, lines, feeders,
                                                  cfg.region_radius_km)
    clean = ingest.clean_dataset(raws, subs, lines, tau=cfg.tau)
    ingest.write_incidents_csv(out / "clean_incidents.csv", clean.incidents)
    ingest.write_rejects_csv(out / "rejects.csv", clean.rejects)
    with open(out / "substations_imputed.csv", "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(ingest.SUBSTATION_HEADERS)
        for s in subs:
            w.writerow([s.id, s.lat, s.lon,
                        "" if s.voltage_kv is None else s.voltage_kv, s.plant_class])
    _write_json(cfg, out / "ingest_meta.json",
                {"retained": len(clean.incidents), "rejected": len(clean.rejects),
                 "voltage_provenance": sorted(provenance)})
    return {"retained": len(clean.incidents), "rejected": len(clean.rejects)}


def _load_clean(cfg: PipelineConfig) -> ingest.CleanDataset:
    out = _outdir(cfg)
    raws = ingest.read_raw_incidents(_require(out / "clean_incidents.csv"))
    subs = ingest.read_substations(_require(out / "substations_imputed.csv"))
    lines = ingest.read_lines(_require(out / "lines.csv"))
    clean = ingest.clean_dataset(raws, subs, lines, tau=cfg.tau)
    if clean.rejects:
        raise ConfigError("clean_incidents.csv contains invalid rows")
    return clean


def _graph_config(cfg: PipelineConfig) -> graphbuild.GraphConfig:
    return graphbuild.GraphConfig(theta_max_hrs=cfg.theta_max_hrs,
                                  proximity_percentile=cfg.proximity_percentile,
                                  z_percentile=cfg.z_percentile)


def stage_build_graph(cfg: PipelineConfig) -> dict:
    out = _outdir(cfg)
    clean = _load_clean(cfg)
    graph = graphbuild.build_graph(clean, _graph_config(cfg))
    graph.metadata["config_hash"] = cfg.hash
    graphbuild.save_graph(graph, out / "graph.json")
    # Review-band line matches are excluded from the automated graph but
    # handed to humans via a dedicated file.
    with open(out / "review_lines.csv", "w", newline="") as fh:
        w = csv.DictWriter(fh, fieldnames=["line", "endpoint_a", "endpoint_b",
                                           "score_a", "score_b"])
        w.writeheader()
        w.writerows(graph.metadata.get("review_lines", []))
    return {"n_nodes": graph.n_nodes,
            "edges": {"spatial": len(graph.spatial), "temporal": len(graph.temporal),
                      "causal": len(graph.causal)},
            "review_lines": len(graph.metadata.get("review_lines", []))}


def _load_graph(cfg: PipelineConfig) -> graphbuild.MultilayerGraph:
    out = _outdir(cfg)
    graph = graphbuild.load_graph(_require(out / "graph.json"))
    if graph.metadata.get("config_hash") != cfg.hash:
        raise ConfigError("graph.json was produced by a different configuration")
    return graph


def _window_cutoff(clean: ingest.CleanDataset, window_days: int) -> datetime:
    last = max(i.t_off for i in clean.incidents)
    return last - timedelta(days=window_days)


def stage_label(cfg: PipelineConfig) -> dict:
    out = _outdir(cfg)
    clean = _load_clean(cfg)
    summary = {}
    for window in cfg.windows:
        cutoff = _window_cutoff(clean, window)
        per_fold = labeling.fold_cutoff_labels(
            clean.incidents, [labeling.FoldCutoff(0, cutoff)], clean.substation_ids())
        rows = labeling.labels_to_rows(per_fold[0])
        path = out / f"labels_{window:03d}.csv"
        with open(path, "w", newline="") as fh:
            w = csv.DictWriter(fh, fieldnames=["substation_id", "y", "cutoff",
                                               "evidence_id", "truncated"])
            w.writeheader()
            w.writerows(rows)
        summary[str(window)] = {"positives": sum(r["y"] for r in rows),
                                "total": len(rows)}
    _write_json(cfg, out / "labels_meta.json", summary)
    return summary


def _load_labels(cfg: PipelineConfig, window: int, ids: list[str]) -> np.ndarray:
    out = _outdir(cfg)
    path = _require(out / f"labels_{window:03d}.csv")
    by_id = {}
    with open(path, newline="") as fh:
        for row in csv.DictReader(fh):
            by_id[row["substation_id"]] = int(row["y"])
    return np.array([by_id[i] for i in ids], dtype=np.int64)


def _train_config(cfg: PipelineConfig, seed: int | None = None) -> gnn_mod.TrainConfig:
    return gnn_mod.TrainConfig(
        lr=cfg.lr, weight_decay=cfg.weight_decay, max_epochs=cfg.max_epochs,
        patience=cfg.patience, plateau_factor=cfg.plateau_factor,
        seed=cfg.seed if seed is None else seed,
        encoder=gnn_mod.EncoderConfig(hidden_dim=cfg.hidden_dim, heads=cfg.heads,
                                      dropout_rate=cfg.dropout))


def _window_graph(cfg: PipelineConfig, clean: ingest.CleanDataset,
                  window: int) -> graphbuild.MultilayerGraph:
    """Graph from incidents at or before the window cutoff (no leakage)."""
    cutoff = _window_cutoff(clean, window)
    visible = [i for i in clean.incidents if i.t_off <= cutoff]
    truncated = ingest.CleanDataset(incidents=visible, substations=clean.substations,
                                    lines=clean.lines, rejects=[])
    return graphbuild.build_graph(truncated, _graph_config(cfg))


def _temporal_split_metrics(cfg: PipelineConfig, clean: ingest.CleanDataset,
                            window: int) -> list[dict]:
    """Train on an early cutoff, test on labels at the window cutoff."""
    first = min(i.t_off for i in clean.incidents)
    cutoff_test = _window_cutoff(clean, window)
    span = cutoff_test - first
    cutoff_train = first + span * (5 / 7)
    per = labeling.fold_cutoff_labels(
        clean.incidents,
        [labeling.FoldCutoff(0, cutoff_train), labeling.FoldCutoff(1, cutoff_test)],
        clean.substation_ids())
    y_train = np.array([l.y for l in per[0]])
    y_test = np.array([l.y for l in per[1]])

    graph_train = _window_graph_at(cfg, clean, cutoff_train)
    graph_test = _window_graph_at(cfg, clean, cutoff_test)
    tc = _train_config(cfg)
    layers = gnn_mod.prepare_layers(graph_train)
    attr_dims = {m: layers[m].attr.shape[1] for m in gnn_mod.MODALITIES}
    rng = np.random.default_rng(tc.seed)
    all_idx = np.arange(len(y_train))
    val_folds = gnn_mod.stratified_folds(y_train, 5, rng)
    val_idx = val_folds[0]
    train_idx = np.setdiff1d(all_idx, val_idx)
    model = gnn_mod.MultilayerClassifier(graph_train.nodes.standardized.shape[1],
                                         tc, attr_dims)
    gnn_mod.train_single(model, graph_train.nodes.standardized, layers,
                         y_train, train_idx, val_idx, rng)
    test_layers = gnn_mod.prepare_layers(graph_test)
    log_probs, _ = model.forward(graph_test.nodes.standardized, test_layers, None)
    pred = np.argmax(log_probs.values, axis=1)
    return [gnn_mod.evaluate_classifier(pred, y_test)]


def _window_graph_at(cfg: PipelineConfig, clean: ingest.CleanDataset,
                     cutoff: datetime) -> graphbuild.MultilayerGraph:
    visible = [i for i in clean.incidents if i.t_off <= cutoff]
    truncated = ingest.CleanDataset(incidents=visible, substations=clean.substations,
                                    lines=clean.lines, rejects=[])
    return graphbuild.build_graph(truncated, _graph_config(cfg))


def stage_train(cfg: PipelineConfig) -> dict:
    out = _outdir(cfg)
    clean = _load_clean(cfg)
    report: dict = {}
    for window in cfg.windows:
        y = _load_labels(cfg, window, clean.substation_ids())
        if cfg.fold_strategy == "temporal-split":
            fold_metrics = _temporal_split_metrics(cfg, clean, window)
            summary = {k: {"mean": float(np.mean([m[k] for m in fold_metrics])),
                           "sd": float(np.std([m[k] for m in fold_metrics]))}
                       for k in ("accuracy", "precision", "recall", "f1")}
            report[str(window)] = {"folds": fold_metrics, "summary": summary,
                                   "history": []}
            continue
        graph = _window_graph(cfg, clean, window)
        results = gnn_mod.train_classifier(graph, y, _train_config(cfg), cfg.k_folds)
        report[str(window)] = {
            "folds": [r.metrics for r in results],
            "summary": gnn_mod.summarize_folds(results),
            "history": [r.history for r in results],
        }
        best = max(results, key=lambda r: r.metrics["f1"])
        checkpoint = {
            "window_days": window, "fold": best.fold,
            "metrics": best.metrics,
            "parameters": {k: v.tolist() for k, v in best.snapshot.items()},
        }
        if best.state is not None:
            checkpoint["optimizer"] = {
                "epoch": best.state.epoch,
                "best_val_loss": best.state.best_val_loss,
                "first_moments": {k: v.tolist()
                                  for k, v in best.state.first_moments.items()},
                "second_moments": {k: v.tolist()
                                   for k, v in best.state.second_moments.items()},
            }
        _write_json(cfg, out / f"model_{window:03d}.json", checkpoint)
    _write_json(cfg, out / "train_metrics.json", report)
    return {w: report[w]["summary"] for w in report}


def stage_ablate(cfg: PipelineConfig) -> dict:
    out = _outdir(cfg)
    clean = _load_clean(cfg)
    window = max(cfg.windows)
    y = _load_labels(cfg, window, clean.substation_ids())
    graph = _window_graph(cfg, clean, window)
    report = gnn_mod.run_ablation(graph, y, _train_config(cfg), cfg.k_folds,
                                  seeds=cfg.ablate_seeds)
    _write_json(cfg, out / "ablation.json", {"window": window, "results": report})
    return report


def stage_baselines(cfg: PipelineConfig) -> dict:
    out = _outdir(cfg)
    clean = _load_clean(cfg)
    graph = _load_graph(cfg)
    report: dict = {"classification": {}, "clustering": {}}

    for window in cfg.windows:
        y = _load_labels(cfg, window, clean.substation_ids())
        wgraph = _window_graph(cfg, clean, window)
        X = wgraph.nodes.standardized
        folds = gnn_mod.stratified_folds(y, cfg.k_folds, np.random.default_rng(cfg.seed))

        def rf(Xtr, ytr, Xte):
            return bl.forest_predict(
                bl.random_forest_fit(Xtr, ytr, n_trees=100, seed=cfg.seed), Xte)

        def gbt(Xtr, ytr, Xte):
            ens, _ = bl.gbt_fit(Xtr, ytr, depth=3, n_rounds=200, seed=cfg.seed)
            return bl.gbt_predict(ens, Xte)

        per_model = {}
        for name, fn in (("random_forest", rf), ("gradient_boosting", gbt)):
            metrics = bl.classification_cv(X, y, folds, fn)
            per_model[name] = {
                "folds": metrics,
                "summary": {k: {"mean": float(np.mean([m[k] for m in metrics])),
                                "sd": float(np.std([m[k] for m in metrics]))}
                            for k in ("accuracy", "precision", "recall", "f1")}}
        report["classification"][str(window)] = per_model

    X = graph.nodes.standardized
    targets = risk_targets(clean)

    def cluster_quality(points, labels):
        live = sorted(set(labels.tolist()) - {NOISE})
        if len(live) < 2:
            return {"silhouette": None, "davies_bouldin": None, "avg_risk_p": None,
                    "n_clusters": len(live)}
        sil, _ = silhouette(points, labels)
        db = davies_bouldin(points, labels)
        ps = []
        for j in range(targets.shape[1]):
            groups = [targets[labels == c, j] for c in live]
            if all(len(g) >= 2 for g in groups):
                ps.append(anova_f(groups)[1])
        return {"silhouette": sil, "davies_bouldin": db,
                "avg_risk_p": float(np.mean(ps)) if ps else None,
                "n_clusters": len(live)}

    km_labels, km_k, km_scores = bl.kmeans_select(X, seed=cfg.seed)
    report["clustering"]["kmeans"] = {"k": km_k, "scores_by_k": km_scores,
                                      **cluster_quality(X, km_labels)}

    n = graph.n_nodes
    affinity = np.zeros((n, n))
    for e in graph.spatial:
        affinity[e.u, e.v] = affinity[e.v, e.u] = e.weight
    sp_labels, sp_k, sp_scores = bl.spectral_select(affinity, seed=cfg.seed)
    report["clustering"]["spectral"] = {"k": sp_k, "scores_by_k": sp_scores,
                                        **cluster_quality(X, sp_labels)}
    _write_json(cfg, out / "baseline_metrics.json", report)
    return report


def stage_embed(cfg: PipelineConfig) -> dict:
    out = _outdir(cfg)
    clean = _load_clean(cfg)
    graph = _load_graph(cfg)
    targets = risk_targets(clean)
    ec = EmbedConfig(
        w_risk=cfg.w_risk, w_topo=cfg.w_topo, w_cluster=cfg.w_cluster,
        n_soft_clusters=cfg.n_soft_clusters, epochs=cfg.embed_epochs, seed=cfg.seed,
        encoder=gnn_mod.EncoderConfig(hidden_dim=cfg.embed_hidden_dim, heads=cfg.heads,
                                      dropout_rate=0.1))
    emb, history, _ = train_risk_embedder(graph, targets, ec)
    _write_json(cfg, out / "embeddings.json",
                {"ids": graph.nodes.ids, "matrix": emb.tolist(),
                 "final_losses": history[-1], "epochs_run": len(history)})
    return {"epochs_run": len(history), "final_losses": history[-1]}


def stage_cluster(cfg: PipelineConfig) -> dict:
    out = _outdir(cfg)
    clean = _load_clean(cfg)
    graph = _load_graph(cfg)
    payload = _read_json(cfg, out / "embeddings.json")
    emb = np.array(payload["matrix"], dtype=float)
    targets = risk_targets(clean)

    points, reduce_info = reduce_dim(emb, 3)
    labels = hdbscan(points, cfg.min_cluster_size, cfg.min_samples,
                     cfg.cluster_selection_epsilon)
    live = sorted(set(labels.tolist()) - {NOISE})

    quality: dict = {"n_clusters": len(live),
                     "n_noise": int(np.sum(labels == NOISE))}
    if len(live) >= 2:
        sil, per_cluster_sil = silhouette(points, labels)
        quality["silhouette"] = sil
        quality["silhouette_per_cluster"] = per_cluster_sil
        quality["davies_bouldin"] = davies_bouldin(points, labels)
        anova = {}
        for j, cat in enumerate(graphbuild.RISK_CATEGORIES):
            groups = [targets[labels == c, j] for c in live]
            if all(len(g) >= 2 for g in groups):
                f_stat, p = anova_f(groups)
                anova[cat] = {"F": f_stat if np.isfinite(f_stat) else "inf",
                              "p": p, "p_display": format_p(p)}
        quality["anova"] = anova

    edge_ratios = {}
    for layer_name, edges in (("spatial", graph.spatial), ("temporal", graph.temporal),
                              ("causal", graph.causal)):
        pairs = [(e.u, e.v) for e in edges]
        edge_ratios[layer_name] = intra_cluster_edge_ratio(
            pairs, labels, rng=np.random.default_rng(cfg.seed))

    profiles = profile_clusters(labels, clean, targets)
    survival = {}
    for p in profiles:
        times, censored = recurrence_times(labels, clean, p.cluster)
        if times and not all(censored):
            curve = kaplan_meier(times, censored)
            survival[str(p.cluster)] = {"times": curve.times.tolist(),
                                        "survival": curve.survival.tolist()}

    with open(out / "clusters.csv", "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["substation_id", "lat", "lon", "cluster",
                    *(f"risk_{c}" for c in graphbuild.RISK_CATEGORIES)])
        for i, s in enumerate(clean.substations):
            w.writerow([s.id, s.lat, s.lon, int(labels[i]),
                        *(float(targets[i, j]) for j in range(targets.shape[1]))])
    with open(out / "cluster_profiles.csv", "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["cluster", "size", "incidents_per_year", "mean_recovery_minutes",
                    "mean_cmi", *(f"risk_{c}" for c in graphbuild.RISK_CATEGORIES),
                    "priority"])
        for p in profiles:
            w.writerow([p.cluster, p.size, p.incidents_per_year,
                        p.mean_recovery_minutes, p.mean_cmi,
                        *(p.mean_risk[c] for c in graphbuild.RISK_CATEGORIES),
                        p.priority])

    _write_json(cfg, out / "clusters.json", {
        "labels": {s.id: int(labels[i]) for i, s in enumerate(clean.substations)},
        "quality": quality,
        "edge_ratios": edge_ratios,
        "profiles": [asdict(p) for p in profiles],
        "survival": survival,
        "reduce": {"explained_variance_ratio": reduce_info["explained_variance_ratio"],
                   "rank_deficient": reduce_info["rank_deficient"]},
    })
    return quality


def stage_report(cfg: PipelineConfig) -> dict:
    from . import report as report_mod

    return report_mod.build_report(cfg)


STAGES = {
    "synth": stage_synth,
    "ingest": stage_ingest,
    "build-graph": stage_build_graph,
    "label": stage_label,
    "train": stage_train,
    "ablate": stage_ablate,
    "baselines": stage_baselines,
    "embed": stage_embed,
    "cluster": stage_cluster,
    "report": stage_report,
}
